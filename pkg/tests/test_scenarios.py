import pytest
from pydantic import ValidationError

from core.errors import ParameterError
from core.models import Family, MixtureSpec, TestMethod
from graph.scenarios import (
    FissionMode,
    GridPoint,
    ScenarioConfig,
    ScenarioKind,
    builtin_scenarios,
    load_scenario,
)


def _nb_config(**overrides):
    fields = dict(
        name="nb_small",
        kind=ScenarioKind.NB_MIXTURE_SPLIT,
        mixture=MixtureSpec.negbin([0.5, 0.5], [[5.0], [60.0]], [[5.0], [40.0]]),
        tau_grid=[0.5],
        n_grid=[60],
        k_cluster=3,
        mode_grid=[FissionMode.MARGINAL, FissionMode.CONDITIONAL_ORACLE],
        test=TestMethod.WILCOXON,
        replicates=4,
    )
    fields.update(overrides)
    return ScenarioConfig(**fields)


def test_every_builtin_scenario_validates():
    scenarios = builtin_scenarios()
    assert {"fig1_ideal", "fig2_adverse", "figS1_bias", "fig3_nb", "fig3c_multivariate", "a5_twopop"} <= set(scenarios)
    for name, cfg in scenarios.items():
        assert cfg.name == name
        assert cfg.points(), f"{name} has an empty grid"


def test_builtin_shapes():
    scenarios = builtin_scenarios()
    adverse = scenarios["fig2_adverse"]
    assert len(adverse.mixture.components) == 1 and adverse.k_cluster == 2
    heteroscedastic = scenarios["fig2_adverse_heteroscedastic"]
    assert len(heteroscedastic.mixture.components) == 2 and heteroscedastic.k_cluster == 3
    assert len(scenarios["fig1_ideal"].points()) == 2 * 15 * 4
    assert scenarios["figS1_bias"].mixture.family == Family.GAUSSIAN
    assert scenarios["fig3c_multivariate"].mixture.dim == 50
    two_pop = scenarios["a5_twopop"]
    assert two_pop.mixture.dim == 500
    assert len(two_pop.modes) == 3


def test_grid_order_is_mode_then_tau_then_n():
    cfg = _nb_config(tau_grid=[0.2, 0.7], n_grid=[30, 60])
    coords = [(p.mode, p.tau, p.n) for p in cfg.points()]
    assert coords[:4] == [
        (FissionMode.MARGINAL, 0.2, 30),
        (FissionMode.MARGINAL, 0.2, 60),
        (FissionMode.MARGINAL, 0.7, 30),
        (FissionMode.MARGINAL, 0.7, 60),
    ]
    assert coords[4][0] == FissionMode.CONDITIONAL_ORACLE


def test_replicate_seed_ignores_mode_only():
    marginal = GridPoint(tau=0.5, n=60, mode=FissionMode.MARGINAL)
    oracle = GridPoint(tau=0.5, n=60, mode=FissionMode.CONDITIONAL_ORACLE)
    other_tau = GridPoint(tau=0.4, n=60, mode=FissionMode.MARGINAL)
    assert marginal.replicate_seed(9, 3) == oracle.replicate_seed(9, 3)
    assert marginal.replicate_seed(9, 3) != marginal.replicate_seed(9, 4)
    assert marginal.replicate_seed(9, 3) != other_tau.replicate_seed(9, 3)


def test_validation_rejects_bad_grids():
    with pytest.raises(ValidationError):
        _nb_config(tau_grid=[1.0])
    with pytest.raises(ValidationError):
        _nb_config(n_grid=[2])
    with pytest.raises(ValidationError):
        _nb_config(rho_grid=[1.0])
    with pytest.raises(ValidationError):
        _nb_config(bias_grid=[-1.0])
    with pytest.raises(ValidationError):
        _nb_config(unknown_field=1)


def test_overrides_keep_other_fields():
    cfg = _nb_config().with_overrides(replicates=9, seed=123, extra_tests=[TestMethod.T_WELCH])
    assert cfg.replicates == 9
    assert cfg.master_seed == 123
    assert cfg.tests == [TestMethod.WILCOXON, TestMethod.T_WELCH]
    assert cfg.k_cluster == 3


def test_load_scenario_from_json(tmp_path):
    path = tmp_path / "custom.json"
    path.write_text(_nb_config(name="custom").model_dump_json())
    assert load_scenario(str(path)).name == "custom"
    assert load_scenario("fig3_nb").kind == ScenarioKind.NB_MIXTURE_SPLIT
    with pytest.raises(ParameterError):
        load_scenario("no_such_scenario")
    broken = tmp_path / "broken.json"
    broken.write_text('{"name": "x"}')
    with pytest.raises(ParameterError):
        load_scenario(str(broken))
