import numpy as np
import pytest

from core.cluster import DEFAULT_MAX_ITER, kmeans, kmeans_univariate
from core.errors import InsufficientDataError, ParameterError
from core.models import MixtureSpec
from core.samplers import sample_mixture, sample_mvn
from core.stattest import adjusted_rand_index


def _blobs(seed=0):
    spec = MixtureSpec.gaussian(
        [0.25, 0.25, 0.5],
        [[0.0, 0.0], [10.0, 10.0], [-10.0, 10.0]],
        [np.eye(2).tolist()] * 3,
    )
    return sample_mixture(spec, 600, seed=seed)


def test_separated_blobs_are_recovered():
    sample = _blobs()
    fit = kmeans(sample.data, 3, seed=1)
    assert set(np.unique(fit.labels)) == {1, 2, 3}
    assert adjusted_rand_index(fit.labels, sample.labels) == pytest.approx(1.0)
    assert fit.sizes.sum() == 600
    assert fit.restarts_used == 10


def test_kmeans_is_deterministic_for_a_seed():
    sample = _blobs(seed=2)
    a = kmeans(sample.data, 3, seed=5)
    b = kmeans(sample.data, 3, seed=5)
    assert np.array_equal(a.labels, b.labels)
    assert a.inertia == b.inertia


def test_more_restarts_never_increase_inertia():
    x = sample_mvn([0.0, 0.0], np.eye(2), 300, seed=3)
    single = kmeans(x, 4, restarts=1, seed=9)
    several = kmeans(x, 4, restarts=6, seed=9)
    assert several.inertia <= single.inertia


def test_two_means_split_standard_normal_at_its_mean():
    x = sample_mvn([0.0], [[1.0]], 10_000, seed=4)[:, 0]
    fit = kmeans(x, 2, seed=6)
    boundary = fit.centers[:, 0].mean()
    assert boundary == pytest.approx(x.mean(), abs=0.05)
    # the two centers sit near +/- sqrt(2 / pi)
    assert np.sort(fit.centers[:, 0]).tolist() == pytest.approx([-np.sqrt(2 / np.pi), np.sqrt(2 / np.pi)], abs=0.05)


def test_identical_points_still_fill_every_cluster():
    fit = kmeans(np.ones((5, 2)), 3, restarts=2, seed=1)
    assert np.all(fit.sizes >= 1)
    assert fit.inertia == pytest.approx(0.0)


def test_kmeans_input_checks():
    with pytest.raises(InsufficientDataError):
        kmeans(np.zeros((2, 1)), 3)
    with pytest.raises(ParameterError):
        kmeans(np.zeros((5, 1)), 0)


def test_univariate_clustering_fits_every_column():
    x = np.column_stack([
        np.r_[np.zeros(20), np.full(20, 10.0)],
        np.r_[np.full(20, 10.0), np.zeros(20)],
    ]) + np.random.default_rng(0).normal(scale=0.1, size=(40, 2))
    fits = kmeans_univariate(x, 2, seed=8)
    assert len(fits) == 2
    for fit in fits:
        assert sorted(fit.sizes.tolist()) == [20, 20]
    assert adjusted_rand_index(fits[0].labels, fits[1].labels) == pytest.approx(1.0)


@pytest.mark.parametrize("max_iter", [1, 2, DEFAULT_MAX_ITER])
def test_returned_labels_point_at_the_nearest_returned_center(max_iter):
    x = sample_mvn([0.0, 0.0, 0.0], np.eye(3), 400, seed=12)
    fit = kmeans(x, 5, restarts=2, max_iter=max_iter, tol=0.0, seed=3)
    dist = ((x[:, None, :] - fit.centers[None, :, :]) ** 2).sum(axis=2)
    own = dist[np.arange(x.shape[0]), fit.labels - 1]
    assert np.all(own <= dist.min(axis=1) + 1e-9)
    assert np.all(fit.sizes >= 1)
    for j in range(5):
        assert np.allclose(fit.centers[j], x[fit.labels == j + 1].mean(axis=0))
    assert fit.inertia == pytest.approx(own.sum())
