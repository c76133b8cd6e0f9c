from core.replicate_state import ReplicateState
from core.utilities import C_MAGENTA, C_RED, C_RESET, trace

# ==================================================================================================
# SECTION 1: SUPERVISOR AGENT (PROCEDURAL ROUTER)
# ==================================================================================================
class SupervisorAgent:
    """
    Hub-and-spoke orchestrator for one replicate.
    Dispatches sampling -> decomposition -> clustering -> testing by state completeness
    and ends the run as soon as a stage reports an error.
    """

    STAGES = (
        ("sampled", "sampling_agent"),
        ("decomposed", "decomposition_agent"),
        ("clustered", "clustering_agent"),
        ("tested", "testing_agent"),
    )

    def __init__(self, agent_id: str = "supervisor_agent"):
        self.id = agent_id

    def execute(self, state: ReplicateState) -> ReplicateState:
        # 1. Breadcrumb Tracking
        state.setdefault("visited_nodes", []).append(self.id)

        # 2. Failure Gate: a failed stage ends the replicate
        if state.get("error"):
            trace(f"{C_RED}[{self.id.upper()} HALT] {state.get('failed_stage')} failed: {state['error']}{C_RESET}")
            state["next"] = "END"
            return state

        # 3. Standard Orchestration
        state["next"] = self.select_next_agent(state)
        trace(f"{C_MAGENTA}[{self.id.upper()} HUB] Next Destination: **{state['next']}**{C_RESET}")
        return state

    def select_next_agent(self, state: ReplicateState) -> str:
        """Determines the next logical node based on state completeness."""
        for flag, node in self.STAGES:
            if not state.get(flag):
                return node
        return "END"
