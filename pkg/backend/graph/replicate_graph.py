from langgraph.graph import StateGraph, END

from core.replicate_state import ReplicateState
from core.utilities import C_CYAN, C_RESET, trace

from agents.supervisor_agent import SupervisorAgent
from agents.sampling_agent import SamplingAgent
from agents.decomposition_agent import DecompositionAgent
from agents.clustering_agent import ClusteringAgent
from agents.testing_agent import TestingAgent

# supervisor + 4 stages, each returning to the hub
RECURSION_LIMIT = 20


class ReplicateGraph:
    """Compiled LangGraph for one replicate; build once per experiment and reuse across threads."""

    def __init__(self):
        trace(f"{C_CYAN}>> [INIT] Compiling replicate hub graph.{C_RESET}")
        self.graph = self._build_graph()

    def _build_graph(self):
        workflow = StateGraph(ReplicateState)

        # 1. Initialize Agents
        agents = {
            "supervisor_agent": SupervisorAgent(),
            "sampling_agent": SamplingAgent(),
            "decomposition_agent": DecompositionAgent(),
            "clustering_agent": ClusteringAgent(),
            "testing_agent": TestingAgent(),
        }

        # 2. Add Nodes
        for name, agent in agents.items():
            workflow.add_node(name, agent.execute)

        # 3. The Hub always starts the replicate
        workflow.set_entry_point("supervisor_agent")

        # 4. Every stage reports back to the Supervisor
        for name in agents:
            if name != "supervisor_agent":
                workflow.add_edge(name, "supervisor_agent")

        # 5. Supervisor routing
        routing_map = {name: name for name in agents if name != "supervisor_agent"}
        routing_map["END"] = END
        workflow.add_conditional_edges(
            "supervisor_agent",
            lambda state: state.get("next", "END"),
            routing_map
        )

        return workflow.compile()

    def invoke(self, state: ReplicateState) -> ReplicateState:
        return self.graph.invoke(state, config={"recursion_limit": RECURSION_LIMIT})
