import networkx as nx
import numpy as np
from typing import Dict, List, Set, Tuple

GRAPH_FAMILIES = ("complete", "cycle", "torus2d", "hypercube", "barbell")


def build_family_graph(family: str, size: int) -> Tuple[nx.Graph, List]:
    """Build a benchmark graph and its deterministic node order.

    Node labeling per family:
      - complete, cycle: node i is index i
      - torus2d: size x size periodic grid, node (i, j) is index i * size + j
      - hypercube: ``size`` is the dimension, node with bit tuple b is the
        integer whose binary digits are b (first coordinate most significant)
      - barbell: two K_size cliques joined by one edge, first clique is
        0..size-1, second is size..2*size-1
    """
    if family == "complete":
        graph = nx.complete_graph(size)
        order = list(range(size))
    elif family == "cycle":
        graph = nx.cycle_graph(size)
        order = list(range(size))
    elif family == "torus2d":
        graph = nx.grid_2d_graph(size, size, periodic=True)
        order = sorted(graph.nodes())
    elif family == "hypercube":
        graph = nx.hypercube_graph(size)
        order = sorted(graph.nodes())
    elif family == "barbell":
        graph = nx.barbell_graph(size, 0)
        order = list(range(2 * size))
    else:
        raise ValueError(f"Unknown graph family '{family}', expected one of {GRAPH_FAMILIES}")
    return graph, order


def node_label(family: str, node) -> str:
    if family == "hypercube":
        return "".join(str(bit) for bit in node)
    if family == "torus2d":
        return f"{node[0]},{node[1]}"
    return str(node)


def graph_weights(graph: nx.Graph, order: List) -> np.ndarray:
    """Dense symmetric weight matrix in the given node order"""
    return nx.to_numpy_array(graph, nodelist=order, weight="weight", dtype=float)


def transition_digraph(P: np.ndarray, tol: float = 0.0) -> nx.DiGraph:
    """Directed support graph of a transition matrix"""
    graph = nx.DiGraph()
    graph.add_nodes_from(range(P.shape[0]))
    rows, cols = np.nonzero(P > tol)
    graph.add_edges_from(zip(rows.tolist(), cols.tolist()))
    return graph


def unreachable_nodes(graph: nx.DiGraph, source: int = 0) -> Set[int]:
    """Nodes that cannot be reached from source or cannot reach it back"""
    reach = nx.descendants(graph, source) | {source}
    back = nx.ancestors(graph, source) | {source}
    return set(graph.nodes()) - (reach & back)


def is_aperiodic(graph: nx.DiGraph) -> bool:
    return nx.is_aperiodic(graph)


def calculate_graph_metrics(P: np.ndarray) -> Dict:
    """Calculate support-graph metrics for a transition matrix"""
    graph = nx.Graph()
    graph.add_nodes_from(range(P.shape[0]))
    rows, cols = np.nonzero(P > 0)
    graph.add_edges_from((int(x), int(y)) for x, y in zip(rows, cols) if x < y)
    return {
        "nodes": graph.number_of_nodes(),
        "edges": graph.number_of_edges(),
        "density": nx.density(graph),
        "average_degree": sum(dict(graph.degree()).values()) / graph.number_of_nodes()
        if graph.number_of_nodes() > 0
        else 0,
        "connected": nx.is_connected(graph) if graph.number_of_nodes() > 0 else False,
    }
