"""csrgl: graph learning on CSR sparse kernels with a small tape autodiff."""
__version__ = "0.1.0"

from ._accel import HAVE_NUMBA, backend, get_backend, set_backend
from .graph import (Block, EdgeList, Graph, GraphError, add_self_loops, build_graph, induced_subgraph,
                    partition, remove_self_loops, row_norm, sample_neighbors, sym_norm)

__all__ = [
    "__version__", "HAVE_NUMBA", "backend", "get_backend", "set_backend", "Graph", "Block", "EdgeList",
    "GraphError", "build_graph", "add_self_loops", "remove_self_loops", "sym_norm", "row_norm",
    "induced_subgraph", "sample_neighbors", "partition",
]
