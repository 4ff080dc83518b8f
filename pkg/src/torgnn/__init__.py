"""Analytic-torsion weighted message passing for link prediction and node classification."""

from torgnn.complex_core import (
    Graph,
    GraphError,
    SimplicialComplex,
    clique_expand,
    load_graph,
    local_complex,
)
from torgnn.spectral import (
    HodgeSpectrum,
    betti_numbers,
    boundary_matrix,
    entrywise_laplacian,
    hodge_laplacian,
    log_analytic_torsion,
    spectrum,
)

__version__ = "0.1.0"
