"""Non-backtracking and covering-tree tools for eigenfunction statistics on large sparse graphs."""

__version__ = "0.1.0"

from .cover_green import (ZetaField, continuation_solve, identity_residuals, mu_k, regular_zeta, solve_zeta,
                          tree_green)
from .diagnostics import (GaussianChi, PopulationDynamics, empirical_vs_tree, green_diagonal_average,
                          kesten_mckay_density, phi_histogram)
from .ensembles import EnsembleConfig, Potential, perturbed_regular, random_regular, sample_potential
from .ergodicity import ZetaPolicy, build_quasi_eigenvectors, nb_variance, quantum_variance, weighted_average
from .graph import Graph, build_graph, nb_paths, read_graph, write_graph
from .quantization import Observable, kb_matrix_element, kg_matrix_element, lift_kernel
from .spectral import EigenSystem, eigensystem
from .reduction import ReductionOperators, identity_suite

__all__ = [
    "EigenSystem", "EnsembleConfig", "GaussianChi", "Graph", "Observable", "PopulationDynamics", "Potential",
    "ReductionOperators", "ZetaField", "ZetaPolicy", "build_graph", "build_quasi_eigenvectors", "continuation_solve",
    "eigensystem", "empirical_vs_tree", "green_diagonal_average", "identity_residuals", "identity_suite",
    "kb_matrix_element", "kesten_mckay_density", "kg_matrix_element", "lift_kernel", "mu_k", "nb_paths",
    "nb_variance", "perturbed_regular", "phi_histogram", "quantum_variance", "random_regular", "read_graph",
    "regular_zeta", "sample_potential", "solve_zeta", "tree_green", "weighted_average", "write_graph",
]
