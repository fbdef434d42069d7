"""Entropic optimal transport and Schroedinger bridges for density curves on the flat torus."""
from .bridge import (TimeGrid, conforti_bound, kl_between_bridges, kl_markov_sum, s_j_diagnostics,
                     solve_bridge, solve_curve_bridge, stability_rhs)
from .curves import (DensityCurve, Term, perturbed_twin, random_curve, rotating_curve, standard_test_curve,
                     static_curve, velocity_potential)
from .elliptic import solve_divform
from .eot import PotentialPair, SinkhornConfig, eot_cost, solve_sinkhorn, t_operator
from .expansion import (coefficient_functions, expansion_cost, fredholm_correctors, proxy_potentials,
                        scb_coefficients)
from .grid import PeriodicGrid
from .heatkernel import cost, kernel_values, log_kernel_1d
from .ot1d import geodesic, w2_circle
from .studies import fit_slope

__version__ = "0.1.0"
