"""Minimax signal detection in ill-posed Gaussian sequence models.

Least-favorable alternatives and detection values, the matching test
families, separation-rate formulas, and reproducible Monte Carlo to check
the predictions empirically.
"""

from .spectra import (BesovSpec, ProblemSpec, SequenceFamily, classify_regime,
                      ellipsoid_membership, eval_sequence, preset)
from .extreme import (AsymptoticValue, ExtremeSolution, LinApprox,
                      SparseSolution, SupCoordSolution, D_eps, r_of_A,
                      solve_besov_extreme, solve_extreme, solve_sparse_extreme,
                      solve_sup_coordinate, solution_residuals, sparse_lambda,
                      u_asymptotic, u_piecewise)
from .testing import (TestOutcome, apply, batch_apply, build_adaptive,
                      build_besov_adaptive, build_besov_sparse,
                      build_max_threshold, build_sparse_combined,
                      build_weighted, centered_xi, theoretical_errors,
                      xi_kernel)
from .simulate import (MonteCarloReport, Observation, estimate_errors,
                       likelihood_diagnostic, make_stream, rate_fit, sample)
from .rates import (RateResult, adaptive_rate, extreme_separation_radius,
                    separation_rate, sharp_severe_sobolev, u_inf_over_sigma)

__version__ = "0.1.0"
