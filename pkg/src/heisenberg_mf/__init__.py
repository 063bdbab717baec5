"""Mean-field limits of logarithmic canonical ensembles on the Heisenberg group
and on finite compact stand-in models."""
__version__ = "0.1.0"

from ._backend import BACKEND
from .heisenberg import HPoint, dilate, dist, gauge, group_inv, group_mul
from .measures import (ParticleConfig, WeightedMeasure, energy, entropy, free_energy_density, hamiltonian,
                       kernel_U)
from .meanfield import (DensityField, SolverReport, meanfield_map, normality_residual, reconstruct_u_compact,
                        reconstruct_u_heisenberg, solve_fixed_point)
from .ensemble import (Chain, EnsembleParams, MarginalEstimate, estimate_marginal, gibbs_log_density,
                       pair_log_moment, run_chain, run_chains, tightness_probe)
from .compact import (CompactModel, free_energy_N, jensen_lower_bound, partition_function, subadditivity_check,
                      synth_sphere_like_model)
from .diagnostics import (ProbeReport, asymptotic_slope_fit, homogeneity_integral_oracle, lp_threshold_probe,
                          marginal_vs_meanfield, total_curvature_check)
