"""Monte Carlo laboratory for random walks in random sceneries."""

__version__ = "0.1.0"

from .analysis import (EnsembleConfig, OracleError, SigmaTarget, StatReport,
                       Verdict, annealed_variance_experiment,
                       cauchy_scale_oracle, covariance_structure_experiment,
                       geometric_grid, influence_experiment, lemma_suite,
                       marginal_normality_experiment,
                       quenched_concentration_experiment, sigma_target,
                       truncation_experiment)
from .rwrs import (FunctionalSpec, InterpolatedProcess, RwrsPath, accumulate,
                   eval_functional, functional_catalog, interpolate,
                   scaling_norm, site_influence, truncated_accumulate,
                   truncation_discrepancy)
from .scenery import (Constant, MomentAudit, OverrideField, ParetoTail,
                      QuenchedField, Rademacher, ScenerySpec,
                      SceneryValidationError, StandardGaussian, TableField,
                      TruncationSchedule, moment_audit, recenter,
                      resample_site, truncate)
from .walk import (LocalTimeField, ModelError, Trajectory, WalkModel,
                   covariance_of, custom_lattice_walk, diagonal_walk,
                   empirical_covariance, exit_of_range, heavy_tail_walk,
                   local_times, mutual_intersection_local_time,
                   sample_trajectory, simple_random_walk)
