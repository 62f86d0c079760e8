"""DataBase Monte Carlo with control variates, on stochastic TDGL lattice paths."""
from .cv import (BetaSolution, CvSamples, DegenerateVariance, SingularCovariance, Unbounded, controlled_mean,
                 empirical_vrr, optimal_beta, theoretical_vrr)
from .database import (ChecksumError, Database, FormatError, build_database, load_database, resample_indices,
                       save_database)
from .estimator import ControlledEstimate, estimate_crude, estimate_cv_i1, estimate_cv_i2
from .harness import SweepConfig, VrrReport, gaussian_oracle_suite, macro_micro_variance, vrr_sweep
from .noise import NoiseStream, draw_noise_field, make_stream
from .tdgl import (BlowUpError, ModelConfig, Observable, ObservableRecord, euler_step, laplacian_5pt,
                   potential_force, simulate_path, simulate_paths)

__version__ = "0.1.0"
