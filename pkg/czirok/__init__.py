"""Simulador y análisis de estabilidad del modelo de Czirók en el toro 1D."""

__version__ = "0.3.0"

from .errors import CzirokError, ConfigError  # noqa: E402
from .model import (GSpec, KernelSpec, ModelParams, StationaryState, SwarmState,  # noqa: E402
                    compatibility_roots, euler_step, g_prime, kernel_fourier_coefficient,
                    neighbor_average, sample_initial, simulate, stationary_states, torus_distance)
from .stability import (ModeContext, critical_sigma, find_growth_roots, laplace_R,  # noqa: E402
                        mode_kernel_R, most_unstable_mode, sufficient_mode_bound,
                        volterra_growth_check, zeroth_mode_stable)
from .stats import (RunSeries, centered_l2_discrepancy, cluster_velocity, count_transitions,  # noqa: E402
                    fluctuation_covariance_test, mean_velocity, periodic_kde,
                    uniform_discrepancy_mean)
