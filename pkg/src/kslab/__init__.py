"""Fronts and traveling waves of a parabolic-elliptic chemotaxis system with logistic growth."""

from .theory import (ModelParams, SpeedConstants, a_star, c_kappa, global_existence, hypothesis_H,
                     kappa_admissible, kappa_for_speed, speed_constants)
from .kernel import Grid, TailPolicy, elliptic_residual, psi_direct, psi_fast
from .solver import SolverConfig, State, Trajectory, make_initial, simulate, step
from .fronts import (FrontTrace, behind_front_deviation, estimate_speed, fit_decay,
                     shape_ratio_ahead, spreading_interval, track_level)
from .waves import (FixedPointConfig, WaveEnvelopes, WaveProfile, fixed_point_wave,
                    min_speed_scan, relax_to_steady, self_consistency, verify_profile)
from .runner import ConfigError, RunReport, ScenarioConfig, parse_config, run_scenario, write_csv

__version__ = "0.1.0"
