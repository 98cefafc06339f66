"""relkit: simulation and control of speed-limited point masses.

The package models a point mass whose response to force saturates as its
speed approaches c, provides the exact input transforms that turn that plant
into a double integrator, designs controllers against the linear model, and
simulates, steers, and compares the results. See the README for the scenario
file format and CLI usage.
"""

from .analysis import (MismatchRow, MismatchStudy, SteeringProblem, SteeringSolution,
                       gramian, min_energy_steer, mismatch_cell,
                       newtonian_mismatch_study)
from .control import (ControlLaw, OutputFeedbackLaw, PidGains, PidLaw, PidState,
                      Reference, StateFeedbackGain, StateFeedbackLaw,
                      closed_loop_matrix, design_pole_placement,
                      pid_nonconstant_ref_step, relativistic_output_feedback,
                      relativistic_pid_step, relativistic_state_feedback_1d,
                      relativistic_state_feedback_3d)
from .core import (DEFAULT_TOL, PhysConsts, SI_SPEED_OF_LIGHT, StateVec, Tolerances,
                   bracket_pow, check_speed, kinetic_energy, lorentz_gamma)
from .dynamics import (NEWTONIAN, RELATIVISTIC, PlantModel, force_from_accel_3d,
                       longitudinal_transverse_check, newtonian_rhs,
                       relativistic_rhs_1d, relativistic_rhs_3d, split_parallel_perp)
from .errors import (ConfigParseError, DimensionMismatch, HorizonExhausted,
                     InvalidPoleSet, NonFiniteState, NonOrthogonalInput, RelkitError,
                     SpeedBoundViolation, StepCountExceeded)
from .linearize import (LinearPlant, linearized_model, u_from_w, u_from_w_1d,
                        u_from_w_3d, w_from_u, w_from_u_1d, w_from_u_3d)
from .report import (RunReport, build_report, read_trajectory_csv, settling_time,
                     write_report_json, write_trajectory_csv)
from .sim import (IntegratorCfg, RK4, RK45, Trajectory, energy_audit,
                  integrate_closed_loop, integrate_open_loop,
                  integrate_virtual_schedule)

__version__ = "0.1.0"
