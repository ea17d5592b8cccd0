"""Certified safe regions of attraction for discrete-time systems.

A neural approximation of the Zubov value function is trained from simulated
labels, and its sublevel sets are certified against a quadratic Lyapunov
function by interval branch and bound.
"""

from .dynamics import SystemDef, builtin, load_system, step, trajectory
from .intervals import Box, Interval
from .net import MlpNetwork, TrainConfig, train
from .quadratic import QuadCert, c1_certificate, c2_upper_bound, search_c1, solve_dlyap
from .verify import (ImplicationSpec, Verdict, bisect_level, calibrate_neural, check_implication,
                     grid_falsify, net_interval_bounds, verify_neural, verify_quadratic)
from .zubov import AlphaSpec, Dataset, LabelConfig, SafetySpec, label, label_batch

__version__ = "0.1.0"
