"""Dual-variable bidding under a budget and a CPC window."""
from .allocator import ReplayMode, ReplayResponse, TrafficSlice, replay, replay_per_step
from .controllers import (BicbController, ManualController, PidConfig, PidController,
                          bicb_controller, manual_controller, online_lp_controller,
                          pid_controller)
from .core import (AccumStats, BidParams, Campaign, DegenerateDualsError, DualVars, Impression,
                   bid_price, effective_cpc, epsilon_c, to_bid_params, win_decision)
from .lp import brute_force_01, greedy_01, lp_optimal, perturb_objs, verify_gap
from .predictor import PredictorModel, oracle_predictor, train_empirical
from .solver import SolverConfig, residuals, solve, solve_p_given_q

__version__ = "0.1.0"
