"""Survival function of the all-time maximum of a branching spectrally negative Levy process."""
from .asymptotics import RegimePrediction, fit_exp_rate, fit_power_product, predict, regime_of
from .exit_laws import WindowLaw
from .levy import LevyModel, catalog, phi, psi, psi_complex, psi_prime
from .offspring import OffspringLaw, binary, classify, hit_prob, pgf, remainder_R
from .scale import PotentialDensity, ScaleEvaluator, theta_q, w_q, w_q_prime
from .simulator import SimConfig, TailEstimate, estimate_survival, run_replicate
from .solver import SurvivalCurve, solve_u

__version__ = "0.1.0"
