"""KAM reducibility numerics for the quantum harmonic oscillator with a quasi-periodic potential."""
from .config import RunConfig, load_config
from .fourier import FourierMatrix
from .hermite import HermiteBasis, build_basis, eigenvalue, ladder_apply, weighted_norm
from .kam_engine import KamResult, KamSchedule, KamState, build_schedule, compose_U, kam_step, measure_scan, run
from .matrix_spaces import NormReport, TruncMatrix, full_report, mat_exp, op_norm
from .perturbation import PotentialSpec, assemble_P, catalog, decay_report, fourier_P

__version__ = "0.1.0"
