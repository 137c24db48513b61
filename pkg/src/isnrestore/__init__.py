"""Multi-degradation image restoration: a classical semi-smooth Newton solver and
its unfolded network counterpart with input-adaptive convolutions."""

from .degrade import DegradationSpec, make_test_case, synthetic_scene
from .imaging import Image, load_ppm, rgb_to_y, save_ppm
from .metrics import EvalReport, composite_loss, psnr, ssim
from .network import UnfoldedModel, forward, seed_model
from .operators import RegularizerConfig
from .solver import SolverState, SolverTrace, solve
from .weights import load_weights, save_weights

__version__ = "0.1.0"
