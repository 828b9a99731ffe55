"""CNN engine and training harness for binary survival classification from
two-channel PET-CT slices: tensor ops with reverse-mode autodiff, the network
builders, Adam, the preprocessing/augmentation pipeline, ROC metrics, and a
small CLI.
"""

from .tensor import Tensor, ShapeError, set_deterministic, deterministic
from .ops import ConvParams
from .autograd import Tape, backward, gradcheck

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "ShapeError",
    "ConvParams",
    "Tape",
    "backward",
    "gradcheck",
    "set_deterministic",
    "deterministic",
    "__version__",
]
