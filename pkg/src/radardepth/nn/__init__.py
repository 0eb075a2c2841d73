from .gradcheck import GradCheckReport, grad_check, numeric_grad, relative_error
from .layers import (
    BatchNorm2d,
    Conv2d,
    Layer,
    Linear,
    MaxPool2,
    ReLU,
    Sequential,
    ShapeError,
    Sigmoid,
    UpsampleNearest2,
    sigmoid,
)
from .optim import AdamState, NonFiniteGradientError, adam_step

__all__ = [
    "AdamState", "BatchNorm2d", "Conv2d", "GradCheckReport", "Layer", "Linear", "MaxPool2",
    "NonFiniteGradientError", "ReLU", "Sequential", "ShapeError", "Sigmoid", "UpsampleNearest2",
    "adam_step", "grad_check", "numeric_grad", "relative_error", "sigmoid",
]
