from . import ops
from .layers import (Activation, BatchNorm, Conv2d, Dense, Dropout, Flatten,
                     MaxPool2, Parameter, Upsample2, he_uniform)
from .network import Network
from .optim import SGD, Adam, make_optimizer
from .gradcheck import GradCheckReport, grad_check
from .checkpoint import load_checkpoint, save_checkpoint
from .ops import bce_loss

__all__ = [
    "ops", "Parameter", "Conv2d", "MaxPool2", "Activation", "Flatten",
    "Dense", "BatchNorm", "Dropout", "Upsample2", "he_uniform", "Network",
    "SGD", "Adam", "make_optimizer", "grad_check", "GradCheckReport",
    "save_checkpoint", "load_checkpoint", "bce_loss",
]
