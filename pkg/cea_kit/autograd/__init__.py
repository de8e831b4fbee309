"""Minimal float64 tensor engine with reverse-mode differentiation."""
from cea_kit.autograd import functional
from cea_kit.autograd.flops import FlopCounter, count_macs
from cea_kit.autograd.gradcheck import grad_check
from cea_kit.autograd.tensor import Function, Tape, Tensor, as_tensor, grad

__all__ = [
    "Function",
    "FlopCounter",
    "Tape",
    "Tensor",
    "as_tensor",
    "count_macs",
    "functional",
    "grad",
    "grad_check",
]
