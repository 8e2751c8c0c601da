"""Clarification question generation: seq2seq generator, utility reward,
MIXER policy-gradient training, and the adversarial loop, plus evaluation
metrics and a TF-IDF retrieval baseline. Everything runs on the package's
own numpy-backed autodiff core with optional compiled gate kernels."""

from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
