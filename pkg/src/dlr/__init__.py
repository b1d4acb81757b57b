"""Diagonal linear RNN sequence models, kernels, synthetic tasks and analyses."""

__version__ = "0.1.0"
