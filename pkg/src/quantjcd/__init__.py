"""Joint channel estimation and data detection for massive MIMO with
low-resolution ADCs: quantizer, scalar denoisers, GAMP-based estimator,
replica-symmetric performance prediction and a Monte-Carlo harness."""
from .quantizer import QuantizerSpec, make_uniform_quantizer, quantize_complex, quantize_real
from .denoisers import QPSK, Constellation, GaussianPrior

__version__ = "0.1.0"

__all__ = ["QuantizerSpec", "make_uniform_quantizer", "quantize_complex", "quantize_real",
           "QPSK", "Constellation", "GaussianPrior"]
