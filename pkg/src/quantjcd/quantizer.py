"""Uniform B-bit quantizer applied separately to the real and imaginary
parts of each received sample.

Bins are numbered 1..2**B and are half-open, ``(r_{b-1}, r_b]``; an input
sitting exactly on a threshold belongs to the lower bin.
"""
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class QuantizerSpec:
    bits: int
    step: float
    thresholds: np.ndarray = field(repr=False)  # r_0 = -inf .. r_{2^B} = +inf
    levels: np.ndarray = field(repr=False)  # output value of bins 1..2^B

    @property
    def n_bins(self):
        return 1 << self.bits

    @property
    def finite_thresholds(self):
        return self.thresholds[1:-1]

    def __eq__(self, other):
        return (isinstance(other, QuantizerSpec) and self.bits == other.bits
                and self.step == other.step)

    def __hash__(self):
        return hash((self.bits, self.step))


def make_uniform_quantizer(bits, step):
    if isinstance(bits, bool) or int(bits) != bits or bits < 1:
        raise ValueError(f"bits must be an integer >= 1, got {bits!r}")
    step = float(step)
    if not np.isfinite(step) or step <= 0:
        raise ValueError(f"step must be finite and positive, got {step!r}")
    bits = int(bits)
    half = 1 << (bits - 1)
    b = np.arange(1, 2 * half)
    inner = (b - half) * step
    thresholds = np.concatenate(([-np.inf], inner, [np.inf]))
    levels = np.concatenate((inner - step / 2, [(half - 0.5) * step]))
    thresholds.setflags(write=False)
    levels.setflags(write=False)
    return QuantizerSpec(bits, step, thresholds, levels)


def quantize_bins(y, spec):
    """1-based bin index of each real input."""
    return np.searchsorted(spec.finite_thresholds, np.asarray(y, dtype=float), side="left") + 1


def quantize_real(y, spec):
    """Return ``(level, bin)`` for real input(s) ``y``."""
    bins = quantize_bins(y, spec)
    return spec.levels[bins - 1], bins


def quantize_complex(y, spec):
    y = np.asarray(y)
    re, _ = quantize_real(y.real, spec)
    im, _ = quantize_real(y.imag, spec)
    return re + 1j * im


def quantize_complex_bins(y, spec):
    """Bin pair ``(b, b')`` of the real and imaginary parts."""
    y = np.asarray(y)
    return quantize_bins(y.real, spec), quantize_bins(y.imag, spec)


def bin_bounds(bin, spec):
    bin = np.asarray(bin)
    if np.any((bin < 1) | (bin > spec.n_bins)):
        raise IndexError(f"bin index out of range 1..{spec.n_bins}")
    return spec.thresholds[bin - 1], spec.thresholds[bin]
