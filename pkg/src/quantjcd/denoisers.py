"""Scalar posterior computations.

Every denoiser works element-wise on arrays and returns a
:class:`ScalarPosterior` whose ``variance`` is the *total* complex variance,
i.e. the sum of the real- and imaginary-part variances.  GAMP uses the same
convention for all of its ``v`` quantities.
"""
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy import special as sps

from .special import SQRT2, norm_cdf, normal_rule, q_function, truncated_normal_moments


class ScalarPosterior(NamedTuple):
    mean: np.ndarray
    variance: np.ndarray
    degenerate: int = 0  # entries that fell back to the point-mass limit


@dataclass(frozen=True)
class Constellation:
    """Square QAM with ``(2*nu)**2`` equiprobable points and average energy
    ``power``."""

    nu: int
    power: float = 1.0

    def __post_init__(self):
        if self.nu < 1:
            raise ValueError("nu must be >= 1")
        if not self.power > 0:
            raise ValueError("power must be positive")

    @classmethod
    def qam(cls, order, power=1.0):
        side = int(round(np.sqrt(order)))
        if side * side != order or side % 2:
            raise ValueError(f"{order} is not a square QAM order")
        return cls(side // 2, power)

    @property
    def order(self):
        return (2 * self.nu) ** 2

    @property
    def zeta(self):
        return 1.0 / np.sqrt(2.0 * ((2 * self.nu) ** 2 - 1) / 3.0)

    @property
    def pam_levels(self):
        """Per-component amplitudes, ascending."""
        odd = np.arange(-(2 * self.nu - 1), 2 * self.nu, 2, dtype=float)
        return odd * self.zeta * np.sqrt(self.power)

    @property
    def points(self):
        """All points, index = i_im * 2nu + i_re (real part varies fastest)."""
        a = self.pam_levels
        return (a[None, :] + 1j * a[:, None]).ravel()

    @property
    def variance(self):
        return self.power

    def sample(self, rng, shape):
        idx = rng.integers(0, self.order, size=shape)
        return self.points[idx]


@dataclass(frozen=True)
class GaussianPrior:
    variance: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise ValueError("variance must be positive and finite")

    @property
    def power(self):
        return self.variance

    def sample(self, rng, shape):
        s = np.sqrt(self.variance / 2)
        return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


Prior = Union[Constellation, GaussianPrior]

QPSK = Constellation(1)


# -- quantized output channel -------------------------------------------------

def _component_psi(bins, x, noise_var, spec):
    lo, hi = spec.thresholds[bins - 1], spec.thresholds[bins]
    s = np.sqrt(noise_var / 2)
    return norm_cdf((hi - x) / s) - norm_cdf((lo - x) / s)


def likelihood_bin(bin, bin_prime, z, noise_var, spec):
    """Probability of observing the bin pair given the noiseless sample ``z``."""
    if not noise_var > 0:
        raise ValueError("noise_var must be positive")
    z = np.asarray(z)
    return (_component_psi(np.asarray(bin), z.real, noise_var, spec)
            * _component_psi(np.asarray(bin_prime), z.imag, noise_var, spec))


def denoise_z_unquantized(y, p_hat, v_p, noise_var):
    gain = v_p / (noise_var + v_p)
    return ScalarPosterior(p_hat + gain * (y - p_hat), v_p - v_p * gain)


def _truncated_component(bins, p, v_p, noise_var, spec):
    # Real Gaussian prior N(p, v_p/2) observed through a bin with noise var noise_var/2.
    s = np.sqrt((noise_var + v_p) / 2)
    lo = (spec.thresholds[bins - 1] - p) / s
    hi = (spec.thresholds[bins] - p) / s
    _, m1, var_u, deg = truncated_normal_moments(lo, hi)
    half = v_p / 2
    mean = p + (half / s) * m1
    var = half - (half * half / (s * s)) * (1.0 - var_u)
    return mean, np.maximum(var, 0.0), deg


def denoise_z_quantized(y_bins, p_hat, v_p, noise_var, spec):
    """Posterior of ``z ~ CN(p_hat, v_p)`` given the observed bin pair.

    ``y_bins`` is the ``(bin_re, bin_im)`` pair as produced by
    :func:`quantjcd.quantizer.quantize_complex_bins`.
    """
    p_hat = np.asarray(p_hat)
    if not np.all(np.isfinite(p_hat)):
        raise ValueError("p_hat must be finite")
    v_p = np.asarray(v_p, dtype=float)
    b_re, b_im = y_bins
    m_re, v_re, d_re = _truncated_component(np.asarray(b_re), p_hat.real, v_p, noise_var, spec)
    m_im, v_im, d_im = _truncated_component(np.asarray(b_im), p_hat.imag, v_p, noise_var, spec)
    return ScalarPosterior(m_re + 1j * m_im, v_re + v_im, int(d_re.sum() + d_im.sum()))


# -- input denoisers ----------------------------------------------------------

def _pam_posterior(r, v_r, levels):
    # Component posterior over PAM levels: weights exp(-(a - r)^2 / v_r).
    r = np.asarray(r, dtype=float)[..., None]
    v = np.asarray(v_r, dtype=float)[..., None]
    logits = -(levels - r) ** 2 / v
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=-1, keepdims=True)
    mean = (w * levels).sum(axis=-1)
    second = (w * levels * levels).sum(axis=-1)
    return mean, np.maximum(second - mean * mean, 0.0)


def denoise_x_qam(r_hat, v_r, cons):
    r_hat = np.asarray(r_hat)
    levels = cons.pam_levels
    m_re, v_re = _pam_posterior(r_hat.real, v_r, levels)
    m_im, v_im = _pam_posterior(r_hat.imag, v_r, levels)
    return ScalarPosterior(m_re + 1j * m_im, v_re + v_im)


def denoise_gaussian(r_hat, v_r, variance):
    gain = variance / (variance + v_r)
    return ScalarPosterior(gain * np.asarray(r_hat), v_r - v_r * v_r / (variance + v_r))


def denoise_x_gaussian(r_hat, v_r, prior):
    return denoise_gaussian(r_hat, v_r, prior.variance)


def denoise_h_gaussian(q_hat, v_q, prior):
    return denoise_gaussian(q_hat, v_q, prior.variance)


def denoise_input(r_hat, v_r, prior):
    if isinstance(prior, Constellation):
        return denoise_x_qam(r_hat, v_r, prior)
    return denoise_gaussian(r_hat, v_r, prior.variance)


# -- scalar AWGN channel y = sqrt(snr) x + w, w ~ CN(0, 1) ----------------------

def _pam_channel_nodes(cons, snr, order):
    # Received component y = sqrt(snr) a + z / sqrt(2) for every level a, with
    # the z-rule refined where y crosses a decision boundary.
    a = cons.pam_levels
    half_gap = cons.zeta * np.sqrt(cons.power)
    rs = np.sqrt(snr)
    mids = 0.5 * (a[1:] + a[:-1])
    width = 1.0 / (2.0 * SQRT2 * half_gap * rs)
    rows = []
    for level in a:
        z, w = normal_rule(SQRT2 * rs * (mids - level), width, order)
        rows.append((rs * level + z / SQRT2, w))
    return a, rows


def scalar_channel_mmse(prior, snr, order=12):
    snr = float(snr)
    if snr < 0:
        raise ValueError("snr must be non-negative")
    if isinstance(prior, GaussianPrior):
        return prior.variance / (1.0 + prior.variance * snr)
    if snr == 0:
        return prior.power
    a, rows = _pam_channel_nodes(prior, snr, order)
    total = 0.0
    for y, w in rows:
        _, var = _pam_posterior(y / np.sqrt(snr), np.full(y.shape, 1.0 / snr), a)
        total += var @ w
    # Two identical components, each level equiprobable.
    return 2.0 * float(total) / a.size


def mutual_info_awgn(prior, snr, order=12):
    """Mutual information in nats of the scalar complex AWGN channel."""
    snr = float(snr)
    if snr < 0:
        raise ValueError("snr must be non-negative")
    if isinstance(prior, GaussianPrior):
        return float(np.log1p(prior.variance * snr))
    if snr == 0:
        return 0.0
    a, rows = _pam_channel_nodes(prior, snr, order)
    total = 0.0
    for y, w in rows:
        d = y[:, None] - np.sqrt(snr) * a[None, :]
        total += (sps.logsumexp(-d * d, axis=-1) - np.log(a.size)) @ w
    # Each component carries variance-1/2 noise, hence the 1/2 offset.
    per_component = -float(total) / a.size - 0.5
    return 2.0 * per_component


def ser_from_snr(cons, snr):
    """Symbol error rate of minimum-distance detection of square QAM."""
    if not isinstance(cons, Constellation):
        raise TypeError("SER is only defined for QAM constellations")
    snr = np.asarray(snr, dtype=float)
    side = 2 * cons.nu
    # Half minimum distance over a per-component noise std of 1/sqrt(2).
    arg = np.sqrt(2.0 * snr * cons.power) * cons.zeta
    p = 2.0 * (1.0 - 1.0 / side) * q_function(arg)
    return 1.0 - (1.0 - p) ** 2
