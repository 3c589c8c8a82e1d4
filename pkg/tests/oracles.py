"""Independent numerical oracles shared by several test modules."""
import numpy as np
from scipy import integrate, optimize
from scipy.special import log_ndtr


def _log_bin_prob(z, lo, hi, sn):
    # log(Phi((hi - z)/sn) - Phi((lo - z)/sn)), evaluated on whichever side keeps precision.
    a, b = (lo - z) / sn, (hi - z) / sn
    if a > 0:
        return log_ndtr(-a) + np.log1p(-np.exp(log_ndtr(-b) - log_ndtr(-a)))
    return log_ndtr(b) + np.log1p(-np.exp(log_ndtr(a) - log_ndtr(b)))


def component_oracle(lo, hi, p, v_p, noise_var):
    """Posterior mean and variance of one real component z ~ N(p, v_p/2)
    observed through z + w in (lo, hi], w ~ N(0, noise_var/2), by adaptive
    quadrature of the unnormalized posterior."""
    sp, sn = np.sqrt(v_p / 2), np.sqrt(noise_var / 2)
    logf = lambda z: -0.5 * ((z - p) / sp) ** 2 + _log_bin_prob(z, lo, hi, sn)
    edges = [e for e in (lo, hi) if np.isfinite(e)]
    span = (min([p] + edges) - 10.0, max([p] + edges) + 10.0)
    mode = optimize.minimize_scalar(lambda z: -logf(z), bounds=span, method="bounded",
                                    options={"xatol": 1e-12}).x
    top = logf(mode)
    a, b = mode - 15 * sp, mode + 15 * sp
    pts = [x for x in edges + [mode] if a < x < b]
    f = lambda z, k: (z - mode) ** k * np.exp(logf(z) - top)
    m = [integrate.quad(f, a, b, args=(k,), points=pts, limit=400, epsabs=1e-14, epsrel=1e-12)[0]
         for k in range(3)]
    d = m[1] / m[0]
    return mode + d, m[2] / m[0] - d * d


def bin_log_likelihood(bins_re, bins_im, z, noise_var, spec):
    """log P(bin pair | z) summed over antennas, one real component at a time."""
    sn = np.sqrt(noise_var / 2)
    total = 0.0
    for b, x in zip(np.concatenate([bins_re, bins_im]), np.concatenate([z.real, z.imag])):
        total += _log_bin_prob(x, spec.thresholds[b - 1], spec.thresholds[b], sn)
    return total


def exact_symbol_posterior(bins_re, bins_im, H, noise_var, spec, points):
    """Posterior mean of x given quantized y = Q(H x / sqrt(K) + w) by enumerating
    every symbol vector of a small system; bins are length-N vectors."""
    K = H.shape[1]
    combos = np.array(np.meshgrid(*[points] * K, indexing="ij")).reshape(K, -1)
    logw = np.array([bin_log_likelihood(bins_re, bins_im, H @ c / np.sqrt(K), noise_var, spec)
                     for c in combos.T])
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return combos @ w
