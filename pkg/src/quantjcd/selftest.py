"""Quick sanity checks used by ``quantjcd selftest`` (a few seconds)."""
import numpy as np
from scipy import integrate
from scipy.stats import norm

from .denoisers import QPSK, denoise_z_quantized, ser_from_snr
from .gamp import GampConfig, SystemDims
from .quantizer import make_uniform_quantizer, quantize_complex
from .replica import ReplicaInput, cb_reference_step, high_snr_cb, solve_fixed_point
from .sim import TrialConfig, run_trial


def _quantizer():
    spec = make_uniform_quantizer(2, 0.7128)
    return np.isclose(quantize_complex(0.7128 + 0.1j, spec), 0.3564 + 0.3564j)


def _denoiser():
    # One real component against direct quadrature of the bin posterior.
    spec = make_uniform_quantizer(2, 0.7128)
    p, vp, nv = 0.2 + 0.2j, 0.8, 0.3
    post = denoise_z_quantized((np.array([3]), np.array([3])), np.array([p]), np.array([vp]), nv, spec)
    lo, hi = spec.thresholds[2], spec.thresholds[3]

    f = lambda z, k: z ** k * norm.pdf(z, 0.2, np.sqrt(vp / 2)) * (
        norm.cdf(hi, z, np.sqrt(nv / 2)) - norm.cdf(lo, z, np.sqrt(nv / 2)))
    m0, m1, m2 = (integrate.quad(f, -12, 12, args=(k,), epsabs=1e-13)[0] for k in range(3))
    mean, var = m1 / m0, m2 / m0 - (m1 / m0) ** 2
    return abs(post.mean.real[0] - mean) < 1e-7 and abs(post.variance[0] - 2 * var) < 1e-7


def _ser():
    return abs(ser_from_snr(QPSK, 0.0) - 0.75) < 1e-15


def _replica():
    sol = solve_fixed_point(ReplicaInput(4, 1, 9, 0.1, make_uniform_quantizer(3, 0.5)))
    return sol.converged and sol.residual < 1e-10


def _high_snr_constant():
    return abs(high_snr_cb(make_uniform_quantizer(3, cb_reference_step(3))) + 13.0201) < 0.01


def _gamp():
    dims = SystemDims(32, 4, 4, 16)
    cfg = TrialConfig(dims, snr_db=30.0, spec=None, gamp=GampConfig(mode="perfect-csir"), trials=1, seed=3)
    return run_trial(cfg, 0)["ser"] == 0.0


CHECKS = [("quantizer boundary and levels", _quantizer),
          ("quantized denoiser vs quadrature", _denoiser),
          ("QPSK SER at zero SNR", _ser),
          ("replica fixed point residual", _replica),
          ("high-SNR constant B=3", _high_snr_constant),
          ("GAMP noiseless perfect-CSIR detection", _gamp)]


def run_selftest(echo=print):
    failures = 0
    for name, check in CHECKS:
        try:
            ok = bool(check())
        except Exception as exc:  # report and keep going
            ok = False
            name = f"{name} ({exc})"
        failures += not ok
        echo(f"{'PASS' if ok else 'FAIL'}  {name}")
    return failures
