"""Large-system performance of the Bayes-optimal joint channel-and-data
estimator, obtained from the replica-symmetric fixed-point equations.

The output channel enters only through two scalar functionals of the product
overlap ``Q = q_H * q_X``: the Fisher-like quantity ``chi`` and the bin
entropy ``sum_b int Dv Psi_b log Psi_b``.  Both are evaluated on a composite
Gauss-Legendre rule refined around the (scaled) quantizer thresholds, since
at high SNR the integrands are nearly discontinuous there.

Thresholds appear as ``sqrt(2) * r_b`` throughout: each real component of
``Z`` carries half of the complex power, and scaling by ``sqrt(2)`` puts the
component back on the complex-power scale used by the overlaps.
"""
import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate, optimize, special as sps

from .denoisers import QPSK, Constellation, Prior, mutual_info_awgn, scalar_channel_mmse, ser_from_snr
from .quantizer import QuantizerSpec, make_uniform_quantizer
from .special import SQRT2, normal_rule, truncated_normal_moments

log = logging.getLogger(__name__)

MODES = ("jcd", "perfect-csir", "pilot-only")

# Least-squares fits of the SER-optimal normalized step size versus SNR (dB).
STEP_FIT = {2: (0.6921, -0.0154), 3: (0.4364, -0.0118), 4: (0.2559, -0.0071)}

# High-SNR channel-MSE offsets (dB) for Delta = sqrt(2) * 2**-B.
HIGH_SNR_CB_DB = {1: 2.8731, 2: -5.9852, 3: -13.0201, 4: -19.4804,
                  5: -25.7065, 6: -31.8265, 7: -37.6547}


@dataclass(frozen=True)
class ReplicaInput:
    alpha: float
    beta_t: float
    beta_d: float
    noise_var: float
    spec: Optional[QuantizerSpec] = None  # None means an ideal (unquantized) receiver
    data_prior: Prior = QPSK
    channel_var: float = 1.0
    pilot_power: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta_t", "beta_d", "noise_var"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        for name in ("channel_var", "pilot_power"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v}")

    @property
    def data_power(self):
        return self.data_prior.power

    @property
    def snr_db(self):
        return 10 * np.log10(1 / self.noise_var)


@dataclass
class ReplicaSolution:
    q_h: float
    q_xt: float
    q_xd: float
    qt_h: float = 0.0
    qt_xt: float = 0.0
    qt_xd: float = 0.0
    chi_t: float = 0.0
    chi_d: float = 0.0
    mse_h: float = 0.0
    mse_xd: float = 0.0
    free_entropy: float = float("nan")
    ser: float = float("nan")
    iterations: int = 0
    converged: bool = False
    residual: float = float("nan")
    mode: str = "jcd"
    alternatives: list = field(default_factory=list, repr=False)


# -- output-channel functionals ----------------------------------------------

def _scaled_edges(spec):
    return SQRT2 * spec.thresholds


def _effective_std(input, phase, q_h, q_x):
    c_x = input.pilot_power if phase == "t" else input.data_power
    var = input.noise_var + input.channel_var * c_x - q_h * q_x
    if not var > 0:
        raise ValueError(f"effective variance must be positive, got {var}")
    return np.sqrt(var)


def _bin_terms(V, s, spec):
    """``(Psi, dPsi/dV, log Psi)`` for every bin, shape ``V.shape + (n_bins,)``."""
    edges = _scaled_edges(spec)
    V = np.asarray(V, dtype=float)[..., None]
    lm, m1, _, _ = truncated_normal_moments((edges[:-1] - V) / s, (edges[1:] - V) / s, variance=False)
    psi = np.exp(lm)
    return psi, m1 * psi / s, lm


def psi_b(v_big, bin, input, phase, q_h, q_x):
    s = _effective_std(input, phase, q_h, q_x)
    psi, _, _ = _bin_terms(v_big, s, input.spec)
    return psi[..., bin - 1]


def psi_b_prime(v_big, bin, input, phase, q_h, q_x):
    s = _effective_std(input, phase, q_h, q_x)
    _, dpsi, _ = _bin_terms(v_big, s, input.spec)
    return dpsi[..., bin - 1]


def _v_rule(spec, Q, s, order):
    if Q <= 0:
        return np.zeros(1), np.ones(1)
    rq = np.sqrt(Q)
    width = s / rq
    centers = _scaled_edges(spec)[1:-1] / rq
    spacing = SQRT2 * spec.step / rq
    if spacing < 0.5 * width:
        # Thresholds denser than the smoothing scale: the bin sum is smooth.
        centers = ()
    return normal_rule(centers, width, order)


_WINDOW = 15.0  # bins beyond 15 std of an evaluation point carry < 1e-50
_BLOCK = 200_000  # max (node, bin) pairs evaluated at once


def _relevant_bins(spec, V, s):
    edges = _scaled_edges(spec)
    lo, hi = V.min() - _WINDOW * s, V.max() + _WINDOW * s
    keep = (edges[1:] > lo) & (edges[:-1] < hi)
    return np.flatnonzero(keep)


def _functional_block(V, s, spec):
    keep = _relevant_bins(spec, V, s)
    edges = _scaled_edges(spec)
    lo = (edges[keep][None, :] - V[:, None]) / s
    hi = (edges[keep + 1][None, :] - V[:, None]) / s
    lm, m1, _, _ = truncated_normal_moments(lo, hi, variance=False)
    psi = np.exp(lm)
    plogp = np.where(psi > 1e-300, psi * lm, 0.0)
    return (psi * m1 * m1).sum(axis=1), plogp.sum(axis=1)


def output_functionals(Q, C, noise_var, spec, order=12):
    """Return ``(chi, bin_entropy)`` for product overlap ``Q`` and product power ``C``.

    ``bin_entropy`` is ``int Dv sum_b Psi_b log Psi_b`` per real component; for
    the ideal receiver it is the differential-entropy analogue
    ``-0.5 * log(2*pi*e*s^2)``.
    """
    var = noise_var + C - Q
    if not var > 0:
        raise ValueError(f"effective variance must be positive, got {var}")
    s = np.sqrt(var)
    if spec is None:
        return 1.0 / var, -0.5 * np.log(2 * np.pi * np.e * var)
    v, w = _v_rule(spec, Q, s, order)
    V = np.sqrt(max(Q, 0.0)) * v
    # Nodes are sorted, so a block of neighbouring nodes shares a narrow bin window.
    per_node = min(spec.n_bins, int(2 * _WINDOW * s / (SQRT2 * spec.step)) + 2)
    size = max(1, _BLOCK // per_node)
    fisher, ent = np.empty_like(V), np.empty_like(V)
    for i in range(0, V.size, size):
        fisher[i:i + size], ent[i:i + size] = _functional_block(V[i:i + size], s, spec)
    return float(fisher @ w / var), float(ent @ w)


def chi(phase, q_h, q_x, input, order=12):
    c_x = input.pilot_power if phase == "t" else input.data_power
    return output_functionals(q_h * q_x, input.channel_var * c_x, input.noise_var, input.spec, order)[0]


# -- fixed point -----------------------------------------------------------------

def _map(q_h, q_xd, input, mode, order=12):
    """Undamped fixed-point map.  Returns the new overlaps and the auxiliaries."""
    c_h, c_xt, c_xd = input.channel_var, input.pilot_power, input.data_power
    q_xt = c_xt
    chi_t = output_functionals(q_h * q_xt, c_h * c_xt, input.noise_var, input.spec, order)[0]
    chi_d = output_functionals(q_h * q_xd, c_h * c_xd, input.noise_var, input.spec, order)[0]
    beta_t, beta_d = input.beta_t, input.beta_d
    if mode == "pilot-only":
        beta_d = 0.0
    qt_h = beta_t * q_xt * chi_t + beta_d * q_xd * chi_d
    qt_xt = input.alpha * q_h * chi_t
    qt_xd = input.alpha * q_h * chi_d
    mse_h = c_h / (1.0 + c_h * qt_h)
    mse_xd = scalar_channel_mmse(input.data_prior, qt_xd, order)
    aux = dict(qt_h=qt_h, qt_xt=qt_xt, qt_xd=qt_xd, chi_t=chi_t, chi_d=chi_d,
               mse_h=mse_h, mse_xd=mse_xd)
    return c_h - mse_h, c_xd - mse_xd, aux


def replica_update(state, input, mode="jcd", damping=0.5, order=12):
    """One damped sweep of the fixed-point equations.

    In ``perfect-csir`` mode the channel overlap stays pinned at ``c_H``;
    in ``pilot-only`` mode the data phase does not feed the channel.
    """
    new_h, new_xd, aux = _map(state.q_h, state.q_xd, input, mode, order)
    if mode == "perfect-csir":
        new_h = input.channel_var
        aux["mse_h"] = 0.0
    q_h = damping * new_h + (1 - damping) * state.q_h
    q_xd = damping * new_xd + (1 - damping) * state.q_xd
    return replace(state, q_h=q_h, q_xd=q_xd, **aux)


def _iterate(state, input, mode, freeze_h=False, tol=1e-12, max_iter=10_000,
             damping=0.5, order=12):
    c_h, c_xd = input.channel_var, input.data_power
    for it in range(1, max_iter + 1):
        new = replica_update(state, input, mode, damping, order)
        if freeze_h:
            new.q_h = state.q_h
        step = max(abs(new.q_h - state.q_h) / c_h, abs(new.q_xd - state.q_xd) / c_xd)
        state = new
        if step < tol:
            state.iterations += it
            state.converged = True
            return state
    state.iterations += max_iter
    state.converged = False
    log.warning("replica fixed point did not converge in %d sweeps (mode=%s)", max_iter, mode)
    return state


def _finish(state, input, mode, order):
    """Refresh auxiliaries at the final overlaps and record the residual."""
    new_h, new_xd, aux = _map(state.q_h, state.q_xd, input, mode, order)
    if mode == "perfect-csir":
        new_h = state.q_h
        aux["mse_h"] = 0.0
    for k, v in aux.items():
        setattr(state, k, v)
    state.residual = max(abs(new_h - state.q_h), abs(new_xd - state.q_xd))
    if isinstance(input.data_prior, Constellation):
        state.ser = float(ser_from_snr(input.data_prior, state.qt_xd))
    if mode == "jcd":
        state.free_entropy = free_entropy(state, input, order)
    state.mode = mode
    return state


def solve_fixed_point(input, mode="jcd", tol=1e-12, max_iter=10_000, damping=0.5, order=12):
    """Solve the fixed-point equations from an uninformative and an informative
    start; if they disagree, keep the solution with the larger free entropy."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    c_h, c_xt, c_xd = input.channel_var, input.pilot_power, input.data_power
    kw = dict(tol=tol, max_iter=max_iter, damping=damping, order=order)

    if mode == "perfect-csir":
        input = replace(input, beta_d=input.beta_t + input.beta_d, beta_t=0.0)
        starts = [ReplicaSolution(c_h, c_xt, 1e-6 * c_xd), ReplicaSolution(c_h, c_xt, 0.999 * c_xd)]
        sols = [_finish(_iterate(s, input, mode, freeze_h=True, **kw), input, mode, order) for s in starts]
    elif mode == "pilot-only":
        sols = []
        for frac in (1e-6, 0.999):
            st = _iterate(ReplicaSolution(frac * c_h, c_xt, 0.0), input, "pilot-only", **kw)
            its = st.iterations
            st = ReplicaSolution(st.q_h, c_xt, frac * c_xd, iterations=its)
            st = _iterate(st, input, "pilot-only", freeze_h=True, **kw)
            sols.append(_finish(st, input, mode, order))
    else:
        starts = [ReplicaSolution(1e-6 * c_h, c_xt, 1e-6 * c_xd),
                  ReplicaSolution(0.999 * c_h, c_xt, 0.999 * c_xd)]
        sols = [_finish(_iterate(s, input, mode, **kw), input, mode, order) for s in starts]

    a, b = sols
    if max(abs(a.q_h - b.q_h), abs(a.q_xd - b.q_xd)) <= 1e-6:
        best = a if a.converged or not b.converged else b
    elif mode == "jcd":
        best = a if a.free_entropy >= b.free_entropy else b
    else:
        # Without a free-entropy functional, prefer the more informative branch.
        best = b if b.q_xd >= a.q_xd else a
    best.alternatives = [s for s in sols if s is not best]
    return best


# -- free entropy ------------------------------------------------------------------

def free_entropy_terms(q_h, q_xd, qt_h, qt_xd, input, order=12):
    c_h, c_xt, c_xd = input.channel_var, input.pilot_power, input.data_power
    a, bt, bd = input.alpha, input.beta_t, input.beta_d
    _, g_t = output_functionals(q_h * c_xt, c_h * c_xt, input.noise_var, input.spec, order)
    _, g_d = output_functionals(q_h * q_xd, c_h * c_xd, input.noise_var, input.spec, order)
    # Two real components per complex sample.
    out = 2 * a * (bt * g_t + bd * g_d)
    mi = a * np.log1p(c_h * qt_h) + bd * mutual_info_awgn(input.data_prior, qt_xd, order)
    coupling = a * (c_h - q_h) * qt_h + bd * (c_xd - q_xd) * qt_xd
    return out - mi + coupling


def free_entropy(state, input, order=12):
    return float(free_entropy_terms(state.q_h, state.q_xd, state.qt_h, state.qt_xd, input, order))


# -- derived predictions -------------------------------------------------------------

def predict_performance(input, mode="jcd", **kw):
    sol = solve_fixed_point(input, mode, **kw)
    ser = float(ser_from_snr(input.data_prior, sol.qt_xd)) if isinstance(input.data_prior, Constellation) else float("nan")
    return {"mse_h": sol.mse_h, "mse_xd": sol.mse_xd, "ser": ser, "solution": sol}


def cb_reference_step(bits):
    """Step size under which the reference high-SNR constants were tabulated."""
    return np.sqrt(2.0) * 2.0 ** -bits


@lru_cache(maxsize=None)
def _inverse_mills_integral():
    # int exp(-z^2) / Phi(z) dz
    f = lambda z: np.exp(-z * z - sps.log_ndtr(z))
    return integrate.quad(f, -np.inf, 0, epsabs=0, epsrel=1e-13)[0] + \
        integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-13)[0]


def high_snr_cb(spec):
    """High-SNR constant ``C_B`` (dB) of the pilot-only channel MSE law
    ``mse_H ~ -20 log10(beta_t) + C_B``.

    Each finite threshold ``r`` is shared by two bins and contributes
    ``2 (2 pi)^{-3/2} e^{-r^2} int e^{-z^2}/Phi(z) dz`` to ``c_B``.
    """
    r = spec.finite_thresholds
    c_b = 2.0 * (2 * np.pi) ** -1.5 * _inverse_mills_integral() * np.exp(-r * r).sum()
    return float(-20 * np.log10(c_b))


def cb_at_mse(spec, mse_h):
    """Finite-``mse_H`` version of the constant (noise-free, unit powers).

    Each bin is integrated in the variable ``u`` centred on one of its edges,
    the upper one except for the top bin.  Equals ``chi_t * sqrt(m (1 - m))``.
    """
    m = float(mse_h)
    tau = _scaled_edges(spec)
    rm = np.sqrt(m)
    total = 0.0
    for b in range(1, spec.n_bins + 1):
        lo, hi = tau[b - 1], tau[b]
        if np.isfinite(hi):
            width = (hi - lo) / rm
            weight = lambda u: np.exp(-(rm * u - hi) ** 2 / (2 * (1 - m))) / np.sqrt(2 * np.pi)
            def f(u):
                lmass, m1, _, _ = truncated_normal_moments(u - width, u, variance=False)
                return weight(u) * np.exp(lmass) * m1 * m1
            pts = [0.0] + ([width] if np.isfinite(width) else [])
        else:
            weight = lambda u: np.exp(-(rm * u + lo) ** 2 / (2 * (1 - m))) / np.sqrt(2 * np.pi)
            def f(u):
                lmass, m1, _, _ = truncated_normal_moments(-np.inf, u, variance=False)
                return weight(u) * np.exp(lmass) * m1 * m1
            pts = [0.0]
        bounds = sorted(set([-60.0] + pts + [pts[-1] + 60.0]))
        for a_, b_ in zip(bounds[:-1], bounds[1:]):
            total += integrate.quad(f, a_, b_, limit=400, epsabs=1e-14, epsrel=1e-11)[0]
    return float(total)


def high_snr_mse_db(beta_t, c_b_db):
    return -20 * np.log10(beta_t) + c_b_db


def fitted_step(bits, snr_db):
    if bits not in STEP_FIT:
        raise KeyError(f"no fitted step-size coefficients for B={bits}")
    a0, a1 = STEP_FIT[bits]
    return a0 + a1 * snr_db


def optimal_step_size(base, bits, snr_db, grid=None, mode="jcd", objective="ser", refine=True):
    """Search the SER-optimal normalized step ``Delta / sqrt(E|Y|^2)``.

    ``base`` is a :class:`ReplicaInput` whose ``spec`` is ignored and whose
    noise variance is replaced by ``10**(-snr_db/10)``.
    """
    if bits < 2:
        raise ValueError("B=1 is invariant to the step size")
    noise_var = 10 ** (-snr_db / 10)
    base = replace(base, noise_var=noise_var)
    scale = np.sqrt(base.channel_var * base.data_power + noise_var)
    if grid is None:
        grid = np.linspace(0.05, 1.2, 24)
    grid = np.asarray(grid, dtype=float)

    def loss(delta):
        inp = replace(base, spec=make_uniform_quantizer(bits, delta * scale))
        sol = solve_fixed_point(inp, mode)
        if objective == "ser" and isinstance(base.data_prior, Constellation):
            return float(ser_from_snr(base.data_prior, sol.qt_xd))
        return sol.mse_xd

    values = np.array([loss(d) for d in grid])
    i = int(np.argmin(values))
    interior = 0 < i < len(grid) - 1
    best = grid[i]
    if refine and interior:
        res = optimize.minimize_scalar(loss, bounds=(grid[i - 1], grid[i + 1]), method="bounded",
                                       options={"xatol": 1e-4})
        if res.fun <= values[i]:
            best = float(res.x)
    fitted = fitted_step(bits, snr_db) if bits in STEP_FIT else float("nan")
    return {"delta_opt": float(best), "fitted": fitted, "interior": interior,
            "grid": grid, "values": values}
