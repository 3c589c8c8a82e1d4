"""GAMP-based joint channel-and-data estimation (bilinear message passing).

Pilot and data columns live side by side in one ``K x T`` symbol matrix, pilots
first.  Pilot columns carry their known symbols with zero variance, which makes
the pilot-column linear step a special case of the data-column one.

The ``1/sqrt(K)`` factor of the signal model is folded into the channel: the
iteration runs on ``A = H / sqrt(K)`` with prior variance ``sigma_h^2 / K`` and
estimates are rescaled on the way out.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .denoisers import (Constellation, Prior, QPSK, denoise_gaussian, denoise_input,
                        denoise_z_quantized, denoise_z_unquantized)

log = logging.getLogger(__name__)

INIT_MODES = ("paper-zero", "random-small")
GAMP_MODES = ("jcd", "perfect-csir", "pilot-only")


class GampDivergence(FloatingPointError):
    def __init__(self, iteration, what):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class SystemDims:
    n_rx: int
    n_users: int
    t_pilot: int
    t_data: int

    def __post_init__(self):
        if self.n_rx < 1 or self.n_users < 1:
            raise ValueError("n_rx and n_users must be >= 1")
        if self.t_pilot < 0 or self.t_data < 0 or self.t_total < 1:
            raise ValueError("need t_pilot, t_data >= 0 and t_pilot + t_data >= 1")

    @property
    def t_total(self):
        return self.t_pilot + self.t_data

    @property
    def alpha(self):
        return self.n_rx / self.n_users

    @property
    def beta(self):
        return self.t_total / self.n_users

    @property
    def beta_t(self):
        return self.t_pilot / self.n_users

    @property
    def beta_d(self):
        return self.t_data / self.n_users


@dataclass(frozen=True)
class GampConfig:
    tolerance: float = 1e-8
    max_iters: int = 100
    damping: float = 0.3
    variance_floor: float = 1e-13
    init_mode: str = "paper-zero"
    mode: str = "jcd"
    line13_literal: bool = False

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must be in (0, 1]")
        if not self.variance_floor > 0:
            raise ValueError("variance_floor must be positive")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}")
        if self.mode not in GAMP_MODES:
            raise ValueError(f"mode must be one of {GAMP_MODES}")


@dataclass(frozen=True)
class JcdPriors:
    """Everything the receiver assumes about the model."""
    noise_var: float
    data_prior: Prior = QPSK
    channel_var: float = 1.0


@dataclass
class GampState:
    # (n, t)
    p_hat: np.ndarray
    v_p: np.ndarray
    p_bar: np.ndarray
    v_p_bar: np.ndarray
    z_hat: np.ndarray
    v_z: np.ndarray
    s_hat: np.ndarray
    v_s: np.ndarray
    # (k, t) over all columns; pilot columns hold the known symbols, zero variance
    x_hat: np.ndarray
    v_x: np.ndarray
    r_hat: np.ndarray
    v_r: np.ndarray
    # (n, k), scaled channel A = H / sqrt(K)
    h_hat: np.ndarray
    v_h: np.ndarray
    q_hat: np.ndarray
    v_q: np.ndarray
    iteration: int = 0
    degenerate: int = 0


@dataclass
class JcdResult:
    h_hat: np.ndarray
    x_hat_data: np.ndarray
    v_h: np.ndarray
    v_x: np.ndarray
    iterations_used: int
    converged: bool
    trace: list = field(default_factory=list)
    diverged: bool = False
    diverged_at: Optional[int] = None


def init_state(dims, cfg, rng=None, channel_var=1.0, x_pilot=None):
    """Algorithm initialization: zero means, unit (channel-scale) variances.

    ``random-small`` additionally draws the channel mean from
    ``CN(0, 1e-2 * sigma_h^2 / K)``.
    """
    N, K, Tt, T = dims.n_rx, dims.n_users, dims.t_pilot, dims.t_total
    c = np.zeros((N, T), dtype=complex)
    o = np.ones((N, T))
    x_hat = np.zeros((K, T), dtype=complex)
    v_x = np.ones((K, T))
    if Tt:
        if x_pilot is not None:
            x_hat[:, :Tt] = x_pilot
        v_x[:, :Tt] = 0.0
    h_hat = np.zeros((N, K), dtype=complex)
    if cfg.init_mode == "random-small":
        if rng is None:
            raise ValueError("random-small init needs an rng")
        s = np.sqrt(1e-2 * channel_var / K / 2)
        h_hat = s * (rng.standard_normal((N, K)) + 1j * rng.standard_normal((N, K)))
    return GampState(
        p_hat=c.copy(), v_p=o.copy(), p_bar=c.copy(), v_p_bar=o.copy(),
        z_hat=c.copy(), v_z=o.copy(), s_hat=c.copy(), v_s=np.zeros((N, T)),
        x_hat=x_hat, v_x=v_x, r_hat=np.zeros((K, T), dtype=complex), v_r=np.ones((K, T)),
        h_hat=h_hat, v_h=np.full((N, K), channel_var / K),
        q_hat=np.zeros((N, K), dtype=complex), v_q=np.ones((N, K)),
    )


def _check(iteration, **arrays):
    for name, a in arrays.items():
        if not np.all(np.isfinite(a)):
            raise GampDivergence(iteration, name)


def _denoise_z(y, p_hat, v_p, priors, spec):
    if spec is None:
        return denoise_z_unquantized(y, p_hat, v_p, priors.noise_var)
    return denoise_z_quantized(y, p_hat, v_p, priors.noise_var, spec)


def gamp_iteration(state, y, n_pilot, priors, spec, cfg, update_x=True, update_h=True):
    """One sweep of the message-passing updates.

    ``y`` is the ``(bin_re, bin_im)`` pair of ``N x T`` bin matrices, or the
    complex ``N x T`` observation when ``spec`` is None.  Columns before
    ``n_pilot`` are pilots.
    """
    d, floor = cfg.damping, cfg.variance_floor
    it = state.iteration + 1
    H, vH = state.h_hat, state.v_h
    X, vX = state.x_hat, state.v_x
    absH2, absX2 = np.abs(H) ** 2, np.abs(X) ** 2

    # linear output step (pilot columns reduce to v^p = sum v^h |X|^2)
    v_p_bar = absH2 @ vX + vH @ absX2
    p_bar = H @ X
    v_p = np.maximum(v_p_bar + vH @ vX, floor)
    p_hat = p_bar - state.s_hat * np.where(np.arange(X.shape[1]) < n_pilot, v_p, v_p_bar)

    # output denoising
    post = _denoise_z(y, p_hat, v_p, priors, spec)
    z_hat, v_z = post.mean, np.maximum(post.variance, floor)

    # residual step
    v_s_new = np.maximum((1.0 - v_z / v_p) / v_p, floor)
    s_new = (z_hat - p_hat) / v_p
    v_s = d * v_s_new + (1 - d) * state.v_s
    s_hat = d * s_new + (1 - d) * state.s_hat
    _check(it, z_hat=z_hat, s_hat=s_hat, v_s=v_s)

    x_hat, v_x, r_hat, v_r = X, vX, state.r_hat, state.v_r
    if update_x and X.shape[1] > n_pilot:
        # Precisions are floored too, so a zero channel estimate yields the prior.
        D = slice(n_pilot, None)
        vs_d, s_d = v_s[:, D], s_hat[:, D]
        v_r = state.v_r.copy()
        r_hat = state.r_hat.copy()
        v_r[:, D] = 1.0 / np.maximum(absH2.T @ vs_d, floor)
        r_hat[:, D] = X[:, D] * (1.0 - v_r[:, D] * (vH.T @ vs_d)) + v_r[:, D] * (H.conj().T @ s_d)
        xpost = denoise_input(r_hat[:, D], v_r[:, D], priors.data_prior)
        x_hat = X.copy()
        v_x = vX.copy()
        x_hat[:, D] = d * xpost.mean + (1 - d) * X[:, D]
        v_x[:, D] = np.maximum(d * xpost.variance + (1 - d) * vX[:, D], floor)
        _check(it, x_hat=x_hat)

    h_hat, v_h, q_hat, v_q = H, vH, state.q_hat, state.v_q
    if update_h:
        if cfg.line13_literal:
            prec = v_s[:, :n_pilot] @ absX2[:, :n_pilot].T
        else:
            prec = v_s @ absX2.T
        v_q = 1.0 / np.maximum(prec, floor)
        q_hat = H * (1.0 - v_q * (v_s @ vX.T)) + v_q * (s_hat @ X.conj().T)
        hpost = denoise_gaussian(q_hat, v_q, priors.channel_var / X.shape[0])
        h_hat = d * hpost.mean + (1 - d) * H
        v_h = np.maximum(d * hpost.variance + (1 - d) * vH, floor)
        _check(it, h_hat=h_hat)

    return GampState(p_hat=p_hat, v_p=v_p, p_bar=p_bar, v_p_bar=v_p_bar, z_hat=z_hat, v_z=v_z,
                     s_hat=s_hat, v_s=v_s, x_hat=x_hat, v_x=v_x, r_hat=r_hat, v_r=v_r,
                     h_hat=h_hat, v_h=v_h, q_hat=q_hat, v_q=v_q, iteration=it,
                     degenerate=state.degenerate + post.degenerate)


def _z_change(new, old):
    den = np.sum(np.abs(old) ** 2)
    if den == 0:
        return np.inf
    return np.sum(np.abs(new - old) ** 2) / den


def _rel_change(new, old):
    num = np.sum(np.abs(new - old) ** 2)
    if num == 0:
        return 0.0
    den = np.sum(np.abs(old) ** 2)
    return num / den if den > 0 else np.inf


def _select_columns(y, cols):
    if isinstance(y, tuple):
        return tuple(b[:, cols] for b in y)
    return y[:, cols]


def _loop(state, y, n_pilot, priors, spec, cfg, trace, stage, truth, update_x, update_h):
    converged = False
    for xi in range(1, cfg.max_iters + 1):
        old_z, old_x, old_h = state.z_hat, state.x_hat, state.h_hat
        state = gamp_iteration(state, y, n_pilot, priors, spec, cfg, update_x, update_h)
        z_change = _z_change(state.z_hat, old_z)
        change = z_change
        if cfg.damping < 1:
            # At high SNR Z is pinned to the observation while damped X and H
            # are still moving, so the Z rule alone stops too early.
            change = max(change, _rel_change(state.x_hat, old_x), _rel_change(state.h_hat, old_h))
        rec = {"stage": stage, "iteration": xi, "residual": float(change), "z_change": float(z_change)}
        if truth is not None:
            rec.update(_trace_metrics(state, n_pilot, priors, truth))
        trace.append(rec)
        # The first sweep has no previous Z to normalize against.
        if xi > 1 and change <= cfg.tolerance:
            converged = True
            break
    return state, xi, converged


def _trace_metrics(state, n_pilot, priors, truth):
    h_true, x_true = truth
    K = state.h_hat.shape[1]
    out = {"mse_h": float(np.mean(np.abs(np.sqrt(K) * state.h_hat - h_true) ** 2))}
    xd = state.x_hat[:, n_pilot:]
    if xd.shape[1]:
        out["mse_xd"] = float(np.mean(np.abs(xd - x_true) ** 2))
        if isinstance(priors.data_prior, Constellation):
            cons = priors.data_prior
            out["ser"] = float(np.mean(hard_decide(xd, cons) != hard_decide(x_true, cons)))
    return out


def run_gamp_jcd(y, x_pilot, dims, priors, spec, cfg=GampConfig(), rng=None,
                 h_true=None, x_true=None):
    """Estimate the channel and the data symbols.

    ``y`` holds pilot columns first; ``h_true`` is required in perfect-CSIR
    mode and, together with ``x_true`` (data columns only), enables the
    per-iteration mse/SER trace.
    """
    N, K, Tt, Td = dims.n_rx, dims.n_users, dims.t_pilot, dims.t_data
    if x_pilot is None:
        x_pilot = np.zeros((K, 0), dtype=complex)
    x_pilot = np.asarray(x_pilot)
    if x_pilot.shape != (K, Tt):
        raise ValueError(f"x_pilot must be {K}x{Tt}, got {x_pilot.shape}")
    if not np.all(np.isfinite(x_pilot)):
        raise ValueError("pilot entries must be finite")
    shape = (y[0] if isinstance(y, tuple) else y).shape
    if shape != (N, dims.t_total):
        raise ValueError(f"observation must be {N}x{dims.t_total}, got {shape}")
    truth = None
    if h_true is not None and x_true is not None:
        truth = (h_true, x_true)

    trace = []
    state = init_state(dims, cfg, rng, priors.channel_var, x_pilot)
    diverged_at = None
    mode = cfg.mode
    try:
        if mode == "perfect-csir":
            if h_true is None:
                raise ValueError("perfect-csir mode needs h_true")
            data = slice(Tt, None)
            sub = replace(dims, t_pilot=0)
            state = init_state(sub, cfg, rng, priors.channel_var)
            state.h_hat = np.asarray(h_true) / np.sqrt(K)
            state.v_h = np.zeros((N, K))
            state, used, converged = _loop(state, _select_columns(y, data), 0, priors, spec, cfg,
                                           trace, "data", truth, True, False)
        elif mode == "pilot-only":
            if Tt == 0:
                raise ValueError("pilot-only mode needs pilots")
            pil = slice(0, Tt)
            st1 = init_state(replace(dims, t_data=0), cfg, rng, priors.channel_var, x_pilot)
            st1, used1, conv1 = _loop(st1, _select_columns(y, pil), Tt, priors, spec, cfg,
                                      trace, "pilot", None, False, True)
            state, used, converged = st1, used1, conv1
            if Td:
                st2 = init_state(replace(dims, t_pilot=0), cfg, rng, priors.channel_var)
                st2.h_hat, st2.v_h = st1.h_hat, st1.v_h
                truth2 = truth
                state, used2, conv2 = _loop(st2, _select_columns(y, slice(Tt, None)), 0, priors, spec,
                                            cfg, trace, "data", truth2, True, False)
                used, converged = max(used1, used2), conv1 and conv2
        else:
            state, used, converged = _loop(state, y, Tt, priors, spec, cfg, trace, "joint",
                                           truth, True, True)
    except GampDivergence as exc:
        log.warning("%s", exc)
        diverged_at = exc.iteration
        used, converged = min(exc.iteration, cfg.max_iters), False

    n_pilot = state.x_hat.shape[1] - Td
    if diverged_at is not None and mode == "pilot-only" and state.x_hat.shape[1] != Td:
        # Diverged during channel estimation: no data estimate exists.
        xd, vx = np.zeros((K, Td), dtype=complex), np.full((K, Td), priors.data_prior.power)
    else:
        xd, vx = state.x_hat[:, n_pilot:], state.v_x[:, n_pilot:]
    return JcdResult(h_hat=np.sqrt(K) * state.h_hat, x_hat_data=xd.copy(), v_h=K * state.v_h,
                     v_x=vx.copy(), iterations_used=int(used), converged=bool(converged),
                     trace=trace, diverged=diverged_at is not None, diverged_at=diverged_at)


def hard_decide(x_hat, cons):
    """Index of the nearest constellation point; ties go to the smaller index."""
    if not isinstance(cons, Constellation):
        raise TypeError("hard decisions need a QAM constellation")
    x_hat = np.asarray(x_hat)
    pts = cons.points
    dist = np.abs(x_hat[..., None] - pts) ** 2
    return np.argmin(dist, axis=-1)


def measure(result, truth_h, truth_x, cons=None):
    """Per-trial mse of H and X_d and the symbol error rate."""
    truth_h, truth_x = np.asarray(truth_h), np.asarray(truth_x)
    if truth_h.shape != result.h_hat.shape or truth_x.shape != result.x_hat_data.shape:
        raise ValueError("truth shapes do not match the estimates")
    mse_h = float(np.mean(np.abs(result.h_hat - truth_h) ** 2))
    mse_x = float(np.mean(np.abs(result.x_hat_data - truth_x) ** 2)) if truth_x.size else float("nan")
    ser = float("nan")
    if cons is not None and truth_x.size:
        ser = float(np.mean(hard_decide(result.x_hat_data, cons) != hard_decide(truth_x, cons)))
    return {"mse_h": mse_h, "mse_x": mse_x, "ser": ser}
