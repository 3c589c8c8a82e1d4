"""Monte-Carlo experiment driver.

Every trial draws from its own generator keyed by ``(seed, trial index)``, so a
trial is reproducible on its own and results do not depend on how trials are
scheduled across workers.
"""
import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .denoisers import QPSK, Constellation, Prior
from .gamp import GampConfig, JcdPriors, SystemDims, measure, run_gamp_jcd
from .quantizer import QuantizerSpec, make_uniform_quantizer, quantize_complex, quantize_complex_bins
from .replica import ReplicaInput, fitted_step, predict_performance

log = logging.getLogger(__name__)

AXES = ("snr_db", "beta_t", "bits", "step")
CSV_COLUMNS = ("axis_value", "mse_h_db_sim", "mse_h_db_se", "mse_xd_db_sim", "mse_xd_db_se",
               "ser_sim", "ser_se", "mse_h_db_replica", "mse_xd_db_replica", "ser_replica",
               "trials", "mean_iters", "diverged")


@dataclass(frozen=True)
class TrialConfig:
    dims: SystemDims
    snr_db: float
    spec: Optional[QuantizerSpec] = None
    data_prior: Prior = QPSK
    pilot_constellation: Constellation = QPSK
    channel_var: float = 1.0
    gamp: GampConfig = GampConfig()
    trials: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")

    @property
    def noise_var(self):
        return 10.0 ** (-self.snr_db / 10.0)


def trial_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _complex_normal(rng, shape, var):
    s = math.sqrt(var / 2)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def generate_trial(cfg, rng):
    """Draw one realization of ``Y = H X / sqrt(K) + W`` and its quantization."""
    d = cfg.dims
    H = _complex_normal(rng, (d.n_rx, d.n_users), cfg.channel_var)
    X_t = cfg.pilot_constellation.sample(rng, (d.n_users, d.t_pilot))
    X_d = cfg.data_prior.sample(rng, (d.n_users, d.t_data))
    W = _complex_normal(rng, (d.n_rx, d.t_total), cfg.noise_var)
    X = np.concatenate([X_t, X_d], axis=1)
    Y = H @ X / math.sqrt(d.n_users) + W
    Yq = Y if cfg.spec is None else quantize_complex(Y, cfg.spec)
    return {"H": H, "X_t": X_t, "X_d": X_d, "W": W, "Y": Y, "Y_quantized": Yq}


def run_trial(cfg, index):
    """Generate, estimate and score trial ``index``."""
    rng = trial_rng(cfg.seed, index)
    t = generate_trial(cfg, rng)
    y = t["Y"] if cfg.spec is None else quantize_complex_bins(t["Y"], cfg.spec)
    priors = JcdPriors(cfg.noise_var, cfg.data_prior, cfg.channel_var)
    res = run_gamp_jcd(y, t["X_t"], cfg.dims, priors, cfg.spec, cfg.gamp, rng, h_true=t["H"])
    cons = cfg.data_prior if isinstance(cfg.data_prior, Constellation) else None
    m = measure(res, t["H"], t["X_d"], cons)
    return {"index": index, "mse_h": m["mse_h"], "mse_xd": m["mse_x"], "ser": m["ser"],
            "iterations": res.iterations_used, "converged": res.converged, "diverged": res.diverged}


def _run_chunk(args):
    cfg, indices = args
    return [run_trial(cfg, i) for i in indices]


def run_trials(cfg, workers=1):
    """Per-trial records ordered by trial index."""
    idx = list(range(cfg.trials))
    if workers <= 1 or cfg.trials == 1:
        return [run_trial(cfg, i) for i in idx]
    chunks = [(cfg, idx[w::workers]) for w in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        out = [r for part in ex.map(_run_chunk, chunks) for r in part]
    return sorted(out, key=lambda r: r["index"])


def _db(x):
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return float(v.mean()), se


def _db_mean_se(values):
    # Delta method: d(10 log10 m) = 10 / ln(10) * dm / m.
    m, se = _mean_se(values)
    if not m > 0:
        return _db(m) if m == m else math.nan, math.nan
    return _db(m), 10.0 / math.log(10.0) * se / m


def aggregate(records):
    """Fold per-trial records (already in index order) into one result row."""
    ok = [r for r in records if not r["diverged"]]
    mh, mh_se = _db_mean_se([r["mse_h"] for r in ok])
    mx, mx_se = _db_mean_se([r["mse_xd"] for r in ok])
    ser, ser_se = _mean_se([r["ser"] for r in ok])
    return {"mse_h_db_sim": mh, "mse_h_db_se": mh_se, "mse_xd_db_sim": mx, "mse_xd_db_se": mx_se,
            "ser_sim": ser, "ser_se": ser_se, "trials": len(records),
            "mean_iters": float(np.mean([r["iterations"] for r in records])),
            "converged_rate": float(np.mean([r["converged"] for r in records])),
            "diverged": len(records) - len(ok)}


def replica_input(cfg):
    d = cfg.dims
    return ReplicaInput(alpha=d.alpha, beta_t=d.beta_t, beta_d=d.beta_d, noise_var=cfg.noise_var,
                        spec=cfg.spec, data_prior=cfg.data_prior, channel_var=cfg.channel_var,
                        pilot_power=cfg.pilot_constellation.power)


def replica_point(cfg):
    p = predict_performance(replica_input(cfg), cfg.gamp.mode)
    return {"mse_h_db_replica": _db(p["mse_h"]) if p["mse_h"] > 0 else -math.inf,
            "mse_xd_db_replica": _db(p["mse_xd"]), "ser_replica": p["ser"]}


def _empty_sim():
    row = {k: math.nan for k in ("mse_h_db_sim", "mse_h_db_se", "mse_xd_db_sim", "mse_xd_db_se",
                                  "ser_sim", "ser_se", "mean_iters", "converged_rate")}
    row.update(trials=0, diverged=0)
    return row


@dataclass
class SweepResult:
    axis: str
    records: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([_fmt(r.get(c, math.nan)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_json(self):
        body = {"axis": self.axis, "config": self.config,
                "records": [{k: _json_num(v) for k, v in r.items()} for r in self.records]}
        return json.dumps(body, indent=2, sort_keys=True)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return repr(float(v))


def _json_num(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if v != v else ("inf" if v > 0 else "-inf")
    if isinstance(v, np.generic):
        return v.item()
    return v


def monte_carlo(cfg, workers=1, replica=True, simulate=True):
    """One sweep point: Monte-Carlo statistics next to the replica prediction."""
    row = aggregate(run_trials(cfg, workers)) if simulate else _empty_sim()
    if replica:
        try:
            row.update(replica_point(cfg))
        except Exception as exc:  # recorded, the sweep goes on
            log.warning("replica prediction failed: %s", exc)
            row.update(mse_h_db_replica=math.nan, mse_xd_db_replica=math.nan, ser_replica=math.nan)
    else:
        row.update(mse_h_db_replica=math.nan, mse_xd_db_replica=math.nan, ser_replica=math.nan)
    return row


def auto_step(bits, snr_db, channel_var=1.0, data_power=1.0):
    """Step size from the fitted optimal-step law; B=1 is step-invariant."""
    if bits == 1:
        return 1.0
    scale = math.sqrt(channel_var * data_power + 10 ** (-snr_db / 10))
    return fitted_step(bits, snr_db) * scale


def point_config(base, axis, value, step=None):
    """Apply one axis value to ``base``.  ``step`` is the configured step
    (a number or ``"auto"``) and is re-resolved whenever the SNR or B moves."""
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    cfg = base
    if axis == "snr_db":
        cfg = replace(cfg, snr_db=float(value))
    elif axis == "beta_t":
        t_pilot = int(round(float(value) * cfg.dims.n_users))
        cfg = replace(cfg, dims=replace(cfg.dims, t_pilot=t_pilot))
    elif axis == "bits":
        if value is None or value in ("inf", "none"):
            return replace(cfg, spec=None)
        bits = int(value)
        s = step if step is not None else (cfg.spec.step if cfg.spec else "auto")
        if s == "auto":
            s = auto_step(bits, cfg.snr_db, cfg.channel_var, cfg.data_prior.power)
        return replace(cfg, spec=make_uniform_quantizer(bits, s))
    elif axis == "step":
        if cfg.spec is None:
            raise ValueError("a step sweep needs a quantizer")
        return replace(cfg, spec=make_uniform_quantizer(cfg.spec.bits, float(value)))
    if step == "auto" and cfg.spec is not None:
        cfg = replace(cfg, spec=make_uniform_quantizer(
            cfg.spec.bits, auto_step(cfg.spec.bits, cfg.snr_db, cfg.channel_var, cfg.data_prior.power)))
    return cfg


def sweep(base, axis, values, workers=1, replica=True, simulate=True, step=None, echo=None):
    result = SweepResult(axis=axis, config=echo or {})
    for v in values:
        row = {"axis_value": float("inf") if v is None else float(v) if not isinstance(v, str) else float("inf")}
        try:
            cfg = point_config(base, axis, v, step)
            row.update(monte_carlo(cfg, workers, replica, simulate))
        except Exception as exc:
            log.error("sweep point %s=%r failed: %s", axis, v, exc)
            row.update(_empty_sim())
            row.update(error=str(exc))
        result.records.append(row)
    return result
