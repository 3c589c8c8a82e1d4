"""Acceptance criteria, one test each.  Every test records a PASS/FAIL line
that is repeated in the terminal summary."""
import dataclasses

import numpy as np
import pytest
from scipy import optimize

from quantjcd.denoisers import QPSK, denoise_z_quantized
from quantjcd.gamp import GampConfig, JcdPriors, JcdResult, SystemDims, measure, run_gamp_jcd
from quantjcd.quantizer import make_uniform_quantizer, quantize_complex_bins
from quantjcd.replica import (HIGH_SNR_CB_DB, ReplicaInput, high_snr_mse_db, fitted_step, free_entropy_terms,
                              high_snr_cb, optimal_step_size, predict_performance, solve_fixed_point,
                              cb_reference_step)
from quantjcd.sim import TrialConfig, generate_trial, monte_carlo, trial_rng

from oracles import component_oracle, exact_symbol_posterior

DESK = SystemDims(64, 16, 16, 144)


def _db(x):
    return 10 * np.log10(x)


def test_01_denoiser_oracle(report):
    rng = np.random.default_rng(2024)
    worst_m = worst_v = 0.0
    for _ in range(1000):
        bits = int(rng.integers(1, 4))
        spec = make_uniform_quantizer(bits, rng.uniform(0.1, 1.0))
        p = complex(rng.uniform(-3, 3), rng.uniform(-3, 3))
        vp, nv = rng.uniform(0.01, 4), rng.uniform(0.01, 2)
        b = rng.integers(1, spec.n_bins + 1, size=2)
        post = denoise_z_quantized((b[:1], b[1:]), np.array([p]), np.array([vp]), nv, spec)
        th = spec.thresholds
        m_re, v_re = component_oracle(th[b[0] - 1], th[b[0]], p.real, vp, nv)
        m_im, v_im = component_oracle(th[b[1] - 1], th[b[1]], p.imag, vp, nv)
        worst_m = max(worst_m, abs(post.mean[0] - (m_re + 1j * m_im)))
        worst_v = max(worst_v, abs(post.variance[0] - (v_re + v_im)))
    report(1, "scalar denoiser vs quadrature oracle", worst_m < 1e-7 and worst_v < 1e-7,
           f"max |mean err| {worst_m:.1e}, max |var err| {worst_v:.1e} over 1000 inputs (tol 1e-7)")


def test_02_high_snr_constants(report):
    errs = {b: high_snr_cb(make_uniform_quantizer(b, cb_reference_step(b))) - HIGH_SNR_CB_DB[b] for b in range(1, 8)}
    bad = {b: round(e, 4) for b, e in errs.items() if abs(e) > 0.01}
    report(2, "high-SNR channel-MSE constants", not bad,
           "errors (dB) " + ", ".join(f"B{b} {e:+.4f}" for b, e in errs.items())
           + (f"; outside 0.01 dB: {sorted(bad)}" if bad else ""))


def test_03_slope_law(report):
    bad, notes = [], []
    for bits in (1, 2, 3, 4):
        spec = make_uniform_quantizer(bits, cb_reference_step(bits))
        cb = high_snr_cb(spec)
        mse = [_db(solve_fixed_point(ReplicaInput(4, bt, 0, 1e-8, spec), "pilot-only").mse_h)
               for bt in (4, 8, 16, 32)]
        steps = np.diff(mse)
        dev = [m - high_snr_mse_db(bt, cb) for m, bt in zip(mse, (4, 8, 16, 32))]
        if np.any(np.abs(steps + 6.02) > 0.1) or np.any(np.abs(dev) > 0.25):
            bad.append(bits)
        notes.append(f"B{bits} steps {np.round(steps, 2).tolist()} max|dev| {max(map(abs, dev)):.2f}")
    report(3, "high-SNR slope law", not bad, "; ".join(notes) + (f"; failing B {bad}" if bad else ""))


@pytest.mark.slow
def test_04_replica_vs_monte_carlo(report):
    spec = make_uniform_quantizer(3, 0.5)
    ok, notes = True, []
    for snr in (6.0, 8.0, 10.0):
        cfg = TrialConfig(DESK, snr, spec=spec, trials=2000, seed=4)
        row = monte_carlo(cfg)
        ser_tol = max(3 * row["ser_se"], 0.15 * row["ser_replica"])
        ser_ok = abs(row["ser_sim"] - row["ser_replica"]) <= ser_tol
        mse_ok = abs(row["mse_h_db_sim"] - row["mse_h_db_replica"]) <= 0.5
        ok &= ser_ok and mse_ok
        notes.append(f"{snr:g} dB: ser {row['ser_sim']:.2e}+-{row['ser_se']:.1e} vs {row['ser_replica']:.2e}"
                     f" [{'ok' if ser_ok else 'off'}], mse_h {row['mse_h_db_sim']:.2f} vs "
                     f"{row['mse_h_db_replica']:.2f} dB [{'ok' if mse_ok else 'off'}]")
    report(4, "replica vs Monte-Carlo (desk scale)", ok, "; ".join(notes))


def _snr_at_ser(spec, mode, target=1e-3, lo=-5.0, hi=25.0):
    def f(snr):
        inp = ReplicaInput(4, 0 if mode == "perfect-csir" else 1, 9, 10 ** (-snr / 10), spec)
        return np.log10(predict_performance(inp, mode)["ser"]) - np.log10(target)
    grid = np.arange(lo, hi + 1e-9, 1.0)
    vals = [f(s) for s in grid]
    i = next(k for k in range(len(grid) - 1) if vals[k] > 0 >= vals[k + 1])
    return optimize.brentq(f, grid[i], grid[i + 1], xtol=1e-4)


def test_05_quantization_loss(report):
    specs = {"inf": None, "B3": make_uniform_quantizer(3, 0.5), "B2": make_uniform_quantizer(2, 0.5),
             "B1": make_uniform_quantizer(1, 0.5)}
    snr = {k: _snr_at_ser(s, "jcd") for k, s in specs.items()}
    p3, p2 = snr["B3"] - snr["inf"], snr["B2"] - snr["inf"]
    order = snr["inf"] < snr["B3"] < snr["B2"] < snr["B1"]
    ok = order and 1.0 <= p3 <= 1.7 and 2.3 <= p2 <= 3.6
    ref = _snr_at_ser(None, "perfect-csir")
    report(5, "quantization loss ordering", ok,
           "SNR@1e-3 " + ", ".join(f"{k} {v:.2f}" for k, v in snr.items())
           + f" dB; penalties B3 {p3:.2f} (1.0-1.7), B2 {p2:.2f} (2.3-3.6); ordered {order}"
           + f"; vs perfect-CSIR unquantized ({ref:.2f} dB): B3 {snr['B3'] - ref:.2f}, B2 {snr['B2'] - ref:.2f}")


def _identical(a, b):
    for f in dataclasses.fields(JcdResult):
        va, vb = getattr(a, f.name), getattr(b, f.name)
        same = np.array_equal(va, vb) if isinstance(va, np.ndarray) else va == vb
        if not same:
            return False
    return True


def test_06_one_bit_step_invariance(report):
    mismatches = 0
    for seed in range(5):
        cfg = TrialConfig(DESK, 6.0, trials=1, seed=seed)
        t = generate_trial(cfg, trial_rng(seed, 0))
        priors = JcdPriors(cfg.noise_var)
        runs = []
        for step in (0.25, 0.5, 1.0):
            spec = make_uniform_quantizer(1, step)
            runs.append(run_gamp_jcd(quantize_complex_bins(t["Y"], spec), t["X_t"], DESK, priors, spec,
                                     h_true=t["H"], x_true=t["X_d"]))
        mismatches += not (_identical(runs[0], runs[1]) and _identical(runs[0], runs[2]))
    report(6, "B=1 step-size invariance", mismatches == 0,
           f"{mismatches} of 5 desk-scale trials differ across steps 0.25, 0.5, 1.0")


def test_07_unquantized_limit(report):
    spec = make_uniform_quantizer(16, 2.0 ** -8)
    gaps = []
    for seed in range(50):
        cfg = TrialConfig(DESK, 8.0, spec=spec, trials=1, seed=seed)
        t = generate_trial(cfg, trial_rng(seed, 0))
        priors = JcdPriors(cfg.noise_var)
        q = run_gamp_jcd(quantize_complex_bins(t["Y"], spec), t["X_t"], DESK, priors, spec)
        u = run_gamp_jcd(t["Y"], t["X_t"], DESK, priors, None)
        gaps.append(abs(measure(q, t["H"], t["X_d"])["mse_x"] - measure(u, t["H"], t["X_d"])["mse_x"]))
    report(7, "unquantized-limit collapse", max(gaps) < 1e-3,
           f"max |mse_xd gap| {max(gaps):.1e} over 50 desk-scale trials (tol 1e-3)")


def test_08_step_size_law(report):
    base = ReplicaInput(4, 1, 9, 1.0)
    worst, notes = 0.0, []
    for bits in (2, 3, 4):
        for snr in (0.0, 5.0, 10.0):
            d = optimal_step_size(base, bits, snr)["delta_opt"] - fitted_step(bits, snr)
            worst = max(worst, abs(d))
            notes.append(f"B{bits}@{snr:g}dB {d:+.3f}")
    report(8, "fitted step-size law", worst <= 0.05, f"max |diff| {worst:.3f}; " + ", ".join(notes))


def test_09_exact_posterior(report):
    dims = SystemDims(16, 2, 0, 1)
    spec = make_uniform_quantizer(2, 0.5)
    gaps = []
    for seed in range(200):
        cfg = TrialConfig(dims, 5.0, spec=spec, trials=1, seed=seed)
        t = generate_trial(cfg, trial_rng(seed, 0))
        y = quantize_complex_bins(t["Y"], spec)
        res = run_gamp_jcd(y, t["X_t"], dims, JcdPriors(cfg.noise_var), spec,
                           GampConfig(mode="perfect-csir"), h_true=t["H"])
        exact = exact_symbol_posterior(y[0][:, 0], y[1][:, 0], t["H"], cfg.noise_var, spec, QPSK.points)
        gaps.append(np.mean(np.abs(res.x_hat_data[:, 0] - exact)))
    report(9, "tiny-instance exact posterior", np.mean(gaps) < 0.05,
           f"mean |GAMP - exact| {np.mean(gaps):.4f} over 200 trials at 5 dB (tol 0.05)")


def _saddle_gradient(sol, inp, h=1e-6):
    x0 = np.array([sol.q_h, sol.q_xd, sol.qt_h, sol.qt_xd])
    grad = []
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        grad.append((free_entropy_terms(*(x0 + e), inp) - free_entropy_terms(*(x0 - e), inp)) / (2 * h))
    return np.array(grad)


def test_10_residual_and_saddle(report):
    worst_r = worst_g = 0.0
    unconverged = 0
    for bits in (1, 2, 3, None):
        spec = None if bits is None else make_uniform_quantizer(bits, 0.5)
        for snr in (0, 5, 10):
            inp = ReplicaInput(4, 1, 9, 10 ** (-snr / 10), spec)
            for mode in ("jcd", "perfect-csir", "pilot-only"):
                sol = solve_fixed_point(inp, mode)
                unconverged += not sol.converged
                worst_r = max(worst_r, sol.residual)
                if mode == "jcd":
                    worst_g = max(worst_g, np.max(np.abs(_saddle_gradient(sol, inp))))
    report(10, "fixed-point residual and saddle", worst_r < 1e-10 and worst_g < 1e-6 and not unconverged,
           f"max residual {worst_r:.1e} (tol 1e-10), max |dF/dq| {worst_g:.1e} (tol 1e-6), "
           f"{unconverged} unconverged over 36 solves")


def test_11_jcd_gain(report):
    spec = make_uniform_quantizer(1, 1.0)
    snrs = np.arange(-10, 31, 2.5)
    jcd, pil = [], []
    for snr in snrs:
        inp = ReplicaInput(4, 1, 9, 10 ** (-snr / 10), spec)
        jcd.append(_db(solve_fixed_point(inp, "jcd").mse_xd))
        pil.append(_db(solve_fixed_point(inp, "pilot-only").mse_xd))
    gain = np.array(pil) - np.array(jcd)
    mid = (snrs >= 0) & (snrs <= 20)
    ok = np.all(gain >= -1e-9) and gain[mid].max() >= 1.0
    report(11, "JCD gain over pilot-only (B=1)", ok,
           f"min gain {gain.min():.3f} dB, max mid-SNR gain {gain[mid].max():.2f} dB at "
           f"{snrs[mid][np.argmax(gain[mid])]:g} dB")
