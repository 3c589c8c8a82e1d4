"""Command-line entry point: ``quantjcd <subcommand> [options]``."""
import logging
import math
import sys

import click

from . import config as config_mod
from .config import ConfigError
from .replica import ReplicaInput, fitted_step, optimal_step_size
from .sim import SweepResult, sweep

log = logging.getLogger("quantjcd")


def _common(f):
    f = click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON experiment config.")(f)
    f = click.option("--out", type=click.Path(dir_okay=False, writable=True), help="Output file (default: stdout).")(f)
    f = click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), help="Master seed (overrides config).")(f)
    f = click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)(f)
    f = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)(f)
    f = click.option("--preset", type=click.Choice(["desk", "paper"]), help="Size preset (overrides config).")(f)
    return f


def _load(config_path, preset, seed):
    doc = config_mod.load_config(config_path) if config_path else {}
    return doc, config_mod.build(doc, preset, seed)


def _emit(result, out, fmt):
    text = result.to_csv() if fmt == "csv" else result.to_json() + "\n"
    if out:
        try:
            with open(out, "w", newline="") as f:
                f.write(text)
        except OSError as exc:
            raise click.ClickException(f"cannot write {out}: {exc.strerror}")
    else:
        click.echo(text, nl=False)


def _run(config_path, out, seed, workers, fmt, preset, simulate=True, replica=True, mode=None,
         axis=None, values=None):
    try:
        doc, (base, ax, vals, step) = _load(config_path, preset, seed)
        if mode:
            base = config_mod.with_mode(base, mode)
        if axis:
            ax, vals = axis, values
        res = sweep(base, ax, vals, workers=workers, replica=replica, simulate=simulate, step=step,
                    echo=doc)
    except (ConfigError, ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    _emit(res, out, fmt)


@click.group()
@click.option("-v", "--verbose", count=True)
def main(verbose):
    """Quantized massive-MIMO joint channel-and-data estimation experiments."""
    logging.basicConfig(level=logging.WARNING - 10 * verbose, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@_common
def simulate(config_path, out, seed, workers, fmt, preset):
    """Monte-Carlo GAMP runs with replica predictions side by side."""
    _run(config_path, out, seed, workers, fmt, preset)


@main.command()
@_common
def replica(config_path, out, seed, workers, fmt, preset):
    """Analytical curve only (no random draws)."""
    _run(config_path, out, seed, workers, fmt, preset, simulate=False)


@main.command("pilot-only")
@_common
def pilot_only(config_path, out, seed, workers, fmt, preset):
    """Two-stage receiver: pilot-only channel estimate, then detection."""
    _run(config_path, out, seed, workers, fmt, preset, mode="pilot-only")


def _parse_values(text):
    """``a:step:b`` (inclusive) or a comma list; ``inf``/``none`` allowed in lists."""
    text = text.strip()
    if ":" in text:
        try:
            a, d, b = (float(x) for x in text.split(":"))
        except ValueError:
            raise click.BadParameter(f"range must be start:step:stop, got {text!r}")
        if d <= 0 or b < a:
            raise click.BadParameter("range needs step > 0 and stop >= start")
        n = int(math.floor((b - a) / d + 1e-9)) + 1
        return [round(a + i * d, 12) for i in range(n)]
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if tok in ("inf", "none"):
            out.append(None)
            continue
        try:
            out.append(float(tok))
        except ValueError:
            raise click.BadParameter(f"not a number: {tok!r}")
    return out


@main.command("sweep")
@_common
@click.option("--axis", type=click.Choice(["snr_db", "beta_t", "bits", "step"]), required=True)
@click.option("--values", "values_text", required=True, help="start:step:stop or comma list.")
@click.option("--replica-only", is_flag=True)
def sweep_cmd(config_path, out, seed, workers, fmt, preset, axis, values_text, replica_only):
    """Sweep one axis of the base config."""
    values = _parse_values(values_text)
    _run(config_path, out, seed, workers, fmt, preset, simulate=not replica_only, axis=axis, values=values)


@main.command("step-size")
@click.option("--bits", type=click.IntRange(2, 4), required=True)
@click.option("--snr", "snr_text", default="0:5:10", show_default=True, help="start:step:stop in dB.")
@click.option("--alpha", type=float, default=4.0, show_default=True)
@click.option("--beta", type=float, default=10.0, show_default=True)
@click.option("--beta-t", type=float, default=1.0, show_default=True)
@click.option("--data-prior", type=click.Choice(list(config_mod.PRIORS) + ["gaussian"]), default="qpsk")
@click.option("--out", type=click.Path(dir_okay=False, writable=True))
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
def step_size(bits, snr_text, alpha, beta, beta_t, data_prior, out, fmt):
    """Replica search of the SER-optimal normalized step, next to the fitted law."""
    if beta < beta_t:
        raise click.BadParameter("beta must be >= beta_t")
    base = ReplicaInput(alpha, beta_t, beta - beta_t, 1.0, data_prior=config_mod.make_prior(data_prior))
    res = SweepResult(axis="snr_db", config={"bits": bits, "alpha": alpha, "beta": beta, "beta_t": beta_t})
    for snr in _parse_values(snr_text):
        r = optimal_step_size(base, bits, snr)
        res.records.append({"snr_db": snr, "delta_opt": r["delta_opt"], "fitted": fitted_step(bits, snr),
                            "difference": r["delta_opt"] - fitted_step(bits, snr), "interior": r["interior"]})
    if fmt == "json":
        _emit(res, out, "json")
        return
    lines = ["snr_db,delta_opt,fitted,difference,interior"]
    lines += [f"{r['snr_db']!r},{r['delta_opt']:.6f},{r['fitted']:.6f},{r['difference']:.6f},{int(r['interior'])}"
              for r in res.records]
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        click.echo(text, nl=False)


@main.command()
def selftest():
    """Fast end-to-end sanity checks; exit status 0 when all pass."""
    from .selftest import run_selftest
    failures = run_selftest(click.echo)
    if failures:
        raise click.ClickException(f"{failures} self-test check(s) failed")


def cli_main(argv=None):
    """Run the CLI and return its exit code instead of exiting."""
    try:
        main.main(args=argv, prog_name="quantjcd", standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        return 1
    except SystemExit as exc:
        return exc.code or 0
    return 0


if __name__ == "__main__":
    sys.exit(cli_main())
