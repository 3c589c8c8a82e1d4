"""JSON experiment configuration.

SNR is in dB, variances are linear.  Unknown keys are rejected anywhere in the
document.  Example::

    {
      "preset": "desk",
      "snr_db": [0, 2, 4, 6, 8, 10],
      "data_prior": "qpsk",
      "quantizer": {"bits": 3, "step": 0.5},
      "gamp": {"mode": "jcd", "max_iters": 100},
      "trials": 500,
      "seed": 1
    }

``quantizer.bits = null`` selects the ideal (unquantized) receiver and
``quantizer.step = "auto"`` uses the fitted optimal normalized step.
"""
import json
from dataclasses import replace

import jsonschema

from .denoisers import QPSK, Constellation, GaussianPrior
from .gamp import GAMP_MODES, INIT_MODES, GampConfig, SystemDims
from .quantizer import make_uniform_quantizer
from .sim import AXES, TrialConfig, auto_step

PRESETS = {
    "desk": {"n_rx": 64, "n_users": 16, "t_pilot": 16, "t_data": 144, "trials": 500},
    "paper": {"n_rx": 200, "n_users": 50, "t_pilot": 50, "t_data": 450, "trials": 10_000},
}

PRIORS = {"qpsk": 4, "qam16": 16, "qam64": 64, "qam256": 256}

_num = {"type": "number"}
SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"enum": list(PRESETS)},
        "n_rx": {"type": "integer", "minimum": 1},
        "n_users": {"type": "integer", "minimum": 1},
        "t_pilot": {"type": "integer", "minimum": 0},
        "t_data": {"type": "integer", "minimum": 0},
        "snr_db": {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1}]},
        "channel_var": {"type": "number", "exclusiveMinimum": 0},
        "data_power": {"type": "number", "exclusiveMinimum": 0},
        "data_prior": {"enum": list(PRIORS) + ["gaussian"]},
        "quantizer": {
            "type": "object",
            "additionalProperties": False,
            "required": ["bits"],
            "properties": {
                "bits": {"oneOf": [{"type": "integer", "minimum": 1, "maximum": 24}, {"type": "null"}]},
                "step": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "auto"}]},
            },
        },
        "gamp": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
                "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "variance_floor": {"type": "number", "exclusiveMinimum": 0},
                "init_mode": {"enum": list(INIT_MODES)},
                "mode": {"enum": list(GAMP_MODES)},
                "line13_literal": {"type": "boolean"},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["axis", "values"],
            "properties": {
                "axis": {"enum": list(AXES)},
                "values": {"type": "array", "minItems": 1,
                           "items": {"oneOf": [_num, {"type": "null"}, {"enum": ["inf", "none"]}]}},
            },
        },
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
    },
}


class ConfigError(ValueError):
    pass


def validate(doc):
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    return doc


def load_config(path):
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON: {exc}") from None
    return validate(doc)


def make_prior(name, power=1.0):
    if name == "gaussian":
        return GaussianPrior(power)
    return Constellation.qam(PRIORS[name], power)


def build(doc, preset=None, seed=None):
    """Turn a validated document into ``(base TrialConfig, axis, values, step)``.

    Precedence: explicit flags, then document keys, then the preset.
    """
    doc = validate(dict(doc))
    merged = dict(PRESETS[preset or doc.get("preset", "desk")])
    merged.update({k: v for k, v in doc.items() if k != "preset"})
    if seed is not None:
        merged["seed"] = seed

    dims = SystemDims(merged["n_rx"], merged["n_users"], merged["t_pilot"], merged["t_data"])
    snr = merged.get("snr_db", 10.0)
    snrs = snr if isinstance(snr, list) else [snr]
    prior = make_prior(merged.get("data_prior", "qpsk"), merged.get("data_power", 1.0))
    channel_var = merged.get("channel_var", 1.0)
    gamp = GampConfig(**merged.get("gamp", {}))

    q = merged.get("quantizer", {"bits": None})
    step = q.get("step", "auto")
    spec = None
    if q["bits"] is not None:
        if step == "auto" and q["bits"] not in (1, 2, 3, 4):
            raise ConfigError('quantizer.step "auto" is only available for 1 to 4 bits')
        s = auto_step(q["bits"], snrs[0], channel_var, prior.power) if step == "auto" else step
        spec = make_uniform_quantizer(q["bits"], s)

    base = TrialConfig(dims=dims, snr_db=float(snrs[0]), spec=spec, data_prior=prior,
                       pilot_constellation=QPSK, channel_var=channel_var, gamp=gamp,
                       trials=merged["trials"], seed=merged.get("seed", 0))
    if "sweep" in merged:
        axis, values = merged["sweep"]["axis"], merged["sweep"]["values"]
    else:
        axis, values = "snr_db", snrs
    return base, axis, values, step


def with_mode(base, mode):
    return replace(base, gamp=replace(base.gamp, mode=mode))
