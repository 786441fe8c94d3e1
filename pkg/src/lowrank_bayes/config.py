"""Flat ``key = value`` configuration files.

Lines starting with ``#`` and blank lines are ignored.  Unknown keys are an
error so that typos do not silently fall back to defaults.
"""

import os

from .errors import ConfigError, ParseError


def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _seed(v):
    s = int(str(v), 0)
    if not 0 <= s < 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return s


def _int_list(v):
    return [int(x) for x in str(v).replace(";", ",").split(",") if x.strip()]


# key -> (parser, default)
SCHEMA = {
    "seed": (_seed, 0),
    "series": (str, "1"),
    "m": (int, 100),
    "observe_fraction": (float, 0.2),
    "replications": (int, 4),
    "estimator": (str, "both"),
    "lambda_mode": (str, "experiment"),
    "workers": (int, None),
    # uniform prior; tau defaults per series when left unset
    "L": (float, 50.0),
    "K": (int, 5),
    "tau": (float, None),
    "kappa": (float, 0.0),
    # conjugate prior
    "a": (float, 1.0),
    "b": (float, 0.01),
    # sampler
    "burn_in": (int, 500),
    "iterations": (int, 2000),
    "thin": (int, 1),
    "inner_sweeps": (int, 2),
    # noise constants for lambda* and the bound
    "sigma": (float, 1.0),
    "xi": (float, 1.0),
    # simulation conventions
    "gaussian_param_is_variance": (_bool, True),
    "without_replacement": (_bool, False),
    "monitored_entries": (int, 4),
    # bound evaluation
    "n": (int, None),
    "p": (int, None),
    "rank": (int, 2),
    "epsilon": (float, 0.05),
    "approx_error": (float, 0.0),
    "n_grid": (_int_list, None),
    "log_term": (str, "sharp"),
    # acf
    "max_lag": (int, 50),
}


def defaults():
    return {k: d for k, (_, d) in SCHEMA.items()}


def coerce(key, value):
    if key not in SCHEMA:
        raise ConfigError(f"unknown configuration key {key!r}")
    parser = SCHEMA[key][0]
    try:
        return parser(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from None


def read_config(path):
    """Parse a config file into a dict of typed values (only keys present)."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            if "=" not in s:
                raise ParseError("expected 'key = value'", lineno, path)
            key, value = (x.strip() for x in s.split("=", 1))
            if key not in SCHEMA:
                raise ParseError(f"unknown configuration key {key!r}", lineno, path)
            try:
                out[key] = SCHEMA[key][0](value)
            except (TypeError, ValueError) as exc:
                raise ParseError(f"bad value for {key!r}: {exc}", lineno, path) from None
    return out


def resolve(path=None, overrides=None):
    """Defaults, then the file at ``path``, then non-None ``overrides``."""
    cfg = defaults()
    if path:
        cfg.update(read_config(path))
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = coerce(k, v) if isinstance(v, str) and SCHEMA[k][0] is not str else v
    if cfg["workers"] is None:
        cfg["workers"] = os.cpu_count() or 1
    return cfg


def dump(cfg):
    """Render a resolved config back into the file format (sorted keys)."""
    lines = []
    for k in sorted(cfg):
        v = cfg[k]
        if v is None:
            continue
        if isinstance(v, list):
            v = ",".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
