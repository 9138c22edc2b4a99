"""Experiment configuration: TOML files, presets and environment overrides.

Grammar
-------
A config is a TOML document. Top-level keys: ``experiment`` and ``preset``.
Every other setting lives in one of the sections listed in :data:`SCHEMA`;
unknown sections or keys are rejected with the offending line number.

Precedence (later wins): built-in defaults, the named preset, the file,
environment variables, command-line flags. An environment variable
``OCTBEC_<SECTION>__<KEY>`` overrides ``[section] key`` (e.g.
``OCTBEC_GRID__N_T=1000``); ``OCTBEC_EXPERIMENT`` overrides the top-level key.
Values are parsed as TOML literals, falling back to plain strings.
"""

from __future__ import annotations

import copy
import os
import re
import sys

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("groundstate", "propagate", "optimize", "optimize_spatial", "sweep", "wigner")
ENV_PREFIX = "OCTBEC_"

_NUM = (int, float)
_OPT_NUM = (int, float, type(None))

# section -> key -> (accepted types, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "grid": {
        "x_min": (_NUM, -10.0),
        "x_max": (_NUM, 10.0),
        "n_x": (int, 500),
        "y_min": (_OPT_NUM, None),
        "y_max": (_OPT_NUM, None),
        "n_y": ((int, type(None)), None),
        "t_final": (_NUM, 9.0),
        "n_t": (int, 500),
        "time_unit": (str, "dimensionless"),
    },
    "potential": {
        "family": (str, "shifted_harmonic"),
        "x0": (_NUM, 5.0),
        "eta": (_NUM, 0.2),
        "d": (_NUM, 6.0),
        "base": (str, "double_well"),
        "omega_y": (_NUM, 1.0),
        "y0": (_NUM, 2.0),
        "omega": (_NUM, 1.0),
        "offset_coefficients": (list, []),
        "subtract_offset": (bool, False),
        "file": (str, ""),
        "wire_spacing": (_NUM, 20.0),
        "bias_field": (_OPT_NUM, None),
        "ioffe_field": (_NUM, 1.0),
        "current_ext_base": (_NUM, 140.0),
        "current_ext_slope": (_NUM, 2.91),
        "current_c_base": (_NUM, 0.25),
        "current_c_slope": (_NUM, 4.4),
        "atom_state_moment": (_NUM, 1.0),
        "trap_height": (_OPT_NUM, None),
    },
    "states": {
        "initial": (str, "groundstate"),
        "desired": (str, "groundstate"),
        "initial_lambda": (_NUM, 0.0),
        "desired_lambda": (_NUM, 1.0),
        "packet_center": (_NUM, -8.0),
        "packet_width": (_NUM, 1.5),
        "packet_momentum": (_NUM, 4.0),
    },
    "control": {
        "initial": (str, "linear"),
        "file": (str, ""),
    },
    "solver": {
        "scheme": (str, "auto"),
        "g": (_NUM, 0.0),
        "storage": (str, "full"),
        "stride": (int, 16),
        "groundstate_tol": (_NUM, 1e-10),
        "groundstate_max_steps": (int, 100000),
    },
    "oct": {
        "enabled": (bool, True),
        "gamma": (_NUM, 1e-3),
        "optimizer": (str, "bfgs"),
        "max_iterations": (int, 500),
        "gradient_tolerance": (_NUM, 1e-6),
        "cost_target": (_NUM, 1e-4),
        "memory": (int, 20),
        "max_backtracks": (int, 40),
    },
    "spatial": {
        "region_start": (_NUM, 0.0),
        "region_stop": (_NUM, 10.0),
    },
    "sweep": {
        "t_values": (list, []),
        "t_start": (_OPT_NUM, None),
        "t_stop": (_OPT_NUM, None),
        "t_step": (_OPT_NUM, None),
        "kappa_values": (list, []),
    },
    "wigner": {
        "snapshot": (str, "final"),
        "stride": (int, 0),
    },
    "output": {
        "directory": (str, "octbec_out"),
        "artifacts": (list, ["cost", "control", "history", "final_state", "observables"]),
    },
}

TOP_LEVEL = {"experiment": str, "preset": str}
REQUIRED_SECTIONS = ("grid", "potential")

CHOICES = {
    ("grid", "time_unit"): ("dimensionless", "ms"),
    ("potential", "family"): (
        "shifted_harmonic", "shifted_harmonic_quartic", "double_well", "three_wire_trap",
        "tabulated", "separable_2d", "shifting_channel",
    ),
    ("potential", "base"): ("shifted_harmonic", "shifted_harmonic_quartic", "double_well"),
    ("states", "initial"): ("groundstate", "packet"),
    ("states", "desired"): ("groundstate", "packet"),
    ("control", "initial"): ("linear", "square_root", "file"),
    ("solver", "scheme"): ("auto", "crank_nicolson_1d", "split_operator", "split_operator_nonlinear"),
    ("solver", "storage"): ("full", "strided"),
    ("oct", "optimizer"): ("bfgs", "gradient_descent"),
    ("wigner", "snapshot"): ("initial", "desired", "final", "integrated"),
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the key and, when known, the line."""


def _line_of(text: str | None, section: str | None, key: str) -> int | None:
    if not text:
        return None
    current = None
    key_re = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.match(r"^\[\s*([^\]]+?)\s*\]", stripped)
        if m:
            current = m.group(1)
            if section is not None and current == section and key == "":
                return n
            continue
        if current == section and key and key_re.match(line):
            return n
    return None


def _where(source, text, section, key):
    line = _line_of(text, section, key)
    loc = f"{source}:{line}" if line is not None else source
    name = f"[{section}] {key}" if section else key
    return f"{loc}: {name}"


def _check_value(section, key, value, source="config", text=None):
    types, _ = SCHEMA[section][key]
    types = types if isinstance(types, tuple) else (types,)
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"{_where(source, text, section, key)}: expected a number, got a boolean")
    if not isinstance(value, types):
        names = "/".join(t.__name__ for t in types if t is not type(None))
        raise ConfigError(f"{_where(source, text, section, key)}: expected {names}, got {type(value).__name__}")
    allowed = CHOICES.get((section, key))
    if allowed is not None and value not in allowed:
        raise ConfigError(f"{_where(source, text, section, key)}: {value!r} is not one of {allowed}")


def validate_partial(doc: dict, source: str = "config", text: str | None = None):
    """Reject unknown sections/keys and badly typed values."""
    for name, value in doc.items():
        if name in TOP_LEVEL:
            if not isinstance(value, str):
                raise ConfigError(f"{_where(source, text, None, name)}: expected a string")
            if name == "experiment" and value.replace("-", "_") not in EXPERIMENTS:
                raise ConfigError(f"{_where(source, text, None, name)}: unknown experiment {value!r}")
            continue
        if name not in SCHEMA:
            line = _line_of(text, name, "") or _line_of(text, None, name)
            loc = f"{source}:{line}" if line else source
            raise ConfigError(f"{loc}: unknown section or key {name!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"{_where(source, text, None, name)}: expected a section")
        for key, val in value.items():
            if key not in SCHEMA[name]:
                raise ConfigError(f"{_where(source, text, name, key)}: unknown key")
            _check_value(name, key, val, source, text)


def defaults() -> dict:
    out = {"experiment": "optimize"}
    for section, keys in SCHEMA.items():
        out[section] = {k: copy.deepcopy(v[1]) for k, v in keys.items()}
    return out


def merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k].update(copy.deepcopy(v))
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_text(text: str, source: str = "config") -> dict:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    validate_partial(doc, source, text)
    return doc


def load_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_text(text, str(path))


def _parse_env_value(raw: str):
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out: dict = {}
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        if rest == "experiment":
            out["experiment"] = raw
            continue
        if "__" not in rest:
            continue  # backend switches and the like are not config keys
        section, key = rest.split("__", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"environment variable {name}: unknown key [{section}] {key}")
        value = raw if SCHEMA[section][key][0] is str else _parse_env_value(raw)
        out.setdefault(section, {})[key] = value
    validate_partial(out, "environment")
    return out


def build(
    preset: str | None = None,
    file_doc: dict | None = None,
    experiment: str | None = None,
    environ=None,
    extra: dict | None = None,
) -> dict:
    """Effective configuration after applying every layer of precedence."""
    from .presets import PRESETS

    file_doc = file_doc or {}
    name = preset or file_doc.get("preset")
    cfg = defaults()
    if name:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
        cfg = merge(cfg, PRESETS[name])
        cfg["preset"] = name
    provided = set(PRESETS[name]) if name else set()
    cfg = merge(cfg, file_doc)
    provided |= set(file_doc)
    env = env_overrides(environ)
    cfg = merge(cfg, env)
    provided |= set(env)
    if extra:
        validate_partial(extra, "command line")
        cfg = merge(cfg, extra)
        provided |= set(extra)
    if experiment:
        cfg["experiment"] = experiment
    cfg["experiment"] = cfg["experiment"].replace("-", "_")
    missing = [s for s in REQUIRED_SECTIONS if s not in provided]
    if missing:
        raise ConfigError(f"missing required section(s): {', '.join('[' + m + ']' for m in missing)}")
    validate_partial(cfg, "effective config")
    return cfg


def dumps(cfg: dict) -> str:
    """TOML text of ``cfg``; ``None`` values are omitted (they mean 'automatic')."""

    def clean(d):
        return {k: (clean(v) if isinstance(v, dict) else v) for k, v in d.items() if v is not None}

    return tomli_w.dumps(clean(cfg))
