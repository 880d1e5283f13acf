"""Line-oriented experiment configuration.

Grammar::

    # comment
    [system]
    n_tx = 16
    [experiment]
    snr_db = -20, -10, 0
    algorithm = mo, gevd

Keys may also appear before the first section header. List values are
comma separated; an empty value is an empty list. Errors carry line numbers
and every problem in the file is reported at once.
"""

import json
from dataclasses import asdict

from .harness import ExperimentConfig, InvalidConfig


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def _enum_token(text):
    return text.strip().lower().replace("-", "_")


def _floats(text):
    return tuple(float(x) for x in _items(text))


def _ints(text):
    return tuple(int(x) for x in _items(text))


def _names(text):
    return tuple(_enum_token(x) for x in _items(text))


def _items(text):
    return [x.strip() for x in text.split(",") if x.strip()]


# key -> (section, field name, parser, formatter)
_LIST = ", ".join
SCHEMA = {
    "n_tx": ("system", "n_tx", int, str),
    "n_rx": ("system", "n_rx", int, str),
    "n_rf": ("system", "n_rf", int, str),
    "n_streams": ("system", "n_streams", int, str),
    "n_subcarriers": ("system", "n_subcarriers", int, str),
    "num_clusters": ("channel", "num_clusters", int, str),
    "rays_per_cluster": ("channel", "rays_per_cluster", int, str),
    "angular_spread": ("channel", "angular_spread", float, repr),
    "snr_db": ("experiment", "snr_db", _floats, lambda v: _LIST(repr(x) for x in v)),
    "trials": ("experiment", "trials", int, str),
    "algorithm": ("experiment", "algorithms", _names, _LIST),
    "criterion": ("experiment", "criterion", _enum_token, str),
    "init": ("experiment", "inits", _names, _LIST),
    "seed": ("experiment", "seed", int, str),
    "quant_bits": ("experiment", "quant_bits", _ints, lambda v: _LIST(str(x) for x in v)),
    "symbols": ("experiment", "symbols", int, str),
    "out": ("experiment", "out", str.strip, str),
    "outer_tol": ("solver", "outer_tol", float, repr),
    "outer_cap": ("solver", "outer_cap", int, str),
    "inner_tol": ("solver", "inner_tol", float, repr),
    "grad_tol": ("solver", "grad_tol", float, repr),
    "inner_cap": ("solver", "inner_cap", int, str),
    "power_iters": ("solver", "power_iters", int, str),
}
SECTIONS = ("system", "channel", "experiment", "solver")
_FIELD_TO_KEY = {spec[1]: key for key, spec in SCHEMA.items()}


def parse_values(text):
    """Parse ``text`` into ``({field: value}, {field: line})`` without validation
    of cross-field constraints."""
    values, lines, errors = {}, {}, []
    section = None
    for num, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append(f"line {num}: malformed section header {raw.strip()!r}")
                continue
            section = line[1:-1].strip().lower()
            if section not in SECTIONS:
                errors.append(f"line {num}: unknown section [{section}]")
            continue
        if "=" not in line:
            errors.append(f"line {num}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in SCHEMA:
            errors.append(f"line {num}: unknown key {key!r}")
            continue
        home, name, parse, _ = SCHEMA[key]
        if section is not None and section in SECTIONS and section != home:
            errors.append(f"line {num}: key {key!r} belongs in [{home}], not [{section}]")
            continue
        if name in values:
            errors.append(f"line {num}: duplicate key {key!r} (first set on line {lines[name]})")
            continue
        try:
            values[name] = parse(value)
        except ValueError:
            errors.append(f"line {num}: bad value for {key!r}: {value!r}")
            continue
        lines[name] = num
    if errors:
        raise ConfigError(errors)
    return values, lines


def build_config(values, lines=None, base=None):
    """Validated :class:`ExperimentConfig` from field values over ``base`` defaults."""
    lines = lines or {}
    merged = asdict(base) if base is not None else {}
    merged.update(values)

    def where(name):
        key = _FIELD_TO_KEY.get(name, name)
        return f"line {lines[name]} ({key})" if name in lines else key

    try:
        return ExperimentConfig(**merged)
    except InvalidConfig as exc:
        raise ConfigError([f"{', '.join(where(k) for k in keys)}: {msg}" for msg, keys in exc.problems]) from None


def parse_config(text, base=None):
    """Parse and validate config text; raises :class:`ConfigError` listing every problem."""
    values, lines = parse_values(text)
    return build_config(values, lines, base)


def read_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror}"]) from exc
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError([f"{path}: {e}" for e in exc.errors]) from None


def serialize(cfg):
    """Text form of ``cfg`` that :func:`parse_config` reads back to an equal config."""
    out = []
    for section in SECTIONS:
        out.append(f"[{section}]")
        for key, (home, name, _, fmt) in SCHEMA.items():
            if home == section:
                out.append(f"{key} = {fmt(getattr(cfg, name))}".rstrip())
        out.append("")
    return "\n".join(out)


def to_json(cfg):
    return json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n"
