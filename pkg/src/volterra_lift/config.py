"""Sectioned key=value experiment configuration.

Grammar (one item per line; ``#`` starts a comment)::

    [section]
    key = value

Sections and keys are fixed by ``SCHEMA``; unknown sections or keys are
rejected.  Keys are addressed as ``section.key`` (for example
``model.kernel.H``).  Empty values mean "unset".  Later assignments
override earlier ones; command-line flags override the file.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigParse

REQUIRED = object()

# section -> key -> (type, default); type is one of str, int, float, bool, "floats"
SCHEMA = {
    "model": {
        "preset": (str, ""),
        "kernel": (str, ""),
        "kernel.H": (float, None),
        "kernel.rate": (float, 1.0),
        "coefficients": (str, "gaussian"),
        "coefficients.sigma": (float, None),
        "coefficients.a": (float, None),
        "coefficients.s": (float, None),
        "coefficients.sigma0": (float, None),
        "coefficients.sigma1": (float, None),
        "coefficients.nu": (float, None),
        "coefficients.rho": (float, None),
        "coefficients.rate": (float, None),
        "coefficients.v0": (float, None),
        "x0": (str, "constant"),
        "x0.value": (float, 0.0),
        "x0.center": (float, 0.5),
        "x0.width": (float, 0.5),
        "x0.amp": (float, 1.0),
        "x0.delta": (float, 1.0),
        "weight.beta": (float, None),
        "weight.c": (float, 1.0),
    },
    "grid": {
        "T": (float, 1.0),
        "steps": (int, 64),
        "space.nodes": (int, 64),
        "space.x_max": (float, 40.0),
        "space.first": (float, 1e-3),
    },
    "mc": {
        "paths": (int, 4096),
        "seed": (int, 0),
        "inner": (int, 512),
        "outer": (int, 4096),
        "budget": (int, 2 ** 21),
    },
    "task": {
        "command": (str, REQUIRED),
        "t": (float, 0.0),
        "payoff": (str, "pointwise:square"),
        "g.center": (float, 1.0),
        "g.width": (float, 1.0),
        "g.amp": (float, 0.5),
        "delta": (str, ""),
        "dt_fd": (float, None),
        "checkpoints": ("floats", "0.25,0.5,1.0"),
        "direction": (str, "K"),
        "component": (int, 0),
        "eps": (float, None),
        "nodes": (int, 50),
        "target": (str, "conditional-forward"),
        "x_max": (float, 2.0),
        "deltas": ("floats", "1,2,4,8,16"),
        "functional": (str, "example"),
        "q": (float, None),
        "force": (bool, False),
    },
    "output": {
        "dir": (str, "out"),
        "csv_paths": (int, 16),
    },
}

COMMANDS = {
    "sve": ("simulate",),
    "lift": ("simulate", "flow-check", "forward-check"),
    "oulift": ("simulate", "compare"),
    "tangent": ("first", "second", "rates"),
    "kolmo": ("value", "grad", "hess", "pde", "martingale", "condexp", "fpe-mild",
              "fpe-singular"),
    "verify": ("kernel", "weight", "gronwall"),
}


def _convert(name, typ, raw):
    raw = raw.strip()
    if raw == "":
        return None
    try:
        if typ is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ == "floats":
            return tuple(float(v) for v in raw.split(","))
        if typ is int:
            return int(float(raw)) if float(raw).is_integer() else int(raw)
        return typ(raw)
    except ValueError:
        raise ConfigParse(f"{name}: cannot parse {raw!r}") from None


def _format(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ExperimentConfig:
    """Resolved configuration: ``values[section][key]``."""

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        for sec, keys in SCHEMA.items():
            cur = self.values.setdefault(sec, {})
            for key, (typ, default) in keys.items():
                if key not in cur:
                    d = None if default is REQUIRED else default
                    cur[key] = _convert(f"{sec}.{key}", typ, d) if isinstance(d, str) else d

    def get(self, name):
        sec, key = name.split(".", 1)
        return self.values[sec][key]

    def require(self, name):
        v = self.get(name)
        if v is None or v == "":
            raise ConfigParse(f"missing required key {name}")
        return v

    def set(self, name, raw):
        """Assign ``section.key`` from a string, validating the key."""
        if "." not in name:
            raise ConfigParse(f"{name}: keys are addressed as section.key")
        sec, key = name.split(".", 1)
        if sec not in SCHEMA:
            raise ConfigParse(f"unknown section [{sec}] (key {name})")
        if key not in SCHEMA[sec]:
            raise ConfigParse(f"unknown key {name}")
        self.values[sec][key] = _convert(name, SCHEMA[sec][key][0], raw)

    def dump(self):
        lines = []
        for sec, keys in SCHEMA.items():
            lines.append(f"[{sec}]")
            lines.extend(f"{key} = {_format(self.values[sec][key])}" for key in keys)
            lines.append("")
        return "\n".join(lines)

    @property
    def command(self):
        cmd = self.require("task.command").split()
        if len(cmd) != 2 or cmd[0] not in COMMANDS or cmd[1] not in COMMANDS[cmd[0]]:
            raise ConfigParse(f"task.command: unknown command {' '.join(cmd)!r}")
        return cmd[0], cmd[1]


def parse_text(text, cfg=None):
    """Parse config text into ``cfg`` (a fresh default config if None)."""
    cfg = ExperimentConfig() if cfg is None else cfg
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigParse(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigParse(f"line {lineno}: expected key = value")
        if section is None:
            raise ConfigParse(f"line {lineno}: key outside a section")
        key, raw = line.split("=", 1)
        cfg.set(f"{section}.{key.strip()}", raw)
    return cfg


def load(path, cfg=None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigParse(f"cannot read config {path}: {exc}") from None
    return parse_text(text, cfg)


def floats(values, scale=1.0):
    return np.asarray(values, dtype=float) * scale
