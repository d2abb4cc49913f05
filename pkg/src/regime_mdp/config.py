"""Experiment configuration: TOML parsing, validation and a stable hash.

A config looks like::

    x0 = [0.0]
    y0 = 1
    T = 1.0
    output_dir = "out"

    [model]
    name = "two-state-constant"
    [model.params]
    sigma = 0.0

    [mc]
    eps_grid = [0.08, 0.04]
    n_paths = 100000

Relative file paths are resolved against the config file's directory.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, ModelError
from .model import ZOO_DEFAULTS, RegimeModel, build_builtin

TOP_KEYS = {"x0", "y0", "T", "dt", "seed", "output_dir", "model", "analyze", "simulate", "rate", "mc",
            "validate"}
SECTION_KEYS = {
    "model": {"name", "params"},
    "analyze": {"knots"},
    "simulate": {"eps", "seed", "h_exponent", "path_index"},
    "rate": {"path_file"},
    "mc": {"eps_grid", "h_exponent", "a", "event", "n_paths", "seed", "target_knots"},
    "validate": {"lower", "upper", "points", "h_fd"},
}
DEFAULTS = {
    "analyze": {"knots": 11},
    "simulate": {"eps": 0.01, "seed": None, "h_exponent": None, "path_index": 0},
    "rate": {"path_file": "path.csv"},
    "mc": {"eps_grid": [0.08, 0.04, 0.02, 0.01], "h_exponent": 0.3, "a": 1.0, "event": "terminal",
           "n_paths": 100_000, "seed": None, "target_knots": 256},
    "validate": {"lower": None, "upper": None, "points": 100, "h_fd": 1e-6},
}


@dataclass
class ExperimentConfig:
    model_name: str
    model_params: dict
    x0: list
    y0: int
    T: float
    dt: float | None
    seed: int
    output_dir: Path
    sections: dict
    base_dir: Path = field(default_factory=Path.cwd)
    model: RegimeModel = field(default=None, repr=False)

    def section(self, name: str) -> dict:
        return self.sections[name]

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def command_seed(self, command: str) -> int:
        own = self.sections.get(command, {}).get("seed")
        return self.seed if own is None else own

    def with_seed(self, seed: int) -> "ExperimentConfig":
        out = copy.copy(self)
        out.seed = int(seed)
        out.sections = copy.deepcopy(self.sections)
        for name in ("simulate", "mc"):
            out.sections[name]["seed"] = None
        return out

    def canonical(self, command: str | None = None) -> dict:
        """Normalized content that determines the outputs of ``command``.

        Only the command's own section takes part (all sections when
        ``command`` is None); the output location never does.
        """
        names = [command] if command in self.sections else sorted(self.sections)
        sections = {n: copy.deepcopy(self.sections[n]) for n in names}
        for n in ("simulate", "mc"):
            if n in sections:
                sections[n]["seed"] = self.command_seed(n)
        seed = self.seed if command is None else None
        if "rate" in sections:
            path_file = self.resolve(sections["rate"]["path_file"])
            sections["rate"]["path_file_sha256"] = (
                hashlib.sha256(path_file.read_bytes()).hexdigest() if path_file.is_file() else None)
        return {"model": {"name": self.model_name, "params": self.model_params}, "x0": self.x0,
                "y0": self.y0, "T": self.T, "dt": self.dt, "seed": seed, "sections": sections}

    def sha256(self, command: str | None = None) -> str:
        text = json.dumps(self.canonical(command), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*\"?{re.escape(key)}\"?\s*=|^\s*\[{re.escape(key)}\]")
    for n, line in enumerate(text.splitlines(), 1):
        if pat.search(line):
            return n
    return None


class _Checker:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def fail(self, key: str, msg: str):
        line = _line_of(self.text, key.split(".")[-1])
        where = f"{self.source}:{line}" if line else self.source
        raise ConfigError(f"{where}: {key}: {msg}")

    def number(self, key, value, lo=-math.inf, hi=math.inf, open_lo=False, integer=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(key, f"expected a number, got {value!r}")
        if integer and (float(value) != int(value)):
            self.fail(key, f"expected an integer, got {value!r}")
        v = int(value) if integer else float(value)
        if not (lo < v if open_lo else lo <= v) or not v <= hi or (not integer and math.isnan(v)):
            self.fail(key, f"value {value!r} outside the allowed range")
        return v

    def vector(self, key, value, length=None):
        if not isinstance(value, list) or not value:
            self.fail(key, "expected a non-empty list of numbers")
        out = [self.number(key, v) for v in value]
        if length is not None and len(out) != length:
            self.fail(key, f"expected {length} entries, got {len(out)}")
        return out


def _normalize_param(value):
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, list):
        return [_normalize_param(v) for v in value]
    return value


def parse_config(text: str, source: str = "<config>", base_dir: Path | None = None) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: TOML syntax error: {exc}") from None
    chk = _Checker(text, source)
    for key in raw:
        if key not in TOP_KEYS:
            chk.fail(key, "unknown key")
    for name, allowed in SECTION_KEYS.items():
        block = raw.get(name, {})
        if not isinstance(block, dict):
            chk.fail(name, "expected a table")
        for key in block:
            if key not in allowed:
                chk.fail(f"{name}.{key}", "unknown key")

    mblock = raw.get("model")
    if not mblock or "name" not in mblock:
        raise ConfigError(f"{source}: [model] with a name is required")
    name = mblock["name"]
    if name not in ZOO_DEFAULTS:
        chk.fail("model.name", f"unknown model {name!r}; choose from {sorted(ZOO_DEFAULTS)}")
    params = mblock.get("params", {})
    if not isinstance(params, dict):
        chk.fail("model.params", "expected a table")
    for key in params:
        if key not in ZOO_DEFAULTS[name]:
            chk.fail(f"model.params.{key}", f"unknown parameter for {name}")
    params = {k: _normalize_param(v) for k, v in {**ZOO_DEFAULTS[name], **params}.items()}
    if "d" in params:
        params["d"] = chk.number("model.params.d", params["d"], lo=1, integer=True)
    try:
        model = build_builtin(name, params)
    except (ModelError, ValueError, TypeError) as exc:
        chk.fail("model.params", str(exc))

    x0 = chk.vector("x0", raw.get("x0", [0.0] * model.d), model.d)
    y0 = chk.number("y0", raw.get("y0", 1), 1, model.L, integer=True)
    T = chk.number("T", raw.get("T", 1.0), 0.0, open_lo=True)
    dt = raw.get("dt")
    if dt is not None:
        dt = chk.number("dt", dt, 0.0, T, open_lo=True)
    seed = chk.number("seed", raw.get("seed", 0), 0, 2 ** 64 - 1, integer=True)
    out_dir = raw.get("output_dir", ".")
    if not isinstance(out_dir, str):
        chk.fail("output_dir", "expected a string")

    sec = {k: {**v, **raw.get(k, {})} for k, v in copy.deepcopy(DEFAULTS).items()}
    an = sec["analyze"]
    if isinstance(an["knots"], list):
        knots = chk.vector("analyze.knots", an["knots"])
        if any(t < 0 or t > T for t in knots) or any(b < a for a, b in zip(knots, knots[1:])):
            chk.fail("analyze.knots", "knot times must be sorted within [0, T]")
        an["knots"] = knots
    else:
        an["knots"] = chk.number("analyze.knots", an["knots"], 2, integer=True)

    sim = sec["simulate"]
    sim["eps"] = chk.number("simulate.eps", sim["eps"], 0.0, open_lo=True)
    if sim["seed"] is not None:
        sim["seed"] = chk.number("simulate.seed", sim["seed"], 0, 2 ** 64 - 1, integer=True)
    if sim["h_exponent"] is not None:
        sim["h_exponent"] = chk.number("simulate.h_exponent", sim["h_exponent"], 0.0, 0.5)
    sim["path_index"] = chk.number("simulate.path_index", sim["path_index"], 0, 2 ** 32 - 1, integer=True)

    if not isinstance(sec["rate"]["path_file"], str):
        chk.fail("rate.path_file", "expected a string")

    mc = sec["mc"]
    mc["eps_grid"] = chk.vector("mc.eps_grid", mc["eps_grid"])
    if any(e <= 0 for e in mc["eps_grid"]) or any(b > a for a, b in zip(mc["eps_grid"], mc["eps_grid"][1:])):
        chk.fail("mc.eps_grid", "must be positive and non-increasing")
    mc["h_exponent"] = chk.number("mc.h_exponent", mc["h_exponent"], 0.0, 0.5, open_lo=True)
    if mc["h_exponent"] >= 0.5:
        chk.fail("mc.h_exponent", "must be below 0.5")
    mc["a"] = chk.number("mc.a", mc["a"])
    if mc["event"] not in ("terminal", "sup"):
        chk.fail("mc.event", "must be 'terminal' or 'sup'")
    mc["n_paths"] = chk.number("mc.n_paths", mc["n_paths"], 1, integer=True)
    if mc["seed"] is not None:
        mc["seed"] = chk.number("mc.seed", mc["seed"], 0, 2 ** 64 - 1, integer=True)
    mc["target_knots"] = chk.number("mc.target_knots", mc["target_knots"], 0, integer=True)
    if 0 < mc["target_knots"] < 8:
        chk.fail("mc.target_knots", "use 0 (no target) or at least 8")

    va = sec["validate"]
    for key in ("lower", "upper"):
        default = [-3.0] * model.d if key == "lower" else [3.0] * model.d
        va[key] = chk.vector(f"validate.{key}", va[key] if va[key] is not None else default, model.d)
    if any(lo > hi for lo, hi in zip(va["lower"], va["upper"])):
        chk.fail("validate.lower", "lower bound exceeds upper bound")
    va["points"] = chk.number("validate.points", va["points"], 1, integer=True)
    va["h_fd"] = chk.number("validate.h_fd", va["h_fd"], 0.0, open_lo=True)

    return ExperimentConfig(model_name=name, model_params=params, x0=x0, y0=y0, T=T, dt=dt, seed=seed,
                            output_dir=Path(out_dir), sections=sec, base_dir=base_dir or Path.cwd(),
                            model=model)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    cfg = parse_config(text, str(path), base_dir=path.resolve().parent)
    if not cfg.output_dir.is_absolute():
        cfg.output_dir = cfg.base_dir / cfg.output_dir
    return cfg
