"""Experiment configuration files (TOML, schema version 1).

Layout::

    version = 1
    out = "runs/amp"                  # optional, --out overrides
    T = 8                             # optional, must equal the plan length

    [dimensions]                      # n and d, or n and aspect, or aspect alone
    n = 2000
    d = 1000

    [run]                             # seed, trials, n_list, delta
    [mc]                              # R, d_mc, n_mc, damping, tol, max_iter, pinv, saddle_tol

    [plan]                            # a preset with parameters ...
    preset = "amp-linear"
    params = { sigma2 = 1.0, lam = 0.5, aspect = 2.0, macro_steps = 4 }

    [[plan.steps]]                    # ... or explicit steps
    kind = "init"
    u = { id = "linear-combo", const = 1.0 }
    v = { id = "linear-combo", const = 1.0 }

    [[tests]]
    kind = "inner"
    side = "v"
    args = ["v", 2, "v", 1]
"""

import copy
import math
import sys
from dataclasses import dataclass, field

from .errors import ConfigError, InvalidArgument
from .plans import SADDLE, Step, UpdatePlan, preset
from .updates import from_descriptor
from .verify import TestFunction, builtin_tests

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1

_TOP = {"version", "name", "out", "T", "dimensions", "run", "mc", "plan", "tests"}
_DIM = {"n", "d", "aspect"}
_RUN = {"seed", "trials", "n_list", "delta"}
_MC = {"R", "d_mc", "n_mc", "damping", "tol", "max_iter", "pinv", "saddle_tol", "saddle_method",
       "diag_floor", "save_bank"}


@dataclass
class ExperimentConfig:
    plan: UpdatePlan
    n: int
    d: int
    tests: list
    seed: int = 0
    trials: int = 1
    n_list: list = field(default_factory=list)
    delta: float = 0.05
    R: int = 2000
    d_mc: int = 400
    n_mc: int = None
    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 5000
    pinv: bool = False
    saddle_tol: float = 1e-10
    saddle_method: str = "auto"
    diag_floor: float = 1e-10
    out: str = None
    name: str = "experiment"
    source: dict = field(default_factory=dict, repr=False)

    @property
    def aspect(self):
        return self.n / self.d

    @property
    def T(self):
        return self.plan.T

    def mc_kwargs(self):
        return {"R": self.R, "d_mc": self.d_mc, "n_mc": self.n_mc, "seed": self.seed, "damping": self.damping,
                "tol": self.tol, "max_iter": self.max_iter, "pinv": self.pinv, "diag_floor": self.diag_floor}


def _unknown(section, keys, allowed):
    extra = sorted(set(keys) - allowed)
    if extra:
        raise ConfigError(f"{section}: unknown key(s) {', '.join(extra)}")


def _number(section, key, value, kind=float, positive=False, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
    if kind is int and value != int(value):
        raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
    value = kind(value)
    if not math.isfinite(value):
        raise ConfigError(f"{section}.{key}: must be finite")
    if positive and value <= 0:
        raise ConfigError(f"{section}.{key}: must be positive, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{section}.{key}: must be >= {minimum}, got {value!r}")
    return value


def _build_plan(raw):
    if not isinstance(raw, dict):
        raise ConfigError("plan: expected a table")
    has_preset, has_steps = "preset" in raw, "steps" in raw
    if has_preset == has_steps:
        raise ConfigError("plan: give exactly one of 'preset' or 'steps'")
    _unknown("plan", raw, {"preset", "params", "steps", "name"})
    if has_preset:
        try:
            return preset(raw["preset"], **raw.get("params", {}))
        except (InvalidArgument, TypeError) as exc:
            raise ConfigError(f"plan.preset {raw['preset']!r}: {exc}") from None
    steps = []
    for i, s in enumerate(raw["steps"]):
        where = f"plan.steps[{i}]"
        if not isinstance(s, dict) or set(s) - {"kind", "u", "v"} or not {"kind", "u", "v"} <= set(s):
            raise ConfigError(f"{where}: expected keys kind, u, v")
        try:
            u, v = (from_descriptor(s[side]) for side in ("u", "v"))
        except (InvalidArgument, KeyError, TypeError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
        try:
            steps.append(Step(s["kind"], u, v))
        except InvalidArgument as exc:
            raise ConfigError(f"{where}: {exc}") from None
    try:
        return UpdatePlan(steps, raw.get("name", "custom"))
    except InvalidArgument as exc:
        raise ConfigError(f"plan: {exc}") from None


def _check_saddles(plan):
    for i, s in enumerate(plan.steps):
        if s.kind != SADDLE:
            continue
        for side in ("u", "v"):
            p = getattr(s, side)
            if not (p.mu > 0 and math.isfinite(p.mu)):
                raise ConfigError(f"plan.steps[{i}].{side}: saddle penalty needs mu > 0, got mu={p.mu}")
            if not (math.isfinite(p.L) and p.L >= p.mu):
                raise ConfigError(f"plan.steps[{i}].{side}: saddle penalty needs mu <= L < inf, got L={p.L}")


def _build_tests(raw, plan):
    if raw is None:
        return builtin_tests(plan.T, "v")[:6]
    tests = []
    for i, t in enumerate(raw):
        try:
            psi = TestFunction.from_descriptor(t)
        except (InvalidArgument, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"tests[{i}]: {exc}") from None
        if psi.max_step > plan.T:
            raise ConfigError(f"tests[{i}]: reads step {psi.max_step} of a {plan.T}-step plan")
        tests.append(psi)
    return tests


def from_dict(raw):
    """Validate a parsed configuration mapping and build an ExperimentConfig."""
    raw = copy.deepcopy(raw)
    _unknown("config", raw, _TOP)
    version = raw.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"version: unsupported schema version {version!r} (expected {SCHEMA_VERSION})")
    if "plan" not in raw:
        raise ConfigError("plan: missing")
    plan = _build_plan(raw["plan"])
    _check_saddles(plan)
    if "T" in raw and _number("config", "T", raw["T"], int) != plan.T:
        raise ConfigError(f"T: config says {raw['T']} but the plan has {plan.T} steps")

    dim = raw.get("dimensions", {})
    _unknown("dimensions", dim, _DIM)
    aspect = dim.get("aspect", plan.meta.get("aspect"))
    if aspect is not None:
        aspect = _number("dimensions", "aspect", aspect, positive=True)
    n = _number("dimensions", "n", dim.get("n", 2000), int, positive=True)
    if "d" in dim:
        d = _number("dimensions", "d", dim["d"], int, positive=True)
        if aspect is not None and not math.isclose(n / d, aspect, rel_tol=1e-9):
            raise ConfigError(f"dimensions: n/d = {n / d:g} disagrees with aspect = {aspect:g}")
    else:
        d = int(round(n / (aspect or 2.0)))
        if d < 1:
            raise ConfigError("dimensions: d rounds to zero")

    run = raw.get("run", {})
    _unknown("run", run, _RUN)
    mc = raw.get("mc", {})
    _unknown("mc", mc, _MC)
    kw = {}
    if "seed" in run:
        kw["seed"] = _number("run", "seed", run["seed"], int, minimum=0)
    if "trials" in run:
        kw["trials"] = _number("run", "trials", run["trials"], int, positive=True)
    if "delta" in run:
        kw["delta"] = _number("run", "delta", run["delta"], positive=True)
        if kw["delta"] >= 1:
            raise ConfigError("run.delta: must lie in (0, 1)")
    if "n_list" in run:
        n_list = [_number("run", "n_list", x, int, positive=True) for x in run["n_list"]]
        if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
            raise ConfigError("run.n_list: must be strictly increasing with at least 3 entries")
        kw["n_list"] = n_list
    for key in ("R", "d_mc", "n_mc", "max_iter"):
        if key in mc:
            kw[key] = _number("mc", key, mc[key], int, positive=True)
    if kw.get("R", 2) < 2:
        raise ConfigError("mc.R: need at least 2 replicates")
    for key in ("tol", "saddle_tol", "diag_floor"):
        if key in mc:
            kw[key] = _number("mc", key, mc[key], positive=True)
    if "damping" in mc:
        kw["damping"] = _number("mc", "damping", mc["damping"], positive=True)
        if kw["damping"] > 1:
            raise ConfigError("mc.damping: must lie in (0, 1]")
    if "pinv" in mc:
        if not isinstance(mc["pinv"], bool):
            raise ConfigError("mc.pinv: expected true or false")
        kw["pinv"] = mc["pinv"]
    if "saddle_method" in mc:
        if mc["saddle_method"] not in ("auto", "direct", "extragradient"):
            raise ConfigError("mc.saddle_method: one of auto, direct, extragradient")
        kw["saddle_method"] = mc["saddle_method"]
    return ExperimentConfig(plan=plan, n=n, d=d, tests=_build_tests(raw.get("tests"), plan),
                            out=raw.get("out"), name=raw.get("name", plan.name), source=raw, **kw)


def load(path):
    """Parse and validate a TOML configuration file."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return from_dict(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None

