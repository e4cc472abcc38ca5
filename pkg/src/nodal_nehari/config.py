"""TOML run configuration and the three lambda presets.

Layout::

    preset = "iii"            # optional: "i" (lam = 1), "ii" (lam = -1), "iii" (lam = 0)
    seed = 0
    tasks = ["eigen", "solve", "verify"]
    output = "runs/example"

    [problem]
    p = 2.0
    N = 3
    lambda = 0.0              # may be omitted when a preset is given
    q = 4.0
    eps_reg = 1e-12
    [problem.A]
    profile = "gaussian"
    amplitude = 1.0
    width = 1.0
    [problem.B]
    profile = "gaussian"
    width = 1.0

    [domain]
    geometry = "radial"       # or "cartesian2d" (then N = 2)
    R_trunc = 10.0            # ball radius, or half-width of the box
    resolution = 500          # nodes (radial) or nodes per side

    [solver]                  # any SolverConfig field
    [verify]                  # any VerifyConfig field
    [sweep]
    parameter = "R_trunc"     # "R_trunc", "resolution" or "lambda"
    values = [5.0, 10.0, 20.0]

With preset "ii" the ``[problem.A]`` block describes the admissible weight
``-A~``; the equation is then solved with ``lam = -1``.
"""

from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .domain import build_domain
from .errors import InvalidConfigError
from .fields import PowerNonlinearity, WeightField
from .functional import ProblemSpec
from .optimize import SolverConfig

TASKS = ("eigen", "solve", "verify", "sweep")
PRESETS = {"i": 1.0, "ii": -1.0, "iii": 0.0}
SWEEP_PARAMETERS = ("R_trunc", "resolution", "lambda")


@dataclass(frozen=True)
class VerifyConfig:
    probes: int = 200
    miranda_eps: float = 0.1
    miranda_samples: int = 16
    fd_trials: int = 5
    fiber_trials: int = 3


@dataclass(frozen=True)
class DomainConfig:
    geometry: str = "radial"
    R_trunc: float = 10.0
    resolution: int = 500
    resolution_y: int | None = None

    def build(self, N):
        if self.geometry == "radial":
            return build_domain("radial", N=N, R=self.R_trunc, n=self.resolution)
        if N != 2:
            raise InvalidConfigError(f"cartesian2d geometry needs N = 2, got N = {N}")
        return build_domain("cartesian2d", L=self.R_trunc, nx=self.resolution,
                            ny=self.resolution_y or self.resolution)


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec
    domain: DomainConfig
    solver: SolverConfig = field(default_factory=SolverConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    tasks: tuple = ("eigen", "solve", "verify")
    output: str = "out"
    seed: int = 0
    preset: str | None = None
    sweep_parameter: str | None = None
    sweep_values: tuple = ()
    source: dict = field(default_factory=dict, repr=False)

    def with_seed(self, seed):
        return dataclasses.replace(self, seed=int(seed),
                                   solver=dataclasses.replace(self.solver, seed=int(seed)))

    def with_value(self, parameter, value):
        """Copy with one sweep parameter replaced."""
        if parameter == "R_trunc":
            return dataclasses.replace(
                self, domain=dataclasses.replace(self.domain, R_trunc=float(value)))
        if parameter == "resolution":
            if int(value) != value:
                raise InvalidConfigError(f"resolution must be an integer, got {value}")
            return dataclasses.replace(
                self, domain=dataclasses.replace(self.domain, resolution=int(value)))
        if parameter == "lambda":
            return dataclasses.replace(self, problem=self.problem.with_lambda(float(value)))
        raise InvalidConfigError(
            f"sweep parameter must be one of {SWEEP_PARAMETERS}, got {parameter!r}")


def _weight(block, base_dir, role):
    if not isinstance(block, dict):
        raise InvalidConfigError(f"[problem.{role}] must be a table")
    block = dict(block)
    if block.get("profile") == "tabulated" and "csv" in block:
        path = os.path.join(base_dir, block.pop("csv"))
        w = WeightField.from_csv(path, block.pop("column", None))
        if block.keys() - {"profile"}:
            raise InvalidConfigError(f"unknown keys in [problem.{role}]: {sorted(block)}")
        return w
    known = {"profile", "amplitude", "width"}
    extra = block.keys() - known
    if extra:
        raise InvalidConfigError(f"unknown keys in [problem.{role}]: {sorted(extra)}")
    try:
        return WeightField(**{k: (float(v) if k != "profile" else v) for k, v in block.items()})
    except (TypeError, ValueError) as exc:
        raise InvalidConfigError(f"[problem.{role}]: {exc}") from exc


def _fields(cls, block, name):
    if not isinstance(block, dict):
        raise InvalidConfigError(f"[{name}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    extra = set(block) - names
    if extra:
        raise InvalidConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
    try:
        return cls(**block)
    except TypeError as exc:
        raise InvalidConfigError(f"[{name}]: {exc}") from exc


def parse_config(raw: dict, base_dir=".") -> RunConfig:
    """Validate a parsed TOML document and build a :class:`RunConfig`."""
    top = {"preset", "seed", "tasks", "output", "problem", "domain", "solver", "verify", "sweep"}
    extra = set(raw) - top
    if extra:
        raise InvalidConfigError(f"unknown top-level keys: {sorted(extra)}")
    preset = raw.get("preset")
    if preset is not None and preset not in PRESETS:
        raise InvalidConfigError(f"preset must be one of {sorted(PRESETS)}, got {preset!r}")

    prob = dict(raw.get("problem", {}))
    lam = prob.pop("lambda", None)
    if preset is not None:
        if lam is not None and float(lam) != PRESETS[preset]:
            raise InvalidConfigError(
                f"preset {preset!r} fixes lambda = {PRESETS[preset]:g}; config says {lam}")
        lam = PRESETS[preset]
    lam = 0.0 if lam is None else float(lam)
    known = {"p", "N", "q", "eps_reg", "A", "B"}
    if set(prob) - known:
        raise InvalidConfigError(f"unknown keys in [problem]: {sorted(set(prob) - known)}")
    A = _weight(prob.get("A", {}), base_dir, "A")
    B = _weight(prob.get("B", {}), base_dir, "B")
    try:
        nl = PowerNonlinearity(q=float(prob.get("q", 4.0)), B=B)
        spec = ProblemSpec(p=float(prob.get("p", 2.0)), N=int(prob.get("N", 3)), lam=lam, A=A,
                           nonlinearity=nl, eps_reg=float(prob.get("eps_reg", 1e-12)))
    except (TypeError, ValueError) as exc:
        raise InvalidConfigError(str(exc)) from exc

    dom = _fields(DomainConfig, raw.get("domain", {}), "domain")
    if dom.geometry not in ("radial", "cartesian2d"):
        raise InvalidConfigError(f"unknown geometry {dom.geometry!r}")
    dom.build(spec.N)  # validates sizes early

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise InvalidConfigError(f"seed must be a non-negative integer, got {seed!r}")
    solver_block = dict(raw.get("solver", {}))
    solver_block.setdefault("seed", seed)
    try:
        solver = _fields(SolverConfig, solver_block, "solver")
    except ValueError as exc:
        raise InvalidConfigError(str(exc)) from exc
    verify = _fields(VerifyConfig, raw.get("verify", {}), "verify")

    tasks = tuple(raw.get("tasks", ("eigen", "solve", "verify")))
    bad = [t for t in tasks if t not in TASKS]
    if bad or not tasks:
        raise InvalidConfigError(f"tasks must be a non-empty subset of {TASKS}, got {tasks}")

    sweep = raw.get("sweep", {})
    parameter, values = sweep.get("parameter"), tuple(sweep.get("values", ()))
    if parameter is not None and parameter not in SWEEP_PARAMETERS:
        raise InvalidConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}")
    if parameter == "lambda" and preset is not None:
        raise InvalidConfigError("a preset fixes lambda; it cannot be swept")

    return RunConfig(problem=spec, domain=dom, solver=solver, verify=verify, tasks=tasks,
                     output=str(raw.get("output", "out")), seed=seed, preset=preset,
                     sweep_parameter=parameter, sweep_values=values, source=raw)


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfigError(f"config {path} is not valid TOML: {exc}") from exc
    return parse_config(raw, os.path.dirname(os.path.abspath(path)))
