"""Command line front end: ``nodal-nehari {solve,eigen,verify,sweep} --config run.toml``.

Exit codes: 0 success, 1 configuration error, 2 hypothesis violation,
3 non-convergence, 4 invariant failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import RunConfig, load_config
from .domain import tail_mass, write_domain_json, write_field_csv
from .eigen import check_Alambda, minimize_rayleigh
from .errors import DomainMismatchError, HypothesisViolation, InvalidConfigError, NehariError
from .fields import check_hypotheses
from .functional import Functional
from .optimize import solve_all
from .verify import CheckReport, fd_gradient_check, fiber_property_check, invariant_suite, \
    miranda_check

log = logging.getLogger("nodal_nehari")

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_NONCONVERGED, EXIT_INVARIANT = range(5)


class RunFailure(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out, files, cfg: RunConfig, command, code):
    entries = {os.path.relpath(f, out): _sha256(f) for f in sorted(set(files))}
    _dump_json(os.path.join(out, "manifest.json"),
               {"command": command, "exit_code": code, "seed": cfg.seed, "files": entries,
                "problem": cfg.problem.as_dict()})


def gate_hypotheses(F: Functional):
    """Raise :class:`HypothesisViolation` naming the first failing hypothesis."""
    rep = check_hypotheses(F.spec, F.domain)
    failing = rep.failing()
    # (A2) is a decay condition on R^N; only the lam > 0 theory leans on it
    if F.lam <= 0:
        failing = [h for h in failing if h != "A2"]
    if failing:
        h = failing[0]
        raise HypothesisViolation(f"({h})", json.dumps(rep.details[h], default=_jsonable))
    return rep


class Runner:
    """Executes the requested tasks of one configuration into ``out``."""

    def __init__(self, cfg: RunConfig, out, tasks=()):
        self.cfg = cfg
        self.tasks = tuple(tasks)
        self.out = out
        self.files = []
        self.d = cfg.domain.build(cfg.problem.N)
        self.F = Functional(cfg.problem, self.d)
        self.eig = None
        self.sols = None

    def path(self, name):
        p = os.path.join(self.out, name)
        self.files.append(p)
        return p

    def eigen(self, write=True):
        self.eig = minimize_rayleigh(self.F)
        if write:
            _dump_json(self.path("eigen.json"), self.eig.as_dict())
            with open(self.path("rayleigh_history.csv"), "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["iteration", "rayleigh"])
                for k, v in enumerate(self.eig.history):
                    w.writerow([k, repr(float(v))])
            write_field_csv(self.path("eigenfunction.csv"), self.d, {"u": self.eig.u})
        if not self.eig.converged:
            raise RunFailure(EXIT_NONCONVERGED, "Rayleigh quotient descent did not converge")
        return self.eig

    def gate_lambda(self):
        if self.F.lam > 0:
            if self.eig is None:
                self.eigen(write="eigen" in self.tasks)
            ok, margin = check_Alambda(self.F.lam, self.eig)
            if not ok:
                raise HypothesisViolation(
                    "(A,lambda)", f"lambda = {self.F.lam:g} but the lambda_A estimate is "
                    f"{self.eig.lam_A:.6g} (margin {margin:.3g})")

    def solve(self, write=True):
        gate_hypotheses(self.F)
        self.gate_lambda()
        self.sols = solve_all(self.F, self.cfg.solver)
        if write:
            u1, u2, u3 = self.sols
            write_field_csv(self.path("solutions.csv"), self.d,
                            {"u1": u1.u, "u2": u2.u, "u3": u3.u})
            _dump_json(self.path("solve_report.json"), {
                "domain": self.d.metadata(), "problem": self.cfg.problem.as_dict(),
                "solver": dataclasses.asdict(self.cfg.solver), "tail_mass": self._tail(),
                "solutions": {s.kind: s.as_dict() for s in self.sols}})
            self._plot_data()
        bad = [s.kind for s in self.sols if not s.converged]
        if bad:
            msgs = "; ".join(f"{s.kind}: {s.message}" for s in self.sols if not s.converged)
            raise RunFailure(EXIT_NONCONVERGED, f"no convergence for {bad} ({msgs})")
        return self.sols

    def _tail(self):
        return {"A": tail_mass(self.d, self.F.A), "B": tail_mass(self.d, self.F.B)}

    def _plot_data(self):
        u1, u2, u3 = (s.u for s in self.sols)
        if self.d.geometry == "radial":
            write_field_csv(self.path("plot_profiles.csv"), self.d,
                            {"u1": u1, "u2": u2, "u3": u3, "A": self.F.A, "B": self.F.B})
            axes = {"kind": "radial_profiles", "file": "plot_profiles.csv", "x": "r",
                    "x_label": "r", "series": ["u1", "u2", "u3", "A", "B"],
                    "y_label": "nodal value"}
        else:
            nx, ny = self.d.shape
            for name, u in (("u1", u1), ("u2", u2), ("u3", u3)):
                np.savetxt(self.path(f"plot_grid_{name}.csv"), u.reshape(nx, ny),
                           delimiter=",", fmt="%.17g")
            L = self.d.size
            axes = {"kind": "grid", "files": [f"plot_grid_{k}.csv" for k in ("u1", "u2", "u3")],
                    "rows": {"name": "x", "min": -L, "max": L, "count": nx},
                    "columns": {"name": "y", "min": -L, "max": L, "count": ny}}
        _dump_json(self.path("plot_axes.json"), axes)

    def verify(self):
        if self.sols is None:
            self.solve(write="solve" in self.tasks)
        if self.eig is None:
            self.eigen(write="eigen" in self.tasks)
        v = self.cfg.verify
        u1, u2, u3 = self.sols
        rep = CheckReport()
        rep.extend(fd_gradient_check(self.F, trials=v.fd_trials, seed=self.cfg.seed))
        rng = np.random.default_rng(self.cfg.seed)
        for _ in range(v.fiber_trials):
            rep.extend(fiber_property_check(self.F, u1.u * rng.uniform(0.2, 5.0)))
        rep.extend(miranda_check(self.F, u3.u, eps=v.miranda_eps, samples=v.miranda_samples))
        rep.extend(invariant_suite(self.F, u1, u2, u3, eig=self.eig, probes=v.probes,
                                   seed=self.cfg.seed, tol_res=self.cfg.solver.tol_res))
        _dump_json(self.path("checks.json"), rep.as_dict())
        with open(self.path("checks.txt"), "w") as fh:
            fh.write(rep.table() + "\n")
        if not rep.passed:
            names = ", ".join(c.name for c in rep.failures())
            raise RunFailure(EXIT_INVARIANT, f"invariant checks failed: {names}")
        return rep


def run(cfg: RunConfig, out, tasks=None):
    """Run ``tasks`` (default: those in the config) in order eigen, solve, verify."""
    tasks = tuple(tasks or cfg.tasks)
    os.makedirs(out, exist_ok=True)
    code = EXIT_OK
    runner = None
    try:
        runner = Runner(cfg, out, tasks)
        write_domain_json(runner.path("domain.json"), runner.d)
        for task in ("eigen", "solve", "verify"):
            if task in tasks:
                getattr(runner, task)()
                print(f"{task}: ok")
    except RunFailure as exc:
        code = exc.code
        print(f"error: {exc}", file=sys.stderr)
    except HypothesisViolation as exc:
        code = EXIT_HYPOTHESIS
        print(f"error: {exc}", file=sys.stderr)
    except (InvalidConfigError, DomainMismatchError) as exc:
        code = EXIT_CONFIG
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
    except NehariError as exc:
        code = EXIT_NONCONVERGED
        print(f"error: {exc}", file=sys.stderr)
    if runner is not None:
        _write_manifest(out, runner.files, cfg, "+".join(tasks), code)
    return code


SWEEP_COLUMNS = ["parameter", "value", "status", "exit_code", "lambda_A", "S_u1", "S_u2",
                 "S_u3", "residual_u1", "residual_u2", "residual_u3", "nodal_domains_u3",
                 "coupling", "coupling_bound", "tail_mass_A", "tail_mass_B", "message"]


def _sweep_row(args):
    cfg, parameter, value = args
    row = dict.fromkeys(SWEEP_COLUMNS, "")
    row.update(parameter=parameter, value=value, status="ok", exit_code=EXIT_OK)
    r = None
    try:
        c = cfg.with_value(parameter, value)
        r = Runner(c, out=None)
        r.eigen(write=False)
        row["lambda_A"] = r.eig.lam_A
        row["tail_mass_A"], row["tail_mass_B"] = r._tail().values()
        r.solve(write=False)
    except RunFailure as exc:
        row.update(status="failed", exit_code=exc.code, message=str(exc))
    except HypothesisViolation as exc:
        row.update(status=f"hypothesis {exc.hypothesis}", exit_code=EXIT_HYPOTHESIS,
                   message=str(exc))
    except (InvalidConfigError, DomainMismatchError) as exc:
        row.update(status="config", exit_code=EXIT_CONFIG, message=str(exc))
    except NehariError as exc:
        row.update(status="failed", exit_code=EXIT_NONCONVERGED, message=str(exc))
    sols = r.sols if r is not None else None
    if sols:
        for k, s in zip(("u1", "u2", "u3"), sols):
            row[f"S_{k}"], row[f"residual_{k}"] = s.S, s.residual
        row["nodal_domains_u3"] = sols[2].nodal_domains
        row["coupling"], row["coupling_bound"] = sols[2].coupling, sols[2].coupling_bound
    return row


def sweep(cfg: RunConfig, out, parameter=None, values=None, workers=1):
    """One solve per value; rows land in ``sweep.csv`` in the order of ``values``."""
    parameter = parameter or cfg.sweep_parameter
    values = list(cfg.sweep_values if values is None else values)
    if parameter is None:
        raise InvalidConfigError("sweep needs a parameter")
    if not values:
        raise InvalidConfigError("sweep value list is empty")
    if parameter == "lambda" and cfg.preset is not None:
        raise InvalidConfigError("a preset fixes lambda; it cannot be swept")
    for v in values:
        cfg.with_value(parameter, v)
    os.makedirs(out, exist_ok=True)
    jobs = [(cfg, parameter, v) for v in values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    path = os.path.join(out, "sweep.csv")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for k, v in row.items()})
    code = max(r["exit_code"] for r in rows)
    _write_manifest(out, [path], cfg, "sweep", code)
    for r in rows:
        print(f"{parameter}={r['value']}: {r['status']}")
    return code


def build_parser():
    ap = argparse.ArgumentParser(prog="nodal-nehari",
                                 description="Sign-changing solutions by Nehari minimisation.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("solve", "compute u1 > 0, u2 < 0 and the nodal solution u3"),
                       ("eigen", "estimate the weighted principal eigenvalue lambda_A"),
                       ("verify", "solve and run the certificate checks"),
                       ("sweep", "repeat the solve over R_trunc, resolution or lambda")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", help="output directory (default: config 'output')")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, default=1, help="parallel sweep workers")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "sweep":
            p.add_argument("--parameter", choices=("R_trunc", "resolution", "lambda"))
            p.add_argument("--values", type=float, nargs="*",
                           help="sweep values (default: the config [sweep] block)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise InvalidConfigError("seed must be non-negative")
            cfg = cfg.with_seed(args.seed)
        if args.workers < 1:
            raise InvalidConfigError("--workers must be at least 1")
        out = args.out or cfg.output
        if args.command == "sweep":
            return sweep(cfg, out, args.parameter, args.values, args.workers)
    except InvalidConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    tasks = {"solve": ("solve",), "eigen": ("eigen",),
             "verify": ("eigen", "solve", "verify")}[args.command]
    return run(cfg, out, tasks)


if __name__ == "__main__":
    sys.exit(main())
