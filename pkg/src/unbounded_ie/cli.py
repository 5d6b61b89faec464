"""Scenario-driven command line front end.

Usage::

    unbounded-ie <subcommand> --scenario run.ini [--out DIR] [--seed N] [--threads N]

Subcommands: ``apply``, ``solve-fredholm``, ``fixed-point``, ``check-kernel``,
``certify``, ``volterra-approx``.  Every run writes its CSV/JSON artifacts,
a copy of the scenario and ``manifest.json`` into the output directory.

Exit codes: 0 success, 2 a certification or convergence outcome was
negative, 1 any error (scenario errors carry ``file:line``).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import traceback

import numpy as np
import scipy

from . import __version__
from .compactness import (
    FunctionFamily,
    certify,
    translate_bump_family,
    verify_certificate,
)
from .core import SampledFunction, write_csv
from .kernels import (
    LINEAR_KERNELS,
    NONLINEARITIES,
    URYSOHN_KERNELS,
    UnsupportedOperationError,
    check_car4,
    check_condition_B,
    check_k1_via_limit,
    check_k2,
    default_plan,
    estimate_K_M,
    linear_kernel_from_spec,
    ray_cauchy_tail,
)
from .operators import (
    OperatorSpec,
    apply_fredholm,
    apply_hammerstein,
    apply_urysohn,
    apply_volterra,
    fredholm_modulus_hint,
    set_workers,
    volterra_approx_error,
)
from .quadrature import build_plan, find_truncation_radius, with_tail
from .sampling import GENERATOR, unit_ball_profiles
from .scenario import Scenario, ScenarioError, load, parse_floats, parse_linspace
from .solvers import hammerstein_radius, picard_solve, solve_fredholm_2nd_kind, urysohn_radius

SUBCOMMANDS = ("apply", "solve-fredholm", "fixed-point", "check-kernel", "certify",
               "volterra-approx")
EXIT_OK, EXIT_ERROR, EXIT_NEGATIVE = 0, 1, 2


# --------------------------------------------------------------------------
# output helpers


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write_json(path, data) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_clean(data), fh, sort_keys=True, indent=2)
        fh.write("\n")


class Run:
    """Output directory bookkeeping for one invocation."""

    def __init__(self, sc: Scenario, subcommand: str, out: str, seed):
        self.sc, self.subcommand, self.out, self.seed = sc, subcommand, out, seed
        self.artifacts = []
        os.makedirs(out, exist_ok=True)

    def csv(self, name, f: SampledFunction):
        write_csv(f, os.path.join(self.out, name))
        self.artifacts.append(name)

    def json(self, name, data):
        write_json(os.path.join(self.out, name), data)
        self.artifacts.append(name)

    def rows(self, name, header, rows):
        with open(os.path.join(self.out, name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for r in rows:
                fh.write(",".join(repr(float(v)) if not isinstance(v, str) else v for v in r) + "\n")
        self.artifacts.append(name)

    def manifest(self, exit_code):
        with open(os.path.join(self.out, "scenario.ini"), "w", encoding="utf-8", newline="") as fh:
            fh.write(self.sc.text)
        write_json(os.path.join(self.out, "manifest.json"), {
            "subcommand": self.subcommand,
            "scenario": "scenario.ini",
            "scenario_name": self.sc.name,
            "scenario_sha256": self.sc.sha256,
            "seed": self.seed,
            "generator": GENERATOR,
            "exit_code": exit_code,
            "artifacts": sorted(self.artifacts),
            "rerun": f"unbounded-ie {self.subcommand} --scenario scenario.ini"
                     + (f" --seed {self.seed}" if self.seed is not None else ""),
            "versions": {"unbounded_ie": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
        })


# --------------------------------------------------------------------------
# scenario -> objects


def _params(sc: Scenario, section: str) -> dict:
    p = sc.section(section)
    p.pop("name", None)
    if "file" in p and not os.path.isabs(p["file"]):
        p["file"] = os.path.join(os.path.dirname(os.path.abspath(sc.path)), p["file"])
    return p


def operator_kind(sc: Scenario) -> str:
    kind = sc.get("operator", "kind", default="fredholm")
    if kind not in ("fredholm", "hammerstein", "urysohn", "volterra"):
        raise sc.error("operator", "kind", f"unknown operator kind {kind!r}")
    return kind


def build_kernel(sc: Scenario):
    name = sc.get("kernel", "name", required=True)
    params = _params(sc, "kernel")
    try:
        if operator_kind(sc) == "urysohn":
            if name not in URYSOHN_KERNELS:
                raise KeyError(f"unknown Urysohn kernel {name!r}; known: {sorted(URYSOHN_KERNELS)}")
            return URYSOHN_KERNELS[name](params)
        if name not in LINEAR_KERNELS and name != "mollified_volterra":
            raise KeyError(f"unknown linear kernel {name!r}; known: {sorted(LINEAR_KERNELS)}")
        if name == "exponential" and "n" not in params:
            params["n"] = sc.domain.dimension
        return linear_kernel_from_spec(name, params)
    except KeyError as exc:
        raise sc.error("kernel", "name", exc.args[0]) from None
    except ValueError as exc:
        raise sc.error("kernel", None, str(exc)) from None


def build_nonlinearity(sc: Scenario):
    if not sc.has("nonlinearity"):
        return None
    name = sc.get("nonlinearity", "name", required=True)
    if name not in NONLINEARITIES:
        raise sc.error("nonlinearity", "name",
                       f"unknown nonlinearity {name!r}; known: {sorted(NONLINEARITIES)}")
    try:
        return NONLINEARITIES[name](_params(sc, "nonlinearity"))
    except ValueError as exc:
        raise sc.error("nonlinearity", None, str(exc)) from None


def output_axes(sc: Scenario, kernel):
    ax = sc.get("grid", "output", parse_linspace, default=None)
    if ax is None:
        lo = 0.0 if kernel.domain.kind == "half_line" else -5.0
        ax = np.linspace(lo, 5.0, 11)
    if kernel.domain.kind == "half_line" and ax[0] < 0:
        raise sc.error("grid", "output", "output grid leaves the half line")
    return tuple(ax for _ in range(kernel.domain.dimension))


def eps_tail(sc: Scenario) -> float:
    v = sc.get("grid", "eps_tail", float, default=1e-8)
    if not v > 0:
        raise sc.error("grid", "eps_tail", "eps_tail must be positive")
    return v


def fixed_plan(sc: Scenario, kernel):
    """Explicit plan when ``truncation`` is a number, else None (automatic)."""
    trunc = sc.get("grid", "truncation", default="auto")
    if trunc == "auto":
        if getattr(kernel, "tail", None) is None and getattr(kernel, "envelope_tail", None) is None:
            raise sc.error("grid", "truncation", "'auto' truncation needs declared kernel tail metadata")
        return None
    try:
        T = float(trunc)
    except ValueError:
        raise sc.error("grid", "truncation", f"truncation must be 'auto' or a radius, got {trunc!r}") from None
    width = sc.get("grid", "panel_width", float, default=1.0)
    lo, hi = kernel.domain.axis_interval(T)
    span = (hi - lo) if kernel.domain.dimension == 1 else T
    panels = sc.get("grid", "panels", int, default=max(1, math.ceil(span / width)))
    return build_plan(kernel.domain, T, panels)


def operator_spec(sc: Scenario, kernel=None, kind=None) -> OperatorSpec:
    kernel = kernel or build_kernel(sc)
    kind = kind or operator_kind(sc)
    F = build_nonlinearity(sc) if kind == "hammerstein" else None
    if kind == "hammerstein" and F is None:
        raise sc.error("operator", "kind", "hammerstein needs a [nonlinearity] section")
    return OperatorSpec(kind, kernel, output_axes(sc, kernel), plan=fixed_plan(sc, kernel),
                        eps_tail=eps_tail(sc), nonlinearity=F,
                        panel_width=sc.get("grid", "panel_width", float, default=1.0))


def _need_seed(sc: Scenario, seed, section, key):
    if seed is None:
        raise sc.error(section, key, "random inputs need a seed ([scenario] seed or --seed)")
    return seed


def input_function(sc: Scenario, domain, seed):
    """Vectorized callable for the ``[input]`` section."""
    profile = sc.get("input", "profile", default="constant")
    value = sc.get("input", "value", float, default=1.0)
    if profile == "constant":
        return lambda ys: np.full((np.shape(ys)[0], 1), value)
    if profile == "zero":
        return lambda ys: np.zeros((np.shape(ys)[0], 1))
    if profile == "exp_decay":
        return lambda ys: value * np.exp(-np.linalg.norm(ys, axis=1))[:, None]
    if profile == "unit_ball":
        _need_seed(sc, seed, "input", "profile")
        index = sc.get("input", "index", int, default=0)
        return unit_ball_profiles(index + 1, seed)[index]
    raise sc.error("input", "profile", f"unknown input profile {profile!r}")


# --------------------------------------------------------------------------
# subcommands


def cmd_apply(sc: Scenario, run: Run, seed) -> int:
    spec = operator_spec(sc)
    f = input_function(sc, spec.domain, seed)
    if spec.kind == "urysohn":
        f = SampledFunction.from_callable(spec.domain, spec.output_axes, f)
    apply = {"fredholm": apply_fredholm, "volterra": apply_volterra,
             "hammerstein": apply_hammerstein, "urysohn": apply_urysohn}[spec.kind]
    out = apply(spec, f)
    run.csv("output.csv", out)
    run.json("report.json", {"operator": spec.kind, "kernel": spec.kernel.name, **out.meta})
    return EXIT_OK


def cmd_solve_fredholm(sc: Scenario, run: Run, seed) -> int:
    kernel = build_kernel(sc)
    lam = sc.get("solver", "lambda", float, default=1.0)
    spec = operator_spec(sc, kernel, kind="fredholm")
    plan = spec.resolve_plan()
    if kernel.tail is not None:
        plan = with_tail(plan, kernel.tail_bound(plan.T, np.inf if kernel.domain.kind == "half_line"
                                                 else spec.output_radius))
    g = input_function(sc, kernel.domain, seed)
    sol = solve_fredholm_2nd_kind(kernel, g, lam, plan)
    run.csv("solution.csv", sol.sample(spec.output_axes))
    run.rows("nodes.csv", ["y", "f"], [(y[0], v[0]) for y, v in zip(sol.plan.nodes, sol.nodes_values)]
             if kernel.domain.dimension == 1 and kernel.d == 1 else [])
    # the LAPACK estimate can differ in the last bit between runs; 8 digits are stable
    condition = float(f"{sol.condition:.8g}")
    run.json("report.json", {"kernel": kernel.name, "lambda": lam, "condition": condition,
                             "residual": sol.residual, "plan": plan.summary()})
    return EXIT_OK


def _urysohn_plan(sc: Scenario, k, M_max):
    plan = fixed_plan(sc, k)
    if plan is None:
        T = find_truncation_radius(lambda T: k.envelope_tail(T, M_max), eps_tail(sc))
        width = sc.get("grid", "panel_width", float, default=0.5)
        plan = build_plan(k.domain, T, max(1, math.ceil(T / width)))
    return plan


def cmd_fixed_point(sc: Scenario, run: Run, seed) -> int:
    spec = operator_spec(sc)
    tol = sc.get("solver", "tol", float, default=1e-8)
    max_iter = sc.get("solver", "max_iter", int, default=200)
    alpha = sc.get("solver", "alpha", float, default=0.5)
    if spec.kind == "hammerstein":
        k = spec.kernel
        plan = spec.resolve_plan()
        c = k.car4_bound if k.car4_bound is not None else check_car4(k, spec.output_points, plan)
        rep = hammerstein_radius(c, spec.nonlinearity.phi,
                                 sc.get("solver", "search_max", float, default=100.0))
        op = lambda f: apply_hammerstein(spec, f)  # noqa: E731
        extra = {"c": c}
    elif spec.kind == "urysohn":
        k = spec.kernel
        M_grid = sc.floats("solver", "M_grid", default=[0.25, 0.5, 1, 2, 4, 8, 16])
        plan = _urysohn_plan(sc, k, max(M_grid))
        rep = urysohn_radius(k, spec.output_points[:, 0], plan, M_grid)
        op = lambda f: apply_urysohn(spec, f)  # noqa: E731
        extra = {"plan": plan.summary()}
    else:
        raise sc.error("operator", "kind", "fixed-point needs a hammerstein or urysohn operator")
    report = {"operator": spec.kind, "kernel": spec.kernel.name, "radius_search": rep.to_json(), **extra}
    if rep.radius is None:
        report["picard"] = None
        run.json("report.json", report)
        return EXIT_NEGATIVE
    f0 = SampledFunction.constant(spec.domain, spec.output_axes, np.zeros(spec.kernel.d))
    fp = picard_solve(op, f0, rep.radius, alpha=alpha, tol=tol, max_iter=max_iter)
    report["picard"] = fp.to_json()
    run.csv("solution.csv", fp.solution)
    run.json("report.json", report)
    return EXIT_OK if fp.converged and rep.invariant else EXIT_NEGATIVE


def cmd_check_kernel(sc: Scenario, run: Run, seed) -> int:
    kernel = build_kernel(sc)
    eps = sc.get("check", "eps", float, default=1e-3)
    out = {"kernel": kernel.name, "eps": eps}
    if operator_kind(sc) == "urysohn":
        xs = sc.floats("check", "xs", default=[0.0, 0.5, 1.0, 2.0, 4.0])
        Ms = sc.floats("check", "M", default=[1.0])
        plan = _urysohn_plan(sc, kernel, max(Ms))
        out["K_M"] = [estimate_K_M(kernel, M, xs, plan).to_json() for M in Ms]
        try:
            B = check_condition_B(kernel, eps, max(Ms), xs)
            out["B"] = B.to_json() | {"T": B.T["T"]}
            certified = B.certified
        except UnsupportedOperationError as exc:
            out["B"] = {"certified": False, "reason": str(exc)}
            certified = False
    else:
        xs = sc.floats("check", "xs", default=list(np.linspace(-10.0, 10.0, 21)))
        if kernel.domain.kind == "half_line":
            xs = [x for x in xs if x >= 0]
        pts = np.asarray(xs, dtype=float).reshape(-1, 1).repeat(kernel.domain.dimension, axis=1)
        plan = fixed_plan(sc, kernel)
        if plan is None:
            R = float(np.max(np.linalg.norm(pts, axis=1)))
            T = find_truncation_radius(lambda T: kernel.tail_bound(T, R), eps_tail(sc))
            plan = default_plan(kernel, T, sc.get("grid", "panel_width", float, default=1.0))
        per_x = [check_car4(kernel, p[None, :], plan) for p in pts]
        out["car4"] = max(per_x)
        out["car4_spread"] = max(per_x) - min(per_x)
        k2 = check_k2(kernel, eps)
        out["K2"] = k2.to_json()
        if kernel.radial_limit is not None:
            out["K1"] = check_k1_via_limit(kernel, eps).to_json()
        certified = k2.certified
    out["certified"] = certified
    run.json("report.json", out)
    return EXIT_OK if certified else EXIT_NEGATIVE


def cmd_certify(sc: Scenario, run: Run, seed) -> int:
    eps_list = sc.floats("certify", "eps", default=[0.1, 0.01, 0.001])
    family = sc.get("certify", "family", default="fredholm_image")
    if family == "translate_bumps":
        lo, hi, count = sc.floats("certify", "bump_grid", default=[0.0, 100.0, 401])
        axes = (np.linspace(lo, hi, int(count)),)
        centres = sc.floats("certify", "centres", default=[float(c) for c in range(10, 91, 10)])
        fam = translate_bump_family(sc.domain, axes, centres,
                                    sc.get("certify", "width", float, default=1.0))
        cert = certify(fam, eps_list)
        hold, ver = None, None
    elif family == "fredholm_image":
        _need_seed(sc, seed, "certify", "family")
        size = sc.get("certify", "family_size", int, default=100)
        hsize = sc.get("certify", "holdout_size", int, default=50)
        spec = operator_spec(sc, kind="fredholm")
        spec.radial_probes = False
        profiles = unit_ball_profiles(size + hsize, seed)
        images = apply_fredholm(spec, profiles)
        fam, hold = FunctionFamily(images[:size], "Fredholm image"), FunctionFamily(images[size:], "holdout")
        car4 = spec.kernel.car4_bound or max(g.meta["car4"] for g in images)
        cert = certify(fam, eps_list, tail_hint=ray_cauchy_tail(spec.kernel), bound_hint=car4,
                       modulus_hint=fredholm_modulus_hint(spec))
        ver = verify_certificate(hold, cert) if hsize >= 2 else None
    else:
        raise sc.error("certify", "family", f"unknown family {family!r}")
    run.json("certificate.json", cert.to_json())
    missing = sorted(set(eps_list) - {r[0] for r in cert.extension})
    summary = {"family": family, "sample_size": len(fam), "eps": eps_list,
               "witness_missing_for": missing,
               "verification": ver.to_json() if ver is not None else None}
    run.json("report.json", summary)
    ok = not missing and (ver is None or ver.passed)
    return EXIT_OK if ok else EXIT_NEGATIVE


def cmd_volterra_approx(sc: Scenario, run: Run, seed) -> int:
    ms = [int(m) for m in sc.floats("volterra", "m", default=[1, 2, 4, 8, 16, 32, 64])]
    size = sc.get("volterra", "family_size", int, default=10)
    _need_seed(sc, seed, "volterra", "family_size")
    spec = operator_spec(sc, kind="volterra")
    spec.radial_probes = False
    fs = unit_ball_profiles(size, seed)
    results = [volterra_approx_error(spec, fs, m) for m in ms]
    errs = np.array([r.error for r in results])
    slope = float(np.polyfit(np.log(ms), np.log(errs), 1)[0]) if len(ms) > 1 and np.all(errs > 0) else None
    bound_ok = all(r.error <= r.strip_bound + 1e-8 for r in results)
    run.rows("errors.csv", ["m", "error", "strip_bound", "weighted_bound"],
             [(r.m, r.error, r.strip_bound, r.weighted_bound) for r in results])
    run.json("report.json", {"kernel": spec.kernel.name, "family_size": size,
                             "results": [r.to_json() for r in results],
                             "loglog_slope": slope, "within_strip_bound": bound_ok})
    return EXIT_OK if bound_ok else EXIT_NEGATIVE


COMMANDS = {
    "apply": cmd_apply,
    "solve-fredholm": cmd_solve_fredholm,
    "fixed-point": cmd_fixed_point,
    "check-kernel": cmd_check_kernel,
    "certify": cmd_certify,
    "volterra-approx": cmd_volterra_approx,
}


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="unbounded-ie",
                                description="Integral equations on unbounded domains.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--scenario", required=True, help="INI scenario file")
        s.add_argument("--out", default=None, help="output directory (default out/<scenario name>)")
        s.add_argument("--seed", type=int, default=None, help="overrides [scenario] seed")
        s.add_argument("--threads", type=int, default=1, help="worker threads for per-point work")
    return p


def _origin(exc: BaseException) -> str:
    tb = traceback.extract_tb(exc.__traceback__)
    for frame in reversed(tb):
        if "unbounded_ie" in frame.filename:
            return os.path.splitext(os.path.basename(frame.filename))[0]
    return "cli"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_ERROR
    try:
        sc = load(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    seed = args.seed if args.seed is not None else sc.seed
    set_workers(args.threads)
    out = args.out or os.path.join("out", sc.name)
    run = Run(sc, args.subcommand, out, seed)
    try:
        code = COMMANDS[args.subcommand](sc, run, seed)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_ERROR
    except (ValueError, TypeError, KeyError, ArithmeticError, RuntimeError, AssertionError,
            OSError, np.linalg.LinAlgError) as exc:
        print(f"error [{_origin(exc)}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_ERROR
    finally:
        set_workers(1)
    run.manifest(code)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
