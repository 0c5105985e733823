"""Batch front end: INI experiment configs in, CSV fields and a key=value report out.

Usage::

    semicontrol run CONFIG [--command CMD] [--output-dir DIR] [--threads N]
    semicontrol CMD CONFIG [...]            # CMD in state, adjoint, optimize, ...
    semicontrol diff A.csv B.csv [--tol TOL]

Exit codes: 0 success, 1 diff mismatch, 2 config error, 3 solver divergence,
4 validation failure.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import analysis
from .core import (
    INF,
    BoundaryField,
    EllipticCoefficients,
    GridSpec,
    Nonlinearity,
    SolverDivergence,
    SolverError,
    SpaceTimeField,
    SpatialField,
    ValidationError,
)
from .elliptic import EllipticProblem, solve_adjoint_elliptic, solve_state_elliptic
from .optimize import (
    OptimizeOptions,
    gradient,
    gradient_check,
    homotopy,
    objective,
    optimality_report,
    solve_unconstrained,
    transpose_check,
)
from .parabolic import ParabolicProblem, SolveOptions, solve_adjoint, solve_state

COMMANDS = ("state", "adjoint", "optimize", "homotopy", "counterexample", "exponents", "verify")
REPORT_KEYS = ("J", "grad_norm", "iters", "u_linf", "y_linf", "M_active", "ball_active", "status")
EXIT_OK, EXIT_DIFF, EXIT_CONFIG, EXIT_DIVERGED, EXIT_INVALID = 0, 1, 2, 3, 4

SCHEMA = {
    "grid": {"n", "nx", "nt", "T", "L"},
    "problem": {
        "kind", "alpha", "nonlinearity", "coef", "lam", "lambda_f", "a", "a0", "y0", "yd", "g", "u",
    },
    "solver": {"newton_tol", "max_newton", "linear_tol"},
    "optimize": {"grad_tol", "max_iter", "M_schedule", "rho", "threads", "consistency_tol"},
    "run": {"command", "seed", "output_dir"},
    "analysis": {"r", "n", "K", "m_max", "samples", "exponent_kind"},
}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# expressions


def expression(spec, grid, where="field"):
    """Nodal values of a catalog expression: zero, one, const:c, sinsin, gauss:c, coord:i.

    A leading ``c*`` scales the expression, e.g. ``20*sinsin``.
    """
    x = grid.coords
    spec = spec.strip()
    if "*" in spec:
        scale, _, rest = spec.partition("*")
        try:
            c = float(scale)
        except ValueError:
            raise ConfigError(f"{where}: bad scale factor in expression {spec!r}") from None
        return c * expression(rest, grid, where)
    name, _, arg = spec.partition(":")
    try:
        if name == "zero" and not arg:
            return np.zeros(grid.num_nodes)
        if name == "one" and not arg:
            return np.ones(grid.num_nodes)
        if name == "const":
            return np.full(grid.num_nodes, float(arg))
        if name == "sinsin" and not arg:
            return np.prod(np.sin(np.pi * x / np.array(grid.lengths)), axis=1)
        if name == "gauss":
            c = float(arg)
            centre = 0.5 * np.array(grid.lengths)
            return np.exp(-c * np.sum((x - centre) ** 2, axis=1))
        if name == "coord":
            i = int(arg)
            if not 1 <= i <= grid.n:
                raise ConfigError(f"{where}: coord index {i} outside 1..{grid.n}")
            return x[:, i - 1].copy()
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: bad argument in expression {spec!r}") from None
    raise ConfigError(f"{where}: unknown expression {spec!r} (zero, one, const:c, sinsin, gauss:c, coord:i)")


# --------------------------------------------------------------------------
# config


@dataclass
class ExperimentConfig:
    grid: GridSpec
    kind: str
    alpha: float
    f: Nonlinearity
    coeffs: EllipticCoefficients
    exprs: dict
    solve: SolveOptions
    optimize: OptimizeOptions
    consistency_tol: float
    command: str | None
    seed: int
    output_dir: Path
    analysis: dict = field(default_factory=dict)

    def problem(self):
        grid = self.grid
        node = lambda key: SpatialField(grid, expression(self.exprs[key], grid, f"problem.{key}"))
        try:
            if self.kind == "parabolic":
                y0 = node("y0")
                yd = SpaceTimeField(grid, np.tile(node("yd").values, (grid.nt + 1, 1)))
                return ParabolicProblem(grid, self.coeffs, self.f, y0, yd, self.alpha)
            return EllipticProblem(grid, self.coeffs, self.f, node("g"), node("yd"), self.alpha)
        except ValidationError:
            raise
        except ValueError as exc:
            raise ConfigError(f"problem: {exc}") from None

    def control(self):
        grid = self.grid
        vals = expression(self.exprs["u"], grid, "problem.u")
        if self.kind == "parabolic":
            return SpaceTimeField(grid, np.tile(vals, (grid.nt + 1, 1)))
        return BoundaryField(grid, vals[grid.boundary_index])


def _get(cp, section, key, conv, default=None):
    if not cp.has_option(section, key):
        if default is ConfigError:
            raise ConfigError(f"{section}.{key}: required key missing")
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw.strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from None


def _floats(raw):
    return tuple(float(v) for v in raw.replace(",", " ").split())


def _ints(raw):
    return tuple(int(v) for v in raw.replace(",", " ").split())


def _schedule(raw):
    """Comma list of positive reals, or ``pow2:a:b`` for ``2^a, ..., 2^b``."""
    if raw.startswith("pow2:"):
        _, a, b = raw.split(":")
        return tuple(2.0**k for k in range(int(a), int(b) + 1))
    return _floats(raw)


def _per_axis(values, n, key):
    if len(values) == 1:
        return values * n
    if len(values) != n:
        raise ConfigError(f"{key}: expected 1 or {n} values, got {len(values)}")
    return values


def _bool_str(v):
    return "true" if v else "false"


def load_config(path, command=None, output_dir=None, threads=None):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        read = cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"config: {exc}") from None
    if not read:
        raise ConfigError(f"config: cannot read {path}")
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"[{section}]: unknown section")
        for key in cp.options(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}: unknown key")

    for section in SCHEMA:
        if not cp.has_section(section):
            cp.add_section(section)

    command = command or _get(cp, "run", "command", str)
    if command is not None and command not in COMMANDS:
        raise ConfigError(f"run.command: unknown command {command!r}; choose from {COMMANDS}")
    seed = _get(cp, "run", "seed", int, 0)
    out = Path(output_dir) if output_dir else Path(_get(cp, "run", "output_dir", str, "out"))

    kind = _get(cp, "problem", "kind", str, "parabolic")
    if kind not in ("parabolic", "elliptic"):
        raise ConfigError(f"problem.kind: must be parabolic or elliptic, got {kind!r}")
    n = _get(cp, "grid", "n", int, 2)
    if not 1 <= n <= 3:
        raise ConfigError(f"grid.n: must be 1, 2 or 3, got {n}")
    nx = _per_axis(_get(cp, "grid", "nx", _ints, (17,)), n, "grid.nx")
    L = _per_axis(_get(cp, "grid", "L", _floats, (1.0,)), n, "grid.L")
    nt = T = None
    if kind == "parabolic":
        nt = _get(cp, "grid", "nt", int, 16)
        T = _get(cp, "grid", "T", float, 1.0)
    try:
        grid = GridSpec(L, nx, nt, T)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None

    alpha = _get(cp, "problem", "alpha", float, 0.1)
    if not alpha > 0:
        raise ConfigError(f"problem.alpha: must be positive, got {alpha}")
    try:
        f = Nonlinearity(
            _get(cp, "problem", "nonlinearity", str, "zero"),
            coef=_get(cp, "problem", "coef", float, 1.0),
            lam=_get(cp, "problem", "lam", float, 0.0),
            lambda_f=_get(cp, "problem", "lambda_f", float, None),
        )
    except ValidationError:
        raise
    except ValueError as exc:
        raise ConfigError(f"problem.nonlinearity: {exc}") from None
    a0_default = 1.0 if kind == "elliptic" else 0.0
    try:
        coeffs = EllipticCoefficients(_get(cp, "problem", "a", float, 1.0), _get(cp, "problem", "a0", float, a0_default))
    except ValidationError:
        raise
    except ValueError as exc:
        raise ConfigError(f"problem.a: {exc}") from None
    exprs = {key: _get(cp, "problem", key, str, "zero") for key in ("y0", "yd", "g", "u")}
    if kind == "elliptic" and not cp.has_option("problem", "g"):
        exprs["g"] = "one"
    for key, spec in exprs.items():
        expression(spec, grid, f"problem.{key}")

    try:
        solve = SolveOptions(
            newton_tol=_get(cp, "solver", "newton_tol", float, 1e-10),
            max_newton=_get(cp, "solver", "max_newton", int, 50),
            linear_tol=_get(cp, "solver", "linear_tol", float, 1e-12),
        )
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None
    thr = threads if threads is not None else _get(cp, "optimize", "threads", int, None)
    try:
        opt = OptimizeOptions(
            grad_tol=_get(cp, "optimize", "grad_tol", float, 1e-8),
            max_iter=_get(cp, "optimize", "max_iter", int, 500),
            M_schedule=_get(cp, "optimize", "M_schedule", _schedule, tuple(2.0**k for k in range(11))),
            rho=_get(cp, "optimize", "rho", float, None),
            solve=solve,
            threads=thr,
        )
    except ValueError as exc:
        raise ConfigError(f"optimize: {exc}") from None
    consistency_tol = _get(cp, "optimize", "consistency_tol", float, 1e-7)

    ana = {
        "r": _get(cp, "analysis", "r", Fraction, Fraction(2)),
        "n": _get(cp, "analysis", "n", int, n),
        "K": _get(cp, "analysis", "K", int, 8),
        "m_max": _get(cp, "analysis", "m_max", int, 8),
        "samples": _get(cp, "analysis", "samples", int, 2000),
        "exponent_kind": _get(cp, "analysis", "exponent_kind", str, "parabolic"),
    }
    if ana["exponent_kind"] not in ("parabolic", "elliptic"):
        raise ConfigError(f"analysis.exponent_kind: must be parabolic or elliptic, got {ana['exponent_kind']!r}")
    return ExperimentConfig(grid, kind, alpha, f, coeffs, exprs, solve, opt, consistency_tol, command, seed, out, ana)


# --------------------------------------------------------------------------
# artifacts


def field_table(fld):
    """``(header, rows)`` for a field: columns ``t`` (space-time only), ``x1..xn``, ``value``."""
    grid = fld.grid
    names = [f"x{i + 1}" for i in range(grid.n)]
    if isinstance(fld, SpaceTimeField):
        nodes = grid.num_nodes
        t = np.repeat(grid.times, nodes)[:, None]
        x = np.tile(grid.coords, (grid.nt + 1, 1))
        return ["t"] + names + ["value"], np.hstack([t, x, fld.values.reshape(-1, 1)])
    coords = fld.coords if isinstance(fld, BoundaryField) else grid.coords
    return names + ["value"], np.hstack([coords, fld.values.reshape(-1, 1)])


def write_table(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.asarray(rows, dtype=float), fmt="%.12e", delimiter=",", header=",".join(header), comments="")


def write_field(path, fld):
    write_table(path, *field_table(fld))


def read_table(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, rows.reshape(-1, len(header))


def _fmt(v):
    if isinstance(v, bool) or isinstance(v, np.bool_):
        return _bool_str(v)
    if isinstance(v, (int, np.integer, Fraction, str)):
        return str(v)
    if isinstance(v, float) and v == INF:
        return "inf"
    return "%.12e" % float(v)


def write_report(path, values, extra=None):
    lines = [f"{key}={_fmt(values.get(key, math.nan))}" for key in REPORT_KEYS]
    lines += [f"{key}={_fmt(v)}" for key, v in (extra or {}).items()]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def read_report(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        key, _, value = line.partition("=")
        out[key] = value
    return out


# --------------------------------------------------------------------------
# commands


def _linf(values):
    return float(np.max(np.abs(values), initial=0.0))


def _solve_pair(cfg, problem, u):
    if cfg.kind == "parabolic":
        y = solve_state(problem, u, cfg.solve)
        return y, solve_adjoint(problem, y, "tracking", cfg.solve)
    y = solve_state_elliptic(problem, u, cfg.solve)
    return y, solve_adjoint_elliptic(problem, y, cfg.solve)


def _grad_norm(cfg, problem, u):
    g = gradient(problem, u, cfg.solve)
    w = problem.control_weights
    return math.sqrt(float(np.sum(w * g.values**2)))


def cmd_state(cfg, out, with_adjoint=False):
    problem = cfg.problem()
    u = cfg.control()
    y, phi = _solve_pair(cfg, problem, u)
    write_field(out / "state.csv", y)
    if with_adjoint:
        write_field(out / "adjoint.csv", phi)
    values = {
        "J": objective(problem, u, cfg.solve),
        "grad_norm": _grad_norm(cfg, problem, u),
        "iters": 0,
        "u_linf": _linf(u.values),
        "y_linf": _linf(y.values),
        "M_active": False,
        "ball_active": False,
        "status": "ok",
    }
    write_report(out / "report.txt", values)
    return EXIT_OK


def _write_result(out, stem, result):
    write_field(out / f"control{stem}.csv", result.u)
    write_field(out / f"state{stem}.csv", result.y)
    write_field(out / f"adjoint{stem}.csv", result.phi)


def cmd_optimize(cfg, out):
    problem = cfg.problem()
    result = solve_unconstrained(problem, None, cfg.optimize)
    if result.status == "diverged":
        write_report(out / "report.txt", {"status": "diverged"}, {"detail": result.detail})
        raise SolverDivergence(result.detail)
    _write_result(out, "", result)
    write_table(
        out / "history.csv",
        ["iter", "J", "residual"],
        np.column_stack([np.arange(len(result.J_history)), result.J_history, result.residual_history]),
    )
    values = {"status": result.status, "iters": result.iterations, "J": result.J}
    extra = {}
    if result.converged:
        rep = optimality_report(problem, result, cfg.solve)
        values = rep.as_dict()
        extra = {"phi_linf": rep.phi_linf, "consistency": rep.consistency}
    write_report(out / "report.txt", values, extra)
    return EXIT_OK


def cmd_homotopy(cfg, out):
    problem = cfg.problem()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        results = homotopy(problem, None, cfg.optimize)
    base = results[0]
    if base.status == "diverged":
        write_report(out / "report.txt", {"status": "diverged"}, {"detail": base.detail})
        raise SolverDivergence(base.detail)
    _write_result(out, "_ubar", base)
    rows, statuses = [], []
    for r in results[1:]:
        rows.append([r.M, r.distance if r.distance is not None else math.nan, r.J, r.iterations,
                     float(r.converged), float(r.M_active), float(r.ball_active)])
        statuses.append(r.status)
        if r.status != "diverged":
            write_field(out / f"control_M{r.M:g}.csv", r.u)
    write_table(out / "homotopy.csv", ["M", "distance", "J", "iters", "converged", "M_active", "ball_active"], rows)
    d = [row[1] for row in rows]
    ubar_linf = _linf(base.u.values)
    above = [row[1] for row in rows if row[0] >= ubar_linf]
    values = {"status": base.status, "iters": base.iterations, "J": base.J}
    if base.converged:
        values = optimality_report(problem, base, cfg.solve).as_dict()
    values["M_active"] = any(r.M_active for r in results[1:])
    values["ball_active"] = any(r.ball_active for r in results[1:])
    extra = {
        "schedule_converged": all(s == "converged" for s in statuses),
        "distance_nonincreasing": all(b <= a + 10 * cfg.optimize.grad_tol for a, b in zip(d, d[1:])),
        "max_distance_above_ubar_linf": max(above) if above else math.nan,
    }
    write_report(out / "report.txt", values, extra)
    return EXIT_OK


def cmd_exponents(cfg, out):
    r, n = cfg.analysis["r"], cfg.analysis["n"]
    extra = {"r": r, "n": n}
    try:
        if cfg.analysis["exponent_kind"] == "parabolic":
            rep = analysis.parabolic_exponent(r, n)
        else:
            rep = analysis.elliptic_exponents(r, n)
        extra["gn_exponent"] = analysis.gn_exponent(n)
        if n >= 3:
            steps, chain = analysis.bootstrap_steps(n)
            extra["bootstrap_steps"] = steps
            extra["bootstrap_chain"] = " ".join(str(e) for e in chain)
    except ValueError as exc:
        raise ConfigError(f"analysis.n: {exc}") from None
    for key, v in rep.outputs.items():
        extra[key] = v
    for key, ok in rep.flags.items():
        extra[f"flag[{key}]"] = ok
    if rep.note:
        extra["note"] = rep.note
    write_report(out / "report.txt", {"status": "ok" if rep.valid else "invalid"}, extra)
    if not rep.valid:
        raise ValidationError(rep.note or "exponent preconditions failed")
    return EXIT_OK


def growth_table(n, m_max, samples, rng):
    """Rows ``(m, min y over sampled Q_{2^-m, 4^-m}, H_m)`` with ``K = m``."""
    rows = []
    for m in range(1, m_max + 1):
        direction = rng.standard_normal((samples, n))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = 2.0**-m * rng.random(samples) ** (1.0 / n)
        x = direction * radius[:, None]
        t = 1.0 + 4.0**-m * rng.uniform(-1.0, 1.0, samples)
        # include the corners of the box
        x = np.vstack([x, 2.0**-m * np.eye(n)[:1], np.zeros((1, n))])
        t = np.concatenate([t, [1.0 + 4.0**-m, 1.0 - 4.0**-m]])
        y = analysis.counterexample_value(x, t, m)
        rows.append((m, float(np.min(y)), analysis.harmonic(m)))
    return rows


def cmd_counterexample(cfg, out):
    n, K, m_max = cfg.analysis["n"], cfg.analysis["K"], cfg.analysis["m_max"]
    if n not in (2, 3):
        raise ConfigError(f"analysis.n: counterexample needs n in (2, 3), got {n}")
    if K < 1 or m_max < 1:
        raise ConfigError("analysis.K: K and m_max must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    growth = growth_table(n, m_max, cfg.analysis["samples"], rng)
    write_table(out / "growth.csv", ["m", "min_y", "H_m"], growth)
    series = []
    for k in range(1, 2 * K + 1):
        series.append((k, analysis.counterexample_norm_series(k, n, "dt"),
                       analysis.counterexample_norm_series(k, n, "dxx"),
                       analysis.counterexample_norm_series(k, n, "heat")))
    write_table(out / "series.csv", ["K", "S_dt", "S_dxx", "S_heat"], series)
    s_k, s_2k = series[K - 1], series[2 * K - 1]
    norm_k = analysis.counterexample_control_norm(K, n)
    norm_2k = analysis.counterexample_control_norm(2 * K, n)
    extra = {
        "n": n,
        "K": K,
        "growth_ok": all(row[1] >= row[2] - 1e-12 for row in growth),
        "tail_dt": abs(s_2k[1] - s_k[1]),
        "tail_bound_dt": s_k[1] * 2.0 ** (-K + 2),
        "tail_ok": abs(s_2k[1] - s_k[1]) <= s_k[1] * 2.0 ** (-K + 2)
        and abs(s_2k[2] - s_k[2]) <= s_k[2] * 2.0 ** (-K + 2),
        "u_norm_K": norm_k,
        "u_norm_2K": norm_2k,
        "u_norm_rel_change": abs(norm_2k - norm_k) / norm_k,
        "y_center": analysis.harmonic(K),
    }
    values = {"status": "ok", "y_linf": analysis.harmonic(K), "u_linf": math.nan}
    write_report(out / "report.txt", values, extra)
    return EXIT_OK


def cmd_verify(cfg, out):
    problem = cfg.problem()
    rng = np.random.default_rng(cfg.seed)
    shape = problem.control_weights.shape
    u = (SpaceTimeField if cfg.kind == "parabolic" else BoundaryField)(problem.grid, rng.standard_normal(shape))
    grad = gradient_check(problem, u, rng, opts=cfg.solve)
    trans = transpose_check(problem, u, rng, opts=cfg.solve)
    result = solve_unconstrained(problem, None, cfg.optimize)
    if result.status == "diverged":
        raise SolverDivergence(result.detail)
    extra = {
        "gradient_rel_error": grad.worst,
        "gradient_ok": grad.passed,
        "transpose_rel_error": trans.worst,
        "transpose_ok": trans.passed,
    }
    values = {"status": result.status, "iters": result.iterations, "J": result.J}
    ok = grad.passed and trans.passed and result.converged
    if result.converged:
        rep = optimality_report(problem, result, cfg.solve)
        values = rep.as_dict()
        extra["consistency"] = rep.consistency
        extra["optimality_ok"] = rep.grad_norm <= cfg.optimize.grad_tol and rep.consistency <= cfg.consistency_tol
        ok = ok and extra["optimality_ok"]
    values["status"] = "verified" if ok else "failed"
    write_report(out / "report.txt", values, extra)
    if not ok:
        raise ValidationError("verification failed: " + ", ".join(k for k, v in extra.items() if v is False))
    return EXIT_OK


def execute(cfg, command=None):
    command = command or cfg.command
    if command is None:
        raise ConfigError("run.command: no command given")
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    dispatch = {
        "state": lambda: cmd_state(cfg, out),
        "adjoint": lambda: cmd_state(cfg, out, with_adjoint=True),
        "optimize": lambda: cmd_optimize(cfg, out),
        "homotopy": lambda: cmd_homotopy(cfg, out),
        "counterexample": lambda: cmd_counterexample(cfg, out),
        "exponents": lambda: cmd_exponents(cfg, out),
        "verify": lambda: cmd_verify(cfg, out),
    }
    return dispatch[command]()


def diff(path_a, path_b, tol=0.0, stream=None):
    """Compare two CSV artifacts; exit 0 iff the max abs difference is within ``tol``."""
    stream = sys.stdout if stream is None else stream
    try:
        ha, a = read_table(path_a)
        hb, b = read_table(path_b)
    except (OSError, ValueError) as exc:
        print(f"diff: cannot read artifact: {exc}", file=stream)
        return EXIT_CONFIG
    if ha != hb or a.shape != b.shape:
        print(f"diff: shape mismatch: {ha} {a.shape} vs {hb} {b.shape}", file=stream)
        return EXIT_CONFIG
    if a.size == 0:
        print("diff: max abs difference 0 (empty)", file=stream)
        return EXIT_OK
    delta = np.abs(a - b)
    delta[np.isnan(a) & np.isnan(b)] = 0.0
    delta[np.isnan(delta)] = INF
    row, col = np.unravel_index(int(np.argmax(delta)), delta.shape)
    worst = float(delta[row, col])
    labels = ", ".join(f"{h}={a[row, j]:.6g}" for j, h in enumerate(ha) if h != "value" and j != col)
    print(f"diff: max abs difference {worst:.6e} at row {row} ({labels}) column {ha[col]}", file=stream)
    return EXIT_OK if worst <= tol else EXIT_DIFF


def build_parser():
    parser = argparse.ArgumentParser(prog="semicontrol", description="Optimal control of semilinear PDEs")
    sub = parser.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("config", help="INI experiment config")
        p.add_argument("--output-dir", default=None, help="override [run] output_dir")
        p.add_argument("--threads", type=int, default=None, help="worker threads for the homotopy schedule")

    run = sub.add_parser("run", help="run the command named in [run] (or --command)")
    common(run)
    run.add_argument("--command", choices=COMMANDS, default=None)
    for name in COMMANDS:
        common(sub.add_parser(name, help=f"run the {name} command"))
    d = sub.add_parser("diff", help="compare two CSV artifacts")
    d.add_argument("a")
    d.add_argument("b")
    d.add_argument("--tol", type=float, default=0.0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.cmd == "diff":
        return diff(args.a, args.b, args.tol)
    command = args.command if args.cmd == "run" else args.cmd
    try:
        cfg = load_config(args.config, command, args.output_dir, args.threads)
        return execute(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValidationError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
