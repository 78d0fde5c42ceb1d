"""Command-line driver: ``coopvar <task> --config cfg.json --out DIR [--seed N]``.

Exit status: 0 success, 2 invalid configuration, 3 numerical failure (the
diagnostic report is still written).
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import importlib.metadata
import json
import math
import os
import platform
import re
import sys
import tempfile
import time
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .altsys import lambda_interval, lambda_sweep
from .continuation import bifurcation_locate, existence_interval, trace_branch
from .errors import CoopvarError, ConfigInvalid, SchemaMismatch, SolverOutcome
from .grid import PROFILE_KINDS, Grid, Nonlinearity, build_grid, build_weight
from .linops import FULL, ZERO_ONLY, ShiftedOperator
from .nonlocal_solver import (
    NonlocalProblem,
    SolveOptions,
    minimize_energy,
    ordering_margin,
    system_residual,
    uniqueness_probe,
)
from .spectra import (
    block_shift_identity_error,
    cooperative_proportionality_error,
    principal_cooperative,
    principal_L1,
    principal_selfadjoint,
    sigma_bound,
)

SCHEMA_VERSION = "1.0"
TASKS = ("spectra", "sigma-bound", "solve", "branch", "bifurcation", "cross-validate")
BRANCH_COLUMNS = ("gamma", "sup_u", "sup_v", "energy", "min_u_on_core", "mass_frac_plus")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

DEFAULT_CONFIG = {
    "grid": {
        "dimension": 1,
        "extent": [[0.0, 1.0]],
        "n": [129],
        "omega0_spec": {"kind": "interval", "bounds": [0.3, 0.7]},
    },
    "weight": {"profile_kind": "mollified_bump", "amplitude": 1.0},
    "nonlinearity": {"p": 1.0},
    "solver": {},
    "task": {},
}

_pos = {"type": "number", "exclusiveMinimum": 0}
_point = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}


def _kind(name, **props):
    return {
        "type": "object",
        "additionalProperties": False,
        "required": ["kind", *props],
        "properties": {"kind": {"const": name}, **props},
    }


CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["grid"],
    "properties": {
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dimension", "extent", "n", "omega0_spec"],
            "properties": {
                "dimension": {"enum": [1, 2]},
                "extent": {"type": "array", "minItems": 1, "maxItems": 2, "items": _point},
                "n": {
                    "oneOf": [
                        {"type": "integer", "minimum": 8},
                        {"type": "array", "minItems": 1, "maxItems": 2,
                         "items": {"type": "integer", "minimum": 8}},
                    ]
                },
                "omega0_spec": {
                    "oneOf": [
                        _kind("interval", bounds=_point),
                        _kind("complement_interval", bounds=_point),
                        _kind("annulus", center=_point, r_inner={"type": "number", "minimum": 0},
                              r_outer=_pos),
                        _kind("disk", center=_point, radius=_pos),
                        _kind("rectangle", lower=_point, upper=_point),
                    ]
                },
            },
        },
        "weight": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "profile_kind": {"enum": list(PROFILE_KINDS)},
                "amplitude": _pos,
                "band_cells": _pos,
            },
        },
        "nonlinearity": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"p": {"type": "number", "minimum": 1}},
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gd_tol": _pos,
                "newton_tol": _pos,
                "max_gd_iter": {"type": "integer", "minimum": 1},
                "max_newton_iter": {"type": "integer", "minimum": 1},
                "blowup_cap": _pos,
                "n_starts": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "task": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "name": {"enum": list(TASKS)},
                "lambda": {"type": "number"},
                "lambdas": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "gamma": _pos,
                "gamma_factor": _pos,
                "alpha": _pos,
                "beta": _pos,
                "pairs": {"type": "array", "items": {"type": "array", "items": _pos,
                                                     "minItems": 2, "maxItems": 2}},
                "n_points": {"type": "integer", "minimum": 2},
                "svg": {"type": "boolean"},
                "supinf_samples": {"type": "integer", "minimum": 0},
            },
        },
    },
}


# ---------------------------------------------------------------------------
# formatting and atomic output


def fmt_float(x) -> str:
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return f"{x:.17g}"


_FLOAT_TAG = "\x00f17:"


def _tag_floats(obj):
    if isinstance(obj, dict):
        return {str(k): _tag_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_tag_floats(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return _FLOAT_TAG + f"{x:.17g}"
    if isinstance(obj, np.ndarray):
        return _tag_floats(obj.tolist())
    return obj


def dumps(obj) -> str:
    """JSON with every float written to 17 significant digits; non-finite -> null."""
    text = json.dumps(_tag_floats(obj), indent=2, sort_keys=True)
    return re.sub(r'"\\u0000f17:([^"]*)"', r"\1", text) + "\n"


def csv_text(columns, rows) -> str:
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (bool, np.bool_)):
                cells.append("1" if v else "0")
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(fmt_float(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def atomic_write(path: Path, text: str) -> str:
    """Write via a temporary file in the same directory and rename; returns sha256."""
    path = Path(path)
    data = text.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return hashlib.sha256(data).hexdigest()


def sha256_json(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


# ---------------------------------------------------------------------------
# configuration


def validate_config(cfg) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        msgs = []
        for e in errors:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            msgs.append(f"{where}: {e.message}")
        raise ConfigInvalid(msgs)


def load_config(path: str | None, grid_path: str | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid([f"<file>: cannot read config {path}: {exc}"]) from exc
        if not isinstance(doc, dict):
            raise ConfigInvalid(["<root>: config must be a JSON object"])
        cfg.update(doc)
    if grid_path is not None:
        try:
            grid_doc = json.loads(Path(grid_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid([f"<file>: cannot read grid config {grid_path}: {exc}"]) from exc
        cfg["grid"] = grid_doc.get("grid", grid_doc) if isinstance(grid_doc, dict) else grid_doc
    validate_config(cfg)
    return cfg


def apply_overrides(cfg: dict, task: str, args) -> dict:
    cfg = copy.deepcopy(cfg)
    t = cfg.setdefault("task", {})
    if "name" in t and t["name"] != task:
        raise ConfigInvalid([f"task/name: config names {t['name']!r} but {task!r} was requested"])
    t["name"] = task
    if args.lam is not None:
        t["lambda"] = args.lam
    if args.gamma is not None:
        t["gamma"] = args.gamma
    if args.p is not None:
        cfg.setdefault("nonlinearity", {})["p"] = args.p
    if args.starts is not None:
        cfg.setdefault("solver", {})["n_starts"] = args.starts
    if args.seed is not None:
        cfg.setdefault("solver", {})["seed"] = args.seed
    validate_config(cfg)
    return cfg


def solver_options(cfg: dict) -> SolveOptions:
    s = cfg.get("solver", {})
    keys = ("gd_tol", "newton_tol", "max_gd_iter", "max_newton_iter", "blowup_cap")
    return SolveOptions(**{k: s[k] for k in keys if k in s})


class Context:
    """Objects shared by every task for one configuration."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        g = cfg["grid"]
        self.grid: Grid = build_grid(g["dimension"], g["extent"], g["n"], g["omega0_spec"])
        w = cfg.get("weight", {})
        self.weight = build_weight(self.grid, w.get("profile_kind", "mollified_bump"),
                                   w.get("amplitude", 1.0), w.get("band_cells", 4.0))
        self.nl = Nonlinearity(exponent=float(cfg.get("nonlinearity", {}).get("p", 1.0)))
        self.opts = solver_options(cfg)
        self.seed = int(cfg.get("solver", {}).get("seed", 0))
        self.rng = np.random.default_rng(self.seed)
        self.task = cfg.get("task", {})
        self.op_full = ShiftedOperator(self.grid, FULL)
        self.op_zero = ShiftedOperator(self.grid, ZERO_ONLY)

    def problem(self, lam: float) -> NonlocalProblem:
        return NonlocalProblem(self.grid, self.weight, self.nl, lam, op=self.op_full, op_zero=self.op_zero)

    def coords_columns(self):
        x = self.grid.node_coords
        names = ["x", "y"][: self.grid.dimension]
        return names, [x[:, k] for k in range(self.grid.dimension)]


# ---------------------------------------------------------------------------
# tasks; each returns (files: dict name -> text, ok: bool)


def closed_form_sigma1(grid: Grid) -> float:
    return float(sum((2.0 / h**2) * (1.0 - math.cos(math.pi * h / (b - a)))
                     for h, (a, b) in zip(grid.h, grid.extent)))


def task_spectra(ctx: Context):
    s1 = principal_selfadjoint(ctx.op_full)
    s10 = principal_selfadjoint(ctx.op_zero)
    pairs = ctx.task.get("pairs") or [[ctx.task.get("alpha", 4.0), ctx.task.get("beta", 9.0)]]
    rows = []
    for alpha, beta in pairs:
        coop = principal_cooperative(ctx.op_full, 0.0, 0.0, alpha, beta)
        coop0 = principal_cooperative(ctx.op_zero, 0.0, 0.0, alpha, beta)
        l1 = principal_L1(ctx.op_zero, alpha, beta)
        rows.append({
            "alpha": alpha,
            "beta": beta,
            "coop_value": coop.value,
            "coop_expected": s1.value - math.sqrt(alpha * beta),
            "coop_abs_error": block_shift_identity_error(ctx.op_full, alpha, beta),
            "proportionality_error": cooperative_proportionality_error(ctx.op_full, alpha, beta),
            "coop_zero_value": coop0.value,
            "L1_zero_value": l1.value,
            "coop_minus_l1_zero": coop0.value - l1.value,
        })
    ncomp, _ = ctx.op_zero.components()
    report = {
        "sigma1": s1.value,
        "sigma1_arpack": ctx.op_full.sigma1,
        "sigma1_closed_form": closed_form_sigma1(ctx.grid),
        "sigma1_residual": s1.residual,
        "sigma1_0": s10.value,
        "zero_components": int(ncomp),
        "pairs": rows,
    }
    if len(rows) == 1:
        report["coop_value"] = rows[0]["coop_value"]
    return {"spectra.json": report}, True


def task_sigma_bound(ctx: Context):
    s1 = principal_selfadjoint(ctx.op_full).value
    lams = ctx.task.get("lambdas") or [ctx.task.get("lambda", 0.0)]
    n_sup = int(ctx.task.get("supinf_samples", 16))
    rows, recs = [], []
    for lam in lams:
        sb = sigma_bound(ctx.op_full, ctx.op_zero, lam, supinf_samples=n_sup, rng=ctx.rng)
        rows.append((lam, sb.lower_bound, sb.value, sb.upper_bound, sb.supinf_estimate))
        recs.append({
            "lambda": lam,
            "lower_bound": sb.lower_bound,
            "sigma": sb.value,
            "upper_bound": sb.upper_bound,
            "supinf_estimate": sb.supinf_estimate,
            "left_strict": bool(sb.lower_bound < sb.value),
            "right_holds": bool(sb.value <= sb.upper_bound * (1 + 1e-12)),
            "minimizer_sign": sb.minimizer_sign,
            "pencil_asymmetry": sb.pencil_asymmetry,
        })
    files = {
        "sigma_bound.csv": csv_text(("lambda", "lower_bound", "sigma", "upper_bound", "supinf_estimate"), rows),
        "sigma_bound.json": {"sigma1": s1, "points": recs},
    }
    return files, True


def task_solve(ctx: Context):
    lam = float(ctx.task.get("lambda", 0.0))
    beta = float(ctx.task.get("beta", 1.0))
    prob = ctx.problem(lam)
    lo, hi = existence_interval(prob)
    if "gamma" in ctx.task:
        gamma = float(ctx.task["gamma"])
    else:
        gamma = lo * float(ctx.task.get("gamma_factor", 1.5))
    alpha = gamma / beta
    report = {"lambda": lam, "gamma": gamma, "alpha": alpha, "beta": beta,
              "gamma_lo": lo, "gamma_hi": hi, "in_interval": bool(lo < gamma < hi)}
    n_starts = int(ctx.cfg.get("solver", {}).get("n_starts", 1))
    try:
        res = minimize_energy(prob, gamma, opts=ctx.opts)
    except SolverOutcome as exc:
        report.update(status=exc.code, message=str(exc))
        if exc.result is not None:
            report["last_sup_u"] = exc.result.sup_u
        return {"solve.json": report}, False
    v = prob.recover_v(res.u, beta)
    r1, r2 = system_residual(prob, res.u, v, alpha, beta)
    report.update(
        status=res.status,
        energy=res.energy,
        grad_norm=res.grad_norm,
        newton_residual=res.newton_residual,
        positivity_margin=res.positivity_margin,
        iterations=res.iterations,
        sup_u=res.sup_u,
        sup_v=float(np.max(v)),
        system_residuals=[r1, r2],
        ordering_margin=ordering_margin(res.u, v, alpha, beta),
    )
    if n_starts > 1:
        probe = uniqueness_probe(prob, gamma, n_starts, ctx.rng, beta, ctx.opts)
        report["uniqueness"] = {
            "n_starts": n_starts,
            "outcomes": probe.outcomes,
            "n_distinct_positive": probe.n_distinct_positive,
        }
    names, cols = ctx.coords_columns()
    rows = list(zip(*cols, res.u, v))
    return {"solve.json": report, "solution.csv": csv_text((*names, "u", "v"), rows)}, True


def task_branch(ctx: Context):
    lam = float(ctx.task.get("lambda", 0.0))
    beta = float(ctx.task.get("beta", 1.0))
    n_points = int(ctx.task.get("n_points", 24))
    prob = ctx.problem(lam)
    br = trace_branch(prob, n_points, beta, ctx.opts)
    rows = [(p.gamma, p.sup_u, p.sup_v, p.energy, p.min_u_on_core, p.mass_frac_plus) for p in br.points]
    text = csv_text(BRANCH_COLUMNS, rows)
    inc = br.min_increments()
    summary = {
        "lambda": lam,
        "beta": beta,
        "gamma_lo": br.gamma_lo,
        "gamma_hi": br.gamma_hi,
        "n_points_requested": n_points,
        "n_points_resolved": len(br.points),
        "termination": br.termination,
        "min_increment": float(inc.min()) if inc.size else None,
        "min_ordering_margin": min((p.ordering_margin for p in br.points), default=None),
        "max_newton_residual": max((p.newton_residual for p in br.points), default=None),
        "grid_gammas": br.grid_gammas,
    }
    files = {"branch.csv": text, "branch.json": summary}
    if ctx.task.get("svg", True):
        files["branch.svg"] = render_bifurcation_svg(text, br.gamma_lo, br.gamma_hi)
    return files, len(br.points) > 0


def task_bifurcation(ctx: Context):
    s1 = ctx.op_full.sigma1
    lams = ctx.task.get("lambdas") or [0.0, s1 / 4, s1 / 2]
    rows, recs = [], []
    for lam in lams:
        rep = bifurcation_locate(ctx.problem(lam))
        rows.append((lam, rep.gamma_star, rep.expected, rep.rel_error, rep.slope, rep.slope_expected))
        recs.append({"lambda": lam, **rep.__dict__})
    cols = ("lambda", "gamma_star", "expected", "rel_error", "slope", "slope_expected")
    return {"bifurcation.csv": csv_text(cols, rows), "bifurcation.json": {"points": recs}}, True


def task_cross_validate(ctx: Context):
    alpha = float(ctx.task.get("alpha", 10.0))
    beta = float(ctx.task.get("beta", 10.0))
    interval = lambda_interval(ctx.op_full, ctx.op_zero, alpha, beta)
    lams = ctx.task.get("lambdas")
    if lams is None:
        if "lambda" in ctx.task:
            lams = [ctx.task["lambda"]]
        else:
            lo = interval.lo
            top = max(interval.hi, interval.sigma1)
            lams = list(np.linspace(lo - 0.5 * abs(top - lo), top + 0.1 * abs(top - lo), 9))
    reports = lambda_sweep(ctx.grid, ctx.weight, alpha, beta, lams, ctx.nl, ctx.opts)
    rows = [(r.lam, r.exists_nonlocal, r.exists_coupled, r.agreement) for r in reports]
    summary = {
        "alpha": alpha,
        "beta": beta,
        "altpc_interval": [interval.lo, interval.hi],
        "altpc_empty": interval.empty,
        "sigma1": interval.sigma1,
        "points": [
            {k: getattr(r, k) for k in ("lam", "exists_nonlocal", "exists_coupled", "outcome_nonlocal",
                                        "outcome_coupled", "agreement", "in_pc", "in_altpc", "flags")}
            for r in reports
        ],
        "n_disagreements": sum(bool(r.flags) for r in reports),
    }
    cols = ("lambda", "exists_nonlocal", "exists_coupled", "agreement")
    return {"sweep.csv": csv_text(cols, rows), "cross_validate.json": summary}, True


TASK_FUNCS = {
    "spectra": task_spectra,
    "sigma-bound": task_sigma_bound,
    "solve": task_solve,
    "branch": task_branch,
    "bifurcation": task_bifurcation,
    "cross-validate": task_cross_validate,
}


# ---------------------------------------------------------------------------
# SVG


def render_bifurcation_svg(branch_csv: str, gamma_lo: float, gamma_hi: float,
                           width: int = 640, height: int = 400) -> str:
    """Line chart of sup_u against gamma with vertical markers at both interval ends."""
    lines = [ln for ln in branch_csv.strip().splitlines()]
    if not lines or tuple(lines[0].split(",")) != BRANCH_COLUMNS:
        raise SchemaMismatch(f"branch CSV header must be {','.join(BRANCH_COLUMNS)}")
    pts = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != len(BRANCH_COLUMNS):
            raise SchemaMismatch(f"bad branch CSV row: {ln!r}")
        pts.append((float(cells[0]), float(cells[1])))
    m = 50
    x0, x1 = gamma_lo, gamma_hi
    if not x1 > x0:
        raise SchemaMismatch("gamma_hi must exceed gamma_lo")
    pad = 0.02 * (x1 - x0)
    x0, x1 = x0 - pad, x1 + pad
    ys = [y for _, y in pts if y > 0]
    # sup_u spans many decades near blow-up: log axis
    y0 = math.log10(min(ys)) if ys else 0.0
    y1 = math.log10(max(ys)) if ys else 1.0
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def sx(x):
        return m + (x - x0) / (x1 - x0) * (width - 2 * m)

    def sy(y):
        ly = math.log10(y) if y > 0 else y0
        return height - m - (ly - y0) / (y1 - y0) * (height - 2 * m)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line class="axis" x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>',
        f'<line class="axis" x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>',
        f'<text x="{width / 2:.2f}" y="{height - 12}" text-anchor="middle" font-size="12">gamma</text>',
        f'<text x="14" y="{height / 2:.2f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.2f})">sup u (log10)</text>',
    ]
    for name, g in (("gamma_lo", gamma_lo), ("gamma_hi", gamma_hi)):
        out.append(
            f'<line class="marker" data-name="{name}" x1="{sx(g):.4f}" y1="{m}" x2="{sx(g):.4f}" '
            f'y2="{height - m}" stroke="gray" stroke-dasharray="4 3"/>'
        )
    if pts:
        coords = " ".join(f"{sx(x):.4f},{sy(y):.4f}" for x, y in pts)
        out.append(f'<polyline class="branch" points="{coords}" fill="none" stroke="steelblue" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# orchestration


def write_outputs(out_dir: Path, files: dict) -> dict:
    hashes = {}
    for name in sorted(files):
        content = files[name]
        if not isinstance(content, str):
            content = dumps({"schema_version": SCHEMA_VERSION, **content})
        hashes[name] = atomic_write(out_dir / name, content)
    return hashes


def write_manifest(out_dir: Path, cfg: dict, ctx: Context | None, hashes: dict, wall: float,
                   status: str, exit_code: int) -> None:
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "task": cfg.get("task", {}).get("name"),
        "status": status,
        "exit_code": exit_code,
        "config_sha256": sha256_json(cfg),
        "grid_sha256": sha256_json(ctx.grid.to_json()) if ctx is not None else None,
        "seed": int(cfg.get("solver", {}).get("seed", 0)),
        "versions": {
            "coopvar": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "jsonschema": importlib.metadata.version("jsonschema"),
        },
        "wall_time_s": wall,
        "files": {k: {"sha256": v} for k, v in sorted(hashes.items())},
    }
    atomic_write(out_dir / "manifest.json", dumps(manifest))


def _is_validation_error(exc: CoopvarError) -> bool:
    return isinstance(exc, ValueError) and not isinstance(exc, SolverOutcome)


def run(task: str, cfg: dict, out_dir: str | Path) -> int:
    """Execute one task; returns the exit status.

    Validation errors (including an inadmissible shift) write nothing.
    Numerical failures still write the diagnostic report and manifest.
    """
    t0 = time.perf_counter()
    out_dir = Path(out_dir)
    ctx = None
    try:
        ctx = Context(cfg)
        files, ok = TASK_FUNCS[task](ctx)
        status, code = ("OK", EXIT_OK) if ok else ("NUMERICAL_FAILURE", EXIT_NUMERIC)
    except CoopvarError as exc:
        if _is_validation_error(exc):
            print(f"CONFIG_INVALID: {exc.code}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        status, code = exc.code, EXIT_NUMERIC
        files = {"error.json": {"task": task, "status": exc.code, "message": str(exc)}}
    out_dir.mkdir(parents=True, exist_ok=True)
    hashes = write_outputs(out_dir, files)
    write_manifest(out_dir, cfg, ctx, hashes, time.perf_counter() - t0, status, code)
    if code != EXIT_OK:
        print(f"{status}: see {out_dir}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coopvar", description="Coexistence states of a cooperative "
                                "system with a degenerate logistic weight.")
    p.add_argument("task", choices=TASKS)
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override solver.seed")
    p.add_argument("--lambda", dest="lam", type=float, help="shift lambda")
    p.add_argument("--gamma", type=float, help="coupling product alpha*beta (solve)")
    p.add_argument("--p", type=float, help="nonlinearity exponent")
    p.add_argument("--starts", type=int, help="number of random starts (solve)")
    p.add_argument("--grid-config", help="JSON file with a grid block replacing the config's")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.grid_config)
        cfg = apply_overrides(cfg, args.task, args)
    except ConfigInvalid as exc:
        for msg in exc.messages:
            print(f"CONFIG_INVALID: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.task, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
