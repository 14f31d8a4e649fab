"""Command-line entry point: ``quadgrad {solve,branch,verify,transform}``.

Exit codes: 0 success, 1 config error, 2 divergence or failed certification,
3 blow-up.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, evaluate_field, load_config
from .continuation import INCONCLUSIVE, Branch, classify, model_branch
from .grid import GridFunction, Region, half_boxes
from .harnack import (
    CertificationError,
    HypothesisError,
    OperatorFamily,
    apriori_chain,
    largest_uniform_eps,
    sweep_family,
    verify_blmp,
    verify_bqsmp,
    verify_bwhi,
)
from .maxprinciple import PreconditionError, localization_check, negative_case_bound
from .solver import BLOWUP, CONVERGED, SingularMatrixError, newton
from .transform import TransformOverflow, TransformSpec, forward

log = logging.getLogger("quadgrad")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_BLOWUP = 3


def fmt(x) -> str:
    """17 significant digits; infinities as ``inf``/``-inf``."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def write_csv(path: Path, header: list[str], rows) -> int:
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
            n += 1
    return n


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return fmt(x) if not math.isfinite(x) else x
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_summary(path: Path, command: str, cfg: ExperimentConfig, results: dict):
    doc = {"command": command, "config": cfg.model_dump(mode="json"), "results": _jsonable(results)}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_summary(path: str | Path) -> tuple[ExperimentConfig, dict]:
    """Read a summary back; its config section is validated again."""
    doc = json.loads(Path(path).read_text())
    return ExperimentConfig.model_validate(doc["config"]), doc


def _node_rows(u: GridFunction, *extra: GridFunction):
    X = [x.ravel() for x in u.grid.coords]
    cols = X + [u.values.ravel()] + [e.values.ravel() for e in extra]
    return zip(*cols)


def _coord_names(dim: int) -> list[str]:
    return [f"x{k}" for k in range(dim)]


# --------------------------------------------------------------------------
# SVG
# --------------------------------------------------------------------------


def branch_svg(branch: Branch, title: str, path: Path, marks: dict[str, float] | None = None) -> int:
    """Plot ``(lam, m(u))`` with fold markers; returns the number of point markers."""
    W, H, pad = 640, 420, 50
    lam, m = branch.lams, branch.m_u
    lo_x, hi_x = float(lam.min()), float(lam.max())
    extra = [v for v in (marks or {}).values() if v is not None and np.isfinite(v)]
    if extra:
        lo_x, hi_x = min(lo_x, *extra), max(hi_x, *extra)
    lo_y, hi_y = float(m.min()), float(m.max())
    sx = (W - 2 * pad) / (hi_x - lo_x or 1.0)
    sy = (H - 2 * pad) / (hi_y - lo_y or 1.0)
    px = lambda x: pad + (x - lo_x) * sx  # noqa: E731
    py = lambda y: H - pad - (y - lo_y) * sy  # noqa: E731

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(W), height=str(H), viewBox=f"0 0 {W} {H}")
    t = ET.SubElement(svg, "title")
    t.text = title
    head = ET.SubElement(svg, "text", x=str(W // 2), y="24", attrib={"text-anchor": "middle", "font-size": "15"})
    head.text = title
    ET.SubElement(svg, "rect", x=str(pad), y=str(pad), width=str(W - 2 * pad), height=str(H - 2 * pad), fill="none", stroke="#888")
    for label, x, y, anchor in (
        (f"lambda [{lo_x:.4g}, {hi_x:.4g}]", W // 2, H - 12, "middle"),
        (f"m(u) [{lo_y:.4g}, {hi_y:.4g}]", 8, pad - 8, "start"),
    ):
        el = ET.SubElement(svg, "text", x=str(x), y=str(y), attrib={"text-anchor": anchor, "font-size": "12"})
        el.text = label
    for name, val in (marks or {}).items():
        if val is None or not np.isfinite(val):
            continue
        x = f"{px(val):.2f}"
        ET.SubElement(svg, "line", x1=x, x2=x, y1=str(pad), y2=str(H - pad), stroke="#4a4", attrib={"stroke-dasharray": "4 3", "class": "mark"})
        el = ET.SubElement(svg, "text", x=x, y=str(pad + 14), attrib={"font-size": "11", "fill": "#4a4"})
        el.text = name
    pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(lam, m))
    ET.SubElement(svg, "polyline", points=pts, fill="none", stroke="#236", attrib={"stroke-width": "1.5"})
    for a, b in zip(lam, m):
        ET.SubElement(svg, "circle", cx=f"{px(a):.2f}", cy=f"{py(b):.2f}", r="2", fill="#236", attrib={"class": "point"})
    for i, lam_star in branch.folds:
        ET.SubElement(svg, "circle", cx=f"{px(lam_star):.2f}", cy=f"{py(m[i]):.2f}", r="6", fill="none", stroke="#c22", attrib={"class": "fold"})
    ET.ElementTree(svg).write(path, encoding="utf-8", xml_declaration=True)
    return len(lam)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _exit_for(status: str) -> int:
    return {CONVERGED: EXIT_OK, BLOWUP: EXIT_BLOWUP}.get(status, EXIT_DIVERGED)


def _solve(cfg: ExperimentConfig, lam: float | None):
    spec = cfg.build_problem(lam)
    sol = newton(spec, GridFunction(spec.grid, spec.g.copy()), cfg.solver.tol, cfg.solver.max_iter)
    return spec, sol


def cmd_solve(cfg: ExperimentConfig, out: Path, args) -> int:
    try:
        spec, sol = _solve(cfg, args.lam)
    except SingularMatrixError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    write_csv(out / "solution.csv", _coord_names(spec.grid.dimension) + ["u"], _node_rows(sol.u))
    res = {"status": sol.status, "lam": sol.lam, "sup_u": sol.sup, "residual": sol.residual, "iterations": sol.iterations}
    write_summary(out / "summary.json", "solve", cfg, res)
    print(f"{sol.status}: sup u = {sol.sup:.10g}, residual {sol.residual:.3e}, {sol.iterations} iterations")
    return _exit_for(sol.status)


def _branch(cfg: ExperimentConfig) -> tuple[Branch, object]:
    spec = cfg.build_problem()
    co = cfg.continuation
    obs = tuple(co.observation) if co.observation else None
    br = model_branch(
        spec, tuple(co.lam_range), co.ds, cfg.solver.tol, ds_min=co.ds_min, max_steps=co.max_steps, observation=obs
    )
    return br, spec


def cmd_branch(cfg: ExperimentConfig, out: Path, args) -> int:
    br, _ = _branch(cfg)
    cls = classify(br)
    fold_idx = {i for i, _ in br.folds}
    rows = [(i, p.s, p.lam, p.m_u, p.sup_u, int(i in fold_idx), p.solution.status) for i, p in enumerate(br.points)]
    write_csv(out / "branch.csv", ["index", "s", "lam", "m_u", "sup_u", "fold_flag", "status"], rows)
    marks = {"lambda1": br.lambda1}
    if cls.asymptote is not None:
        marks["asymptote"] = cls.asymptote
    branch_svg(br, f"{cfg.name}: {cls.kind} diagram", out / "branch.svg", marks)
    res = {
        "classification": cls.kind,
        "fold_lambda": cls.fold_lambda,
        "asymptote": cls.asymptote,
        "lambda1": br.lambda1,
        "termination": br.termination,
        "points": len(br.points),
        "folds": [lam for _, lam in br.folds],
        "sup_u_max": float(np.max(br.sup_u)),
    }
    write_summary(out / "summary.json", "branch", cfg, res)
    print(f"{cls.kind} diagram; {len(br.points)} points, termination {br.termination}")
    return EXIT_OK if cls.kind != INCONCLUSIVE else EXIT_DIVERGED


def _verify_family(cfg, out, args) -> dict:
    v = cfg.verify
    grid = cfg.build_grid()
    fam = OperatorFamily(grid, tuple(v.ellipticity), v.drift, v.family_count, v.family_seed)
    regions = half_boxes(grid, v.ratios)
    rows = sweep_family(fam, v.eps, v.inequalities, regions, threads=args.threads)
    write_csv(
        out / "reports.csv",
        ["seed", "sample", "inequality", "exponent", "lhs", "rhs", "constant"],
        ((fam.seed, k, r.inequality, r.exponent, r.lhs, r.rhs, r.constant) for k, r in rows),
    )
    table = {}
    for kind in v.inequalities:
        for eps in v.eps:
            cs = [r.constant for _, r in rows if r.inequality == kind and r.exponent == eps]
            table[f"{kind}@{eps:g}"] = {"min": min(cs), "max": max(cs)}
    uniform = {kind: largest_uniform_eps(rows, kind) for kind in v.inequalities}
    finite = all(np.isfinite(r.lhs) and np.isfinite(r.rhs) for _, r in rows)
    return {"reports": len(rows), "constants": table, "largest_uniform_eps": uniform, "ok": finite}


def _verify_single(cfg, out, args) -> dict:
    v = cfg.verify
    spec = cfg.build_problem()
    grid = spec.grid
    u = GridFunction(grid, evaluate_field(v.field, grid))
    f = evaluate_field(v.source, grid)
    regions = half_boxes(grid, v.ratios)
    reports = []
    for eps in v.eps:
        for kind in v.inequalities:
            if kind == "BQSMP":
                reports.append(verify_bqsmp(u, spec, grid, eps, regions))
            elif kind == "BWHI":
                reports.append(verify_bwhi(u, f, spec, grid, eps, regions))
            else:
                reports.append(verify_blmp(u, 0.0, f, spec, grid, p=eps, regions=regions))
    write_csv(
        out / "reports.csv",
        ["inequality", "exponent", "lhs", "rhs", "constant"],
        ((r.inequality, r.exponent, r.lhs, r.rhs, r.constant) for r in reports),
    )
    return {"reports": len(reports), "constants": {f"{r.inequality}@{r.exponent:g}": r.constant for r in reports}, "ok": True}


def _verify_negative(cfg, out, args) -> dict:
    br, spec = _branch(cfg)
    rep = negative_case_bound(spec, br)
    write_csv(
        out / "zmin.csv",
        ["lam", "sup_u", "lipschitz", "z_min"],
        zip(rep.lams, rep.sup_u, rep.lipschitz, rep.z_min),
    )
    cert = rep.certificate
    write_csv(out / "vazquez.csv", ["delta", "integral"], zip(cert.deltas, cert.integrals))
    return {
        "mu1": rep.mu1,
        "lipschitz_max": rep.lipschitz_max,
        "z_min": rep.z_floor,
        "termination": br.termination,
        "vazquez": {"nonlinearity": cert.nonlinearity, "diverges": cert.diverges},
        "ok": bool(rep.z_floor > 0 and cert.diverges),
    }


def _verify_localization(cfg, out, args) -> dict:
    br, spec = _branch(cfg)
    grid = spec.grid
    lo, hi = cfg.verify.region
    O = Region.from_coords(grid, [lo] + [0.0] * (grid.dimension - 1), [hi] + list(grid.extents[1:]))
    u0 = newton(spec.with_lambda(0.0), GridFunction(grid, spec.g.copy()), cfg.solver.tol)
    reps = [localization_check(p.solution, u0, spec, O) for p in br.points]
    write_csv(
        out / "localization.csv",
        ["lam", "sup_inside", "sup_edge", "u0_norm", "slack", "comparison"],
        ((r.lam, r.sup_inside, r.sup_edge, r.u0_norm, r.slack, int(r.comparison.holds)) for r in reps),
    )
    ok = all(r.holds and r.comparison.holds for r in reps)
    return {"points": len(reps), "min_slack": min(r.slack for r in reps), "ok": ok}


def _verify_chain(cfg, out, args) -> dict:
    br, spec = _branch(cfg)
    mu1, mu2 = cfg.verify.mu_pair
    eps = cfg.verify.eps[0]
    regions = half_boxes(spec.grid, cfg.verify.ratios)
    lo, hi = cfg.verify.lam_window or cfg.continuation.lam_range
    reps, skipped = [], 0
    for p in br.points:
        if not lo <= p.lam <= hi:
            continue
        try:
            reps.append(apriori_chain(p.solution, spec.with_lambda(p.lam), mu1, mu2, regions, eps))
        except TransformOverflow:
            skipped += 1
    write_csv(
        out / "chain.csv",
        ["lam", "sup_u", "k1", "k2", "k3", "k4", "sup_v2", "bound"],
        ((r.lam, r.sup_u, *r.constants, r.sup_v2, r.bound) for r in reps),
    )
    K = np.array([r.constants for r in reps])
    sup = np.array([r.sup_u for r in reps])
    variation = (K.max(axis=0) / K.min(axis=0)).tolist()
    ok = bool(np.all(np.isfinite(K)) and all(r.tight <= 1 + 1e-9 for r in reps))
    return {"points": len(reps), "skipped_overflow": skipped, "constant_variation": variation, "sup_u_variation": float(sup.max() / sup.min()), "ok": ok}


VERIFY_MODES = {
    "family": _verify_family,
    "single": _verify_single,
    "negative-case": _verify_negative,
    "localization": _verify_localization,
    "chain": _verify_chain,
}


def cmd_verify(cfg: ExperimentConfig, out: Path, args) -> int:
    mode = cfg.verify.mode
    try:
        res = VERIFY_MODES[mode](cfg, out, args)
    except (CertificationError, PreconditionError, HypothesisError) as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        write_summary(out / "summary.json", "verify", cfg, {"mode": mode, "ok": False, "error": str(exc)})
        return EXIT_DIVERGED
    res["mode"] = mode
    write_summary(out / "summary.json", "verify", cfg, res)
    print(f"verify [{mode}]: {'ok' if res['ok'] else 'FAILED'}")
    return EXIT_OK if res["ok"] else EXIT_DIVERGED


def cmd_transform(cfg: ExperimentConfig, out: Path, args) -> int:
    try:
        spec, sol = _solve(cfg, args.lam)
    except SingularMatrixError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    if not sol.converged:
        write_csv(out / "solution.csv", _coord_names(spec.grid.dimension) + ["u"], _node_rows(sol.u))
        print(f"solve {sol.status}", file=sys.stderr)
        return _exit_for(sol.status)
    t = TransformSpec(cfg.transform.mu, cfg.transform.direction)
    try:
        v = forward(sol.u, t)
    except TransformOverflow as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    write_csv(out / "transform.csv", _coord_names(spec.grid.dimension) + ["u", "v"], _node_rows(sol.u, v))
    res = {"status": sol.status, "sup_u": sol.sup, "sup_v": float(v.values.max()), "exponent": t.exponent}
    write_summary(out / "summary.json", "transform", cfg, res)
    print(f"sup u = {sol.sup:.10g}, sup v = {res['sup_v']:.10g}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "branch": cmd_branch, "verify": cmd_verify, "transform": cmd_transform}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quadgrad", description="Elliptic problems with quadratic gradient growth.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="config file or bundled config name")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=None, help="override the operator-family seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads for family sweeps")
    p.add_argument("--lam", type=float, default=None, help="lambda for solve/transform")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg = cfg.model_copy(update={"verify": cfg.verify.model_copy(update={"family_seed": args.seed})})
    if args.threads < 1:
        print("config error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return COMMANDS[args.command](cfg, out, args)


if __name__ == "__main__":
    sys.exit(main())
