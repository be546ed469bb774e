"""Command-line entry point: ``dto {solve,filter,eval,gen,oracle}``.

Exit codes: 0 success / accepted, 2 invalid input, 3 scene rejected by the
residual filter, 4 infeasible (non-positive corrected depth).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io as dio
from .errors import DtoError, NoUsableFits, ParseError, ValidationError
from .metrics import PCDR_EQUAL_THRESHOLD, evaluate
from .solver import DEFAULT_FILTER_THRESHOLD, run_dto

log = logging.getLogger("dto")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_REJECTED = 3
EXIT_INFEASIBLE = 4


def _solve_one(scene_path, out_path, args, prior_table):
    """Solve one scene file; returns (exit code, summary dict)."""
    name = Path(scene_path).stem
    try:
        scene = dio.load_scene(scene_path, prior_table)
        sol = run_dto(scene.persons, args.alpha1, args.alpha2, args.threshold, scene.scale_estimate)
    except (ParseError, ValidationError, NoUsableFits, OSError) as exc:
        return EXIT_INVALID, {"scene": name, "status": "invalid", "error": str(exc)}
    except DtoError as exc:
        return EXIT_INVALID, {"scene": name, "status": "invalid", "error": str(exc)}
    dio.save_solution(out_path, sol, scene.name)
    if sol.infeasible:
        code, status = EXIT_INFEASIBLE, "infeasible"
    elif sol.accepted:
        code, status = EXIT_OK, "accepted"
    else:
        code, status = EXIT_REJECTED, "rejected"
    return code, {"scene": scene.name, "status": status, "kkt_case": sol.kkt_case.value,
                  "mean_residual": sol.mean_residual, "scale": sol.transform.scale,
                  "shift": sol.transform.shift}


def _load_table(args):
    return dio.load_prior_table(args.prior_table) if args.prior_table else None


def cmd_solve(args) -> int:
    try:
        table = _load_table(args)
    except DtoError as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    if args.batch:
        return _solve_batch(args, table)
    if not args.input or not args.out:
        log.error("solve needs --in and --out (or --batch DIR --out DIR)")
        return EXIT_INVALID
    code, summary = _solve_one(args.input, args.out, args, table)
    if code == EXIT_INVALID:
        log.error("%s: %s", args.input, summary["error"])
    elif code != EXIT_OK:
        log.warning("%s: scene %s (mean residual %.4g)", args.input, summary["status"], summary["mean_residual"])
    return code


def _solve_batch(args, table) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = dio.scene_files(args.batch)
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(
            lambda f: _solve_one(f, out_dir / f"{f.stem}.solution.json", args, table), files))
    entries = []
    for f, (code, summary) in zip(files, results):
        summary["file"] = f.name
        summary["exit_code"] = code
        entries.append(summary)
        if code == EXIT_INVALID:
            log.error("%s: %s", f, summary["error"])
    entries.sort(key=lambda e: e["file"])
    dio.write_json(out_dir / "batch_report.json", {"kind": "batch_report", "scenes": entries})
    if args.report_dir:
        _batch_figures(entries, args.threshold, Path(args.report_dir))
    return EXIT_INVALID if any(e["exit_code"] == EXIT_INVALID for e in entries) else EXIT_OK


def _batch_figures(entries, threshold, report_dir):
    from . import plotting

    report_dir.mkdir(parents=True, exist_ok=True)
    solved = [e for e in entries if e["status"] != "invalid"]
    with open(report_dir / "scenes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene", "status", "kkt_case", "scale", "shift", "mean_residual"])
        for e in solved:
            w.writerow([e["scene"], e["status"], e["kkt_case"], repr(e["scale"]), repr(e["shift"]),
                        repr(e["mean_residual"])])
    counts = {}
    for e in solved:
        counts[e["kkt_case"]] = counts.get(e["kkt_case"], 0) + 1
    plotting.residual_histogram([e["mean_residual"] for e in solved], threshold,
                                report_dir / "residual_hist.png")
    plotting.kkt_case_bars(counts, report_dir / "kkt_cases.png")


def cmd_filter(args) -> int:
    try:
        raw = dio.read_json(args.input)
        resid = [float(p["standardized_residual"]) for p in raw["persons"]]
        infeasible = bool(raw.get("infeasible", False))
    except (DtoError, KeyError, TypeError, ValueError) as exc:
        log.error("%s: %s", args.input, exc)
        return EXIT_INVALID
    if infeasible:
        return EXIT_INFEASIBLE
    mean = float(np.mean(resid)) if resid else 0.0
    print(json.dumps({"mean_residual": mean, "threshold": args.threshold, "accepted": mean <= args.threshold}))
    return EXIT_OK if mean <= args.threshold else EXIT_REJECTED


def cmd_eval(args) -> int:
    try:
        preds = dio.load_predictions(args.pred)
        anns = dio.load_annotations(args.gt)
        report, rows = evaluate(preds, anns, args.pcdr_threshold, args.pcdr_aggregation)
    except (DtoError, KeyError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    text = dio.dumps_canonical(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.report_dir:
        _eval_figures(report, rows, Path(args.report_dir))
    return EXIT_OK


def _eval_figures(report, rows, report_dir):
    from . import plotting

    report_dir.mkdir(parents=True, exist_ok=True)
    cols = ["scene", "id", "age_group", "pred_depth", "gt_depth", "pred_height", "gt_height", "depth_layer"]
    with open(report_dir / "persons.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r[k] is None else r[k]) for k in cols})
    with_depth = [r for r in rows if r["gt_depth"] is not None]
    with_height = [r for r in rows if r["gt_height"] is not None]
    plotting.identity_scatter([r["pred_depth"] for r in with_depth], [r["gt_depth"] for r in with_depth],
                              [r["age_group"] for r in with_depth], report_dir / "depth_scatter.png")
    plotting.identity_scatter([r["pred_height"] for r in with_height], [r["gt_height"] for r in with_height],
                              [r["age_group"] for r in with_height], report_dir / "height_scatter.png",
                              quantity="height")
    plotting.pcdr_bars(report, report_dir / "pcdr_by_group.png")


def cmd_gen(args) -> int:
    from .scenegen import GenConfig, generate

    try:
        raw = dio.read_json(args.config) if args.config else {}
        base = GenConfig.from_dict(raw)
    except (DtoError, TypeError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for k in range(args.count):
        cfg = GenConfig.from_dict({**base.to_dict(), "seed": base.seed + k})
        name = f"scene_{k:04d}"
        gt = generate(cfg, name=name)
        dio.save_scene(out / f"{name}.json", gt.scene)
        entries.append({
            "scene": name, "file": f"{name}.json", "seed": cfg.seed,
            "transform": {"scale": gt.transform.scale, "shift": gt.transform.shift},
            "persons": [
                {"id": p.id, "age_group": p.age_group.value, "gender": p.gender.value,
                 "gt_height": float(h), "gt_depth": float(z),
                 "depth_layer": gt.scene.annotations[p.id].depth_layer}
                for p, h, z in zip(gt.scene.persons, gt.true_heights, gt.true_depths)
            ],
        })
    dio.write_json(out / "manifest.json", {"kind": "manifest", "schema_version": dio.MANIFEST_SCHEMA,
                                           "config": base.to_dict(), "count": args.count, "scenes": entries})
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .scenegen import grid_steps, oracle_box, oracle_solve

    try:
        scene = dio.load_scene(args.input, _load_table(args))
        sol = run_dto(scene.persons, args.alpha1, args.alpha2, args.threshold, scene.scale_estimate)
    except DtoError as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    s, t = sol.transform.scale, sol.transform.shift
    s_range, t_range = oracle_box(scene.persons, sol.bounds, s, t, args.margin)
    os_, ot, oobj = oracle_solve(scene.persons, sol.bounds, t_range, s_range, args.grid)
    ds, dt = grid_steps(sol.bounds, t_range, s_range, args.grid)
    print(dio.dumps_canonical({
        "analytic": {"scale": s, "shift": t, "objective": sol.objective_value, "kkt_case": sol.kkt_case.value},
        "oracle": {"scale": os_, "shift": ot, "objective": oobj},
        "cells": {"scale": abs(os_ - s) / ds if ds else 0.0, "shift": abs(ot - t) / dt},
    }), end="")
    return EXIT_OK


def _add_solver_flags(p):
    p.add_argument("--threshold", type=float, default=DEFAULT_FILTER_THRESHOLD,
                   help="mean standardized residual above which a scene is rejected")
    p.add_argument("--alpha1", type=float, default=1.0)
    p.add_argument("--alpha2", type=float, default=5.0)
    p.add_argument("--prior-table", default=None, help="JSON mixture components for custom height priors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dto", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one scene or a directory of scenes")
    p.add_argument("--in", dest="input")
    p.add_argument("--out")
    p.add_argument("--batch", help="directory of scene files; --out is then a directory")
    p.add_argument("--jobs", type=int, default=4)
    p.add_argument("--report-dir", help="batch only: write scenes.csv and figures here")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("filter", help="re-apply the residual filter to a solution file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_FILTER_THRESHOLD)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("eval", help="PCDR and height error of predictions against annotations")
    p.add_argument("--pred", required=True, help="solution/scene file or directory")
    p.add_argument("--gt", required=True, help="manifest, annotated scene file, or directory")
    p.add_argument("--out")
    p.add_argument("--pcdr-threshold", type=float, default=PCDR_EQUAL_THRESHOLD)
    p.add_argument("--pcdr-aggregation", choices=("pairs", "images"), default="images")
    p.add_argument("--report-dir", help="write persons.csv and figures here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen", help="generate synthetic scenes with ground truth")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("oracle", help="compare the analytic solution with a dense grid search")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--grid", type=int, default=2000)
    p.add_argument("--margin", type=float, default=0.2)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="dto: %(levelname)s: %(message)s", stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
