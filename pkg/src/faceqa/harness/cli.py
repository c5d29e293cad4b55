"""Command-line entry points: generate, train, evaluate, ablate, gradcheck, report."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .ablation import ablate, parse_axis_arg
from .evaluation import evaluate
from .gradsuite import run_gradient_suite
from .manifest import ExperimentManifest, default_manifest
from .report import emit_report, load_report
from .synthetic import SyntheticSpec, TINY_SPEC, generate_synthetic
from .training import train

OUT_ENV = "FACEQA_OUT"


def _resolve_out(arg: str | None, default_name: str) -> Path:
    if arg:
        return Path(arg)
    root = os.environ.get(OUT_ENV, "faceqa_out")
    return Path(root) / default_name


def cmd_generate(args) -> int:
    if args.spec:
        spec = SyntheticSpec.from_dict(json.loads(Path(args.spec).read_text()))
    else:
        spec = TINY_SPEC if args.preset == "tiny" else SyntheticSpec()
    if args.seed is not None:
        from dataclasses import replace
        spec = replace(spec, seed=args.seed)
    out = _resolve_out(args.out, "dataset")
    catalog_path = generate_synthetic(spec, out)
    catalog = json.loads(catalog_path.read_text())
    manifest = default_manifest(out, catalog, seed=args.seed if args.seed is not None else 1)
    manifest_path = out / "manifest.json"
    manifest.save(manifest_path)
    print(f"dataset: {catalog_path}")
    print(f"manifest: {manifest_path}")
    print(f"clips: {len(catalog['clips'])} across {len(catalog['actions'])} actions")
    return 0


def cmd_train(args) -> int:
    manifest = ExperimentManifest.load(args.manifest)
    if args.seed is not None:
        manifest = manifest.replaced(seed=args.seed)
    out = _resolve_out(args.out, "run")
    outcome = train(manifest, out)
    rep = outcome.report
    for action in sorted(rep.per_action_rho):
        rho = rep.per_action_rho[action]
        print(f"{action}: rho = {'undefined' if rho is None else f'{rho:.2f}%'}")
    avg = "undefined" if rep.average_rho is None else f"{rep.average_rho:.2f}%"
    print(f"average rho = {avg}  mae = {rep.mae:.4f}  rmse = {rep.rmse:.4f}")
    print(f"report: {outcome.report_path}", file=sys.stderr)
    print(f"wall clock: {rep.wall_clock_seconds:.1f}s", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    manifest = ExperimentManifest.load(args.manifest)
    report = evaluate(args.checkpoints, manifest)
    out = _resolve_out(args.out, "evaluation")
    out.mkdir(parents=True, exist_ok=True)
    suffix = "json" if args.format == "structured-text" else "csv"
    path = emit_report(report, out / f"report.{suffix}", args.format)
    print(f"report: {path}")
    avg = "undefined" if report.average_rho is None else f"{report.average_rho:.2f}%"
    print(f"average rho = {avg}  mae = {report.mae:.4f}  rmse = {report.rmse:.4f}")
    return 0


def cmd_ablate(args) -> int:
    manifest = ExperimentManifest.load(args.manifest)
    axis, values = parse_axis_arg(args.axis)
    out = _resolve_out(args.out, f"ablation_{axis}")
    table = ablate(manifest, axis, values, out)
    print(f"comparison table: {table}")
    print(table.read_text(), end="")
    return 0


def cmd_gradcheck(args) -> int:
    start = time.perf_counter()
    results = run_gradient_suite()
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failures += 0 if r.passed else 1
        print(f"[{status}] {r.name}: max rel err {r.max_rel_error:.3e} (tol {r.tolerance:g})")
    print(f"{len(results) - failures}/{len(results)} checks passed "
          f"in {time.perf_counter() - start:.1f}s")
    return 1 if failures else 0


def cmd_report(args) -> int:
    report = load_report(args.input)
    out = Path(args.out) if args.out else Path(args.input).with_suffix(
        ".csv" if args.format == "delimited-table" else ".json")
    emit_report(report, out, args.format)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faceqa",
        description="Two-stream facial expression quality scoring experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render a synthetic dataset and a default manifest")
    p.add_argument("--out", help=f"output directory (default from ${OUT_ENV})")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.add_argument("--spec", help="path to a JSON synthetic spec")
    p.add_argument("--preset", choices=("default", "tiny"), default="default")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train per the manifest and evaluate the result")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, help="override the manifest seed")
    p.add_argument("--out", help="run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate existing checkpoints on the test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoints", required=True, help="directory holding <unit>.ckpt files")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("structured-text", "delimited-table"),
                   default="structured-text")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="sweep one axis, one train+evaluate per value")
    p.add_argument("--manifest", required=True)
    p.add_argument("--axis", required=True, metavar="NAME=V1,V2,...",
                   help="fusion_variant, sigma, output_mode, or loss")
    p.add_argument("--out", help="sweep directory")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference verification of every backward rule")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="convert a stored report between formats")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("structured-text", "delimited-table"),
                   default="delimited-table")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
