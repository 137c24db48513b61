"""Command-line entry point: degrade, restore, eval, verify."""

import argparse
import csv
import io
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .degrade import DegradationSpec, format_manifest_line, make_test_case, parse_manifest
from .errors import RestorationError
from .imaging import Image, load_ppm, save_ppm
from .metrics import LOSS_LAMBDA, EvalReport, evaluate
from .network import DEFAULT_BLOCKS, forward, seed_model
from .operators import RegularizerConfig
from .solver import solve
from .weights import load_weights

log = logging.getLogger("isnrestore")

MANIFEST_NAME = "manifest.tsv"
PAIRS_NAME = "pairs.tsv"
SUMMARY_NAME = "summary.tsv"
TIMINGS_NAME = "timings.tsv"
REPORT_COLUMNS = ("clean_path", "restored_path", "status") + EvalReport.columns()
REPORT_HEADER = ",".join(REPORT_COLUMNS)
IMAGE_SUFFIXES = (".ppm", ".pgm")


@dataclass
class RunConfig:
    mode: str = "classical"
    weights_path: str = None
    spec: DegradationSpec = field(default_factory=DegradationSpec)
    outer_iters: int = 16
    inner_iters: int = 4
    regularizer: RegularizerConfig = field(default_factory=RegularizerConfig)
    eta: float = 0.01
    freeze_ab: bool = False
    blocks: int = DEFAULT_BLOCKS
    seed: int = 0
    out: str = "out"


def worker_count():
    try:
        return max(1, int(os.environ.get("INTERIR_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    # results come back in input order regardless of completion order
    workers = worker_count()
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def case_seed(seed, index):
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0])


def cmd_degrade(clean_dir, out_dir, haze=0.0, rain=0.0, noise=0.0, seed=0):
    """Degrade every PPM/PGM in ``clean_dir``; returns the process exit code."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = sorted(p for p in Path(clean_dir).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)

    def work(item):
        index, path = item
        spec = DegradationSpec(haze, rain, noise, case_seed(seed, index))
        try:
            degraded = make_test_case(load_ppm(path), spec)
        except (OSError, RestorationError) as err:
            log.error("cannot degrade %s: %s", path, err)
            return None
        target = out / path.name
        save_ppm(degraded, target)
        return format_manifest_line(path, target, spec)

    lines = _map(work, list(enumerate(files)))
    good = [ln for ln in lines if ln is not None]
    (out / MANIFEST_NAME).write_text("".join(ln + "\n" for ln in good))
    return 0 if len(good) == len(lines) else 1


def _restore_one(pixels, config, model):
    if config.mode == "unfolded":
        return forward(model, pixels), None
    restored, trace = solve(pixels[0], config.regularizer, config.outer_iters, config.inner_iters,
                            config.eta, config.freeze_ab)
    return np.clip(restored, 0.0, 1.0)[None], trace


def _load_model(config):
    if config.weights_path:
        return load_weights(config.weights_path)
    log.warning("no weights given: using an untrained seeded model (seed %d, %d blocks)",
                config.seed, config.blocks)
    return seed_model(config.blocks, 48, config.seed)


def cmd_restore(manifest, config):
    """Restore every degraded image listed in ``manifest``; returns the exit code."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = parse_manifest(Path(manifest).read_text())
    model = _load_model(config) if config.mode == "unfolded" else None

    def work(row):
        clean_path, degraded_path, _ = row
        name = Path(degraded_path).stem
        try:
            degraded = load_ppm(degraded_path)
        except (OSError, RestorationError) as err:
            log.error("cannot read %s: %s", degraded_path, err)
            return clean_path, "", "unreadable", 0, 0.0
        target = out / Path(degraded_path).name
        start = time.perf_counter()
        status, stalls = "ok", 0
        try:
            restored, trace = _restore_one(degraded.pixels, config, model)
        except RestorationError as err:
            log.warning("%s: solver failed (%s), emitting the degraded input", name, err)
            restored, trace, status = degraded.pixels, getattr(err, "trace", None), "failed"
        if trace is not None:
            stalls = trace.stall_count
            if trace.steps and stalls == len(trace.steps):
                log.warning("%s: solver stalled on every step, emitting the degraded input", name)
                restored, status = degraded.pixels, "stalled"
            (out / f"{name}.trace.csv").write_text(trace.to_csv())
        save_ppm(Image(restored), target)
        return clean_path, str(target), status, stalls, time.perf_counter() - start

    results = _map(work, rows)
    (out / PAIRS_NAME).write_text("".join(f"{c}\t{r}\t{s}\n" for c, r, s, _, _ in results))
    (out / SUMMARY_NAME).write_text("name\tstatus\tstalled_steps\n" + "".join(
        f"{Path(r or c).stem}\t{s}\t{n}\n" for c, r, s, n, _ in results))
    (out / TIMINGS_NAME).write_text("name\tseconds\n" + "".join(
        f"{Path(r or c).stem}\t{t:.3f}\n" for c, r, _, _, t in results))
    flagged = [r for r in results if r[2] != "ok"]
    for c, r, s, _, _ in flagged:
        log.warning("flagged: %s (%s)", r or c, s)
    return 0 if all(r[2] in ("ok", "stalled") for r in results) else 1


def _fmt(v):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.6f}"


def cmd_eval(pairs_manifest, out_csv=None, lam=LOSS_LAMBDA, stream=None):
    """Evaluate (clean, restored) pairs; writes CSV and returns the exit code."""
    stream = stream or sys.stdout
    rows, reports, failed = [], [], False
    for line in Path(pairs_manifest).read_text().splitlines():
        if not line.strip():
            continue
        cols = line.split("\t")
        clean_path, restored_path = cols[0], cols[1] if len(cols) > 1 else ""
        try:
            report = evaluate(load_ppm(restored_path), load_ppm(clean_path), lam)
        except (OSError, RestorationError, ValueError) as err:
            failed = True
            reason = "size-mismatch" if "shape" in str(err) else type(err).__name__
            rows.append([clean_path, restored_path, f"error:{reason}"] + [""] * len(EvalReport.columns()))
            continue
        reports.append(report)
        rows.append([clean_path, restored_path, "ok"] + [_fmt(v) for v in report.values()])
        print(f"{restored_path}: {report}", file=stream)
    means = []
    for k in range(len(EvalReport.columns())):
        vals = [r.values()[k] for r in reports if math.isfinite(r.values()[k])]
        if vals:
            means.append(_fmt(float(np.mean(vals))))
        else:
            means.append("inf" if reports else "")
    rows.append(["mean", "", f"n={len(reports)}"] + means)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    writer.writerows(rows)
    if out_csv:
        Path(out_csv).parent.mkdir(parents=True, exist_ok=True)
        Path(out_csv).write_text(buf.getvalue())
    else:
        stream.write(buf.getvalue())
    return 1 if failed else 0


def cmd_verify(suites=None, golden_dir=None, stream=None):
    from .verify import run_suites

    results = run_suites(suites, golden_dir, stream or sys.stdout)
    return 0 if all(r.passed for r in results) else 1


def _add_solver_flags(p):
    d = RegularizerConfig()
    p.add_argument("--mode", choices=("classical", "unfolded"), default="classical")
    p.add_argument("--weights", help="weight container for unfolded mode")
    p.add_argument("--blocks", type=int, default=DEFAULT_BLOCKS, help="blocks of the seeded fallback model")
    p.add_argument("--outer", type=int, default=16)
    p.add_argument("--inner", type=int, default=4)
    p.add_argument("--alpha", type=float, default=d.alpha)
    p.add_argument("--beta", type=float, default=d.beta)
    p.add_argument("--gamma", type=float, default=d.gamma)
    p.add_argument("--sigma", type=float, default=d.sigma)
    p.add_argument("--epsilon", type=float, default=d.epsilon)
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--freeze-ab", action="store_true", help="keep A=B=identity (pure denoising)")


def build_parser():
    parser = argparse.ArgumentParser(prog="isnrestore", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    cmds = parser.add_subparsers(dest="command", required=True)

    p = cmds.add_parser("degrade", help="synthesize degraded copies of clean PPM/PGM images")
    p.add_argument("clean_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--haze", type=float, default=0.0)
    p.add_argument("--rain", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)

    p = cmds.add_parser("restore", help="restore the images listed in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_solver_flags(p)

    p = cmds.add_parser("eval", help="score (clean, restored) pairs")
    p.add_argument("pairs")
    p.add_argument("--out", help="CSV destination (default: stdout)")
    p.add_argument("--lam", type=float, default=LOSS_LAMBDA)

    p = cmds.add_parser("verify", help="run the oracle and property suites")
    p.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    p.add_argument("--golden-dir", help="alternative golden-file directory")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "degrade":
            return cmd_degrade(args.clean_dir, args.out, args.haze, args.rain, args.noise, args.seed)
        if args.command == "restore":
            config = RunConfig(
                mode=args.mode, weights_path=args.weights, outer_iters=args.outer, inner_iters=args.inner,
                regularizer=RegularizerConfig(args.alpha, args.beta, args.gamma, args.sigma, args.epsilon),
                eta=args.eta, freeze_ab=args.freeze_ab, blocks=args.blocks, seed=args.seed, out=args.out)
            return cmd_restore(args.manifest, config)
        if args.command == "eval":
            return cmd_eval(args.pairs, args.out, args.lam)
        return cmd_verify(args.suite, args.golden_dir)
    except (OSError, RestorationError) as err:
        log.error("%s", err)
        return 2


if __name__ == "__main__":
    sys.exit(main())
