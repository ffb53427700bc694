"""Command-line interface.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .completion import FlowCompletionProblem, complete_flow
from .edges import EDGE_STRATEGIES, canny, complete_edges, edge_name, suppress_hole_edges
from .errors import ConvergenceError, DataError, FlowFillError, IterationBudgetError
from .flo import flo_name, read_flo, write_flo
from .flow import FileFlowEstimator, PyramidLKEstimator, flow_pairs
from .io import (
    RUN_KEYS,
    RunConfig,
    SequenceSpec,
    read_mask,
    read_sequence,
    write_mask,
    write_report,
    write_sequence,
)
from .metrics import flow_epe, psnr, ssim
from .pipeline import inpaint_name, run
from .raster import dilate_mask, flow_magnitude
from .synth import MASK_KINDS, SCENES, synth_scene

log = logging.getLogger("flowfill")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _size(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("size must look like WIDTHxHEIGHT") from None
    return w, h


def _add_run_flags(p):
    p.add_argument("--config", help="flat key = value run configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one configuration key")
    p.add_argument("--tau", type=float)
    p.add_argument("--temperature", type=float)
    p.add_argument("--domain", choices=("gradient", "color"))
    p.add_argument("--edge-strategy", choices=EDGE_STRATEGIES)
    p.add_argument("--edge-dir")
    p.add_argument("--dilation", type=float)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--ablate-nonlocal", action="store_true", help="disable non-local neighbours")
    p.add_argument("--fallback", choices=("diffusion", "external"))
    p.add_argument("--fallback-dir")
    p.add_argument("--estimator", choices=("builtin", "file"))
    p.add_argument("--flow-dir", help="directory holding flow/NNNNN_NNNNN.flo")
    p.add_argument("--workers", type=int)
    p.add_argument("--checkpoint-dir")


def build_parser():
    parser = _Parser(prog="flowfill", description="Flow-edge guided video completion.")
    parser.add_argument("--version", action="version", version=f"flowfill {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("complete", help="run the full completion pipeline")
    p.add_argument("--frames", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="write a JSON run report here")
    p.add_argument("--save-flows", action="store_true", help="write completed flows under OUT/flow_completed/")
    _add_run_flags(p)

    p = sub.add_parser("flow-complete", help="complete one flow field through edges and the smoothness solve")
    p.add_argument("--flow", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--edge-strategy", choices=EDGE_STRATEGIES, default="link")
    p.add_argument("--edges", help="edge image for the external strategy")
    p.add_argument("--dilation", type=float, default=15.0)
    p.add_argument("--save-edges", help="write the completed edge map as PNG")
    p.add_argument("--reference", help="ground-truth .flo; prints hole EPE")

    p = sub.add_parser("synth", help="write a synthetic scene with ground truth")
    p.add_argument("name", choices=SCENES)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=_size, default=(96, 96), help="WIDTHxHEIGHT")
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mask", choices=MASK_KINDS, default="default")

    p = sub.add_parser("eval", help="compare two frame sequences")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--masks", help="restrict metrics to missing pixels")
    p.add_argument("--ref-flow", help="directory with reference .flo files")
    p.add_argument("--test-flow", help="directory with test .flo files")
    p.add_argument("--report", required=True)

    p = sub.add_parser("flo", help="inspect or convert .flo files")
    fsub = p.add_subparsers(dest="flo_command", parser_class=_Parser)
    fsub.required = True
    q = fsub.add_parser("info")
    q.add_argument("path")
    q = fsub.add_parser("convert", help="convert between .flo and .npy by extension")
    q.add_argument("src")
    q.add_argument("dst")
    return parser


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig.defaults()
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        cfg.update(key.strip(), value.strip())
    flags = {
        "tau": args.tau,
        "temperature": args.temperature,
        "domain": args.domain,
        "edge_strategy": args.edge_strategy,
        "edge_dir": args.edge_dir,
        "dilation": args.dilation,
        "max_iterations": args.max_iterations,
        "fallback": args.fallback,
        "fallback_dir": args.fallback_dir,
        "estimator": args.estimator,
        "flow_dir": args.flow_dir,
        "workers": args.workers,
        "checkpoint_dir": args.checkpoint_dir,
    }
    for key, value in flags.items():
        if value is not None:
            cfg.update(key, value)
    if args.ablate_nonlocal:
        cfg.update("use_nonlocal", False)
    assert set(flags) <= set(RUN_KEYS)
    return cfg


def _preflight(cfg: RunConfig, pconf, masks):
    """Check that every external file the run will read is present."""
    T = len(masks)
    if cfg["estimator"] == "file":
        est = FileFlowEstimator(cfg["flow_dir"])
        adjacent, distant = flow_pairs(T, pconf.chain.anchors(T), pconf.use_nonlocal)
        missing = [p for p in adjacent + distant if not os.path.exists(est.path(*p))]
        if missing:
            raise DataError(f"{len(missing)} flow files missing, first {est.path(*missing[0])}")
    if pconf.edge_strategy == "external":
        if not os.path.isdir(pconf.edge_dir):
            raise DataError(f"edge directory not found: {pconf.edge_dir}")
    if pconf.fallback == "external":
        for t in range(T):
            path = os.path.join(pconf.fallback_dir, inpaint_name(t))
            if masks[t].any() and not os.path.exists(path):
                raise DataError(f"external fill image not found: {path}")


def cmd_complete(args):
    cfg = _run_config(args)
    pconf = cfg.pipeline_config()
    frames, masks = read_sequence(SequenceSpec(args.frames, args.masks))
    _preflight(cfg, pconf, masks)
    estimator = FileFlowEstimator(cfg["flow_dir"]) if cfg["estimator"] == "file" else PyramidLKEstimator()
    result = run(frames, masks, pconf, estimator=estimator)
    write_sequence(args.out, result.frames)
    if args.save_flows:
        for (s, t), f in result.flows.items():
            write_flo(os.path.join(args.out, "flow_completed", flo_name(s, t)), f)
    if args.report:
        write_report(args.report, {"config": cfg.values, **result.report.as_dict()})
    rep = result.report
    print(
        f"completed {len(frames)} frames: {rep.hole_pixels} missing pixels, "
        f"{rep.propagated_fraction:.1%} by propagation, {rep.key_frame_fills} key-frame fills"
    )
    return EXIT_OK


def cmd_flow_complete(args):
    flow = read_flo(args.flow).astype(np.float64)
    mask = read_mask(args.mask)
    if mask.shape != flow.shape[:2]:
        raise DataError(f"mask {args.mask} is {mask.shape}, flow is {flow.shape[:2]}")
    if args.edge_strategy == "external" and not args.edges:
        raise UsageError("--edge-strategy external needs --edges")
    hole = dilate_mask(mask, args.dilation)
    edges = suppress_hole_edges(canny(flow_magnitude(flow)), hole)
    edges = complete_edges(edges, hole, args.edge_strategy, path=args.edges)
    out = complete_flow(FlowCompletionProblem(flow, hole, edges))
    write_flo(args.out, out)
    if args.save_edges:
        write_mask(args.save_edges, edges)
    msg = f"completed {int(hole.sum())} flow pixels"
    if args.reference:
        ref = read_flo(args.reference)
        if ref.shape != out.shape:
            raise DataError(f"reference {args.reference} is {ref.shape[:2]}, flow is {out.shape[:2]}")
        msg += f"; hole EPE {flow_epe(out, ref, hole):.4f}"
    print(msg)
    return EXIT_OK


def cmd_synth(args):
    scene = synth_scene(args.name, size=args.size, frames=args.frames, seed=args.seed, mask=args.mask)
    out = args.out
    write_sequence(os.path.join(out, "frames"), scene.frames, scene.masks, os.path.join(out, "masks"))
    gt = os.path.join(out, "gt")
    write_sequence(os.path.join(gt, "frames"), scene.ground_truth_frames)
    for (s, t), f in scene.ground_truth_flows.items():
        write_flo(os.path.join(gt, "flow", flo_name(s, t)), f)
    os.makedirs(os.path.join(gt, "edges"), exist_ok=True)
    for (s, t), e in scene.ground_truth_edges.items():
        write_mask(os.path.join(gt, "edges", edge_name(s, t)), e)
    print(f"wrote {args.name}: {scene.num_frames} frames of {args.size[0]}x{args.size[1]} to {out}")
    return EXIT_OK


def _finite(v):
    return v if v is None or math.isfinite(v) else "inf"


def _mean(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return float(np.mean(vals))


def cmd_eval(args):
    ref, _ = read_sequence(SequenceSpec(args.ref))
    test, _ = read_sequence(SequenceSpec(args.test))
    if ref.shape != test.shape:
        raise DataError(f"sequences differ in shape: {ref.shape} vs {test.shape}")
    masks = read_sequence(SequenceSpec(args.ref, args.masks))[1] if args.masks else None
    per_frame = {"psnr": [], "ssim": [], "epe": []}
    for t in range(len(ref)):
        region = None if masks is None else masks[t]
        if region is not None and not region.any():
            per_frame["psnr"].append(None)
            per_frame["ssim"].append(None)
            continue
        per_frame["psnr"].append(psnr(test[t], ref[t], region))
        per_frame["ssim"].append(ssim(test[t], ref[t], region))
    if args.ref_flow and args.test_flow:
        for t in range(len(ref) - 1):
            name = flo_name(t, t + 1)
            f_ref = read_flo(os.path.join(args.ref_flow, name))
            f_test = read_flo(os.path.join(args.test_flow, name))
            region = None if masks is None or not masks[t].any() else masks[t]
            per_frame["epe"].append(flow_epe(f_test, f_ref, region))
    else:
        per_frame["epe"] = [None] * len(ref)
    report = {"frames": len(ref)}
    for key, vals in per_frame.items():
        report[key] = [_finite(v) for v in vals]
        report[f"mean_{key}"] = _finite(_mean(vals))
    write_report(args.report, report)
    print(f"mean psnr {report['mean_psnr']}, mean ssim {report['mean_ssim']}, mean epe {report['mean_epe']}")
    return EXIT_OK


def cmd_flo(args):
    if args.flo_command == "info":
        f = read_flo(args.path)
        mag = np.hypot(f[..., 0], f[..., 1])
        print(f"width {f.shape[1]} height {f.shape[0]}")
        print(f"u [{f[..., 0].min():.4f}, {f[..., 0].max():.4f}] v [{f[..., 1].min():.4f}, {f[..., 1].max():.4f}]")
        print(f"mean magnitude {mag.mean():.4f}")
        return EXIT_OK
    src, dst = args.src, args.dst
    if src.endswith(".flo"):
        f = read_flo(src)
    elif src.endswith(".npy"):
        if not os.path.exists(src):
            raise DataError(f"file not found: {src}")
        f = np.load(src)
    else:
        raise UsageError("source must end in .flo or .npy")
    if dst.endswith(".flo"):
        try:
            write_flo(dst, f)
        except ValueError as exc:
            raise DataError(str(exc)) from None
    elif dst.endswith(".npy"):
        np.save(dst, np.asarray(f, dtype=np.float32))
    else:
        raise UsageError("destination must end in .flo or .npy")
    return EXIT_OK


COMMANDS = {
    "complete": cmd_complete,
    "flow-complete": cmd_flow_complete,
    "synth": cmd_synth,
    "eval": cmd_eval,
    "flo": cmd_flo,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
        )
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, IterationBudgetError) as exc:
        print(f"flowfill: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FlowFillError, OSError) as exc:
        print(f"flowfill: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"flowfill: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
