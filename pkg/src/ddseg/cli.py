"""Command-line interface.

Example:

    ddseg --make-fixture demo --seed 0
    ddseg --mode ot --logits demo/logits.ddt1 \\
        --attn up0:demo/attn_up0.ddt1 --attn up1:demo/attn_up1.ddt1 \\
        --classes demo/classes.txt --guide demo/guide.ppm --out demo/run

writes demo/run.pgm (16-bit labels), demo/run.ppm (colorized),
demo/run.report.txt/.csv and demo/run.timings.csv.
"""

from __future__ import annotations

import argparse
import sys

from ddseg.discrepancy_markov import VelocityConfig
from ddseg.discrepancy_ot import SinkhornConfig
from ddseg.errors import DdsegError, ParameterError
from ddseg.pipeline import AttentionEntry, RunConfig, run_segmentation
from ddseg.upsample_jbu import JbuConfig

_TAU_SCALES = {"raw": "raw", "timesN": "times_n"}


def parse_attention_arg(spec: str) -> AttentionEntry:
    """Parse TAG:WEIGHT:FILE, or TAG:FILE to use the tag's default weight."""
    parts = spec.split(":", 2)
    if len(parts) < 2 or not parts[0]:
        raise ParameterError(f"--attn {spec!r}: expected TAG:WEIGHT:FILE or TAG:FILE")
    if len(parts) == 3:
        try:
            weight = float(parts[1])
        except ValueError:
            # second field is the start of a path containing ':'
            return AttentionEntry(parts[0], spec.split(":", 1)[1], None)
        if weight < 0:
            raise ParameterError(f"--attn {spec!r}: weight must be >= 0")
        if not parts[2]:
            raise ParameterError(f"--attn {spec!r}: missing file path")
        return AttentionEntry(parts[0], parts[2], weight)
    return AttentionEntry(parts[0], parts[1], None)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ddseg",
        description="Training-free open-vocabulary segmentation from "
        "patch logits and fused self-attention.",
    )
    p.add_argument("--mode", choices=["ot", "markov", "kl"], help="discrepancy mode")
    p.add_argument("--logits", help="DDT1 tensor [N, N_c] of patch-class logits")
    p.add_argument(
        "--attn",
        action="append",
        default=[],
        metavar="TAG:WEIGHT:FILE",
        help="attention block (repeatable); TAG:FILE uses the tag's default weight",
    )
    p.add_argument("--classes", help="text file with one class name per line")
    p.add_argument("--guide", help="guidance image (P6 PPM or 8-bit PNG)")
    p.add_argument("--out", help="output path prefix")
    p.add_argument("--sidecar", help="JSON sidecar with patch grids")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--sinkhorn-iters", type=int, default=50)
    p.add_argument("--ipf-iters", type=int, default=15)
    p.add_argument("--tau", type=float, default=0.3)
    p.add_argument("--tau-scale", choices=sorted(_TAU_SCALES), default="timesN")
    p.add_argument("--max-steps", type=int, default=1000)
    p.add_argument("--nms", type=float, default=0.9)
    p.add_argument("--sigma-s2", type=float, default=1.0)
    p.add_argument("--sigma-r2", type=float, default=0.1)
    p.add_argument("--jbu-radius", type=int, default=2)
    p.add_argument("--cost", choices=["raw", "flip"], default="raw")
    p.add_argument("--path-norm", choices=["softmax", "sum"], default="softmax")
    p.add_argument("--kl-dir", choices=["q_to_s", "s_to_q"], default="q_to_s")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--debug-dumps", action="store_true",
                   help="also write per-class maps as DDT1 tensors")
    p.add_argument("--palette", help="palette file of 'name r g b' lines")
    p.add_argument("--figures", action="store_true",
                   help="render label/map preview PNGs next to the outputs")
    p.add_argument("--make-fixture", metavar="DIR",
                   help="write the synthetic two-cluster scene to DIR and exit")
    p.add_argument("--seed", type=int, default=0, help="fixture generation only")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.make_fixture:
            from ddseg.fixtures import make_two_cluster_fixture

            fx = make_two_cluster_fixture(args.make_fixture, seed=args.seed)
            for path in [fx.logits_path, *fx.attention_paths.values(),
                         fx.classes_path, fx.guide_path, fx.sidecar_path]:
                print(path)
            return 0

        missing = [
            name
            for name, value in [
                ("--mode", args.mode),
                ("--logits", args.logits),
                ("--attn", args.attn),
                ("--classes", args.classes),
                ("--guide", args.guide),
                ("--out", args.out),
            ]
            if not value
        ]
        if missing:
            raise ParameterError(f"missing required arguments: {', '.join(missing)}")

        cfg = RunConfig(
            mode=args.mode,
            logits_path=args.logits,
            attention=tuple(parse_attention_arg(a) for a in args.attn),
            classes_path=args.classes,
            guide_path=args.guide,
            out_prefix=args.out,
            sidecar_path=args.sidecar,
            sinkhorn=SinkhornConfig(args.epsilon, args.sinkhorn_iters),
            velocity=VelocityConfig(
                tau=args.tau,
                max_steps=args.max_steps,
                ipf_iterations=args.ipf_iters,
                variation_scale=_TAU_SCALES[args.tau_scale],
            ),
            jbu=JbuConfig(args.sigma_s2, args.sigma_r2, args.jbu_radius),
            nms_threshold=args.nms,
            cost_direction=args.cost,
            path_norm=args.path_norm,
            kl_direction=args.kl_dir,
            workers=args.workers,
            debug_dumps=args.debug_dumps,
            palette_path=args.palette,
            figures=args.figures,
        )
        run_segmentation(cfg)
    except DdsegError as exc:
        print(f"ddseg: {exc}", file=sys.stderr)
        return 2
    print(f"{args.out}.pgm")
    print(f"{args.out}.ppm")
    print(f"{args.out}.report.txt")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
