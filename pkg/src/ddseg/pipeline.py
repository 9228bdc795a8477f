"""End-to-end segmentation driver.

Loads tensors, prepares the per-class distributions, fuses attention,
runs the selected discrepancy mode for every candidate class (classes
run in a thread pool; each solve is independent), reshapes to the
patch grid, upsamples with the guided filter, assembles the label map,
and writes outputs plus a run report.  Identical inputs and flags
produce byte-identical PGM/PPM/report files.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ddseg import report as report_mod
from ddseg.attention_fusion import (
    DEFAULT_BLOCK_WEIGHTS,
    AttentionBlock,
    AttentionStack,
    cost_from_attention,
    fuse_attention,
)
from ddseg.discrepancy_kl import kl_pointwise_map
from ddseg.discrepancy_markov import (
    VelocityConfig,
    convergence_steps,
    ipf_balance,
)
from ddseg.discrepancy_ot import (
    SinkhornConfig,
    gibbs_kernel,
    path_map,
    sinkhorn_solve,
)
from ddseg.errors import (
    DdsegError,
    EmptyCandidatesError,
    EmptyClassError,
    ParameterError,
    StageError,
)
from ddseg.logits_prep import (
    DegenerateTarget,
    LogitsField,
    category_early_reject,
    nms_mask,
    normalize_per_class,
    read_class_list,
)
from ddseg.segmap_assembly import (
    DiscrepancyMap,
    LabelMap,
    assemble,
    default_palette,
    load_palette,
    write_label_map,
)
from ddseg.tensor_store import read_tensor, tensor_from_array, write_tensor
from ddseg.upsample_jbu import JbuConfig, jbu_upsample, read_guide

MODES = ("ot", "markov", "kl")


@dataclass(frozen=True)
class AttentionEntry:
    tag: str
    path: str
    weight: float | None = None  # None -> default weight for the tag


@dataclass(frozen=True)
class RunConfig:
    mode: str
    logits_path: str
    attention: tuple[AttentionEntry, ...]
    classes_path: str
    guide_path: str
    out_prefix: str
    sidecar_path: str | None = None
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    velocity: VelocityConfig = field(default_factory=VelocityConfig)
    jbu: JbuConfig = field(default_factory=JbuConfig)
    nms_threshold: float = 0.9
    cost_direction: str = "raw"
    path_norm: str = "softmax"
    kl_direction: str = "q_to_s"
    workers: int = 4
    debug_dumps: bool = False
    palette_path: str | None = None
    figures: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.attention:
            raise ParameterError("at least one attention entry is required")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")


def _square_grid(n: int, what: str) -> tuple[int, int]:
    side = math.isqrt(n)
    if side * side != n:
        raise ParameterError(
            f"{what}: {n} patches is not a square grid; provide a sidecar with grids"
        )
    return side, side


def _load_sidecar(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ParameterError(f"{path}: sidecar must be a JSON object")
    return data


def run_segmentation(cfg: RunConfig) -> LabelMap:
    """Execute the full pipeline; returns the label map and writes
    PREFIX.pgm/.ppm, report files, and optional debug dumps/figures."""
    timings: list[tuple[str, float]] = []

    def timed(stage):
        timings.append((stage, time.perf_counter()))

    def finish_timing():
        out = []
        for (stage, start), (_, end) in zip(timings, timings[1:]):
            out.append((stage, end - start))
        if timings:
            out.append((timings[-1][0], time.perf_counter() - timings[-1][1]))
        return out

    stage = "load-inputs"
    timed(stage)
    try:
        logits_t = read_tensor(cfg.logits_path)
        class_names = read_class_list(cfg.classes_path)
        if logits_t.reshaped().ndim != 2:
            raise ParameterError(f"logits tensor must be rank 2, got {logits_t.shape}")
        n, n_c = logits_t.shape
        if n_c != len(class_names):
            raise ParameterError(
                f"{n_c} logit columns but {len(class_names)} class names"
            )
        sidecar = _load_sidecar(cfg.sidecar_path) if cfg.sidecar_path else {}
        if "grid" in sidecar:
            grid = (int(sidecar["grid"][0]), int(sidecar["grid"][1]))
            if grid[0] * grid[1] != n:
                raise ParameterError(f"sidecar grid {grid} does not tile {n} patches")
        else:
            grid = _square_grid(n, "logits")
        guide = read_guide(cfg.guide_path)
        block_grids = sidecar.get("blocks", {})
        blocks = []
        for entry in cfg.attention:
            t = read_tensor(entry.path)
            if len(t.shape) != 3:
                raise ParameterError(
                    f"{entry.path}: attention tensor must be rank 3, got {t.shape}"
                )
            n_b = t.shape[1]
            if entry.tag in block_grids:
                g = block_grids[entry.tag]
                grid_b = (int(g[0]), int(g[1]))
            else:
                grid_b = _square_grid(n_b, f"attention block {entry.tag}")
            weight = entry.weight
            if weight is None:
                weight = DEFAULT_BLOCK_WEIGHTS.get(entry.tag, 1.0)
            blocks.append(AttentionBlock(entry.tag, t.as_f64(), grid_b, weight))
        stack = AttentionStack(tuple(blocks))
    except (DdsegError, OSError, json.JSONDecodeError, ValueError) as exc:
        raise StageError(stage, str(exc)) from exc

    stage = "logits-prep"
    timed(stage)
    try:
        field_ = LogitsField(logits_t.as_f64(), grid, class_names)
        mask = nms_mask(field_, cfg.nms_threshold)
        target = DegenerateTarget(n)
        candidates = []
        distributions = {}
        for c in category_early_reject(field_):
            try:
                distributions[c] = normalize_per_class(field_, mask, c)
            except EmptyClassError:
                continue  # aggressive threshold wiped the class; drop it
            candidates.append(c)
        if not candidates:
            raise EmptyCandidatesError(
                f"no class kept any patch at nms threshold {cfg.nms_threshold}"
            )
        stats_masked = int((~mask.any(axis=1)).sum())
    except EmptyCandidatesError:
        raise
    except DdsegError as exc:
        raise StageError(stage, str(exc)) from exc

    stage = "attention-fusion"
    timed(stage)
    try:
        fused = fuse_attention(stack, grid)
        cost = cost_from_attention(fused, cfg.cost_direction)
    except DdsegError as exc:
        raise StageError(stage, str(exc)) from exc

    stage = "discrepancy"
    timed(stage)
    diag: list[tuple[str, object]] = [
        ("mode", cfg.mode),
        ("patches", n),
        ("grid", f"{grid[0]}x{grid[1]}"),
        ("classes", n_c),
        ("candidates", " ".join(str(c) for c in candidates)),
        ("nms_threshold", float(cfg.nms_threshold)),
        ("fully_masked_patches", stats_masked),
    ]
    try:
        if cfg.mode == "ot":
            kernel = gibbs_kernel(cost, cfg.sinkhorn.epsilon, cfg.sinkhorn.underflow_floor)

            def solve(c):
                plan = sinkhorn_solve(distributions[c], target, kernel, cfg.sinkhorn)
                return path_map(plan, cost, cfg.path_norm), plan

            results = _run_per_class(solve, candidates, cfg.workers)
            vectors = {c: vec for c, (vec, _) in results.items()}
            diag.append(("epsilon", cfg.sinkhorn.epsilon))
            diag.append(("sinkhorn_iterations", cfg.sinkhorn.iterations))
            diag.append(
                (
                    "max_row_marginal_error",
                    max(p.row_marginal_error for _, p in results.values()),
                )
            )
            diag.append(
                (
                    "max_col_marginal_error",
                    max(p.col_marginal_error for _, p in results.values()),
                )
            )
            diag.append(
                (
                    "underflow_warnings",
                    sum(1 for _, p in results.values() if p.numerical_warning),
                )
            )
        elif cfg.mode == "markov":
            transition = ipf_balance(fused.c, cfg.velocity.ipf_iterations)

            def solve(c):
                return convergence_steps(distributions[c], transition, cfg.velocity)

            # the map is the step count itself: slow convergence marks the
            # patches that belong to the class
            results = _run_per_class(solve, candidates, cfg.workers)
            vectors = {c: steps.astype(np.float64) for c, steps in results.items()}
            diag.append(("ipf_iterations", cfg.velocity.ipf_iterations))
            diag.append(("tau", cfg.velocity.tau))
            diag.append(("variation_scale", cfg.velocity.variation_scale))
            diag.append(("ipf_row_residual", transition.row_residual))
            diag.append(("ipf_col_residual", transition.col_residual))
            all_steps = np.concatenate([results[c] for c in candidates])
            diag.append(("step_histogram", report_mod.step_histogram(all_steps)))
        else:
            def solve(c):
                return kl_pointwise_map(distributions[c], target, cfg.kl_direction)

            results = _run_per_class(solve, candidates, cfg.workers)
            vectors = dict(results)
            diag.append(("kl_direction", cfg.kl_direction))
    except DdsegError as exc:
        raise StageError(stage, str(exc)) from exc

    stage = "upsample"
    timed(stage)
    try:
        maps_low = {c: vectors[c].reshape(grid) for c in candidates}
        maps_high = []
        fallbacks = 0
        for c in candidates:
            high, fb = jbu_upsample(maps_low[c], guide, cfg.jbu)
            fallbacks += fb
            maps_high.append(DiscrepancyMap(c, high))
        diag.append(("jbu_fallback_pixels", fallbacks))
    except DdsegError as exc:
        raise StageError(stage, str(exc)) from exc

    stage = "assemble"
    timed(stage)
    try:
        label_map = assemble(maps_high)
    except DdsegError as exc:
        raise StageError(stage, str(exc)) from exc

    stage = "write-outputs"
    timed(stage)
    try:
        prefix = Path(cfg.out_prefix)
        if prefix.parent:
            prefix.parent.mkdir(parents=True, exist_ok=True)
        palette = (
            load_palette(cfg.palette_path)
            if cfg.palette_path
            else default_palette(max(n_c, 1))
        )
        write_label_map(label_map, prefix.parent / (prefix.name + ".pgm"), palette)
        if cfg.debug_dumps:
            for c in candidates:
                write_tensor(
                    tensor_from_array(maps_low[c]),
                    prefix.parent / (prefix.name + f".c{c}.low.ddt1"),
                )
            for m in maps_high:
                write_tensor(
                    tensor_from_array(m.values),
                    prefix.parent / (prefix.name + f".c{m.class_index}.high.ddt1"),
                )
        values, counts = np.unique(label_map.labels, return_counts=True)
        diag.append(
            (
                "label_histogram",
                " ".join(f"{int(v)}:{int(c)}" for v, c in zip(values, counts)),
            )
        )
    except (DdsegError, OSError) as exc:
        raise StageError(stage, str(exc)) from exc

    stage = "report"
    timed(stage)
    try:
        report_mod.emit_run_report(Path(cfg.out_prefix), diag, finish_timing())
        if cfg.figures:
            report_mod.render_figures(
                Path(cfg.out_prefix), label_map, palette, maps_high, class_names
            )
    except (DdsegError, OSError) as exc:
        raise StageError(stage, str(exc)) from exc

    return label_map


def _run_per_class(fn, candidates, workers: int) -> dict:
    """Apply fn to each candidate class, optionally on a thread pool.

    Results are keyed by class, so scheduling order cannot affect the
    output.
    """
    if workers == 1 or len(candidates) == 1:
        return {c: fn(c) for c in candidates}
    with ThreadPoolExecutor(max_workers=min(workers, len(candidates))) as pool:
        futures = {c: pool.submit(fn, c) for c in candidates}
        return {c: futures[c].result() for c in candidates}
