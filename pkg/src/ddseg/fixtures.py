"""Synthetic input generation for tests and demos.

The two-cluster scene plants an 8x8 patch grid split into left/right
halves: self-attention is strong within a half and weak across, class
logits favor one class per half except for a fraction of deliberately
ambiguous patches, and the guide image carries a matching vertical
edge.  A correct engine must label the ambiguous patches by cluster
membership, which only works if discrepancy is consistent within a
cluster.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ddseg.segmap_assembly import write_ppm
from ddseg.tensor_store import tensor_from_array, write_tensor

GRID = (8, 8)
N_PATCHES = 64
AMBIGUOUS_COUNT = 13  # ~20% of 64
WITHIN_ATTENTION = 0.9
ACROSS_ATTENTION = 0.1
ATTENTION_NOISE = 1e-3
WINNER_LOGIT = 5.0
LOSER_LOGIT = 0.0
AMBIGUOUS_LOGIT = 1.0
LOGIT_JITTER = 0.01


@dataclass(frozen=True)
class TwoClusterFixture:
    directory: Path
    logits_path: Path
    attention_paths: dict[str, Path]
    classes_path: Path
    guide_path: Path
    sidecar_path: Path
    clusters: np.ndarray       # (N,) 0 = left half, 1 = right half
    ambiguous: np.ndarray      # indices of patches with ambiguous logits


def make_two_cluster_fixture(out_dir, seed: int = 0) -> TwoClusterFixture:
    """Write the scene's tensors, class list, guide, and sidecar."""
    rng = np.random.default_rng(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h, w = GRID

    cols = np.arange(N_PATCHES) % w
    clusters = (cols >= w // 2).astype(np.int64)

    ambiguous = np.sort(rng.choice(N_PATCHES, size=AMBIGUOUS_COUNT, replace=False))
    is_ambiguous = np.zeros(N_PATCHES, dtype=bool)
    is_ambiguous[ambiguous] = True

    logits = np.where(
        clusters[:, None] == np.arange(2)[None, :], WINNER_LOGIT, LOSER_LOGIT
    ).astype(np.float64)
    logits[is_ambiguous] = AMBIGUOUS_LOGIT
    logits += rng.uniform(-LOGIT_JITTER, LOGIT_JITTER, size=logits.shape)

    same = clusters[:, None] == clusters[None, :]
    logits_path = out / "logits.ddt1"
    write_tensor(tensor_from_array(logits), logits_path)

    attention_paths = {}
    for tag in ("up0", "up1"):
        attn = np.where(same, WITHIN_ATTENTION, ACROSS_ATTENTION)
        attn = attn + rng.uniform(0.0, ATTENTION_NOISE, size=attn.shape)
        path = out / f"attn_{tag}.ddt1"
        write_tensor(tensor_from_array(attn[None, :, :]), path)
        attention_paths[tag] = path

    classes_path = out / "classes.txt"
    classes_path.write_text("left\nright\n", encoding="utf-8")

    # 64x64 guide with the same vertical split as the clusters
    guide = np.empty((64, 64, 3), dtype=np.uint8)
    guide[:, :32] = 51   # 0.2 of full scale
    guide[:, 32:] = 204  # 0.8
    guide_path = out / "guide.ppm"
    write_ppm(guide, guide_path)

    sidecar_path = out / "sidecar.json"
    sidecar = {
        "grid": [h, w],
        "blocks": {"up0": [h, w], "up1": [h, w]},
        "class_names": ["left", "right"],
    }
    sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")

    return TwoClusterFixture(
        directory=out,
        logits_path=logits_path,
        attention_paths=attention_paths,
        classes_path=classes_path,
        guide_path=guide_path,
        sidecar_path=sidecar_path,
        clusters=clusters,
        ambiguous=ambiguous,
    )
