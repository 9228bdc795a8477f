"""Feature backbones that turn one image into engine inputs.

Two implementations share the :class:`BackboneOutput` contract.  The
statistics backbone is a deterministic stand-in that runs anywhere and
is what the test suite exercises.  The pretrained backbone loads a
contrastive vision-language encoder for the logits and a latent
denoiser for the self-attention tensors; it requires locally cached
weights and fails with :class:`ModelLoadError` when they are absent.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from ddseg_extractor.errors import ExtractorError, ManifestError, ModelLoadError

FEATURE_DIM = 32
HEAD_DIM = 16
HEADS = 4

# contrastive encoders emit temperature-scaled cosines, and the engine's
# row softmax needs that scale to produce decisive confidences
LOGIT_SCALE = 100.0

# luma weights for 8-bit RGB
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class BackboneOutput:
    """Everything a backbone produces for one image.

    ``logits`` is (N, N_c) with N = grid[0] * grid[1]; each attention
    entry is (H_b, N_b, N_b) with N_b = block_grids[tag][0] *
    block_grids[tag][1] and nonnegative rows.
    """

    logits: np.ndarray
    grid: tuple[int, int]
    attentions: dict[str, np.ndarray]
    block_grids: dict[str, tuple[int, int]]


def _context_rng(seed: int, *context: str) -> np.random.Generator:
    """Generator keyed by the seed and a stable string context.

    Hash-based so that draws never depend on call order or on process
    state, which is what makes repeated runs byte-identical.
    """
    text = "\x1f".join((str(int(seed)), *context))
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:16], "little"))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.maximum(norms, 1e-12)


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cell_stats(image01: np.ndarray, grid: tuple[int, int]) -> np.ndarray:
    """Per-cell statistics of an (H, W, 3) image with values in [0, 1].

    The image is tiled into grid[0] x grid[1] cells along integer edge
    positions; every cell contributes mean RGB, RGB standard deviation,
    mean luma, mean absolute luma step, and its normalized center.
    Returns (grid[0] * grid[1], 10) in row-major cell order.
    """
    h, w = image01.shape[:2]
    gh, gw = grid
    if gh > h or gw > w:
        raise ManifestError(
            f"grid {gh}x{gw} needs cells smaller than one pixel on a {w}x{h} image"
        )
    rows = (np.arange(gh + 1) * h) // gh
    cols = (np.arange(gw + 1) * w) // gw
    luma = image01 @ _LUMA
    out = np.empty((gh * gw, 10))
    for i in range(gh):
        for j in range(gw):
            cell = image01[rows[i]:rows[i + 1], cols[j]:cols[j + 1]]
            lum = luma[rows[i]:rows[i + 1], cols[j]:cols[j + 1]]
            flat = cell.reshape(-1, 3)
            dy = np.abs(np.diff(lum, axis=0)).mean() if lum.shape[0] > 1 else 0.0
            dx = np.abs(np.diff(lum, axis=1)).mean() if lum.shape[1] > 1 else 0.0
            out[i * gw + j, 0:3] = flat.mean(axis=0)
            out[i * gw + j, 3:6] = flat.std(axis=0)
            out[i * gw + j, 6] = lum.mean()
            out[i * gw + j, 7] = dy + dx
            out[i * gw + j, 8] = (i + 0.5) / gh
            out[i * gw + j, 9] = (j + 0.5) / gw
    return out


class StatsBackbone:
    """Deterministic stand-in encoder built from per-cell statistics.

    Cell statistics pass through projections drawn from seeded
    generators, so the output is repeatable bit for bit while still
    tracking real image structure.  Prompt embeddings are keyed by the
    prompt text, which keeps logits stable across processes.  The
    manifest's time step perturbs the attention features with seeded
    pseudo-noise scaled by step/1000; step 0 skips the perturbation
    entirely, so nothing nondeterministic can leak in.
    """

    name = "stats"

    def __init__(self, seed: int = 0):
        self.seed = int(seed)

    def _features(self, image01: np.ndarray, grid: tuple[int, int], context: str) -> np.ndarray:
        stats = cell_stats(image01, grid)
        rng = _context_rng(self.seed, "projection", context)
        weight = rng.standard_normal((stats.shape[1], FEATURE_DIM))
        bias = rng.standard_normal(FEATURE_DIM)
        return np.tanh(stats @ weight + bias)

    def _prompt_embedding(self, prompt: str) -> np.ndarray:
        rng = _context_rng(self.seed, "prompt", prompt)
        return _unit_rows(rng.standard_normal((1, FEATURE_DIM)))[0]

    def logits(self, image01: np.ndarray, grid: tuple[int, int], prompts) -> np.ndarray:
        """Temperature-scaled cosines of patch features against prompts."""
        feats = _unit_rows(self._features(image01, grid, "logits"))
        embeds = np.stack([self._prompt_embedding(p) for p in prompts])
        return LOGIT_SCALE * (feats @ embeds.T)

    def attention(
        self, image01: np.ndarray, resolution: int, tag: str, time_step: int
    ) -> np.ndarray:
        """Row-stochastic multi-head self-similarity at one block resolution."""
        feats = self._features(image01, (resolution, resolution), f"block:{tag}")
        if time_step > 0:
            noise = _context_rng(self.seed, "step-noise", tag, str(time_step))
            feats = feats + (time_step / 1000.0) * noise.standard_normal(feats.shape)
        heads = []
        for h in range(HEADS):
            rng = _context_rng(self.seed, "head", tag, str(h))
            proj = rng.standard_normal((FEATURE_DIM, HEAD_DIM))
            x = feats @ proj
            heads.append(_softmax_rows((x @ x.T) / math.sqrt(HEAD_DIM)))
        return np.stack(heads)

    def run(self, image_u8: np.ndarray, manifest) -> BackboneOutput:
        image01 = image_u8.astype(np.float64) / 255.0
        h = image01.shape[0] // manifest.patch_size
        w = image01.shape[1] // manifest.patch_size
        resolution = manifest.attention_resolution or min(h, w)
        logits = self.logits(image01, (h, w), manifest.prompts())
        attentions = {}
        grids = {}
        for tag in manifest.blocks:
            attentions[tag] = self.attention(image01, resolution, tag, manifest.time_step)
            grids[tag] = (resolution, resolution)
        return BackboneOutput(logits, (h, w), attentions, grids)


# denoiser module paths carrying each exported block's self-attention
_BLOCK_PREFIXES = {
    "down0": "down_blocks.1",
    "down1": "down_blocks.2",
    "up0": "up_blocks.1",
    "up1": "up_blocks.2",
    "up2": "up_blocks.3",
}

_NATIVE_DENOISER_EDGE = 512


class PretrainedBackbone:
    """Logits from a vision-language encoder, attention from a denoiser.

    Weights are loaded from the local cache only; anything missing, the
    libraries included, raises :class:`ModelLoadError` so callers can
    exit with a clear stage message instead of half-running.
    """

    name = "pretrained"

    def __init__(
        self,
        clip_name: str = "openai/clip-vit-base-patch16",
        denoiser_name: str = "stabilityai/stable-diffusion-2-base",
    ):
        self.clip_name = clip_name
        self.denoiser_name = denoiser_name

    def _load(self):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise ModelLoadError(f"encoder libraries unavailable: {exc}") from exc
        try:
            from diffusers import StableDiffusionPipeline
        except ImportError as exc:
            raise ModelLoadError(f"denoiser library unavailable: {exc}") from exc
        try:
            clip = CLIPModel.from_pretrained(self.clip_name, local_files_only=True)
            processor = CLIPProcessor.from_pretrained(self.clip_name, local_files_only=True)
            pipe = StableDiffusionPipeline.from_pretrained(
                self.denoiser_name, local_files_only=True
            )
        except Exception as exc:
            raise ModelLoadError(f"weights not cached locally: {exc}") from exc
        clip.eval()
        return torch, clip, processor, pipe

    def _clip_logits(self, torch, clip, processor, image_u8, manifest):
        patch = clip.config.vision_config.patch_size
        if patch != manifest.patch_size:
            raise ManifestError(
                f"encoder uses {patch}px patches; pass --patch {patch}"
            )
        ip = processor.image_processor
        mean = torch.tensor(ip.image_mean).view(1, 3, 1, 1)
        std = torch.tensor(ip.image_std).view(1, 3, 1, 1)
        pixels = torch.from_numpy(image_u8.astype(np.float32) / 255.0)
        pixels = (pixels.permute(2, 0, 1).unsqueeze(0) - mean) / std
        out = clip.vision_model(pixel_values=pixels, interpolate_pos_encoding=True)
        tokens = out.last_hidden_state[:, 1:, :]
        tokens = clip.visual_projection(clip.vision_model.post_layernorm(tokens))[0]
        grid = (image_u8.shape[0] // patch, image_u8.shape[1] // patch)
        if tokens.shape[0] != grid[0] * grid[1]:
            raise ExtractorError(
                f"encoder produced {tokens.shape[0]} tokens for grid {grid}"
            )
        text_inputs = processor(
            text=list(manifest.prompts()), return_tensors="pt", padding=True
        )
        text = clip.get_text_features(**text_inputs)
        tokens = tokens / tokens.norm(dim=-1, keepdim=True)
        text = text / text.norm(dim=-1, keepdim=True)
        scale = clip.logit_scale.exp()
        return (scale * tokens @ text.T).cpu().numpy().astype(np.float64), grid

    def _denoiser_attention(self, torch, pipe, image_u8, manifest):
        from PIL import Image

        if manifest.attention_resolution and manifest.attention_resolution % 8:
            raise ManifestError(
                "attention resolution must be a multiple of 8 for the pretrained backbone"
            )
        edge = (
            8 * manifest.attention_resolution
            if manifest.attention_resolution
            else _NATIVE_DENOISER_EDGE
        )
        square = Image.fromarray(image_u8).resize((edge, edge), Image.BILINEAR)
        arr = np.asarray(square, dtype=np.float32) / 255.0
        tensor = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0) * 2.0 - 1.0
        latents = pipe.vae.encode(tensor).latent_dist.mode()
        latents = latents * pipe.vae.config.scaling_factor

        captured: dict[str, list] = {tag: [] for tag in manifest.blocks}

        class _Recorder:
            def __init__(self, tag):
                self.tag = tag

            def __call__(self, attn, hidden_states, encoder_hidden_states=None,
                         attention_mask=None, **kwargs):
                context = hidden_states if encoder_hidden_states is None else encoder_hidden_states
                q = attn.head_to_batch_dim(attn.to_q(hidden_states))
                k = attn.head_to_batch_dim(attn.to_k(context))
                v = attn.head_to_batch_dim(attn.to_v(context))
                probs = attn.get_attention_scores(q, k, attention_mask)
                captured[self.tag].append(probs.detach().cpu())
                out = attn.batch_to_head_dim(torch.bmm(probs, v))
                return attn.to_out[1](attn.to_out[0](out))

        processors = dict(pipe.unet.attn_processors)
        for name in processors:
            for tag in manifest.blocks:
                if name.startswith(_BLOCK_PREFIXES[tag]) and ".attn1." in name:
                    processors[name] = _Recorder(tag)
        pipe.unet.set_attn_processor(processors)

        prompt_ids = pipe.tokenizer(
            [""], return_tensors="pt", padding="max_length",
            max_length=pipe.tokenizer.model_max_length,
        ).input_ids
        uncond = pipe.text_encoder(prompt_ids)[0]
        timestep = torch.tensor(manifest.time_step, dtype=torch.long)
        pipe.unet(latents, timestep, encoder_hidden_states=uncond)

        attentions = {}
        grids = {}
        for tag in manifest.blocks:
            layers = captured[tag]
            if not layers:
                raise ExtractorError(f"block {tag} captured no self-attention")
            stacked = torch.cat(layers, dim=0).numpy().astype(np.float64)
            side = math.isqrt(stacked.shape[1])
            if side * side != stacked.shape[1]:
                raise ExtractorError(
                    f"block {tag} attention length {stacked.shape[1]} is not square"
                )
            attentions[tag] = stacked
            grids[tag] = (side, side)
        return attentions, grids

    def run(self, image_u8: np.ndarray, manifest) -> BackboneOutput:
        torch, clip, processor, pipe = self._load()
        with torch.no_grad():
            logits, grid = self._clip_logits(torch, clip, processor, image_u8, manifest)
            attentions, grids = self._denoiser_attention(torch, pipe, image_u8, manifest)
        return BackboneOutput(logits, grid, attentions, grids)


def make_backbone(name: str, manifest) -> StatsBackbone | PretrainedBackbone:
    if name == "stats":
        return StatsBackbone(manifest.seed)
    if name == "pretrained":
        return PretrainedBackbone(manifest.clip_name, manifest.denoiser_name)
    raise ManifestError(f"unknown backbone {name!r}")
