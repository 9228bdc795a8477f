"""Training-free open-vocabulary segmentation.

Given per-patch class logits and fused self-attention over the patch grid,
computes one discrepancy map per candidate class (entropic transport, Markov
convergence, or a pointwise KL baseline), upsamples each map with a joint
bilateral filter against the full-resolution image, and takes a per-pixel
argmax to produce the label map.
"""

from ddseg.errors import DdsegError
from ddseg.tensor_store import DenseTensor, read_tensor, write_tensor
from ddseg.pipeline import RunConfig, run_segmentation

__version__ = "0.1.0"

__all__ = [
    "DdsegError",
    "DenseTensor",
    "read_tensor",
    "write_tensor",
    "RunConfig",
    "run_segmentation",
    "__version__",
]
