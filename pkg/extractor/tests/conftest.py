import numpy as np
import pytest
from PIL import Image

from ddseg_extractor import ExtractionManifest, extract


@pytest.fixture(scope="session")
def panel_scene(tmp_path_factory):
    """96x64 PNG split into two noisy colored panels, plus a class list.

    Non-square on purpose: the patch grid comes out 4x6, so consumers
    must honor the sidecar instead of inferring a square grid.
    """
    root = tmp_path_factory.mktemp("scene")
    rng = np.random.default_rng(7)
    img = np.zeros((64, 96, 3), np.uint8)
    img[:, :48] = (200, 40, 40)
    img[:, 48:] = (40, 180, 60)
    jitter = rng.integers(-15, 16, img.shape)
    img = np.clip(img.astype(int) + jitter, 0, 255).astype(np.uint8)
    image_path = root / "scene.png"
    Image.fromarray(img).save(image_path)
    classes_path = root / "classes.txt"
    classes_path.write_text("crimson panel\nemerald panel\n", encoding="utf-8")
    return image_path, classes_path


@pytest.fixture(scope="session")
def panel_extraction(panel_scene, tmp_path_factory):
    """One finished extraction of the panel scene, shared read-only."""
    image_path, classes_path = panel_scene
    out = tmp_path_factory.mktemp("feats") / "x"
    manifest = ExtractionManifest(
        image_path=str(image_path),
        class_names=("crimson panel", "emerald panel"),
        output_dir=str(out),
    )
    return manifest, extract(manifest)
