"""Generate one instance of each geometric proxy task and inspect it.

Writes the images next to this script under demos/output/ so you can open
them: the scale task's global view plus crops, the shuffled jigsaw, and the
cut-paste anomaly image.
"""

from pathlib import Path

import numpy as np

from geoscout import (
    AnomalyTaskSpec,
    GridSpec,
    ImageBuffer,
    Modality,
    ScaleTaskSpec,
    SourceRecord,
    gen_anomaly_task,
    gen_jigsaw_task,
    gen_scale_task,
    save_png,
)
from geoscout.core import derive_seed

OUT = Path(__file__).parent / "output" / "tasks"
OUT.mkdir(parents=True, exist_ok=True)


def checkerboard_image(seed: int, size: int = 256) -> ImageBuffer:
    """Structured synthetic scan: smooth gradients plus a few bright blobs."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size]
    canvas = 80 + 60 * np.sin(x / 23.0) * np.cos(y / 31.0)
    for _ in range(6):
        cy, cx = rng.integers(40, size - 40, size=2)
        r = rng.integers(8, 25)
        canvas += 90 * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * r**2))
    return ImageBuffer(np.clip(canvas, 0, 255).astype(np.uint8))


img = checkerboard_image(1)
save_png(img, OUT / "source.png")

# Task A: crop3 patches at two scale levels, constrained to the central ROI
scale = gen_scale_task(img, ScaleTaskSpec(), seed=derive_seed(0, "demo", "scale", 0))
print("scale task:")
for i, (level, box) in enumerate(zip(scale.levels, scale.boxes), start=1):
    print(f"  patch {i}: level={level} box=({box.x1:.3f},{box.y1:.3f},{box.x2:.3f},{box.y2:.3f})")
    save_png(scale.patches[i - 1], OUT / f"scale_patch{i}.png")

# Task B: shuffle the 2x2 quadrants; sigma[i] names the original patch now at i
jig = gen_jigsaw_task(img, GridSpec(2, 2), seed=derive_seed(0, "demo", "topo", 0))
save_png(jig.shuffled, OUT / "jigsaw_shuffled.png")
print(f"jigsaw task: sigma = {list(jig.sigma)}")

# Task C: paste the co-located patch of a reference image into a center cell
reference = checkerboard_image(2)
record = SourceRecord("demo", Modality.CT, "unused", series_id="s", z=0)
anom = gen_anomaly_task(
    img, record, AnomalyTaskSpec(), lambda r: ("demo-ref", reference),
    seed=derive_seed(0, "demo", "anom", 0),
)
save_png(anom.corrupted, OUT / "anomaly_corrupted.png")
print(f"anomaly task: replaced patch index = {anom.k_star} (4x4 grid, central block)")
print(f"\nimages written to {OUT}")
