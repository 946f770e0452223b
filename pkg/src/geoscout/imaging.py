"""8-bit image buffers and the deterministic pixel operations built on them.

All operations are pure numpy on uint8 arrays (grayscale ``(H, W)`` or RGB
``(H, W, 3)``), so generated pixels are bit-identical across platforms.
Pillow is used only at the PNG boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .core import GridSpec
from .errors import ImageTooSmall


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Row-major 8-bit samples, 1 or 3 channels, at least 4x4 pixels."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {p.dtype}")
        if p.ndim == 3 and p.shape[2] == 1:
            p = p[:, :, 0]
            object.__setattr__(self, "pixels", p)
        if p.ndim not in (2, 3) or (p.ndim == 3 and p.shape[2] != 3):
            raise ValueError(f"unsupported pixel shape {p.shape}")
        if p.shape[0] < 4 or p.shape[1] < 4:
            raise ValueError(f"image too small: {p.shape[1]}x{p.shape[0]} (min 4x4)")
        if p.flags.writeable:
            p = p.copy()
            p.setflags(write=False)
            object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    def normalized(self) -> np.ndarray:
        """float64 view of the samples scaled to [0, 1]."""
        return self.pixels.astype(np.float64) / 255.0

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(
            self.pixels, other.pixels
        )


def crop(img: ImageBuffer, y: int, x: int, h: int, w: int) -> ImageBuffer:
    if y < 0 or x < 0 or y + h > img.height or x + w > img.width:
        raise ValueError(f"crop ({y},{x},{h},{w}) outside {img.width}x{img.height}")
    return ImageBuffer(img.pixels[y : y + h, x : x + w].copy())


def center_crop(img: ImageBuffer, h: int, w: int) -> ImageBuffer:
    y = (img.height - h) // 2
    x = (img.width - w) // 2
    return crop(img, y, x, h, w)


def center_crop_to_grid(img: ImageBuffer, grid: GridSpec) -> ImageBuffer:
    """Largest centered region with dimensions divisible by the grid."""
    h = (img.height // grid.rows) * grid.rows
    w = (img.width // grid.cols) * grid.cols
    if h < grid.rows or w < grid.cols:
        raise ImageTooSmall(f"{img.width}x{img.height} cannot host a {grid.rows}x{grid.cols} grid")
    return center_crop(img, h, w)


def resize_bilinear(img: ImageBuffer, out_h: int, out_w: int) -> ImageBuffer:
    """Bilinear resize with half-pixel centers, computed in float64.

    Implemented directly so resampled pixels do not depend on any image
    library version.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be positive")
    src = img.pixels.astype(np.float64)
    in_h, in_w = src.shape[0], src.shape[1]

    def axis_coords(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1.0)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = axis_coords(out_h, in_h)
    x0, x1, fx = axis_coords(out_w, in_w)
    if src.ndim == 2:
        fy_c, fx_c = fy[:, None], fx[None, :]
    else:
        fy_c, fx_c = fy[:, None, None], fx[None, :, None]
    top = src[y0][:, x0] * (1.0 - fx_c) + src[y0][:, x1] * fx_c
    bot = src[y1][:, x0] * (1.0 - fx_c) + src[y1][:, x1] * fx_c
    out = top * (1.0 - fy_c) + bot * fy_c
    return ImageBuffer(np.clip(np.rint(out), 0, 255).astype(np.uint8))


def to_channels(img: ImageBuffer, channels: int) -> ImageBuffer:
    """Convert between grayscale and RGB (RGB->gray uses the channel mean)."""
    if channels == img.channels:
        return img
    if channels == 3:
        return ImageBuffer(np.repeat(img.pixels[:, :, None], 3, axis=2))
    if channels == 1:
        gray = np.rint(img.pixels.astype(np.float64).mean(axis=2))
        return ImageBuffer(gray.astype(np.uint8))
    raise ValueError(f"unsupported channel count {channels}")


def grid_patches(img: ImageBuffer, grid: GridSpec) -> list[ImageBuffer]:
    """Patches in reading order; image dimensions must divide evenly."""
    if img.height % grid.rows or img.width % grid.cols:
        raise ValueError("image dimensions not divisible by grid")
    ph, pw = img.height // grid.rows, img.width // grid.cols
    return [
        crop(img, u * ph, v * pw, ph, pw)
        for u in range(grid.rows)
        for v in range(grid.cols)
    ]


def compose_grid(patches: list[ImageBuffer], grid: GridSpec) -> ImageBuffer:
    if len(patches) != grid.size:
        raise ValueError(f"expected {grid.size} patches, got {len(patches)}")
    rows = [
        np.concatenate([p.pixels for p in patches[r * grid.cols : (r + 1) * grid.cols]], axis=1)
        for r in range(grid.rows)
    ]
    return ImageBuffer(np.concatenate(rows, axis=0))


def save_png(img: ImageBuffer, path) -> None:
    mode = "L" if img.channels == 1 else "RGB"
    Image.fromarray(np.asarray(img.pixels), mode=mode).save(path, format="PNG", compress_level=1)


def load_png(path) -> ImageBuffer:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("L" if len(im.getbands()) == 1 else "RGB")
        return ImageBuffer(np.asarray(im, dtype=np.uint8))
