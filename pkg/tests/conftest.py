import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the shared oracles module

from geoscout.core import Modality
from geoscout.imaging import ImageBuffer, save_png


def random_image(seed: int, h: int = 64, w: int = 64, channels: int = 1) -> ImageBuffer:
    rng = np.random.default_rng(seed)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return ImageBuffer(rng.integers(0, 256, size=shape, dtype=np.uint8))


def build_synthetic_sources(
    root: Path,
    per_modality: int = 24,
    image_size: int = 64,
    slices_per_series: int = 4,
    embed_dim: int = 8,
    textures: int = 16,
) -> tuple[Path, Path]:
    """Write a small source catalog: texture PNGs, catalog JSONL, embedding JSONL.

    CT/MRI records form series of consecutive z slices; X-ray records carry
    embeddings placed on a circle so that every record's nearest neighbor is
    a different record with a different texture.
    """
    import json

    root.mkdir(parents=True, exist_ok=True)
    img_dir = root / "src_images"
    img_dir.mkdir(exist_ok=True)
    texture_paths: dict[tuple[str, int], Path] = {}
    for m in ("ct", "mri", "xray"):
        for t in range(textures):
            p = img_dir / f"{m}_tex{t:03d}.png"
            save_png(random_image(hash((m, t)) % 2**32, image_size, image_size), p)
            texture_paths[(m, t)] = p

    catalog_path = root / "catalog.jsonl"
    index_path = root / "embeddings.jsonl"
    cat_lines, emb_lines = [], []
    for m in (Modality.CT, Modality.MRI):
        n_series = (per_modality + slices_per_series - 1) // slices_per_series
        count = 0
        for s in range(n_series):
            for z in range(slices_per_series):
                if count >= per_modality:
                    break
                tex = texture_paths[(m.value, (s * slices_per_series + z) % textures)]
                cat_lines.append(
                    {
                        "id": f"{m.value}{count:06d}",
                        "modality": m.value,
                        "path": str(tex),
                        "series_id": f"{m.value}_series{s:04d}",
                        "z": z,
                    }
                )
                count += 1
    for i in range(per_modality):
        tex = texture_paths[("xray", i % textures)]
        angle = 2.0 * np.pi * i / per_modality
        emb_id = f"emb{i:06d}"
        cat_lines.append(
            {
                "id": f"xray{i:06d}",
                "modality": "xray",
                "path": str(tex),
                "embedding_id": emb_id,
            }
        )
        vec = [float(np.cos(angle)), float(np.sin(angle))] + [0.0] * (embed_dim - 2)
        emb_lines.append({"id": emb_id, "vector": vec})

    catalog_path.write_text("\n".join(json.dumps(o) for o in cat_lines) + "\n")
    index_path.write_text("\n".join(json.dumps(o) for o in emb_lines) + "\n")
    return catalog_path, index_path


@pytest.fixture(scope="session")
def synthetic_sources(tmp_path_factory) -> tuple[Path, Path]:
    root = tmp_path_factory.mktemp("sources")
    return build_synthetic_sources(root)


@pytest.fixture(scope="session")
def reward_server():
    """Live uvicorn server for HTTP-level tests; yields its base URL."""
    import socket
    import threading
    import time

    import httpx
    import uvicorn

    from geoscout.service import create_app

    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
    config = uvicorn.Config(create_app(), host="127.0.0.1", port=port, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{port}"
    deadline = time.time() + 15
    while time.time() < deadline:
        try:
            if httpx.get(base + "/v1/health", timeout=1.0).status_code == 200:
                break
        except Exception:
            time.sleep(0.05)
    else:
        raise RuntimeError("reward server did not come up")
    yield base
    server.should_exit = True
    thread.join(timeout=5)
