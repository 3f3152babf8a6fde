import struct
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from wplus.core.exceptions import ImageIOError, LatentFileError
from wplus.modules.generator.generator_schema import ExtendedLatent, ImageBuffer

LATENT_MAGIC = b"WPLT"
LATENT_VERSION = 1
LATENT_HEADER = struct.Struct("<4sIII")


def image_to_uint8(image: ImageBuffer) -> np.ndarray:
    """Export quantization: round(clamp(x, 0, 1) * 255)."""
    pixels = image.pixels.detach().to(torch.float64).clamp(0.0, 1.0) * 255.0
    return torch.round(pixels).to(torch.uint8).cpu().numpy()


def write_png(image: ImageBuffer, path: Path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(image_to_uint8(image)).save(path, format="PNG")
    except OSError as e:
        raise ImageIOError(f"Cannot write image {path}: {e}")


def read_png(path: Path, dtype: torch.dtype = torch.float32) -> ImageBuffer:
    try:
        with Image.open(path) as img:
            data = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, ValueError) as e:
        raise ImageIOError(f"Cannot read image {path}: {e}")
    return ImageBuffer(pixels=torch.from_numpy(data).to(dtype))


def write_latent(latent: ExtendedLatent, path: Path) -> None:
    rows = np.ascontiguousarray(latent.rows.detach().cpu().to(torch.float32).numpy(), dtype="<f4")
    num_layers, style_dim = rows.shape
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(LATENT_HEADER.pack(LATENT_MAGIC, LATENT_VERSION, num_layers, style_dim) + rows.tobytes())
    except OSError as e:
        raise LatentFileError(f"Cannot write latent file {path}: {e}")


def read_latent(path: Path, dtype: torch.dtype = torch.float32) -> ExtendedLatent:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise LatentFileError(f"Cannot read latent file {path}: {e}")

    if len(data) < LATENT_HEADER.size:
        raise LatentFileError(f"Latent file {path} is shorter than its {LATENT_HEADER.size}-byte header")
    magic, version, num_layers, style_dim = LATENT_HEADER.unpack_from(data)
    if magic != LATENT_MAGIC:
        raise LatentFileError(f"Latent file {path} has bad magic {magic!r}, expected {LATENT_MAGIC!r}")
    if version != LATENT_VERSION:
        raise LatentFileError(f"Latent file {path} has unsupported version {version}, expected {LATENT_VERSION}")
    expected = LATENT_HEADER.size + 4 * num_layers * style_dim
    if len(data) != expected:
        raise LatentFileError(
            f"Latent file {path} has size {len(data)} bytes, expected {expected} for L={num_layers}, D={style_dim}"
        )

    rows = np.frombuffer(data, dtype="<f4", offset=LATENT_HEADER.size).reshape(num_layers, style_dim)
    return ExtendedLatent(rows=torch.from_numpy(rows.astype(np.float32)).to(dtype))
