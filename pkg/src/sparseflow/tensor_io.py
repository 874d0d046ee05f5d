"""File formats and resampling for the core grid types.

Formats:

* Middlebury ``.flo``: magic ``PIEH``, little-endian int32 width and height,
  then H*W interleaved (u, v) float32 pairs, row-major. Values with
  magnitude above 1e9 are the Middlebury "unknown flow" sentinel; this
  pipeline has no unknown-flow notion, so they are rejected.
* ``FMP1`` feature carrier: magic ``FMP1``, little-endian uint32 C, H, W,
  uint8 scale exponent, 3 reserved zero bytes, then C*H*W float32 values
  planar. 20-byte header total.
* PNG (via Pillow): 8-bit gray or RGB; import divides by 255, export rounds
  half-away-from-zero. 16-bit gray PNG is used for difference-map heat maps.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image as PilImage

from .errors import (
    BadMagicError,
    DimensionMismatchError,
    IoFailureError,
    NonFiniteValueError,
    TruncatedError,
)
from .types import FlowField, FeatureMap, Image, ScalarMap

FLO_MAGIC = b"PIEH"
FMP_MAGIC = b"FMP1"

# Middlebury convention: |value| > 1e9 marks unknown flow.
FLO_SENTINEL = 1e9


def _check_flow_values(u: np.ndarray, v: np.ndarray, context: str) -> None:
    uv = np.stack([u, v])
    if not np.isfinite(uv).all():
        raise NonFiniteValueError(f"{context}: non-finite flow values")
    if np.abs(uv).max(initial=0.0) > FLO_SENTINEL:
        raise NonFiniteValueError(
            f"{context}: flow magnitude above {FLO_SENTINEL:g} (unknown-flow sentinel)"
        )


def read_flo(path: str | Path) -> FlowField:
    """Read a Middlebury .flo flow file."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc
    if len(raw) < 4 or raw[:4] != FLO_MAGIC:
        raise BadMagicError(f"{path}: expected magic {FLO_MAGIC!r}")
    if len(raw) < 12:
        raise TruncatedError(f"{path}: header truncated")
    width, height = struct.unpack_from("<ii", raw, 4)
    if width <= 0 or height <= 0:
        raise TruncatedError(f"{path}: invalid dimensions {width}x{height}")
    expected = 12 + 8 * width * height
    if len(raw) != expected:
        raise TruncatedError(
            f"{path}: expected {expected} bytes for {width}x{height}, got {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=12).reshape(height, width, 2)
    u = data[:, :, 0].astype(np.float64)
    v = data[:, :, 1].astype(np.float64)
    _check_flow_values(u, v, str(path))
    return FlowField(u, v)


def write_flo(flow: FlowField, path: str | Path) -> None:
    """Write a FlowField as Middlebury .flo (float32 on disk)."""
    _check_flow_values(flow.u, flow.v, str(path))
    interleaved = np.stack([flow.u, flow.v], axis=-1).astype("<f4")
    header = FLO_MAGIC + struct.pack("<ii", flow.width, flow.height)
    try:
        Path(path).write_bytes(header + interleaved.tobytes())
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def read_fmap(path: str | Path) -> FeatureMap:
    """Read an FMP1 feature-map file."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc
    if len(raw) < 4 or raw[:4] != FMP_MAGIC:
        raise BadMagicError(f"{path}: expected magic {FMP_MAGIC!r}")
    if len(raw) < 20:
        raise TruncatedError(f"{path}: header truncated")
    c, h, w = struct.unpack_from("<III", raw, 4)
    scale = raw[16]
    if c < 1 or h < 1 or w < 1:
        raise TruncatedError(f"{path}: invalid dimensions C={c} H={h} W={w}")
    expected = 20 + 4 * c * h * w
    if len(raw) != expected:
        raise TruncatedError(
            f"{path}: expected {expected} bytes for {c}x{h}x{w}, got {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=20).reshape(c, h, w)
    return FeatureMap(data.astype(np.float64), scale=scale)


def write_fmap(fmap: FeatureMap, path: str | Path) -> None:
    """Write a FeatureMap as FMP1 (float32 planar on disk)."""
    if fmap.scale > 255:
        raise NonFiniteValueError(f"scale exponent {fmap.scale} does not fit in u8")
    header = FMP_MAGIC + struct.pack(
        "<IIIB3x", fmap.channels, fmap.height, fmap.width, fmap.scale
    )
    try:
        Path(path).write_bytes(header + fmap.data.astype("<f4").tobytes())
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def read_image(path: str | Path) -> Image:
    """Read an 8-bit gray or RGB PNG into a [0, 1] planar Image."""
    try:
        with PilImage.open(path) as img:
            if img.mode not in ("L", "RGB"):
                img = img.convert("RGB" if img.mode in ("RGBA", "P", "CMYK") else "L")
            arr = np.asarray(img, dtype=np.float64)
    except OSError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[None, :, :]
    else:
        arr = np.moveaxis(arr, -1, 0)
    return Image(arr / 255.0)


def _quantize(data: np.ndarray, levels: int) -> np.ndarray:
    # Half-away-from-zero rounding; data is nonnegative here.
    return np.clip(np.floor(data * levels + 0.5), 0, levels).astype(np.uint16)


def write_image(img: Image, path: str | Path) -> None:
    """Write an Image as 8-bit gray or RGB PNG."""
    q = _quantize(img.data, 255).astype(np.uint8)
    if img.channels == 1:
        pil = PilImage.fromarray(q[0], mode="L")
    else:
        pil = PilImage.fromarray(np.moveaxis(q, 0, -1), mode="RGB")
    try:
        pil.save(path, format="PNG")
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def write_heatmap(smap: ScalarMap, path: str | Path) -> None:
    """Write a ScalarMap as a max-normalized 16-bit gray PNG for inspection.

    The normalization is monotone, so rank-based consumers (top-k) can read
    the PNG back losslessly in ordering even though absolute values change.
    """
    peak = float(smap.data.max())
    norm = smap.data / peak if peak > 0 else smap.data
    q = _quantize(norm, 65535)
    try:
        PilImage.fromarray(q).save(path, format="PNG")
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def read_heatmap(path: str | Path) -> ScalarMap:
    """Read a 16-bit gray PNG back into a [0, 1] ScalarMap."""
    try:
        with PilImage.open(path) as img:
            arr = np.asarray(img, dtype=np.float64)
    except OSError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc
    if arr.ndim != 2:
        raise BadMagicError(f"{path}: expected single-channel heat map")
    return ScalarMap(arr / 65535.0)


def read_scalar_map(path: str | Path) -> ScalarMap:
    """Read a difference map from FMP1 (exact) or 16-bit PNG (normalized)."""
    p = Path(path)
    if p.suffix.lower() == ".png":
        return read_heatmap(p)
    fmap = read_fmap(p)
    if fmap.channels != 1:
        raise BadMagicError(f"{path}: scalar map must have one channel")
    return ScalarMap(fmap.data[0])


def _bilinear_axis_coords(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Source taps and weight for align-corners bilinear resampling."""
    if n_out == 1 or n_in == 1:
        pos = np.zeros(n_out)
    else:
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.clip(np.floor(pos).astype(np.int64), 0, n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resample_plane(plane: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resample of a 2-D plane onto an align-corners grid."""
    y_lo, y_hi, fy = _bilinear_axis_coords(new_h, plane.shape[0])
    x_lo, x_hi, fx = _bilinear_axis_coords(new_w, plane.shape[1])
    fy = fy[:, None]
    fx = fx[None, :]
    top = plane[np.ix_(y_lo, x_lo)] * (1 - fx) + plane[np.ix_(y_lo, x_hi)] * fx
    bot = plane[np.ix_(y_hi, x_lo)] * (1 - fx) + plane[np.ix_(y_hi, x_hi)] * fx
    return top * (1 - fy) + bot * fy


def resize_flow(flow: FlowField, new_h: int, new_w: int) -> FlowField:
    """Bilinear-resample a flow and rescale displacements to the new grid.

    u is scaled by new_w/W and v by new_h/H so the displacement stays
    proportional to the grid it addresses.
    """
    if new_h <= 0 or new_w <= 0:
        raise DimensionMismatchError(f"target size must be positive, got {new_h}x{new_w}")
    u = resample_plane(flow.u, new_h, new_w) * (new_w / flow.width)
    v = resample_plane(flow.v, new_h, new_w) * (new_h / flow.height)
    return FlowField(u, v)


def downscale_image_area(img: Image, factor: int) -> Image:
    """Downscale an image by integer-factor area averaging.

    Height and width must be divisible by the factor; this keeps feature-grid
    indices exactly aligned with image blocks.
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    c, h, w = img.data.shape
    if h % factor or w % factor:
        raise ValueError(f"{h}x{w} not divisible by area factor {factor}")
    blocks = img.data.reshape(c, h // factor, factor, w // factor, factor)
    return Image(blocks.mean(axis=(2, 4)))
