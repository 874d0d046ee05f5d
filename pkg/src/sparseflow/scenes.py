"""Synthetic ground-truth fixtures: scenes, features, and flow corruption.

Every end-to-end test in this package runs on scenes generated here, because
they come with exact dense flows and exact intermediate frames. Textures are
seeded pseudo-random; uniform regions are unmatchable by construction and
would make matching tests vacuous.

Two scene families:

* ``moving_square``: textured square translating over a textured background;
  occlusion exists at the square's leading/trailing edges, so it exercises
  hole masking and matching around disocclusions.
* ``translation_scene``: textured block translating over a *uniform*
  background with constant exact flows everywhere; photometrically
  occlusion-free, which is what zero-residual difference-map checks need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .types import FeatureMap, FlowField, Image, constant_flow


@dataclass(frozen=True)
class SceneFixture:
    """A two-frame scene with exact flows and the exact middle frame.

    Flows follow the package convention: ``flow01`` maps frame-0 pixels to
    frame 1; ``ft0``/``ft1`` map time-t pixels back to frames 0 and 1.
    ``occ0``/``occ1`` mark time-t pixels whose backward warp from that frame
    hits occluded (wrong) content.
    """

    i0: Image
    i1: Image
    mid: Image
    flow01: FlowField
    flow10: FlowField
    ft0: FlowField
    ft1: FlowField
    t: float
    occ0: np.ndarray
    occ1: np.ndarray


def _texture(rng: np.random.Generator, c: int, h: int, w: int) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=(c, h, w))


def _square_mask(h: int, w: int, y0: int, x0: int, size: int) -> np.ndarray:
    m = np.zeros((h, w), dtype=bool)
    m[y0 : y0 + size, x0 : x0 + size] = True
    return m


def moving_square(
    h: int,
    w: int,
    square_size: int,
    displacement: tuple[int, int],
    texture_seed: int = 0,
    t: float = 0.5,
    anchor: tuple[int, int] | None = None,
    channels: int = 3,
    uniform_background: bool = False,
) -> SceneFixture:
    """Textured square translated by integer (dx, dy) over a background.

    t*displacement must be integral so the middle frame is exact. The anchor
    defaults to a centered placement shifted so start, middle, and end
    positions all stay in bounds.
    """
    dx, dy = displacement
    if abs(dx) >= w or abs(dy) >= h:
        raise DimensionMismatchError("displacement exceeds grid")
    tdx, tdy = t * dx, t * dy
    if abs(tdx - round(tdx)) > 1e-9 or abs(tdy - round(tdy)) > 1e-9:
        raise ValueError(f"t*displacement must be integral, got ({tdx}, {tdy})")
    tdx, tdy = int(round(tdx)), int(round(tdy))

    if anchor is None:
        ax = (w - square_size - dx) // 2
        ay = (h - square_size - dy) // 2
    else:
        ay, ax = anchor
    for name, (yy, xx) in {
        "start": (ay, ax),
        "mid": (ay + tdy, ax + tdx),
        "end": (ay + dy, ax + dx),
    }.items():
        if yy < 0 or xx < 0 or yy + square_size > h or xx + square_size > w:
            raise DimensionMismatchError(f"square {name} position out of bounds")

    rng = np.random.default_rng(texture_seed)
    if uniform_background:
        background = np.full((channels, h, w), rng.uniform(0.25, 0.75))
    else:
        background = _texture(rng, channels, h, w)
    square_tex = _texture(rng, channels, square_size, square_size)

    def render(y0: int, x0: int) -> Image:
        frame = background.copy()
        frame[:, y0 : y0 + square_size, x0 : x0 + square_size] = square_tex
        return Image(frame)

    i0 = render(ay, ax)
    i1 = render(ay + dy, ax + dx)
    mid = render(ay + tdy, ax + tdx)

    sq0 = _square_mask(h, w, ay, ax, square_size)
    sq1 = _square_mask(h, w, ay + dy, ax + dx, square_size)
    sqm = _square_mask(h, w, ay + tdy, ax + tdx, square_size)

    def masked_flow(mask: np.ndarray, mu: float, mv: float) -> FlowField:
        return FlowField(np.where(mask, mu, 0.0), np.where(mask, mv, 0.0))

    return SceneFixture(
        i0=i0,
        i1=i1,
        mid=mid,
        flow01=masked_flow(sq0, dx, dy),
        flow10=masked_flow(sq1, -dx, -dy),
        ft0=masked_flow(sqm, -t * dx, -t * dy),
        ft1=masked_flow(sqm, (1 - t) * dx, (1 - t) * dy),
        t=t,
        occ0=sq0 & ~sqm,
        occ1=sq1 & ~sqm,
    )


def translation_scene(
    h: int,
    w: int,
    block_size: int,
    displacement: tuple[int, int],
    texture_seed: int = 0,
    t: float = 0.5,
    channels: int = 3,
) -> SceneFixture:
    """Textured block gliding over a uniform background, constant flows.

    Because the background is uniform, the constant-flow description is
    photometrically exact everywhere: no visible occlusion, no holes except
    the strips that exit the frame. t*displacement and (1-t)*displacement
    should be integral for bit-level exactness.
    """
    dx, dy = displacement
    rng = np.random.default_rng(texture_seed)
    bg_value = rng.uniform(0.25, 0.75)

    margin_x = abs(dx) + 2
    margin_y = abs(dy) + 2
    if block_size + 2 * margin_x > w or block_size + 2 * margin_y > h:
        raise DimensionMismatchError("block plus motion margin exceeds grid")
    ax = (w - block_size - dx) // 2
    ay = (h - block_size - dy) // 2
    block_tex = _texture(rng, channels, block_size, block_size)

    def render(y0: int, x0: int) -> Image:
        frame = np.full((channels, h, w), bg_value)
        frame[:, y0 : y0 + block_size, x0 : x0 + block_size] = block_tex
        return Image(frame)

    tdx, tdy = int(round(t * dx)), int(round(t * dy))
    i0 = render(ay, ax)
    i1 = render(ay + dy, ax + dx)
    mid = render(ay + tdy, ax + tdx)

    none = np.zeros((h, w), dtype=bool)
    return SceneFixture(
        i0=i0,
        i1=i1,
        mid=mid,
        flow01=constant_flow(h, w, dx, dy),
        flow10=constant_flow(h, w, -dx, -dy),
        ft0=constant_flow(h, w, -t * dx, -t * dy),
        ft1=constant_flow(h, w, (1 - t) * dx, (1 - t) * dy),
        t=t,
        occ0=none,
        occ1=none.copy(),
    )


def positional_features(
    h: int,
    w: int,
    mode: str = "fourier",
    channels: int = 64,
    roll: tuple[int, int] = (0, 0),
    scale_exponent: int = 0,
    feature_scale: float = 1.0,
) -> tuple[FeatureMap, FeatureMap]:
    """Synthetic feature pair: codes for a grid and the same codes rolled.

    ``onehot`` gives orthogonal per-position codes (channels >= h*w, small
    grids only); ``fourier`` gives periodic sinusoidal codes whose dot
    product depends only on positional offset. feature_scale multiplies the
    codes; larger values sharpen the matching softmax. The second map is
    np.roll of the first by (dy, dx), so the true correspondence wraps
    toroidally; use roll_ground_truth for the matching flow it implies.
    """
    dx, dy = roll
    if mode == "onehot":
        if channels < h * w:
            raise DimensionMismatchError(
                f"onehot features need channels >= {h * w}, got {channels}"
            )
        flat = np.zeros((channels, h * w))
        flat[np.arange(h * w), np.arange(h * w)] = feature_scale
        base = flat.reshape(channels, h, w)
    elif mode == "fourier":
        if channels % 4 != 0:
            raise DimensionMismatchError("fourier features need channels % 4 == 0")
        n_freq = channels // 4
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        planes = []
        for m in range(1, n_freq + 1):
            wx = 2 * np.pi * m / w
            wy = 2 * np.pi * m / h
            planes += [np.sin(wx * xs), np.cos(wx * xs), np.sin(wy * ys), np.cos(wy * ys)]
        base = np.stack(planes) * feature_scale
    else:
        raise ValueError(f"unknown feature mode {mode!r}")

    rolled = np.roll(base, shift=(dy, dx), axis=(1, 2))
    return (
        FeatureMap(base, scale=scale_exponent),
        FeatureMap(rolled, scale=scale_exponent),
    )


def roll_ground_truth(h: int, w: int, roll: tuple[int, int]) -> FlowField:
    """Per-cell matching flow implied by a toroidal roll of the target map.

    A source cell (x, y) corresponds to ((x+dx) mod w, (y+dy) mod h), so
    cells near the border wrap and carry large negative displacements.
    """
    dx, dy = roll
    ys, xs = np.mgrid[0:h, 0:w]
    return FlowField((xs + dx) % w - xs, (ys + dy) % h - ys)


def patch_features(img: Image, scale_exponent: int) -> FeatureMap:
    """Descriptor grid built from the image itself: one flattened, centered
    2^i x 2^i patch per grid cell.

    Stands in for a learned global feature extractor on synthetic scenes:
    random textures make patches discriminative, and centering removes the
    shared DC component so cross-patch dot products hover near zero.
    """
    f = 2**scale_exponent
    c, h, w = img.data.shape
    if h % f or w % f:
        raise DimensionMismatchError(f"{h}x{w} not divisible by 2^{scale_exponent}")
    hs, ws = h // f, w // f
    blocks = img.data.reshape(c, hs, f, ws, f)
    feats = blocks.transpose(0, 2, 4, 1, 3).reshape(c * f * f, hs, ws)
    return FeatureMap(feats - 0.5, scale=scale_exponent)


def corrupt_flow(
    flow: FlowField,
    region: tuple[int, int, int, int],
    mode: str = "zero",
    sigma: float = 1.0,
    seed: int = 0,
) -> FlowField:
    """Damage a flow inside region (y0, x0, y1, x1) (exclusive stops).

    mode='zero' erases the flow there; mode='noise' adds seeded Gaussian
    noise of the given sigma.
    """
    y0, x0, y1, x1 = region
    u = flow.u.copy()
    v = flow.v.copy()
    if mode == "zero":
        u[y0:y1, x0:x1] = 0.0
        v[y0:y1, x0:x1] = 0.0
    elif mode == "noise":
        rng = np.random.default_rng(seed)
        shape = u[y0:y1, x0:x1].shape
        u[y0:y1, x0:x1] += rng.normal(scale=sigma, size=shape)
        v[y0:y1, x0:x1] += rng.normal(scale=sigma, size=shape)
    else:
        raise ValueError(f"unknown corruption mode {mode!r}")
    return FlowField(u, v)
