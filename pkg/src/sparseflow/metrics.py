"""Quality metrics and evaluation losses.

PSNR and SSIM follow the standard definitions for unit-dynamic-range data
(SSIM: 11-tap Gaussian window, sigma 1.5, C1=0.01^2, C2=0.03^2,
channel-averaged). The Laplacian-pyramid and warp losses mirror common VFI
training objectives but are exposed here purely as evaluation metrics.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError
from .tensor_io import resample_plane
from .types import FlowField, Image, require_same_grid
from .warping import backward_warp

PSNR_CAP_DB = 100.0
WARP_LOSS_WEIGHT = 0.5

_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2
_PYRAMID_TAP = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _check_pair(a: Image, b: Image) -> None:
    require_same_grid((a.height, a.width), (b.height, b.width))
    if a.channels != b.channels:
        raise DimensionMismatchError("channel counts disagree")


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB; identical images return the cap."""
    _check_pair(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    ax = np.arange(window) - window // 2
    g = np.exp(-(ax**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def _ssim_plane(a: np.ndarray, b: np.ndarray, kernel: np.ndarray) -> float:
    window = kernel.shape[0]
    win = np.lib.stride_tricks.sliding_window_view(a, (window, window))
    win_b = np.lib.stride_tricks.sliding_window_view(b, (window, window))
    mu_a = np.einsum("ijkl,kl->ij", win, kernel)
    mu_b = np.einsum("ijkl,kl->ij", win_b, kernel)
    ex_aa = np.einsum("ijkl,kl->ij", win * win, kernel)
    ex_bb = np.einsum("ijkl,kl->ij", win_b * win_b, kernel)
    ex_ab = np.einsum("ijkl,kl->ij", win * win_b, kernel)
    var_a = ex_aa - mu_a**2
    var_b = ex_bb - mu_b**2
    cov = ex_ab - mu_a * mu_b
    num = (2 * mu_a * mu_b + _SSIM_C1) * (2 * cov + _SSIM_C2)
    den = (mu_a**2 + mu_b**2 + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
    return float(np.mean(num / den))


def ssim(a: Image, b: Image, window: int = 11, sigma: float = 1.5) -> float:
    """Mean local SSIM over fully-contained windows, channel-averaged."""
    _check_pair(a, b)
    if a.height < window or a.width < window:
        raise DimensionMismatchError(
            f"image {a.height}x{a.width} smaller than SSIM window {window}"
        )
    kernel = _gaussian_kernel(window, sigma)
    return float(
        np.mean([_ssim_plane(a.data[c], b.data[c], kernel) for c in range(a.channels)])
    )


def _blur5(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    padded = np.pad(plane, 2, mode="reflect")
    tmp = sum(t * padded[:, i : i + w] for i, t in enumerate(_PYRAMID_TAP))
    return sum(t * tmp[i : i + h, :] for i, t in enumerate(_PYRAMID_TAP))


def _gaussian_pyramid(plane: np.ndarray, levels: int) -> list[np.ndarray]:
    out = [plane]
    for _ in range(levels - 1):
        blurred = _blur5(out[-1])
        out.append(blurred[::2, ::2])
    return out


def _laplacian_bands(plane: np.ndarray, levels: int) -> list[np.ndarray]:
    gauss = _gaussian_pyramid(plane, levels)
    bands = []
    for lvl in range(levels - 1):
        up = resample_plane(gauss[lvl + 1], *gauss[lvl].shape)
        bands.append(gauss[lvl] - up)
    bands.append(gauss[-1])  # coarsest low-pass residual
    return bands


def laplacian_loss(a: Image, b: Image, levels: int = 5) -> float:
    """Sum over pyramid levels of 2^level-weighted mean L1 band differences."""
    _check_pair(a, b)
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    total = 0.0
    for c in range(a.channels):
        bands_a = _laplacian_bands(a.data[c], levels)
        bands_b = _laplacian_bands(b.data[c], levels)
        for lvl, (ba, bb) in enumerate(zip(bands_a, bands_b)):
            total += (2**lvl) * float(np.mean(np.abs(ba - bb)))
    return total / a.channels


def warp_loss(i0: Image, i1: Image, igt: Image, ft0: FlowField, ft1: FlowField) -> float:
    """Sum of mean L1 errors between the target and each warped input."""
    _check_pair(i0, igt)
    _check_pair(i1, igt)
    w0 = backward_warp(i0, ft0, border="clamp")
    w1 = backward_warp(i1, ft1, border="clamp")
    return float(np.mean(np.abs(igt.data - w0.data)) + np.mean(np.abs(igt.data - w1.data)))


def combined_loss(
    i0: Image,
    i1: Image,
    igt: Image,
    ft0: FlowField,
    ft1: FlowField,
    synthesized: Image,
    warp_weight: float = WARP_LOSS_WEIGHT,
) -> float:
    """Laplacian loss of the synthesized frame plus weighted warp loss."""
    return laplacian_loss(synthesized, igt) + warp_weight * warp_loss(i0, i1, igt, ft0, ft1)


def endpoint_error(flow: FlowField, flow_gt: FlowField, support=None) -> float:
    """Mean Euclidean error, optionally restricted to a sparse support."""
    require_same_grid((flow.height, flow.width), (flow_gt.height, flow_gt.width))
    du = flow.u - flow_gt.u
    dv = flow.v - flow_gt.v
    err = np.hypot(du, dv)
    if support is not None:
        err = err.ravel()[support.indices]
    return float(np.mean(err))
