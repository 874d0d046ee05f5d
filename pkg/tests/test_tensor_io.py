import struct

import numpy as np
import pytest

from sparseflow.errors import (
    BadMagicError,
    IoFailureError,
    NonFiniteValueError,
    TruncatedError,
)
from sparseflow.tensor_io import (
    downscale_image_area,
    read_flo,
    read_fmap,
    read_heatmap,
    read_image,
    resize_flow,
    write_flo,
    write_fmap,
    write_heatmap,
    write_image,
)
from sparseflow.types import FeatureMap, FlowField, Image, ScalarMap, constant_flow

from oracles import bilinear_resample_plane


# --- .flo ---------------------------------------------------------------


def test_flo_known_byte_buffer(tmp_path):
    # Hand-assembled 2x2 file of constant (1.5, -2.0).
    buf = b"PIEH" + struct.pack("<ii", 2, 2)
    for _ in range(4):
        buf += struct.pack("<ff", 1.5, -2.0)
    p = tmp_path / "c.flo"
    p.write_bytes(buf)
    flow = read_flo(p)
    assert flow.height == 2 and flow.width == 2
    assert np.all(flow.u == 1.5)
    assert np.all(flow.v == -2.0)
    # Writing it back reproduces the exact bytes.
    out = tmp_path / "c2.flo"
    write_flo(flow, out)
    assert out.read_bytes() == buf


def test_flo_roundtrip_random(tmp_path):
    rng = np.random.default_rng(0)
    for trial in range(10):
        h, w = rng.integers(1, 9, size=2)
        u = rng.normal(scale=30, size=(h, w)).astype(np.float32).astype(np.float64)
        v = rng.normal(scale=30, size=(h, w)).astype(np.float32).astype(np.float64)
        flow = FlowField(u, v)
        p = tmp_path / f"r{trial}.flo"
        write_flo(flow, p)
        back = read_flo(p)
        assert np.array_equal(back.u, u)
        assert np.array_equal(back.v, v)
        # Byte-identical on rewrite.
        p2 = tmp_path / f"r{trial}b.flo"
        write_flo(back, p2)
        assert p.read_bytes() == p2.read_bytes()


def test_flo_bad_magic(tmp_path):
    p = tmp_path / "bad.flo"
    p.write_bytes(b"XXXX" + struct.pack("<ii", 1, 1) + struct.pack("<ff", 0, 0))
    with pytest.raises(BadMagicError):
        read_flo(p)


def test_flo_truncated(tmp_path):
    p = tmp_path / "t.flo"
    p.write_bytes(b"PIEH" + struct.pack("<ii", 4, 4) + b"\0" * 8)
    with pytest.raises(TruncatedError):
        read_flo(p)


def test_flo_sentinel_rejected(tmp_path):
    p = tmp_path / "s.flo"
    p.write_bytes(b"PIEH" + struct.pack("<ii", 1, 1) + struct.pack("<ff", 2e9, 0.0))
    with pytest.raises(NonFiniteValueError):
        read_flo(p)


def test_flo_unwritable_path():
    with pytest.raises(IoFailureError):
        write_flo(constant_flow(2, 2, 1, 1), "/nonexistent-dir/x.flo")


# --- FMP1 ---------------------------------------------------------------


def test_fmap_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    data = rng.normal(size=(4, 3, 3)).astype(np.float32).astype(np.float64)
    fmap = FeatureMap(data, scale=2)
    p = tmp_path / "f.fmp"
    write_fmap(fmap, p)
    back = read_fmap(p)
    assert back.scale == 2
    assert np.array_equal(back.data, data)


def test_fmap_byte_count(tmp_path):
    # 20-byte header (magic + 3 u32 + u8 + 3 reserved) plus one float32.
    fmap = FeatureMap(np.full((1, 1, 1), 7.0), scale=0)
    p = tmp_path / "one.fmp"
    write_fmap(fmap, p)
    raw = p.read_bytes()
    assert len(raw) == 20 + 4
    assert raw[:4] == b"FMP1"
    assert struct.unpack_from("<III", raw, 4) == (1, 1, 1)
    assert raw[16] == 0
    assert struct.unpack_from("<f", raw, 20)[0] == 7.0


def test_fmap_truncated(tmp_path):
    p = tmp_path / "t.fmp"
    # Declares 2x2x2 but carries a single float.
    p.write_bytes(b"FMP1" + struct.pack("<IIIB3x", 2, 2, 2, 0) + struct.pack("<f", 1.0))
    with pytest.raises(TruncatedError):
        read_fmap(p)


def test_fmap_bad_magic(tmp_path):
    p = tmp_path / "b.fmp"
    p.write_bytes(b"NOPE" + b"\0" * 20)
    with pytest.raises(BadMagicError):
        read_fmap(p)


# --- PNG ----------------------------------------------------------------


def test_png_roundtrip_8bit(tmp_path):
    rng = np.random.default_rng(2)
    # Quantized values survive a write/read cycle exactly.
    data = rng.integers(0, 256, size=(3, 6, 5)).astype(np.float64) / 255.0
    img = Image(data)
    p = tmp_path / "img.png"
    write_image(img, p)
    back = read_image(p)
    assert back.channels == 3
    assert np.allclose(back.data, data, atol=1e-12)


def test_png_gray_and_rounding(tmp_path):
    # 0.5/255 rounds up (half away from zero) to 1.
    img = Image(np.full((1, 2, 2), 0.5 / 255.0))
    p = tmp_path / "g.png"
    write_image(img, p)
    back = read_image(p)
    assert np.allclose(back.data, 1.0 / 255.0)


def test_heatmap_16bit_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    data = rng.uniform(0, 4, size=(5, 7))
    data[2, 3] = 4.0  # pin the max
    smap = ScalarMap(data)
    p = tmp_path / "d.png"
    write_heatmap(smap, p)
    back = read_heatmap(p)
    # Monotone max-normalized: ranks preserved, peak maps to 1.0.
    assert back.data[2, 3] == 1.0
    order_orig = np.argsort(data.ravel(), kind="stable")
    order_back = np.argsort(back.data.ravel(), kind="stable")
    assert np.array_equal(order_orig, order_back)


# --- resize_flow ----------------------------------------------------------


def test_resize_flow_identity():
    rng = np.random.default_rng(4)
    f = FlowField(rng.normal(size=(5, 4)), rng.normal(size=(5, 4)))
    g = resize_flow(f, 5, 4)
    assert np.allclose(g.u, f.u, atol=1e-12)
    assert np.allclose(g.v, f.v, atol=1e-12)


def test_resize_flow_constant_scaling():
    f = constant_flow(16, 16, 8.0, 4.0)
    g = resize_flow(f, 8, 8)
    assert np.allclose(g.u, 4.0)
    assert np.allclose(g.v, 2.0)


def test_resize_flow_matches_bilinear_oracle():
    rng = np.random.default_rng(5)
    u = rng.normal(size=(2, 2))
    v = rng.normal(size=(2, 2))
    f = FlowField(u, v)
    g = resize_flow(f, 4, 4)
    assert np.allclose(g.u, bilinear_resample_plane(u, 4, 4) * 2.0, atol=1e-12)
    assert np.allclose(g.v, bilinear_resample_plane(v, 4, 4) * 2.0, atol=1e-12)


def test_resize_flow_roundtrip_on_smooth_fields():
    # Globally bilinear fields are reproduced exactly by bilinear resampling.
    ys, xs = np.mgrid[0:6, 0:8].astype(np.float64)
    u = 0.3 + 0.1 * xs + 0.05 * ys + 0.01 * xs * ys
    v = -0.2 + 0.07 * xs - 0.03 * ys
    f = FlowField(u, v)
    round_trip = resize_flow(resize_flow(f, 12, 16), 6, 8)
    assert np.allclose(round_trip.u, u, atol=1e-4)
    assert np.allclose(round_trip.v, v, atol=1e-4)


# --- area downscale -------------------------------------------------------


def test_downscale_area_blocks():
    data = np.arange(16, dtype=np.float64).reshape(1, 4, 4) / 16.0
    img = Image(data)
    small = downscale_image_area(img, 2)
    # Top-left block mean: (0+1+4+5)/4 / 16
    assert small.data[0, 0, 0] == pytest.approx((0 + 1 + 4 + 5) / 4 / 16)
    with pytest.raises(ValueError):
        downscale_image_area(img, 3)
