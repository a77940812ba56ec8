"""Pixel extraction and sRGB -> CIELAB conversion.

Clustering happens in the (a*, b*) plane.  The conversion chain is the
standard one: 8-bit sRGB is gamma-decoded, mapped to CIE XYZ with the D65
sRGB primaries, normalized by the white point and companded with the CIE
cube-root/linear piecewise function.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .sequence_store import Raster

# sRGB primaries and D65 white, CIE xy chromaticities
_PRIMARIES_XY = np.array([[0.64, 0.33], [0.30, 0.60], [0.15, 0.06]])
_D65_XY = np.array([0.3127, 0.3290])

CIE_EPSILON = 216.0 / 24389.0
CIE_KAPPA = 24389.0 / 27.0


def _xy_to_xyz(xy):
    xy = np.asarray(xy, dtype=np.float64)
    return np.stack([xy[..., 0] / xy[..., 1], np.ones(xy.shape[:-1]), (1 - xy[..., 0] - xy[..., 1]) / xy[..., 1]], axis=-1)


def _rgb_to_xyz_matrix():
    prim = _xy_to_xyz(_PRIMARIES_XY).T  # columns are the primaries
    scale = np.linalg.solve(prim, _xy_to_xyz(_D65_XY))
    return prim * scale


RGB_TO_XYZ = _rgb_to_xyz_matrix()
# white is M @ (1,1,1), summed in the same order as the per-pixel transform
WHITE_XYZ = RGB_TO_XYZ[:, 0] + RGB_TO_XYZ[:, 1] + RGB_TO_XYZ[:, 2]


def _srgb_decode(c):
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


# linear-light value of each 8-bit code
SRGB_LINEAR = _srgb_decode(np.arange(256) / 255.0)


@dataclass(frozen=True)
class RgbColor:
    r: int
    g: int
    b: int

    def __post_init__(self):
        for name in ("r", "g", "b"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= v <= 255:
                raise ValueError(f"channel {name}={v!r} outside [0, 255]")

    def as_tuple(self) -> tuple[int, int, int]:
        return (int(self.r), int(self.g), int(self.b))


@dataclass(frozen=True)
class LabColor:
    l_star: float
    a_star: float
    b_star: float

    @property
    def ab(self) -> tuple[float, float]:
        return (self.a_star, self.b_star)


@dataclass(frozen=True)
class PixelRecord:
    image_id: str
    x: int
    y: int
    rgb: RgbColor
    feature: tuple[float, float]

    def to_line(self) -> str:
        r, g, b = self.rgb.as_tuple()
        return f"{self.image_id},{self.x},{self.y},{r},{g},{b}"


def _lab_f(t):
    return np.where(t > CIE_EPSILON, np.cbrt(t), (CIE_KAPPA * t + 16.0) / 116.0)


def rgb_to_lab_array(rgb) -> np.ndarray:
    """Vectorized conversion of uint8 RGB triples (..., 3) to (..., 3) L*a*b*."""
    rgb = np.asarray(rgb)
    if rgb.shape[-1] != 3:
        raise ValueError(f"expected trailing dimension 3, got shape {rgb.shape}")
    idx = rgb.astype(np.intp)
    if idx.size and (idx.min() < 0 or idx.max() > 255):
        raise ValueError("RGB channels must lie in [0, 255]")
    lin_r = SRGB_LINEAR[idx[..., 0]]
    lin_g = SRGB_LINEAR[idx[..., 1]]
    lin_b = SRGB_LINEAR[idx[..., 2]]
    m = RGB_TO_XYZ
    # elementwise (not matmul) so the result never depends on batch size
    x = m[0, 0] * lin_r + m[0, 1] * lin_g + m[0, 2] * lin_b
    y = m[1, 0] * lin_r + m[1, 1] * lin_g + m[1, 2] * lin_b
    z = m[2, 0] * lin_r + m[2, 1] * lin_g + m[2, 2] * lin_b
    xr = x / WHITE_XYZ[0]
    yr = y / WHITE_XYZ[1]
    zr = z / WHITE_XYZ[2]
    fx, fy, fz = _lab_f(xr), _lab_f(yr), _lab_f(zr)
    l_star = np.where(yr > CIE_EPSILON, 116.0 * fy - 16.0, CIE_KAPPA * yr)
    out = np.empty(rgb.shape[:-1] + (3,), dtype=np.float64)
    out[..., 0] = l_star
    out[..., 1] = 500.0 * (fx - fy)
    out[..., 2] = 200.0 * (fy - fz)
    return out


def rgb_to_lab(c: RgbColor | tuple[int, int, int]) -> LabColor:
    if not isinstance(c, RgbColor):
        c = RgbColor(*c)
    l_star, a_star, b_star = rgb_to_lab_array(np.array(c.as_tuple())).tolist()
    return LabColor(l_star, a_star, b_star)


def lab_distance_sq(p, q) -> float:
    da = float(p[0]) - float(q[0])
    db = float(p[1]) - float(q[1])
    return da * da + db * db


def pack_rgb(rgb) -> np.ndarray:
    """Pack (..., 3) uint8 triples into 24-bit uint32 codes ``r<<16 | g<<8 | b``."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    out = rgb[..., 0].astype(np.uint32) << 16
    out |= rgb[..., 1].astype(np.uint32) << 8
    out |= rgb[..., 2]
    return out


def unpack_rgb(codes) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.uint32)
    out = np.empty(codes.shape + (3,), dtype=np.uint8)
    out[..., 0] = codes >> 16
    out[..., 1] = (codes >> 8) & 0xFF
    out[..., 2] = codes & 0xFF
    return out


@functools.lru_cache(maxsize=1)
def ab_table() -> np.ndarray:
    """(a*, b*) for every 24-bit color, indexed by :func:`pack_rgb` code.

    256 MiB of float64, built once per process.  Values are produced by
    :func:`rgb_to_lab_array`, so a lookup equals a direct conversion bit for bit.
    """
    table = np.empty((1 << 24, 2), dtype=np.float64)
    gb = np.stack(np.meshgrid(np.arange(256), np.arange(256), indexing="ij"), axis=-1).reshape(-1, 2)
    rgb = np.empty((len(gb), 3), dtype=np.uint8)
    rgb[:, 1:] = gb
    for r in range(256):
        rgb[:, 0] = r
        table[r << 16 : (r + 1) << 16] = rgb_to_lab_array(rgb)[:, 1:]
    table.flags.writeable = False
    return table


def ab_features(rgb) -> np.ndarray:
    """(n, 2) float64 (a*, b*) features of (n, 3) uint8 RGB rows."""
    rgb = np.asarray(rgb)
    return np.ascontiguousarray(rgb_to_lab_array(rgb.reshape(-1, 3))[:, 1:])


def extract_pixels(raster: Raster, image_id: str) -> Iterator[PixelRecord]:
    """Row-major stream of every pixel of ``raster`` with its (a*, b*) feature."""
    flat = raster.pixels.reshape(-1, 3)
    feats = ab_features(flat)
    w = raster.width
    for i, (px, f) in enumerate(zip(flat.tolist(), feats.tolist())):
        y, x = divmod(i, w)
        yield PixelRecord(image_id, x, y, RgbColor(*px), (f[0], f[1]))


def pixel_lines(raster: Raster, image_id: str) -> Iterator[str]:
    """Text dump of the pixel stream: ``image_id,x,y,r,g,b`` per line."""
    flat = raster.pixels.reshape(-1, 3).tolist()
    w = raster.width
    for i, (r, g, b) in enumerate(flat):
        y, x = divmod(i, w)
        yield f"{image_id},{x},{y},{r},{g},{b}"
