"""Reflector array kinematics.

Tiles sit on a flat base plane in an offset-row hexagonal packing. Each
agent steers one segment of tiles by moving a virtual focal point; every
tile in the segment takes the mirror normal that sends the access-point ray
through that point, subject to per-axis angle limits.

All functions accept single vectors of shape ``(3,)`` or stacks of shape
``(..., 3)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateBisector, DegenerateTileWarning, InvalidConfiguration

_DEGENERATE_NORM = 1e-12
_VERTICAL_EPS = 1e-12
_UNIT_TOL = 1e-9


def unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def wrap_angle(a):
    """Map angles onto (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    out = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class AngleLimits:
    """Mechanical range of a tile.

    ``phi_*`` is measured relative to the azimuth of the array's rest normal,
    ``theta_*`` is absolute (angle from +z).
    """

    phi_min: float = -np.pi / 3
    phi_max: float = np.pi / 3
    theta_min: float = np.pi / 6
    theta_max: float = 5 * np.pi / 6

    def __post_init__(self):
        if not self.phi_min <= self.phi_max:
            raise InvalidConfiguration("phi_min must not exceed phi_max")
        if not self.theta_min <= self.theta_max:
            raise InvalidConfiguration("theta_min must not exceed theta_max")
        if self.theta_min < 0 or self.theta_max > np.pi:
            raise InvalidConfiguration("theta limits must lie in [0, pi]")
        if self.phi_min <= -np.pi or self.phi_max > np.pi:
            raise InvalidConfiguration("phi limits must lie in (-pi, pi]")


@dataclass(frozen=True)
class BasePlane:
    """Mounting plane: tile rows advance along ``u``, columns along ``v``."""

    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        for name in ("origin", "u", "v", "normal"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        axes = np.stack([self.u, self.v, self.normal])
        if not np.allclose(axes @ axes.T, np.eye(3), atol=1e-9):
            raise InvalidConfiguration("base plane axes u, v, normal must be orthonormal")


@dataclass(frozen=True)
class TileGeom:
    position: np.ndarray
    normal: np.ndarray
    row: int
    col: int
    area: float


@dataclass(frozen=True)
class FocalPoint:
    position: np.ndarray
    agent_id: int


@dataclass(frozen=True, eq=False)
class ArrayLayout:
    tiles: tuple
    rows: int
    cols: int
    pitch: float
    plane: BasePlane
    segments: tuple
    positions: np.ndarray = field(repr=False)
    segment_of: np.ndarray = field(repr=False)

    @property
    def n_tiles(self) -> int:
        return len(self.tiles)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def rest_normal(self) -> np.ndarray:
        return self.plane.normal

    @property
    def tile_area(self) -> float:
        return self.tiles[0].area

    @property
    def columns(self) -> np.ndarray:
        return np.array([t.col for t in self.tiles])

    def segment_centroids(self) -> np.ndarray:
        return np.stack([self.positions[list(seg)].mean(axis=0) for seg in self.segments])

    def with_segments(self, segments: Sequence[Sequence[int]]) -> "ArrayLayout":
        return _build_layout(self.tiles, self.rows, self.cols, self.pitch, self.plane, segments)


def _build_layout(tiles, rows, cols, pitch, plane, segments) -> ArrayLayout:
    segments = tuple(tuple(int(i) for i in seg) for seg in segments)
    flat = sorted(i for seg in segments for i in seg)
    if flat != list(range(len(tiles))):
        raise InvalidConfiguration("segments must be disjoint and cover every tile")
    segment_of = np.empty(len(tiles), dtype=int)
    for l, seg in enumerate(segments):
        segment_of[list(seg)] = l
    positions = np.stack([t.position for t in tiles])
    return ArrayLayout(tuple(tiles), rows, cols, pitch, plane, segments, positions, segment_of)


def column_segments(rows: int, cols: int, n_segments: int) -> list[list[int]]:
    """Split the columns into ``n_segments`` contiguous slices (tile index = r*cols + c)."""
    if not 1 <= n_segments <= cols:
        raise InvalidConfiguration(f"cannot split {cols} columns into {n_segments} segments")
    bounds = np.linspace(0, cols, n_segments + 1).round().astype(int)
    return [
        [r * cols + c for r in range(rows) for c in range(bounds[l], bounds[l + 1])]
        for l in range(n_segments)
    ]


def hex_layout(rows: int, cols: int, pitch: float, plane: BasePlane,
               segments: Sequence[Sequence[int]] | int = 3) -> ArrayLayout:
    """Offset-row hexagonal packing; odd rows shift half a pitch along ``v``."""
    if rows < 1 or cols < 1:
        raise InvalidConfiguration("rows and cols must be at least 1")
    if pitch <= 0:
        raise InvalidConfiguration("pitch must be positive")
    area = np.sqrt(3.0) / 2.0 * pitch**2
    tiles = []
    for r in range(rows):
        for c in range(cols):
            pos = plane.origin + plane.v * (c * pitch + (r % 2) * pitch / 2) \
                + plane.u * (r * pitch * np.sqrt(3.0) / 2)
            tiles.append(TileGeom(pos, plane.normal.copy(), r, c, area))
    if isinstance(segments, (int, np.integer)):
        segments = column_segments(rows, cols, int(segments))
    return _build_layout(tiles, rows, cols, pitch, plane, segments)


def reflect(d, n):
    d = np.asarray(d, dtype=float)
    n = np.asarray(n, dtype=float)
    return d - 2.0 * np.sum(d * n, axis=-1, keepdims=True) * n


def _bisector(s, r, f):
    a = np.asarray(s, dtype=float) - r
    b = np.asarray(f, dtype=float) - r
    half = 0.5 * (unit(a) + unit(b))
    norm = np.linalg.norm(half, axis=-1, keepdims=True)
    bad = norm[..., 0] < _DEGENERATE_NORM
    return half / np.where(norm < _DEGENERATE_NORM, 1.0, norm), bad


def bisector_normal(s, r, f) -> np.ndarray:
    """Unit mirror normal at ``r`` that reflects a ray from ``s`` towards ``f``."""
    r = np.asarray(r, dtype=float)
    if np.any(np.all(np.isclose(np.asarray(s) - r, 0.0), axis=-1)) or \
            np.any(np.all(np.isclose(np.asarray(f) - r, 0.0), axis=-1)):
        raise DegenerateBisector("source or focal point coincides with the tile")
    n, bad = _bisector(s, r, f)
    if np.any(bad):
        raise DegenerateBisector("source and focal point are in opposite directions from the tile")
    return n


def normal_to_angles(n):
    """Return ``(phi, theta)`` of a unit normal; ``phi = 0`` for vertical normals."""
    n = np.asarray(n, dtype=float)
    if np.any(np.abs(np.linalg.norm(n, axis=-1) - 1.0) > _UNIT_TOL):
        raise ValueError("normal_to_angles expects unit vectors")
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    vertical = (np.abs(x) < _VERTICAL_EPS) & (np.abs(y) < _VERTICAL_EPS)
    phi = np.where(vertical, 0.0, np.arctan2(y, x))
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    if n.ndim == 1:
        return float(phi), float(theta)
    return phi, theta


def angles_to_normal(phi, theta) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def clamp_angles(phi, theta, limits: AngleLimits):
    phi = np.clip(phi, limits.phi_min, limits.phi_max)
    theta = np.clip(theta, limits.theta_min, limits.theta_max)
    if np.ndim(phi) == 0:
        return float(phi), float(theta)
    return phi, theta


def circular_mean(angles) -> float:
    angles = np.asarray(angles, dtype=float)
    return float(np.arctan2(np.sin(angles).mean(), np.cos(angles).mean()))


def column_constrain(phi, theta, layout: ArrayLayout):
    """Give every tile in a column the circular mean azimuth of that column."""
    phi = np.array(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if phi.shape != (layout.n_tiles,):
        raise ValueError(f"expected {layout.n_tiles} angles, got {phi.shape}")
    cols = layout.columns
    for c in np.unique(cols):
        mask = cols == c
        phi[mask] = circular_mean(phi[mask])
    return phi, theta.copy()


def _as_focal_array(focal, n_segments: int) -> np.ndarray:
    if len(focal) and isinstance(focal[0], FocalPoint):
        out = np.empty((n_segments, 3))
        seen = set()
        for fp in focal:
            out[fp.agent_id] = fp.position
            seen.add(fp.agent_id)
        if seen != set(range(n_segments)):
            raise ValueError("need exactly one focal point per segment")
        return out
    out = np.asarray(focal, dtype=float)
    if out.shape != (n_segments, 3):
        raise ValueError(f"need one focal point per segment, got shape {out.shape}")
    return out


def focal_angles(layout: ArrayLayout, focal, s, limits: AngleLimits):
    """Clamped absolute ``(phi, theta)`` per tile for the given focal points.

    Tiles with a degenerate bisector keep their rest angles.
    """
    f = _as_focal_array(focal, layout.n_segments)
    n, bad = _bisector(s, layout.positions, f[layout.segment_of])
    if np.any(bad):
        warnings.warn(f"{int(bad.sum())} tile(s) kept the rest normal (degenerate bisector)",
                      DegenerateTileWarning, stacklevel=2)
        n[bad] = layout.rest_normal
    phi, theta = normal_to_angles(n)
    rest_phi, _ = normal_to_angles(layout.rest_normal)
    rel, theta = clamp_angles(wrap_angle(phi - rest_phi), theta, limits)
    return wrap_angle(rel + rest_phi), theta


def apply_focal_points(layout: ArrayLayout, focal, s, limits: AngleLimits,
                       column_constrained: bool = False) -> np.ndarray:
    """Per-tile unit normals, shape ``(n_tiles, 3)``."""
    phi, theta = focal_angles(layout, focal, s, limits)
    if column_constrained:
        phi, theta = column_constrain(phi, theta, layout)
    return angles_to_normal(phi, theta)


def mirror_point(p, plane: BasePlane) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return p - 2.0 * np.dot(p - plane.origin, plane.normal) * plane.normal


def control_dims(layout: ArrayLayout) -> tuple[int, int]:
    """(focal coordinates controlled, raw tile angles replaced)."""
    return 3 * layout.n_segments, 2 * layout.rows * layout.cols
