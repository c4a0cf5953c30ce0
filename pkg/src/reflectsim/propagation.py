"""Single-bounce specular propagation.

Received power is the incoherent sum of the free-space direct path (when
unobstructed) and one scattered contribution per tile. A tile re-radiates
the power it intercepts into a normalized ``cos^q`` lobe centred on the
specular direction. Walls and cylinders only block; they neither transmit
nor reflect.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ArrayLayout, TileGeom, reflect

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class Material:
    name: str
    reflection_coefficient: float

    def __post_init__(self):
        if not 0.0 <= self.reflection_coefficient <= 1.0:
            raise ValueError("reflection coefficient must lie in [0, 1]")


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float).reshape(3))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float).reshape(3))
        if np.any(self.lo > self.hi):
            raise ValueError("box min corner exceeds max corner")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def clip(self, p):
        return np.clip(p, self.lo, self.hi)

    def contains(self, p, tol: float = 0.0) -> bool:
        p = np.asarray(p)
        return bool(np.all(p >= self.lo - tol) and np.all(p <= self.hi + tol))

    def normalize(self, p):
        """Map the box onto [-1, 1] per axis (flat axes map to 0)."""
        span = np.where(self.hi > self.lo, self.hi - self.lo, 1.0)
        out = 2.0 * (np.asarray(p, dtype=float) - self.lo) / span - 1.0
        return np.where(self.hi > self.lo, out, 0.0)


@dataclass(frozen=True)
class Wall:
    """Axis-aligned slab."""

    lo: np.ndarray
    hi: np.ndarray
    material: Material
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float).reshape(3))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float).reshape(3))


@dataclass(frozen=True)
class Cylinder:
    """Vertical cylinder standing on ``base`` (x, y, z of the bottom centre)."""

    base: np.ndarray
    radius: float
    height: float
    material: Material
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float).reshape(3))


@dataclass(frozen=True)
class Scene:
    walls: tuple
    obstacles: tuple
    ap_position: np.ndarray
    frequency: float
    tx_power_mw: float
    rx_height: float
    focal_region: Box
    bounds: Box
    users: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        object.__setattr__(self, "ap_position", np.asarray(self.ap_position, dtype=float).reshape(3))
        object.__setattr__(self, "users", np.asarray(self.users, dtype=float).reshape(-1, 3))
        if self.frequency <= 0:
            raise ValueError("frequency must be positive")
        if self.tx_power_mw <= 0:
            raise ValueError("transmit power must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency

    @property
    def tx_power_w(self) -> float:
        return self.tx_power_mw * 1e-3


@dataclass(frozen=True)
class RadiationModel:
    lobe_exponent: float = 140.0
    tile_reflectivity: float = 0.95
    noise_floor_dbm: float = -150.0

    def __post_init__(self):
        if self.lobe_exponent <= 0:
            raise ValueError("lobe exponent must be positive")
        if not 0.0 <= self.tile_reflectivity <= 1.0:
            raise ValueError("tile reflectivity must lie in [0, 1]")


def empty_scene(ap=(0.0, 0.0, 0.0), frequency=60e9, tx_power_mw=5.0) -> Scene:
    big = Box((-1e3, -1e3, -1e3), (1e3, 1e3, 1e3))
    return Scene((), (), np.asarray(ap, dtype=float), frequency, tx_power_mw, 1.0, big, big)


# -- occlusion ---------------------------------------------------------------

# chords shorter than this fraction of the segment count as grazing
_MIN_CHORD = 1e-12


def _slab_hits(p, d, lo, hi):
    """Open segment p + t*d, t in (0, 1), meets the open box interior."""
    t0 = np.zeros(p.shape[:-1])
    t1 = np.ones(p.shape[:-1])
    for ax in range(3):
        da = d[..., ax]
        pa = p[..., ax]
        flat = np.abs(da) < 1e-15
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (lo[ax] - pa) / da
            tb = (hi[ax] - pa) / da
        near = np.where(flat, -np.inf, np.minimum(ta, tb))
        far = np.where(flat, np.inf, np.maximum(ta, tb))
        # midpoint keeps the verdict independent of segment direction
        ma = pa + 0.5 * da
        outside = flat & ~((ma > lo[ax]) & (ma < hi[ax]))
        t0 = np.maximum(t0, near)
        t1 = np.where(outside, -np.inf, np.minimum(t1, far))
    return t1 - t0 > _MIN_CHORD


def _cylinder_hits(p, d, cyl: Cylinder):
    c = cyl.base
    px, py = p[..., 0] - c[0], p[..., 1] - c[1]
    dx, dy = d[..., 0], d[..., 1]
    a = dx * dx + dy * dy
    b = 2.0 * (px * dx + py * dy)
    cc = px * px + py * py - cyl.radius**2
    horizontal = a < 1e-30
    disc = b * b - 4.0 * a * cc
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        r0 = (-b - sq) / (2.0 * a)
        r1 = (-b + sq) / (2.0 * a)
    mx, my = px + 0.5 * dx, py + 0.5 * dy
    inside_xy = mx * mx + my * my < cyl.radius**2
    t0 = np.where(horizontal, np.where(inside_xy, -np.inf, np.inf), np.where(disc > 0, r0, np.inf))
    t1 = np.where(horizontal, np.where(inside_xy, np.inf, -np.inf), np.where(disc > 0, r1, -np.inf))
    z0, z1 = c[2], c[2] + cyl.height
    pz, dz = p[..., 2], d[..., 2]
    flat = np.abs(dz) < 1e-15
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = (z0 - pz) / dz
        tb = (z1 - pz) / dz
    mz = pz + 0.5 * dz
    zin = (mz > z0) & (mz < z1)
    z_near = np.where(flat, np.where(zin, -np.inf, np.inf), np.minimum(ta, tb))
    z_far = np.where(flat, np.where(zin, np.inf, -np.inf), np.maximum(ta, tb))
    lo = np.maximum(np.maximum(t0, z_near), 0.0)
    hi = np.minimum(np.minimum(t1, z_far), 1.0)
    return hi - lo > _MIN_CHORD


def blocked(p, q, scene: Scene) -> np.ndarray:
    """Vectorised ``segment_blocked`` over broadcast stacks of endpoints."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p, q = np.broadcast_arrays(p, q)
    d = q - p
    hit = np.zeros(p.shape[:-1], dtype=bool)
    for w in scene.walls:
        hit |= _slab_hits(p, d, w.lo, w.hi)
    for cyl in scene.obstacles:
        hit |= _cylinder_hits(p, d, cyl)
    return hit


def segment_blocked(p, q, scene: Scene) -> bool:
    """True when the open segment p->q passes through a wall or obstacle interior."""
    return bool(blocked(p, q, scene))


# -- power -------------------------------------------------------------------

def _tile_power(positions, normals, area, scene: Scene, users, model: RadiationModel,
                src_clear=None):
    """Watts scattered by each tile to each user: shape ``(n_users, n_tiles)``."""
    users = np.atleast_2d(np.asarray(users, dtype=float))
    s = scene.ap_position
    inc = positions - s
    d1 = np.linalg.norm(inc, axis=-1)
    inc_u = inc / d1[:, None]
    cos_i = -np.sum(inc_u * normals, axis=-1)
    out_dir = reflect(inc_u, normals)
    to_user = users[:, None, :] - positions[None, :, :]
    d2 = np.linalg.norm(to_user, axis=-1)
    if np.any(d2 == 0.0):
        raise ValueError("user coincides with a tile centre")
    cos_a = np.sum(to_user * out_dir[None], axis=-1) / d2
    q = model.lobe_exponent
    lam = scene.wavelength
    incident = scene.tx_power_w / (4 * np.pi * d1**2) * area * np.maximum(cos_i, 0.0) \
        * model.tile_reflectivity
    lobe = (q + 1) / (2 * np.pi) * np.power(np.maximum(cos_a, 0.0), q)
    power = incident[None, :] * lobe / d2**2 * lam**2 / (4 * np.pi)
    ok = (cos_i > 0.0)[None, :] & (cos_a > 0.0)
    if src_clear is None:
        src_clear = ~blocked(s, positions, scene)
    ok &= src_clear[None, :]
    if np.any(ok):
        ok &= ~blocked(positions[None, :, :], users[:, None, :], scene)
    return np.where(ok, power, 0.0)


def tile_contribution(tile: TileGeom, scene: Scene, user, model: RadiationModel) -> float:
    p = _tile_power(tile.position[None, :], np.asarray(tile.normal, dtype=float)[None, :],
                    tile.area, scene, np.asarray(user, dtype=float)[None, :], model)
    return float(p[0, 0])


def direct_power(scene: Scene, users) -> np.ndarray:
    users = np.atleast_2d(np.asarray(users, dtype=float))
    d = np.linalg.norm(users - scene.ap_position, axis=-1)
    lam = scene.wavelength
    with np.errstate(divide="ignore"):
        p = scene.tx_power_w * (lam / (4 * np.pi * d)) ** 2
    return np.where(blocked(scene.ap_position, users, scene), 0.0, p)


def watts_to_dbm(w, floor_dbm: float):
    w = np.asarray(w, dtype=float)
    with np.errstate(divide="ignore"):
        dbm = 10.0 * np.log10(w / 1e-3)
    return np.maximum(dbm, floor_dbm)


class PowerModel:
    """Cached evaluator for one scene, layout and radiation model.

    The source-to-tile visibility never changes once the layout is fixed, so it
    is computed once; everything else is recomputed for the normals passed in.
    """

    def __init__(self, scene: Scene, layout: ArrayLayout | None, model: RadiationModel):
        self.scene = scene
        self.layout = layout
        self.model = model
        if layout is not None:
            self._positions = layout.positions
            self._area = layout.tile_area
            self._src_clear = ~blocked(scene.ap_position, layout.positions, scene)

    def watts(self, normals, users) -> np.ndarray:
        total = direct_power(self.scene, users)
        if normals is not None and self.layout is not None:
            total = total + _tile_power(self._positions, normals, self._area, self.scene,
                                        users, self.model, self._src_clear).sum(axis=1)
        return total

    def rssi(self, normals, users) -> np.ndarray:
        return watts_to_dbm(self.watts(normals, users), self.model.noise_floor_dbm)


def rssi(scene: Scene, tiles, user, model: RadiationModel) -> float:
    """RSSI in dBm at ``user`` from the direct path plus every tile in ``tiles``."""
    total = direct_power(scene, user)[0]
    if len(tiles):
        positions = np.stack([t.position for t in tiles])
        normals = np.stack([np.asarray(t.normal, dtype=float) for t in tiles])
        areas = np.array([t.area for t in tiles])
        p = _tile_power(positions, normals, areas, scene, user, model)
        total += p.sum()
    return float(watts_to_dbm(total, model.noise_floor_dbm))


def grid_points(grid, z: float):
    """Sample positions for ``grid = (x0, y0, x1, y1, resolution)``.

    ``resolution`` is an int or an ``(nx, ny)`` pair. Returns ``xs, ys, points``
    with ``points`` of shape ``(ny, nx, 3)``, row-major in y.
    """
    x0, y0, x1, y1, res = grid
    nx, ny = (res, res) if np.isscalar(res) else res
    if nx < 2 or ny < 2:
        raise ValueError("heatmap resolution must be at least 2 per axis")
    if not (x1 > x0 and y1 > y0):
        raise ValueError("heatmap rectangle is degenerate")
    xs = np.linspace(x0, x1, int(nx))
    ys = np.linspace(y0, y1, int(ny))
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X, Y, np.full_like(X, z)], axis=-1)
    return xs, ys, pts


def heatmap(scene: Scene, tiles, grid, model: RadiationModel, chunk: int = 2048) -> np.ndarray:
    """RSSI grid in dBm at ``scene.rx_height``; shape ``(ny, nx)``."""
    _, _, pts = grid_points(grid, scene.rx_height)
    flat = pts.reshape(-1, 3)
    out = np.empty(len(flat))
    if len(tiles):
        positions = np.stack([t.position for t in tiles])
        normals = np.stack([np.asarray(t.normal, dtype=float) for t in tiles])
        area = np.array([t.area for t in tiles])
        src_clear = ~blocked(scene.ap_position, positions, scene)
    for i in range(0, len(flat), chunk):
        users = flat[i:i + chunk]
        w = direct_power(scene, users)
        if len(tiles):
            w = w + _tile_power(positions, normals, area, scene, users, model, src_clear).sum(axis=1)
        out[i:i + chunk] = watts_to_dbm(w, model.noise_floor_dbm)
    return out.reshape(pts.shape[:2])


def tiles_with_normals(layout: ArrayLayout, normals) -> list[TileGeom]:
    return [TileGeom(t.position, n, t.row, t.col, t.area) for t, n in zip(layout.tiles, normals)]


def flat_configuration(layout: ArrayLayout) -> np.ndarray:
    return np.tile(layout.rest_normal, (layout.n_tiles, 1))
