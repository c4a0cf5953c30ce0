import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reflectsim.geometry import AngleLimits, BasePlane, TileGeom, apply_focal_points, mirror_point, hex_layout
from reflectsim.propagation import (
    Box, Cylinder, Material, PowerModel, RadiationModel, Scene, Wall, empty_scene,
    flat_configuration, grid_points, heatmap, rssi, segment_blocked, tile_contribution,
    tiles_with_normals,
)

CONCRETE = Material("concrete", 0.3)
MODEL = RadiationModel()


def slab_scene(**kw):
    wall = Wall((-0.1, -1.0, -1.0), (0.1, 1.0, 1.0), CONCRETE)
    pillar = Cylinder((3.0, 0.0, 0.0), 0.5, 2.0, CONCRETE)
    base = empty_scene(**kw)
    return Scene((wall,), (pillar,), base.ap_position, base.frequency, base.tx_power_mw,
                 base.rx_height, base.focal_region, base.bounds)


# -- occlusion -----------------------------------------------------------

def test_empty_scene_never_blocks():
    assert not segment_blocked([0, 0, 0], [5, 5, 5], empty_scene())


def test_slab_through_midpoint_blocks():
    sc = slab_scene()
    assert segment_blocked([-1, 0, 0], [1, 0, 0], sc)
    assert not segment_blocked([-1, 2, 0], [1, 2, 0], sc)
    # endpoint touching the face only: open segment does not enter the interior
    assert not segment_blocked([-1, 0, 0], [-0.1, 0, 0], sc)


def test_cylinder_tangent_is_not_blocked():
    sc = slab_scene()
    assert not segment_blocked([2.0, 0.5, 1.0], [4.0, 0.5, 1.0], sc)
    assert segment_blocked([2.0, 0.49, 1.0], [4.0, 0.49, 1.0], sc)
    # passes over the top
    assert not segment_blocked([2.0, 0.0, 2.5], [4.0, 0.0, 2.5], sc)
    # vertical segment inside the footprint
    assert segment_blocked([3.0, 0.1, 2.5], [3.0, 0.1, 1.0], sc)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_blocking_is_symmetric(c):
    p, q = np.array(c[:3]), np.array(c[3:])
    if np.allclose(p, q):
        return
    sc = slab_scene()
    assert segment_blocked(p, q, sc) == segment_blocked(q, p, sc)


# -- tile contribution ---------------------------------------------------

def wall_tile(normal=(-1.0, 0.0, 0.0)):
    return TileGeom(np.array([5.0, 0.0, 0.0]), np.array(normal), 0, 0, np.sqrt(3) / 2 * 0.05**2)


def test_blocked_source_gives_zero():
    sc = slab_scene(ap=(-1.0, 0.0, 0.0))
    assert tile_contribution(wall_tile(), sc, [4.0, 0.2, 0.0], MODEL) == 0.0


def test_source_behind_tile_gives_zero():
    sc = empty_scene(ap=(0.0, 0.0, 0.0))
    assert tile_contribution(wall_tile(normal=(1.0, 0.0, 0.0)), sc, [4.0, 1.0, 0.0], MODEL) == 0.0


def test_user_on_tile_rejected():
    with pytest.raises(ValueError):
        tile_contribution(wall_tile(), empty_scene(), [5.0, 0.0, 0.0], MODEL)


def test_doubling_distance_quarters_power():
    sc = empty_scene(ap=(0.0, 1.0, 0.0))
    tile = wall_tile()
    d = np.array([-1.0, 0.3, 0.2])
    near = tile_contribution(tile, sc, tile.position + d, MODEL)
    far = tile_contribution(tile, sc, tile.position + 2 * d, MODEL)
    assert near > 0
    assert far == pytest.approx(near / 4, rel=1e-12)


def test_tile_power_never_exceeds_transmit_power():
    rng = np.random.default_rng(5)
    sc = empty_scene(ap=(0.0, 0.0, 0.0))
    for _ in range(200):
        pos = rng.uniform(0.05, 0.5, 3)
        n = -pos / np.linalg.norm(pos)
        tile = TileGeom(pos, n, 0, 0, 0.01)
        user = pos + rng.normal(size=3) * 0.05
        assert tile_contribution(tile, sc, user, RadiationModel(lobe_exponent=rng.uniform(1, 500))) <= sc.tx_power_w


# -- rssi ----------------------------------------------------------------

def test_no_tiles_blocked_is_noise_floor():
    sc = slab_scene(ap=(-1.0, 0.0, 0.0))
    assert rssi(sc, [], [1.0, 0.0, 0.0], MODEL) == MODEL.noise_floor_dbm


def test_friis_direct_path():
    # 5 mW at 60 GHz over 10 m: 10 log10(5) - 20 log10(4 pi d / lambda)
    sc = empty_scene(ap=(0.0, 0.0, 0.0))
    lam = 299_792_458.0 / 60e9
    want = 10 * np.log10(5.0) - 20 * np.log10(4 * np.pi * 10.0 / lam)
    got = rssi(sc, [], [10.0, 0.0, 0.0], MODEL)
    assert got == pytest.approx(want, abs=1e-12)
    assert got == pytest.approx(-81.0, abs=0.05)


def test_adding_tile_increases_rssi():
    # the screen hides the user from the AP but not from the tile
    screen = Wall((3.4, -0.5, -1.0), (3.6, 0.1, 1.0), CONCRETE)
    base = empty_scene(ap=(0.0, 1.0, 0.0))
    sc = Scene((screen,), (), base.ap_position, base.frequency, base.tx_power_mw,
               base.rx_height, base.focal_region, base.bounds)
    user = [4.0, -0.2, 0.0]
    base = rssi(sc, [], user, MODEL)
    assert tile_contribution(wall_tile(), sc, user, MODEL) > 0
    assert rssi(sc, [wall_tile()], user, MODEL) > base


def test_incoherent_additivity():
    sc = empty_scene(ap=(0.0, 2.0, 0.0))
    plane = BasePlane(np.array([5.0, 0.0, 0.0]), u=[0, 0, 1], v=[0, 1, 0], normal=[-1, 0, 0])
    lay = hex_layout(2, 4, 0.05, plane, segments=2)
    normals = apply_focal_points(lay, np.array([[2.0, 1.0, 0.1], [2.0, -1.0, 0.0]]), sc.ap_position,
                                 AngleLimits())
    tiles = tiles_with_normals(lay, normals)
    user = np.array([2.0, 0.5, 0.0])
    m = RadiationModel(lobe_exponent=5.0)
    watts = lambda ts: sum(tile_contribution(t, sc, user, m) for t in ts)
    direct = 10 ** (rssi(sc, [], user, m) / 10) * 1e-3
    w1, w2 = watts(tiles[:3]), watts(tiles[3:])
    want = 10 * np.log10((direct + w1 + w2) / 1e-3)
    assert rssi(sc, tiles, user, m) == pytest.approx(want, abs=1e-10)


# -- heatmap -------------------------------------------------------------

def test_grid_corners():
    xs, ys, pts = grid_points((0.0, 1.0, 2.0, 3.0, 2), 1.5)
    assert pts.shape == (2, 2, 3)
    np.testing.assert_array_equal(pts[0, 0], [0.0, 1.0, 1.5])
    np.testing.assert_array_equal(pts[1, 1], [2.0, 3.0, 1.5])
    np.testing.assert_array_equal(pts[0, 1], [2.0, 1.0, 1.5])


def test_heatmap_shape_and_errors():
    sc = empty_scene()
    assert heatmap(sc, [], (1.0, 1.0, 2.0, 2.0, (3, 4)), MODEL).shape == (4, 3)
    with pytest.raises(ValueError):
        heatmap(sc, [], (1.0, 1.0, 1.0, 2.0, 4), MODEL)
    with pytest.raises(ValueError):
        heatmap(sc, [], (1.0, 1.0, 2.0, 2.0, 1), MODEL)


def test_heatmap_all_blocked_is_floor():
    tall = Wall((-0.1, -1.0, -1.0), (0.1, 1.0, 3.0), CONCRETE)
    base = empty_scene(ap=(-1.0, 0.0, 1.0))
    sc = Scene((tall,), (), base.ap_position, base.frequency, base.tx_power_mw,
               base.rx_height, base.focal_region, base.bounds)
    grid = heatmap(sc, [], (0.5, -0.5, 1.5, 0.5, 5), MODEL)
    assert np.all(grid == MODEL.noise_floor_dbm)


def test_flat_configuration_equals_mirror_focus():
    plane = BasePlane(np.array([5.0, 0.0, 0.0]), u=[0, 0, 1], v=[0, 1, 0], normal=[-1, 0, 0])
    flat = flat_configuration(hex_layout(6, 12, 0.05, plane, segments=3))
    assert flat.shape == (72, 3)
    np.testing.assert_array_equal(flat, np.tile([-1.0, 0.0, 0.0], (72, 1)))
    # single-tile segments aimed along the rays leaving the source's image
    lay = hex_layout(1, 3, 0.05, plane, segments=3)
    s = np.array([1.0, 2.0, 0.5])
    focal = 2 * lay.positions - mirror_point(s, plane)
    np.testing.assert_allclose(apply_focal_points(lay, focal, s, AngleLimits()),
                               flat_configuration(lay), atol=1e-12)


def test_power_model_matches_rssi():
    plane = BasePlane(np.array([5.0, 0.0, 0.0]), u=[0, 0, 1], v=[0, 1, 0], normal=[-1, 0, 0])
    lay = hex_layout(3, 3, 0.05, plane, segments=1)
    sc = empty_scene(ap=(1.0, 1.0, 0.0))
    normals = apply_focal_points(lay, np.array([[2.0, -1.0, 0.2]]), sc.ap_position, AngleLimits())
    users = np.array([[2.0, -1.0, 0.2], [3.0, 1.0, 0.0]])
    got = PowerModel(sc, lay, MODEL).rssi(normals, users)
    tiles = tiles_with_normals(lay, normals)
    want = [rssi(sc, tiles, u, MODEL) for u in users]
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-10)


def test_box_helpers():
    b = Box((0, 0, 1), (2, 4, 1))
    np.testing.assert_allclose(b.normalize([1, 4, 1]), [0, 1, 0])
    np.testing.assert_allclose(b.clip([3, -1, 0]), [2, 0, 1])
    with pytest.raises(ValueError):
        Box((1, 0, 0), (0, 1, 1))


def test_focused_heatmap_peaks_beside_each_user():
    from reflectsim.config import load_config
    cfg = load_config()
    sc, lay = cfg.scene, cfg.layout()
    normals = apply_focal_points(lay, sc.users, sc.ap_position, cfg.limits)
    c = lay.positions.mean(axis=0)
    for u in sc.users:
        # scan an arc at the user's range; path loss hides the peak along the radial direction
        r = np.hypot(*(u - c)[:2])
        a = np.arctan2(u[1] - c[1], u[0] - c[0]) + np.linspace(-0.3, 0.3, 301)
        grid = np.stack([c[0] + r * np.cos(a), c[1] + r * np.sin(a), np.full_like(a, u[2])], axis=-1)
        p = PowerModel(sc, lay, cfg.radiation).rssi(normals, grid)
        assert np.linalg.norm(grid[np.argmax(p)] - u) < 0.6
        assert p.max() - min(p[0], p[-1]) > 5.0
