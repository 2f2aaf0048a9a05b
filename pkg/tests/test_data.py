import copy
import math

import numpy as np
import pytest

from pfgn import data
from pfgn.data import FlowConfig, GeometrySpec
from pfgn.errors import ConfigError, DomainError, PersistenceError
from pfgn.rng import Stream

FLOW = FlowConfig()


def _circle(R=0.5, theta=0.0):
    return GeometrySpec("circle", R, R, theta)


def _body_point(geom, q):
    return geom.to_lab(np.atleast_2d(np.asarray(q, dtype=np.float64)))


# -------------------------------------------------------------- oracle


def test_stagnation_point():
    g = _circle()
    f = data.oracle_fields(g, FLOW, _body_point(g, [-0.5, 0.0]))[0]
    assert f[0] == pytest.approx(0.0, abs=1e-15) and f[1] == pytest.approx(0.0, abs=1e-15)
    assert f[2] == pytest.approx(FLOW.p0 + 0.5 * FLOW.rho * FLOW.u_inf ** 2)


def test_far_field():
    g = _circle()
    f = data.oracle_fields(g, FLOW, _body_point(g, [500.0, 0.0]))[0]
    assert f[0] == pytest.approx(1.0, rel=1e-5)
    assert abs(f[1]) < 1e-5 and abs(f[2] - FLOW.p0) < 1e-5


def test_top_of_circle():
    flow = FlowConfig(rho=1.3, u_inf=2.0, p0=0.4)
    g = _circle()
    f = data.oracle_fields(g, flow, _body_point(g, [0.0, 0.5]))[0]
    assert math.hypot(f[0], f[1]) == pytest.approx(2 * flow.u_inf)
    assert f[2] == pytest.approx(flow.p0 - 1.5 * flow.rho * flow.u_inf ** 2)


def test_no_flow_through_circle():
    g = _circle(0.7)
    pts = g.boundary(np.arange(64) / 64)
    f = data.oracle_fields(g, FLOW, pts)
    n = g.outward_normal(pts)
    assert np.abs((f[:, :2] * n).sum(axis=1)).max() < 1e-6 * FLOW.u_inf


def test_rotation_consistency():
    g = GeometrySpec("ellipse", 0.4, 0.9, 0.3)
    phi = 0.8
    g_rot = GeometrySpec("ellipse", 0.4, 0.9, 0.3 + phi)
    q = np.array([[1.5, 0.2], [-2.0, 1.0], [0.3, -1.7]])
    pts = g.to_lab(q)
    pts_rot = g_rot.to_lab(q)
    f = data.oracle_fields(g, FLOW, pts)
    fr = data.oracle_fields(g_rot, FLOW, pts_rot)
    c, s = math.cos(phi), math.sin(phi)
    rotated = np.column_stack([c * f[:, 0] - s * f[:, 1], s * f[:, 0] + c * f[:, 1]])
    assert np.allclose(fr[:, :2], rotated, rtol=1e-5, atol=1e-12)
    assert np.allclose(fr[:, 2], f[:, 2], rtol=1e-5)


def test_inside_point_rejected():
    g = _circle()
    with pytest.raises(DomainError):
        data.oracle_fields(g, FLOW, np.array([g.center]))


# -------------------------------------------------------------- geometry / sampling


@pytest.mark.parametrize("geom", [
    GeometrySpec("circle", 0.5, 0.5),
    GeometrySpec("ellipse", 0.5, 1.2, 0.7),
    GeometrySpec("superellipse", 0.5, 0.9, 1.1, order=4),
    GeometrySpec("polygon", 0.6, 0.6, 0.2, order=5),
])
def test_cloud_invariants(geom):
    cloud = data.sample_cloud(geom, 1024, 128, data.default_window(geom.center), Stream(3))
    assert cloud.coords.shape == (1024, 2)
    assert cloud.on_surface.sum() == 128
    assert not np.any(geom.inside(cloud.coords))
    surf = cloud.coords[cloud.surface_order]
    assert np.abs(geom.level(surf) - 1).max() < 1e-9 * geom.length or geom.family == "superellipse" \
        and np.abs(geom.level(surf) - 1).max() < 1e-9
    # counterclockwise: positive signed area (shoelace)
    x, y = surf[:, 0], surf[:, 1]
    assert 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) > 0
    again = data.sample_cloud(geom, 1024, 128, data.default_window(geom.center), Stream(3))
    assert np.array_equal(cloud.coords, again.coords)


def test_window_too_small():
    g = _circle()
    with pytest.raises(ConfigError):
        data.sample_cloud(g, 100, 10, (7.8, 8.2, 15.8, 16.2), Stream(0))


def test_geometry_validation():
    with pytest.raises(ConfigError):
        GeometrySpec("polygon", 1, 1, order=7)
    with pytest.raises(ConfigError):
        GeometrySpec("circle", 1, 2)
    with pytest.raises(ConfigError):
        GeometrySpec("ellipse", -1, 2)
    assert GeometrySpec("ellipse", 0.5, 2.0).reynolds(FLOW) == pytest.approx(40.0)


# -------------------------------------------------------------- normalization


def test_normalization_endpoints_and_roundtrip(rng):
    stats = data.NormStats([0.0, -2.0], [4.0, 2.0], [0.0, -1.0, -3.0], [2.0, 1.0, 1.0])
    c = stats.normalize_coords([[0.0, -2.0], [4.0, 2.0], [2.0, 0.0]])
    assert np.array_equal(c, [[-1, -1], [1, 1], [0, 0]])
    f = stats.normalize_fields([[0.0, -1.0, -3.0], [2.0, 1.0, 1.0]])
    assert np.array_equal(f, [[0, 0, 0], [1, 1, 1]])
    x = rng.uniform(-5, 5, (20, 2))
    assert np.allclose(stats.denormalize_coords(stats.normalize_coords(x)), x, rtol=1e-6)
    y = rng.uniform(-5, 5, (20, 3))
    assert np.allclose(stats.denormalize_fields(stats.normalize_fields(y)), y, rtol=1e-6)
    with pytest.raises(ConfigError):
        data.NormStats([0, 0], [1, 0], [0, 0, 0], [1, 1, 1])


# -------------------------------------------------------------- dataset


def test_split_sizes():
    assert data.split_sizes(100, (0.79, 0.11, 0.10)) == (79, 11, 10)
    assert data.split_sizes(200, (0.79, 0.11, 0.10)) == (158, 22, 20)
    assert data.split_sizes(7, (0.5, 0.25, 0.25)) == (4, 2, 1)
    with pytest.raises(ConfigError):
        data.split_sizes(10, (0.5, 0.5, 0.5))


def test_dataset_properties(small_dataset):
    ds = small_dataset
    ids = [set(ds.splits[k]) for k in data.SPLITS]
    assert sum(len(s) for s in ids) == 20 and len(set.union(*ids)) == 20
    for s in ds.split("train"):
        t = ds.targets(s)
        assert t.min() >= 0 and t.max() <= 1
        c = ds.inputs(s)
        assert c.min() >= -1 - 1e-6 and c.max() <= 1 + 1e-6
    assert {s.geometry.family for s in ds.samples} <= set(data.FAMILIES)


def test_dataset_determinism(small_dataset):
    again = data.build_dataset(20, seed=7, n_points=128, n_surface=32)
    assert again.checksum() == small_dataset.checksum()
    other = data.build_dataset(20, seed=8, n_points=128, n_surface=32)
    assert other.checksum() != small_dataset.checksum()


def test_stats_come_from_train_only(small_dataset):
    ds = copy.deepcopy(small_dataset)
    for name in ("val", "test"):
        for s in ds.split(name):
            s.fields *= 100.0
            s.coords += 50.0
    stats = ds.fit_stats()
    for k in ("coord_min", "coord_max", "field_min", "field_max"):
        assert np.array_equal(getattr(stats, k), getattr(small_dataset.stats, k))


def test_drop_points(small_dataset, rng):
    s = small_dataset.samples[0]
    cloud, fields = s.cloud, s.fields
    same, f0, keep0 = data.drop_points(cloud, fields, 0.0, Stream(1))
    assert np.array_equal(same.coords, cloud.coords) and np.array_equal(f0, fields)
    big = data.sample_cloud(s.geometry, 1024, 128, data.default_window(), Stream(2))
    bf = data.oracle_fields(s.geometry, FLOW, big.coords)
    for frac, n in ((0.05, 973), (0.10, 922), (0.15, 871)):
        red, rf, keep = data.drop_points(big, bf, frac, Stream(3))
        assert red.n_points == n == data.kept_count(1024, frac)
        assert np.array_equal(red.coords, big.coords[keep])
        assert np.array_equal(rf, bf[keep])
        assert len(np.unique(keep)) == n
    with pytest.raises(ConfigError):
        data.drop_points(cloud, fields, 1.0, Stream(0))


def test_persistence_roundtrip(small_dataset, tmp_path):
    data.save_dataset(small_dataset, tmp_path / "ds")
    back = data.load_dataset(tmp_path / "ds")
    assert back.checksum() == small_dataset.checksum()
    assert back.splits == small_dataset.splits
    assert np.array_equal(back.stats.field_max, small_dataset.stats.field_max)
    rec = tmp_path / "ds" / "geom_00003.bin"
    raw = bytearray(rec.read_bytes())
    raw[-200] ^= 0xFF
    rec.write_bytes(bytes(raw))
    with pytest.raises(PersistenceError):
        data.load_dataset(tmp_path / "ds")


def test_record_layout(small_dataset, tmp_path):
    data.save_dataset(small_dataset, tmp_path)
    s = small_dataset.samples[0]
    raw = (tmp_path / "geom_00000.bin").read_bytes()
    assert len(raw) == 4 + 1 + 6 * 8 + 128 * (8 + 12 + 1)
    assert int.from_bytes(raw[:4], "little") == 128
    coords = np.frombuffer(raw, "<f4", 256, 53).reshape(128, 2)
    assert np.array_equal(coords, s.coords)
