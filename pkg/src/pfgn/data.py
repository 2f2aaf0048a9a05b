"""Synthetic geometry/flow data.

Bodies are 2-D cylinder cross-sections (circle, ellipse, superellipse,
regular polygon). Fields come from ideal flow past a circle, evaluated in a
body-aligned frame after anisotropic scaling, so every shape gets a smooth,
deterministic velocity/pressure field. This is a stand-in for a CFD solver:
it has no wake and no viscosity.
"""

import hashlib
import json
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, PersistenceError
from .rng import ALGORITHM, Stream, derive_seed

FAMILIES = ("circle", "ellipse", "superellipse", "polygon")
FAMILY_CODES = {name: i for i, name in enumerate(FAMILIES)}
SPLITS = ("train", "val", "test")
INSIDE_TOL = 1e-9


@dataclass(frozen=True)
class FlowConfig:
    rho: float = 1.0
    mu: float = 0.05
    u_inf: float = 1.0
    p0: float = 0.0

    def __post_init__(self):
        if not (self.rho > 0 and self.mu > 0 and self.u_inf > 0):
            raise ConfigError(f"rho, mu and u_inf must be positive: {self}")


@dataclass(frozen=True)
class GeometrySpec:
    """A body cross-section.

    ``a`` and ``b`` are the half-lengths along the body x and y axes (the
    circumradius for polygons, where ``b`` must equal ``a``). ``order`` is the
    side count k for polygons and the exponent m for superellipses.
    """

    family: str
    a: float
    b: float
    theta: float = 0.0
    center: tuple = (8.0, 16.0)
    order: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        if not (self.a > 0 and self.b > 0):
            raise ConfigError("a and b must be positive")
        if self.family == "circle" and self.a != self.b:
            raise ConfigError("circle needs a == b")
        if self.family == "polygon" and (self.order not in (3, 4, 5, 6) or self.a != self.b):
            raise ConfigError("polygon needs order in {3,4,5,6} and a == b")
        if self.family == "superellipse" and self.order < 2:
            raise ConfigError("superellipse exponent must be >= 2")

    @property
    def length(self):
        return max(self.a, self.b)

    @property
    def radius(self):
        """Radius of the equivalent circle used by the field oracle."""
        return math.sqrt(self.a * self.b)

    @property
    def bounding_radius(self):
        if self.family == "superellipse":
            return math.hypot(self.a, self.b)
        return max(self.a, self.b)

    def reynolds(self, flow):
        return flow.rho * self.length * flow.u_inf / flow.mu

    def params(self):
        return (self.a, self.b, self.theta, self.center[0], self.center[1], float(self.order))

    # -- frames

    def to_body(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        c, s = math.cos(self.theta), math.sin(self.theta)
        d = pts - np.asarray(self.center)
        return np.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]], axis=1)

    def to_lab(self, q):
        c, s = math.cos(self.theta), math.sin(self.theta)
        x = c * q[:, 0] - s * q[:, 1] + self.center[0]
        y = s * q[:, 0] + c * q[:, 1] + self.center[1]
        return np.stack([x, y], axis=1)

    def _rotate(self, vec):
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.stack([c * vec[:, 0] - s * vec[:, 1], s * vec[:, 0] + c * vec[:, 1]], axis=1)

    # -- shape

    def _polygon_normals(self):
        k = self.order
        ang = (2 * np.arange(k) + 1) * np.pi / k
        return np.stack([np.cos(ang), np.sin(ang)], axis=1), self.a * math.cos(math.pi / k)

    def level(self, pts):
        """Implicit shape function: < 1 inside, 1 on the boundary, > 1 outside."""
        q = self.to_body(pts)
        x, y = q[:, 0], q[:, 1]
        if self.family in ("circle", "ellipse"):
            return (x / self.a) ** 2 + (y / self.b) ** 2
        if self.family == "superellipse":
            m = self.order
            return np.abs(x / self.a) ** m + np.abs(y / self.b) ** m
        normals, apothem = self._polygon_normals()
        return (q @ normals.T).max(axis=1) / apothem

    def inside(self, pts):
        """True for points strictly inside the body."""
        return self.level(pts) < 1.0 - INSIDE_TOL

    def boundary(self, s):
        """Boundary points at parameters ``s`` in [0, 1), counterclockwise."""
        s = np.asarray(s, dtype=np.float64)
        t = 2 * np.pi * s
        if self.family in ("circle", "ellipse"):
            q = np.stack([self.a * np.cos(t), self.b * np.sin(t)], axis=1)
        elif self.family == "superellipse":
            e = 2.0 / self.order
            c, sn = np.cos(t), np.sin(t)
            q = np.stack([self.a * np.sign(c) * np.abs(c) ** e,
                          self.b * np.sign(sn) * np.abs(sn) ** e], axis=1)
        else:
            k = self.order
            pos = s * k
            j = np.floor(pos).astype(int) % k
            f = (pos - np.floor(pos))[:, None]
            ang0 = 2 * np.pi * j / k
            ang1 = 2 * np.pi * (j + 1) / k
            v0 = self.a * np.stack([np.cos(ang0), np.sin(ang0)], axis=1)
            v1 = self.a * np.stack([np.cos(ang1), np.sin(ang1)], axis=1)
            q = v0 + f * (v1 - v0)
        return self.to_lab(q)

    def outward_normal(self, pts):
        """Analytic outward unit normal at boundary points (lab frame)."""
        q = self.to_body(pts)
        x, y = q[:, 0], q[:, 1]
        if self.family in ("circle", "ellipse"):
            n = np.stack([x / self.a ** 2, y / self.b ** 2], axis=1)
        elif self.family == "superellipse":
            m = self.order
            n = np.stack([np.sign(x) * np.abs(x / self.a) ** (m - 1) / self.a,
                          np.sign(y) * np.abs(y / self.b) ** (m - 1) / self.b], axis=1)
        else:
            normals, _ = self._polygon_normals()
            n = normals[np.argmax(q @ normals.T, axis=1)]
        n = n / np.linalg.norm(n, axis=1, keepdims=True)
        return self._rotate(n)


@dataclass
class PointCloud:
    """Points around one body. Surface points come first, in counterclockwise order."""

    coords: np.ndarray
    on_surface: np.ndarray
    geometry: GeometrySpec

    @property
    def n_points(self):
        return len(self.coords)

    @property
    def surface_order(self):
        return np.flatnonzero(self.on_surface)


def oracle_fields(geom, flow, coords):
    """Physical (u, v, p) at ``coords`` for body ``geom``; array [N, 3] (float64)."""
    coords = np.asarray(coords, dtype=np.float64)
    if np.any(geom.inside(coords)):
        raise DomainError("oracle_fields: point inside the body")
    U, R = flow.u_inf, geom.radius
    q = geom.to_body(coords)
    xi = q[:, 0] * (R / geom.a)
    eta = q[:, 1] * (R / geom.b)
    r2 = xi * xi + eta * eta
    # clamp to the equivalent circle so the 1/r^4 terms stay bounded
    scale = np.where(r2 < R * R, R / np.sqrt(np.maximum(r2, 1e-300)), 1.0)
    xi, eta = xi * scale, eta * scale
    r2 = xi * xi + eta * eta
    r4 = r2 * r2
    ub = U * (1.0 + R * R * (eta * eta - xi * xi) / r4)
    vb = -2.0 * U * R * R * xi * eta / r4
    p = flow.p0 + 0.5 * flow.rho * (U * U - (ub * ub + vb * vb))
    vel = geom._rotate(np.stack([ub, vb], axis=1))
    return np.column_stack([vel, p])


def default_window(center=(8.0, 16.0)):
    cx, cy = center
    return (cx - 6.0, cx + 10.0, cy - 6.0, cy + 6.0)


def sample_cloud(geom, n_points, n_surface, window, rng, batch=4096):
    """Surface points equispaced in the boundary parameter plus volume points.

    Volume points are rejection-sampled in ``window`` = (xmin, xmax, ymin, ymax)
    with density proportional to 1/max(r, R)^2, r measured from the body center.
    """
    if not 3 <= n_surface < n_points:
        raise ConfigError(f"need 3 <= n_surface < n_points, got {n_surface}, {n_points}")
    xmin, xmax, ymin, ymax = window
    cx, cy = geom.center
    br = geom.bounding_radius
    if not (xmin < cx - br and cx + br < xmax and ymin < cy - br and cy + br < ymax):
        raise ConfigError(f"window {window} does not contain the body")

    surface = geom.boundary(np.arange(n_surface) / n_surface)
    R = geom.radius
    need = n_points - n_surface
    chunks = []
    while need > 0:
        pts = np.column_stack([rng.uniform(batch, xmin, xmax), rng.uniform(batch, ymin, ymax)])
        acc = rng.uniform(batch)
        r = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
        keep = (acc < (R / np.maximum(r, R)) ** 2) & ~geom.inside(pts)
        pts = pts[keep][:need]
        chunks.append(pts)
        need -= len(pts)
    coords = np.concatenate([surface] + chunks)
    flags = np.zeros(n_points, dtype=bool)
    flags[:n_surface] = True
    return PointCloud(coords, flags, geom)


# ------------------------------------------------------------- normalization


def to_dimensionless(fields, flow):
    f = np.array(fields, dtype=np.float64)
    f[:, :2] /= flow.u_inf
    f[:, 2] = (f[:, 2] - flow.p0) / (flow.rho * flow.u_inf ** 2)
    return f


def to_physical(fields, flow):
    f = np.array(fields, dtype=np.float64)
    f[..., :2] *= flow.u_inf
    f[..., 2] = f[..., 2] * flow.rho * flow.u_inf ** 2 + flow.p0
    return f


@dataclass
class NormStats:
    """Min/max of the coordinates and of the dimensionless fields over the training split."""

    coord_min: np.ndarray
    coord_max: np.ndarray
    field_min: np.ndarray
    field_max: np.ndarray

    def __post_init__(self):
        for k in ("coord_min", "coord_max", "field_min", "field_max"):
            setattr(self, k, np.asarray(getattr(self, k), dtype=np.float64))
        if np.any(self.coord_max <= self.coord_min) or np.any(self.field_max <= self.field_min):
            raise ConfigError("degenerate normalization statistics")

    @classmethod
    def from_arrays(cls, coords, fields):
        coords = np.concatenate([np.asarray(c, dtype=np.float64) for c in coords])
        fields = np.concatenate([np.asarray(f, dtype=np.float64) for f in fields])
        return cls(coords.min(0), coords.max(0), fields.min(0), fields.max(0))

    def normalize_coords(self, x):
        return 2.0 * (np.asarray(x, dtype=np.float64) - self.coord_min) / (self.coord_max - self.coord_min) - 1.0

    def denormalize_coords(self, x):
        return (np.asarray(x, dtype=np.float64) + 1.0) / 2.0 * (self.coord_max - self.coord_min) + self.coord_min

    def normalize_fields(self, f):
        return (np.asarray(f, dtype=np.float64) - self.field_min) / (self.field_max - self.field_min)

    def denormalize_fields(self, f):
        return np.asarray(f, dtype=np.float64) * (self.field_max - self.field_min) + self.field_min

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("coord_min", "coord_max", "field_min", "field_max")}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# ------------------------------------------------------------------ dataset


@dataclass
class Sample:
    gid: int
    geometry: GeometrySpec
    coords: np.ndarray      # float32 [N, 2], surface points first
    fields: np.ndarray      # float32 [N, 3], physical (u, v, p)
    on_surface: np.ndarray  # bool [N]

    @property
    def cloud(self):
        return PointCloud(self.coords.astype(np.float64), self.on_surface, self.geometry)


@dataclass
class Dataset:
    samples: list
    splits: dict
    stats: NormStats
    flow: FlowConfig = field(default_factory=FlowConfig)
    seed: int = 0
    knobs: dict = field(default_factory=dict)

    def split(self, name):
        by_id = {s.gid: s for s in self.samples}
        return [by_id[g] for g in self.splits[name]]

    def inputs(self, sample):
        """Normalized coordinates, float32 [N, 2]."""
        return self.stats.normalize_coords(sample.coords).astype(np.float32)

    def targets(self, sample):
        """Normalized fields in [0, 1] on the training split, float32 [N, 3]."""
        return self.stats.normalize_fields(to_dimensionless(sample.fields, self.flow)).astype(np.float32)

    def to_physical(self, normalized):
        return to_physical(self.stats.denormalize_fields(normalized), self.flow)

    def fit_stats(self):
        """Normalization statistics from the training split alone."""
        train = self.split("train")
        return NormStats.from_arrays([s.coords for s in train],
                                     [to_dimensionless(s.fields, self.flow) for s in train])

    def checksum(self):
        h = hashlib.sha256()
        for s in self.samples:
            h.update(np.int64(s.gid).tobytes())
            h.update(np.asarray(s.geometry.params()).tobytes())
            h.update(s.coords.tobytes())
            h.update(s.fields.tobytes())
            h.update(s.on_surface.tobytes())
        h.update(json.dumps(self.splits, sort_keys=True).encode())
        return h.hexdigest()


def split_sizes(n, fractions):
    """Floor each share, then hand out the remainder one at a time, train first."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ConfigError(f"split fractions must be three non-negative numbers summing to 1: {fractions}")
    sizes = [int(math.floor(f * n + 1e-9)) for f in fractions]
    i = 0
    while sum(sizes) < n:
        sizes[i % 3] += 1
        i += 1
    return tuple(sizes)


def random_geometry(rng, families=FAMILIES, base_size=0.5, aspect=(1.2, 3.8),
                    center=(8.0, 16.0), superellipse_m=4):
    family = families[int(rng.integers(0, len(families) - 1))]
    a = base_size
    if family == "circle":
        return GeometrySpec("circle", a, a, 0.0, center)
    if family == "polygon":
        k = int(rng.integers(3, 6))
        return GeometrySpec("polygon", a, a, float(rng.uniform(None, 0.0, 2 * np.pi / k)), center, k)
    b = a * float(rng.uniform(None, *aspect))
    theta = float(rng.uniform(None, 0.0, np.pi))
    order = superellipse_m if family == "superellipse" else 0
    return GeometrySpec(family, a, b, theta, center, order)


def _make_sample(gid, seed, n_points, n_surface, flow, window, shape_knobs):
    rng = Stream(derive_seed(seed, gid))
    geom = random_geometry(rng, **shape_knobs)
    win = window or default_window(geom.center)
    cloud = sample_cloud(geom, n_points, n_surface, win, rng)
    coords = cloud.coords.astype(np.float32)
    fields = oracle_fields(geom, flow, cloud.coords).astype(np.float32)
    return Sample(gid, geom, coords, fields, cloud.on_surface.copy())


def build_dataset(n_geoms, split=(0.79, 0.11, 0.10), seed=0, n_points=1024, n_surface=128,
                  flow=None, window=None, **shape_knobs):
    """Draw ``n_geoms`` bodies, sample clouds, evaluate fields, split, and fit NormStats on train."""
    flow = flow or FlowConfig()
    sizes = split_sizes(n_geoms, split)
    samples = [_make_sample(g, seed, n_points, n_surface, flow, window, shape_knobs)
               for g in range(n_geoms)]
    order = Stream(derive_seed(seed, "split")).permutation(n_geoms)
    bounds = np.cumsum((0,) + sizes)
    splits = {name: sorted(int(g) for g in order[bounds[i]:bounds[i + 1]])
              for i, name in enumerate(SPLITS)}
    knobs = dict(n_geoms=n_geoms, split=list(split), n_points=n_points, n_surface=n_surface,
                 window=list(window) if window else None, **shape_knobs)
    ds = Dataset(samples, splits, None, flow, seed, knobs)
    ds.stats = ds.fit_stats()
    return ds


def kept_count(n, fraction):
    return int(math.ceil((1.0 - fraction) * n - 1e-9))


def drop_points(cloud, fields, fraction, rng):
    """Remove a uniformly random ``fraction`` of points (surface points included).

    Kept points stay in their original order, so surface ordering survives.
    Returns the reduced cloud, the matching field rows and the kept indices.
    """
    if not 0.0 <= fraction < 1.0:
        raise ConfigError(f"drop fraction must be in [0, 1), got {fraction}")
    n = cloud.n_points
    keep = np.sort(rng.permutation(n)[:kept_count(n, fraction)])
    reduced = PointCloud(cloud.coords[keep], cloud.on_surface[keep], cloud.geometry)
    return reduced, np.asarray(fields)[keep], keep


# -------------------------------------------------------------- persistence

_HEADER = struct.Struct("<IB6d")


def _record_bytes(s):
    n = len(s.coords)
    return b"".join([
        _HEADER.pack(n, FAMILY_CODES[s.geometry.family], *s.geometry.params()),
        s.coords.astype("<f4").tobytes(),
        s.fields.astype("<f4").tobytes(),
        s.on_surface.astype(np.uint8).tobytes(),
    ])


def _read_record(gid, raw):
    if len(raw) < _HEADER.size:
        raise PersistenceError(f"record {gid} truncated")
    n, code, a, b, theta, cx, cy, order = _HEADER.unpack_from(raw)
    expected = _HEADER.size + n * (8 + 12 + 1)
    if len(raw) != expected:
        raise PersistenceError(f"record {gid}: expected {expected} bytes, got {len(raw)}")
    off = _HEADER.size
    coords = np.frombuffer(raw, "<f4", 2 * n, off).reshape(n, 2).astype(np.float32)
    off += 8 * n
    fields = np.frombuffer(raw, "<f4", 3 * n, off).reshape(n, 3).astype(np.float32)
    off += 12 * n
    flags = np.frombuffer(raw, np.uint8, n, off).astype(bool)
    geom = GeometrySpec(FAMILIES[code], a, b, theta, (cx, cy), int(order))
    return Sample(gid, geom, coords, fields, flags)


def save_dataset(ds, directory):
    os.makedirs(directory, exist_ok=True)
    records = {}
    for s in ds.samples:
        name = f"geom_{s.gid:05d}.bin"
        with open(os.path.join(directory, name), "wb") as fh:
            fh.write(_record_bytes(s))
        records[str(s.gid)] = name
    manifest = {
        "seed": ds.seed,
        "rng": ALGORITHM,
        "knobs": ds.knobs,
        "flow": vars(ds.flow),
        "norm_stats": ds.stats.to_dict(),
        "splits": ds.splits,
        "records": records,
        "checksum": ds.checksum(),
    }
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    return os.path.join(directory, "manifest.json")


def load_dataset(directory):
    path = os.path.join(directory, "manifest.json")
    try:
        with open(path) as fh:
            manifest = json.load(fh)
        samples = []
        for gid, name in sorted(manifest["records"].items(), key=lambda kv: int(kv[0])):
            with open(os.path.join(directory, name), "rb") as fh:
                samples.append(_read_record(int(gid), fh.read()))
    except (OSError, KeyError, ValueError) as exc:
        raise PersistenceError(f"cannot load dataset from {directory}: {exc}") from exc
    ds = Dataset(samples, {k: list(v) for k, v in manifest["splits"].items()},
                 NormStats.from_dict(manifest["norm_stats"]), FlowConfig(**manifest["flow"]),
                 manifest["seed"], manifest["knobs"])
    if manifest.get("checksum") and ds.checksum() != manifest["checksum"]:
        raise PersistenceError(f"dataset checksum mismatch in {directory}")
    return ds
