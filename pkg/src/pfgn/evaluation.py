"""Error metrics, pressure forces, robustness runs and CSV exports.

All errors are computed in physical units after denormalization.
"""

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import drop_points, oracle_fields
from .errors import ConfigError, MetricError, PersistenceError
from .rng import Stream, derive_seed

FIELDS = ("u", "v", "p")
HISTOGRAM_HEADER = ["geometry_id", "err_u", "err_v", "err_p"]


def relative_l2(pred, truth):
    """||pred - truth|| / ||truth||."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    denom = np.sqrt(np.sum(truth * truth))
    if denom == 0:
        raise MetricError("relative L2 error undefined for a zero truth vector")
    diff = pred - truth
    return float(np.sqrt(np.sum(diff * diff)) / denom)


def closed_curve_forces(points, p):
    """Force -sum p_i n_i ds_i on a closed counterclockwise polygon.

    The area vector at point i is half the outward-rotated chord between its
    neighbours, i.e. the length-weighted average of the two adjacent segment
    normals. These vectors sum to zero exactly over a closed curve, so a
    uniform pressure gives no net force.
    """
    points = np.asarray(points, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if len(points) < 3:
        raise ConfigError("pressure_forces needs at least 3 surface points")
    chord = np.roll(points, -1, axis=0) - np.roll(points, 1, axis=0)
    area = 0.5 * np.column_stack([chord[:, 1], -chord[:, 0]])
    force = -(p[:, None] * area).sum(axis=0)
    return float(force[0]), float(force[1])


def pressure_forces(cloud, p_surface):
    """(drag, lift) from pressures at the cloud's surface points, in surface order."""
    order = cloud.surface_order
    p_surface = np.asarray(p_surface)
    if len(p_surface) != len(order):
        raise ConfigError(f"{len(p_surface)} pressures for {len(order)} surface points")
    return closed_curve_forces(cloud.coords[order], p_surface)


def surface_profile(cloud, fields):
    """Rows (angle_deg, u, v, p) of the surface points sorted by angle.

    The angle is measured counterclockwise from +x around the body center and
    lies in [0, 360).
    """
    order = cloud.surface_order
    if len(order) == 0:
        raise ConfigError("cloud has no surface points")
    pts = cloud.coords[order]
    cx, cy = cloud.geometry.center
    ang = np.degrees(np.arctan2(pts[:, 1] - cy, pts[:, 0] - cx)) % 360.0
    rows = np.column_stack([ang, np.asarray(fields, dtype=np.float64)[order]])
    return rows[np.argsort(ang, kind="stable")]


# ------------------------------------------------------------------ reports


@dataclass
class ForceReport:
    """Absolute drag/lift errors, per geometry mean and std over samples."""

    geometry_ids: list
    true_forces: np.ndarray   # [G, 2] (drag, lift)
    pred_mean: np.ndarray     # [G, 2] mean predicted force over samples
    err_mean: np.ndarray      # [G, 2] mean absolute error over samples
    err_std: np.ndarray       # [G, 2]
    sample_errors: list       # per geometry [S, 2]

    def aggregate(self):
        return _aggregate(self.err_mean, self.sample_errors, ("drag", "lift"))


@dataclass
class MetricsReport:
    """Relative L2 errors for u, v, p.

    ``mean``/``std`` are per geometry over the S samples (std is 0 for a
    deterministic model). ``sample_errors[g]`` holds the raw [S, 3] errors.
    """

    geometry_ids: list
    mean: np.ndarray
    std: np.ndarray
    n_samples: int
    sample_errors: list
    forces: ForceReport = None

    def aggregate(self):
        return _aggregate(self.mean, self.sample_errors, FIELDS)

    def rows(self):
        """Flat (quantity, statistic, value, std) rows (average, maximum, minimum per quantity)."""
        out = []
        for report in (self, self.forces):
            if report is None:
                continue
            for name, stats in report.aggregate().items():
                for stat in ("average", "maximum", "minimum"):
                    out.append((name, stat, stats[stat][0], stats[stat][1]))
        return out


def _aggregate(per_geom_mean, sample_errors, names):
    """Average/maximum/minimum over geometries of the per-geometry mean error.

    The std attached to max/min is the sample std of that extreme geometry.
    The std attached to the average is the std over sample index of the
    geometry-averaged error (requires equal sample counts, which holds here).
    """
    out = {}
    stacked = np.stack(sample_errors)  # [G, S, k]
    for j, name in enumerate(names):
        col = per_geom_mean[:, j]
        imax, imin = int(np.argmax(col)), int(np.argmin(col))
        avg_per_sample = stacked[:, :, j].mean(axis=0)
        out[name] = {
            "average": (float(col.mean()), float(avg_per_sample.std())),
            "maximum": (float(col[imax]), float(stacked[imax, :, j].std())),
            "minimum": (float(col[imin]), float(stacked[imin, :, j].std())),
        }
    return out


@dataclass
class GeometryResult:
    gid: int
    errors: np.ndarray        # [S, 3]
    forces: np.ndarray        # [S, 2]
    true_forces: np.ndarray   # [2]
    prediction: np.ndarray    # [S, N, 3] physical


def _worker_count(workers):
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get("PFGN_THREADS", "1")))


def evaluate_cloud(model, dataset, cloud, truth, n_samples, rng, gid=-1):
    """Generate fields for one cloud and score them against ``truth`` (physical)."""
    x = dataset.stats.normalize_coords(cloud.coords).astype(np.float32)
    S = n_samples if model.stochastic else 1
    gen = model.generate(x, S, rng)
    pred = dataset.to_physical(gen)
    truth = np.asarray(truth, dtype=np.float64)
    errors = np.array([[relative_l2(pred[s, :, j], truth[:, j]) for j in range(3)] for s in range(S)])
    order = cloud.surface_order
    forces = np.zeros((S, 2))
    true_forces = np.full(2, np.nan)
    if len(order) >= 3:
        forces = np.array([pressure_forces(cloud, pred[s, order, 2]) for s in range(S)])
        true_forces = np.array(pressure_forces(cloud, truth[order, 2]))
    return GeometryResult(gid, errors, forces, true_forces, pred)


def _build_report(results, n_samples, keep_predictions=False):
    ids = [r.gid for r in results]
    mean = np.array([r.errors.mean(axis=0) for r in results])
    std = np.array([r.errors.std(axis=0) for r in results])
    abs_err = [np.abs(r.forces - r.true_forces) for r in results]
    forces = ForceReport(ids, np.array([r.true_forces for r in results]),
                         np.array([r.forces.mean(axis=0) for r in results]),
                         np.array([e.mean(axis=0) for e in abs_err]),
                         np.array([e.std(axis=0) for e in abs_err]), abs_err)
    report = MetricsReport(ids, mean, std, n_samples, [r.errors for r in results], forces)
    if keep_predictions:
        report.predictions = {r.gid: r.prediction for r in results}
    return report


def evaluate_model(model, dataset, split="test", n_samples=1, seed=0, workers=None,
                   keep_predictions=False):
    """Score ``model`` on every geometry of ``split``.

    Each geometry draws from its own stream seeded by (seed, geometry id), so
    results do not depend on geometry order or worker count.
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    samples = dataset.split(split) if isinstance(split, str) else list(split)

    def one(sample):
        rng = Stream(derive_seed(seed, sample.gid))
        return evaluate_cloud(model, dataset, sample.cloud, sample.fields, n_samples, rng, sample.gid)

    results = _map(one, samples, workers)
    return _build_report(results, n_samples if model.stochastic else 1, keep_predictions)


def _map(fn, items, workers):
    n = _worker_count(workers)
    if n == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(fn, items))


def robustness_eval(model, dataset, split="test", fractions=(0.05, 0.10, 0.15), n_samples=1,
                    seed=0, workers=None):
    """Drop a fraction of points from each cloud and re-run the evaluation.

    Returns one dict per fraction with the reduced cloud sizes, the average
    relative L2 error per field and the full MetricsReport.
    """
    samples = dataset.split(split) if isinstance(split, str) else list(split)
    table = []
    for k, frac in enumerate(fractions):
        if not 0.0 <= frac < 1.0:
            raise ConfigError(f"fraction {frac} outside [0, 1)")

        def one(sample, frac=frac):
            drop_rng = Stream(derive_seed(seed, "drop", sample.gid, int(round(frac * 1e6))))
            cloud, truth, _ = drop_points(sample.cloud, sample.fields, frac, drop_rng)
            rng = Stream(derive_seed(seed, sample.gid))
            res = evaluate_cloud(model, dataset, cloud, truth, n_samples, rng, sample.gid)
            return res, cloud.n_points

        out = _map(one, samples, workers)
        report = _build_report([r for r, _ in out], n_samples if model.stochastic else 1)
        agg = report.aggregate()
        table.append({
            "fraction": float(frac),
            "n_points": sorted({n for _, n in out}),
            **{f"err_{f}": agg[f]["average"][0] for f in FIELDS},
            "report": report,
        })
    return table


# ------------------------------------------------------------------- export


def _fmt(v):
    return f"{float(v):.9g}"


def _write_rows(path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if header:
                w.writerow(header)
            for row in rows:
                w.writerow([c if isinstance(c, (str, int, np.integer)) else _fmt(c) for c in row])
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc
    return path


def export_histogram(report, path):
    """Per-geometry mean errors: ``geometry_id,err_u,err_v,err_p``."""
    rows = [(int(g), *m) for g, m in zip(report.geometry_ids, report.mean)]
    return _write_rows(path, HISTOGRAM_HEADER, rows)


def export_metrics(report, path, header_note=None):
    rows = [(name, stat, val, sd) for name, stat, val, sd in report.rows()]
    out = _write_rows(path, ["quantity", "statistic", "value", "std"], rows)
    if header_note:
        with open(path) as fh:
            body = fh.read()
        with open(path, "w", newline="") as fh:
            fh.write(f"# {header_note}\n{body}")
    return out


def export_forces(report, path):
    f = report.forces
    rows = [(int(g), *t, *pm, *em, *es) for g, t, pm, em, es in
            zip(f.geometry_ids, f.true_forces, f.pred_mean, f.err_mean, f.err_std)]
    header = ["geometry_id", "drag_true", "lift_true", "drag_pred", "lift_pred",
              "err_drag", "err_lift", "std_drag", "std_lift"]
    return _write_rows(path, header, rows)


def export_surface_profile(rows, path):
    return _write_rows(path, ["angle_deg", "u", "v", "p"], rows)


def export_fields(coords, pred, truth, path):
    """x, y, u, v, p of a prediction plus absolute errors against ``truth``."""
    coords = np.asarray(coords, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    err = np.abs(pred - np.asarray(truth, dtype=np.float64))
    rows = np.column_stack([coords, pred, err])
    return _write_rows(path, ["x", "y", "u", "v", "p", "abs_err_u", "abs_err_v", "abs_err_p"], rows)


def export_robustness(table, path):
    rows = [(_fmt(r["fraction"]), " ".join(str(n) for n in r["n_points"]),
             r["err_u"], r["err_v"], r["err_p"]) for r in table]
    return _write_rows(path, ["fraction", "n_points", "err_u", "err_v", "err_p"], rows)


def read_histogram(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(c) for c in r] for r in rows[1:]])


def true_forces(geometry, flow, n_surface=512):
    """Reference (drag, lift) of the oracle pressure on a finely sampled boundary."""
    pts = geometry.boundary(np.arange(n_surface) / n_surface)
    return closed_curve_forces(pts, oracle_fields(geometry, flow, pts)[:, 2])
