"""Datasets: CSV ingestion, synthetic mixtures, uniform noise, grayscale images.

A :class:`Dataset` is an immutable ``(n, dim)`` float matrix plus a little
metadata. Every constructor path validates the result, so downstream code can
assume finite values and a sensible ``true_c``.
"""
import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import DataError

__all__ = [
    "Dataset",
    "MixtureComponent",
    "MixtureSpec",
    "load_csv",
    "load_dataset",
    "save_dataset",
    "load_bundled",
    "BUNDLED_DATASETS",
    "generate_mixture",
    "add_uniform_noise",
    "standardize",
    "image_to_dataset",
    "labels_to_mask",
    "read_image",
    "write_pgm",
    "quadrant_image",
    "figure2_spec",
    "figure2_dataset",
    "figure1_spec",
    "mixture_spec_from_dict",
]


@dataclass(frozen=True, eq=False)
class Dataset:
    """N points in ``dim`` dimensions.

    ``labels`` are carried along for reporting only; nothing in the
    clustering code reads them.
    """

    points: np.ndarray
    name: str = "dataset"
    true_c: int | None = None
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise DataError(f"points must be a non-empty 2-D matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            bad = np.argwhere(~np.isfinite(pts))[0]
            raise DataError(f"non-finite value at row {bad[0]}, column {bad[1]}")
        if self.true_c is not None and not 1 <= int(self.true_c) <= pts.shape[0]:
            raise DataError(f"true_c={self.true_c} outside [1, n={pts.shape[0]}]")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            labels = np.asarray(self.labels).copy()
            if labels.shape[0] != pts.shape[0]:
                raise DataError("labels length does not match number of points")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def replace(self, **changes):
        kwargs = dict(points=self.points, name=self.name, true_c=self.true_c,
                      labels=self.labels, meta=dict(self.meta))
        kwargs.update(changes)
        return Dataset(**kwargs)

    def descriptor(self):
        """Short JSON-friendly summary used in run reports."""
        return {
            "name": self.name,
            "n": self.n,
            "dim": self.dim,
            "true_c": self.true_c,
            "preprocessing": list(self.meta.get("preprocessing", [])),
        }


@dataclass(frozen=True)
class MixtureComponent:
    center: tuple
    covariance: tuple
    count: int


@dataclass(frozen=True)
class MixtureSpec:
    """Gaussian mixture recipe. Covariances must be symmetric positive definite."""

    components: tuple
    seed: int = 0

    def __post_init__(self):
        comps = tuple(
            c if isinstance(c, MixtureComponent) else MixtureComponent(**c)
            for c in self.components
        )
        if not comps:
            raise DataError("mixture needs at least one component")
        dim = len(comps[0].center)
        total = 0
        for k, comp in enumerate(comps):
            center = np.asarray(comp.center, dtype=float)
            cov = np.asarray(comp.covariance, dtype=float)
            if center.shape != (dim,):
                raise DataError(f"components[{k}].center has dimension {center.size}, expected {dim}")
            if cov.shape != (dim, dim):
                raise DataError(f"components[{k}].covariance must be {dim}x{dim}")
            if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
                raise DataError(f"components[{k}].covariance is not symmetric")
            if np.linalg.eigvalsh(cov).min() <= 0.0:
                raise DataError(f"components[{k}].covariance is not positive definite")
            if int(comp.count) < 1:
                raise DataError(f"components[{k}].count must be positive")
            total += int(comp.count)
        if total < 2:
            raise DataError("mixture must contain at least 2 points in total")
        if not 0 <= int(self.seed) < 2**64:
            raise DataError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self):
        return len(self.components[0].center)

    def to_dict(self):
        return {
            "seed": int(self.seed),
            "components": [
                {
                    "center": [float(v) for v in c.center],
                    "covariance": [[float(v) for v in row] for row in c.covariance],
                    "count": int(c.count),
                }
                for c in self.components
            ],
        }


def mixture_spec_from_dict(obj, path="spec"):
    """Build a :class:`MixtureSpec` from parsed JSON, naming the offending field on error."""
    if not isinstance(obj, dict):
        raise DataError(f"{path}: expected an object")
    comps = obj.get("components")
    if not isinstance(comps, list) or not comps:
        raise DataError(f"{path}.components: expected a non-empty list")
    parsed = []
    for k, comp in enumerate(comps):
        where = f"{path}.components[{k}]"
        if not isinstance(comp, dict):
            raise DataError(f"{where}: expected an object")
        for key in ("center", "covariance", "count"):
            if key not in comp:
                raise DataError(f"{where}.{key}: missing")
        try:
            center = tuple(float(v) for v in comp["center"])
        except (TypeError, ValueError):
            raise DataError(f"{where}.center: expected a list of numbers") from None
        try:
            cov = tuple(tuple(float(v) for v in row) for row in comp["covariance"])
        except (TypeError, ValueError):
            raise DataError(f"{where}.covariance: expected a matrix of numbers") from None
        count = comp["count"]
        if not isinstance(count, int) or isinstance(count, bool):
            raise DataError(f"{where}.count: expected an integer")
        parsed.append(MixtureComponent(center, cov, count))
    seed = obj.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise DataError(f"{path}.seed: expected an integer")
    return MixtureSpec(tuple(parsed), seed=seed)


def load_csv(path, has_header=False, label_column=None, name=None):
    """Read a comma-separated numeric file.

    Args:
        path: file to read.
        has_header: skip the first row.
        label_column: index of a column to keep as labels instead of features.
            Negative indices count from the end.
        name: dataset name; defaults to the file stem.

    Raises:
        DataError: on empty files, ragged rows or non-numeric cells. Messages
            carry the 1-based line number.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    rows = []
    labels = []
    header = None
    width = None
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if has_header and header is None:
                header = row
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {width}")
            lab_idx = None
            if label_column is not None:
                lab_idx = label_column % width
                labels.append(row[lab_idx].strip())
            values = []
            for col, cell in enumerate(row):
                if col == lab_idx:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno}, column {col + 1}: non-numeric value {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {lineno}, column {col + 1}: non-finite value")
                values.append(v)
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    if not rows[0]:
        raise DataError(f"{path}: no feature columns")
    meta = {"source": str(path)}
    if header is not None:
        meta["columns"] = [h for i, h in enumerate(header) if label_column is None or i != label_column % len(header)]
    return Dataset(
        points=np.array(rows, dtype=float),
        name=name or path.stem,
        labels=np.array(labels) if label_column is not None else None,
        meta=meta,
    )


def _sidecar(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_dataset(data, path):
    """Write ``data`` as CSV plus a ``<file>.json`` metadata sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in data.points:
            writer.writerow([repr(float(v)) for v in row])
    tmp.replace(path)
    meta = {
        "name": data.name,
        "n": data.n,
        "dim": data.dim,
        "true_c": data.true_c,
        "seed": data.meta.get("seed"),
        "spec": data.meta.get("spec"),
        "meta": data.meta,
    }
    side = _sidecar(path)
    tmp = side.with_name(side.name + ".tmp")
    tmp.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(side)
    return path, side


def load_dataset(path, has_header=None, label_column=None):
    """Load a CSV, picking up name and ``true_c`` from its sidecar if present.

    ``path`` may also be the name of a bundled dataset (``iris``, ``wine``...).
    """
    if str(path) in BUNDLED_DATASETS and not Path(path).exists():
        return load_bundled(str(path))
    side = _sidecar(path)
    meta = {}
    if side.exists():
        try:
            meta = json.loads(side.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{side}: invalid JSON ({exc})") from None
    if has_header is None:
        has_header = _looks_like_header(path)
    data = load_csv(path, has_header=has_header, label_column=label_column,
                    name=meta.get("name"))
    if meta:
        extra = dict(meta.get("meta") or {})
        extra.update(data.meta)
        data = data.replace(true_c=meta.get("true_c"), meta=extra)
    return data


def _looks_like_header(path):
    try:
        with Path(path).open(newline="", encoding="utf-8") as fh:
            first = next(csv.reader(fh), [])
    except OSError:
        return False
    for cell in first:
        try:
            float(cell)
        except ValueError:
            return True
    return False


# name -> (true number of clusters, other accepted answers)
BUNDLED_DATASETS = {
    "iris": (2, (2, 3)),
    "wine": (3, (3,)),
    "wbc": (2, (2,)),
    "wdbc": (2, (2,)),
    "bupa": (2, (2,)),
    "mammographic": (2, (2,)),
}


def load_bundled(name):
    """Load one of the UCI datasets shipped with the package.

    See ``data/PROVENANCE.md`` for where each copy came from.
    """
    if name not in BUNDLED_DATASETS:
        raise DataError(f"unknown bundled dataset {name!r}; choose from {sorted(BUNDLED_DATASETS)}")
    true_c, accepted = BUNDLED_DATASETS[name]
    ref = resources.files("fpcluster") / "data" / f"{name}.csv"
    with resources.as_file(ref) as path:
        data = load_csv(path, has_header=True, label_column=-1, name=name)
    meta = dict(data.meta)
    meta["source"] = f"bundled:{name}"
    meta["accepted_c"] = list(accepted)
    return data.replace(true_c=true_c, meta=meta)


def generate_mixture(spec, name="mixture"):
    """Sample a Gaussian mixture; a pure function of ``spec`` (seed included).

    Each component draws ``count`` points as ``center + z @ L.T`` with ``L`` the
    Cholesky factor of its covariance.
    """
    rng = np.random.default_rng(int(spec.seed))
    blocks = []
    labels = []
    for k, comp in enumerate(spec.components):
        cov = np.asarray(comp.covariance, dtype=float)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise DataError(f"components[{k}].covariance is not positive definite") from None
        z = rng.standard_normal((int(comp.count), spec.dim))
        blocks.append(np.asarray(comp.center, dtype=float) + z @ chol.T)
        labels.extend([k] * int(comp.count))
    return Dataset(
        points=np.vstack(blocks),
        name=name,
        true_c=len(spec.components),
        labels=np.array(labels),
        meta={"seed": int(spec.seed), "spec": spec.to_dict(), "generator": "gaussian_mixture"},
    )


def add_uniform_noise(data, count, bounds=None, seed=0):
    """Append ``count`` points drawn uniformly from an axis-aligned box.

    ``bounds`` is a sequence of ``(lo, hi)`` per dimension and defaults to the
    bounding box of ``data``. Noise points get label ``-1``.
    """
    if count < 0:
        raise DataError("noise count must be non-negative")
    if bounds is None:
        lo = data.points.min(axis=0)
        hi = data.points.max(axis=0)
    else:
        bounds = np.asarray(bounds, dtype=float)
        if bounds.shape != (data.dim, 2):
            raise DataError(f"bounds must have shape ({data.dim}, 2)")
        lo, hi = bounds[:, 0], bounds[:, 1]
    if np.any(~(lo < hi)):
        raise DataError("degenerate noise bounds: every dimension needs lo < hi")
    if count == 0:
        return data
    rng = np.random.default_rng(int(seed))
    noise = rng.uniform(lo, hi, size=(int(count), data.dim))
    labels = None
    if data.labels is not None:
        labels = np.concatenate([data.labels, np.full(int(count), -1, dtype=data.labels.dtype)])
    meta = dict(data.meta)
    meta["noise"] = {"count": int(count), "seed": int(seed),
                     "bounds": [[float(a), float(b)] for a, b in zip(lo, hi)]}
    return data.replace(points=np.vstack([data.points, noise]), labels=labels, meta=meta)


def standardize(data):
    """Shift each feature to zero mean and scale it to unit variance.

    Constant features are centered but left unscaled.
    """
    mean = data.points.mean(axis=0)
    std = data.points.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    meta = dict(data.meta)
    meta["preprocessing"] = list(meta.get("preprocessing", [])) + ["standardize"]
    return data.replace(points=(data.points - mean) / std, meta=meta)


def image_to_dataset(pixels, include_coords=False, coord_weight=1.0, name="image"):
    """One point per pixel, in row-major order.

    With ``include_coords`` each point is ``(intensity, w*row, w*col)`` where
    row and column are scaled to [0, 1] and ``w`` is ``coord_weight``.
    """
    img = np.asarray(pixels, dtype=float)
    if img.ndim != 2 or img.size == 0:
        raise DataError("image must be a non-empty 2-D grid")
    if coord_weight < 0:
        raise DataError("coord_weight must be non-negative")
    h, w = img.shape
    feats = [img.reshape(-1)]
    if include_coords:
        rows, cols = np.indices((h, w), dtype=float)
        rows = rows / (h - 1) if h > 1 else np.zeros_like(rows)
        cols = cols / (w - 1) if w > 1 else np.zeros_like(cols)
        feats += [coord_weight * rows.reshape(-1), coord_weight * cols.reshape(-1)]
    meta = {"image_shape": [h, w], "include_coords": bool(include_coords),
            "coord_weight": float(coord_weight)}
    return Dataset(points=np.column_stack(feats), name=name, meta=meta)


def labels_to_mask(labels, shape, levels=None):
    """Map per-pixel labels back to an ``(H, W)`` uint8 mask.

    ``levels`` gives the gray value of each label; by default labels are spread
    evenly over 0..255.
    """
    labels = np.asarray(labels, dtype=int)
    h, w = shape
    if labels.size != h * w:
        raise DataError(f"{labels.size} labels cannot fill a {h}x{w} mask")
    if levels is None:
        k = int(labels.max()) + 1
        levels = np.round(np.linspace(0, 255, max(k, 2))).astype(np.uint8)
    return np.asarray(levels, dtype=np.uint8)[labels].reshape(h, w)


def read_image(path):
    """Load any image Pillow understands (PGM P2/P5, PNG...) as grayscale floats."""
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L") if im.mode not in ("L", "I", "I;16", "F") else im,
                              dtype=float)
    except (OSError, UnidentifiedImageError) as exc:
        raise DataError(f"{path}: cannot read image ({exc})") from None


def write_pgm(path, image):
    """Write an 8-bit binary (P5) PGM."""
    from PIL import Image

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(tmp, format="PPM")
    tmp.replace(path)
    return path


def quadrant_image(size=64, levels=(30, 100, 170, 240), noise_sigma=0.0, seed=0):
    """Synthetic test image: four constant quadrants plus optional Gaussian noise.

    Returns ``(image, truth)`` where ``truth`` holds the quadrant index of
    every pixel.
    """
    half = size // 2
    truth = np.zeros((size, size), dtype=int)
    truth[:half, half:] = 1
    truth[half:, :half] = 2
    truth[half:, half:] = 3
    img = np.asarray(levels, dtype=float)[truth]
    if noise_sigma > 0:
        img = img + np.random.default_rng(seed).normal(0.0, noise_sigma, img.shape)
    return img, truth


# Hand-placed stand-ins for the demonstration figures: the original point
# coordinates were never published.
_FIG2_CENTERS = ((1.0, 1.0), (5.0, 1.0), (3.0, 4.0), (1.0, 7.0), (5.0, 7.0))
_FIG1_CENTERS = ((0.0, 0.0), (8.0, 0.0), (0.0, 8.0), (8.0, 8.0),
                 (3.4, 4.0), (4.6, 4.0), (4.0, 5.1))


def figure2_spec(seed=0, per_cluster=100, variance=0.25):
    """Five well-separated round clusters in the plane."""
    cov = ((variance, 0.0), (0.0, variance))
    return MixtureSpec(tuple(MixtureComponent(c, cov, per_cluster) for c in _FIG2_CENTERS),
                       seed=seed)


def figure1_spec(seed=0, per_cluster=60):
    """Seven clusters; three of them crowd together near the middle."""
    comps = []
    for k, c in enumerate(_FIG1_CENTERS):
        v = 0.5 if k < 4 else 0.06
        comps.append(MixtureComponent(c, ((v, 0.0), (0.0, v)), per_cluster))
    return MixtureSpec(tuple(comps), seed=seed)


def figure2_dataset(seed=0, noise=100):
    """Five-cluster mixture, optionally with uniform noise over its bounding box.

    The noise stream is seeded from ``seed`` too, so one integer fixes the
    whole dataset.
    """
    data = generate_mixture(figure2_spec(seed), name="five_clusters")
    if noise:
        data = add_uniform_noise(data, noise, seed=int(np.random.SeedSequence([seed, 1]).generate_state(1)[0]))
        data = data.replace(name="five_clusters_noisy")
    return data
