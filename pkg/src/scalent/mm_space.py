"""Finite weighted metric-measure spaces and semimetrics on them.

Points come in three closed representations:

* ``"torus"``: circle coordinates in [0, 1), stored as a float64 array of shape (N,)
* ``"word"``: words over an alphabet of size <= 256, a uint8 array of shape (N, L)
* ``"product"``: a tuple of component point arrays, one per coordinate

A :class:`Semimetric` evaluates whole blocks of pairs at once through its
``cross`` function, which maps two point arrays of lengths ``a`` and ``b`` to
an ``(a, b)`` matrix. Every entry is a pure function of its pair, so the
result never depends on how the work is split.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

TORUS = "torus"
WORD = "word"
PRODUCT = "product"

SEMIMETRIC_KINDS = ("arc", "cut", "hamming-word", "weighted-sum", "averaged", "shifted")


class RepresentationError(ValueError):
    """A semimetric was fed points of a kind it cannot read."""


# --- points ---------------------------------------------------------------


def point_kind(points) -> str:
    if isinstance(points, tuple):
        return PRODUCT
    arr = np.asarray(points)
    if arr.ndim == 1 and arr.dtype.kind == "f":
        return TORUS
    if arr.ndim == 2 and arr.dtype == np.uint8:
        return WORD
    raise RepresentationError(f"unsupported point array: dtype={arr.dtype}, ndim={arr.ndim}")


def point_count(points) -> int:
    if isinstance(points, tuple):
        return len(points[0])
    return len(points)


def take(points, idx):
    """Select points by index array, preserving the representation."""
    if isinstance(points, tuple):
        return tuple(take(c, idx) for c in points)
    return points[idx]


def _describe_kind(points) -> str:
    kind = point_kind(points)
    if kind == PRODUCT:
        return "product(" + ", ".join(_describe_kind(c) for c in points) + ")"
    return kind


def weight_of(weights: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Total weight of a subset, correctly rounded (order independent)."""
    if mask is None:
        return math.fsum(weights.tolist())
    return math.fsum(weights[mask].tolist())


@dataclass(frozen=True, eq=False)
class SampledSpace:
    """A finite weighted point set standing in for a probability space.

    Weights are normalized at construction; pass ``weights=None`` for the
    uniform (empirical) measure.
    """

    points: Any
    weights: np.ndarray = None
    provenance: Any = "explicit"

    def __post_init__(self):
        pts = self.points
        if isinstance(pts, tuple):
            pts = tuple(_freeze_points(c) for c in pts)
            sizes = {len(c) for c in pts}
            if len(sizes) != 1:
                raise ValueError(f"product coordinates have different sizes: {sorted(sizes)}")
            for c in pts:
                if point_kind(c) == PRODUCT:
                    raise ValueError("nested products are not supported")
        else:
            pts = _freeze_points(pts)
        object.__setattr__(self, "points", pts)
        kind = point_kind(pts)
        n = point_count(pts)
        if n == 0:
            raise ValueError("a space needs at least one point")

        if self.weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (n,):
                raise ValueError(f"expected {n} weights, got shape {w.shape}")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValueError("weights must be finite and strictly positive")
            total = weight_of(w)
            if total != 1.0:
                w = w / total
        if abs(weight_of(w) - 1.0) > 1e-12:
            raise ValueError("weights do not normalize to 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_kind", kind)

    @property
    def kind(self) -> str:
        return self._kind

    @property
    def size(self) -> int:
        return point_count(self.points)

    def __len__(self) -> int:
        return self.size

    def project(self, m: int) -> "SampledSpace":
        """Coordinate projection of a product space (weights carried over)."""
        if self.kind != PRODUCT:
            raise RepresentationError("projection needs a product space")
        prov = self.provenance
        if isinstance(prov, dict):
            prov = dict(prov, projection=m)
        return SampledSpace(self.points[m], self.weights, prov)


def _freeze_points(p):
    if isinstance(p, np.ndarray) and p.dtype == np.uint8:
        arr = np.array(p, dtype=np.uint8, copy=True)
    else:
        arr = np.asarray(p)
        if arr.dtype.kind in "fi" and arr.ndim == 1:
            arr = np.array(arr, dtype=np.float64, copy=True)
        elif arr.ndim == 2 and arr.dtype.kind in "iu":
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("word symbols must lie in 0..255")
            arr = arr.astype(np.uint8)
        else:
            arr = np.array(arr, copy=True)
    if arr.ndim == 1 and arr.dtype == np.float64:
        if arr.size and (arr.min() < 0.0 or arr.max() >= 1.0):
            raise ValueError("torus coordinates must lie in [0, 1)")
    arr.setflags(write=False)
    point_kind(arr)
    return arr


# --- semimetrics ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Semimetric:
    """Symmetric nonnegative pair evaluator with a declared upper bound.

    ``cross(a, b)`` returns the matrix of distances between the points of
    ``a`` and those of ``b``. ``spec`` is a JSON-able description used for
    provenance and cache keys.
    """

    kind: str
    bound: float
    cross: Callable[[Any, Any], np.ndarray]
    spec: dict = field(default_factory=dict)

    def __call__(self, x, y) -> float:
        a, b = _as_single(x), _as_single(y)
        return float(self.cross(a, b)[0, 0])

    def matrix(self, points) -> np.ndarray:
        return self.cross(points, points)


def _as_single(x):
    if isinstance(x, tuple):
        return tuple(_as_single(c) for c in x)
    arr = np.asarray(x)
    if arr.ndim == 0:
        return np.array([float(arr)])
    if arr.dtype.kind in "iu" and arr.ndim == 1:
        return arr.astype(np.uint8)[None, :]
    return arr[None, ...] if arr.ndim == 1 and arr.dtype == np.uint8 else arr


def _require(points, kind: str, who: str):
    if point_kind(points) != kind:
        raise RepresentationError(f"{who} needs {kind} points, got {_describe_kind(points)}")


def arc_semimetric() -> Semimetric:
    """Arc-length distance on the circle R/Z, bounded by 1/2."""

    def cross(a, b):
        _require(a, TORUS, "arc metric")
        _require(b, TORUS, "arc metric")
        d = np.abs(a[:, None] - b[None, :])
        return np.minimum(d, 1.0 - d)

    return Semimetric("arc", 0.5, cross, {"kind": "arc"})


@dataclass(frozen=True)
class Labeling:
    """Cell-id function for cut semimetrics.

    ``intervals`` labels torus points by the half-open interval of
    ``breaks`` they fall in; ``symbol`` labels words by the symbol at
    ``position``; ``constant`` puts everything into one cell.
    """

    mode: str
    breaks: tuple = ()
    position: int = 0

    def __call__(self, points) -> np.ndarray:
        if self.mode == "constant":
            return np.zeros(point_count(points), dtype=np.int64)
        if self.mode == "intervals":
            _require(points, TORUS, "interval labeling")
            return np.searchsorted(np.asarray(self.breaks, dtype=np.float64), points, side="right")
        if self.mode == "symbol":
            _require(points, WORD, "symbol labeling")
            if self.position >= points.shape[1]:
                raise RepresentationError(f"words of length {points.shape[1]} have no position {self.position}")
            return points[:, self.position].astype(np.int64)
        raise ValueError(f"unknown labeling mode {self.mode!r}")

    @property
    def spec(self) -> dict:
        if self.mode == "intervals":
            return {"mode": "intervals", "breaks": list(self.breaks)}
        if self.mode == "symbol":
            return {"mode": "symbol", "position": self.position}
        return {"mode": "constant"}


def interval_labeling(breaks: Sequence[float]) -> Labeling:
    breaks = tuple(float(b) for b in breaks)
    if any(not 0.0 < b < 1.0 for b in breaks) or list(breaks) != sorted(set(breaks)):
        raise ValueError("breaks must be strictly increasing inside (0, 1)")
    return Labeling("intervals", breaks=breaks)


def symbol_labeling(position: int = 0) -> Labeling:
    if position < 0:
        raise ValueError("position must be nonnegative")
    return Labeling("symbol", position=int(position))


def constant_labeling() -> Labeling:
    return Labeling("constant")


def cut_semimetric(labeling: Callable) -> Semimetric:
    """0/1 semimetric of a partition: distance 1 iff labels differ."""

    def cross(a, b):
        la, lb = np.asarray(labeling(a)), np.asarray(labeling(b))
        return (la[:, None] != lb[None, :]).astype(np.float64)

    spec = {"kind": "cut", "labeling": getattr(labeling, "spec", {"mode": "custom"})}
    return Semimetric("cut", 1.0, cross, spec)


def zero_semimetric() -> Semimetric:
    return cut_semimetric(constant_labeling())


def hamming_semimetric(length: int | None = None) -> Semimetric:
    """Normalized Hamming distance on the first ``length`` symbols."""

    def cross(a, b):
        _require(a, WORD, "hamming metric")
        _require(b, WORD, "hamming metric")
        span = a.shape[1] if length is None else length
        if span > a.shape[1] or span > b.shape[1] or span < 1:
            raise RepresentationError(f"cannot read {span} symbols from words of length {a.shape[1]}")
        acc = np.zeros((len(a), len(b)), dtype=np.float64)
        for p in range(span):
            acc += a[:, None, p] != b[None, :, p]
        return acc / span

    return Semimetric("hamming-word", 1.0, cross, {"kind": "hamming-word", "length": length})


def weighted_sum_semimetric(components, coordinatewise: bool = True) -> Semimetric:
    """Positive combination ``sum_m C_m rho_m``.

    With ``coordinatewise`` the points must be products and coordinate m is
    fed to ``rho_m``; otherwise every component reads the whole point.
    """
    comps = [(float(c), rho) for c, rho in components]
    if not comps:
        raise ValueError("need at least one component")
    if any(not (c > 0 and math.isfinite(c)) for c, _ in comps):
        raise ValueError("component weights must be positive and finite")
    bound = math.fsum(c * rho.bound for c, rho in comps)

    def cross(a, b):
        if coordinatewise:
            if not (isinstance(a, tuple) and isinstance(b, tuple)):
                raise RepresentationError("coordinatewise weighted sum needs product points")
            if len(a) != len(comps) or len(b) != len(comps):
                raise RepresentationError(f"{len(comps)} components but product arity {len(a)}")
            parts = (c * rho.cross(pa, pb) for (c, rho), pa, pb in zip(comps, a, b))
        else:
            parts = (c * rho.cross(a, b) for c, rho in comps)
        total = None
        for part in parts:
            total = part if total is None else total + part
        return total

    spec = {
        "kind": "weighted-sum",
        "coordinatewise": coordinatewise,
        "components": [{"weight": c, "semimetric": rho.spec} for c, rho in comps],
    }
    return Semimetric("weighted-sum", bound, cross, spec)


# --- matrices -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    values: np.ndarray
    bound: float = math.inf

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"distance matrix must be square, got shape {v.shape}")
        v = np.array(v, copy=True)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def as_array(matrix) -> np.ndarray:
    if isinstance(matrix, DistanceMatrix):
        return matrix.values
    return np.asarray(matrix, dtype=np.float64)


def eval_matrix(space: SampledSpace, rho: Semimetric) -> DistanceMatrix:
    """Materialize ``rho`` on all pairs of sample points."""
    return DistanceMatrix(rho.matrix(space.points), rho.bound)


@dataclass
class SemimetricReport:
    triangle: list = field(default_factory=list)  # (i, j, k, deficit): d(i,k) > d(i,j) + d(j,k)
    symmetry: list = field(default_factory=list)  # (i, j, |d(i,j) - d(j,i)|)
    diagonal: list = field(default_factory=list)  # (i, d(i,i))
    negative: list = field(default_factory=list)  # (i, j, d(i,j))
    bound: list = field(default_factory=list)  # (i, j, d(i,j)) above the declared bound

    @property
    def ok(self) -> bool:
        return not (self.triangle or self.symmetry or self.diagonal or self.negative or self.bound)

    def __len__(self) -> int:
        return sum(map(len, (self.triangle, self.symmetry, self.diagonal, self.negative, self.bound)))


def check_matrix(matrix, tol: float = 1e-12, bound: float | None = None) -> SemimetricReport:
    d = as_array(matrix)
    if bound is None and isinstance(matrix, DistanceMatrix):
        bound = matrix.bound
    rep = SemimetricReport()
    n = d.shape[0]
    for i in np.flatnonzero(np.abs(np.diag(d)) > tol):
        rep.diagonal.append((int(i), float(d[i, i])))
    asym = np.abs(d - d.T)
    for i, j in zip(*np.nonzero(np.triu(asym > tol, 1))):
        rep.symmetry.append((int(i), int(j), float(asym[i, j])))
    for i, j in zip(*np.nonzero(d < -tol)):
        rep.negative.append((int(i), int(j), float(d[i, j])))
    if bound is not None and math.isfinite(bound):
        for i, j in zip(*np.nonzero(d > bound + tol)):
            rep.bound.append((int(i), int(j), float(d[i, j])))
    for j in range(n):
        # deficit[i, k] = d(i,k) - d(i,j) - d(j,k)
        deficit = d - d[:, j][:, None] - d[j, :][None, :]
        for i, k in zip(*np.nonzero(deficit > tol)):
            rep.triangle.append((int(i), int(j), int(k), float(deficit[i, k])))
    return rep


def check_semimetric(space: SampledSpace, rho: Semimetric, tol: float = 1e-12) -> SemimetricReport:
    """Scan all sampled pairs and triples for semimetric axiom violations."""
    return check_matrix(eval_matrix(space, rho), tol=tol, bound=rho.bound)


# --- on-disk cache --------------------------------------------------------
#
# Layout (little-endian):
#   bytes 0..7    magic b"SCLTDM\0\0"
#   bytes 8..11   uint32 format version (currently 1)
#   bytes 12..15  uint32 reserved, must be 0
#   bytes 16..23  uint64 N
#   then N*(N-1)/2 float64: strictly lower triangle, row-major
#   (row 1: d[1,0]; row 2: d[2,0], d[2,1]; ...)

MATRIX_MAGIC = b"SCLTDM\x00\x00"
MATRIX_VERSION = 1


class CacheFormatError(ValueError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def matrix_digest(provenance, semimetric_spec) -> str:
    payload = canonical_json({"space": provenance, "semimetric": semimetric_spec})
    return hashlib.sha256(payload.encode()).hexdigest()


def write_matrix(path, matrix: DistanceMatrix) -> None:
    d = as_array(matrix)
    n = d.shape[0]
    rows, cols = np.tril_indices(n, -1)
    body = np.ascontiguousarray(d[rows, cols], dtype="<f8").tobytes()
    header = MATRIX_MAGIC + struct.pack("<II", MATRIX_VERSION, 0) + struct.pack("<Q", n)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(header + body)
    tmp.replace(path)


def read_matrix(path, bound: float = math.inf) -> DistanceMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < 24 or raw[:8] != MATRIX_MAGIC:
        raise CacheFormatError(f"{path}: not a distance-matrix file")
    version, reserved = struct.unpack("<II", raw[8:16])
    if version != MATRIX_VERSION or reserved != 0:
        raise CacheFormatError(f"{path}: unsupported format version {version}")
    (n,) = struct.unpack("<Q", raw[16:24])
    count = n * (n - 1) // 2
    if len(raw) != 24 + 8 * count:
        raise CacheFormatError(f"{path}: truncated body")
    tri = np.frombuffer(raw, dtype="<f8", count=count, offset=24)
    d = np.zeros((n, n), dtype=np.float64)
    rows, cols = np.tril_indices(n, -1)
    d[rows, cols] = tri
    d[cols, rows] = tri
    return DistanceMatrix(d, bound)


class MatrixCache:
    """Directory of distance matrices keyed by content digest."""

    suffix = ".sdm"

    def __init__(self, directory):
        self.directory = Path(directory)

    def path_for(self, digest: str) -> Path:
        return self.directory / (digest + self.suffix)

    def has(self, provenance, semimetric: Semimetric) -> bool:
        return self.path_for(matrix_digest(provenance, semimetric.spec)).exists()

    def get(self, provenance, semimetric: Semimetric) -> DistanceMatrix | None:
        path = self.path_for(matrix_digest(provenance, semimetric.spec))
        if not path.exists():
            return None
        return read_matrix(path, semimetric.bound)

    def put(self, provenance, semimetric: Semimetric, matrix: DistanceMatrix) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        write_matrix(self.path_for(matrix_digest(provenance, semimetric.spec)), matrix)
