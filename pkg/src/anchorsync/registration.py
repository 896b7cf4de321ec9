"""Multiple point-set registration on top of SE(3) synchronization.

A scan ``i`` lives in its own frame; the unknown motion ``G_i`` maps it into
a common frame. A pairwise estimate ``C_ij`` of ``G_i^{-1} G_j`` maps points
of scan ``j`` onto scan ``i``. The complete grid of such estimates is the
synchronization input, and the recovered ``G_i`` merge the scans.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError, IncompleteGraphError, InvalidInputError, PlyFormatError
from .estimators import ASE, METHODS, EstimateSet, estimate
from .geometry import RigidMotion, project_so, random_rotations, relative, rotation_about_axis
from .synthesis import GroundTruth, ObservationSet, observations_from_motions

# clouds up to this size use a dense distance matrix for nearest neighbors
EXHAUSTIVE_NN_LIMIT = 2000
PLY_DIGITS = 9


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray  # (m, 3), millimeters
    label: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise InvalidInputError(f"point cloud must be a nonempty (m, d) array, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("point cloud has non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def transformed(self, motion: RigidMotion, label: str | None = None) -> "PointCloud":
        return PointCloud(motion.apply(self.points), self.label if label is None else label)


@dataclass(frozen=True, eq=False)
class PoseGraph:
    """Complete grid of relative motions; ``motions[i][j]`` estimates ``G_i^{-1} G_j``."""

    motions: list = field(repr=False)

    def __post_init__(self):
        n = len(self.motions)
        if n < 2:
            raise InvalidInputError("a pose graph needs at least two scans")
        grid = []
        for i, row in enumerate(self.motions):
            if len(row) != n:
                raise IncompleteGraphError(f"row {i} has {len(row)} entries, expected {n}")
            for j, C in enumerate(row):
                if i != j and C is None:
                    raise IncompleteGraphError(f"missing relative motion for pair ({i}, {j})")
            d = next(C.d for j, C in enumerate(row) if j != i)
            grid.append([RigidMotion.identity(d) if i == j else C for j, C in enumerate(row)])
        object.__setattr__(self, "motions", grid)

    @property
    def n(self) -> int:
        return len(self.motions)

    def __getitem__(self, ij) -> RigidMotion:
        i, j = ij
        return self.motions[i][j]

    @classmethod
    def from_poses(cls, poses) -> "PoseGraph":
        return cls([[relative(Gi, Gj) for Gj in poses] for Gi in poses])

    def to_observations(self) -> ObservationSet:
        return observations_from_motions(self.motions)


def save_pose_graph(graph: PoseGraph, path) -> None:
    """CSV rows ``i, j, R (row-major), t`` for every ordered pair ``i != j``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for i in range(graph.n):
            for j in range(graph.n):
                if i == j:
                    continue
                C = graph[i, j]
                writer.writerow([i, j, *map(repr, C.rotation.ravel().tolist()), *map(repr, C.translation.tolist())])


def load_pose_graph(path) -> PoseGraph:
    entries = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                i, j = int(row[0]), int(row[1])
                values = np.array([float(x) for x in row[2:]])
            except (ValueError, IndexError) as exc:
                raise InvalidInputError(f"line {lineno}: malformed pose row") from exc
            d = int(round((-1 + math.sqrt(1 + 4 * values.size)) / 2))
            if d * d + d != values.size:
                raise InvalidInputError(f"line {lineno}: {values.size} values do not form a motion")
            entries[i, j] = RigidMotion(values[: d * d].reshape(d, d), values[d * d :])
    if not entries:
        raise IncompleteGraphError("pose graph file is empty")
    n = max(max(k) for k in entries) + 1
    grid = [[entries.get((i, j)) for j in range(n)] for i in range(n)]
    return PoseGraph(grid)


# ---------------------------------------------------------------- PLY I/O


def load_ply(path, label: str | None = None) -> PointCloud:
    """Read the vertex ``x, y, z`` coordinates of an ASCII PLY file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        text = None
    head_end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or head_end < 0:
        raise PlyFormatError(f"{path}: not a PLY file (missing 'ply' magic or 'end_header')")
    header = raw[:head_end].decode("ascii", errors="replace").splitlines()
    elements = []  # (name, count, [property names])
    fmt = None
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            if len(parts) < 2:
                raise PlyFormatError(f"{path}: malformed format line")
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3:
                raise PlyFormatError(f"{path}: malformed element line {line!r}")
            try:
                elements.append((parts[1], int(parts[2]), []))
            except ValueError as exc:
                raise PlyFormatError(f"{path}: bad element count in {line!r}") from exc
        elif parts[0] == "property":
            if not elements:
                raise PlyFormatError(f"{path}: property before any element")
            if len(parts) < 3:
                raise PlyFormatError(f"{path}: malformed property line {line!r}")
            if parts[1] == "list":
                elements[-1][2].append(None)
            else:
                elements[-1][2].append(parts[-1])
        else:
            raise PlyFormatError(f"{path}: unexpected header line {line!r}")
    if fmt is None:
        raise PlyFormatError(f"{path}: missing format line")
    if fmt != "ascii":
        raise PlyFormatError(f"{path}: {fmt} PLY is not supported, only ascii")
    if text is None:
        raise PlyFormatError(f"{path}: non-ASCII bytes in an ascii PLY")
    if not elements or elements[0][0] != "vertex":
        raise PlyFormatError(f"{path}: the first element must be 'vertex'")
    _, count, props = elements[0]
    missing = [c for c in "xyz" if c not in props]
    if missing:
        raise PlyFormatError(f"{path}: vertex element lacks {', '.join(missing)}")
    if None in props:
        raise PlyFormatError(f"{path}: list properties on vertices are not supported")
    cols = [props.index(c) for c in "xyz"]
    body = text[text.index("end_header") + len("end_header") :].splitlines()[1:]
    rows = [line.split() for line in body if line.strip()]
    if len(rows) < count:
        raise PlyFormatError(f"{path}: header declares {count} vertices, found {len(rows)} data lines")
    if len(elements) == 1 and len(rows) != count:
        raise PlyFormatError(f"{path}: header declares {count} vertices, found {len(rows)} data lines")
    points = np.empty((count, 3))
    for k, row in enumerate(rows[:count]):
        if len(row) != len(props):
            raise PlyFormatError(f"{path}: vertex {k} has {len(row)} values, expected {len(props)}")
        try:
            points[k] = [float(row[c]) for c in cols]
        except ValueError as exc:
            raise PlyFormatError(f"{path}: vertex {k} is not numeric") from exc
    if count == 0:
        raise PlyFormatError(f"{path}: no vertices")
    return PointCloud(points, label if label is not None else str(path))


def save_ply(cloud: PointCloud, path) -> None:
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        if cloud.label:
            fh.write(f"comment {cloud.label}\n")
        fh.write(f"element vertex {len(cloud)}\n")
        fh.write("property double x\nproperty double y\nproperty double z\nend_header\n")
        for p in cloud.points:
            fh.write(" ".join(f"{v:.{PLY_DIGITS}g}" for v in p))
            fh.write("\n")


# ------------------------------------------------------ pairwise alignment


def _points(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)


def kabsch_pairwise(A, B) -> RigidMotion:
    """Motion ``G`` minimizing ``sum_k ||G(a_k) - b_k||^2`` for corresponded points.

    With ``G(a) = R^T a + t`` the optimal ``R^T`` is the SO(d) projection of
    the centered cross-covariance ``sum_k (b_k - b_mean)(a_k - a_mean)^T``.
    """
    a, b = _points(A), _points(B)
    if a.shape != b.shape:
        raise InvalidInputError(f"point sets differ in shape: {a.shape} vs {b.shape}")
    m, d = a.shape
    if m < d:
        raise DegenerateGeometryError(f"need at least {d} correspondences, got {m}")
    a_mean, b_mean = a.mean(axis=0), b.mean(axis=0)
    cov = (b - b_mean).T @ (a - a_mean)
    sv = np.linalg.svd(cov, compute_uv=False)
    rank = int(np.sum(sv > 1e-12 * max(sv[0], 1e-300)))
    if sv[0] == 0 or rank < d - 1:
        raise DegenerateGeometryError(f"cross-covariance has rank {rank} < {d - 1}")
    M = project_so(cov, warn=False)
    return RigidMotion(M.T, b_mean - M @ a_mean)


def nearest_neighbors(query: np.ndarray, reference: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact nearest neighbor in ``reference`` for each query point: ``(indices, distances)``."""
    if reference.shape[0] <= EXHAUSTIVE_NN_LIMIT and query.shape[0] <= EXHAUSTIVE_NN_LIMIT:
        d2 = (
            np.sum(query**2, axis=1)[:, None]
            - 2.0 * query @ reference.T
            + np.sum(reference**2, axis=1)[None, :]
        )
        idx = np.argmin(d2, axis=1)
        dist = np.linalg.norm(query - reference[idx], axis=1)
        return idx, dist
    dist, idx = cKDTree(reference).query(query)
    return idx, dist


def _rms(dist: np.ndarray) -> float:
    return float(math.sqrt(np.mean(dist**2)))


def icp_refine(A, B, init: RigidMotion, max_iters: int = 50, tol: float = 1e-10, return_history: bool = False):
    """Point-to-point ICP refining ``init`` so that ``G(A)`` lies on ``B``.

    Each step matches every transformed point of ``A`` to its nearest point of
    ``B`` and re-solves :func:`kabsch_pairwise`. A step is kept only if it does
    not raise the nearest-neighbor RMS, so the RMS history is non-increasing.
    Iteration stops once the RMS improves by less than ``tol`` or after
    ``max_iters`` steps.
    """
    a, b = _points(A), _points(B)
    if max_iters < 0:
        raise InvalidInputError("max_iters must be >= 0")
    current = init
    idx, dist = nearest_neighbors(current.apply(a), b)
    rms = _rms(dist)
    history = [rms]
    for _ in range(max_iters):
        candidate = kabsch_pairwise(a, b[idx])
        cand_idx, cand_dist = nearest_neighbors(candidate.apply(a), b)
        cand_rms = _rms(cand_dist)
        if cand_rms > rms:
            break
        improvement = rms - cand_rms
        current, idx, rms = candidate, cand_idx, cand_rms
        history.append(rms)
        if improvement < tol:
            break
    if return_history:
        return current, history
    return current


# --------------------------------------------------------------- pipeline


def perturb_pose_graph(
    truth: PoseGraph,
    max_angle_deg: float = 8.0,
    trans_sigma_mm: float = 0.8,
    rng: np.random.Generator | None = None,
) -> PoseGraph:
    """Rotate every off-diagonal ``C_ij`` by a random angle in ``[0, max_angle_deg]``
    about a uniform axis and add ``N(0, trans_sigma_mm^2 I)`` to its translation.

    ``(i, j)`` and ``(j, i)`` are perturbed independently.
    """
    if rng is None:
        rng = np.random.default_rng()
    n = truth.n
    grid = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            C = truth[i, j]
            if i == j:
                grid[i][j] = C
                continue
            d = C.d
            axis = rng.standard_normal(d)
            axis /= np.linalg.norm(axis)
            angle = math.radians(rng.uniform(0.0, max_angle_deg))
            noise = rng.normal(0.0, trans_sigma_mm, d)
            H = C.as_matrix()
            H[:d, :d] = rotation_about_axis(axis, angle) @ H[:d, :d]
            H[:d, d] += noise
            grid[i][j] = RigidMotion.from_matrix(H)
    return PoseGraph(grid)


def kabsch_pose_graph(scans, threads: int = 1) -> PoseGraph:
    """Pose graph from positionally corresponded scans: ``C_ij`` maps scan ``j`` onto scan ``i``."""
    n = len(scans)
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda ij: kabsch_pairwise(scans[ij[1]], scans[ij[0]]), pairs))
    grid = [[None] * n for _ in range(n)]
    for (i, j), C in zip(pairs, results):
        grid[i][j] = C
    return PoseGraph(grid)


def refine_pose_graph(scans, graph: PoseGraph, max_iters: int) -> PoseGraph:
    """ICP-refine every pairwise motion of ``graph`` (scan ``j`` onto scan ``i``)."""
    n = graph.n
    grid = [[graph[i, j] if i == j else icp_refine(scans[j], scans[i], graph[i, j], max_iters)
             for j in range(n)] for i in range(n)]
    return PoseGraph(grid)


def register_scans(scans, graph: PoseGraph, method: str = ASE) -> tuple[EstimateSet, PointCloud]:
    """Synchronize ``graph`` and merge the scans into the recovered common frame."""
    if len(scans) != graph.n:
        raise InvalidInputError(f"{len(scans)} scans for a {graph.n}-node pose graph")
    if method not in METHODS:
        raise InvalidInputError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    est = estimate(graph.to_observations(), method)
    merged = np.concatenate([G.apply(_points(scan)) for G, scan in zip(est.motions, scans)])
    return est, PointCloud(merged, f"merged ({est.method})")


def aligned_rms(points, reference) -> float:
    """RMS distance after the best rigid alignment of ``points`` onto ``reference``."""
    p, r = _points(points), _points(reference)
    G = kabsch_pairwise(p, r)
    return _rms(np.linalg.norm(G.apply(p) - r, axis=1))


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    model: np.ndarray  # (m, 3) points in the common frame
    poses: list  # true G_i
    scans: list  # PointCloud per scan, in its own frame

    @property
    def ground_truth(self) -> GroundTruth:
        return GroundTruth.from_motions(self.poses)

    @property
    def reference_merge(self) -> np.ndarray:
        return np.concatenate([self.model] * len(self.scans))


def synthetic_scene(
    rng: np.random.Generator,
    n_scans: int = 5,
    n_points: int = 500,
    extent_mm: float = 50.0,
    translation_mm: float = 40.0,
) -> SyntheticScene:
    """An anisotropic random shape seen from ``n_scans`` random poses.

    Scan ``i`` holds ``G_i^{-1}`` applied to the shape, so ``G_i`` maps it back.
    """
    scales = extent_mm * np.array([0.5, 0.3, 0.15])
    model = rng.standard_normal((n_points, 3)) * scales
    rotations = random_rotations(rng, 3, n_scans)
    translations = rng.standard_normal((n_scans, 3)) * translation_mm
    poses = [RigidMotion(R, t) for R, t in zip(rotations, translations)]
    scans = [PointCloud(G.inverse().apply(model), f"scan{i}") for i, G in enumerate(poses)]
    return SyntheticScene(model, poses, scans)
