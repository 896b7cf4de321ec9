"""Ground truth and noisy pairwise observations for SE(d) synchronization.

Observations are stored as dense block arrays: ``S[i, j]`` is the ``d x d``
rotation comparison and ``s[i, j]`` the translation comparison of the pair
``(i, j)``; both grids include the trivial diagonal ``S_ii = I``, ``s_ii = 0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import IncompleteGraphError, InvalidInputError
from .geometry import RigidMotion, is_rotation, random_rotations

MIRRORED = "mirrored"
INDEPENDENT = "independent"
MIRROR_MODES = (MIRRORED, INDEPENDENT)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    rotations: np.ndarray  # (n, d, d)
    translations: np.ndarray  # (n, d), sums to zero

    def __post_init__(self):
        R = np.array(self.rotations, dtype=float)
        t = np.array(self.translations, dtype=float)
        if R.ndim != 3 or R.shape[1] != R.shape[2] or t.shape != R.shape[:2]:
            raise InvalidInputError(f"inconsistent shapes {R.shape} and {t.shape}")
        if not all(is_rotation(r, tol=1e-8) for r in R):
            raise InvalidInputError("ground-truth rotations must lie in SO(d)")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotations", R)
        object.__setattr__(self, "translations", t)

    @property
    def n(self) -> int:
        return self.rotations.shape[0]

    @property
    def d(self) -> int:
        return self.rotations.shape[1]

    @property
    def max_translation_norm(self) -> float:
        """``M_t = max_i ||t*_i||``."""
        return float(np.max(np.linalg.norm(self.translations, axis=1)))

    @property
    def motions(self) -> list[RigidMotion]:
        return [RigidMotion(R, t) for R, t in zip(self.rotations, self.translations)]

    @property
    def stacked_rotations(self) -> np.ndarray:
        """The ``(n*d, d)`` block column of rotations."""
        return self.rotations.reshape(self.n * self.d, self.d)

    @classmethod
    def from_motions(cls, motions: Sequence[RigidMotion], recenter: bool = True) -> "GroundTruth":
        """Build a ground truth from motions, optionally moving the gauge so sum(t) = 0.

        Recentering is a common left translation, which leaves every pairwise
        comparison unchanged.
        """
        R = np.stack([g.rotation for g in motions])
        t = np.stack([g.translation for g in motions])
        if recenter:
            t = t - t.mean(axis=0)
        return cls(R, t)


@dataclass(frozen=True, eq=False)
class ObservationSet:
    S: np.ndarray  # (n, n, d, d)
    s: np.ndarray  # (n, n, d)
    sigma1: float = math.nan
    sigma2: float = math.nan
    mirror_mode: str = MIRRORED

    def __post_init__(self):
        S = np.array(self.S, dtype=float)
        s = np.array(self.s, dtype=float)
        if S.ndim != 4 or S.shape[0] != S.shape[1] or S.shape[2] != S.shape[3]:
            raise InvalidInputError(f"S must have shape (n, n, d, d), got {S.shape}")
        if s.shape != S.shape[:3]:
            raise InvalidInputError(f"s must have shape {S.shape[:3]}, got {s.shape}")
        if self.mirror_mode not in MIRROR_MODES:
            raise InvalidInputError(f"unknown mirror mode {self.mirror_mode!r}")
        S.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "sigma1", float(self.sigma1))
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def d(self) -> int:
        return self.S.shape[2]

    @property
    def noise_known(self) -> bool:
        return not (math.isnan(self.sigma1) or math.isnan(self.sigma2))

    def block_matrix(self) -> np.ndarray:
        """The ``nd x nd`` matrix whose ``(i, j)`` block is ``S_ij``."""
        n, d = self.n, self.d
        return self.S.transpose(0, 2, 1, 3).reshape(n * d, n * d)

    def translation_block_matrix(self) -> np.ndarray:
        """The ``nd x n`` matrix whose ``(i, j)`` block is the column ``s_ij``."""
        n, d = self.n, self.d
        return self.s.transpose(0, 2, 1).reshape(n * d, n)


def generate_ground_truth(
    n: int, d: int, translation_scale: float, rng: np.random.Generator
) -> GroundTruth:
    """Haar rotations and i.i.d. Gaussian translations recentered to sum to zero."""
    if n < 2:
        raise InvalidInputError(f"need at least two motions, got n={n}")
    if d < 2:
        raise InvalidInputError(f"dimension must be >= 2, got {d}")
    if translation_scale < 0:
        raise InvalidInputError("translation_scale must be non-negative")
    rotations = random_rotations(rng, d, n)
    translations = rng.standard_normal((n, d)) * translation_scale
    translations -= translations.mean(axis=0)
    return GroundTruth(rotations, translations)


def clean_blocks(gt: GroundTruth) -> tuple[np.ndarray, np.ndarray]:
    """Noiseless comparisons ``S*_ij = R_i R_j^T`` and ``s*_ij = R_i (t_j - t_i)``."""
    R, t = gt.rotations, gt.translations
    S = np.einsum("iab,jcb->ijac", R, R)
    diff = t[None, :, :] - t[:, None, :]
    s = np.einsum("iab,ijb->ija", R, diff)
    return S, s


def synthesize_observations(
    gt: GroundTruth,
    sigma1: float,
    sigma2: float,
    rng: np.random.Generator,
    mirror_mode: str = MIRRORED,
) -> ObservationSet:
    """Add Gaussian noise to every off-diagonal comparison.

    In mirrored mode one draw per unordered pair ``i < j`` is made and the
    reverse pair gets ``S_ji = S_ij^T`` and ``s_ji = s*_ji - w_ij``. In
    independent mode every ordered pair ``i != j`` gets a fresh draw.
    Rotation noise is drawn before translation noise.
    """
    if sigma1 < 0 or sigma2 < 0:
        raise InvalidInputError("noise levels must be non-negative")
    if mirror_mode not in MIRROR_MODES:
        raise InvalidInputError(f"unknown mirror mode {mirror_mode!r}")
    n, d = gt.n, gt.d
    S, s = clean_blocks(gt)
    if mirror_mode == MIRRORED:
        iu, ju = np.triu_indices(n, 1)
        W = rng.standard_normal((iu.size, d, d)) * sigma1
        w = rng.standard_normal((iu.size, d)) * sigma2
        S[iu, ju] += W
        S[ju, iu] = np.transpose(S[iu, ju], (0, 2, 1))
        s[iu, ju] += w
        s[ju, iu] -= w
    else:
        W = rng.standard_normal((n, n, d, d)) * sigma1
        w = rng.standard_normal((n, n, d)) * sigma2
        idx = np.arange(n)
        W[idx, idx] = 0.0
        w[idx, idx] = 0.0
        S += W
        s += w
    idx = np.arange(n)
    S[idx, idx] = np.eye(d)
    s[idx, idx] = 0.0
    return ObservationSet(S, s, sigma1, sigma2, mirror_mode)


def observations_from_motions(relative) -> ObservationSet:
    """Observations from an ``n x n`` grid of relative motions ``C_ij``.

    ``relative[i][j]`` must be a :class:`RigidMotion` (or a homogeneous
    matrix) for every ``i != j``; the diagonal is ignored. The noise levels are
    unknown and recorded as NaN.
    """
    n = len(relative)
    if n < 2:
        raise InvalidInputError("need at least two poses")
    d = None
    S = s = None
    for i in range(n):
        if len(relative[i]) != n:
            raise IncompleteGraphError(f"row {i} has {len(relative[i])} entries, expected {n}")
        for j in range(n):
            if i == j:
                continue
            C = relative[i][j]
            if C is None:
                raise IncompleteGraphError(f"missing relative motion for pair ({i}, {j})")
            H = C.as_matrix() if isinstance(C, RigidMotion) else np.asarray(C, dtype=float)
            if d is None:
                d = H.shape[0] - 1
                S = np.zeros((n, n, d, d))
                s = np.zeros((n, n, d))
            if H.shape != (d + 1, d + 1):
                raise InvalidInputError(f"pair ({i}, {j}) has shape {H.shape}")
            S[i, j] = H[:d, :d]
            s[i, j] = H[:d, d]
    idx = np.arange(n)
    S[idx, idx] = np.eye(d)
    return ObservationSet(S, s, math.nan, math.nan, MIRRORED)


_HEADER = ["n", "d", "sigma1", "sigma2", "mirror_mode"]


def save_observations(obs: ObservationSet, path) -> None:
    """Write observations as CSV: a header row, a parameter row, then one row per pair.

    Pair rows are ``i, j, S_ij (row-major), s_ij``.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_HEADER)
        writer.writerow([obs.n, obs.d, repr(obs.sigma1), repr(obs.sigma2), obs.mirror_mode])
        for i in range(obs.n):
            for j in range(obs.n):
                row = [i, j]
                row.extend(repr(float(x)) for x in obs.S[i, j].ravel())
                row.extend(repr(float(x)) for x in obs.s[i, j])
                writer.writerow(row)


def load_observations(path) -> ObservationSet:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != _HEADER:
            raise InvalidInputError(f"unexpected header {header}")
        n_str, d_str, s1, s2, mode = next(reader)
        n, d = int(n_str), int(d_str)
        S = np.full((n, n, d, d), np.nan)
        s = np.full((n, n, d), np.nan)
        for row in reader:
            i, j = int(row[0]), int(row[1])
            values = np.array([float(x) for x in row[2:]])
            S[i, j] = values[: d * d].reshape(d, d)
            s[i, j] = values[d * d :]
    if np.isnan(S).any() or np.isnan(s).any():
        raise IncompleteGraphError(f"{path} does not list every pair")
    return ObservationSet(S, s, float(s1), float(s2), mode)
