"""Rotation and rigid-motion primitives.

Rotations are plain ``(d, d)`` numpy arrays. A rigid motion ``G = (R, t)`` is
stored as its rotation ``R`` and translation ``t``; its homogeneous form is

    [[R.T, t],
     [0,   1]]

so ``G`` acts on a point ``x`` as ``R.T @ x + t``. Under this convention the
relative motion ``G_i^{-1} G_j`` has homogeneous top-left block ``R_i R_j^T``
and translation ``R_i (t_j - t_i)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateProjectionWarning, DimensionMismatchError, InvalidInputError

ROTATION_TOL = 1e-10
# relative gap below which the two smallest singular values count as tied
_TIE_RTOL = 1e-10


def _as_square(M, name="M") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"{name} must be a square matrix, got shape {M.shape}")
    if M.shape[0] < 2:
        raise InvalidInputError(f"dimension must be >= 2, got {M.shape[0]}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return M


def project_so(M, *, warn: bool = True) -> np.ndarray:
    """Nearest special-orthogonal matrix to ``M`` in Frobenius norm.

    With ``M = U diag(s) V^T`` (singular values descending) the result is
    ``U diag(1, ..., 1, det(U V^T)) V^T``. When the nearest rotation is not
    unique (reflection needed and the two smallest singular values tie) the
    SVD's own ordering decides and a :class:`DegenerateProjectionWarning` is
    emitted.
    """
    M = _as_square(M)
    U, s, Vt = np.linalg.svd(M)
    sign = np.linalg.det(U @ Vt)
    if sign < 0:
        if warn and s[-2] - s[-1] <= _TIE_RTOL * max(s[0], np.finfo(float).tiny):
            warnings.warn(
                "nearest rotation is not unique; using the SVD ordering",
                DegenerateProjectionWarning,
                stacklevel=2,
            )
        U = U.copy()
        U[:, -1] *= -1.0
    return U @ Vt


def project_so_blockwise(Y, d: int | None = None, *, warn: bool = True) -> np.ndarray:
    """Project every ``d x d`` block of ``Y`` onto SO(d).

    ``Y`` may be an ``(n*d, d)`` stacked matrix or an ``(n, d, d)`` array of
    blocks. Returns an ``(n, d, d)`` array.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 2:
        d = Y.shape[1] if d is None else d
        if Y.shape[0] % d:
            raise InvalidInputError(f"{Y.shape[0]} rows do not split into blocks of {d}")
        Y = Y.reshape(-1, d, d)
    if Y.ndim != 3 or Y.shape[1] != Y.shape[2]:
        raise InvalidInputError(f"expected stacked square blocks, got shape {Y.shape}")
    return np.stack([project_so(block, warn=warn) for block in Y])


def is_rotation(M, tol: float = ROTATION_TOL) -> bool:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or not np.all(np.isfinite(M)):
        return False
    d = M.shape[0]
    return (
        np.linalg.norm(M.T @ M - np.eye(d)) <= tol
        and abs(np.linalg.det(M) - 1.0) <= tol
    )


def random_rotations(rng: np.random.Generator, d: int, size: int) -> np.ndarray:
    """Draw ``size`` Haar-distributed rotations as an ``(size, d, d)`` array.

    QR of a standard Gaussian matrix with the column signs fixed so that the
    triangular factor has a positive diagonal gives a Haar element of O(d);
    flipping the first column of the ones with determinant -1 maps them to
    SO(d) without disturbing the distribution.
    """
    if d < 2:
        raise InvalidInputError(f"dimension must be >= 2, got {d}")
    Z = rng.standard_normal((size, d, d))
    Q, R = np.linalg.qr(Z)
    signs = np.sign(np.diagonal(R, axis1=1, axis2=2))
    signs[signs == 0] = 1.0
    Q = Q * signs[:, None, :]
    negative = np.linalg.det(Q) < 0
    Q[negative, :, 0] *= -1.0
    return Q


def random_rotation(rng: np.random.Generator, d: int) -> np.ndarray:
    return random_rotations(rng, d, 1)[0]


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """3D rotation by ``angle`` radians about ``axis`` (Rodrigues formula)."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def planar_rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def geodesic_angle_deg(R1, R2) -> float:
    """Angle in degrees between two rotations.

    For d in {2, 3} this is ``arccos((tr(R1^T R2) - (d - 2)) / 2)``, evaluated
    through ``atan2`` of the skew and trace parts so that tiny angles keep full
    precision. For d > 3 it is the root-sum-square of the principal angles,
    ``||log(R1^T R2)||_F / sqrt(2)``.
    """
    R1 = np.asarray(R1, dtype=float)
    R2 = np.asarray(R2, dtype=float)
    if R1.shape != R2.shape:
        raise DimensionMismatchError(f"shapes differ: {R1.shape} vs {R2.shape}")
    d = R1.shape[0]
    A = R1.T @ R2
    if d == 2:
        angle = math.atan2(abs(A[1, 0] - A[0, 1]) / 2.0, (A[0, 0] + A[1, 1]) / 2.0)
    elif d == 3:
        skew = np.array([A[2, 1] - A[1, 2], A[0, 2] - A[2, 0], A[1, 0] - A[0, 1]])
        angle = math.atan2(np.linalg.norm(skew) / 2.0, (np.trace(A) - 1.0) / 2.0)
    else:
        log = scipy.linalg.logm(A)
        angle = float(np.linalg.norm(np.real(log))) / math.sqrt(2.0)
    return min(max(math.degrees(angle), 0.0), 180.0)


@dataclass(frozen=True, eq=False)
class RigidMotion:
    """Rotation ``R`` and translation ``t`` with homogeneous form ``[[R.T, t], [0, 1]]``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = _as_square(self.rotation, "rotation").copy()
        t = np.asarray(self.translation, dtype=float).reshape(-1).copy()
        if t.shape[0] != R.shape[0]:
            raise DimensionMismatchError(
                f"translation has length {t.shape[0]}, rotation is {R.shape[0]}x{R.shape[0]}"
            )
        if not np.all(np.isfinite(t)):
            raise InvalidInputError("translation has non-finite entries")
        if not is_rotation(R, tol=1e-8):
            raise InvalidInputError("rotation is not in SO(d)")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def d(self) -> int:
        return self.rotation.shape[0]

    @classmethod
    def identity(cls, d: int) -> "RigidMotion":
        return cls(np.eye(d), np.zeros(d))

    @classmethod
    def from_matrix(cls, H) -> "RigidMotion":
        H = np.asarray(H, dtype=float)
        d = H.shape[0] - 1
        if H.shape != (d + 1, d + 1):
            raise InvalidInputError(f"expected a square homogeneous matrix, got {H.shape}")
        return cls(H[:d, :d].T, H[:d, d])

    def as_matrix(self) -> np.ndarray:
        d = self.d
        H = np.eye(d + 1)
        H[:d, :d] = self.rotation.T
        H[:d, d] = self.translation
        return H

    def inverse(self) -> "RigidMotion":
        # [[R^T, t]]^{-1} = [[R, -R t]]
        return RigidMotion(self.rotation.T, -self.rotation @ self.translation)

    def compose(self, other: "RigidMotion") -> "RigidMotion":
        """Homogeneous product ``self @ other``."""
        _check_same_d(self, other)
        return RigidMotion(
            other.rotation @ self.rotation,
            self.rotation.T @ other.translation + self.translation,
        )

    def apply(self, points) -> np.ndarray:
        """Map ``(m, d)`` points (or a single point) through the motion."""
        points = np.asarray(points, dtype=float)
        return points @ self.rotation + self.translation

    def __matmul__(self, other: "RigidMotion") -> "RigidMotion":
        return self.compose(other)

    def __repr__(self) -> str:
        return f"RigidMotion(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def _check_same_d(*motions: RigidMotion) -> None:
    dims = {g.d for g in motions}
    if len(dims) > 1:
        raise DimensionMismatchError(f"motions of different dimensions: {sorted(dims)}")


def compose(G1: RigidMotion, G2: RigidMotion) -> RigidMotion:
    return G1.compose(G2)


def invert(G: RigidMotion) -> RigidMotion:
    return G.inverse()


def relative(Gi: RigidMotion, Gj: RigidMotion) -> RigidMotion:
    """``Gi^{-1} Gj``: homogeneous block ``R_i R_j^T`` and translation ``R_i (t_j - t_i)``."""
    _check_same_d(Gi, Gj)
    Ri, Rj = Gi.rotation, Gj.rotation
    return RigidMotion(Rj @ Ri.T, Ri @ (Gj.translation - Gi.translation))
