"""Gauge alignment and error metrics.

Pairwise comparisons only determine the motions up to a common left factor
``Q = (P, p)``, which sends ``(R*_i, t*_i)`` to ``(R*_i P, P^T t*_i + p)``.
Errors are reported after fitting one such ``Q`` for all motions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .geometry import RigidMotion, geodesic_angle_deg, project_so
from .synthesis import GroundTruth

METRICS = ("max_se_error", "avg_rot_deg", "max_rot_deg", "avg_trans_err", "max_trans_err")


@dataclass(frozen=True)
class ErrorReport:
    method: str
    max_se_error: float
    avg_rot_deg: float
    max_rot_deg: float
    avg_trans_err: float
    max_trans_err: float
    alignment: RigidMotion

    def metrics(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in METRICS}


def _arrays(est):
    if isinstance(est, GroundTruth) or hasattr(est, "rotations"):
        return np.asarray(est.rotations), np.asarray(est.translations)
    R = np.stack([g.rotation for g in est])
    t = np.stack([g.translation for g in est])
    return R, t


def align_global(est, gt: GroundTruth) -> RigidMotion:
    """Common gauge ``Q`` bringing the ground truth onto the estimate.

    Rotation ``P = Pi_SO(sum_i R*_i^T R_hat_i)``; translation
    ``p = mean_i(t_hat_i - P^T t*_i)``.
    """
    R_hat, t_hat = _arrays(est)
    R, t = gt.rotations, gt.translations
    if R_hat.shape != R.shape:
        raise DimensionMismatchError(f"estimate {R_hat.shape} vs ground truth {R.shape}")
    P = project_so(np.einsum("iba,ibc->ac", R, R_hat))
    p = np.mean(t_hat - t @ P, axis=0)
    return RigidMotion(P, p)


def error_report(est, gt: GroundTruth, method: str | None = None) -> ErrorReport:
    R_hat, t_hat = _arrays(est)
    Q = align_global(est, gt)
    P, p = Q.rotation, Q.translation
    R_aligned = gt.rotations @ P
    t_aligned = gt.translations @ P + p
    rot_deg = np.array([geodesic_angle_deg(a, b) for a, b in zip(R_hat, R_aligned)])
    trans = np.linalg.norm(t_hat - t_aligned, axis=1)
    # homogeneous blocks are R^T, so ||R_hat^T - R_aligned^T||_F = ||R_hat - R_aligned||_F
    rot_fro2 = np.sum((R_hat - R_aligned) ** 2, axis=(1, 2))
    se = np.sqrt(rot_fro2 + trans**2)
    if method is None:
        method = getattr(est, "method", "")
    return ErrorReport(
        method=method,
        max_se_error=float(se.max()),
        avg_rot_deg=float(rot_deg.mean()),
        max_rot_deg=float(rot_deg.max()),
        avg_trans_err=float(trans.mean()),
        max_trans_err=float(trans.max()),
        alignment=Q,
    )
