"""Spectral estimators for SE(d) synchronization.

* :func:`ase` - the anchored spectral estimator: smallest eigenvectors of the
  full data matrix, each block rounded as ``Pi_SO(Phi_i Phi_1^T)``.
* :func:`two_stage` - rotations from the rotation comparisons alone (same
  anchored rounding), translations afterwards.
* :func:`naive_projection` - full data matrix, each block rounded as
  ``Pi_SO(Phi_i)``, optionally after flipping eigenvector signs.

All three share the closed-form translation step :func:`recover_translations`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .datamatrix import build_omega, build_rotation_only_omega, build_t_hat
from .errors import DimensionMismatchError, InvalidInputError
from .geometry import RigidMotion, project_so
from .spectral import SpectralBasis, smallest_eigvecs
from .synthesis import ObservationSet

ASE = "ase"
TWO_STAGE = "two-stage"
NAIVE = "naive"
NAIVE_NOFLIP = "naive-noflip"
METHODS = (ASE, TWO_STAGE, NAIVE, NAIVE_NOFLIP)

ANCHOR_FIRST = "first"
ANCHOR_MAX_NORM = "max-norm"


@dataclass(frozen=True, eq=False)
class EstimateSet:
    rotations: np.ndarray  # (n, d, d)
    translations: np.ndarray  # (n, d)
    method: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.rotations.shape[0]

    @property
    def d(self) -> int:
        return self.rotations.shape[1]

    @property
    def motions(self) -> list[RigidMotion]:
        return [RigidMotion(R, t) for R, t in zip(self.rotations, self.translations)]


def recover_translations(r_hat, t_hat_matrix) -> np.ndarray:
    """Optimal translations for fixed rotations: ``t = -(1/2n) vec(R^T T_hat)``.

    Returns an ``(n, d)`` array whose row ``i`` is
    ``-(1/2n) sum_k R_k^T T_hat[block k, column i]``.
    """
    r_hat = np.asarray(r_hat, dtype=float)
    t_hat_matrix = np.asarray(t_hat_matrix, dtype=float)
    n, d, _ = r_hat.shape
    if t_hat_matrix.shape != (n * d, n):
        raise DimensionMismatchError(
            f"T_hat must be {(n * d, n)} for {n} rotations of size {d}, got {t_hat_matrix.shape}"
        )
    blocks = t_hat_matrix.reshape(n, d, n)
    return -np.einsum("kab,kai->ib", r_hat, blocks) / (2.0 * n)


def anchor_index(blocks: np.ndarray, anchor: str = ANCHOR_FIRST) -> int:
    if anchor == ANCHOR_FIRST:
        return 0
    if anchor == ANCHOR_MAX_NORM:
        return int(np.argmax(np.linalg.norm(blocks, ord=2, axis=(1, 2))))
    raise InvalidInputError(f"unknown anchor rule {anchor!r}")


def round_anchored(blocks, anchor: int = 0) -> np.ndarray:
    """``R_i = Pi_SO(Phi_i Phi_a^T)`` for every block; invariant to ``Phi -> Phi O``."""
    blocks = np.asarray(blocks, dtype=float)
    ref = blocks[anchor]
    return np.stack([project_so(b @ ref.T) for b in blocks])


def choose_sign_flip(blocks) -> np.ndarray:
    """Column signs maximizing the number of blocks with positive determinant.

    All ``2^d`` sign vectors are tried in lexicographic order starting from
    ``(+1, ..., +1)``; the first one reaching the maximum count wins.
    """
    blocks = np.asarray(blocks, dtype=float)
    d = blocks.shape[1]
    dets = np.linalg.det(blocks)
    best, best_count = None, -1
    for signs in itertools.product((1.0, -1.0), repeat=d):
        count = int(np.sum(dets * np.prod(signs) > 0))
        if count > best_count:
            best, best_count = np.array(signs), count
    return best


def _finish(obs, basis: SpectralBasis, rotations, method, **extra) -> EstimateSet:
    translations = recover_translations(rotations, build_t_hat(obs))
    diagnostics = {
        "eigenvalues": basis.eigenvalues,
        "next_eigenvalue": basis.next_eigenvalue,
        "warnings": basis.warnings,
        **extra,
    }
    return EstimateSet(rotations, translations, method, diagnostics)


def ase(obs: ObservationSet, anchor: str = ANCHOR_FIRST) -> EstimateSet:
    """Anchored spectral estimator."""
    basis = smallest_eigvecs(build_omega(obs))
    a = anchor_index(basis.blocks, anchor)
    return _finish(obs, basis, round_anchored(basis.blocks, a), ASE, anchor=a)


def two_stage(obs: ObservationSet) -> EstimateSet:
    """Rotations from ``2n I - (S + S^T)`` only, then the closed-form translations."""
    basis = smallest_eigvecs(build_rotation_only_omega(obs), obs.d)
    return _finish(obs, basis, round_anchored(basis.blocks, 0), TWO_STAGE)


def naive_projection(obs: ObservationSet, sign_flip: bool = True) -> EstimateSet:
    """Project each eigenvector block onto SO(d) without anchoring."""
    basis = smallest_eigvecs(build_omega(obs))
    blocks = basis.blocks
    signs = np.ones(obs.d)
    if sign_flip:
        signs = choose_sign_flip(blocks)
        blocks = blocks * signs
    rotations = np.stack([project_so(b) for b in blocks])
    method = NAIVE if sign_flip else NAIVE_NOFLIP
    return _finish(obs, basis, rotations, method, signs=signs)


def estimate(obs: ObservationSet, method: str) -> EstimateSet:
    if method == ASE:
        return ase(obs)
    if method == TWO_STAGE:
        return two_stage(obs)
    if method == NAIVE:
        return naive_projection(obs, sign_flip=True)
    if method == NAIVE_NOFLIP:
        return naive_projection(obs, sign_flip=False)
    raise InvalidInputError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
