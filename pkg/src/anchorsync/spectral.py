"""Smallest eigenvectors of the data matrix, normalized to ``Phi^T Phi = n I``."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DegenerateSpectrumWarning, InvalidInputError

GAP_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    n: int
    d: int
    phi: np.ndarray  # (nd, d)
    eigenvalues: np.ndarray  # (d,) ascending
    next_eigenvalue: float  # lambda_{d+1}
    warnings: tuple[str, ...] = field(default=())

    @property
    def blocks(self) -> np.ndarray:
        """``Phi`` as an ``(n, d, d)`` array of blocks ``Phi_i``."""
        return self.phi.reshape(self.n, self.d, self.d)

    @property
    def gap(self) -> float:
        return float(self.next_eigenvalue - self.eigenvalues[-1])


def canonicalize_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each is positive (first on ties)."""
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def smallest_eigvecs(omega, d: int | None = None) -> SpectralBasis:
    """The ``d`` eigenvectors of ``omega`` with smallest eigenvalues.

    ``omega`` is a symmetric ``(nd, nd)`` array or a :class:`DataMatrix`. The
    columns are sorted by ascending eigenvalue, sign-canonicalized, and scaled
    so that ``Phi^T Phi = n I_d``. A :class:`DegenerateSpectrumWarning` is
    raised (and recorded on the basis) when ``lambda_{d+1} - lambda_d`` is
    below ``1e-10 * ||omega||_F``.
    """
    if hasattr(omega, "omega"):
        d = omega.d if d is None else d
        omega = omega.omega
    omega = np.asarray(omega, dtype=float)
    if d is None:
        raise InvalidInputError("block size d is required for a bare matrix")
    nd = omega.shape[0]
    if omega.shape != (nd, nd) or nd % d or nd // d < 2:
        raise InvalidInputError(f"cannot split a {omega.shape} matrix into {d}x{d} blocks")
    if not np.all(np.isfinite(omega)):
        raise InvalidInputError("data matrix has non-finite entries")
    n = nd // d
    values, vectors = scipy.linalg.eigh(omega, subset_by_index=[0, d])
    phi = canonicalize_signs(vectors[:, :d]) * np.sqrt(n)
    notes = []
    scale = np.linalg.norm(omega)
    if values[d] - values[d - 1] < GAP_RTOL * scale:
        msg = (
            f"eigenvalue gap {values[d] - values[d - 1]:.3e} is below "
            f"{GAP_RTOL:g} * ||Omega|| = {GAP_RTOL * scale:.3e}"
        )
        warnings.warn(msg, DegenerateSpectrumWarning, stacklevel=2)
        notes.append(msg)
    return SpectralBasis(n, d, phi, values[:d].copy(), float(values[d]), tuple(notes))
