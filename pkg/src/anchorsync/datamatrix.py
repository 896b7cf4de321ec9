"""Assembly of the reduced rotation-only data matrix.

Eliminating the translations from the least-squares problem leaves the
quadratic form ``tr(R^T Omega R)`` with

    Omega = 2n I - 2S + Sigma_hat - (1 / 2n) T_hat T_hat^T

where ``T_hat = BlkDiag(sum_j s_1j, ..., sum_j s_nj) - s`` and
``Sigma_hat = BlkDiag(sum_j s_1j s_1j^T, ...)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .synthesis import ObservationSet


@dataclass(frozen=True, eq=False)
class DataMatrix:
    n: int
    d: int
    omega: np.ndarray  # (nd, nd), symmetric
    t_hat: np.ndarray  # (nd, n)
    sigma_hat: np.ndarray  # (nd, nd), block diagonal


def block_diag_columns(vectors: np.ndarray) -> np.ndarray:
    """``(n, d)`` vectors -> the ``(nd, n)`` matrix ``BlkDiag(v_1, ..., v_n)``."""
    n, d = vectors.shape
    out = np.zeros((n * d, n))
    for i in range(n):
        out[i * d : (i + 1) * d, i] = vectors[i]
    return out


def block_diag_square(blocks: np.ndarray) -> np.ndarray:
    """``(n, d, d)`` blocks -> the ``(nd, nd)`` block-diagonal matrix."""
    n, d, _ = blocks.shape
    out = np.zeros((n * d, n * d))
    for i in range(n):
        out[i * d : (i + 1) * d, i * d : (i + 1) * d] = blocks[i]
    return out


def build_t_hat(obs: ObservationSet) -> np.ndarray:
    # diagonal block i: sum_j s_ij - s_ii; off-diagonal block (i, j): -s_ij
    row_sums = obs.s.sum(axis=1)
    return block_diag_columns(row_sums) - obs.translation_block_matrix()


def build_sigma_hat(obs: ObservationSet) -> np.ndarray:
    blocks = np.einsum("ija,ijb->iab", obs.s, obs.s)
    return block_diag_square(blocks)


def build_omega(obs: ObservationSet) -> DataMatrix:
    n, d = obs.n, obs.d
    t_hat = build_t_hat(obs)
    sigma_hat = build_sigma_hat(obs)
    omega = (
        2.0 * n * np.eye(n * d)
        - 2.0 * obs.block_matrix()
        + sigma_hat
        - (t_hat @ t_hat.T) / (2.0 * n)
    )
    omega = 0.5 * (omega + omega.T)
    return DataMatrix(n, d, omega, t_hat, sigma_hat)


def build_rotation_only_omega(obs: ObservationSet) -> np.ndarray:
    """``2n I - (S + S^T)``: the data matrix with every translation term dropped."""
    n, d = obs.n, obs.d
    S = obs.block_matrix()
    return 2.0 * n * np.eye(n * d) - (S + S.T)


def save_matrix_txt(matrix: np.ndarray, path) -> None:
    """Plain-text dump: a ``rows cols`` header, then space-separated rows."""
    matrix = np.asarray(matrix, dtype=float)
    with open(path, "w") as fh:
        fh.write(f"{matrix.shape[0]} {matrix.shape[1]}\n")
        for row in matrix:
            fh.write(" ".join(repr(float(x)) for x in row))
            fh.write("\n")


def load_matrix_txt(path) -> np.ndarray:
    with open(path) as fh:
        rows, cols = (int(x) for x in fh.readline().split())
        data = np.loadtxt(fh, ndmin=2)
    return data.reshape(rows, cols)
