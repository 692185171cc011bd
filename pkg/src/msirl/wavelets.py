"""Diffusion-wavelet tree over a column-stochastic diffusion operator.

Level ``j`` stores the scaling basis ``[Phi_j]_{Phi_{j-1}}``, the wavelet
basis ``[Psi_{j-1}]_{Phi_{j-1}}`` completing it inside ``V_{j-1}``, and the
compressed dyadic power ``[T^(2^j)]_{Phi_j}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import artifacts
from .errors import ConfigError, ConstructionError


def orthonormalize(M, eps, method="qr"):
    """Epsilon-rank-revealing orthonormal basis for the columns of ``M``.

    Greedy column pivoting: the column with the largest residual norm is
    taken next, and the process stops when that norm is ``<= eps``.

    Args:
        M: (n, m) array.
        eps: residual-norm threshold.
        method: ``"qr"`` uses LAPACK's pivoted Householder QR; ``"mgs"`` is a
            modified Gram-Schmidt reference implementation.

    Returns:
        ``(Q, pivots)`` with ``Q`` of shape (n, k) and the k pivot columns.
    """
    M = np.asarray(M.toarray() if sp.issparse(M) else M, dtype=float)
    if method == "mgs":
        return _pivoted_mgs(M, eps)
    if M.size == 0:
        return np.zeros((M.shape[0], 0)), np.zeros(0, dtype=np.int64)
    Q, R, piv = sla.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    k = int(np.count_nonzero(diag > eps))
    # pivoted QR has nonincreasing |R_kk|; guard round-off anyway
    while k > 0 and diag[k - 1] <= eps:
        k -= 1
    sign = np.sign(np.diag(R)[:k])
    sign[sign == 0] = 1.0
    return Q[:, :k] * sign, piv[:k].astype(np.int64)


def _pivoted_mgs(M, eps):
    R = M.copy()
    n, m = R.shape
    norms2 = np.einsum("ij,ij->j", R, R)
    basis, piv = [], []
    active = np.ones(m, dtype=bool)
    for _ in range(min(n, m)):
        cand = np.where(active, norms2, -1.0)
        p = int(np.argmax(cand))
        nrm = np.sqrt(max(cand[p], 0.0))
        if nrm <= eps:
            break
        q = R[:, p] / nrm
        # one reorthogonalization pass against accumulated vectors
        for b in basis:
            q -= (b @ q) * b
        q /= np.linalg.norm(q)
        basis.append(q)
        piv.append(p)
        active[p] = False
        R -= np.outer(q, q @ R)
        norms2 = np.einsum("ij,ij->j", R, R)
    Q = np.column_stack(basis) if basis else np.zeros((n, 0))
    return Q, np.array(piv, dtype=np.int64)


def _complement(Phi, size):
    """Localized orthonormal basis of the orthogonal complement of ``Phi``.

    Pivoted QR of the residual projector ``I - Phi Phi^T`` applied to the
    identity columns; exactly ``size`` columns are kept.
    """
    proj = np.eye(Phi.shape[0]) - Phi @ Phi.T
    Q, R, _ = sla.qr(proj, mode="economic", pivoting=True)
    sign = np.sign(np.diag(R)[:size])
    sign[sign == 0] = 1.0
    return Q[:, :size] * sign


def _drop_small(M, tol):
    M = np.array(M, dtype=float, copy=True)
    M[np.abs(M) < tol] = 0.0
    return M


@dataclass
class WaveletLevel:
    scaling: np.ndarray  # [Phi_j]_{Phi_{j-1}}
    wavelet: np.ndarray  # [Psi_{j-1}]_{Phi_{j-1}}
    op: np.ndarray       # [T^(2^j)]_{Phi_j}
    pivots: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


@dataclass
class WaveletTree:
    levels: list
    epsilon: float
    n: int

    @property
    def dims(self):
        return [self.n] + [lv.scaling.shape[1] for lv in self.levels]

    @property
    def depth(self):
        return len(self.levels)

    def basis(self, j):
        """Unpacked scaling basis at level ``j``; level 0 is the identity."""
        if j == 0:
            return np.eye(self.n)
        return unpack(self, j)


def build_tree(T, epsilon: float = 1e-6, max_levels: int = 30, method: str = "qr") -> WaveletTree:
    """Build the tree by repeated compression and squaring of ``T``.

    ``T`` must be column-stochastic (``T = P.T`` for a row-stochastic ``P``).
    Recursion stops at a single scaling function or after ``max_levels``.
    """
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")
    Td = np.asarray(T.toarray() if sp.issparse(T) else T, dtype=float)
    n = Td.shape[0]
    if Td.shape != (n, n):
        raise ConfigError("T must be square")
    colsum = Td.sum(axis=0)
    if np.abs(colsum - 1).max() > 1e-12 or (Td < 0).any():
        raise ConfigError("T must be column-stochastic (columns summing to 1 within 1e-12)")
    drop = epsilon / n
    levels = []
    Tj = Td
    for _ in range(max_levels):
        Phi, piv = orthonormalize(Tj, epsilon, method=method)
        k = Phi.shape[1]
        if k == 0:
            raise ConstructionError("operator compressed to rank 0")
        m = Tj.shape[0]
        if k < m:
            Psi = _complement(Phi, m - k)
        else:
            Psi = np.zeros((m, 0))
        TP = Tj @ Phi
        Tnext = Phi.T @ (Tj @ TP)
        levels.append(WaveletLevel(scaling=_drop_small(Phi, drop), wavelet=_drop_small(Psi, drop),
                                   op=_drop_small(Tnext, drop), pivots=piv))
        Tj = levels[-1].op
        if k == 1:
            break
    return WaveletTree(levels=levels, epsilon=float(epsilon), n=n)


def unpack(tree: WaveletTree, j: int) -> np.ndarray:
    """``[Phi_j]_{Phi_0}`` as the product of the stored inter-level factors."""
    if not 1 <= j <= tree.depth:
        raise ConfigError(f"level {j} outside 1..{tree.depth}")
    out = tree.levels[0].scaling
    for lv in tree.levels[1:j]:
        out = out @ lv.scaling
    return out


def unpack_wavelets(tree: WaveletTree, l: int) -> np.ndarray:
    """Wavelets ``Psi_0 .. Psi_{l-1}`` in original coordinates, finest first."""
    if not 1 <= l <= tree.depth:
        raise ConfigError(f"level {l} outside 1..{tree.depth}")
    blocks = []
    basis = np.eye(tree.n)
    for j in range(l):
        blocks.append(basis @ tree.levels[j].wavelet)
        basis = basis @ tree.levels[j].scaling
    return np.hstack(blocks) if blocks else np.zeros((tree.n, 0))


def wavelet_levels(tree: WaveletTree, l: int) -> np.ndarray:
    """Level index of each column returned by :func:`unpack_wavelets`."""
    return np.concatenate([np.full(tree.levels[j].wavelet.shape[1], j, dtype=np.int64)
                           for j in range(l)]) if l else np.zeros(0, dtype=np.int64)


def score_wavelets(b, W) -> np.ndarray:
    """Overlap of each wavelet with the visitation counts: ``b^T |W|``."""
    b = np.asarray(b, dtype=float)
    if (b < 0).any():
        raise ConfigError("visitation counts must be nonnegative")
    W = np.asarray(W.toarray() if sp.issparse(W) else W, dtype=float)
    if W.shape[0] != b.shape[0]:
        raise ConfigError(f"b has length {b.shape[0]}, W has {W.shape[0]} rows")
    return b @ np.abs(W)


# --- persistence -----------------------------------------------------------

def save_tree(tree: WaveletTree, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for j, lv in enumerate(tree.levels, start=1):
        artifacts.write_triplets(d / f"scaling_{j}.csv", "wavelet-scaling", lv.scaling)
        artifacts.write_triplets(d / f"wavelet_{j}.csv", "wavelet-wavelet", lv.wavelet)
        artifacts.write_triplets(d / f"op_{j}.csv", "wavelet-op", lv.op)
    artifacts.write_json(d / "tree.json", "tree", {
        "epsilon": tree.epsilon, "dims": [int(x) for x in tree.dims]})


def load_tree(directory) -> WaveletTree:
    d = Path(directory)
    meta = artifacts.read_json(d / "tree.json")
    dims = [int(x) for x in meta["dims"]]
    levels = []
    for j in range(1, len(dims)):
        prev, cur = dims[j - 1], dims[j]
        levels.append(WaveletLevel(
            scaling=artifacts.read_triplets(d / f"scaling_{j}.csv", (prev, cur)).toarray(),
            wavelet=artifacts.read_triplets(d / f"wavelet_{j}.csv", (prev, prev - cur)).toarray(),
            op=artifacts.read_triplets(d / f"op_{j}.csv", (cur, cur)).toarray(),
        ))
    return WaveletTree(levels=levels, epsilon=float(meta["epsilon"]), n=dims[0])
