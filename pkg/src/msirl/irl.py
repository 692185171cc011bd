"""Maximum-likelihood IRL for linearly-solvable MDPs with linear value features.

The negative log-likelihood of transitions with destination counts ``a``
and source counts ``b`` under value ``v = Phi w`` is::

    L(w) = a^T Phi w + b^T log(P exp(-Phi w))

It is convex in ``w``; gradient and Hessian are available in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import artifacts
from .discretize import MarkovChain
from .errors import ConfigError, ConvergenceError, SupportError
from .forward import Demonstrations, optimal_policy
from .wavelets import WaveletTree, score_wavelets, unpack, unpack_wavelets, wavelet_levels


def _is_sparse_diagonal(Phi):
    return sp.issparse(Phi) and Phi.shape[0] == Phi.shape[1] and (Phi - sp.diags(Phi.diagonal())).nnz == 0


@dataclass
class IrlProblem:
    chain: MarkovChain
    demos: Demonstrations
    features: object  # (n, m) ndarray or sparse matrix
    check_rank: bool = True

    def __post_init__(self):
        if self.features is None:
            self.features = sp.identity(self.chain.n, format="csr")
        Phi = self.features
        if not sp.issparse(Phi):
            Phi = self.features = np.asarray(Phi, dtype=float)
            if Phi.ndim == 1:
                Phi = self.features = Phi[:, None]
        if Phi.shape[0] != self.chain.n:
            raise ConfigError(f"features have {Phi.shape[0]} rows, chain has {self.chain.n} states")
        total = self.demos.b.sum()
        if not total > 0 or not math.isclose(self.demos.a.sum(), total, rel_tol=1e-9):
            raise ConfigError("need sum(a) == sum(b) > 0")
        if self.check_rank:
            _check_full_rank(Phi)

    @property
    def m(self):
        return self.features.shape[1]


def _check_full_rank(Phi, tol=1e-10):
    m = Phi.shape[1]
    if _is_sparse_diagonal(Phi):
        smin = float(np.abs(Phi.diagonal()).min())
    elif m <= 500:
        dense = Phi.toarray() if sp.issparse(Phi) else Phi
        smin = float(np.linalg.svd(dense, compute_uv=False).min()) if m else 1.0
    else:
        gram = Phi.T @ Phi
        gram = gram.toarray() if sp.issparse(gram) else gram
        smin = math.sqrt(max(float(np.linalg.eigvalsh(gram).min()), 0.0))
    if smin <= tol:
        raise ConfigError(f"feature matrix is rank deficient (smallest singular value {smin:.3e})")


def _row_log_partition(P, v):
    """``log(P exp(-v))`` with a per-row shift, plus the induced policy weights.

    Returns ``(log_r, pi)`` where ``pi`` holds ``p(x'|x) exp(-v(x')) / r(x)``
    laid out like ``P.data``.
    """
    rows = np.repeat(np.arange(P.shape[0]), np.diff(P.indptr))
    vj = v[P.indices]
    row_min = np.minimum.reduceat(vj, P.indptr[:-1])
    e = P.data * np.exp(-(vj - row_min[rows]))
    rt = np.add.reduceat(e, P.indptr[:-1])
    log_r = np.log(rt) - row_min
    return log_r, e / rt[rows]


def nll(problem: IrlProblem, w, order: int = 2):
    """Negative log-likelihood with gradient and Hessian.

    ``order`` selects how much is computed: 0 value only, 1 adds the
    gradient, 2 adds the Hessian. Returns a tuple of that length + 1.

    With ``Pi = diag(1/r) P diag(z)`` the induced policy, the gradient is
    ``Phi^T (a - Pi^T b)`` and the Hessian
    ``Phi^T (diag(Pi^T b) - Pi^T diag(b) Pi) Phi``.
    """
    Phi = problem.features
    P = problem.chain.P
    if not sp.isspmatrix_csr(P):
        P = sp.csr_matrix(P)
    a, b = problem.demos.a, problem.demos.b
    w = np.asarray(w, dtype=float)
    v = np.asarray(Phi @ w).ravel()
    if not np.all(np.isfinite(v)):
        raise SupportError("non-finite value function")
    log_r, pi_data = _row_log_partition(P, v)
    used = b > 0
    if not np.all(np.isfinite(log_r[used])):
        bad = np.flatnonzero(used & ~np.isfinite(log_r))
        raise SupportError(f"zero reachable desirability from demonstrated states {bad[:10].tolist()}")
    value = float(a @ v + b[used] @ log_r[used])
    if order == 0:
        return (value,)
    Pi = sp.csr_matrix((pi_data, P.indices, P.indptr), shape=P.shape)
    d = Pi.T @ b
    grad = np.asarray(Phi.T @ (a - d)).ravel()
    if order == 1:
        return value, grad
    if sp.issparse(Phi):
        Y = Pi @ Phi
        H = Phi.T @ sp.diags(d) @ Phi - Y.T @ sp.diags(b) @ Y
        H = H.toarray() if Phi.shape[1] <= 3000 else H.tocsc()
    else:
        Y = np.asarray(Pi @ Phi)
        H = Phi.T @ (d[:, None] * Phi) - Y.T @ (b[:, None] * Y)
    if not sp.issparse(H):
        H = 0.5 * (H + H.T)
    return value, grad, H


@dataclass
class IrlSolution:
    w: np.ndarray
    v_hat: np.ndarray = None
    q_hat: np.ndarray = None
    c_hat: float = None
    policy_hat: sp.csr_matrix = None
    diagnostics: dict = field(default_factory=dict)


def _solve_regularized(H, g):
    m = H.shape[0]
    if sp.issparse(H):
        lam = 1e-9 * float(H.diagonal().sum()) / m
        return spla.spsolve((H + lam * sp.identity(m, format="csc")).tocsc(), -g)
    lam = 1e-9 * float(np.trace(H)) / m
    A = H + lam * np.eye(m)
    try:
        return sla.cho_solve(sla.cho_factor(A, check_finite=False), -g, check_finite=False)
    except np.linalg.LinAlgError:
        return sla.solve(A, -g, assume_a="sym")


def newton_solve(problem: IrlProblem, w0=None, tol: float = 1e-9, max_iter: int = 200,
                 level=None) -> IrlSolution:
    """Damped Newton with Armijo backtracking; stops when ``|g|_inf <= tol``."""
    w = np.zeros(problem.m) if w0 is None else np.asarray(w0, dtype=float).copy()
    value, g, H = nll(problem, w)
    history = [value]
    it = 0
    while float(np.abs(g).max(initial=0.0)) > tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"Newton did not converge in {max_iter} iterations (|g|={np.abs(g).max():.3e})",
                residual=float(np.abs(g).max()),
                diagnostics={"nll": value, "iterations": it, "level": level})
        step = _solve_regularized(H, g)
        slope = float(g @ step)
        if not slope < 0:
            step, slope = -g, -float(g @ g)
        # accept changes below the round-off floor of the objective itself
        noise = 1e-13 * (abs(value) + float(problem.demos.b.sum()))
        t = 1.0
        for _ in range(60):
            try:
                trial = nll(problem, w + t * step, order=0)[0]
            except SupportError:
                trial = math.inf
            if math.isfinite(trial) and trial <= value + 1e-4 * t * slope + noise:
                break
            t *= 0.5
        else:
            raise ConvergenceError("line search failed after 60 halvings",
                                   residual=float(np.abs(g).max()),
                                   diagnostics={"nll": value, "iterations": it, "level": level})
        w = w + t * step
        value, g, H = nll(problem, w)
        history.append(value)
        it += 1
    sol = IrlSolution(w=w, diagnostics={
        "nll": value, "grad_norm": float(np.abs(g).max(initial=0.0)), "iterations": it,
        "level": level, "n_features": int(problem.m)})
    sol.diagnostics["history"] = history
    return sol


def finalize(chain: MarkovChain, problem: IrlProblem, sol: IrlSolution) -> IrlSolution:
    """Fill value, cost and policy from the weights."""
    v = np.asarray(problem.features @ sol.w).ravel()
    q_hat, c_hat = recover_cost(chain, v)
    sol.v_hat = v - v.mean()
    sol.q_hat = q_hat
    sol.c_hat = c_hat
    sol.policy_hat = recover_policy(chain, v)
    return sol


def hierarchical_solve(chain: MarkovChain, demos: Demonstrations, tree: WaveletTree,
                       start_level: int, end_level: int = 1, tol: float = 1e-9,
                       max_iter: int = 200, warm_start: bool = True) -> list[IrlSolution]:
    """Coarse-to-fine cascade; each level starts from the unpacked coarser solution.

    If a level fails the cascade stops and the error carries the finished
    levels in ``diagnostics["partial"]``.
    """
    if not (tree.depth >= start_level >= end_level >= 1):
        raise ConfigError(f"need depth({tree.depth}) >= start_level >= end_level >= 1")
    results = []
    w0 = None
    for j in range(start_level, end_level - 1, -1):
        problem = IrlProblem(chain, demos, unpack(tree, j), check_rank=False)
        try:
            sol = newton_solve(problem, w0, tol=tol, max_iter=max_iter, level=j)
        except ConvergenceError as exc:
            exc.diagnostics["partial"] = results
            raise
        results.append(finalize(chain, problem, sol))
        if warm_start and j > end_level:
            w0 = tree.levels[j - 1].scaling @ sol.w
        else:
            w0 = None
    return results


def select_wavelets(scores, levels, k):
    """Indices of the top-``k`` scores; ties go to the finer level, then lower index."""
    order = np.lexsort((np.arange(len(scores)), levels, -np.asarray(scores)))
    return np.sort(order[:k]) if k else np.zeros(0, dtype=np.int64)


def augment_and_solve(chain: MarkovChain, demos: Demonstrations, tree: WaveletTree, l: int,
                      k: int, base: IrlSolution | None = None, tol: float = 1e-9,
                      max_iter: int = 200) -> IrlSolution:
    """Add the ``k`` best-scoring wavelets below level ``l`` to ``Phi_l`` and re-solve."""
    Phi = unpack(tree, l)
    W = unpack_wavelets(tree, l)
    if not 0 <= k <= W.shape[1]:
        raise ConfigError(f"k must be in 0..{W.shape[1]}")
    if base is None:
        base = newton_solve(IrlProblem(chain, demos, Phi, check_rank=False), tol=tol,
                            max_iter=max_iter, level=l)
    scores = score_wavelets(demos.b, W)
    chosen = select_wavelets(scores, wavelet_levels(tree, l), k)
    features = np.hstack([Phi, W[:, chosen]])
    problem = IrlProblem(chain, demos, features, check_rank=False)
    w0 = np.concatenate([base.w, np.zeros(len(chosen))])
    sol = newton_solve(problem, w0, tol=tol, max_iter=max_iter, level="augmented")
    sol.diagnostics["base_level"] = int(l)
    sol.diagnostics["wavelets"] = [int(i) for i in chosen]
    return finalize(chain, problem, sol)


def recover_cost(chain: MarkovChain, v_hat):
    """Invert the linear Bellman equation for the cost rate.

    ``h q(x) = c + v(x) + log(P exp(-v))(x)``; the average cost is not
    identified, so the gauge ``min q = 0`` fixes it.

    Returns:
        ``(q_hat, c_hat)``.
    """
    v = np.asarray(v_hat, dtype=float)
    shift = v.min()
    s = v + np.log(chain.P @ np.exp(-(v - shift))) - shift
    c_hat = -float(s.min())
    q_hat = (s + c_hat) / chain.h
    return q_hat, c_hat


def recover_policy(chain: MarkovChain, v_hat) -> sp.csr_matrix:
    v = np.asarray(v_hat, dtype=float)
    return optimal_policy(chain.P, np.exp(-(v - v.min())))


def rms_error(v_hat, v_true) -> float:
    """Root-mean-square difference after mean-centering both sides."""
    x = np.asarray(v_hat, dtype=float)
    y = np.asarray(v_true, dtype=float)
    if x.shape != y.shape:
        raise ConfigError("length mismatch")
    d = (x - x.mean()) - (y - y.mean())
    return float(np.sqrt(np.mean(d * d)))


# --- persistence -----------------------------------------------------------

def save_solution(sol: IrlSolution, directory, stem, rms=None):
    d = Path(directory)
    artifacts.write_table(d / f"{stem}.csv", "irl", {
        "index": np.arange(len(sol.v_hat), dtype=np.int64),
        "v_hat": sol.v_hat, "q_hat": sol.q_hat})
    diag = {k: v for k, v in sol.diagnostics.items() if k != "history"}
    diag["rms_error"] = rms
    artifacts.write_json(d / f"{stem}.json", "irl", diag)


def load_solution(directory, stem) -> IrlSolution:
    d = Path(directory)
    t = artifacts.read_table(d / f"{stem}.csv")
    diag = artifacts.read_json(d / f"{stem}.json")
    diag.pop("schema", None)
    return IrlSolution(w=np.zeros(0), v_hat=t["v_hat"].astype(float),
                       q_hat=t["q_hat"].astype(float), diagnostics=diag)
