"""Forward linearly-solvable MDP: desirability eigenproblem, optimal policy,
stationary occupancy and demonstration datasets."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from . import artifacts, kernels
from .discretize import MarkovChain
from .errors import ConfigError, ConvergenceError, StructureError

BELLMAN_RESIDUAL_TOL = 1e-9


@dataclass
class ForwardSolution:
    z: np.ndarray
    v: np.ndarray
    c: float
    policy: sp.csr_matrix
    iterations: int = 0
    residual: float = 0.0


@dataclass
class Demonstrations:
    a: np.ndarray  # destination visitation counts
    b: np.ndarray  # source visitation counts
    transitions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.transitions = np.asarray(self.transitions, dtype=np.int64).reshape(-1, 2)
        if (self.a < 0).any() or (self.b < 0).any():
            raise ConfigError("visitation counts must be nonnegative")
        if not np.isclose(self.a.sum(), self.b.sum(), rtol=1e-9, atol=0):
            raise ConfigError("sum(a) must equal sum(b)")

    @classmethod
    def from_transitions(cls, transitions, n):
        tr = np.asarray(transitions, dtype=np.int64).reshape(-1, 2)
        b = np.bincount(tr[:, 0], minlength=n).astype(float)
        a = np.bincount(tr[:, 1], minlength=n).astype(float)
        return cls(a=a, b=b, transitions=tr)


def check_irreducible(M, what="chain"):
    n_comp, labels = connected_components(sp.csr_matrix(M), directed=True, connection="strong")
    if n_comp > 1:
        sizes = np.bincount(labels)
        comps = [np.flatnonzero(labels == k).tolist() for k in range(n_comp)]
        raise StructureError(f"{what} is reducible: {n_comp} strongly connected components "
                             f"of sizes {sizes.tolist()}", components=comps)


def _perron_guess(M, left=False):
    """Perron vector estimate used to seed the power iteration."""
    n = M.shape[0]
    if n <= 2:
        return np.ones(n)
    op = M.T.tocsr() if left else M
    try:
        if n <= 300:
            w, V = np.linalg.eig(op.toarray())
            k = int(np.argmax(w.real))
        else:
            w, V = eigs(op, k=1, which="LR", tol=1e-14, maxiter=20 * n, v0=np.ones(n))
            k = 0
    except (ArpackNoConvergence, np.linalg.LinAlgError):
        return np.ones(n)
    x = np.abs(V[:, k].real)
    if not np.all(np.isfinite(x)) or x.sum() == 0:
        return np.ones(n)
    return np.maximum(x, 1e-300)


def _power_iteration(M, x0, tol, max_iter):
    x = x0 / x0.sum()
    change = np.inf
    for it in range(1, max_iter + 1):
        y = M @ x
        y /= y.sum()
        change = float(np.abs(y - x).max())
        x = y
        if change <= tol:
            return x, it, change
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations "
                           f"(last change {change:.3e})", residual=change)


def solve_linear_bellman(chain: MarkovChain, q, tol: float = 1e-12, max_iter: int = 100_000,
                         krylov_start: bool = True) -> ForwardSolution:
    """Principal eigenpair of ``diag(exp(-h q)) P`` and the induced policy.

    The power iteration is seeded with a Krylov estimate of the Perron
    vector (``krylov_start``) so that slowly mixing chains converge within
    the iteration budget; the fixed point and stopping test are unchanged.
    """
    q = np.asarray(q, dtype=float)
    P = chain.P
    if q.shape != (chain.n,) or not np.all(np.isfinite(q)):
        raise ConfigError("q must be a finite vector over states")
    check_irreducible(P)
    g = np.exp(-chain.h * q)
    M = sp.diags(g) @ P
    M = M.tocsr()
    x0 = _perron_guess(M) if krylov_start else np.ones(chain.n)
    z, it, _ = _power_iteration(M, x0, tol, max_iter)
    Mz = M @ z
    lam = Mz.sum() / z.sum()
    scale = z.max()
    z = z / scale
    Mz = Mz / scale
    c = float(-np.log(lam))
    residual = float(np.abs(lam * z - Mz).max())
    if residual > BELLMAN_RESIDUAL_TOL:
        raise ConvergenceError(f"Bellman residual {residual:.3e} above {BELLMAN_RESIDUAL_TOL}",
                               residual=residual)
    v = -np.log(z)
    v -= v.min()
    policy = optimal_policy(P, z)
    return ForwardSolution(z=z, v=v, c=c, policy=policy, iterations=it, residual=residual)


def optimal_policy(P, z) -> sp.csr_matrix:
    """Reweight each row of ``P`` by ``z`` of the successor and renormalize."""
    P = sp.csr_matrix(P)
    W = (P @ sp.diags(np.asarray(z, dtype=float))).tocsr()
    row = np.asarray(W.sum(axis=1)).ravel()
    pol = (sp.diags(1.0 / row) @ W).tocsr()
    pol.sort_indices()
    return pol


def stationary_distribution(policy, tol: float = 1e-13, max_iter: int = 100_000,
                            krylov_start: bool = True) -> np.ndarray:
    """Left Perron vector of a row-stochastic matrix, summing to one."""
    policy = sp.csr_matrix(policy)
    check_irreducible(policy, "policy")
    Mt = policy.T.tocsr()
    x0 = _perron_guess(policy, left=True) if krylov_start else np.ones(policy.shape[0])
    mu, _, _ = _power_iteration(Mt, x0, tol, max_iter)
    return mu / mu.sum()


def make_demonstrations_exact(solution: ForwardSolution, scale: float = 1.0) -> Demonstrations:
    """Infinite-sample counts from the occupancy measure of the optimal policy."""
    if not scale > 0:
        raise ConfigError("scale must be positive")
    mu = stationary_distribution(solution.policy)
    b = scale * mu
    a = scale * (solution.policy.T @ mu)
    gap = float(np.abs(a - b).max() / scale)
    if gap > 1e-9:
        raise ConvergenceError(f"occupancy measure not stationary (gap {gap:.3e})", residual=gap)
    return Demonstrations(a=a, b=b)


def sample_transitions(policy, n_transitions: int, seed, burn_in: int | None = None,
                       backend=None) -> np.ndarray:
    """Transitions ``(source, dest)`` along one trajectory under ``policy``."""
    if n_transitions < 1:
        raise ConfigError("n_transitions must be >= 1")
    policy = sp.csr_matrix(policy)
    policy.sort_indices()
    n = policy.shape[0]
    if burn_in is None:
        burn_in = int(min(1000, n_transitions // 10))
    rng = np.random.default_rng(seed)
    start = int(rng.integers(n))
    uniforms = rng.random(burn_in + n_transitions)
    cum = kernels.row_cumulative(policy.indptr, policy.data)
    path = kernels.sample_path(policy.indptr, policy.indices, cum, start, uniforms, backend=backend)
    path = path[burn_in:]
    return np.column_stack([path[:-1], path[1:]])


def make_demonstrations_sampled(solution: ForwardSolution, n_transitions: int, seed,
                                backend=None) -> Demonstrations:
    tr = sample_transitions(solution.policy, n_transitions, seed, backend=backend)
    return Demonstrations.from_transitions(tr, solution.policy.shape[0])


# --- persistence -----------------------------------------------------------

def save_solution(sol: ForwardSolution, directory, stem="forward"):
    d = Path(directory)
    artifacts.write_table(d / f"{stem}.csv", "forward", {
        "index": np.arange(len(sol.z), dtype=np.int64), "z": sol.z, "v": sol.v})
    artifacts.write_json(d / f"{stem}.json", "forward",
                         {"c": sol.c, "iterations": int(sol.iterations), "residual": sol.residual})
    artifacts.write_triplets(d / f"{stem}_policy.csv", "policy", sol.policy)


def load_solution(directory, stem="forward") -> ForwardSolution:
    d = Path(directory)
    t = artifacts.read_table(d / f"{stem}.csv")
    meta = artifacts.read_json(d / f"{stem}.json")
    n = len(t["z"])
    pol = artifacts.read_triplets(d / f"{stem}_policy.csv", (n, n))
    return ForwardSolution(z=t["z"].astype(float), v=t["v"].astype(float), c=float(meta["c"]),
                           policy=pol, iterations=int(meta.get("iterations", 0)),
                           residual=float(meta.get("residual", 0.0)))


def save_demonstrations(demos: Demonstrations, directory, stem="demos"):
    d = Path(directory)
    artifacts.write_table(d / f"{stem}.csv", "demos", {
        "source": demos.transitions[:, 0], "dest": demos.transitions[:, 1]})
    artifacts.write_json(d / f"{stem}.json", "demos", {
        "a": [float(x) for x in demos.a], "b": [float(x) for x in demos.b]})


def load_demonstrations(directory, stem="demos") -> Demonstrations:
    d = Path(directory)
    t = artifacts.read_table(d / f"{stem}.csv")
    meta = artifacts.read_json(d / f"{stem}.json")
    tr = np.column_stack([t["source"], t["dest"]]) if len(t["source"]) else np.zeros((0, 2))
    return Demonstrations(a=np.array(meta["a"]), b=np.array(meta["b"]), transitions=tr)
