"""Receding-horizon continuous control from a discrete policy.

Over a horizon ``tau = h * k_rhc`` the controller steers the first moment
of the linearized SDE onto ``y_new``, the expected sampled state after
``k_rhc`` policy steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import artifacts, kernels
from .discretize import Environment, MarkovChain
from .dynamics import (ContinuousDynamics, Linearization, Trajectory, linearize,
                       propagate_moments, simulate_sde)
from .errors import ConfigError, NumericDomainError

# Pade (6,6) numerator coefficients; the denominator uses alternating signs
_PADE6 = (1.0, 1 / 2, 5 / 44, 1 / 66, 1 / 792, 1 / 15840, 1 / 665280)


def expm(A) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a (6,6) Pade approximant."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    norm = float(np.abs(A).sum(axis=1).max()) if n else 0.0
    s = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    X = A / (2.0 ** s)
    eye = np.eye(n)
    N = np.zeros_like(X)
    D = np.zeros_like(X)
    Xk = eye
    for k, ck in enumerate(_PADE6):
        if k:
            Xk = Xk @ X
        N += ck * Xk
        D += ((-1) ** k) * ck * Xk
    E = np.linalg.solve(D, N)
    for _ in range(s):
        E = E @ E
    return E


@dataclass(frozen=True)
class RhcConfig:
    k_rhc: int
    h: float
    replan_every: float | None = None

    def __post_init__(self):
        if self.k_rhc < 1 or not self.h > 0:
            raise ConfigError("k_rhc must be >= 1 and h > 0")

    @property
    def tau(self):
        return self.h * self.k_rhc

    @property
    def replan_interval(self):
        return self.tau if self.replan_every is None else self.replan_every


def nearest_state(chain: MarkovChain, x) -> int:
    pts = chain.states.points
    _, idx = cKDTree(pts).query(np.asarray(x, dtype=float)[: pts.shape[1]])
    return int(idx)


def expected_state(chain: MarkovChain, policy_hat, x_cur, k_rhc: int) -> np.ndarray:
    """Mean sampled state after ``k_rhc`` policy steps from the state nearest ``x_cur``."""
    if chain.n == 0:
        raise ConfigError("empty state set")
    start = nearest_state(chain, x_cur)
    p = np.zeros(chain.n)
    p[start] = 1.0
    Pt = sp.csr_matrix(policy_hat).T.tocsr()
    for _ in range(int(k_rhc)):
        p = Pt @ p
    return p @ chain.states.points


def rhc_control(dyn: ContinuousDynamics, lin: Linearization, x_cur, y_new, cfg: RhcConfig,
                G=None):
    """Moment-matching open-loop control on ``[0, tau)``.

    ``u(t) = -sigma^2 G^T exp(A^T (tau - t)) Sigma(tau)^{-1} (mu(tau) - y_new)``
    with ``mu, Sigma`` from the moment dynamics started at ``x_cur``.
    """
    x_cur = np.asarray(x_cur, dtype=float)
    tau = cfg.tau
    mom = propagate_moments(lin, x_cur, tau)
    cond = np.linalg.cond(mom.cov)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericDomainError(f"degenerate noise: Sigma(tau) condition number {cond:.3e}")
    G = dyn.G(x_cur) if G is None else np.asarray(G, dtype=float)
    lam = np.linalg.solve(mom.cov, mom.mean - np.asarray(y_new, dtype=float))
    gain = -(dyn.sigma ** 2) * G.T
    At = lin.A.T
    if not np.any(At):
        u_const = gain @ lam

        def control(t, x=None):
            return u_const
    else:
        def control(t, x=None):
            return gain @ (expm(At * (tau - t)) @ lam)
    control.mean_tau = mom.mean
    control.cov_tau = mom.cov
    return control


def wall_filter(env: Environment | None):
    """Step filter: drop the wall-normal part of a penetrating step.

    If the tangential remainder still crosses a wall the step is rejected.
    """
    if env is None or len(env.walls) == 0:
        return None
    walls = env.walls

    def step(x, x_new):
        if not env.segment_blocks(x, x_new):
            return x_new, False
        d = x_new - x
        p = np.asarray(x[:2]).reshape(1, 2)
        q = np.asarray(x_new[:2]).reshape(1, 2)
        hit = np.flatnonzero([kernels.segments_blocked(p, q, walls[k:k + 1])[0]
                              for k in range(len(walls))])
        w = walls[hit[0]]
        t = np.array([w[2] - w[0], w[3] - w[1]])
        t /= np.linalg.norm(t)
        slide = x.copy()
        slide[:2] = x[:2] + (d[:2] @ t) * t
        if len(x) > 2:
            slide[2:] = x_new[2:]
        if env.segment_blocks(x, slide):
            return x.copy(), True
        return slide, True

    return step


def run_closed_loop(dyn: ContinuousDynamics, chain: MarkovChain, policy_hat, env: Environment | None,
                    x0, cfg: RhcConfig, t_end: float, dt: float, seed) -> Trajectory:
    """Replan every horizon: target ``y_new``, apply the moment-matching control."""
    rng = np.random.default_rng(seed)
    x = np.asarray(x0, dtype=float).copy()
    step_filter = wall_filter(env)
    times, states, controls = [0.0], [x.copy()], []
    collisions = 0
    t = 0.0
    steps_per_plan = max(1, int(math.floor(cfg.replan_interval / dt + 1e-9)))
    total_steps = int(math.floor(t_end / dt + 1e-9))
    done = 0
    while done < total_steps:
        n_steps = min(steps_per_plan, total_steps - done)
        y_new = expected_state(chain, policy_hat, x, cfg.k_rhc)
        lin = linearize(dyn, x)
        u = rhc_control(dyn, lin, x, y_new, cfg)
        seg = simulate_sde(dyn, x, u, n_steps * dt, dt, rng, step_filter=step_filter, t0=t)
        collisions += seg.collisions
        times.extend(seg.times[1:])
        states.extend(seg.states[1:])
        controls.extend(seg.controls[:-1])
        x = seg.states[-1].copy()
        done += n_steps
        t = done * dt
    controls.append(controls[-1] if controls else np.zeros(dyn.dim_u))
    return Trajectory(times=np.asarray(times), states=np.asarray(states),
                      controls=np.asarray(controls), collisions=collisions)


def save_trajectory(traj: Trajectory, directory, meta: dict, stem="trajectory"):
    d = Path(directory)
    cols = {"t": traj.times, "x": traj.states[:, 0], "y": traj.states[:, 1]}
    for k in range(traj.controls.shape[1]):
        cols[f"u{k + 1}"] = traj.controls[:, k]
    artifacts.write_table(d / f"{stem}.csv", "trajectory", cols)
    artifacts.write_json(d / f"{stem}.json", "trajectory", {**meta, "collisions": int(traj.collisions)})
