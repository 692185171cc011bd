"""Control-affine SDE model, local linearization and moment propagation.

The model is ``dx = f(x) dt + G(x) (u dt + sigma dw)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DivergedError, NumericDomainError


@dataclass(frozen=True)
class ContinuousDynamics:
    """Drift ``f``, input map ``G`` and noise scale ``sigma``.

    ``jacobian`` optionally supplies ``df/dx`` analytically; otherwise
    :func:`linearize` uses central differences.
    """

    dim_x: int
    dim_u: int
    drift: Callable[[np.ndarray], np.ndarray]
    input_map: Callable[[np.ndarray], np.ndarray]
    sigma: float
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    name: str = "custom"

    def __post_init__(self):
        if self.dim_x < 1 or self.dim_u < 1:
            raise ConfigError("dim_x and dim_u must be positive")
        # sigma == 0 is admitted for deterministic simulation only
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ConfigError(f"sigma must be nonnegative and finite, got {self.sigma}")

    def f(self, x):
        out = np.asarray(self.drift(np.asarray(x, dtype=float)), dtype=float).reshape(-1)
        if out.shape != (self.dim_x,):
            raise ConfigError(f"drift returned shape {out.shape}, expected ({self.dim_x},)")
        return out

    def G(self, x):
        out = np.asarray(self.input_map(np.asarray(x, dtype=float)), dtype=float)
        out = out.reshape(self.dim_x, self.dim_u) if out.size == self.dim_x * self.dim_u else out
        if out.shape != (self.dim_x, self.dim_u):
            raise ConfigError(f"input_map returned shape {out.shape}, expected "
                              f"({self.dim_x}, {self.dim_u})")
        return out


@dataclass(frozen=True)
class Linearization:
    A: np.ndarray
    B: np.ndarray
    c: np.ndarray


@dataclass(frozen=True)
class GaussianMoments:
    mean: np.ndarray
    cov: np.ndarray


def single_integrator(sigma=1.0, dim=2):
    """``f = 0``, ``G = I``: velocity-controlled point robot."""
    zero = np.zeros(dim)
    eye = np.eye(dim)
    return ContinuousDynamics(
        dim_x=dim, dim_u=dim,
        drift=lambda x: zero,
        input_map=lambda x: eye,
        sigma=float(sigma),
        jacobian=lambda x: np.zeros((dim, dim)),
        name="single_integrator",
    )


_REGISTRY: dict[str, Callable[..., ContinuousDynamics]] = {
    "single_integrator": single_integrator,
}


def register_dynamics(name: str, factory: Callable[..., ContinuousDynamics]) -> None:
    """Make ``factory(**params)`` available to experiment configs as ``name``."""
    _REGISTRY[name] = factory


def make_dynamics(name: str, **params) -> ContinuousDynamics:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown dynamics {name!r}; known: {sorted(_REGISTRY)}") from None
    return factory(**params)


def linearize(dyn: ContinuousDynamics, x_n) -> Linearization:
    """Jacobian, noise input and offset of the drift at ``x_n``."""
    x_n = np.asarray(x_n, dtype=float).reshape(-1)
    if x_n.shape != (dyn.dim_x,):
        raise ConfigError(f"state has length {x_n.size}, expected {dyn.dim_x}")
    f0 = dyn.f(x_n)
    if not np.all(np.isfinite(f0)):
        raise NumericDomainError(f"non-finite drift at {x_n}")
    if dyn.jacobian is not None:
        A = np.asarray(dyn.jacobian(x_n), dtype=float).reshape(dyn.dim_x, dyn.dim_x)
    else:
        A = np.empty((dyn.dim_x, dyn.dim_x))
        for i in range(dyn.dim_x):
            step = 1e-6 * max(1.0, abs(x_n[i]))
            xp = x_n.copy()
            xm = x_n.copy()
            xp[i] += step
            xm[i] -= step
            fp, fm = dyn.f(xp), dyn.f(xm)
            if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
                raise NumericDomainError(f"non-finite drift near {x_n}")
            A[:, i] = (fp - fm) / (xp[i] - xm[i])
    if not np.all(np.isfinite(A)):
        raise NumericDomainError(f"non-finite Jacobian at {x_n}")
    B = dyn.sigma * dyn.G(x_n)
    c = f0 - A @ x_n
    return Linearization(A=A, B=B, c=c)


def _substeps(A, h, min_steps=10):
    # keep the RK4 step well inside the stability/accuracy region of A
    scale = float(np.abs(A).sum(axis=1).max()) if A.size else 0.0
    return max(min_steps, int(math.ceil(h * scale / 0.02)))


def propagate_moments(lin: Linearization, x_n, h: float, substeps: Optional[int] = None) -> GaussianMoments:
    """Integrate the linearized mean/covariance ODEs over ``[0, h]`` with RK4.

    Starts from ``mu(0) = x_n`` and ``Sigma(0) = 0``.
    """
    if not h > 0:
        raise ConfigError(f"h must be positive, got {h}")
    A, c = lin.A, lin.c
    Q = lin.B @ lin.B.T
    n_sub = substeps if substeps is not None else _substeps(A, h)
    dt = h / n_sub
    mu = np.asarray(x_n, dtype=float).reshape(-1).copy()
    S = np.zeros_like(A)

    def dmu(m):
        return A @ m + c

    def dS(s):
        As = A @ s
        return As + As.T + Q

    for _ in range(n_sub):
        k1, l1 = dmu(mu), dS(S)
        k2, l2 = dmu(mu + 0.5 * dt * k1), dS(S + 0.5 * dt * l1)
        k3, l3 = dmu(mu + 0.5 * dt * k2), dS(S + 0.5 * dt * l2)
        k4, l4 = dmu(mu + dt * k3), dS(S + dt * l3)
        mu = mu + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        S = S + (dt / 6.0) * (l1 + 2 * l2 + 2 * l3 + l4)
    S = 0.5 * (S + S.T)
    return GaussianMoments(mean=mu, cov=S)


@dataclass
class Trajectory:
    """Sampled path; iterating yields ``(time, state)`` pairs."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    collisions: int = 0

    def __len__(self):
        return len(self.times)

    def __iter__(self):
        return iter(zip(self.times, self.states))


def simulate_sde(dyn: ContinuousDynamics, x0, control, t_end: float, dt: float, seed,
                 step_filter=None, t0: float = 0.0) -> Trajectory:
    """Euler-Maruyama integration of the controlled SDE.

    ``control(t, x)`` is queried at the left end of every step with ``t``
    relative to the start of this call. ``seed`` may be an int or a
    ``numpy.random.Generator`` (which is advanced in place).
    ``step_filter(x, x_new)`` may replace a proposed step, returning the
    accepted state and whether a collision occurred.
    """
    if not (dt > 0 and t_end > 0) or dt > t_end * (1 + 1e-12):
        raise ConfigError("need 0 < dt <= t_end")
    rng = np.random.default_rng(seed)
    n_steps = int(math.floor(t_end / dt + 1e-9))
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    times = t0 + dt * np.arange(n_steps + 1)
    states = np.empty((n_steps + 1, dyn.dim_x))
    controls = np.zeros((n_steps + 1, dyn.dim_u))
    states[0] = x
    sqdt = math.sqrt(dt)
    collisions = 0
    for k in range(n_steps):
        t = k * dt
        u = np.asarray(control(t, x), dtype=float).reshape(dyn.dim_u)
        G = dyn.G(x)
        xi = rng.standard_normal(dyn.dim_u)
        x_new = x + (dyn.f(x) + G @ u) * dt + dyn.sigma * sqdt * (G @ xi)
        if not np.all(np.isfinite(x_new)):
            raise DivergedError(f"state diverged at t={t0 + (k + 1) * dt:g}",
                                last_state=x.copy(), time=t0 + k * dt)
        if step_filter is not None:
            x_new, hit = step_filter(x, x_new)
            collisions += int(hit)
        controls[k] = u
        x = x_new
        states[k + 1] = x
    if n_steps:
        controls[n_steps] = controls[n_steps - 1]
    return Trajectory(times=times, states=states, controls=controls, collisions=collisions)
