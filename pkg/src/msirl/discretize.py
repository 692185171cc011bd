"""Walled environments, state sampling and the passive transition matrix."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import artifacts, kernels
from .dynamics import ContinuousDynamics, linearize, propagate_moments
from .errors import ConfigError, ConstructionError, NumericDomainError


@dataclass(frozen=True)
class Room:
    rect: tuple  # (xmin, ymin, xmax, ymax)
    group: int

    def contains(self, pts, margin=0.0):
        pts = np.atleast_2d(pts)
        x0, y0, x1, y1 = self.rect
        return ((pts[:, 0] > x0 + margin) & (pts[:, 0] < x1 - margin)
                & (pts[:, 1] > y0 + margin) & (pts[:, 1] < y1 - margin))


@dataclass
class Environment:
    bounds: tuple
    walls: np.ndarray  # (W, 4) rows x1, y1, x2, y2
    rooms: list = field(default_factory=list)

    def __post_init__(self):
        self.walls = np.asarray(self.walls, dtype=float).reshape(-1, 4)
        x0, y0, x1, y1 = self.bounds
        w = self.walls
        inside = ((w[:, [0, 2]] >= x0) & (w[:, [0, 2]] <= x1)
                  & (w[:, [1, 3]] >= y0) & (w[:, [1, 3]] <= y1))
        if not inside.all():
            raise ConfigError("wall segment outside environment bounds")

    def segment_blocks(self, p, q) -> bool:
        """True when the straight segment ``p -> q`` touches a wall."""
        p = np.asarray(p, dtype=float)[:2].reshape(1, 2)
        q = np.asarray(q, dtype=float)[:2].reshape(1, 2)
        return bool(kernels.segments_blocked(p, q, self.walls)[0])

    def room_index(self, pt):
        for i, room in enumerate(self.rooms):
            if room.contains(pt)[0]:
                return i
        return -1

    def to_dict(self):
        return {
            "bounds": [float(v) for v in self.bounds],
            "walls": [[float(v) for v in w] for w in self.walls],
            "rooms": [{"rect": [float(v) for v in r.rect], "group": int(r.group)}
                      for r in self.rooms],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(bounds=tuple(float(v) for v in d["bounds"]),
                   walls=np.asarray(d["walls"], dtype=float).reshape(-1, 4),
                   rooms=[Room(tuple(float(v) for v in r["rect"]), int(r["group"]))
                          for r in d["rooms"]])


@dataclass(frozen=True)
class FractalRoomSpec:
    """Plus-of-pluses layout: up to 5 groups, each of up to 5 square rooms."""

    groups: int = 5
    rooms_per_group: int = 5
    room_size: float = 1.0
    door_width: float = 0.3

    def __post_init__(self):
        if not (1 <= self.groups <= 5 and 1 <= self.rooms_per_group <= 5):
            raise ConfigError("groups and rooms_per_group must be in 1..5")
        if not 0 < self.door_width < self.room_size:
            raise ConfigError("need 0 < door_width < room_size")


# center, east, north, west, south
_PLUS = [(0, 0), (1, 0), (0, 1), (-1, 0), (0, -1)]


def build_fractal_environment(spec: FractalRoomSpec) -> Environment:
    """Lay out rooms and walls; doors are centered in every shared wall."""
    cells = {}
    for g, (gdx, gdy) in enumerate(_PLUS[:spec.groups]):
        for rdx, rdy in _PLUS[:spec.rooms_per_group]:
            cell = (3 * (1 + gdx) + 1 + rdx, 3 * (1 + gdy) + 1 + rdy)
            cells[cell] = g
    ordered = sorted(cells, key=lambda c: (c[1], c[0]))
    ix0 = min(c[0] for c in ordered)
    iy0 = min(c[1] for c in ordered)
    s = float(spec.room_size)
    half = 0.5 * spec.door_width

    def corner(i, j):
        return (i - ix0) * s, (j - iy0) * s

    walls = []
    adjacency = {c: [] for c in ordered}
    for c in ordered:
        i, j = c
        x0, y0 = corner(i, j)
        x1, y1 = x0 + s, y0 + s
        # east and north edges: shared (with door) or exterior
        for nb, seg in (((i + 1, j), (x1, y0, x1, y1)), ((i, j + 1), (x0, y1, x1, y1))):
            if nb in cells:
                adjacency[c].append(nb)
                adjacency[nb].append(c)
                walls.extend(_split_door(seg, half))
            else:
                walls.append(seg)
        # west and south edges are only ever exterior here
        for nb, seg in (((i - 1, j), (x0, y0, x0, y1)), ((i, j - 1), (x0, y0, x1, y0))):
            if nb not in cells:
                walls.append(seg)
    _check_reachable(ordered, adjacency)
    nx_ = max(c[0] for c in ordered) - ix0 + 1
    ny_ = max(c[1] for c in ordered) - iy0 + 1
    rooms = []
    for c in ordered:
        x0, y0 = corner(*c)
        rooms.append(Room((x0, y0, x0 + s, y0 + s), cells[c]))
    return Environment(bounds=(0.0, 0.0, nx_ * s, ny_ * s), walls=np.array(walls), rooms=rooms)


def _split_door(seg, half):
    x0, y0, x1, y1 = seg
    mx, my = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    if x0 == x1:
        return [(x0, y0, x0, my - half), (x0, my + half, x0, y1)]
    return [(x0, y0, mx - half, y0), (mx + half, y0, x1, y0)]


def _check_reachable(cells, adjacency):
    seen = {cells[0]}
    queue = deque([cells[0]])
    while queue:
        for nb in adjacency[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    missing = [c for c in cells if c not in seen]
    if missing:
        raise ConstructionError(f"{len(missing)} rooms unreachable from the first room: {missing}")


@dataclass
class StateSet:
    points: np.ndarray
    room_of: np.ndarray

    def __len__(self):
        return len(self.points)

    def permuted(self, perm):
        perm = np.asarray(perm)
        return StateSet(self.points[perm].copy(), self.room_of[perm].copy())


def sample_states(env: Environment, per_room: int, seed: int) -> StateSet:
    """Uniform rejection sampling of ``per_room`` points strictly inside each room."""
    if per_room < 1:
        raise ConfigError("per_room must be >= 1")
    rng = np.random.default_rng(seed)
    pts, owner = [], []
    seen = set()
    for r, room in enumerate(env.rooms):
        x0, y0, x1, y1 = room.rect
        margin = 1e-9 * max(x1 - x0, y1 - y0)
        got = 0
        while got < per_room:
            p = rng.uniform((x0, y0), (x1, y1))
            key = (float(p[0]), float(p[1]))
            if not room.contains(p, margin)[0] or key in seen:
                continue
            seen.add(key)
            pts.append(p)
            owner.append(r)
            got += 1
    return StateSet(np.array(pts, dtype=float).reshape(-1, 2), np.array(owner, dtype=np.int64))


@dataclass
class MarkovChain:
    """Sampled states with a row-stochastic passive transition matrix ``P``."""

    states: StateSet
    P: sp.csr_matrix
    h: float

    @property
    def n(self):
        return self.P.shape[0]

    @property
    def T(self):
        """Column-stochastic transpose used by the wavelet construction."""
        return self.P.T.tocsr()


def build_markov_chain(dyn: ContinuousDynamics, states: StateSet, env: Environment | None,
                       h: float, trunc_mahalanobis: float = 3.0, backend=None) -> MarkovChain:
    """Truncated-Gaussian passive transitions with wall blocking.

    Row ``n`` weighs each candidate ``x_m`` by the density of the one-step
    Gaussian ``N(mu_n(h), Sigma_n(h))``; candidates beyond the Mahalanobis
    radius or whose segment from ``x_n`` hits a wall are dropped, the
    self-transition is always kept, and the row is normalized.
    """
    pts = np.asarray(states.points, dtype=float)
    n = len(pts)
    if n == 0:
        raise ConfigError("empty state set")
    if pts.shape[1] != dyn.dim_x:
        raise ConfigError(f"states have dimension {pts.shape[1]}, dynamics expect {dyn.dim_x}")
    if not h > 0 or not trunc_mahalanobis > 0:
        raise ConfigError("h and trunc_mahalanobis must be positive")
    tree = cKDTree(pts)
    r2 = trunc_mahalanobis ** 2
    rows, cols, logw = [], [], []
    for i in range(n):
        mom = propagate_moments(linearize(dyn, pts[i]), pts[i], h)
        try:
            L = np.linalg.cholesky(mom.cov)
        except np.linalg.LinAlgError:
            raise NumericDomainError(f"singular one-step covariance at state {i}") from None
        radius = trunc_mahalanobis * np.sqrt(np.linalg.eigvalsh(mom.cov).max())
        cand = np.array(sorted(set(tree.query_ball_point(mom.mean, radius * (1 + 1e-9))) | {i}),
                        dtype=np.int64)
        diff = pts[cand] - mom.mean
        y = np.linalg.solve(L, diff.T)
        d2 = np.einsum("ij,ij->j", y, y)
        keep = (d2 <= r2) | (cand == i)
        rows.append(np.full(keep.sum(), i, dtype=np.int64))
        cols.append(cand[keep])
        logw.append(-0.5 * d2[keep])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    logw = np.concatenate(logw)
    if env is not None and len(env.walls):
        off = rows != cols
        blocked = np.zeros(len(rows), dtype=bool)
        blocked[off] = kernels.segments_blocked(pts[rows[off], :2], pts[cols[off], :2],
                                                env.walls, backend=backend).astype(bool)
        rows, cols, logw = rows[~blocked], cols[~blocked], logw[~blocked]
    # per-row shift keeps the largest weight at 1 (the density normalizer cancels)
    row_max = np.full(n, -np.inf)
    np.maximum.at(row_max, rows, logw)
    w = np.exp(logw - row_max[rows])
    row_sum = np.bincount(rows, weights=w, minlength=n)
    P = sp.csr_matrix((w / row_sum[rows], (rows, cols)), shape=(n, n))
    P.sort_indices()
    return MarkovChain(states=states, P=P, h=float(h))


# --- persistence -----------------------------------------------------------

def save_environment(env: Environment, path):
    return artifacts.write_json(path, "environment", env.to_dict())


def load_environment(path) -> Environment:
    d = artifacts.read_json(path)
    return Environment.from_dict(d)


def save_states(states: StateSet, path):
    return artifacts.write_table(path, "states", {
        "index": np.arange(len(states), dtype=np.int64),
        "x": states.points[:, 0],
        "y": states.points[:, 1],
        "room": states.room_of.astype(np.int64),
    })


def load_states(path) -> StateSet:
    t = artifacts.read_table(path)
    pts = np.column_stack([t["x"].astype(float), t["y"].astype(float)])
    return StateSet(pts, t["room"].astype(np.int64))


def save_chain(chain: MarkovChain, directory, stem="chain"):
    d = Path(directory)
    artifacts.write_triplets(d / f"{stem}.csv", "chain", chain.P)
    artifacts.write_json(d / f"{stem}.json", "chain", {"n": int(chain.n), "h": chain.h})


def load_chain(directory, states: StateSet, stem="chain") -> MarkovChain:
    d = Path(directory)
    meta = artifacts.read_json(d / f"{stem}.json")
    n = int(meta["n"])
    P = artifacts.read_triplets(d / f"{stem}.csv", (n, n))
    P.sort_indices()
    return MarkovChain(states=states, P=P, h=float(meta["h"]))
