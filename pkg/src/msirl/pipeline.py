"""Stage-wise orchestration of the full experiment.

Every stage reads its inputs from an artifact directory and writes its
outputs to another; ``run_pipeline`` chains them over one directory.
"""
from __future__ import annotations

import logging
import shutil
from pathlib import Path

import numpy as np

from . import artifacts, control, discretize, forward, irl, wavelets
from .config import ExperimentConfig
from .dynamics import make_dynamics
from .errors import ArtifactError, ConfigError

log = logging.getLogger("msirl")

STAGES = ("discretize", "forward", "wavelets", "irl", "control")


def goal_well_cost(points, goal, amplitude, length):
    d2 = np.sum((np.asarray(points) - np.asarray(goal)) ** 2, axis=1)
    return amplitude * (1.0 - np.exp(-d2 / (2.0 * length ** 2)))


def make_environment(cfg: ExperimentConfig) -> discretize.Environment:
    ec = cfg.environment
    if ec.path:
        return discretize.load_environment(ec.path)
    spec = discretize.FractalRoomSpec(groups=ec.groups, rooms_per_group=ec.rooms_per_group,
                                      room_size=ec.room_size, door_width=ec.door_width)
    return discretize.build_fractal_environment(spec)


def make_dyn(cfg: ExperimentConfig):
    params = dict(cfg.dynamics.params)
    params.setdefault("sigma", cfg.dynamics.sigma)
    return make_dynamics(cfg.dynamics.name, **params)


def true_cost(cfg: ExperimentConfig, env, states):
    goal = cfg.cost.goal
    if goal is None:
        x0, y0, x1, y1 = env.bounds
        goal = [0.5 * (x0 + x1), 0.5 * (y0 + y1)]
    return goal_well_cost(states.points, goal, cfg.cost.amplitude, cfg.cost.length)


def auto_start_level(dims):
    """Coarsest level reached before the feature count first stops shrinking."""
    for j in range(1, len(dims) - 1):
        if dims[j + 1] >= dims[j]:
            return j
    return len(dims) - 1


# --- stages ----------------------------------------------------------------

def stage_discretize(cfg: ExperimentConfig, in_dir, out_dir):
    out = Path(out_dir)
    env = make_environment(cfg)
    states = discretize.sample_states(env, cfg.sampling.per_room, cfg.sampling.seed)
    chain = discretize.build_markov_chain(make_dyn(cfg), states, env, cfg.dynamics.h, cfg.truncation)
    discretize.save_environment(env, out / "environment.json")
    discretize.save_states(states, out / "states.csv")
    discretize.save_chain(chain, out)
    log.info("discretize: %d states, %d transitions", chain.n, chain.P.nnz)


def _load_chain(in_dir):
    d = Path(in_dir)
    env = discretize.load_environment(d / "environment.json")
    states = discretize.load_states(d / "states.csv")
    return env, states, discretize.load_chain(d, states)


def stage_forward(cfg: ExperimentConfig, in_dir, out_dir):
    out = Path(out_dir)
    env, states, chain = _load_chain(in_dir)
    q = true_cost(cfg, env, states)
    sol = forward.solve_linear_bellman(chain, q)
    if cfg.demos.mode == "exact":
        demos = forward.make_demonstrations_exact(sol, cfg.demos.scale)
    else:
        demos = forward.make_demonstrations_sampled(sol, cfg.demos.n_transitions, cfg.demos.seed)
    artifacts.write_table(out / "cost.csv", "cost", {
        "index": np.arange(chain.n, dtype=np.int64), "q": q})
    forward.save_solution(sol, out)
    forward.save_demonstrations(demos, out)
    log.info("forward: c=%.6g, residual=%.2e", sol.c, sol.residual)


def stage_wavelets(cfg: ExperimentConfig, in_dir, out_dir):
    _, _, chain = _load_chain(in_dir)
    tree = wavelets.build_tree(chain.T, cfg.wavelets.epsilon, cfg.wavelets.max_levels)
    wavelets.save_tree(tree, Path(out_dir) / "tree")
    log.info("wavelets: dims %s", tree.dims)


def _grid_rows(states, values):
    return {"x": states.points[:, 0], "y": states.points[:, 1], "value": np.asarray(values, float)}


def stage_irl(cfg: ExperimentConfig, in_dir, out_dir):
    d, out = Path(in_dir), Path(out_dir)
    _, states, chain = _load_chain(d)
    truth = forward.load_solution(d)
    demos = forward.load_demonstrations(d)
    tree = wavelets.load_tree(d / "tree")
    ic = cfg.irl
    start = auto_start_level(tree.dims) if ic.start_level == "auto" else int(ic.start_level)
    if start > tree.depth:
        raise ConfigError(f"irl.start_level {start} exceeds tree depth {tree.depth}")
    if ic.end_level > start:
        raise ConfigError(f"irl.end_level {ic.end_level} is coarser than start level {start}")
    results = irl.hierarchical_solve(chain, demos, tree, start, ic.end_level, ic.tol, ic.max_iter)
    rows = {"level": [], "n_features": [], "iterations": [], "nll": [], "rms_error": []}
    for sol in results:
        j = sol.diagnostics["level"]
        rms = irl.rms_error(sol.v_hat, truth.v)
        irl.save_solution(sol, out, f"irl_level_{j}", rms=rms)
        artifacts.write_table(out / f"v_level_{j}.csv", "grid", _grid_rows(states, sol.v_hat))
        artifacts.write_table(out / f"q_level_{j}.csv", "grid", _grid_rows(states, sol.q_hat))
        rows["level"].append(j)
        rows["n_features"].append(sol.diagnostics["n_features"])
        rows["iterations"].append(sol.diagnostics["iterations"])
        rows["nll"].append(sol.diagnostics["nll"])
        rows["rms_error"].append(rms)
    artifacts.write_table(out / "levels.csv", "levels", {
        "level": np.array(rows["level"], dtype=np.int64),
        "n_features": np.array(rows["n_features"], dtype=np.int64),
        "iterations": np.array(rows["iterations"], dtype=np.int64),
        "nll": np.array(rows["nll"], dtype=float),
        "rms_error": np.array(rows["rms_error"], dtype=float),
    })
    meta = {"n_states": int(chain.n), "start_level": int(start), "end_level": int(ic.end_level),
            "tree_dims": [int(x) for x in tree.dims],
            # feature counts are relative to the sampled state count
            "feature_count_reference": "n_states"}
    by_level = {sol.diagnostics["level"]: sol for sol in results}
    if ic.augment_k:
        base_level = ic.augment_level or ic.end_level
        base = by_level.get(base_level)
        aug = irl.augment_and_solve(chain, demos, tree, base_level, ic.augment_k, base=base,
                                    tol=ic.tol, max_iter=ic.max_iter)
        irl.save_solution(aug, out, "irl_augmented", rms=irl.rms_error(aug.v_hat, truth.v))
        meta["augmented"] = {"level": int(base_level), "k": int(ic.augment_k)}
    if ic.full_basis:
        problem = irl.IrlProblem(chain, demos, None)
        full = irl.finalize(chain, problem, irl.newton_solve(problem, tol=ic.tol,
                                                             max_iter=ic.max_iter, level=0))
        irl.save_solution(full, out, "irl_full", rms=irl.rms_error(full.v_hat, truth.v))
    artifacts.write_json(out / "irl_run.json", "irl-run", meta)
    log.info("irl: levels %d..%d", start, ic.end_level)


def _policy_for_control(d: Path, chain, cfg):
    # prefer the richest recovered value function on disk
    for stem in ("irl_augmented", f"irl_level_{cfg.irl.end_level}", "irl_full"):
        if (d / f"{stem}.csv").is_file():
            sol = irl.load_solution(d, stem)
            return stem, irl.recover_policy(chain, sol.v_hat)
    return "truth", forward.load_solution(d).policy


def stage_control(cfg: ExperimentConfig, in_dir, out_dir):
    d = Path(in_dir)
    env, states, chain = _load_chain(d)
    cc = cfg.control
    source, policy = _policy_for_control(d, chain, cfg)
    if cc.x0 is not None:
        x0 = np.asarray(cc.x0, dtype=float)
    else:
        truth = forward.load_solution(d)
        x0 = states.points[int(np.argmax(truth.v))]
    rcfg = control.RhcConfig(k_rhc=cc.k_rhc, h=chain.h)
    traj = control.run_closed_loop(make_dyn(cfg), chain, policy, env, x0, rcfg,
                                   cc.t_end, cc.dt, cc.seed)
    control.save_trajectory(traj, out_dir, {
        "seed": int(cc.seed), "k_rhc": int(cc.k_rhc), "tau": rcfg.tau, "policy_source": source})
    log.info("control: %d steps, %d collisions", len(traj), traj.collisions)


STAGE_FUNCS = {
    "discretize": stage_discretize,
    "forward": stage_forward,
    "wavelets": stage_wavelets,
    "irl": stage_irl,
    "control": stage_control,
}


def run_stage(name, cfg: ExperimentConfig, in_dir, out_dir):
    """Run one stage; upstream artifacts are carried into ``out_dir``.

    Copying keeps every output directory self-contained, so stages chain
    through distinct directories as well as through a single one.
    """
    if name not in STAGE_FUNCS:
        raise ConfigError(f"unknown stage {name!r}")
    src, out = Path(in_dir), Path(out_dir)
    if not src.is_dir():
        raise ArtifactError(f"input directory {src} does not exist")
    out.mkdir(parents=True, exist_ok=True)
    if src.resolve() != out.resolve():
        shutil.copytree(src, out, dirs_exist_ok=True)
    cfg.save(out / "config.json")
    STAGE_FUNCS[name](cfg, in_dir, out)


def run_pipeline(cfg: ExperimentConfig, output_dir=None) -> Path:
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in STAGES:
        if name == "control" and not cfg.control.enabled:
            continue
        run_stage(name, cfg, out, out)
    return out
