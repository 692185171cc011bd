"""Text table and PGM heatmaps from a finished artifact directory."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import artifacts, discretize


def raster(env: discretize.Environment, states: discretize.StateSet, values, pixels_per_unit=16):
    """Nearest-state coloring on a grid; pixels outside every room are NaN."""
    x0, y0, x1, y1 = env.bounds
    w = max(1, int(round((x1 - x0) * pixels_per_unit)))
    h = max(1, int(round((y1 - y0) * pixels_per_unit)))
    xs = x0 + (np.arange(w) + 0.5) * (x1 - x0) / w
    ys = y1 - (np.arange(h) + 0.5) * (y1 - y0) / h  # top row first
    gx, gy = np.meshgrid(xs, ys)
    pix = np.column_stack([gx.ravel(), gy.ravel()])
    inside = np.zeros(len(pix), dtype=bool)
    for room in env.rooms:
        inside |= room.contains(pix)
    _, idx = cKDTree(states.points).query(pix)
    img = np.asarray(values, dtype=float)[idx]
    img[~inside] = np.nan
    return img.reshape(h, w)


def write_pgm(path, img, maxval=255):
    """ASCII PGM; NaN pixels are black, values map linearly onto 1..maxval."""
    path = Path(path)
    finite = np.isfinite(img)
    out = np.zeros(img.shape, dtype=np.int64)
    if finite.any():
        lo, hi = img[finite].min(), img[finite].max()
        if hi - lo > 1e-12 * max(1.0, abs(hi)):
            out[finite] = 1 + np.round((img[finite] - lo) / (hi - lo) * (maxval - 1)).astype(np.int64)
        else:
            out[finite] = maxval
    lines = ["P2", f"{img.shape[1]} {img.shape[0]}", str(maxval)]
    lines.extend(" ".join(str(v) for v in row) for row in out)
    path.write_text("\n".join(lines) + "\n")
    return path


def format_levels(levels: dict) -> str:
    head = f"{'level':>5} {'n_features':>10} {'iterations':>10} {'nll':>16} {'rms_error':>12}"
    rows = [head]
    for j, m, it, f, r in zip(levels["level"], levels["n_features"], levels["iterations"],
                              levels["nll"], levels["rms_error"]):
        rows.append(f"{int(j):>5} {int(m):>10} {int(it):>10} {float(f):>16.8g} {float(r):>12.6g}")
    return "\n".join(rows)


def render(in_dir, out_dir=None, pixels_per_unit=16) -> str:
    d = Path(in_dir)
    out = Path(out_dir) if out_dir else d
    out.mkdir(parents=True, exist_ok=True)
    env = discretize.load_environment(d / "environment.json")
    states = discretize.load_states(d / "states.csv")
    levels = artifacts.read_table(d / "levels.csv")
    for j in levels["level"]:
        for kind in ("v", "q"):
            grid = artifacts.read_table(d / f"{kind}_level_{int(j)}.csv")
            write_pgm(out / f"{kind}_level_{int(j)}.pgm",
                      raster(env, states, grid["value"], pixels_per_unit))
    for stem, name in (("forward.csv", "v"), ("cost.csv", "q")):
        if (d / stem).is_file():
            t = artifacts.read_table(d / stem)
            write_pgm(out / f"{name}_true.pgm", raster(env, states, t[name], pixels_per_unit))
    text = format_levels(levels)
    (out / "report.txt").write_text(text + "\n")
    return text
