"""Parameter sweeps over the Cartesian product of a grid, with per-point seeds."""
import csv
import hashlib
import io
import itertools
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .connectome import build_sparse
from .engine import run
from .errors import ConfigError
from .observables import fc, fc_fit

ENGINE_PARAMS = {"G": "G", "conduction_speed": "conduction_speed", "speed": "conduction_speed",
                 "sigma": "noise_sigma", "noise_sigma": "noise_sigma"}


def point_seed(base_seed, names, values):
    """64-bit seed from a hash of the base seed and the grid coordinates."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", int(base_seed) & 0xFFFFFFFFFFFFFFFF))
    for n, v in zip(names, values):
        h.update(n.encode() + b"\0" + struct.pack("<d", float(v)))
    return int.from_bytes(h.digest(), "little")


def parse_grid(specs):
    """``["G=0.1,0.2", "sigma=0,0.01"]`` -> ``[("G", [0.1, 0.2]), ("sigma", [0.0, 0.01])]``."""
    grid = []
    for s in specs:
        name, sep, vals = s.partition("=")
        if not sep or not name.strip() or not vals.strip():
            raise ConfigError(f"bad grid spec {s!r}; expected param=v1,v2,...")
        try:
            values = [float(v) for v in vals.split(",")]
        except ValueError:
            raise ConfigError(f"bad grid value in {s!r}") from None
        grid.append((name.strip(), values))
    return grid


def check_grid(model, grid):
    names = [n for n, _ in grid]
    if len(set(names)) != len(names):
        raise ConfigError("grid parameters must be distinct")
    for n, values in grid:
        if n not in ENGINE_PARAMS and n not in model.param_names:
            raise ConfigError(f"unknown sweep parameter {n!r}; use G, conduction_speed, sigma "
                              f"or one of {', '.join(model.param_names)}")
        if not values:
            raise ConfigError(f"grid parameter {n!r} has no values")


def grid_points(grid):
    """Grid coordinates in lexicographic order (each axis sorted by value)."""
    axes = [sorted(values) for _, values in grid]
    return list(itertools.product(*axes))


@dataclass
class SweepTable:
    names: list
    rows: list  # dicts: coordinates, seed, summary keys, runtime

    def to_csv(self, timing=False):
        summary_keys = [k for k in self.rows[0]["summary"]] if self.rows else []
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*self.names, *summary_keys, "seed", *(["runtime_s"] if timing else [])])
        for r in self.rows:
            w.writerow([*(repr(float(v)) for v in r["coords"]),
                        *(repr(float(r["summary"][k])) for k in summary_keys),
                        str(r["seed"]),
                        *([f"{r['runtime']:.6f}"] if timing else [])])
        return buf.getvalue()


def mean_activity(out):
    """Default summary: mean over regions and samples of the first monitor."""
    ts = next(iter(out.series.values()))
    return {"mean": float(ts.data.mean()) if ts.data.size else float("nan")}


def fc_fit_summary(empirical, discard=0):
    def reduce(out):
        ts = next(iter(out.series.values()))
        return {"fc_fit": fc_fit(fc(ts, discard), empirical)}
    return reduce


def sweep(model, connectome, base_cfg, grid, monitors, reduction=mean_activity, params=None,
          parallel=1, weight_threshold=0.0):
    """Run every grid point; ``monitors`` is a zero-argument factory returning
    fresh monitors for each run, ``reduction`` maps a SimOutput to a dict."""
    check_grid(model, grid)
    names = [n for n, _ in grid]
    points = grid_points(grid)

    def one(coords):
        cfg = replace(base_cfg, n_workers=1,
                      seed=point_seed(base_cfg.seed, names, coords))
        p = dict(params or {})
        for n, v in zip(names, coords):
            if n in ENGINE_PARAMS:
                cfg = replace(cfg, **{ENGINE_PARAMS[n]: v})
            else:
                p[n] = v
        sc = build_sparse(connectome, cfg.conduction_speed, cfg.dt, weight_threshold)
        t0 = time.perf_counter()
        out = run(model, sc, cfg, monitors(), p)
        runtime = time.perf_counter() - t0
        summary = reduction(out)
        return {"coords": coords, "seed": cfg.seed, "summary": summary, "runtime": runtime,
                "checksum": out.checksum()}

    if parallel > 1 and len(points) > 1:
        with ThreadPoolExecutor(parallel) as pool:
            rows = list(pool.map(one, points))
    else:
        rows = [one(pt) for pt in points]
    return SweepTable(names, rows)


def as_array(table, key):
    return np.array([r["summary"][key] for r in table.rows])
