"""Delay-coupled network integration on a sparse connectome.

Each step has two phases separated by a barrier:

1. read phase: every target's coupling is gathered from committed history;
2. write phase: derivatives, stochastic update, clamping, then the new
   exposures are committed to the ring and handed to monitors.

Nodes are split into contiguous blocks, one per worker. Every kernel only
writes its own block and per-target accumulation follows edge storage
order, so results are bit-identical for any worker count.
"""
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _backend, rng
from .errors import ConfigError, NumericFault

DEFAULT_SEED = 20210613
INTEGRATORS = ("euler", "heun")
_INTEGRATOR_ALIASES = {
    "euler": "euler", "eulermaruyama": "euler", "euler_maruyama": "euler",
    "heun": "heun", "heunstochastic": "heun", "heun_stochastic": "heun",
}


def normalize_integrator(name):
    key = str(name).replace("-", "_").lower()
    if key not in _INTEGRATOR_ALIASES:
        raise ConfigError(f"unknown integrator {name!r}; use EulerMaruyama or HeunStochastic")
    return _INTEGRATOR_ALIASES[key]


@dataclass
class SimConfig:
    """Run settings. ``init`` is None (uniform in the model's init ranges)
    or an explicit ``[n_regions][n_state]`` matrix."""

    dt: float = 0.1
    n_steps: int = 1000
    seed: int = DEFAULT_SEED
    integrator: str = "heun"
    G: float = 0.0
    conduction_speed: float = 3.0
    noise_sigma: object = None
    init: object = None
    n_workers: int = 1
    kernel: str = "bytecode"
    backend: str = None

    def validate(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.conduction_speed > 0:
            raise ConfigError(f"conduction speed must be positive, got {self.conduction_speed}")
        if self.n_steps < 0:
            raise ConfigError("n_steps must be >= 0")
        if not self.G >= 0:
            raise ConfigError("global coupling G must be >= 0")
        if self.n_workers < 1:
            raise ConfigError("n_workers must be >= 1")
        if self.kernel not in ("bytecode", "native"):
            raise ConfigError(f"kernel must be 'bytecode' or 'native', got {self.kernel!r}")
        self.integrator = normalize_integrator(self.integrator)
        if self.noise_sigma is not None and np.any(np.asarray(self.noise_sigma) < 0):
            raise ConfigError("noise sigma must be >= 0")
        return self


class HistoryRing:
    """Circular buffers ``[n_exposures][horizon][n_regions]`` of committed exposures.

    ``cursor`` is the slot of the most recent commit; ``read(j, d)`` returns
    the value committed ``d`` steps before it.
    """

    def __init__(self, horizon, n_regions, n_exposures=1):
        if horizon < 1:
            raise ConfigError("ring horizon must be >= 1")
        self.horizon = int(horizon)
        self.n_regions = int(n_regions)
        self.buf = np.zeros((n_exposures, self.horizon, self.n_regions))
        self.cursor = 0

    def fill(self, exposures):
        """Pre-fill every slot with ``exposures`` of shape ``(n_exposures, n)``."""
        self.buf[:] = np.asarray(exposures)[:, None, :]
        self.cursor = 0

    def read(self, node, delay, exposure=0):
        if not 0 <= delay < self.horizon:
            raise IndexError(f"delay {delay} outside ring horizon {self.horizon}")
        return self.buf[exposure, (self.cursor - delay) % self.horizon, node]

    def latest(self):
        return self.buf[:, self.cursor, :]

    def commit(self, exposures):
        self.cursor = (self.cursor + 1) % self.horizon
        self.buf[:, self.cursor, :] = exposures

    def stage(self, values):
        """Write coupling exposure into the slot the next commit will use."""
        self.buf[0, (self.cursor + 1) % self.horizon, :] = values

    def overwrite(self, steps_ago, node, values, exposure=0):
        """Replace already committed values (co-simulation proxy input)."""
        slots = (self.cursor - np.asarray(steps_ago)) % self.horizon
        self.buf[exposure, slots, node] = values

    def coupling_view(self):
        return self.buf[0]


def edge_offsets(sc):
    """Per-edge flat ring offsets ``delay * n - src``."""
    return np.ascontiguousarray(sc.delay_steps * sc.n_regions - sc.src_idx, dtype=np.int64)


def param_matrix(m, n_regions, params=None):
    """``(n_params, n_regions)`` array: defaults, scalar overrides broadcast,
    vector overrides of length ``n_regions`` taken per region."""
    p = np.repeat(m.param_defaults[:, None], n_regions, axis=1)
    for name, value in (params or {}).items():
        try:
            k = m.param_index(name)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        v = np.asarray(value, dtype=np.float64)
        if v.ndim == 0:
            p[k] = float(v)
        elif v.shape == (n_regions,):
            p[k] = v
        else:
            raise ConfigError(f"parameter {name!r} must be a scalar or have length {n_regions}")
    return np.ascontiguousarray(p)


def _kernels(cfg):
    return _backend.get(cfg.backend) if cfg.backend else _backend.kernels


def uniform_init(m, n_regions, seed):
    nodes = np.arange(n_regions, dtype=np.uint64)[:, None]
    var = np.arange(m.n_state, dtype=np.uint64)[None, :]
    u = rng.uniform(seed, nodes, 0, var, rng.TAG_INIT)
    return m.init_lo[None, :] + (m.init_hi - m.init_lo)[None, :] * u


def init_state(m, n_regions, policy=None, seed=DEFAULT_SEED, horizon=1, params=None,
               kernels=None):
    """Initial ``[n_regions][n_state]`` matrix and a ring pre-filled with its exposures.

    ``policy`` is None / ``"uniform"`` for i.i.d. draws from each variable's
    init range, or an explicit matrix.
    """
    k = kernels or _backend.kernels
    if policy is None or (isinstance(policy, str) and policy == "uniform"):
        state = uniform_init(m, n_regions, seed)
    else:
        state = np.array(policy, dtype=np.float64)
        if state.shape != (n_regions, m.n_state):
            raise ConfigError(f"explicit initial state must have shape {(n_regions, m.n_state)}, "
                              f"got {state.shape}")
    ring = HistoryRing(horizon, n_regions, m.n_exposures)
    pmat = params if isinstance(params, np.ndarray) else param_matrix(m, n_regions, params)
    soa = np.ascontiguousarray(state.T)
    exp = np.empty((m.n_exposures, n_regions))
    k.run_program(m.expose, m.consts, soa, np.zeros((m.n_coupling, n_regions)), pmat, exp,
                  0, n_regions, m.stack_depth, m.n_derived)
    ring.fill(exp)
    return state, ring


def compute_coupling(ring, sc, m, G, state=None, kernels=None, cursor=None):
    """Coupling matrix ``[n_regions][n_coupling]`` from committed history.

    ``state`` is accepted for interface symmetry; difference terms use the
    target's latest committed exposure, which equals its current state.
    """
    k = kernels or _backend.kernels
    if ring.horizon < sc.horizon:
        raise ConfigError(f"ring horizon {ring.horizon} < coupling horizon {sc.horizon}")
    out = np.zeros((m.n_coupling, sc.n_regions))
    off = edge_offsets(sc)
    cur = ring.cursor if cursor is None else cursor
    for j in range(m.n_coupling):
        k.accumulate_coupling(ring.coupling_view(), cur, sc.row_ptr, off, sc.weight,
                              m.pre_kind[j], m.pre[j], m.consts, m.stack_depth,
                              m.coupling_difference[j], float(G), out[j], 0, sc.n_regions)
    return out.T.copy()


@dataclass
class SimOutput:
    series: dict
    final_state: np.ndarray  # [n_regions][n_state]
    wall_time: float
    n_steps: int
    n_regions: int
    extra: dict = field(default_factory=dict)

    @property
    def node_steps_per_second(self):
        if self.wall_time <= 0:
            return float("inf")
        return self.n_steps * self.n_regions / self.wall_time

    def checksum(self):
        from .io import fnv1a64_hex
        return fnv1a64_hex(self.final_state)

    def __getitem__(self, name):
        return self.series[name]


class Simulator:
    """Stepping engine; ``run`` wraps it for one-shot use.

    ``hooks`` may define ``post_update(step, state)`` (mutates the new state
    before commit) and ``post_commit(step, sim)``.
    """

    def __init__(self, model, sc, cfg, monitors=(), params=None, native=None, hooks=None):
        cfg.validate()
        self.m = model
        self.sc = sc
        self.cfg = cfg
        self.k = _kernels(cfg)
        self.n = n = sc.n_regions
        if cfg.kernel == "native":
            if native is None:
                from .dsl.builtins import get_builtin
                native = get_builtin(model.name)[1]
            if tuple(native.param_names) != tuple(model.param_names):
                raise ConfigError("native kernel parameter layout does not match the model")
        self.native = native if cfg.kernel == "native" else None
        self.params = param_matrix(model, n, params)
        sigma = model.noise_sigma if cfg.noise_sigma is None else cfg.noise_sigma
        sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (model.n_state,)).copy()
        if np.any(sigma < 0):
            raise ConfigError("noise sigma must be >= 0")
        self.noise_scale = math.sqrt(cfg.dt) * sigma
        self.noisy = bool(np.any(sigma > 0))
        self.edge_off = edge_offsets(sc)
        self.monitors = list(monitors)
        self.hooks = hooks
        self.step_index = 0

        w = min(cfg.n_workers, max(n, 1))
        bounds = np.linspace(0, n, w + 1).round().astype(int)
        self.blocks = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        self.pool = ThreadPoolExecutor(len(self.blocks) - 1) if len(self.blocks) > 1 else None
        state, self.ring = init_state(model, n, cfg.init, cfg.seed, sc.horizon, self.params,
                                      self.k)
        self.state = np.ascontiguousarray(state.T)  # [n_state][n]
        self.coupling = np.zeros((model.n_coupling, n))
        self.coupling2 = np.zeros((model.n_coupling, n))
        self.deriv = np.zeros((model.n_state, n))
        self.deriv2 = np.zeros((model.n_state, n))
        self.xi = np.zeros((model.n_state, n))
        self.exposures = np.zeros((model.n_exposures, n))
        # derived exposures at t=0 need the initial coupling
        self._gather(self.ring.cursor, self.coupling)
        self._expose(self.state, self.coupling, self.exposures)
        self.ring.fill(self.exposures)

        for mon in self.monitors:
            mon.start(model, n, cfg.dt, sc_labels(sc))

    # -- phases ------------------------------------------------------------------
    def _each(self, fn):
        if self.pool is None:
            for lo, hi in self.blocks:
                fn(lo, hi)
        else:
            # the caller runs the first block; waiting on the rest is the barrier
            futures = [self.pool.submit(fn, lo, hi) for lo, hi in self.blocks[1:]]
            fn(*self.blocks[0])
            for f in futures:
                f.result()

    def _gather(self, cursor, out):
        m, k, sc = self.m, self.k, self.sc
        ring = self.ring.coupling_view()
        G = float(self.cfg.G)

        def work(lo, hi):
            for j in range(m.n_coupling):
                k.accumulate_coupling(ring, cursor, sc.row_ptr, self.edge_off, sc.weight,
                                      m.pre_kind[j], m.pre[j], m.consts, m.stack_depth,
                                      m.coupling_difference[j], G, out[j], lo, hi)
        self._each(work)

    def _dfun(self, state, coupling, out):
        m, k = self.m, self.k
        if self.native is not None:
            kind = self.native.kind
            self._each(lambda lo, hi: k.native_dfun(kind, state, coupling, self.params, out, lo, hi))
        else:
            self._each(lambda lo, hi: k.run_program(m.dfun, m.consts, state, coupling, self.params,
                                                    out, lo, hi, m.stack_depth, m.n_derived))

    def _expose(self, state, coupling, out):
        m, k = self.m, self.k
        self._each(lambda lo, hi: k.run_program(m.expose, m.consts, state, coupling, self.params,
                                                out, lo, hi, m.stack_depth, m.n_derived))

    def _noise(self, step):
        seed = int(self.cfg.seed) & 0xFFFFFFFFFFFFFFFF
        xi = self.xi
        self._each(lambda lo, hi: self.k.gaussian_block(seed, step, lo, hi, xi))
        return self.noise_scale[:, None] * xi

    def _clamp(self, s):
        if self.m.has_clamp:
            np.clip(s, self.m.clamp_lo[:, None], self.m.clamp_hi[:, None], out=s)

    # -- stepping -----------------------------------------------------------------
    def step(self):
        t = self.step_index
        dt = self.cfg.dt
        s = self.state
        cursor = self.ring.cursor
        self._gather(cursor, self.coupling)
        self._dfun(s, self.coupling, self.deriv)
        noise = self._noise(t) if self.noisy else 0.0
        with np.errstate(all="ignore"):
            if self.cfg.integrator == "euler":
                new = s + dt * self.deriv + noise
                self._clamp(new)
            else:
                pred = s + dt * self.deriv + noise
                self._clamp(pred)
                self._expose(pred, self.coupling, self.exposures)
                self.ring.stage(self.exposures[0])
                self._gather((cursor + 1) % self.ring.horizon, self.coupling2)
                self._dfun(pred, self.coupling2, self.deriv2)
                new = s + (dt / 2.0) * (self.deriv + self.deriv2) + noise
                self._clamp(new)
        if self.hooks is not None and hasattr(self.hooks, "post_update"):
            self.hooks.post_update(t, new)
        self._check(new, t)
        self.state = np.ascontiguousarray(new)
        self._expose(self.state, self.coupling, self.exposures)
        self.ring.commit(self.exposures)
        self.step_index = t + 1
        if self.hooks is not None and hasattr(self.hooks, "post_commit"):
            self.hooks.post_commit(t, self)
        for mon in self.monitors:
            mon.record(t + 1, self.ring.latest())

    def _check(self, new, t):
        if not np.all(np.isfinite(new)):
            var, node = np.argwhere(~np.isfinite(new))[0]
            name = self.m.state_names[var]
            raise NumericFault(f"non-finite state at step {t}, node {node}, variable {name!r}",
                               step=t, node=int(node), variable=name)

    def advance(self, n_steps):
        for _ in range(n_steps):
            self.step()

    def final_state(self):
        return np.ascontiguousarray(self.state.T)

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()
            self.pool = None

    def output(self, wall_time):
        return SimOutput(
            series={mon.name: mon.series() for mon in self.monitors},
            final_state=self.final_state(),
            wall_time=wall_time,
            n_steps=self.step_index,
            n_regions=self.n,
        )


def sc_labels(sc):
    return getattr(sc, "labels", None) or tuple(f"r{i}" for i in range(sc.n_regions))


def run(model, sc, cfg, monitors=(), params=None, native=None, hooks=None):
    """Integrate ``cfg.n_steps`` steps and collect monitor output."""
    sim = Simulator(model, sc, cfg, monitors, params, native, hooks)
    try:
        t0 = time.perf_counter()
        sim.advance(cfg.n_steps)
        wall = time.perf_counter() - t0
        return sim.output(wall)
    finally:
        sim.close()
