"""Synchronization-window co-simulation of a macro network and a LIF micro network.

Timing (W = window steps, D = interface delay, s = absolute step):

* micro step s is driven by spikes drawn from the proxy region's macro rate
  exposure at time ``s - D``;
* micro spikes emitted in step s become the proxy's coupling exposure at time
  ``s + 1`` (after the linear map ``gain * rate + offset``).

Every edge leaving a proxy has delay >= D >= W, so within a window the macro
never reads proxy exposure newer than the last exchange, and the micro never
needs macro rates newer than the window start. Both sides therefore produce the
same trajectories for every admissible W.

Per window k the macro sends rates k, receives spikes k-1, overwrites the
proxy history, and advances; the micro receives rates k, advances, and sends
spikes k. Sends never wait on receives, so the exchange cannot deadlock.
"""
import threading
import time
from dataclasses import dataclass

import numpy as np

from ..engine import Simulator
from ..errors import ConfigError, TransportError
from . import transport as tp
from .lif import step_lif
from .transform import RateEstimator, rate_to_spikes, step_counts

DIRECTIONS = ("bidirectional", "macro_to_micro", "micro_to_macro")
_DIRECTION_ALIASES = {"both": "bidirectional", "bidirectional": "bidirectional",
                      "macro_to_micro": "macro_to_micro", "macro->micro": "macro_to_micro",
                      "micro_to_macro": "micro_to_macro", "micro->macro": "micro_to_macro"}


@dataclass
class CosimConfig:
    proxy_regions: tuple
    window_steps: int = None  # None: the interface delay
    direction: str = "bidirectional"
    n_spike_trains: int = 100
    smoothing_tau: float = 0.0
    transport: str = "inprocess"
    host: str = "127.0.0.1"
    port: int = 0
    gain: float = 1.0
    offset: float = 0.0
    rate_exposure: object = None  # name/index; default "r" if exposed, else 0
    timeout: float = 60.0

    @property
    def macro_to_micro(self):
        return self.direction in ("bidirectional", "macro_to_micro")

    @property
    def micro_to_macro(self):
        return self.direction in ("bidirectional", "micro_to_macro")


def interface_delay(sc, proxies):
    """Minimum delay over edges with a proxy at either end (None if no such edge)."""
    proxies = np.asarray(sorted(proxies), dtype=np.int64)
    tgt = sc.targets()
    touch = np.isin(sc.src_idx, proxies) | np.isin(tgt, proxies)
    if not np.any(touch):
        return None
    return int(sc.delay_steps[touch].min())


def validate(model, sc, cc):
    """Normalise ``cc`` in place; returns ``(proxies, D, W, rate_index)``."""
    key = str(cc.direction).lower()
    if key not in _DIRECTION_ALIASES:
        raise ConfigError(f"unknown direction {cc.direction!r}; use one of {', '.join(DIRECTIONS)}")
    cc.direction = _DIRECTION_ALIASES[key]
    proxies = sorted({int(p) for p in cc.proxy_regions})
    if not proxies:
        raise ConfigError("co-simulation needs at least one proxy region")
    if proxies[0] < 0 or proxies[-1] >= sc.n_regions:
        raise ConfigError(f"proxy regions must lie in [0, {sc.n_regions})")
    if any(model.coupling_difference):
        raise ConfigError(f"model {model.name} uses difference coupling, which proxy "
                          "regions cannot supply")
    if cc.transport not in ("inprocess", "socket"):
        raise ConfigError(f"unknown transport {cc.transport!r}; use inprocess or socket")
    if cc.n_spike_trains < 0 or cc.smoothing_tau < 0:
        raise ConfigError("n_spike_trains and smoothing_tau must be >= 0")
    D = interface_delay(sc, proxies)
    if D is None:
        D = max(1, sc.horizon - 1)
    if D < 1:
        raise ConfigError("an edge touching a proxy region has zero delay; co-simulation "
                          "needs an interface delay of at least one step")
    W = D if cc.window_steps is None else int(cc.window_steps)
    if W < 1:
        raise ConfigError("window_steps must be >= 1")
    if W > D:
        raise ConfigError(f"window of {W} steps exceeds the interface minimum delay of {D} "
                          "steps; the exchange would be acausal")
    ex = cc.rate_exposure
    if ex is None:
        ex = "r" if "r" in model.exposure_names else 0
    if isinstance(ex, str):
        if ex not in model.exposure_names:
            raise ConfigError(f"model {model.name} has no exposure {ex!r}")
        ex = model.exposure_names.index(ex)
    if not 0 <= ex < model.n_exposures:
        raise ConfigError(f"rate exposure index {ex} out of range")
    cc.window_steps = W
    return proxies, D, W, ex


def windows(n_steps, W):
    """(start step, length) of each window; the last may be short."""
    return [(s, min(W, n_steps - s)) for s in range(0, n_steps, W)]


class _RateRecorder:
    """Engine hook keeping every committed proxy rate (own macro values)."""

    def __init__(self, proxies, index, n_steps, initial):
        self.proxies, self.index = proxies, index
        self.hist = np.empty((len(proxies), n_steps + 1))
        self.hist[:, 0] = initial

    def post_commit(self, step, sim):
        self.hist[:, step + 1] = sim.exposures[self.index, self.proxies]


class ProxyHold:
    """Engine hook that pins proxy coupling exposure to ``value`` (absent-input runs)."""

    def __init__(self, proxies, value=0.0):
        self.proxies, self.value = list(proxies), value

    def attach(self, sim):
        sim.ring.buf[0][:, self.proxies] = self.value
        return self

    def post_commit(self, step, sim):
        sim.ring.overwrite(0, self.proxies, self.value)


def macro_endpoint(sim, link, cc, proxies, D, W, rate_index, n_micro_per_pop):
    dt = sim.cfg.dt
    n_steps = sim.cfg.n_steps
    rec = _RateRecorder(proxies, rate_index, n_steps, sim.exposures[rate_index, proxies])
    sim.hooks = rec
    estimators = [RateEstimator(n_micro_per_pop, dt, cc.smoothing_tau) for _ in proxies]
    fed = np.zeros((len(proxies), n_steps + 1))
    fed[:, 0] = cc.offset if cc.micro_to_macro else 0.0
    sim.ring.buf[0][:, proxies] = fed[:, :1].T
    micro_spikes = []
    plan = windows(n_steps, W)

    def absorb(k, start, length, msg):
        micro_spikes.extend(msg.spikes)
        if not cc.micro_to_macro:
            vals = np.zeros((len(proxies), length))
        else:
            by_pop = [[] for _ in proxies]
            for neuron, t in msg.spikes:
                by_pop[neuron // n_micro_per_pop].append((neuron, t))
            counts = [step_counts(s, dt, length, start * dt) for s in by_pop]
            vals = np.stack([cc.gain * est(c) + cc.offset for est, c in zip(estimators, counts)])
        fed[:, start + 1:start + 1 + length] = vals
        # exposure at time start+1+j sits (now - (start+1+j)) steps back
        ago = sim.step_index - (start + 1 + np.arange(length))
        for i, p in enumerate(proxies):
            sim.ring.overwrite(ago, p, vals[i])

    for k, (start, length) in enumerate(plan):
        times = np.maximum(0, start + np.arange(length) - D)
        rates = rec.hist[:, times] if cc.macro_to_micro else np.zeros((len(proxies), length))
        link.send(tp.CosimMessage(tp.RATES, k, (start - D) * dt, dt, rates=rates))
        if k > 0:
            absorb(k - 1, *plan[k - 1], link.recv(tp.SPIKES, cc.timeout))
        sim.advance(length)
    if plan:
        absorb(len(plan) - 1, *plan[-1], link.recv(tp.SPIKES, cc.timeout))
    link.send(tp.CosimMessage(tp.END, len(plan), n_steps * dt, dt))
    return {"micro_spikes": micro_spikes, "proxy_input": fed, "proxy_rates": rec.hist,
            "interface_delay": D, "window_steps": W, "n_windows": len(plan)}


def micro_endpoint(link, net, cc, n_proxies, dt, seed, W):
    """Serve windows until END; returns the number of windows handled."""
    n_trains = cc.n_spike_trains
    k = 0
    step = 0
    while True:
        msg = link.recv(None, cc.timeout)
        if msg.kind == tp.END:
            return k
        if msg.kind != tp.RATES:
            raise TransportError(f"micro expected rates, got kind {msg.kind}", msg.window_index)
        length = msg.rates.shape[1]
        ext = np.zeros((length, net.n_neurons))
        for p in range(n_proxies):
            spikes = rate_to_spikes(msg.rates[p], dt, n_trains, seed, msg.window_index,
                                    step0=step, train0=p * n_trains)
            counts = step_counts(spikes, dt, length, step * dt)
            ext[:, net.population(p)] = (counts * net.w_ext)[:, None]
        out = []
        for j in range(length):
            fired = step_lif(net, ext[j], dt)
            t = (step + j) * dt
            out.extend((int(i), t) for i in fired)
        link.send(tp.CosimMessage(tp.SPIKES, msg.window_index, step * dt, dt, spikes=out))
        step += length
        k += 1


def run_cosim(model, sc, cfg, net, cc, monitors=(), params=None):
    """Co-simulate; returns the macro SimOutput with the exchange record in ``extra``."""
    proxies, D, W, rate_index = validate(model, sc, cc)
    net.build(len(proxies))
    sim = Simulator(model, sc, cfg, monitors, params)
    errors = []

    def micro_main(make_link):
        link = None
        try:
            link = make_link()
            micro_endpoint(link, net, cc, len(proxies), cfg.dt, cfg.seed, W)
        except Exception as exc:  # surfaced in the macro thread
            errors.append(exc)
        finally:
            if link is not None:
                link.close()

    t0 = time.perf_counter()
    if cc.transport == "inprocess":
        macro_link, micro_link = tp.inprocess_pair()
        worker = threading.Thread(target=micro_main, args=(lambda: micro_link,), daemon=True)
        worker.start()
    else:
        listener = tp.SocketListener(cc.host, cc.port)
        worker = threading.Thread(target=micro_main,
                                  args=(lambda: tp.connect(listener.host, listener.port,
                                                           cc.timeout),), daemon=True)
        worker.start()
        macro_link = listener.accept(cc.timeout)
    try:
        extra = macro_endpoint(sim, macro_link, cc, proxies, D, W, rate_index, net.n_per_pop)
    except TransportError:
        if errors:
            raise errors[0] from None
        raise
    finally:
        macro_link.close()
        worker.join(cc.timeout)
        sim.close()
    if errors:
        raise errors[0]
    out = sim.output(time.perf_counter() - t0)
    out.extra.update(extra)
    out.extra["proxies"] = proxies
    return out
