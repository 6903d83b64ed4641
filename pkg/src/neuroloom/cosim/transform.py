"""Rate <-> spike transformers at the macro/micro interface."""
import numpy as np

from .. import rng
from ..errors import ConfigError


def spike_probability(rate_hz, dt):
    return np.minimum(1.0, np.asarray(rate_hz, dtype=np.float64) * dt * 1e-3)


def rate_to_spikes(rates, dt, n_trains, seed, window_index=0, step0=0, train0=0):
    """Bernoulli-thinned spikes: train j fires at step s with probability
    ``min(1, rate[s] * dt * 1e-3)``.

    ``rates`` holds one value per step; step s of this block has absolute
    step index ``step0 + s`` and time ``(step0 + s) * dt``. Uniforms are keyed
    by (seed, train0 + j, absolute step), so the result does not depend on how
    steps are grouped into windows; ``window_index`` is only carried along.
    Returns ``(train, time)`` pairs sorted by time, then train.
    """
    rates = np.asarray(rates, dtype=np.float64).reshape(-1)
    if np.any(rates < 0) or not np.all(np.isfinite(rates)):
        raise ConfigError("rates must be finite and >= 0")
    if n_trains == 0 or rates.size == 0:
        return []
    steps = np.uint64(step0) + np.arange(rates.size, dtype=np.uint64)
    trains = np.uint64(train0) + np.arange(n_trains, dtype=np.uint64)
    u = rng.uniform(seed, trains[None, :], steps[:, None], 0, rng.TAG_SPIKES)
    fire = u < spike_probability(rates, dt)[:, None]
    s_idx, j_idx = np.nonzero(fire)  # row-major: by step, then train
    times = (step0 + s_idx) * dt
    return [(int(train0 + j), float(t)) for j, t in zip(j_idx, times)]


class RateEstimator:
    """``spikes_to_rate`` with exponential-smoothing state carried across windows."""

    def __init__(self, n_neurons, dt, smoothing_tau=0.0):
        if n_neurons <= 0:
            raise ConfigError("spikes_to_rate needs n_neurons > 0")
        if smoothing_tau < 0:
            raise ConfigError("smoothing_tau must be >= 0")
        self.n_neurons = n_neurons
        self.dt = dt
        self.tau = smoothing_tau
        self.decay = float(np.exp(-dt / smoothing_tau)) if smoothing_tau > 0 else 0.0
        self.level = 0.0

    def __call__(self, counts):
        raw = np.asarray(counts, dtype=np.float64) / (self.n_neurons * self.dt * 1e-3)
        if self.tau == 0:
            return raw
        out = np.empty_like(raw)
        for k, r in enumerate(raw):
            self.level = self.decay * self.level + (1.0 - self.decay) * r
            out[k] = self.level
        return out


def step_counts(spikes, dt, window_steps, t_start=0.0):
    """Spikes per step of a window starting at ``t_start``."""
    counts = np.zeros(window_steps)
    first = int(round(t_start / dt))
    for _, t in spikes:
        s = int(round(t / dt)) - first
        if not 0 <= s < window_steps:
            raise ConfigError(f"spike at {t} ms lies outside the window starting at {t_start} ms")
        counts[s] += 1
    return counts


def spikes_to_rate(spikes, n_neurons, dt, window_steps, smoothing_tau=0.0, t_start=0.0):
    """Per-step population rate (Hz): count / (n_neurons * dt * 1e-3), optionally
    smoothed with ``y <- d*y + (1-d)*raw``, ``d = exp(-dt/smoothing_tau)``."""
    est = RateEstimator(n_neurons, dt, smoothing_tau)
    return est(step_counts(spikes, dt, window_steps, t_start))
