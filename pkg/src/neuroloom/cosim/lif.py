"""Current-based leaky integrate-and-fire network with delta synapses.

Stands in for a detailed spiking simulator at the micro end of a
co-simulation. Between inputs the membrane relaxes exactly towards
``v_rest + bias``; synaptic events add instantaneous voltage jumps.
Recurrent spikes arrive one step after emission.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ..errors import ConfigError


@dataclass
class LifNetwork:
    """``n_per_pop`` neurons in each of ``n_pops`` populations.

    Each population receives recurrent connections (probability ``p_conn``,
    a fraction ``inh_fraction`` of sources inhibitory with weight
    ``-g * w_int``) and external spike trains at weight ``w_ext``.
    """

    n_per_pop: int = 100
    n_pops: int = 1
    tau_m: float = 20.0
    v_rest: float = 0.0
    v_thresh: float = 20.0
    v_reset: float = 10.0
    t_ref: float = 2.0
    bias: float = 0.0
    w_ext: float = 0.2
    w_int: float = 0.1
    g: float = 4.0
    inh_fraction: float = 0.2
    p_conn: float = 0.1
    seed: int = 0
    v: np.ndarray = field(default=None, repr=False)
    ref_left: np.ndarray = field(default=None, repr=False)
    pending: np.ndarray = field(default=None, repr=False)
    weights: object = field(default=None, repr=False)

    def __post_init__(self):
        if not self.v_reset < self.v_thresh:
            raise ConfigError("LIF needs v_reset < v_thresh")
        if self.tau_m <= 0 or self.t_ref < 0 or self.n_per_pop < 1 or self.n_pops < 1:
            raise ConfigError("LIF needs tau_m > 0, t_ref >= 0 and at least one neuron")
        if self.v is None:
            self.build()

    @property
    def n_neurons(self):
        return self.n_per_pop * self.n_pops

    def population(self, p):
        return slice(p * self.n_per_pop, (p + 1) * self.n_per_pop)

    def build(self, n_pops=None):
        """(Re)create state and seeded recurrent weights (target rows)."""
        if n_pops is not None:
            self.n_pops = int(n_pops)
        n, m = self.n_neurons, self.n_per_pop
        self.v = np.full(n, float(self.v_rest))
        self.ref_left = np.zeros(n, dtype=np.int64)
        self.pending = np.zeros(n)
        gen = np.random.default_rng(self.seed)
        blocks = []
        for _ in range(self.n_pops):
            mask = gen.random((m, m)) < self.p_conn
            np.fill_diagonal(mask, False)
            w = np.where(mask, self.w_int, 0.0)
            n_inh = int(round(self.inh_fraction * m))
            if n_inh:
                w[:, m - n_inh:] *= -self.g
            blocks.append(sparse.csr_matrix(w))
        self.weights = sparse.block_diag(blocks, format="csr")
        return self


def step_lif(net, external, dt):
    """Advance one step. ``external`` is a per-neuron voltage increment
    (summed weights of input spikes this step). Returns sorted indices of the
    neurons that fired; recurrent effects are queued for the next step."""
    if dt <= 0:
        raise ConfigError("dt must be > 0")
    decay = np.exp(-dt / net.tau_m)
    v_inf = net.v_rest + net.bias
    v = v_inf + (net.v - v_inf) * decay + net.pending + np.asarray(external, dtype=np.float64)
    refractory = net.ref_left > 0
    v[refractory] = net.v_reset
    net.ref_left[refractory] -= 1
    fired = np.flatnonzero(v >= net.v_thresh)
    v[fired] = net.v_reset
    net.ref_left[fired] = int(round(net.t_ref / dt))
    net.v = v
    spiked = np.zeros(net.n_neurons)
    spiked[fired] = 1.0
    net.pending = net.weights @ spiked
    return fired


def lif_period(tau_m, v_rest, v_reset, v_thresh, bias, t_ref=0.0):
    """Closed-form inter-spike interval under constant drive ``bias``."""
    v_inf = v_rest + bias
    if v_inf <= v_thresh:
        return float("inf")
    return t_ref + tau_m * np.log((v_inf - v_reset) / (v_inf - v_thresh))
