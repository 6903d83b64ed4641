import struct
import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neuroloom.connectome import build_sparse, random_connectome
from neuroloom.cosim import (CosimConfig, LifNetwork, ProxyHold, lif_period, rate_to_spikes,
                             run_cosim, spikes_to_rate, step_lif)
from neuroloom.cosim import transport as tp
from neuroloom.dsl import load_model
from neuroloom.engine import SimConfig, Simulator
from neuroloom.errors import ConfigError, TransportError
from neuroloom.observables import RawMonitor
from oracles import binomial_bounds

RWW = load_model("ReducedWongWang")


# -- rate <-> spikes --------------------------------------------------------------

def test_zero_rate_no_spikes():
    assert rate_to_spikes(np.zeros(1000), 0.1, 5, seed=1) == []


def test_negative_rate_rejected():
    with pytest.raises(ConfigError):
        rate_to_spikes([1.0, -1.0], 0.1, 1, seed=1)


def test_constant_rate_binomial_count():
    spikes = rate_to_spikes(np.full(100_000, 100.0), 0.1, 1, seed=7)
    lo, hi = binomial_bounds(100_000, 0.01)
    assert lo <= len(spikes) <= hi


def test_spikes_are_deterministic_and_sorted():
    r = np.random.default_rng(0).uniform(0, 200, 500)
    a = rate_to_spikes(r, 0.1, 20, seed=3)
    assert a == rate_to_spikes(r, 0.1, 20, seed=3)
    assert a != rate_to_spikes(r, 0.1, 20, seed=4)
    assert a == sorted(a, key=lambda s: (s[1], s[0]))


def test_spike_keys_do_not_depend_on_window_split():
    r = np.random.default_rng(1).uniform(0, 300, 400)
    whole = rate_to_spikes(r, 0.1, 10, seed=5)
    parts = []
    for k, s in enumerate(range(0, 400, 70)):
        parts += rate_to_spikes(r[s:s + 70], 0.1, 10, seed=5, window_index=k, step0=s)
    assert parts == whole


def test_spikes_to_rate_examples():
    assert np.all(spikes_to_rate([], 10, 1.0, 5) == 0)
    rate = spikes_to_rate([(i, 2.0) for i in range(10)], 10, 1.0, 5)
    assert rate.tolist() == [0, 0, 1000.0, 0, 0]
    with pytest.raises(ConfigError):
        spikes_to_rate([], 0, 1.0, 5)


def test_spikes_to_rate_smoothing():
    rate = spikes_to_rate([(0, 0.0)], 1, 1.0, 3, smoothing_tau=2.0)
    d = np.exp(-0.5)
    assert np.allclose(rate, [(1 - d) * 1000, d * (1 - d) * 1000, d * d * (1 - d) * 1000])


def test_spike_outside_window_rejected():
    with pytest.raises(ConfigError):
        spikes_to_rate([(0, 10.0)], 1, 1.0, 5)


@pytest.mark.parametrize("n_trains,rate", [(200, 50.0), (500, 80.0)])
def test_round_trip_mean_rate(n_trains, rate):
    steps = 20_000  # 2 s at 0.1 ms
    spikes = rate_to_spikes(np.full(steps, rate), 0.1, n_trains, seed=11)
    mean = spikes_to_rate(spikes, n_trains, 0.1, steps).mean()
    lo, hi = binomial_bounds(steps * n_trains, rate * 1e-4)
    scale = 1.0 / (n_trains * steps * 1e-4)
    assert lo * scale <= mean <= hi * scale
    assert abs(mean - rate) <= 0.1 * rate


# -- LIF ----------------------------------------------------------------------------

def single(**kw):
    return LifNetwork(n_per_pop=1, p_conn=0.0, inh_fraction=0.0, **kw).build(1)


def test_lif_rest_is_stationary():
    net = single()
    for _ in range(100):
        assert step_lif(net, [0.0], 0.1).size == 0
    assert net.v[0] == net.v_rest


def test_lif_input_jump():
    net = single()
    step_lif(net, [0.7], 0.1)
    assert net.v[0] == net.v_rest + 0.7


@pytest.mark.parametrize("bias,t_ref", [(25.0, 2.0), (40.0, 0.0), (21.0, 1.0)])
def test_lif_period_matches_closed_form(bias, t_ref):
    dt = 0.01
    net = single(bias=bias, t_ref=t_ref)
    times = [s * dt for s in range(40_000) if step_lif(net, [0.0], dt).size]
    isi = np.diff(times)
    expected = lif_period(net.tau_m, net.v_rest, net.v_reset, net.v_thresh, bias, t_ref)
    assert len(isi) >= 2
    assert np.all(np.abs(isi - expected) <= dt + 1e-9)


def test_lif_deterministic_and_reset_below_threshold():
    with pytest.raises(ValueError):
        LifNetwork(v_reset=25.0)
    a, b = LifNetwork(seed=3).build(2), LifNetwork(seed=3).build(2)
    assert (a.weights != b.weights).nnz == 0
    ext = np.random.default_rng(0).uniform(0, 3, size=(200, a.n_neurons))
    assert [step_lif(a, e, 0.1).tolist() for e in ext] == [step_lif(b, e, 0.1).tolist() for e in ext]


# -- framing and transports ----------------------------------------------------------------

def test_frame_layout():
    msg = tp.CosimMessage(tp.RATES, 3, 1.5, 0.1, rates=np.array([[1.0, 2.0]]))
    frame = tp.encode(msg)
    assert struct.unpack_from("<IBQdd", frame) == (len(frame) - 4, 0, 3, 1.5, 0.1)
    assert struct.unpack_from("<II2d", frame, 29) == (1, 2, 1.0, 2.0)
    spikes = tp.encode(tp.CosimMessage(tp.SPIKES, 0, 0.0, 0.1, spikes=[(7, 0.2)]))
    assert struct.unpack_from("<IId", spikes, 29) == (1, 7, 0.2)


@settings(max_examples=50, deadline=None)
@given(window=st.integers(0, 2**63), t=st.floats(-1e6, 1e6), n_p=st.integers(0, 4),
       n_s=st.integers(0, 6), spikes=st.lists(st.tuples(st.integers(0, 2**32 - 1),
                                                      st.floats(0, 1e6)), max_size=20))
def test_frame_round_trip(window, t, n_p, n_s, spikes):
    rates = np.arange(n_p * n_s, dtype=float).reshape(n_p, n_s) * t
    for msg in (tp.CosimMessage(tp.RATES, window, t, 0.1, rates=rates),
                tp.CosimMessage(tp.SPIKES, window, t, 0.1, spikes=spikes),
                tp.CosimMessage(tp.END, window, t, 0.1)):
        back = tp.decode(tp.encode(msg)[4:])
        assert (back.kind, back.window_index, back.t_start, back.dt) == \
            (msg.kind, msg.window_index, msg.t_start, msg.dt)
        if msg.kind == tp.RATES:
            assert np.array_equal(back.rates, rates) and back.rates.shape == rates.shape
        if msg.kind == tp.SPIKES:
            assert back.spikes == [(int(a), float(b)) for a, b in spikes]


def test_malformed_frames():
    with pytest.raises(TransportError):
        tp.decode(b"\x00\x01")
    good = tp.encode(tp.CosimMessage(tp.END, 0, 0.0, 0.1))[4:]
    with pytest.raises(TransportError, match="trailing"):
        tp.decode(good + b"x")
    with pytest.raises(TransportError, match="kind"):
        tp.decode(b"\x09" + good[1:])


def test_out_of_order_window_aborts():
    a, b = tp.inprocess_pair()
    a.send(tp.CosimMessage(tp.SPIKES, 0, 0.0, 0.1))
    a.send(tp.CosimMessage(tp.SPIKES, 2, 0.0, 0.1))
    assert b.recv(tp.SPIKES, 1).window_index == 0
    with pytest.raises(TransportError) as exc:
        b.recv(tp.SPIKES, 1)
    assert exc.value.window_index == 2


def test_socket_transport_round_trip():
    listener = tp.SocketListener("127.0.0.1", 0)
    got = {}

    def client():
        ep = tp.connect(listener.host, listener.port, 5)
        got["msg"] = ep.recv(tp.RATES, 5)
        ep.send(tp.CosimMessage(tp.SPIKES, 0, 0.0, 0.1, spikes=[(1, 0.1)]))
        ep.close()

    th = threading.Thread(target=client)
    th.start()
    ep = listener.accept(5)
    ep.send(tp.CosimMessage(tp.RATES, 0, 0.0, 0.1, rates=np.ones((2, 3))))
    assert ep.recv(tp.SPIKES, 5).spikes == [(1, 0.1)]
    th.join()
    with pytest.raises(TransportError, match="closed"):
        ep.recv(None, 5)
    ep.close()
    assert np.array_equal(got["msg"].rates, np.ones((2, 3)))


def test_connect_failure_is_transport_error():
    listener = tp.SocketListener("127.0.0.1", 0)
    port = listener.port
    listener.sock.close()
    with pytest.raises(TransportError):
        tp.connect("127.0.0.1", port, 1)


# -- co-simulation runs ---------------------------------------------------------------------

def network():
    c = random_connectome(6, density=0.7, seed=12, max_length=40, symmetric=True)
    w = c.tract_lengths.copy()
    w[w > 0] = np.maximum(w[w > 0], 6.0)  # interface delay >= 20 steps at 3 mm/ms, 0.1 ms
    from dataclasses import replace
    return build_sparse(replace(c, tract_lengths=w), 3.0, 0.1)


def cosim(W=None, transport="inprocess", direction="bidirectional", n_steps=300, **net_kw):
    sc = network()
    cfg = SimConfig(dt=0.1, n_steps=n_steps, G=0.6, noise_sigma=[0.001], seed=5)
    net = LifNetwork(**{"n_per_pop": 40, "bias": 15.0, "w_ext": 0.5, "seed": 7, **net_kw})
    cc = CosimConfig(proxy_regions=[1, 4], window_steps=W, transport=transport,
                     direction=direction, n_spike_trains=30, gain=0.01)
    mon = RawMonitor(1)
    out = run_cosim(RWW, sc, cfg, net, cc, [mon])
    return out, mon.series().data


def test_window_equivalence_and_transport():
    ref, ref_data = cosim(W=1)
    D = ref.extra["interface_delay"]
    assert D >= 20
    full, full_data = cosim(W=D)
    assert full.extra["window_steps"] == D and full.extra["n_windows"] == -(-300 // D)
    assert np.max(np.abs(full_data - ref_data)) <= 1e-12
    assert full.extra["micro_spikes"] == ref.extra["micro_spikes"]
    assert len(full.extra["micro_spikes"]) > 0
    sock, _ = cosim(W=D, transport="socket")
    assert sock.checksum() == full.checksum()


def test_window_too_large_rejected():
    sc = network()
    D = cosim(n_steps=1)[0].extra["interface_delay"]
    with pytest.raises(ConfigError, match="exceeds"):
        run_cosim(RWW, sc, SimConfig(n_steps=10), LifNetwork(),
                  CosimConfig(proxy_regions=[1], window_steps=D + 1))


def test_bad_proxy_sets():
    sc = network()
    for proxies in ([], [6], [-1]):
        with pytest.raises(ConfigError):
            run_cosim(RWW, sc, SimConfig(n_steps=10), LifNetwork(),
                      CosimConfig(proxy_regions=proxies))
    with pytest.raises(ConfigError, match="difference"):
        run_cosim(load_model("Kuramoto"), sc, SimConfig(n_steps=10), LifNetwork(),
                  CosimConfig(proxy_regions=[1]))


def test_silent_micro_one_way_equals_zero_held_proxies():
    out, data = cosim(direction="macro_to_micro", bias=0.0, w_ext=0.0)
    assert out.extra["micro_spikes"] == []
    sc = network()
    cfg = SimConfig(dt=0.1, n_steps=300, G=0.6, noise_sigma=[0.001], seed=5)
    mon = RawMonitor(1)
    sim = Simulator(RWW, sc, cfg, [mon])
    sim.hooks = ProxyHold([1, 4], 0.0).attach(sim)
    sim.advance(300)
    sim.close()
    # proxy rows are the stand-in nodes' own (unobserved) state; the rest is the trajectory
    keep = [0, 2, 3, 5]
    assert np.array_equal(mon.series().data[keep], data[keep])
    assert sim.output(0.0).checksum() == out.checksum()
