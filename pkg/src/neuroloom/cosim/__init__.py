"""Macro (network) <-> micro (spiking) co-simulation."""
from .lif import LifNetwork, lif_period, step_lif
from .runner import (CosimConfig, ProxyHold, interface_delay, run_cosim, validate, windows)
from .transform import RateEstimator, rate_to_spikes, spikes_to_rate, step_counts
from .transport import (END, RATES, SPIKES, CosimMessage, SocketListener, connect, decode,
                        encode, inprocess_pair)

__all__ = [
    "LifNetwork", "lif_period", "step_lif", "CosimConfig", "ProxyHold", "interface_delay",
    "run_cosim", "validate", "windows", "RateEstimator", "rate_to_spikes", "spikes_to_rate",
    "step_counts", "END", "RATES", "SPIKES", "CosimMessage", "SocketListener", "connect",
    "decode", "encode", "inprocess_pair",
]
