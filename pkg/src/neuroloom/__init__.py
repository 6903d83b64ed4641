"""Sparse, delay-coupled brain network model simulation.

Typical use::

    from neuroloom import load_connectome, build_sparse, load_model, SimConfig, run
    from neuroloom.observables import RawMonitor

    sc = build_sparse(load_connectome("conn.zip"), conduction_speed=3.0, dt=0.1)
    out = run(load_model("ReducedWongWang"), sc, SimConfig(G=0.5, n_steps=10000),
              [RawMonitor(10)])
"""
__version__ = "0.1.0"

from .connectome import (Connectome, SparseCoupling, build_sparse, connectome_stats,
                         lesion_incoming, load_connectome, rewire_scale, save_connectome)
from .dsl import (compile_model, eval_derivatives, eval_pre, get_builtin, load_model,
                  parse_model)
from .engine import (DEFAULT_SEED, HistoryRing, SimConfig, SimOutput, Simulator,
                     compute_coupling, init_state, run)
from .errors import (ConfigError, ConnectomeError, DslError, NeuroloomError, NumericFault,
                     TransportError)
from .sweep import sweep

__all__ = [
    "Connectome", "SparseCoupling", "build_sparse", "connectome_stats", "lesion_incoming",
    "load_connectome", "rewire_scale", "save_connectome", "compile_model", "eval_derivatives",
    "eval_pre", "get_builtin", "load_model", "parse_model", "DEFAULT_SEED", "HistoryRing",
    "SimConfig", "SimOutput", "Simulator", "compute_coupling", "init_state", "run",
    "ConfigError", "ConnectomeError", "DslError", "NeuroloomError", "NumericFault",
    "TransportError", "sweep",
]
