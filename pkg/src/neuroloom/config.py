"""TOML run configuration (normative key list in docs/config.md)."""
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .engine import DEFAULT_SEED, SimConfig, normalize_integrator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_TOP = {"model", "connectome", "output_dir", "output_format", "simulation", "parameters",
        "monitors", "cosim"}
_SIM = {"dt", "n_steps", "seed", "integrator", "G", "conduction_speed", "noise_sigma",
        "n_workers", "kernel", "weight_threshold", "init"}
_MON = {"type", "decimation", "window", "exposure", "name", "tr"}
_COSIM = {"proxy_regions", "window_steps", "direction", "n_spike_trains", "smoothing_tau",
          "transport", "host", "port", "gain", "offset", "rate_exposure", "timeout", "micro"}
_MICRO = {"n_per_pop", "tau_m", "v_rest", "v_thresh", "v_reset", "t_ref", "bias", "w_ext",
          "w_int", "g", "inh_fraction", "p_conn", "seed"}


@dataclass
class RunConfig:
    path: Path
    model: str
    connectome: Path
    output_dir: Path
    output_format: str
    sim: SimConfig
    weight_threshold: float
    params: dict
    monitors: list
    cosim: dict = None
    micro: dict = field(default_factory=dict)


def _unknown(table, allowed, where):
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _resolve(base, value, what):
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    if not p.exists():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _number(table, key, kind, default, where, check=None):
    v = table.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {v!r}")
    v = kind(v)
    if check is not None and not check(v):
        raise ConfigError(f"{where}.{key} has an invalid value {v!r}")
    return v


def load_config(path):
    """Parse and validate a run configuration; all referenced files must exist."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw, path.parent, path)


def parse_config(raw, base=Path("."), path=None):
    base = Path(base)
    _unknown(raw, _TOP, "config")
    for key in ("model", "connectome"):
        if key not in raw:
            raise ConfigError(f"config is missing required key {key!r}")
    from .dsl import available_models
    model = raw["model"]
    if model not in available_models():
        model = str(_resolve(base, model, "model file"))
    connectome = _resolve(base, raw["connectome"], "connectome file")
    fmt = raw.get("output_format", "csv")
    if fmt not in ("csv", "f64bin"):
        raise ConfigError(f"output_format must be csv or f64bin, got {fmt!r}")

    s = raw.get("simulation", {})
    _unknown(s, _SIM, "[simulation]")
    sigma = s.get("noise_sigma")
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=np.float64)
    init = s.get("init", "uniform")
    if init != "uniform":
        init = np.loadtxt(_resolve(base, init, "initial state file"), ndmin=2)
    try:
        integrator = normalize_integrator(s.get("integrator", "HeunStochastic"))
    except ConfigError as exc:
        raise ConfigError(f"[simulation].integrator: {exc}") from None
    seed = s.get("seed", DEFAULT_SEED)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError("[simulation].seed must be an integer in [0, 2^64)")
    sim = SimConfig(
        dt=_number(s, "dt", float, 0.1, "simulation", lambda v: v > 0),
        n_steps=_number(s, "n_steps", int, 1000, "simulation", lambda v: v >= 0),
        seed=seed,
        integrator=integrator,
        G=_number(s, "G", float, 0.0, "simulation", lambda v: v >= 0),
        conduction_speed=_number(s, "conduction_speed", float, 3.0, "simulation",
                                 lambda v: v > 0),
        noise_sigma=sigma,
        init=None if isinstance(init, str) else init,
        n_workers=_number(s, "n_workers", int, 1, "simulation", lambda v: v >= 1),
        kernel=s.get("kernel", "bytecode"),
    )
    sim.validate()
    threshold = _number(s, "weight_threshold", float, 0.0, "simulation", lambda v: v >= 0)

    params = {}
    for name, value in raw.get("parameters", {}).items():
        if isinstance(value, dict):
            if set(value) != {"file"}:
                raise ConfigError(f"[parameters].{name}: use a number, a list, or {{ file = ... }}")
            params[name] = np.loadtxt(_resolve(base, value["file"], f"parameter file for {name}"),
                                      ndmin=1)
        elif isinstance(value, list):
            params[name] = np.asarray(value, dtype=np.float64)
        elif isinstance(value, (int, float)) and not isinstance(value, bool):
            params[name] = float(value)
        else:
            raise ConfigError(f"[parameters].{name} has an invalid value {value!r}")

    monitors = []
    for i, mon in enumerate(raw.get("monitors", [{"type": "raw"}])):
        _unknown(mon, _MON, f"[[monitors]] #{i + 1}")
        kind = mon.get("type", "raw")
        spec = {"type": kind, "exposure": mon.get("exposure", 0),
                "name": mon.get("name", kind if i == 0 else f"{kind}{i}")}
        if kind == "raw":
            spec["decimation"] = _number(mon, "decimation", int, 1, "monitors", lambda v: v >= 1)
        elif kind == "tavg":
            spec["window"] = _number(mon, "window", int, 1, "monitors", lambda v: v >= 1)
        elif kind == "bold":
            spec["decimation"] = _number(mon, "decimation", int, 1, "monitors", lambda v: v >= 1)
            spec["tr"] = _number(mon, "tr", float, 2000.0, "monitors", lambda v: v > 0)
        else:
            raise ConfigError(f"unknown monitor type {kind!r}; use raw, tavg or bold")
        monitors.append(spec)
    names = [m["name"] for m in monitors]
    if len(set(names)) != len(names):
        raise ConfigError("monitor names must be unique")

    cosim = raw.get("cosim")
    micro = {}
    if cosim is not None:
        _unknown(cosim, _COSIM, "[cosim]")
        cosim = dict(cosim)
        micro = cosim.pop("micro", {})
        _unknown(micro, _MICRO, "[cosim.micro]")
        if "proxy_regions" not in cosim:
            raise ConfigError("[cosim] needs proxy_regions")

    return RunConfig(
        path=path, model=model, connectome=connectome,
        output_dir=base / raw.get("output_dir", "out"), output_format=fmt, sim=sim,
        weight_threshold=threshold, params=params, monitors=monitors, cosim=cosim, micro=micro)


def build_monitors(specs):
    from .observables import make_monitor
    out = []
    for spec in specs:
        kw = {k: v for k, v in spec.items() if k != "type"}
        out.append(make_monitor(spec["type"], **kw))
    return out
