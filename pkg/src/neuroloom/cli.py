"""Command-line front end.

Exit codes: 0 success, 2 usage/config error, 3 numeric fault, 4 I/O error.
"""
import argparse
import json
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, _backend
from .errors import (ConfigError, ConnectomeError, DslError, NeuroloomError, NumericFault,
                     TransportError)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _err(msg):
    print(f"neuroloom: error: {msg}", file=sys.stderr)


def _num(v):
    return repr(float(v))


def _workers(arg, default):
    env = os.environ.get("NEUROLOOM_WORKERS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"NEUROLOOM_WORKERS must be an integer, got {env!r}") from None
    elif arg is not None:
        value = arg
    else:
        value = default
    if value < 1:
        raise ConfigError("worker count must be >= 1")
    return value


# -- model validate --------------------------------------------------------------------

def cmd_model_validate(args):
    from .dsl import available_models, compile_model, get_builtin, parse_model
    if args.path in available_models() and not Path(args.path).exists():
        spec = get_builtin(args.path)[0]
    else:
        try:
            text = Path(args.path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read model file {args.path}: {exc.strerror}") from None
        spec = parse_model(text)
    m = compile_model(spec)
    print(f"model {m.name}: OK")
    print(f"state variables ({m.n_state}):")
    for k, n in enumerate(m.state_names):
        clamp = ""
        if np.isfinite(m.clamp_lo[k]) or np.isfinite(m.clamp_hi[k]):
            clamp = f" clamp [{_num(m.clamp_lo[k])}, {_num(m.clamp_hi[k])}]"
        print(f"  {n} init [{_num(m.init_lo[k])}, {_num(m.init_hi[k])}] "
              f"sigma {_num(m.noise_sigma[k])}{clamp}")
    print(f"parameters ({m.n_params}):")
    for n, v in zip(m.param_names, m.param_defaults):
        print(f"  {n} = {_num(v)}")
    print(f"coupling terms ({m.n_coupling}):")
    for n, diff in zip(m.coupling_names, m.coupling_difference):
        print(f"  {n}{' (difference)' if diff else ''}")
    print(f"exposures: {', '.join(m.exposure_names)}")
    print(f"max stack depth: {m.stack_depth}; constants: {len(m.consts)}")
    if args.dump_bytecode:
        sys.stdout.write(m.disassemble())
    return EXIT_OK


# -- run ------------------------------------------------------------------------------

def _prepare(cfg_path, args):
    from .config import load_config
    from .connectome import build_sparse, load_connectome
    from .dsl import load_model
    rc = load_config(cfg_path)
    if getattr(args, "steps", None) is not None:
        rc.sim = replace(rc.sim, n_steps=args.steps)
    if getattr(args, "seed", None) is not None:
        rc.sim = replace(rc.sim, seed=args.seed)
    rc.sim = replace(rc.sim, n_workers=_workers(getattr(args, "workers", None), rc.sim.n_workers))
    if getattr(args, "output", None):
        rc.output_dir = Path(args.output)
    if getattr(args, "format", None):
        rc.output_format = args.format
    model = load_model(rc.model)
    conn = load_connectome(rc.connectome)
    sc = build_sparse(conn, rc.sim.conduction_speed, rc.sim.dt, rc.weight_threshold)
    return rc, model, conn, sc


def _write_outputs(rc, model, conn, out, command, extra=None):
    from .io import write_timeseries
    rc.output_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, ts in out.series.items():
        ts.labels = list(conn.labels)
        paths = write_timeseries(ts, rc.output_dir / name, rc.output_format)
        files[name] = [p.name for p in paths]
    summary = {
        "command": command,
        "model": model.name,
        "n_regions": conn.n_regions,
        "n_steps": out.n_steps,
        "dt": rc.sim.dt,
        "integrator": rc.sim.integrator,
        "G": rc.sim.G,
        "seed": rc.sim.seed,
        "workers": rc.sim.n_workers,
        "backend": _backend.kernels.NAME,
        "wall_time_s": out.wall_time,
        "node_steps_per_s": out.node_steps_per_second,
        "final_state_checksum": out.checksum(),
        "outputs": files,
        **(extra or {}),
    }
    with open(rc.output_dir / "run_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def cmd_run(args):
    from .config import build_monitors
    from .engine import run
    rc, model, conn, sc = _prepare(args.config, args)
    out = run(model, sc, rc.sim, build_monitors(rc.monitors), rc.params)
    s = _write_outputs(rc, model, conn, out, "run")
    print(f"checksum {s['final_state_checksum']}  {out.n_steps} steps  "
          f"{s['node_steps_per_s']:.3g} node-steps/s  -> {rc.output_dir}")
    return EXIT_OK


# -- sweep ----------------------------------------------------------------------------

def cmd_sweep(args):
    from .config import build_monitors
    from .io import read_matrix
    from .sweep import check_grid, fc_fit_summary, mean_activity, parse_grid, sweep
    rc, model, conn, _ = _prepare(args.config, args)
    grid = parse_grid(args.grid)
    check_grid(model, grid)
    if args.summary == "fc-fit":
        if not args.empirical:
            raise ConfigError("--summary fc-fit needs --empirical FILE")
        try:
            emp = read_matrix(args.empirical)
        except OSError as exc:
            raise ConfigError(f"cannot read empirical FC {args.empirical}: {exc}") from None
        reduction = fc_fit_summary(emp, args.discard)
    else:
        reduction = mean_activity
    table = sweep(model, conn, rc.sim, grid, lambda: build_monitors(rc.monitors), reduction,
                  rc.params, parallel=args.parallel, weight_threshold=rc.weight_threshold)
    text = table.to_csv(timing=args.timing)
    dest = Path(args.out) if args.out else rc.output_dir / "sweep.csv"
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(text)
    print(f"{len(table.rows)} grid points -> {dest}")
    return EXIT_OK


# -- lesion ---------------------------------------------------------------------------

def cmd_lesion(args):
    from .connectome import (in_strength, lesion_incoming, load_connectome, rewire_scale,
                             save_connectome)
    c = load_connectome(args.connectome)
    before = in_strength(c, args.region) if 0 <= args.region < c.n_regions else 0.0
    out = lesion_incoming(c, args.region, args.fraction, args.seed)
    removed = int(np.count_nonzero(c.weights[args.region] > 0)
                  - np.count_nonzero(out.weights[args.region] > 0))
    mode = args.rewire
    if mode == "restore":
        out = rewire_scale(out, args.region, restore_strength=before)
    elif mode.startswith("factor:"):
        try:
            factor = float(mode.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad rewire factor in {mode!r}") from None
        out = rewire_scale(out, args.region, factor=factor)
    elif mode != "none":
        raise ConfigError(f"--rewire must be none, restore or factor:X, got {mode!r}")
    save_connectome(out, args.output)
    print(f"region {args.region}: removed {removed} incoming edges; in-strength "
          f"{before!r} -> {in_strength(out, args.region)!r}; wrote {args.output}")
    return EXIT_OK


# -- fc -------------------------------------------------------------------------------

def cmd_fc(args):
    from .io import read_matrix, read_timeseries, write_matrix
    from .observables import fc, fc_fit
    ts = read_timeseries(args.timeseries)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        matrix, flags = fc(ts, args.discard, return_flags=True)
    if flags:
        names = [ts.labels[i] for i in flags]
        print(f"warning: zero-variance channels {', '.join(names)}: FC rows set to 0",
              file=sys.stderr)
    del caught
    dest = Path(args.output) if args.output else Path(args.timeseries).with_name(
        Path(args.timeseries).stem + "_fc.txt")
    write_matrix(matrix, dest)
    print(f"FC {matrix.shape[0]}x{matrix.shape[1]} -> {dest}")
    if args.fit:
        try:
            emp = read_matrix(args.fit)
        except OSError as exc:
            raise ConfigError(f"cannot read empirical FC {args.fit}: {exc}") from None
        print(f"fit {fc_fit(matrix, emp)!r}")
    return EXIT_OK


# -- cosim ----------------------------------------------------------------------------

def cmd_cosim(args):
    from .config import build_monitors
    from .cosim import CosimConfig, LifNetwork, run_cosim
    from .io import write_timeseries
    rc, model, conn, sc = _prepare(args.config, args)
    if rc.cosim is None:
        raise ConfigError(f"{args.config} has no [cosim] table")
    kw = dict(rc.cosim)
    if args.transport:
        kw["transport"] = args.transport
    if args.port is not None:
        kw["port"] = args.port
    if args.window is not None:
        kw["window_steps"] = args.window
    kw["proxy_regions"] = tuple(kw["proxy_regions"])
    try:
        cc = CosimConfig(**kw)
        net = LifNetwork(**rc.micro)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    out = run_cosim(model, sc, rc.sim, net, cc, build_monitors(rc.monitors), rc.params)
    x = out.extra
    s = _write_outputs(rc, model, conn, out, "cosim", {
        "interface_delay_steps": x["interface_delay"], "window_steps": x["window_steps"],
        "n_windows": x["n_windows"], "proxies": x["proxies"],
        "micro_spike_count": len(x["micro_spikes"]), "transport": cc.transport})
    from .observables import TimeSeries
    rates = TimeSeries(0.0, rc.sim.dt, [conn.labels[p] for p in x["proxies"]], x["proxy_input"])
    write_timeseries(rates, rc.output_dir / "proxy_input", rc.output_format)
    with open(rc.output_dir / "micro_spikes.csv", "w") as fh:
        fh.write("neuron,time\n")
        for n, t in x["micro_spikes"]:
            fh.write(f"{n},{t!r}\n")
    print(f"checksum {s['final_state_checksum']}  W={x['window_steps']} D={x['interface_delay']} "
          f"windows={x['n_windows']}  -> {rc.output_dir}")
    return EXIT_OK


# -- info -----------------------------------------------------------------------------

def cmd_info(args):
    from .connectome import connectome_stats, load_connectome
    c = load_connectome(args.connectome)
    print(connectome_stats(c).format(list(c.labels)))
    return EXIT_OK


# -- entry point ----------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="neuroloom", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"neuroloom {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    mp = sub.add_parser("model", help="model description tools")
    msub = mp.add_subparsers(dest="model_command", required=True)
    v = msub.add_parser("validate", help="parse and compile a model XML file")
    v.add_argument("path", help="XML file or shipped model name")
    v.add_argument("--dump-bytecode", action="store_true", help="print the disassembly")
    v.set_defaults(func=cmd_model_validate)

    def run_opts(q):
        q.add_argument("config", help="TOML run configuration")
        q.add_argument("--workers", type=int, help="threads per run (env NEUROLOOM_WORKERS wins)")
        q.add_argument("--output", help="output directory (overrides config)")
        q.add_argument("--format", choices=("csv", "f64bin"), help="time-series file format")
        q.add_argument("--steps", type=int, help="override simulation.n_steps")
        q.add_argument("--seed", type=int, help="override simulation.seed")

    r = sub.add_parser("run", help="simulate a configured network")
    run_opts(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="parameter sweep over a grid")
    run_opts(s)
    s.add_argument("--grid", action="append", required=True, metavar="PARAM=V1,V2,...")
    s.add_argument("--parallel", type=int, default=1, help="concurrent grid points")
    s.add_argument("--summary", choices=("mean", "fc-fit"), default="mean")
    s.add_argument("--empirical", help="empirical FC matrix for --summary fc-fit")
    s.add_argument("--discard", type=int, default=0, help="initial samples dropped for FC")
    s.add_argument("--timing", action="store_true", help="add a runtime column")
    s.add_argument("--out", help="CSV path (default <output_dir>/sweep.csv)")
    s.set_defaults(func=cmd_sweep)

    le = sub.add_parser("lesion", help="remove incoming connections of a region")
    le.add_argument("connectome")
    le.add_argument("output")
    le.add_argument("--region", type=int, required=True)
    le.add_argument("--fraction", type=float, required=True)
    le.add_argument("--seed", type=int, default=0)
    le.add_argument("--rewire", default="none", help="none | restore | factor:X")
    le.set_defaults(func=cmd_lesion)

    f = sub.add_parser("fc", help="functional connectivity of a time-series file")
    f.add_argument("timeseries")
    f.add_argument("--discard", type=int, default=0)
    f.add_argument("--fit", help="empirical FC matrix file")
    f.add_argument("--output", "-o")
    f.set_defaults(func=cmd_fc)

    c = sub.add_parser("cosim", help="macro/micro co-simulation")
    run_opts(c)
    c.add_argument("--transport", choices=("inprocess", "socket"))
    c.add_argument("--port", type=int)
    c.add_argument("--window", type=int, help="window steps (default: interface delay)")
    c.set_defaults(func=cmd_cosim)

    i = sub.add_parser("info", help="print connectome statistics")
    i.add_argument("connectome")
    i.set_defaults(func=cmd_info)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericFault as exc:
        _err(str(exc))
        return EXIT_NUMERIC
    except (ConfigError, DslError, ConnectomeError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except FileNotFoundError as exc:
        _err(f"file not found: {exc.filename}")
        return EXIT_USAGE
    except (OSError, TransportError, NeuroloomError) as exc:
        _err(str(exc))
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
