"""Model description language: XML parsing, compilation, evaluation."""
import numpy as np

from ..errors import NumericFault
from .builtins import NativeKernel, asset_text, available_models, get_builtin
from .compiler import CompiledModel, compile_model
from .expr import evaluate, parse_expr, to_text
from .model import ModelSpec, parse_model, print_model

__all__ = [
    "CompiledModel", "ModelSpec", "NativeKernel", "asset_text", "available_models",
    "compile_model", "eval_derivatives", "eval_pre", "evaluate", "get_builtin",
    "load_model", "parse_expr", "parse_model", "print_model", "to_text",
]


def load_model(name_or_path):
    """Compile a shipped model by name, or an XML file by path."""
    if name_or_path in available_models():
        return compile_model(get_builtin(name_or_path)[0])
    with open(name_or_path, encoding="utf-8") as fh:
        return compile_model(parse_model(fh.read()))


def _column(values, n, what):
    a = np.asarray(values, dtype=np.float64).reshape(-1)
    if a.shape[0] != n:
        raise ValueError(f"expected {n} {what} values, got {a.shape[0]}")
    return np.ascontiguousarray(a.reshape(n, 1))


def eval_derivatives(m, state, coupling=None, params=None, kernels=None):
    """d(state)/dt at a single point; ``params`` defaults to the model defaults."""
    from .._backend import kernels as default_kernels
    k = kernels or default_kernels
    s = _column(state, m.n_state, "state")
    c = _column(np.zeros(m.n_coupling) if coupling is None else coupling, m.n_coupling, "coupling")
    p = _column(m.param_defaults if params is None else params, m.n_params, "parameter")
    out = np.empty((m.n_state, 1))
    k.run_program(m.dfun, m.consts, s, c, p, out, 0, 1, m.stack_depth, m.n_derived)
    bad = np.flatnonzero(~np.isfinite(out[:, 0]))
    if bad.size:
        name = m.state_names[bad[0]]
        raise NumericFault(f"non-finite derivative for state variable {name!r}", variable=name)
    return out[:, 0]


def eval_pre(m, k, pre_value, kernels=None):
    """Apply the k-th coupling term's pre transform to one value."""
    from .._backend import kernels as default_kernels
    if not 0 <= k < m.n_coupling:
        raise IndexError(f"coupling term {k} out of range for {m.name}")
    kk = kernels or default_kernels
    v = float(kk.apply_pre(m.pre[k], m.consts, np.array([float(pre_value)]))[0])
    if not np.isfinite(v):
        raise NumericFault(f"non-finite pre value for coupling term {m.coupling_names[k]!r}",
                           variable=m.coupling_names[k])
    return v
