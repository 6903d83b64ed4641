"""Pure numpy kernels; the fallback when the compiled core is unavailable.

Every kernel works on a contiguous node range ``[lo, hi)`` and writes only
into that range of its output, so callers can split nodes across threads.
Arrays use a per-variable layout: ``state[k, node]``.
"""
import numpy as np

from . import rng
from .dsl import compiler as bc

NAME = "python"


def _binary(op, a, b):
    if op == bc.ADD:
        return a + b
    if op == bc.SUB:
        return a - b
    if op == bc.MUL:
        return a * b
    if op == bc.DIV:
        return a / b
    if op == bc.POW:
        return np.power(a, b)
    if op == bc.MIN:
        return np.minimum(a, b)
    if op == bc.MAX:
        return np.maximum(a, b)
    if op == bc.LT:
        return (a < b).astype(np.float64)
    if op == bc.LE:
        return (a <= b).astype(np.float64)
    if op == bc.GT:
        return (a > b).astype(np.float64)
    if op == bc.GE:
        return (a >= b).astype(np.float64)
    if op == bc.EQ:
        return (a == b).astype(np.float64)
    raise ValueError(f"bad opcode {op}")


_UNARY = {bc.NEG: np.negative, bc.SIN: np.sin, bc.COS: np.cos, bc.TAN: np.tan,
          bc.EXP: np.exp, bc.LOG: np.log, bc.SQRT: np.sqrt, bc.ABS: np.abs,
          bc.TANH: np.tanh}


def _execute(code, consts, state, coupling, params, pre, out, lo, hi, n_derived):
    m = hi - lo
    stack = []
    derived = [None] * n_derived
    with np.errstate(all="ignore"):
        for pc in range(0, len(code), 2):
            op, arg = code[pc], code[pc + 1]
            if op == bc.CONST:
                stack.append(np.full(m, consts[arg]))
            elif op == bc.STATE:
                stack.append(state[arg, lo:hi])
            elif op == bc.COUPLING:
                stack.append(coupling[arg, lo:hi])
            elif op == bc.PARAM:
                stack.append(params[arg, lo:hi])
            elif op == bc.DERIVED:
                stack.append(derived[arg])
            elif op == bc.STORE_DERIVED:
                derived[arg] = stack.pop()
            elif op == bc.PRE:
                stack.append(pre)
            elif op == bc.OUT:
                out[arg, lo:hi] = stack.pop()
            elif op == bc.SELECT:
                b = stack.pop()
                a = stack.pop()
                c = stack.pop()
                stack.append(np.where(c != 0.0, a, b))
            elif op in _UNARY:
                stack.append(_UNARY[op](stack.pop()))
            else:
                b = stack.pop()
                stack.append(_binary(op, stack.pop(), b))


def run_program(code, consts, state, coupling, params, out, lo, hi, stack_depth, n_derived):
    """Evaluate a dfun/expose program for nodes ``lo..hi-1``."""
    _execute(code.tolist(), consts, state, coupling, params, None, out, lo, hi, n_derived)


def apply_pre(code, consts, values):
    """Apply a pre program elementwise to a 1-D array."""
    out = np.empty((1, values.shape[0]))
    _execute(code.tolist(), consts, None, None, None, values, out, 0, values.shape[0], 0)
    return out[0]


def accumulate_coupling(ring, cursor, row_ptr, edge_off, weight, pre_kind, pre_code, consts,
                        stack_depth, difference, G, out, lo, hi):
    """``out[i] = G * sum_e w_e * pre(x_src(t - d_e) [- x_i(t)])`` for targets lo..hi-1.

    ``edge_off[e] = delay_e * n - src_e`` turns a ring read into one flat
    offset from the cursor row; ``ring`` has shape ``(horizon, n)``.
    """
    horizon, n = ring.shape
    e0, e1 = row_ptr[lo], row_ptr[hi]
    if e1 == e0:
        out[lo:hi] = 0.0
        return
    flat = ring.reshape(-1)
    idx = cursor * n - edge_off[e0:e1]
    idx[idx < 0] += horizon * n
    vals = flat[idx]
    counts = np.diff(row_ptr[lo:hi + 1])
    tgt = np.repeat(np.arange(hi - lo), counts)
    if difference:
        vals = vals - ring[cursor, lo:hi][tgt]
    with np.errstate(all="ignore"):
        if pre_kind == bc.PRE_SIN:
            vals = np.sin(vals)
        elif pre_kind == bc.PRE_GENERAL:
            vals = apply_pre(pre_code, consts, vals)
    # bincount adds edges sequentially in storage order per target
    sums = np.bincount(tgt, weights=vals * weight[e0:e1], minlength=hi - lo)
    out[lo:hi] = G * sums


def gaussian_block(seed, step, lo, hi, out):
    """Standard normals keyed (seed, node, step, var) into ``out[:, lo:hi]``."""
    nvar = out.shape[0]
    nodes = np.arange(lo, hi, dtype=np.uint64)[None, :]
    var = np.arange(nvar, dtype=np.uint64)[:, None]
    out[:, lo:hi] = rng.gaussian(seed, nodes, np.uint64(step), var)


# -- native kernels ----------------------------------------------------------------

RWW, KURAMOTO, EPILEPTOR = 1, 2, 3


def _rww(state, coupling, params, out, lo, hi):
    a, b, d, gamma, tau_s, J, w, I_o, rate_unit = (params[k, lo:hi] for k in range(9))
    S = state[0, lo:hi]
    x = w * J * S + J * coupling[0, lo:hi] + I_o
    u = a * x - b
    du = d * u
    with np.errstate(all="ignore"):
        H = np.where(np.abs(du) < 1e-9, 1.0 / d + u / 2.0, u / (1.0 - np.exp(-du)))
    out[0, lo:hi] = -S / tau_s + (1.0 - S) * gamma * H * rate_unit


def _kuramoto(state, coupling, params, out, lo, hi):
    out[0, lo:hi] = params[0, lo:hi] + coupling[0, lo:hi]


def _epileptor(state, coupling, params, out, lo, hi):
    (a, b, c, d, r, s, x0, Iext, slope, Iext2, tau, aa, bb, Kvf, Ks, tt) = (
        params[k, lo:hi] for k in range(16))
    x1, y1, z, x2, y2, g = (state[k, lo:hi] for k in range(6))
    cp = coupling[0, lo:hi]
    f1 = np.where(x1 < 0.0, (-a) * (x1 * x1) + b * x1, slope - x2 + 0.6 * (z - 4.0) ** 2)
    out[0, lo:hi] = tt * (y1 - z + Iext + Kvf * cp + f1 * x1)
    out[1, lo:hi] = tt * (c - d * x1 * x1 - y1)
    zz = np.where(z < 0.0, -0.1 * z ** 7, 0.0)
    out[2, lo:hi] = tt * (r * (s * (x1 - x0) - z + zz + Ks * cp))
    out[3, lo:hi] = tt * (-y2 + x2 - x2 ** 3 + Iext2 + bb * g - 0.3 * (z - 3.5))
    f2 = np.where(x2 < -0.25, 0.0, aa * (x2 + 0.25))
    out[4, lo:hi] = tt * ((-y2 + f2) / tau)
    out[5, lo:hi] = tt * (-0.01 * (g - 0.1 * x1))


_NATIVE = {RWW: _rww, KURAMOTO: _kuramoto, EPILEPTOR: _epileptor}


def native_dfun(kind, state, coupling, params, out, lo, hi):
    _NATIVE[kind](state, coupling, params, out, lo, hi)
