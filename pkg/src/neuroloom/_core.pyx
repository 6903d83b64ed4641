# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: bytecode VM, coupling gather, native models, Philox noise.

Same contracts as ``_pycore``; all kernels release the GIL and touch only
their node range, so the engine can run blocks on threads.
"""
from libc.math cimport sin, cos, tan, exp, log, sqrt, fabs, tanh, pow, log1p, NAN
from libc.stdint cimport uint32_t, uint64_t, int64_t

import numpy as np

NAME = "cython"

cdef enum:
    MAX_STACK = 256
    MAX_DERIVED = 256
    OP_CONST = 0
    OP_STATE = 1
    OP_COUPLING = 2
    OP_PARAM = 3
    OP_DERIVED = 4
    OP_STORE = 5
    OP_PRE = 6
    OP_OUT = 7
    OP_ADD = 10
    OP_SUB = 11
    OP_MUL = 12
    OP_DIV = 13
    OP_POW = 14
    OP_NEG = 15
    OP_MIN = 16
    OP_MAX = 17
    OP_SIN = 20
    OP_COS = 21
    OP_TAN = 22
    OP_EXP = 23
    OP_LOG = 24
    OP_SQRT = 25
    OP_ABS = 26
    OP_TANH = 27
    OP_LT = 30
    OP_LE = 31
    OP_GT = 32
    OP_GE = 33
    OP_EQ = 34
    OP_SELECT = 35
    PRE_GENERAL = 0
    PRE_IDENTITY = 1
    PRE_SIN = 2


cdef inline double _min(double a, double b) nogil:
    if a != a or b != b:
        return NAN
    return a if a <= b else b


cdef inline double _max(double a, double b) nogil:
    if a != a or b != b:
        return NAN
    return a if a >= b else b


cdef int _vm(const int64_t[::1] code, const double[::1] consts,
             const double[:, ::1] state, const double[:, ::1] coupling,
             const double[:, ::1] params, double pre, double[:, ::1] out,
             Py_ssize_t node, double* stack, double* derived) noexcept nogil:
    cdef Py_ssize_t pc = 0, n = code.shape[0], sp = 0
    cdef int64_t op, arg
    cdef double a, b
    while pc < n:
        op = code[pc]
        arg = code[pc + 1]
        pc += 2
        if op == OP_CONST:
            stack[sp] = consts[arg]; sp += 1
        elif op == OP_STATE:
            stack[sp] = state[arg, node]; sp += 1
        elif op == OP_COUPLING:
            stack[sp] = coupling[arg, node]; sp += 1
        elif op == OP_PARAM:
            stack[sp] = params[arg, node]; sp += 1
        elif op == OP_DERIVED:
            stack[sp] = derived[arg]; sp += 1
        elif op == OP_STORE:
            sp -= 1; derived[arg] = stack[sp]
        elif op == OP_PRE:
            stack[sp] = pre; sp += 1
        elif op == OP_OUT:
            sp -= 1; out[arg, node] = stack[sp]
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op >= OP_SIN and op <= OP_TANH:
            a = stack[sp - 1]
            if op == OP_SIN:
                a = sin(a)
            elif op == OP_COS:
                a = cos(a)
            elif op == OP_TAN:
                a = tan(a)
            elif op == OP_EXP:
                a = exp(a)
            elif op == OP_LOG:
                a = log(a)
            elif op == OP_SQRT:
                a = sqrt(a)
            elif op == OP_ABS:
                a = fabs(a)
            else:
                a = tanh(a)
            stack[sp - 1] = a
        elif op == OP_SELECT:
            sp -= 2
            if stack[sp - 1] != 0.0:
                stack[sp - 1] = stack[sp]
            else:
                stack[sp - 1] = stack[sp + 1]
        else:
            sp -= 1
            b = stack[sp]
            a = stack[sp - 1]
            if op == OP_ADD:
                a = a + b
            elif op == OP_SUB:
                a = a - b
            elif op == OP_MUL:
                a = a * b
            elif op == OP_DIV:
                a = a / b
            elif op == OP_POW:
                a = pow(a, b)
            elif op == OP_MIN:
                a = _min(a, b)
            elif op == OP_MAX:
                a = _max(a, b)
            elif op == OP_LT:
                a = 1.0 if a < b else 0.0
            elif op == OP_LE:
                a = 1.0 if a <= b else 0.0
            elif op == OP_GT:
                a = 1.0 if a > b else 0.0
            elif op == OP_GE:
                a = 1.0 if a >= b else 0.0
            else:
                a = 1.0 if a == b else 0.0
            stack[sp - 1] = a
    return 0


def run_program(const int64_t[::1] code, const double[::1] consts,
                const double[:, ::1] state, const double[:, ::1] coupling,
                const double[:, ::1] params, double[:, ::1] out,
                Py_ssize_t lo, Py_ssize_t hi, int stack_depth, int n_derived):
    cdef double stack[MAX_STACK]
    cdef double derived[MAX_DERIVED]
    cdef Py_ssize_t i
    if stack_depth > MAX_STACK or n_derived > MAX_DERIVED:
        raise ValueError("program exceeds compiled VM limits")
    with nogil:
        for i in range(lo, hi):
            _vm(code, consts, state, coupling, params, 0.0, out, i, stack, derived)


def apply_pre(const int64_t[::1] code, const double[::1] consts, const double[::1] values):
    cdef double stack[MAX_STACK]
    cdef double derived[1]
    cdef Py_ssize_t i, n = values.shape[0]
    res = np.empty((1, n))
    cdef double[:, ::1] out = res
    with nogil:
        for i in range(n):
            _vm(code, consts, out, out, out, values[i], out, i, stack, derived)
    return res[0]


cdef inline double _pre_eval(int kind, const int64_t[::1] code, const double[::1] consts,
                             double v, double[:, ::1] scratch, double* stack,
                             double* derived) noexcept nogil:
    if kind == PRE_IDENTITY:
        return v
    if kind == PRE_SIN:
        return sin(v)
    _vm(code, consts, scratch, scratch, scratch, v, scratch, 0, stack, derived)
    return scratch[0, 0]


def accumulate_coupling(const double[:, ::1] ring, Py_ssize_t cursor,
                        const int64_t[::1] row_ptr, const int64_t[::1] edge_off,
                        const double[::1] weight, int pre_kind,
                        const int64_t[::1] pre_code, const double[::1] consts,
                        int stack_depth, bint difference, double G,
                        double[::1] out, Py_ssize_t lo, Py_ssize_t hi):
    cdef Py_ssize_t horizon = ring.shape[0], n = ring.shape[1]
    cdef Py_ssize_t span = horizon * n, base = cursor * n
    cdef Py_ssize_t i, e, idx
    cdef double acc, v, xi
    cdef const double* flat = &ring[0, 0]
    cdef double stack[MAX_STACK]
    cdef double derived[1]
    scratch_arr = np.zeros((1, 1))
    cdef double[:, ::1] scratch = scratch_arr
    if stack_depth > MAX_STACK:
        raise ValueError("pre program exceeds compiled VM limits")
    with nogil:
        for i in range(lo, hi):
            acc = 0.0
            xi = flat[base + i]
            for e in range(row_ptr[i], row_ptr[i + 1]):
                idx = base - edge_off[e]
                if idx < 0:
                    idx += span
                v = flat[idx]
                if difference:
                    v = v - xi
                acc += weight[e] * _pre_eval(pre_kind, pre_code, consts, v, scratch, stack, derived)
            out[i] = G * acc


# -- Philox4x32-10 and Box-Muller ---------------------------------------------------

cdef inline void _philox(uint32_t* c, uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t hi0, lo0, hi1, lo1
    cdef int r
    for r in range(10):
        p0 = <uint64_t>0xD2511F53 * c[0]
        p1 = <uint64_t>0xCD9E8D57 * c[2]
        hi0 = <uint32_t>(p0 >> 32)
        lo0 = <uint32_t>p0
        hi1 = <uint32_t>(p1 >> 32)
        lo1 = <uint32_t>p1
        c[0] = hi1 ^ c[1] ^ k0
        c[1] = lo1
        c[2] = hi0 ^ c[3] ^ k1
        c[3] = lo0
        k0 = k0 + <uint32_t>0x9E3779B9
        k1 = k1 + <uint32_t>0xBB67AE85


cdef inline double _unit(uint32_t lo, uint32_t hi) noexcept nogil:
    return <double>(((<uint64_t>lo) | ((<uint64_t>hi) << 32)) >> 11) * (1.0 / 9007199254740992.0)


def philox_block(uint32_t c0, uint32_t c1, uint32_t c2, uint32_t c3, uint32_t k0, uint32_t k1):
    cdef uint32_t c[4]
    c[0] = c0; c[1] = c1; c[2] = c2; c[3] = c3
    _philox(c, k0, k1)
    return c[0], c[1], c[2], c[3]


def gaussian_block(uint64_t seed, uint64_t step, Py_ssize_t lo, Py_ssize_t hi, double[:, ::1] out):
    cdef uint32_t k0 = <uint32_t>seed, k1 = <uint32_t>(seed >> 32)
    cdef uint32_t c[4]
    cdef Py_ssize_t v, i, nvar = out.shape[0]
    cdef double u1, u2
    with nogil:
        for v in range(nvar):
            for i in range(lo, hi):
                c[0] = <uint32_t>i
                c[1] = <uint32_t>step
                c[2] = <uint32_t>(step >> 32)
                c[3] = <uint32_t>v
                _philox(c, k0, k1)
                u1 = _unit(c[0], c[1])
                u2 = _unit(c[2], c[3])
                out[v, i] = sqrt(-2.0 * log1p(-u1)) * cos(6.283185307179586 * u2)


# -- native kernels ------------------------------------------------------------------

cdef void _rww(const double[:, ::1] s, const double[:, ::1] c, const double[:, ::1] p,
               double[:, ::1] out, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    cdef Py_ssize_t i
    cdef double S, x, u, du, H, d
    for i in range(lo, hi):
        S = s[0, i]
        d = p[2, i]
        x = p[6, i] * p[5, i] * S + p[5, i] * c[0, i] + p[7, i]
        u = p[0, i] * x - p[1, i]
        du = d * u
        if fabs(du) < 1e-9:
            H = 1.0 / d + u / 2.0
        else:
            H = u / (1.0 - exp(-du))
        out[0, i] = -S / p[4, i] + (1.0 - S) * p[3, i] * H * p[8, i]


cdef void _kuramoto(const double[:, ::1] s, const double[:, ::1] c, const double[:, ::1] p,
                    double[:, ::1] out, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(lo, hi):
        out[0, i] = p[0, i] + c[0, i]


cdef void _epileptor(const double[:, ::1] s, const double[:, ::1] c, const double[:, ::1] p,
                     double[:, ::1] out, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    cdef Py_ssize_t i
    cdef double x1, y1, z, x2, y2, g, cp, f1, hz, f2, tt
    for i in range(lo, hi):
        x1 = s[0, i]; y1 = s[1, i]; z = s[2, i]; x2 = s[3, i]; y2 = s[4, i]; g = s[5, i]
        cp = c[0, i]
        tt = p[15, i]
        if x1 < 0.0:
            f1 = (-p[0, i]) * (x1 * x1) + p[1, i] * x1
        else:
            f1 = p[8, i] - x2 + 0.6 * pow(z - 4.0, 2.0)
        out[0, i] = tt * (y1 - z + p[7, i] + p[13, i] * cp + f1 * x1)
        out[1, i] = tt * (p[2, i] - p[3, i] * (x1 * x1) - y1)
        hz = -0.1 * pow(z, 7.0) if z < 0.0 else 0.0
        out[2, i] = tt * (p[4, i] * (p[5, i] * (x1 - p[6, i]) - z + hz + p[14, i] * cp))
        out[3, i] = tt * (-y2 + x2 - pow(x2, 3.0) + p[9, i] + p[12, i] * g - 0.3 * (z - 3.5))
        f2 = 0.0 if x2 < -0.25 else p[11, i] * (x2 + 0.25)
        out[4, i] = tt * ((-y2 + f2) / p[10, i])
        out[5, i] = tt * (-0.01 * (g - 0.1 * x1))


def native_dfun(int kind, const double[:, ::1] state, const double[:, ::1] coupling,
                const double[:, ::1] params, double[:, ::1] out, Py_ssize_t lo, Py_ssize_t hi):
    with nogil:
        if kind == 1:
            _rww(state, coupling, params, out, lo, hi)
        elif kind == 2:
            _kuramoto(state, coupling, params, out, lo, hi)
        elif kind == 3:
            _epileptor(state, coupling, params, out, lo, hi)
        else:
            with gil:
                raise ValueError(f"unknown native kernel {kind}")
