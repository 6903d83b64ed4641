"""Compile a ModelSpec to stack-machine bytecode.

A program is an int64 array of ``(opcode, argument)`` pairs. Each model has
three kinds of program sharing one constant pool:

* ``dfun``: derived variables, then one ``OUT k`` per state derivative;
* ``expose``: derived variables needed by the exposures, one ``OUT k`` each;
* ``pre[k]``: the k-th coupling term's pre-synaptic transform of ``PRE``.

Derived variables are evaluated once per program run (``STORE_DERIVED``) and
then reloaded, so repeated subexpressions cost one evaluation.
"""
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import DslError
from .expr import BinOp, Call, Compare, Ident, Neg, Num, fold_constants, identifiers
from .model import PRE_SYMBOL, validate

# operand-carrying opcodes
CONST, STATE, COUPLING, PARAM, DERIVED, STORE_DERIVED, PRE, OUT = range(8)
# arithmetic
ADD, SUB, MUL, DIV, POW, NEG, MIN, MAX = range(10, 18)
SIN, COS, TAN, EXP, LOG, SQRT, ABS, TANH = range(20, 28)
LT, LE, GT, GE, EQ, SELECT = range(30, 36)

OPNAMES = {
    CONST: "CONST", STATE: "STATE", COUPLING: "COUPLING", PARAM: "PARAM",
    DERIVED: "DERIVED", STORE_DERIVED: "STORE_DERIVED", PRE: "PRE", OUT: "OUT",
    ADD: "ADD", SUB: "SUB", MUL: "MUL", DIV: "DIV", POW: "POW", NEG: "NEG",
    MIN: "MIN", MAX: "MAX", SIN: "SIN", COS: "COS", TAN: "TAN", EXP: "EXP",
    LOG: "LOG", SQRT: "SQRT", ABS: "ABS", TANH: "TANH", LT: "LT", LE: "LE",
    GT: "GT", GE: "GE", EQ: "EQ", SELECT: "SELECT",
}
_BIN = {"+": ADD, "-": SUB, "*": MUL, "/": DIV, "^": POW, "min": MIN, "max": MAX}
_FUN = {"sin": SIN, "cos": COS, "tan": TAN, "exp": EXP, "log": LOG, "sqrt": SQRT,
        "abs": ABS, "tanh": TANH}
_CMP = {"<": LT, "<=": LE, ">": GT, ">=": GE, "==": EQ}
# stack effect of each opcode (pushes - pops)
_EFFECT = {CONST: 1, STATE: 1, COUPLING: 1, PARAM: 1, DERIVED: 1, PRE: 1,
           STORE_DERIVED: -1, OUT: -1, SELECT: -2, NEG: 0, **{op: 0 for op in _FUN.values()},
           **{op: -1 for op in (ADD, SUB, MUL, DIV, POW, MIN, MAX, LT, LE, GT, GE, EQ)}}
_POPS = {SELECT: 3, STORE_DERIVED: 1, OUT: 1, NEG: 1, **{op: 1 for op in _FUN.values()},
         **{op: 2 for op in (ADD, SUB, MUL, DIV, POW, MIN, MAX, LT, LE, GT, GE, EQ)}}

# shapes of the pre transform recognised by the coupling kernels
PRE_GENERAL, PRE_IDENTITY, PRE_SIN = 0, 1, 2


@dataclass(frozen=True, eq=False)
class CompiledModel:
    name: str
    n_state: int
    n_coupling: int
    n_derived: int
    state_names: tuple
    param_names: tuple
    param_defaults: np.ndarray
    coupling_names: tuple
    coupling_difference: tuple
    exposure_names: tuple
    consts: np.ndarray
    dfun: np.ndarray
    expose: np.ndarray
    pre: tuple
    pre_kind: tuple
    stack_depth: int
    noise_sigma: np.ndarray
    init_lo: np.ndarray
    init_hi: np.ndarray
    clamp_lo: np.ndarray  # -inf where unbounded
    clamp_hi: np.ndarray
    spec: object = None

    @property
    def n_params(self):
        return len(self.param_names)

    @property
    def n_exposures(self):
        return len(self.exposure_names)

    @property
    def coupling_exposure(self):
        """Index into the exposure list read by edges (always the first)."""
        return 0

    @property
    def has_clamp(self):
        return bool(np.any(np.isfinite(self.clamp_lo)) or np.any(np.isfinite(self.clamp_hi)))

    def param_index(self, name):
        try:
            return self.param_names.index(name)
        except ValueError:
            raise KeyError(f"model {self.name} has no parameter {name!r}") from None

    def disassemble(self):
        """Stable textual listing of every program."""
        out = [f"model {self.name}",
               f"state {' '.join(self.state_names)}",
               f"params {' '.join(self.param_names)}",
               f"coupling {' '.join(self.coupling_names)}",
               f"exposures {' '.join(self.exposure_names)}",
               f"stack_depth {self.stack_depth}",
               "consts"]
        out += [f"  {i:3d} {v!r}" for i, v in enumerate(self.consts.tolist())]
        sections = [("dfun", self.dfun), ("expose", self.expose)]
        sections += [(f"pre {n}", p) for n, p in zip(self.coupling_names, self.pre)]
        for title, prog in sections:
            out.append(title)
            for pc in range(0, len(prog), 2):
                op, arg = int(prog[pc]), int(prog[pc + 1])
                if op < 10:
                    out.append(f"  {pc // 2:4d} {OPNAMES[op]} {arg}")
                else:
                    out.append(f"  {pc // 2:4d} {OPNAMES[op]}")
        return "\n".join(out) + "\n"


class _Emitter:
    def __init__(self, consts, index):
        self.consts = consts
        self.index = index  # name -> (opcode, slot)
        self.code = []

    def const(self, v):
        key = struct.pack("<d", v)
        if key not in self.consts:
            self.consts[key] = len(self.consts)
        self.code += [CONST, self.consts[key]]

    def emit(self, node):
        if isinstance(node, Num):
            self.const(node.value)
        elif isinstance(node, Ident):
            if node.name not in self.index:
                raise DslError(f"undefined identifier {node.name!r}")
            self.code += list(self.index[node.name])
        elif isinstance(node, Neg):
            self.emit(node.operand)
            self.code += [NEG, 0]
        elif isinstance(node, BinOp):
            self.emit(node.left)
            self.emit(node.right)
            self.code += [_BIN[node.op], 0]
        elif isinstance(node, Compare):
            self.emit(node.left)
            self.emit(node.right)
            self.code += [_CMP[node.op], 0]
        elif isinstance(node, Call):
            if node.func == "if":
                for a in node.args:
                    self.emit(a)
                self.code += [SELECT, 0]
            elif node.func in _FUN:
                self.emit(node.args[0])
                self.code += [_FUN[node.func], 0]
            else:
                self.emit(node.args[0])
                self.emit(node.args[1])
                self.code += [_BIN[node.func], 0]
        else:
            raise TypeError(node)


def _needed_derived(exprs, derived):
    """Derived names (in evaluation order) reachable from ``exprs``."""
    need, stack = set(), []
    for e in exprs:
        stack.extend(identifiers(e))
    while stack:
        n = stack.pop()
        if n in derived and n not in need:
            need.add(n)
            stack.extend(identifiers(derived[n]))
    return need


def max_stack_depth(code):
    """Static stack depth of a program; raises on underflow or leftovers."""
    depth = peak = 0
    for pc in range(0, len(code), 2):
        op = int(code[pc])
        if depth < _POPS.get(op, 0):
            raise DslError(f"bytecode stack underflow at instruction {pc // 2}")
        depth += _EFFECT[op]
        peak = max(peak, depth)
    if depth != 0:
        raise DslError(f"bytecode leaves {depth} values on the stack")
    return peak


def _pre_kind(node):
    if node == Ident(PRE_SYMBOL):
        return PRE_IDENTITY
    if node == Call("sin", (Ident(PRE_SYMBOL),)):
        return PRE_SIN
    return PRE_GENERAL


def compile_model(spec, fold=True):
    """Compile ``spec``; ``fold=False`` keeps literal subtrees (for testing)."""
    spec = validate(spec)
    tx = fold_constants if fold else (lambda e: e)
    index = {}
    for k, n in enumerate(spec.state_names):
        index[n] = (STATE, k)
    for k, c in enumerate(spec.coupling_terms):
        index[c.name] = (COUPLING, k)
    for k, n in enumerate(spec.param_names):
        index[n] = (PARAM, k)
    for k, d in enumerate(spec.derived_vars):
        index[d.name] = (DERIVED, k)
    derived = {d.name: tx(d.expr) for d in spec.derived_vars}
    slot = {d.name: k for k, d in enumerate(spec.derived_vars)}
    consts = {}

    def program(outputs):
        em = _Emitter(consts, index)
        need = _needed_derived(outputs, derived)
        for d in spec.derived_vars:
            if d.name in need:
                em.emit(derived[d.name])
                em.code += [STORE_DERIVED, slot[d.name]]
        for k, e in enumerate(outputs):
            em.emit(e)
            em.code += [OUT, k]
        return np.array(em.code, dtype=np.int64)

    dfun = program([tx(d) for d in spec.derivatives])
    expose = program([Ident(e) for e in spec.exposures])
    pre, kinds = [], []
    for c in spec.coupling_terms:
        em = _Emitter(consts, {PRE_SYMBOL: (PRE, 0)})
        body = tx(c.pre)
        em.emit(body)
        em.code += [OUT, 0]
        pre.append(np.array(em.code, dtype=np.int64))
        kinds.append(_pre_kind(body))
    depth = max(max_stack_depth(p) for p in [dfun, expose, *pre])

    pool = np.array([struct.unpack("<d", k)[0] for k in consts], dtype=np.float64)
    lo = np.array([-np.inf if s.clamp_lo is None else s.clamp_lo for s in spec.state_vars])
    hi = np.array([np.inf if s.clamp_hi is None else s.clamp_hi for s in spec.state_vars])
    for a in (dfun, expose, pool, lo, hi, *pre):
        a.setflags(write=False)
    return CompiledModel(
        name=spec.name,
        n_state=spec.n_state,
        n_coupling=spec.n_coupling,
        n_derived=len(spec.derived_vars),
        state_names=tuple(spec.state_names),
        param_names=tuple(spec.param_names),
        param_defaults=np.array([p.default for p in spec.parameters], dtype=np.float64),
        coupling_names=tuple(c.name for c in spec.coupling_terms),
        coupling_difference=tuple(c.difference for c in spec.coupling_terms),
        exposure_names=tuple(spec.exposures),
        consts=pool,
        dfun=dfun,
        expose=expose,
        pre=tuple(pre),
        pre_kind=tuple(kinds),
        stack_depth=depth,
        noise_sigma=np.array(spec.noise_sigma, dtype=np.float64),
        init_lo=np.array([s.init_lo for s in spec.state_vars]),
        init_hi=np.array([s.init_hi for s in spec.state_vars]),
        clamp_lo=lo,
        clamp_hi=hi,
        spec=spec,
    )
