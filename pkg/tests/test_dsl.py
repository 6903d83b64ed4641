from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neuroloom.dsl import (asset_text, compile_model, eval_derivatives, eval_pre, get_builtin,
                           load_model, parse_expr, parse_model, print_model, to_text)
from neuroloom.dsl.compiler import CONST
from neuroloom.dsl.expr import BinOp, Ident, Neg, Num, evaluate, fold_constants
from neuroloom.errors import DslError, NumericFault
from oracles import ast_derivatives

GOLDEN = Path(__file__).parent / "golden"
MODELS = ["ReducedWongWang", "Kuramoto", "Epileptor"]


def model_xml(body, name="M"):
    return f'<?xml version="1.0"?>\n<Model name="{name}">\n{body}\n</Model>\n'


MINIMAL = model_xml('''  <StateVariable name="x" init_lo="0" init_hi="1"/>
  <TimeDerivative variable="x" value="-x"/>
  <Exposure name="x"/>''')


def test_minimal_model():
    spec = parse_model(MINIMAL)
    assert spec.n_state == 1
    assert spec.derivative("x") == Neg(Ident("x"))
    m = compile_model(spec)
    assert eval_derivatives(m, [2.0]).tolist() == [-2.0]


def test_undefined_symbol_is_named():
    bad = MINIMAL.replace('value="-x"', 'value="-x + q"')
    with pytest.raises(DslError, match="'q'") as exc:
        parse_model(bad)
    assert exc.value.line is not None


@pytest.mark.parametrize("body,match", [
    ('<StateVariable name="x" init_lo="0" init_hi="1"/><Exposure name="x"/>', "derivative"),
    ('<StateVariable name="x" init_lo="0" init_hi="1"/><Parameter name="x" default="1"/>'
     '<TimeDerivative variable="x" value="-x"/><Exposure name="x"/>', "duplicate"),
    ('<StateVariable name="x" init_lo="0" init_hi="1"/><DerivedVariable name="a" value="b"/>'
     '<DerivedVariable name="b" value="a"/><TimeDerivative variable="x" value="a"/>'
     '<Exposure name="x"/>', "cycl"),
    ('<StateVariable name="x" init_lo="0" init_hi="1" colour="red"/>'
     '<TimeDerivative variable="x" value="-x"/><Exposure name="x"/>', "colour"),
    ('<Widget/><StateVariable name="x" init_lo="0" init_hi="1"/>'
     '<TimeDerivative variable="x" value="-x"/><Exposure name="x"/>', "Widget"),
    ('<StateVariable name="x" init_lo="2" init_hi="1"/>'
     '<TimeDerivative variable="x" value="-x"/><Exposure name="x"/>', "init"),
])
def test_contract_errors(body, match):
    with pytest.raises(DslError, match=match):
        parse_model(model_xml(body))


def test_xml_syntax_error():
    with pytest.raises(DslError):
        parse_model("<Model name='x'><StateVariable")


def test_derived_variables_are_reordered():
    spec = parse_model(model_xml('''<StateVariable name="x" init_lo="0" init_hi="1"/>
  <DerivedVariable name="b" value="a * 2"/>
  <DerivedVariable name="a" value="x + 1"/>
  <TimeDerivative variable="x" value="b"/><Exposure name="x"/>'''))
    assert [d.name for d in spec.derived_vars] == ["a", "b"]
    assert eval_derivatives(compile_model(spec), [1.0]).tolist() == [4.0]


def test_shipped_assets():
    rww = get_builtin("ReducedWongWang")[0]
    assert rww.n_state == 1 and len(rww.parameters) >= 9 and rww.n_coupling == 1
    assert get_builtin("Kuramoto")[0].n_state == 1
    assert load_model("Epileptor").n_state == 6


def test_unknown_builtin_lists_models():
    with pytest.raises(DslError, match="ReducedWongWang"):
        get_builtin("Montbrio")


def test_constant_folding_single_constant():
    spec = parse_model(model_xml('''<StateVariable name="x" init_lo="0" init_hi="1"/>
  <TimeDerivative variable="x" value="2*3 + x"/><Exposure name="x"/>'''))
    m = compile_model(spec)
    assert m.consts.tolist() == [6.0]
    consts_loaded = [m.dfun[i + 1] for i in range(0, len(m.dfun), 2) if m.dfun[i] == CONST]
    assert consts_loaded == [0]
    assert eval_derivatives(m, [1.5]).tolist() == [7.5]


def test_folding_is_exact_on_literal_subtrees():
    for text in ["2^0.5 * 3", "exp(1) - sin(2) / 7", "if(1 < 2, 3, 4) + max(2, -5)"]:
        e = parse_expr(text)
        folded = fold_constants(e)
        assert isinstance(folded, Num)
        assert folded.value == evaluate(e, {})


def test_folded_and_unfolded_programs_agree():
    xml = asset_text("ReducedWongWang").replace('value="-S / tau_s', 'value="(2 * 0.5) * -S / tau_s')
    spec = parse_model(xml)
    a, b = compile_model(spec, fold=True), compile_model(spec, fold=False)
    assert len(a.consts) < len(b.consts)
    for s in np.linspace(0, 1, 11):
        x, y = eval_derivatives(a, [s], [0.3]), eval_derivatives(b, [s], [0.3])
        assert np.allclose(x, y, rtol=1e-15, atol=0)


def _random_points(m, n, seed):
    gen = np.random.default_rng(seed)
    state = gen.uniform(m.init_lo[:, None], m.init_hi[:, None], size=(m.n_state, n))
    coupling = gen.normal(0.0, 0.5, size=(m.n_coupling, n))
    params = m.param_defaults[:, None] * gen.uniform(0.9, 1.1, size=(m.n_params, n))
    return np.ascontiguousarray(state), np.ascontiguousarray(coupling), np.ascontiguousarray(params)


@pytest.mark.parametrize("name", MODELS)
def test_bytecode_matches_ast_interpreter(backend, name):
    m = load_model(name)
    n = 1000
    state, coupling, params = _random_points(m, n, seed=len(name))
    out = np.empty((m.n_state, n))
    backend.run_program(m.dfun, m.consts, state, coupling, params, out, 0, n, m.stack_depth,
                        m.n_derived)
    ref = ast_derivatives(m.spec, state, coupling, params)
    assert np.all(np.abs(out - ref) <= 1e-14 * (1 + np.abs(ref)))


@pytest.mark.parametrize("name", MODELS)
def test_native_matches_bytecode(backend, name):
    m = load_model(name)
    native = get_builtin(name)[1]
    n = 1000
    state, coupling, params = _random_points(m, n, seed=99)
    a, b = np.empty((m.n_state, n)), np.empty((m.n_state, n))
    backend.run_program(m.dfun, m.consts, state, coupling, params, a, 0, n, m.stack_depth,
                        m.n_derived)
    backend.native_dfun(native.kind, state, coupling, params, b, 0, n)
    assert np.all(np.abs(a - b) <= 1e-12 * (1 + np.abs(a)))


def test_rww_removable_singularity():
    m = load_model("ReducedWongWang")
    p = dict(zip(m.param_names, m.param_defaults))
    # x = b / a exactly with zero coupling: w*J*S + I_o = 0.4
    S = (p["b"] / p["a"] - p["I_o"]) / (p["w"] * p["J"])
    d = eval_derivatives(m, [S], [0.0])[0]
    H = 1.0 / p["d"]
    expected = -S / p["tau_s"] + (1 - S) * p["gamma"] * H * p["rate_unit"]
    assert H == pytest.approx(6.4935, abs=1e-4)
    assert d == pytest.approx(expected, rel=1e-9)
    assert np.isfinite(d)


def test_kuramoto_free_oscillator():
    m = load_model("Kuramoto")
    assert eval_derivatives(m, [1.0], [0.0], [0.37])[0] == 0.37


def test_eval_pre():
    rww, kur = load_model("ReducedWongWang"), load_model("Kuramoto")
    assert eval_pre(rww, 0, 0.123) == 0.123
    assert eval_pre(kur, 0, 0.5) == pytest.approx(np.sin(0.5), abs=0)
    sq = compile_model(parse_model(model_xml('''<StateVariable name="x" init_lo="0" init_hi="1"/>
  <Coupling name="c" pre="pre^2"/><TimeDerivative variable="x" value="c"/><Exposure name="x"/>''')))
    assert eval_pre(sq, 0, 3.0) == 9.0
    with pytest.raises(IndexError):
        eval_pre(sq, 1, 3.0)


def test_non_finite_derivative_names_variable():
    m = compile_model(parse_model(model_xml('''<StateVariable name="x" init_lo="0" init_hi="1"/>
  <TimeDerivative variable="x" value="log(x)"/><Exposure name="x"/>''')))
    with pytest.raises(NumericFault, match="'x'"):
        eval_derivatives(m, [-1.0])


def test_ieee_semantics_inside_guarded_expressions():
    m = compile_model(parse_model(model_xml('''<StateVariable name="x" init_lo="0" init_hi="1"/>
  <TimeDerivative variable="x" value="if(x > 0, log(x), 1)"/><Exposure name="x"/>''')))
    assert eval_derivatives(m, [0.0])[0] == 1.0


@pytest.mark.parametrize("name", MODELS)
def test_parse_print_parse(name):
    spec = parse_model(asset_text(name))
    again = parse_model(print_model(spec))
    assert again == spec
    assert print_model(again) == print_model(spec)


@pytest.mark.parametrize("name,fname", [("ReducedWongWang", "reduced_wong_wang"),
                                        ("Kuramoto", "kuramoto"), ("Epileptor", "epileptor")])
def test_disassembly_golden(name, fname):
    assert load_model(name).disassemble() == (GOLDEN / f"{fname}.dis").read_text()


def test_stack_depth_is_bounded(backend):
    m = load_model("Epileptor")
    assert 1 <= m.stack_depth <= 16


_ATOMS = st.sampled_from(["x", "y", "1.5", "2", "0.25"])


def _exprs():
    return st.recursive(
        _ATOMS,
        lambda inner: st.one_of(
            st.tuples(inner, st.sampled_from(["+", "-", "*"]), inner).map(
                lambda t: f"({t[0]} {t[1]} {t[2]})"),
            inner.map(lambda e: f"-{e}"),
            st.tuples(st.sampled_from(["sin", "cos", "tanh", "abs"]), inner).map(
                lambda t: f"{t[0]}({t[1]})"),
            st.tuples(inner, inner).map(lambda t: f"max({t[0]}, {t[1]})"),
            st.tuples(inner, inner, inner).map(lambda t: f"if({t[0]} < {t[1]}, {t[1]}, {t[2]})"),
        ), max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(text=_exprs(), x=st.floats(-3, 3), y=st.floats(-3, 3))
def test_expression_text_round_trip_and_folding(text, x, y):
    e = parse_expr(text)
    assert parse_expr(to_text(e)) == e
    env = {"x": x, "y": y}
    v = evaluate(e, env)
    assert evaluate(fold_constants(e), env) == pytest.approx(v, rel=1e-15, abs=1e-15)


def test_power_synonyms():
    a, b = parse_expr("x ^ 2"), parse_expr("pow(x, 2)")
    assert evaluate(a, {"x": 3.0}) == evaluate(b, {"x": 3.0}) == 9.0
    assert isinstance(a, BinOp)
