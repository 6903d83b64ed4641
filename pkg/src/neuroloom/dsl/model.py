"""XML model descriptions: parsing, validation and canonical printing.

The schema is documented in ``docs/dsl.md``.
"""
from dataclasses import dataclass, field
from xml.parsers import expat
from xml.sax.saxutils import quoteattr

from ..errors import DslError
from .expr import identifiers, parse_expr, to_text

PRE_SYMBOL = "pre"


@dataclass(frozen=True)
class Parameter:
    name: str
    default: float


@dataclass(frozen=True)
class StateVariable:
    name: str
    init_lo: float
    init_hi: float
    clamp_lo: float = None
    clamp_hi: float = None


@dataclass(frozen=True)
class DerivedVariable:
    name: str
    expr: object


@dataclass(frozen=True)
class CouplingTerm:
    name: str
    pre: object
    difference: bool = False


@dataclass(frozen=True)
class ModelSpec:
    name: str
    parameters: tuple
    state_vars: tuple
    derived_vars: tuple
    coupling_terms: tuple
    exposures: tuple
    derivatives: tuple  # one Expr per state variable, same order
    noise_sigma: tuple
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_state(self):
        return len(self.state_vars)

    @property
    def n_coupling(self):
        return len(self.coupling_terms)

    @property
    def state_names(self):
        return [s.name for s in self.state_vars]

    @property
    def param_names(self):
        return [p.name for p in self.parameters]

    def derivative(self, name):
        return self.derivatives[self.state_names.index(name)]


# -- lightweight element tree with line numbers ------------------------------------

@dataclass
class _Elem:
    tag: str
    attrs: dict
    line: int
    children: list = field(default_factory=list)
    text: str = ""


def _read_xml(text):
    parser = expat.ParserCreate()
    root, stack = [], []

    def start(tag, attrs):
        el = _Elem(tag, dict(attrs), parser.CurrentLineNumber)
        if stack:
            stack[-1].children.append(el)
        else:
            root.append(el)
        stack.append(el)

    def end(tag):
        stack.pop()

    def chars(data):
        if stack:
            stack[-1].text += data

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars
    try:
        parser.Parse(text.encode("utf-8") if isinstance(text, str) else text, True)
    except expat.ExpatError as exc:
        raise DslError(f"XML syntax error: {expat.ErrorString(exc.code)}", exc.lineno) from None
    return root[0]


_SCHEMA = {
    "Parameter": ({"name", "default"}, {"name", "default"}),
    "StateVariable": ({"name", "init_lo", "init_hi"}, {"name", "init_lo", "init_hi", "clamp_lo", "clamp_hi"}),
    "DerivedVariable": ({"name", "value"}, {"name", "value"}),
    "Coupling": ({"name", "pre"}, {"name", "pre", "difference"}),
    "TimeDerivative": ({"variable", "value"}, {"variable", "value"}),
    "Exposure": ({"name"}, {"name"}),
    "Noise": ({"variable", "sigma"}, {"variable", "sigma"}),
    "Description": (set(), set()),
}


def _check_attrs(el):
    required, allowed = _SCHEMA[el.tag]
    for a in el.attrs:
        if a not in allowed:
            raise DslError(f"unknown attribute {a!r} on <{el.tag}>", el.line)
    for a in required:
        if a not in el.attrs:
            raise DslError(f"<{el.tag}> requires attribute {a!r}", el.line)


def _real(el, attr):
    raw = el.attrs[attr]
    try:
        return float(raw)
    except ValueError:
        raise DslError(f"attribute {attr}={raw!r} on <{el.tag}> is not a number", el.line) from None


def _expr(el, attr):
    try:
        return parse_expr(el.attrs[attr])
    except DslError as exc:
        raise DslError(f"<{el.tag}> {attr}: {exc}", el.line) from None


def _bool(el, attr, default=False):
    raw = el.attrs.get(attr)
    if raw is None:
        return default
    if raw in ("true", "1"):
        return True
    if raw in ("false", "0"):
        return False
    raise DslError(f"attribute {attr}={raw!r} must be true or false", el.line)


def parse_model(xml_text):
    """Parse and validate a model description."""
    root = _read_xml(xml_text)
    if root.tag != "Model":
        raise DslError(f"root element must be <Model>, got <{root.tag}>", root.line)
    for a in root.attrs:
        if a != "name":
            raise DslError(f"unknown attribute {a!r} on <Model>", root.line)
    name = root.attrs.get("name")
    if not name:
        raise DslError("<Model> requires attribute 'name'", root.line)

    params, svars, dvars, couplings, exposures = [], [], [], [], []
    derivs, noise, lines = {}, {}, {}
    description = ""
    for el in root.children:
        if el.tag not in _SCHEMA:
            raise DslError(f"unknown element <{el.tag}>", el.line)
        _check_attrs(el)
        if el.tag == "Description":
            description = el.text.strip()
            continue
        if el.tag == "Parameter":
            params.append(Parameter(el.attrs["name"], _real(el, "default")))
        elif el.tag == "StateVariable":
            sv = StateVariable(
                el.attrs["name"], _real(el, "init_lo"), _real(el, "init_hi"),
                _real(el, "clamp_lo") if "clamp_lo" in el.attrs else None,
                _real(el, "clamp_hi") if "clamp_hi" in el.attrs else None)
            if sv.init_lo > sv.init_hi:
                raise DslError(f"state variable {sv.name!r}: init_lo > init_hi", el.line)
            if sv.clamp_lo is not None and sv.clamp_hi is not None and sv.clamp_lo > sv.clamp_hi:
                raise DslError(f"state variable {sv.name!r}: clamp_lo > clamp_hi", el.line)
            svars.append(sv)
        elif el.tag == "DerivedVariable":
            dvars.append(DerivedVariable(el.attrs["name"], _expr(el, "value")))
        elif el.tag == "Coupling":
            couplings.append(CouplingTerm(el.attrs["name"], _expr(el, "pre"),
                                          _bool(el, "difference")))
        elif el.tag == "TimeDerivative":
            var = el.attrs["variable"]
            if var in derivs:
                raise DslError(f"duplicate time derivative for {var!r}", el.line)
            derivs[var] = _expr(el, "value")
        elif el.tag == "Exposure":
            exposures.append(el.attrs["name"])
        elif el.tag == "Noise":
            var = el.attrs["variable"]
            if var in noise:
                raise DslError(f"duplicate noise for {var!r}", el.line)
            sigma = _real(el, "sigma")
            if not sigma >= 0:
                raise DslError(f"noise sigma for {var!r} must be >= 0", el.line)
            noise[var] = sigma
        key = el.attrs.get("name") or el.attrs.get("variable")
        lines.setdefault((el.tag, key), el.line)

    spec = ModelSpec(
        name=name,
        parameters=tuple(params),
        state_vars=tuple(svars),
        derived_vars=tuple(dvars),
        coupling_terms=tuple(couplings),
        exposures=tuple(exposures),
        derivatives=tuple(derivs.get(s.name) for s in svars),
        noise_sigma=tuple(noise.get(s.name, 0.0) for s in svars),
        meta={"description": description},
    )
    return validate(spec, lines, derivs, noise)


def validate(spec, lines=None, derivs=None, noise=None):
    """Check every ModelSpec invariant; return the spec with derived vars sorted.

    ``lines`` maps ``(tag, name)`` to source lines for diagnostics.
    """
    lines = lines or {}

    def line(tag, key):
        return lines.get((tag, key))

    seen = {}
    groups = (("Parameter", spec.param_names), ("StateVariable", spec.state_names),
              ("DerivedVariable", [d.name for d in spec.derived_vars]),
              ("Coupling", [c.name for c in spec.coupling_terms]))
    for tag, names in groups:
        for n in names:
            if n == PRE_SYMBOL:
                raise DslError(f"{n!r} is reserved for the pre-synaptic value", line(tag, n))
            if n in seen:
                raise DslError(f"duplicate name {n!r}", line(tag, n))
            seen[n] = tag
    if not spec.state_vars:
        raise DslError("model declares no state variable")

    if derivs is not None:
        for var in derivs:
            if var not in spec.state_names:
                raise DslError(f"time derivative for undeclared state variable {var!r}",
                               line("TimeDerivative", var))
    if noise is not None:
        for var in noise:
            if var not in spec.state_names:
                raise DslError(f"noise for undeclared state variable {var!r}", line("Noise", var))
    for sv, d in zip(spec.state_vars, spec.derivatives):
        if d is None:
            raise DslError(f"missing time derivative for state variable {sv.name!r}",
                           line("StateVariable", sv.name))

    base = set(spec.param_names) | set(spec.state_names) | {c.name for c in spec.coupling_terms}
    derived = {d.name: d for d in spec.derived_vars}

    def check(expr, allowed, tag, key):
        for ident in sorted(identifiers(expr)):
            if ident not in allowed:
                raise DslError(f"undefined identifier {ident!r} in {tag} {key!r}", line(tag, key))

    for d in spec.derived_vars:
        check(d.expr, base | set(derived), "DerivedVariable", d.name)
    for c in spec.coupling_terms:
        check(c.pre, {PRE_SYMBOL}, "Coupling", c.name)
    for sv, d in zip(spec.state_vars, spec.derivatives):
        check(d, base | set(derived), "TimeDerivative", sv.name)

    ordered = _topo_sort(spec.derived_vars, lines)

    if not spec.exposures:
        raise DslError("model declares no exposure")
    for e in spec.exposures:
        if e not in spec.state_names and e not in derived:
            raise DslError(f"exposure {e!r} is not a state or derived variable", line("Exposure", e))
    if len(set(spec.exposures)) != len(spec.exposures):
        raise DslError("duplicate exposure")
    first = spec.exposures[0]
    if first in derived and _depends_on_coupling(first, derived, spec):
        raise DslError(f"coupling exposure {first!r} must not depend on coupling terms",
                       line("Exposure", first))
    if len(spec.noise_sigma) != spec.n_state or any(s < 0 for s in spec.noise_sigma):
        raise DslError("noise sigma must be given per state variable and be >= 0")

    return ModelSpec(spec.name, spec.parameters, spec.state_vars, tuple(ordered),
                     spec.coupling_terms, spec.exposures, spec.derivatives,
                     spec.noise_sigma, spec.meta)


def _topo_sort(dvars, lines):
    names = [d.name for d in dvars]
    deps = {d.name: identifiers(d.expr) & set(names) for d in dvars}
    done, out = set(), []
    # stable Kahn: repeatedly take the first ready variable in declaration order
    while len(out) < len(dvars):
        for d in dvars:
            if d.name not in done and deps[d.name] <= done:
                done.add(d.name)
                out.append(d)
                break
        else:
            cyc = [n for n in names if n not in done]
            raise DslError(f"cyclic derived-variable dependency among {cyc}",
                           lines.get(("DerivedVariable", cyc[0])))
    return out


def _depends_on_coupling(name, derived, spec):
    cnames = {c.name for c in spec.coupling_terms}
    stack, seen = [name], set()
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        ids = identifiers(derived[n].expr)
        if ids & cnames:
            return True
        stack.extend(i for i in ids if i in derived)
    return False


def print_model(spec):
    """Canonical XML for ``spec``; ``parse_model(print_model(s)) == s``."""
    q = quoteattr
    out = [f"<Model name={q(spec.name)}>"]
    if spec.meta.get("description"):
        from xml.sax.saxutils import escape
        out.append(f"  <Description>{escape(spec.meta['description'])}</Description>")
    for p in spec.parameters:
        out.append(f"  <Parameter name={q(p.name)} default={q(repr(p.default))}/>")
    for s in spec.state_vars:
        extra = ""
        if s.clamp_lo is not None:
            extra += f" clamp_lo={q(repr(s.clamp_lo))}"
        if s.clamp_hi is not None:
            extra += f" clamp_hi={q(repr(s.clamp_hi))}"
        out.append(f"  <StateVariable name={q(s.name)} init_lo={q(repr(s.init_lo))} "
                   f"init_hi={q(repr(s.init_hi))}{extra}/>")
    for d in spec.derived_vars:
        out.append(f"  <DerivedVariable name={q(d.name)} value={q(to_text(d.expr))}/>")
    for c in spec.coupling_terms:
        diff = ' difference="true"' if c.difference else ""
        out.append(f"  <Coupling name={q(c.name)} pre={q(to_text(c.pre))}{diff}/>")
    for s, d in zip(spec.state_vars, spec.derivatives):
        out.append(f"  <TimeDerivative variable={q(s.name)} value={q(to_text(d))}/>")
    for e in spec.exposures:
        out.append(f"  <Exposure name={q(e)}/>")
    for s, sigma in zip(spec.state_vars, spec.noise_sigma):
        out.append(f"  <Noise variable={q(s.name)} sigma={q(repr(sigma))}/>")
    out.append("</Model>")
    return "\n".join(out) + "\n"
