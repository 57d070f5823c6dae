"""Expressions, their parser, and compilation into reaction networks.

Non-negative mode lowers +, *, /, roots, abs-differences, rectified
subtraction and max directly onto gates.  Real mode represents every
value as a dual-rail pair (u_p, u_n) encoding u_p - u_n and lowers the
field operations +, -, *, / onto rail arithmetic; max, abs, rsub and
roots are rejected there because the gates computing them are only
defined on non-negative quantities.

Compilation is deterministic: same expression and mode, byte-identical
program text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence, Union

from .crn import (FormatError, ReactionNetwork, Species, collect_network,
                  format_network, parse_network)
from .gates import (DomainError, GateInstance, GateKind, SpeciesNamer,
                    SpeedBound, gate_speed_bound, gate_target, make_gate)


class ParseError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"col {pos + 1}: {message}")
        self.pos = pos


class ModeError(ValueError):
    """Expression uses an operation the selected mode cannot lower."""


# ---------------------------------------------------------------------------
# expression trees


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Const(Expr):
    value: Fraction


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Neg(Expr):
    child: Expr


@dataclass(frozen=True)
class Root(Expr):
    m: int
    child: Expr


@dataclass(frozen=True)
class AbsDiff(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Max(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class RectSub(Expr):
    left: Expr
    right: Expr


def free_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Const):
        return set()
    if isinstance(e, (Neg, Root)):
        return free_vars(e.child)
    return free_vars(e.left) | free_vars(e.right)


# ---------------------------------------------------------------------------
# parser

_TOKEN_RE = re.compile(r"\s*(?:(\d+(?:\.\d+)?)|([A-Za-z_][A-Za-z0-9_]*)|([-+*/(),]))")
_FUNCTIONS = ("sqrt", "root", "abs", "max", "rsub")


@dataclass(frozen=True)
class _Tok:
    kind: str  # num, ident, op, end
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks, i = [], 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if not m:
            stripped = text[i:].lstrip()
            if not stripped:
                break
            raise ParseError(f"unexpected character {stripped[0]!r}",
                             len(text) - len(stripped))
        if m.group(1):
            toks.append(_Tok("num", m.group(1), m.start(1)))
        elif m.group(2):
            toks.append(_Tok("ident", m.group(2), m.start(2)))
        else:
            toks.append(_Tok("op", m.group(3), m.start(3)))
        i = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.next()
        if t.kind == "end" or t.text != text:
            raise ParseError(f"expected {text!r}, got {t.text or 'end of input'!r}", t.pos)
        return t

    def parse(self) -> Expr:
        e = self.expr()
        t = self.peek()
        if t.kind != "end":
            raise ParseError(f"trailing input {t.text!r}", t.pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek().text in ("+", "-") and self.peek().kind == "op":
            op = self.next().text
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek().text in ("*", "/") and self.peek().kind == "op":
            op = self.next().text
            rhs = self.factor()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def factor(self) -> Expr:
        t = self.next()
        if t.kind == "num":
            return Const(Fraction(t.text))
        if t.kind == "ident":
            if t.text in _FUNCTIONS and self.peek().text == "(":
                return self.call(t)
            return Var(t.text)
        if t.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if t.text == "-":
            inner = self.factor()
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Neg(inner)
        raise ParseError(f"expected a value, got {t.text or 'end of input'!r}", t.pos)

    def call(self, name: _Tok) -> Expr:
        self.expect("(")
        if name.text == "sqrt":
            e = self.expr()
            self.expect(")")
            return Root(2, e)
        if name.text == "root":
            t = self.next()
            if t.kind != "num" or "." in t.text or int(t.text) < 2:
                raise ParseError("root degree must be an integer >= 2", t.pos)
            self.expect(",")
            e = self.expr()
            self.expect(")")
            return Root(int(t.text), e)
        if name.text == "abs":
            e = self.expr()
            self.expect(")")
            if not isinstance(e, Sub):
                raise ParseError("abs takes a difference: abs(e1 - e2)", name.pos)
            return AbsDiff(e.left, e.right)
        ctor = Max if name.text == "max" else RectSub
        a = self.expr()
        self.expect(",")
        b = self.expr()
        self.expect(")")
        return ctor(a, b)


def parse_expression(text: str) -> Expr:
    return _Parser(text).parse()


def eval_expr(e: Expr | str, values: Mapping[str, float]) -> float:
    """Evaluate an expression numerically; the reference its compiled
    network is supposed to converge to."""
    if isinstance(e, str):
        e = parse_expression(e)
    def ev(x: Expr) -> float:
        if isinstance(x, Const):
            return float(x.value)
        if isinstance(x, Var):
            if x.name not in values:
                raise ValueError(f"no value for variable {x.name!r}")
            return float(values[x.name])
        if isinstance(x, Neg):
            return -ev(x.child)
        if isinstance(x, Root):
            v = ev(x.child)
            if v < 0:
                raise DomainError("root of a negative value")
            return v ** (1.0 / x.m)
        l, r = ev(x.left), ev(x.right)
        if isinstance(x, Add):
            return l + r
        if isinstance(x, Sub):
            return l - r
        if isinstance(x, Mul):
            return l * r
        if isinstance(x, Div):
            if r == 0:
                raise DomainError("division by a zero limit")
            return l / r
        if isinstance(x, AbsDiff):
            return abs(l - r)
        if isinstance(x, Max):
            return max(l, r)
        if isinstance(x, RectSub):
            return max(l - r, 0.0)
        raise AssertionError(x)  # pragma: no cover
    return ev(e)


# ---------------------------------------------------------------------------
# circuits


@dataclass(frozen=True)
class DualRailWire:
    p: Species
    n: Species


Value = Union[Species, DualRailWire]


@dataclass
class Circuit:
    mode: str
    gates: tuple[GateInstance, ...]
    inputs: dict[str, Value]
    consts: dict[str, Fraction]  # species id -> pinned value
    output: Value
    source: str | None = None

    def gate_outputs(self) -> set[str]:
        return {g.output.id for g in self.gates}


class CircuitBuilder:
    """Incremental circuit construction; also the lowering backend.

    Gate outputs are X{n} and inner species Y{n}, one index per gate.
    Input species take the uppercased variable name (rails get _p/_n),
    constants are pinned K{n} species deduplicated by value.
    """

    def __init__(self, mode: str = "nonneg"):
        if mode not in ("nonneg", "real"):
            raise ValueError(f"mode must be 'nonneg' or 'real', got {mode!r}")
        self.mode = mode
        self.namer = SpeciesNamer()
        self.gates: list[GateInstance] = []
        self.inputs: dict[str, Value] = {}
        self.consts: dict[str, Fraction] = {}
        self._const_cache: dict[Fraction, Species] = {}
        self._cse: dict[Expr, Value] = {}
        self._zero: Species | None = None

    def reserve(self, *names: str):
        self.namer.reserve(*names)

    def input_species(self, name: str) -> Value:
        if name in self.inputs:
            return self.inputs[name]
        base = name.upper()
        if self.mode == "nonneg":
            sid = base
            self.namer.reserve(sid)
            val: Value = Species(sid, "input")
        else:
            self.namer.reserve(base + "_p", base + "_n")
            val = DualRailWire(Species(base + "_p", "input"),
                               Species(base + "_n", "input"))
        self.inputs[name] = val
        return val

    def const_species(self, value: Fraction) -> Species:
        if value < 0:
            raise ValueError("const species hold non-negative values")
        if value in self._const_cache:
            return self._const_cache[value]
        sid = self.namer.fresh("K")
        sp = Species(sid, "input")
        self._const_cache[value] = sp
        self.consts[sid] = value
        return sp

    def zero_species(self) -> Species:
        if self._zero is None:
            self._zero = self.const_species(Fraction(0))
        return self._zero

    def gate(self, kind: GateKind, inputs: Sequence[Species]) -> Species:
        g = make_gate(kind, inputs, self.namer)
        self.gates.append(g)
        return g.output

    # rail arithmetic (real mode recipes)

    def normalize(self, w: DualRailWire) -> DualRailWire:
        rsub = GateKind("rectified_subtraction")
        return DualRailWire(self.gate(rsub, [w.p, w.n]),
                            self.gate(rsub, [w.n, w.p]))

    def neg_wire(self, w: DualRailWire) -> DualRailWire:
        ident = GateKind("identification")
        return DualRailWire(self.gate(ident, [w.n]), self.gate(ident, [w.p]))

    def add_wires(self, a: DualRailWire, b: DualRailWire) -> DualRailWire:
        add = GateKind("addition")
        raw = DualRailWire(self.gate(add, [a.p, b.p]), self.gate(add, [a.n, b.n]))
        return self.normalize(raw)

    def mul_wires(self, a: DualRailWire, b: DualRailWire) -> DualRailWire:
        mul, add = GateKind("multiplication"), GateKind("addition")
        pp = self.gate(mul, [a.p, b.p])
        nn = self.gate(mul, [a.n, b.n])
        pn = self.gate(mul, [a.p, b.n])
        np_ = self.gate(mul, [a.n, b.p])
        return DualRailWire(self.gate(add, [pp, nn]), self.gate(add, [pn, np_]))

    def inv_wire(self, w: DualRailWire) -> DualRailWire:
        pri = GateKind("partial_real_inversion")
        return DualRailWire(self.gate(pri, [w.p, w.n]),
                            self.gate(pri, [w.n, w.p]))

    # lowering

    def lower(self, e: Expr) -> Value:
        if e in self._cse:
            return self._cse[e]
        val = self._lower(e)
        self._cse[e] = val
        return val

    def _lower_nonneg(self, e: Expr) -> Species:
        if isinstance(e, Const):
            if e.value < 0:
                raise ModeError("negative constant needs real mode")
            return self.const_species(e.value)
        if isinstance(e, Var):
            return self.inputs.get(e.name) or self.input_species(e.name)
        if isinstance(e, (Sub, Neg)):
            raise ModeError("subtraction is not expressible over non-negative "
                            "values; use rsub, abs, or real mode")
        if isinstance(e, Add):
            return self.gate(GateKind("addition"),
                             [self.lower(e.left), self.lower(e.right)])
        if isinstance(e, Mul):
            return self.gate(GateKind("multiplication"),
                             [self.lower(e.left), self.lower(e.right)])
        if isinstance(e, Div):
            inv = self.gate(GateKind("inversion"), [self.lower(e.right)])
            if e.left == Const(Fraction(1)):
                return inv
            return self.gate(GateKind("multiplication"), [self.lower(e.left), inv])
        if isinstance(e, Root):
            return self.gate(GateKind("mth_root", e.m), [self.lower(e.child)])
        if isinstance(e, AbsDiff):
            return self.gate(GateKind("absolute_difference"),
                             [self.lower(e.left), self.lower(e.right)])
        if isinstance(e, RectSub):
            return self.gate(GateKind("rectified_subtraction"),
                             [self.lower(e.left), self.lower(e.right)])
        if isinstance(e, Max):
            # max(a,b) = (a + |a-b| + b) / 2
            d = self.lower(AbsDiff(e.left, e.right))
            s1 = self.gate(GateKind("addition"), [self.lower(e.left), d])
            s2 = self.gate(GateKind("addition"), [s1, self.lower(e.right)])
            half = self.const_species(Fraction(1, 2))
            return self.gate(GateKind("multiplication"), [s2, half])
        raise AssertionError(e)  # pragma: no cover

    def _lower_real(self, e: Expr) -> DualRailWire:
        if isinstance(e, Const):
            if e.value >= 0:
                return DualRailWire(self.const_species(e.value), self.zero_species())
            return DualRailWire(self.zero_species(), self.const_species(-e.value))
        if isinstance(e, Var):
            return self.inputs.get(e.name) or self.input_species(e.name)
        if isinstance(e, (Root, AbsDiff, Max, RectSub)):
            raise ModeError(f"{type(e).__name__.lower()} is defined on "
                            "non-negative values only; use nonneg mode")
        if isinstance(e, Neg):
            return self.neg_wire(self.lower(e.child))
        if isinstance(e, Add):
            return self.add_wires(self.lower(e.left), self.lower(e.right))
        if isinstance(e, Sub):
            return self.add_wires(self.lower(e.left), self.lower(Neg(e.right)))
        if isinstance(e, Mul):
            return self.mul_wires(self.lower(e.left), self.lower(e.right))
        if isinstance(e, Div):
            inv = self.inv_wire(self.lower(e.right))
            if e.left == Const(Fraction(1)):
                return inv
            return self.mul_wires(self.lower(e.left), inv)
        raise AssertionError(e)  # pragma: no cover

    def _lower(self, e: Expr) -> Value:
        if self.mode == "nonneg":
            return self._lower_nonneg(e)
        return self._lower_real(e)

    def _as_gate_output(self, s: Species) -> Species:
        if any(g.output.id == s.id for g in self.gates):
            return s
        return self.gate(GateKind("identification"), [s])

    def finish(self, value: Value, source: str | None = None) -> Circuit:
        """Close the circuit; inputs and constants at the output are passed
        through identification gates so the output is always computed."""
        if isinstance(value, DualRailWire):
            value = DualRailWire(self._as_gate_output(value.p),
                                 self._as_gate_output(value.n))
        else:
            value = self._as_gate_output(value)
        return Circuit(self.mode, tuple(self.gates), dict(self.inputs),
                       dict(self.consts), value, source)


def lower_to_circuit(expr: Expr | str, mode: str = "nonneg") -> Circuit:
    source = None
    if isinstance(expr, str):
        source = expr
        expr = parse_expression(expr)
    b = CircuitBuilder(mode)
    # reserve all input ids up front so gate names never collide with them
    for name in sorted(free_vars(expr)):
        b.input_species(name)
    return b.finish(b.lower(expr), source)


# ---------------------------------------------------------------------------
# flattening to a single network


@dataclass(frozen=True)
class ProgramBindings:
    inputs: tuple[tuple[str, tuple[str, ...]], ...]  # var -> rail species ids
    consts: tuple[tuple[str, str], ...]              # species id -> value text
    output: tuple[str, ...]
    positive_init: tuple[str, ...]

    def input_map(self) -> dict[str, tuple[str, ...]]:
        return dict(self.inputs)

    def const_map(self) -> dict[str, Fraction]:
        return {sid: Fraction(v) for sid, v in self.consts}


@dataclass
class CompiledProgram:
    network: ReactionNetwork
    bindings: ProgramBindings
    circuit: Circuit | None = None
    predicted_bound: SpeedBound | None = None


def _rail_ids(v: Value) -> tuple[str, ...]:
    if isinstance(v, DualRailWire):
        return (v.p.id, v.n.id)
    return (v.id,)


def _rate_text(value: Fraction) -> str:
    return str(value.numerator) if value.denominator == 1 else \
        f"{value.numerator}/{value.denominator}"


def flatten(circuit: Circuit) -> CompiledProgram:
    """Assemble the gate fragments into one network with stable layout:
    inputs, constants, then per-gate intermediates and outputs."""
    species: list[Species] = []
    for v in circuit.inputs.values():
        species.extend([v.p, v.n] if isinstance(v, DualRailWire) else [v])
    for sid in circuit.consts:
        species.append(Species(sid, "input"))
    for g in circuit.gates:
        species.extend(g.intermediates)
        species.append(g.output)
    reactions = [r for g in circuit.gates for r in g.reactions]
    net = collect_network(reactions, {s.id: s.role for s in species},
                          [s.id for s in species])
    pos = [sid for g in circuit.gates for sid in g.positive_init]
    order = {sid: i for i, sid in enumerate(net.species_ids)}
    bindings = ProgramBindings(
        inputs=tuple((name, _rail_ids(v)) for name, v in circuit.inputs.items()),
        consts=tuple((sid, _rate_text(v)) for sid, v in circuit.consts.items()),
        output=_rail_ids(circuit.output),
        positive_init=tuple(sorted(pos, key=order.__getitem__)),
    )
    prog = CompiledProgram(net, bindings, circuit)
    try:
        prog.predicted_bound = structural_bound(circuit)
    except DomainError:
        prog.predicted_bound = None
    return prog


def compile_expression(expr: Expr | str, mode: str = "nonneg") -> CompiledProgram:
    return flatten(lower_to_circuit(expr, mode))


# ---------------------------------------------------------------------------
# program text: bindings header + network


def format_program(prog: CompiledProgram) -> str:
    lines = []
    for name, rails in prog.bindings.inputs:
        target = rails[0] if len(rails) == 1 else f"({rails[0]}, {rails[1]})"
        lines.append(f"# input {name} -> {target}")
    for sid, value in prog.bindings.consts:
        lines.append(f"# const {sid} = {value}")
    out = prog.bindings.output
    lines.append("# output -> " + (out[0] if len(out) == 1 else f"({out[0]}, {out[1]})"))
    if prog.bindings.positive_init:
        lines.append("# init+ : " + ", ".join(prog.bindings.positive_init))
    return "\n".join(lines) + "\n" + format_network(prog.network)


_INPUT_RE = re.compile(r"#\s*input\s+(\w+)\s*->\s*(?:\(\s*(\w+)\s*,\s*(\w+)\s*\)|(\w+))\s*\Z")
_CONST_RE = re.compile(r"#\s*const\s+(\w+)\s*=\s*(\S+)\s*\Z")
_OUTPUT_RE = re.compile(r"#\s*output\s*->\s*(?:\(\s*(\w+)\s*,\s*(\w+)\s*\)|(\w+))\s*\Z")
_INIT_RE = re.compile(r"#\s*init\+\s*:\s*(.*?)\s*\Z")


def load_program(text: str) -> CompiledProgram:
    """Parse program text produced by format_program (or by hand)."""
    inputs: list[tuple[str, tuple[str, ...]]] = []
    consts: list[tuple[str, str]] = []
    output: tuple[str, ...] | None = None
    init: tuple[str, ...] = ()
    for raw in text.splitlines():
        line = raw.strip()
        if not line.startswith("#"):
            continue
        if m := _INPUT_RE.match(line):
            rails = (m.group(2), m.group(3)) if m.group(2) else (m.group(4),)
            inputs.append((m.group(1), rails))
        elif m := _CONST_RE.match(line):
            Fraction(m.group(2))  # validate
            consts.append((m.group(1), m.group(2)))
        elif m := _OUTPUT_RE.match(line):
            output = (m.group(1), m.group(2)) if m.group(1) else (m.group(3),)
        elif m := _INIT_RE.match(line):
            init = tuple(s.strip() for s in m.group(1).split(",") if s.strip())
    net = parse_network(text)
    if output is None:
        raise FormatError("program text lacks an '# output ->' binding")
    declared = set(net.species_ids)
    for sid in [s for _, rails in inputs for s in rails] + list(output) + list(init) \
            + [sid for sid, _ in consts]:
        if sid not in declared:
            raise FormatError(f"binding references undeclared species {sid}")
    bindings = ProgramBindings(tuple(inputs), tuple(consts), output, init)
    return CompiledProgram(net, bindings)


# ---------------------------------------------------------------------------
# speed prediction


@dataclass(frozen=True)
class SpeedAnalysis:
    limits: dict[str, float]         # species id -> steady value
    bounds: dict[str, SpeedBound]    # species id -> rate bound
    output_values: tuple[float, ...]
    bound: SpeedBound

    @property
    def output_value(self) -> float:
        if len(self.output_values) == 1:
            return self.output_values[0]
        return self.output_values[0] - self.output_values[1]


def encode_dual_rail(value) -> tuple[float, float]:
    """Encode a signed value (or an explicit canonical pair) as rails."""
    if isinstance(value, tuple):
        p, n = float(value[0]), float(value[1])
        if p < 0 or n < 0:
            raise DomainError("dual-rail components must be non-negative")
        if p != 0 and n != 0:
            raise DomainError("dual-rail input must be canonical (one rail zero)")
        return p, n
    v = float(value)
    return (v, 0.0) if v >= 0 else (0.0, -v)


def predict_speed(circuit: Circuit,
                  input_limits: Mapping[str, float | tuple[float, float]]) -> SpeedAnalysis:
    """Propagate limits and per-gate rate bounds through the circuit.

    Raises DomainError, naming the gate, if some gate's input limits fall
    outside its domain (inversion of 0, non-canonical inversion pair).
    """
    inf = float("inf")
    limits: dict[str, float] = {}
    bounds: dict[str, SpeedBound] = {}
    for name, v in circuit.inputs.items():
        if name not in input_limits:
            raise ValueError(f"missing input limit for {name!r}")
        if isinstance(v, DualRailWire):
            p, n = encode_dual_rail(input_limits[name])
            limits[v.p.id], limits[v.n.id] = p, n
            bounds[v.p.id] = bounds[v.n.id] = SpeedBound(inf, "held input")
        else:
            val = float(input_limits[name])
            if val < 0:
                raise DomainError(f"input {name} must be non-negative in nonneg mode")
            limits[v.id] = val
            bounds[v.id] = SpeedBound(inf, "held input")
    for sid, val in circuit.consts.items():
        limits[sid] = float(val)
        bounds[sid] = SpeedBound(inf, "held input")
    for g in circuit.gates:
        in_lims = [limits[s.id] for s in g.inputs]
        in_bnds = [bounds[s.id] for s in g.inputs]
        try:
            limits[g.output.id] = gate_target(g.kind, in_lims)
            b = gate_speed_bound(g.kind, in_bnds, in_lims)
        except DomainError as e:
            raise DomainError(f"gate {g.output.id} ({g.kind}): {e}") from None
        bounds[g.output.id] = SpeedBound(b.value, f"{g.output.id}: {b.case}")
    rails = _rail_ids(circuit.output)
    out_bounds = [bounds[sid] for sid in rails]
    worst = min(out_bounds, key=lambda b: b.value)
    return SpeedAnalysis(limits, bounds, tuple(limits[sid] for sid in rails), worst)


def structural_bound(circuit: Circuit) -> SpeedBound:
    """Input-independent bound: generic positive limits expose only the
    structural zero limits (shared-subtree differences, zero constants)."""
    generic = {}
    for i, name in enumerate(circuit.inputs):
        v = circuit.inputs[name]
        val = float(2.718281828459045 ** (i + 1))
        generic[name] = (val, 0.0) if isinstance(v, DualRailWire) else val
    return predict_speed(circuit, generic).bound
