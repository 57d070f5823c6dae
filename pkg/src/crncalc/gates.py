"""The elementary computing gates and their convergence guarantees.

Each gate is a small mass-action fragment, all rate constants 1, whose
designated output species converges to an arithmetic function of the
steady values of its input species.  The speed bounds returned here are
the per-gate exponential rates: every gate converges at rate at least
min over its inputs' rates capped at 1, except that taking an m-th root
of a quantity converging to zero divides the rate by m.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .crn import Complex, Reaction, ReactionNetwork, Species, collect_network

GATE_TAGS = (
    "identification",
    "inversion",
    "mth_root",
    "addition",
    "multiplication",
    "absolute_difference",
    "rectified_subtraction",
    "partial_real_inversion",
)

_ARITY = {
    "identification": 1,
    "inversion": 1,
    "mth_root": 1,
    "addition": 2,
    "multiplication": 2,
    "absolute_difference": 2,
    "rectified_subtraction": 2,
    "partial_real_inversion": 2,
}

# gates whose output (and inner Y stage) must start strictly positive
_POSITIVE_INIT = {
    "inversion", "mth_root", "absolute_difference",
    "rectified_subtraction", "partial_real_inversion",
}

_HAS_Y = {
    "mth_root", "absolute_difference",
    "rectified_subtraction", "partial_real_inversion",
}


class DomainError(ValueError):
    """Gate applied outside the region where its limit is defined."""


@dataclass(frozen=True)
class GateKind:
    tag: str
    m: int | None = None

    def __post_init__(self):
        if self.tag not in GATE_TAGS:
            raise ValueError(f"unknown gate tag {self.tag!r}")
        if self.tag == "mth_root":
            if self.m is None or self.m < 2:
                raise ValueError("mth_root needs integer m >= 2")
        elif self.m is not None:
            raise ValueError(f"{self.tag} takes no m parameter")

    def __str__(self):
        return f"{self.tag}[m={self.m}]" if self.m else self.tag


@dataclass(frozen=True)
class SpeedBound:
    """A lower bound on an exponential convergence rate, with the
    min-expression case it came from.  value may be math.inf (inputs
    held constant)."""

    value: float
    case: str = ""


@dataclass(frozen=True)
class GateInstance:
    kind: GateKind
    inputs: tuple[Species, ...]
    output: Species
    intermediates: tuple[Species, ...]
    reactions: tuple[Reaction, ...]
    positive_init: tuple[str, ...]


class SpeciesNamer:
    """Allocates fresh species ids, skipping anything reserved."""

    def __init__(self, reserved: Iterable[str] = ()):
        self._used = set(reserved)
        self._gate = 0
        self._counters: dict[str, int] = {}

    def reserve(self, *ids: str):
        self._used.update(ids)

    def gate_pair(self) -> tuple[str, str]:
        """Next (X{n}, Y{n}) pair; one index per gate."""
        while True:
            self._gate += 1
            x, y = f"X{self._gate}", f"Y{self._gate}"
            if x not in self._used and y not in self._used:
                self._used.update((x, y))
                return x, y

    def fresh(self, prefix: str) -> str:
        n = self._counters.get(prefix, 0)
        while True:
            n += 1
            sid = f"{prefix}{n}"
            if sid not in self._used:
                self._counters[prefix] = n
                self._used.add(sid)
                return sid


def _merge(*counts: dict[str, int]) -> Complex:
    total: dict[str, int] = {}
    for c in counts:
        for sid, n in c.items():
            total[sid] = total.get(sid, 0) + n
    return Complex.make(total)


def _r(lhs: Complex, rhs: Complex) -> Reaction:
    return Reaction(lhs, rhs, Fraction(1))


def make_gate(kind: GateKind, inputs: Sequence[Species], namer: SpeciesNamer) -> GateInstance:
    """Instantiate a gate fragment on the given input species."""
    if len(inputs) != _ARITY[kind.tag]:
        raise ValueError(f"{kind} takes {_ARITY[kind.tag]} inputs, got {len(inputs)}")
    xid, yid = namer.gate_pair()
    out = Species(xid, "output")
    x = {xid: 1}
    reactions: list[Reaction] = []
    intermediates: tuple[Species, ...] = ()
    if kind.tag in _HAS_Y:
        intermediates = (Species(yid, "intermediate"),)
    y = {yid: 1}

    tag = kind.tag
    if tag == "identification":
        a = {inputs[0].id: 1}
        reactions = [_r(_merge(a), _merge(a, x)),
                     _r(_merge(x), _merge())]
    elif tag == "inversion":
        a = {inputs[0].id: 1}
        reactions = [_r(_merge(x), _merge(x, x)),
                     _r(_merge(a, x, x), _merge(a, x))]
    elif tag == "mth_root":
        a = {inputs[0].id: 1}
        m = kind.m
        reactions = [_r(_merge(y), _merge(y, y)),
                     _r(_merge(a, {yid: m + 1}), _merge(a, {yid: m})),
                     _r(_merge(x), _merge(x, x)),
                     _r(_merge(y, x, x), _merge(y, x))]
    elif tag == "addition":
        a, b = ({s.id: 1} for s in inputs)
        reactions = [_r(_merge(a), _merge(a, x)),
                     _r(_merge(b), _merge(b, x)),
                     _r(_merge(x), _merge())]
    elif tag == "multiplication":
        a, b = ({s.id: 1} for s in inputs)
        reactions = [_r(_merge(a, b), _merge(a, b, x)),
                     _r(_merge(x), _merge())]
    elif tag in ("absolute_difference", "rectified_subtraction"):
        a, b = ({s.id: 1} for s in inputs)
        y3 = {yid: 3}
        reactions = [_r(_merge(y), _merge(y, y)),
                     _r(_merge(a, a, y3), _merge(a, a, {yid: 2})),
                     _r(_merge(b, b, y3), _merge(b, b, {yid: 2})),
                     _r(_merge(a, b, y3), _merge(a, b, {yid: 5}))]
        if tag == "absolute_difference":
            reactions += [_r(_merge(x), _merge(x, x)),
                          _r(_merge(y, x, x), _merge(y, x))]
        else:
            reactions += [_r(_merge(a, y, x), _merge(a, y, x, x)),
                          _r(_merge(b, y, x), _merge(b, y)),
                          _r(_merge(y, x, x), _merge(y, x))]
    elif tag == "partial_real_inversion":
        ap, an = ({s.id: 1} for s in inputs)
        reactions = [_r(_merge(y), _merge(y, y)),
                     _r(_merge(ap, y, y), _merge(ap, y)),
                     _r(_merge(an, y, y), _merge(an, y)),
                     _r(_merge(ap, y, x), _merge(ap, y, x, x)),
                     _r(_merge(an, y, x), _merge(an, y)),
                     _r(_merge(ap, ap, y, x, x), _merge(ap, ap, y, x))]
    else:  # pragma: no cover
        raise AssertionError(tag)

    pos = ()
    if tag in _POSITIVE_INIT:
        pos = tuple(s.id for s in intermediates) + (xid,)
    return GateInstance(kind, tuple(inputs), out, intermediates, tuple(reactions), pos)


def gate_fragment_network(g: GateInstance) -> ReactionNetwork:
    """Standalone network for one gate, inputs declared with input role."""
    species = [Species(s.id, "input") for s in g.inputs]
    ids = {s.id for s in species}
    for s in (g.output,) + g.intermediates:
        if s.id not in ids:
            species.append(s)
    order = [s.id for s in species]
    roles = {s.id: s.role for s in species}
    return collect_network(g.reactions, roles, order)


def gate_target(kind: GateKind, values: Sequence[float]) -> float:
    """Steady output value for the given input limits."""
    if len(values) != _ARITY[kind.tag]:
        raise ValueError(f"{kind} takes {_ARITY[kind.tag]} inputs")
    for v in values:
        if v < 0:
            raise DomainError(f"{kind} input limits must be non-negative, got {v}")
    tag = kind.tag
    if tag == "identification":
        return float(values[0])
    if tag == "inversion":
        if values[0] == 0:
            raise DomainError("inversion requires a positive input limit")
        return 1.0 / values[0]
    if tag == "mth_root":
        return float(values[0]) ** (1.0 / kind.m)
    if tag == "addition":
        return float(values[0] + values[1])
    if tag == "multiplication":
        return float(values[0] * values[1])
    if tag == "absolute_difference":
        return abs(float(values[0] - values[1]))
    if tag == "rectified_subtraction":
        return max(float(values[0] - values[1]), 0.0)
    if tag == "partial_real_inversion":
        ap, an = values
        if ap > 0 and an > 0:
            raise DomainError("partial real inversion needs a canonical pair (one rail zero)")
        if ap == 0 and an == 0:
            raise DomainError("partial real inversion undefined at (0, 0)")
        return 1.0 / ap if ap > 0 else 0.0
    raise AssertionError(tag)  # pragma: no cover


def _as_bound(b) -> SpeedBound:
    return b if isinstance(b, SpeedBound) else SpeedBound(float(b))


def gate_speed_bound(kind: GateKind, input_bounds: Sequence,
                     input_limits: Sequence[float]) -> SpeedBound:
    """Per-gate rate bound, selecting the min-expression case from the
    input limits.  Input rates may be math.inf for constant inputs."""
    bounds = [_as_bound(b) for b in input_bounds]
    rates = [b.value for b in bounds]
    for r in rates:
        if r <= 0:
            raise ValueError("input rates must be positive")
    gate_target(kind, input_limits)  # reuse the domain checks
    tag = kind.tag
    if tag in ("identification", "inversion"):
        return SpeedBound(min(rates[0], 1.0), "min{rho_a, 1}")
    if tag == "mth_root":
        if input_limits[0] == 0:
            return SpeedBound(min(rates[0] / kind.m, 1.0),
                              f"root of zero limit: min{{rho_a/{kind.m}, 1}}")
        return SpeedBound(min(rates[0], 1.0), "min{rho_a, 1}")
    if tag == "multiplication":
        a, b = input_limits
        if a == 0 and b == 0:
            return SpeedBound(min(rates[0] + rates[1], 1.0),
                              "both limits zero: min{rho_a + rho_b, 1}")
        if a == 0:
            return SpeedBound(min(rates[0], 1.0), "zero limit factor: min{rho_a, 1}")
        if b == 0:
            return SpeedBound(min(rates[1], 1.0), "zero limit factor: min{rho_b, 1}")
        return SpeedBound(min(rates[0], rates[1], 1.0), "min{rho_a, rho_b, 1}")
    # addition, absolute_difference, rectified_subtraction, partial_real_inversion
    return SpeedBound(min(rates[0], rates[1], 1.0), "min{rho_a, rho_b, 1}")


# ---------------------------------------------------------------------------
# catalogue

_DISPLAY_TARGET = {
    "identification": "x* = a*",
    "inversion": "x* = 1/a*  (a* > 0)",
    "mth_root": "x* = a*^(1/m)",
    "addition": "x* = a* + b*",
    "multiplication": "x* = a* b*",
    "absolute_difference": "x* = |a* - b*|",
    "rectified_subtraction": "x* = max(a* - b*, 0)  (Y diverges when a* = b*)",
    "partial_real_inversion": "x* = 1/a_p* if a_p* > 0 else 0  (canonical pair)",
}

_DISPLAY_SPEED = {
    "identification": "rho_x >= min{rho_a, 1}",
    "inversion": "rho_x >= min{rho_a, 1}",
    "mth_root": "rho_x >= min{rho_a, 1}, or min{rho_a/m, 1} when a* = 0",
    "addition": "rho_x >= min{rho_a, rho_b, 1}",
    "multiplication": "rho_x >= min{rho_a, rho_b, 1}; rates add when both limits are 0",
    "absolute_difference": "rho_x >= min{rho_a, rho_b, 1}",
    "rectified_subtraction": "rho_x >= min{rho_a, rho_b, 1}",
    "partial_real_inversion": "rho_x >= min{rho_ap, rho_an, 1}",
}


def catalogue() -> str:
    """Human-readable listing of every gate: reactions, ODE, target, speed."""
    from .crn import derive_ode, format_network, format_polynomial

    sections = []
    for tag in GATE_TAGS:
        kind = GateKind(tag, 2) if tag == "mth_root" else GateKind(tag)
        namer = SpeciesNamer()
        if tag == "partial_real_inversion":
            ins = [Species("A_p", "input"), Species("A_n", "input")]
        elif _ARITY[tag] == 2:
            ins = [Species("A", "input"), Species("B", "input")]
        else:
            ins = [Species("A", "input")]
        g = make_gate(kind, ins, namer)
        net = gate_fragment_network(g)
        ode = derive_ode(net)
        title = f"## {tag}" + (" (shown for m=2)" if tag == "mth_root" else "")
        lines = [title]
        for s in (g.output,) + g.intermediates:
            lines.append(f"# ode: {s.id.lower()}' = {format_polynomial(ode, s.id)}")
        lines.append(f"# target: {_DISPLAY_TARGET[tag]}")
        lines.append(f"# speed: {_DISPLAY_SPEED[tag]}")
        if g.positive_init:
            lines.append(f"# init+ : {', '.join(g.positive_init)}")
        lines.append(format_network(net).rstrip("\n"))
        sections.append("\n".join(lines))
    return "\n\n".join(sections) + "\n"
