"""Mass-action reaction networks and their polynomial rate equations.

A network is a list of species plus a list of reactions with positive
rational rate constants.  Under mass action a reaction with reactant
complex nu fires at rate k * prod_i x_i^nu_i, and the induced ODE is
polynomial.  All symbolic work here (ODE derivation, admissibility,
conservation checks) is done in exact Fraction arithmetic so the checks
are decidable; floats only enter at evaluation time.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

SPECIES_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")
ROLES = ("input", "output", "intermediate")
MAX_STOICH = 255


class FormatError(ValueError):
    """Raised when network text cannot be parsed."""


@dataclass(frozen=True)
class Species:
    id: str
    role: str = "intermediate"

    def __post_init__(self):
        if not SPECIES_RE.match(self.id):
            raise ValueError(f"bad species id {self.id!r}")
        if self.role not in ROLES:
            raise ValueError(f"bad role {self.role!r} for species {self.id}")


@dataclass(frozen=True)
class Complex:
    """Multiset of species, stored as (id, count) pairs sorted by id."""

    coeffs: tuple[tuple[str, int], ...]

    @staticmethod
    def make(counts: Mapping[str, int]) -> "Complex":
        items = []
        for sid, n in counts.items():
            if n == 0:
                continue
            if n < 0 or n > MAX_STOICH:
                raise ValueError(f"stoichiometry {n} for {sid} outside 1..{MAX_STOICH}")
            items.append((sid, int(n)))
        return Complex(tuple(sorted(items)))

    def count(self, sid: str) -> int:
        for s, n in self.coeffs:
            if s == sid:
                return n
        return 0

    def species(self) -> tuple[str, ...]:
        return tuple(s for s, _ in self.coeffs)

    def is_empty(self) -> bool:
        return not self.coeffs


EMPTY = Complex(())


@dataclass(frozen=True)
class Reaction:
    reactant: Complex
    product: Complex
    rate: Fraction = Fraction(1)

    def __post_init__(self):
        if not isinstance(self.rate, Fraction):
            object.__setattr__(self, "rate", Fraction(self.rate))
        if self.rate <= 0:
            raise ValueError(f"rate constant must be positive, got {self.rate}")
        if self.reactant == self.product:
            raise ValueError("reaction must change at least one species count")


@dataclass(frozen=True)
class ReactionNetwork:
    species: tuple[Species, ...]
    reactions: tuple[Reaction, ...]

    def __post_init__(self):
        ids = [s.id for s in self.species]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate species ids")
        declared = set(ids)
        for r in self.reactions:
            for sid in r.reactant.species() + r.product.species():
                if sid not in declared:
                    raise ValueError(f"reaction references undeclared species {sid}")

    @property
    def species_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.species)

    def species_by_id(self, sid: str) -> Species:
        for s in self.species:
            if s.id == sid:
                return s
        raise KeyError(sid)


def collect_network(reactions: Iterable[Reaction],
                    roles: Mapping[str, str] | None = None,
                    order: Iterable[str] | None = None) -> ReactionNetwork:
    """Build a network declaring species in first-appearance order.

    ``order`` forces declaration order for the ids it lists; any species
    appearing in reactions but not in ``order`` follow in appearance order.
    """
    roles = dict(roles or {})
    reactions = tuple(reactions)
    seen: dict[str, None] = {}
    for sid in order or ():
        seen.setdefault(sid, None)
    for r in reactions:
        for sid in r.reactant.species() + r.product.species():
            seen.setdefault(sid, None)
    species = tuple(Species(sid, roles.get(sid, "intermediate")) for sid in seen)
    return ReactionNetwork(species, reactions)


# ---------------------------------------------------------------------------
# polynomial rate equations


@dataclass(frozen=True)
class Monomial:
    coeff: Fraction
    exponents: tuple[int, ...]


@dataclass(frozen=True)
class PolynomialField:
    """One polynomial per species, monomials in a canonical order.

    Monomials are sorted lexicographically by exponent vector, exponents
    indexed by the species order of ``species``.  Zero coefficients are
    dropped, so two fields are equal iff they are the same polynomial map.
    """

    species: tuple[str, ...]
    polynomials: tuple[tuple[Monomial, ...], ...]

    def polynomial(self, sid: str) -> tuple[Monomial, ...]:
        return self.polynomials[self.species.index(sid)]

    def is_zero(self, sid: str) -> bool:
        return not self.polynomial(sid)


def _canonical(terms: dict[tuple[int, ...], Fraction]) -> tuple[Monomial, ...]:
    out = [Monomial(c, e) for e, c in terms.items() if c != 0]
    out.sort(key=lambda m: m.exponents)
    return tuple(out)


def derive_ode(net: ReactionNetwork) -> PolynomialField:
    """Expand the mass-action rate law into per-species polynomials."""
    ids = net.species_ids
    index = {sid: i for i, sid in enumerate(ids)}
    acc: list[dict[tuple[int, ...], Fraction]] = [{} for _ in ids]
    for r in net.reactions:
        expo = [0] * len(ids)
        for sid, n in r.reactant.coeffs:
            expo[index[sid]] = n
        expo_t = tuple(expo)
        for sid in set(r.reactant.species()) | set(r.product.species()):
            delta = r.product.count(sid) - r.reactant.count(sid)
            if delta == 0:
                continue
            terms = acc[index[sid]]
            terms[expo_t] = terms.get(expo_t, Fraction(0)) + r.rate * delta
    return PolynomialField(ids, tuple(_canonical(t) for t in acc))


@dataclass(frozen=True)
class AdmissibilityReport:
    ok: bool
    violations: tuple[tuple[str, Monomial], ...]


def check_admissible(field: PolynomialField) -> AdmissibilityReport:
    """Check that every negative monomial of f_i contains x_i.

    This is the structural condition that keeps the non-negative orthant
    forward invariant: on the face x_i = 0 all surviving terms of f_i are
    non-negative.  Mass-action derivation satisfies it by construction;
    the check guards hand-written fields.
    """
    bad = []
    for i, sid in enumerate(field.species):
        for m in field.polynomials[i]:
            if m.coeff < 0 and m.exponents[i] == 0:
                bad.append((sid, m))
    return AdmissibilityReport(not bad, tuple(bad))


def evaluate_field(field: PolynomialField, state: Mapping[str, float]) -> dict[str, float]:
    """Evaluate the field at a state given as {species id: value}."""
    missing = [sid for sid in field.species if sid not in state]
    if missing:
        raise ValueError(f"state missing species {missing}")
    vals = [float(state[sid]) for sid in field.species]
    out = {}
    for i, sid in enumerate(field.species):
        total = 0.0
        for m in field.polynomials[i]:
            term = float(m.coeff)
            for j, e in enumerate(m.exponents):
                if e:
                    term *= vals[j] ** e
            total += term
        out[sid] = total
    return out


def format_polynomial(field: PolynomialField, sid: str) -> str:
    """Render f_sid like ``a + b - x1`` with lowercase concentration names.

    Positive terms come first, ordered by their leading species, so gate
    ODEs read the way they are usually written (gain terms, then losses).
    """
    names = [s.lower() for s in field.species]

    def key(m):
        lead = next((j for j, e in enumerate(m.exponents) if e), len(m.exponents))
        return (m.coeff < 0, lead, m.exponents)

    parts = []
    for m in sorted(field.polynomial(sid), key=key):
        mag = abs(m.coeff)
        factors = [] if mag == 1 else [str(mag)]
        for j, e in enumerate(m.exponents):
            if e == 0:
                continue
            factors.append(names[j] if e == 1 else f"{names[j]}^{e}")
        if not factors:
            factors = [str(mag)]
        term = "*".join(factors)
        sign = "-" if m.coeff < 0 else "+"
        parts.append((sign, term))
    if not parts:
        return "0"
    first_sign, first = parts[0]
    text = ("-" if first_sign == "-" else "") + first
    for sign, term in parts[1:]:
        text += f" {sign} {term}"
    return text


# ---------------------------------------------------------------------------
# text format
#
#   # comment
#   species: A[input], X[output], Y[intermediate]
#   2A + 3Y -> 2A + 2Y ; k=1
#
# Formatting is canonical (species order from the declaration, coefficient 1
# omitted, rates as integers or p/q), so format(parse(format(n))) == format(n).

_TERM_RE = re.compile(r"(\d+)?\s*([A-Za-z][A-Za-z0-9_]*)\Z")


def _parse_complex(text: str, lineno: int) -> Complex:
    text = text.strip()
    if text == "0":
        return EMPTY
    counts: dict[str, int] = {}
    for raw in text.split("+"):
        m = _TERM_RE.match(raw.strip())
        if not m:
            raise FormatError(f"line {lineno}: bad complex term {raw.strip()!r}")
        n = int(m.group(1)) if m.group(1) else 1
        if n == 0 or n > MAX_STOICH:
            raise FormatError(f"line {lineno}: stoichiometry {n} outside 1..{MAX_STOICH}")
        sid = m.group(2)
        counts[sid] = counts.get(sid, 0) + n
    return Complex.make(counts)


def _parse_rate(text: str, lineno: int) -> Fraction:
    try:
        rate = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise FormatError(f"line {lineno}: bad rate constant {text.strip()!r}") from None
    if rate <= 0:
        raise FormatError(f"line {lineno}: rate constant must be positive")
    return rate


def parse_network(text: str) -> ReactionNetwork:
    roles: dict[str, str] = {}
    order: list[str] = []
    have_header = False
    reactions: list[Reaction] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("species:"):
            if have_header or reactions:
                raise FormatError(f"line {lineno}: species header must come first, once")
            have_header = True
            for item in line[len("species:"):].split(","):
                item = item.strip()
                m = re.match(r"([A-Za-z][A-Za-z0-9_]*)(?:\[(\w+)\])?\Z", item)
                if not m:
                    raise FormatError(f"line {lineno}: bad species declaration {item!r}")
                sid, role = m.group(1), m.group(2) or "intermediate"
                if role not in ROLES:
                    raise FormatError(f"line {lineno}: bad role {role!r}")
                if sid in roles:
                    raise FormatError(f"line {lineno}: duplicate species {sid}")
                roles[sid] = role
                order.append(sid)
            continue
        if "->" not in line:
            raise FormatError(f"line {lineno}: expected a reaction, got {line!r}")
        lhs, rhs = line.split("->", 1)
        if ";" in rhs:
            rhs, tail = rhs.split(";", 1)
            tail = tail.strip()
            if not tail.startswith("k="):
                raise FormatError(f"line {lineno}: expected k=RATE after ';'")
            rate = _parse_rate(tail[2:], lineno)
        else:
            rate = Fraction(1)
        reactant = _parse_complex(lhs, lineno)
        product = _parse_complex(rhs, lineno)
        try:
            reactions.append(Reaction(reactant, product, rate))
        except ValueError as e:
            raise FormatError(f"line {lineno}: {e}") from None
    if have_header:
        declared = set(order)
        for r in reactions:
            for sid in r.reactant.species() + r.product.species():
                if sid not in declared:
                    raise FormatError(f"undeclared species {sid} (header present)")
    return collect_network(reactions, roles, order)


def _format_complex(c: Complex, order: dict[str, int]) -> str:
    if c.is_empty():
        return "0"
    items = sorted(c.coeffs, key=lambda p: order[p[0]])
    return " + ".join(sid if n == 1 else f"{n}{sid}" for sid, n in items)


def _format_rate(r: Fraction) -> str:
    return str(r.numerator) if r.denominator == 1 else f"{r.numerator}/{r.denominator}"


def format_network(net: ReactionNetwork) -> str:
    order = {sid: i for i, sid in enumerate(net.species_ids)}
    lines = ["species: " + ", ".join(f"{s.id}[{s.role}]" for s in net.species)]
    for r in net.reactions:
        lines.append(f"{_format_complex(r.reactant, order)} -> "
                     f"{_format_complex(r.product, order)} ; k={_format_rate(r.rate)}")
    return "\n".join(lines) + "\n"
