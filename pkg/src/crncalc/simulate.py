"""Numerical integration of networks and forced scalar systems.

The polynomial right-hand side is generated as straight-line Python from
the exact field, then handed to an embedded Runge-Kutta 5(4) pair with
adaptive steps and a quartic dense interpolant.  Runs terminate early
when any concentration crosses the blowup threshold; that is reported as
a termination status, not an exception, because divergence of an inner
species is expected behavior for some networks.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .circuit import CompiledProgram, encode_dual_rail
from .crn import PolynomialField, ReactionNetwork, derive_ode, parse_network


@dataclass
class SimConfig:
    t_end: float = 40.0
    sigma: float = 1.0
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    blowup_threshold: float = 1e12
    output_grid: float | None = None  # None: adaptive accepted steps; else fixed dt

    def __post_init__(self):
        if self.t_end <= 0 or self.sigma <= 0 or self.blowup_threshold <= 0:
            raise ValueError("t_end, sigma and blowup_threshold must be positive")
        # floors keep requested accuracy within what the integrator can honor
        if self.rel_tol < 1e-13 or self.abs_tol < 1e-15:
            raise ValueError("tolerances below supported floor (1e-13 / 1e-15)")
        if self.output_grid is not None and not 0 < self.output_grid <= self.t_end:
            raise ValueError("output_grid must lie in (0, t_end]")


@dataclass(frozen=True)
class Termination:
    status: str  # completed | blowup | stiff_failure
    species: str | None = None
    time: float | None = None
    detail: str = ""


@dataclass
class Trajectory:
    species: tuple[str, ...]
    times: np.ndarray
    states: np.ndarray  # (n_times, n_species), clipped at 0
    termination: Termination
    negatives: tuple[tuple[str, float, float], ...] = ()
    dense: Callable | None = None

    def index(self, sid: str) -> int:
        return self.species.index(sid)

    def series(self, sid: str) -> np.ndarray:
        return self.states[:, self.index(sid)]

    def final(self, sid: str) -> float:
        return float(self.states[-1, self.index(sid)])

    def at(self, t, sid: str | None = None):
        if self.dense is None:
            raise ValueError("trajectory has no dense interpolant")
        vals = np.clip(self.dense(t), 0.0, None)
        return vals if sid is None else vals[self.index(sid)]

    def to_csv(self) -> str:
        lines = ["t," + ",".join(self.species)]
        for t, row in zip(self.times, self.states):
            lines.append(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row))
        term = f"# termination={self.termination.status}"
        if self.termination.species:
            term += f" species={self.termination.species}"
        if self.termination.time is not None:
            term += f" time={self.termination.time:.17g}"
        lines.append(term)
        return "\n".join(lines) + "\n"


def read_trajectory_csv(text: str) -> Trajectory:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("t,"):
        raise ValueError("trajectory csv must start with a 't,<species...>' header")
    species = tuple(lines[0].split(",")[1:])
    term = Termination("completed")
    rows = []
    for ln in lines[1:]:
        if ln.startswith("#"):
            m = re.match(r"#\s*termination=(\w+)(?:\s+species=(\w+))?(?:\s+time=(\S+))?", ln)
            if m:
                term = Termination(m.group(1), m.group(2),
                                   float(m.group(3)) if m.group(3) else None)
            continue
        vals = [float(v) for v in ln.split(",")]
        if len(vals) != len(species) + 1:
            raise ValueError(f"row width {len(vals)} does not match header")
        rows.append(vals)
    data = np.array(rows)
    return Trajectory(species, data[:, 0], data[:, 1:], term)


# ---------------------------------------------------------------------------
# code generation and integration


def compile_rhs(field: PolynomialField, sigma: float = 1.0) -> Callable:
    """Generate a fast python function t, y -> dy/dt from the field."""
    ns = len(field.species)
    names = [f"x{i}" for i in range(ns)]
    sep = ", ".join(names)
    lines = ["def _rhs(t, y):",
             f"    {sep}{',' if ns == 1 else ''} = y"]
    exprs = []
    for poly in field.polynomials:
        terms = []
        for mono in poly:
            facs = [repr(float(mono.coeff) * sigma)]
            for j, e in enumerate(mono.exponents):
                if e == 0:
                    continue
                facs.extend([names[j]] * e if e <= 4 else [f"{names[j]}**{e}"])
            terms.append("*".join(facs))
        exprs.append(" + ".join(terms) if terms else "0.0")
    lines.append(f"    return ({', '.join(exprs)}{',' if ns == 1 else ''})")
    env: dict = {}
    exec("\n".join(lines), env)
    return env["_rhs"]


def compile_circuit_rhs(circuit, order: Sequence[str], sigma: float = 1.0) -> Callable:
    """Generate the right-hand side gate by gate in factored form.

    Expands to exactly the same polynomials as compile_rhs on the
    flattened network, but evaluates differences like (u - v) before
    squaring.  The expanded monomials u^2 y^3 - 2 u v y^3 + v^2 y^3 cancel
    catastrophically once y is large while their true sum stays of order
    y, which stalls the step controller; the factored form does not.
    """
    idx = {sid: i for i, sid in enumerate(order)}
    exprs = ["0.0"] * len(order)
    s = repr(float(sigma))
    for g in circuit.gates:
        o = f"x{idx[g.output.id]}"
        ins = [f"x{idx[sp.id]}" for sp in g.inputs]
        tag = g.kind.tag
        if tag == "identification":
            e = f"{ins[0]} - {o}"
        elif tag == "addition":
            e = f"{ins[0]} + {ins[1]} - {o}"
        elif tag == "multiplication":
            e = f"{ins[0]}*{ins[1]} - {o}"
        elif tag == "inversion":
            e = f"{o}*(1.0 - {ins[0]}*{o})"
        elif tag == "mth_root":
            y = f"x{idx[g.intermediates[0].id]}"
            ypow = "*".join([y] * g.kind.m)
            exprs[idx[g.intermediates[0].id]] = f"{s}*({y}*(1.0 - {ins[0]}*{ypow}))"
            e = f"{o}*(1.0 - {y}*{o})"
        elif tag in ("absolute_difference", "rectified_subtraction"):
            y = f"x{idx[g.intermediates[0].id]}"
            d = f"({ins[0]} - {ins[1]})"
            exprs[idx[g.intermediates[0].id]] = \
                f"{s}*({y}*(1.0 - {d}*{d}*{y}*{y}))"
            if tag == "absolute_difference":
                e = f"{o}*(1.0 - {y}*{o})"
            else:
                e = f"{o}*{y}*({d} - {o})"
        elif tag == "partial_real_inversion":
            y = f"x{idx[g.intermediates[0].id]}"
            exprs[idx[g.intermediates[0].id]] = \
                f"{s}*({y}*(1.0 - ({ins[0]} + {ins[1]})*{y}))"
            e = f"{o}*{y}*({ins[0]} - {ins[1]} - {ins[0]}*{ins[0]}*{o})"
        else:  # pragma: no cover
            raise AssertionError(tag)
        exprs[idx[g.output.id]] = f"{s}*({e})"
    names = [f"x{i}" for i in range(len(order))]
    sep = ", ".join(names)
    one = "," if len(order) == 1 else ""
    src = (f"def _rhs(t, y):\n    {sep}{one} = y\n"
           f"    return ({', '.join(exprs)}{one})")
    env: dict = {}
    exec(src, env)
    return env["_rhs"]


def _integrate(rhs, y0: np.ndarray, species: Sequence[str], cfg: SimConfig) -> Trajectory:
    if not np.all(np.isfinite(y0)):
        raise ValueError("initial state must be finite")
    if np.any(y0 < 0):
        raise ValueError("initial state must be non-negative")

    def blowup(t, y):
        return cfg.blowup_threshold - np.max(y)
    blowup.terminal = True
    blowup.direction = -1

    t_eval = None
    if cfg.output_grid is not None:
        n = int(math.floor(cfg.t_end / cfg.output_grid + 1e-9))
        t_eval = np.concatenate([np.arange(n + 1) * cfg.output_grid,
                                 [] if n * cfg.output_grid >= cfg.t_end - 1e-12
                                 else [cfg.t_end]])
    sol = solve_ivp(rhs, (0.0, cfg.t_end), y0, method="RK45",
                    rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step,
                    events=[blowup], dense_output=True, t_eval=t_eval)
    raw = sol.y.T
    if sol.status == 1:
        t_hit = float(sol.t_events[0][0])
        worst = species[int(np.argmax(raw[-1]))]
        term = Termination("blowup", worst, t_hit)
    elif sol.status == 0:
        term = Termination("completed", time=float(sol.t[-1]))
    else:
        term = Termination("stiff_failure", time=float(sol.t[-1]), detail=sol.message)
    flags = []
    for j, sid in enumerate(species):
        low = float(raw[:, j].min(initial=0.0))
        if low < -cfg.abs_tol:
            k = int(np.argmin(raw[:, j]))
            flags.append((sid, float(sol.t[k]), low))
    return Trajectory(tuple(species), sol.t, np.clip(raw, 0.0, None),
                      term, tuple(flags), sol.sol)


def integrate_network(net: ReactionNetwork, init: Mapping[str, float],
                      cfg: SimConfig | None = None) -> Trajectory:
    """Integrate a network from explicit per-species initial values
    (unlisted species start at 0)."""
    cfg = cfg or SimConfig()
    unknown = set(init) - set(net.species_ids)
    if unknown:
        raise ValueError(f"initial values for unknown species {sorted(unknown)}")
    rhs = compile_rhs(derive_ode(net), cfg.sigma)
    y0 = np.array([float(init.get(sid, 0.0)) for sid in net.species_ids])
    return _integrate(rhs, y0, net.species_ids, cfg)


def initial_state(prog: CompiledProgram, inputs: Mapping[str, object],
                  overrides: Mapping[str, float] | None = None) -> dict[str, float]:
    """Default initial condition: inputs held at their values (signed
    values dual-rail encoded), constants pinned, species listed in
    init+ at 1, everything else at 0."""
    init: dict[str, float] = {sid: 0.0 for sid in prog.network.species_ids}
    bind = prog.bindings.input_map()
    for name, rails in bind.items():
        if name not in inputs:
            raise ValueError(f"missing value for input {name!r}")
        if len(rails) == 1:
            v = float(inputs[name])  # type: ignore[arg-type]
            if v < 0:
                raise ValueError(f"input {name} must be non-negative here")
            init[rails[0]] = v
        else:
            p, n = encode_dual_rail(inputs[name])
            init[rails[0]], init[rails[1]] = p, n
    extra = set(inputs) - set(bind)
    if extra:
        raise ValueError(f"unknown inputs {sorted(extra)}")
    for sid, val in prog.bindings.const_map().items():
        init[sid] = float(val)
    for sid in prog.bindings.positive_init:
        init[sid] = 1.0
    for sid, val in (overrides or {}).items():
        if sid not in init:
            raise ValueError(f"override for unknown species {sid}")
        init[sid] = float(val)
    return init


def simulate_program(prog: CompiledProgram, inputs: Mapping[str, object],
                     cfg: SimConfig | None = None,
                     overrides: Mapping[str, float] | None = None) -> Trajectory:
    cfg = cfg or SimConfig()
    init = initial_state(prog, inputs, overrides)
    ids = prog.network.species_ids
    if prog.circuit is not None:
        rhs = compile_circuit_rhs(prog.circuit, ids, cfg.sigma)
    else:
        rhs = compile_rhs(derive_ode(prog.network), cfg.sigma)
    y0 = np.array([init[sid] for sid in ids])
    return _integrate(rhs, y0, ids, cfg)


# ---------------------------------------------------------------------------
# forced scalar systems
#
# x' = g1(t) - g2(t) x          (linear)
# x' = x (g1(t) - g2(t) x^m)    (power)
#
# with g(t) = c0 + sum_i c_i t^{k_i} exp(-r_i t), every r_i > 0.


@dataclass(frozen=True)
class ForcingTerm:
    coeff: float
    power: int
    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("forcing term must decay (rate > 0)")
        if self.power < 0:
            raise ValueError("negative power in forcing term")


@dataclass(frozen=True)
class ForcingFunction:
    constant: float
    terms: tuple[ForcingTerm, ...] = ()

    def __call__(self, t):
        val = self.constant + 0.0 * t if not np.isscalar(t) else self.constant
        for term in self.terms:
            val = val + term.coeff * t ** term.power * np.exp(-term.rate * t)
        return val

    @property
    def limit(self) -> float:
        return self.constant

    @property
    def rate(self) -> float:
        """Decay rate toward the limit; +inf for an exactly constant g."""
        return min((term.rate for term in self.terms), default=math.inf)

    def is_constant_one(self) -> bool:
        return not self.terms and self.constant == 1.0


def _split_top(text: str, seps: str) -> list[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch in seps and depth == 0 and i > start:
            parts.append(text[start:i])
            start = i
    parts.append(text[start:])
    return parts


_EXP_RE = re.compile(r"exp\(\s*-\s*(?:(\d+(?:\.\d+)?)\s*\*\s*)?t\s*\)\Z")
_POW_RE = re.compile(r"t(?:\^(\d+))?\Z")
_NUM_RE = re.compile(r"\d+(?:\.\d+)?\Z")


def parse_forcing(text: str) -> ForcingFunction:
    """Parse strings like ``2 + 1*exp(-3*t) + 0.5*t^1*exp(-1*t)``."""
    constant = 0.0
    terms = []
    for chunk in _split_top(text.replace(" ", ""), "+-"):
        if not chunk or chunk in "+-":
            raise ValueError(f"empty term in forcing {text!r}")
        sign = 1.0
        if chunk[0] in "+-":
            sign = -1.0 if chunk[0] == "-" else 1.0
            chunk = chunk[1:]
        coeff, power, rate = sign, 0, 0.0
        for factor in _split_top(chunk, "*"):
            factor = factor.lstrip("*")
            if not factor:
                raise ValueError(f"empty factor in forcing term {chunk!r}")
            if m := _EXP_RE.match(factor):
                rate += float(m.group(1)) if m.group(1) else 1.0
            elif m := _POW_RE.match(factor):
                power += int(m.group(1)) if m.group(1) else 1
            elif _NUM_RE.match(factor):
                coeff *= float(factor)
            else:
                raise ValueError(f"bad factor {factor!r} in forcing {text!r}")
        if rate > 0:
            terms.append(ForcingTerm(coeff, power, rate))
        elif power > 0:
            raise ValueError(f"non-decaying term {chunk!r}: polynomial factors "
                             "need an exp factor")
        else:
            constant += coeff
    return ForcingFunction(constant, tuple(terms))


@dataclass(frozen=True)
class ForcedSystem:
    form: str  # linear | power
    g1: ForcingFunction
    g2: ForcingFunction
    m: int = 1
    x0: float = 1.0

    def __post_init__(self):
        if self.form not in ("linear", "power"):
            raise ValueError("form must be 'linear' or 'power'")
        if self.m < 1:
            raise ValueError("power form needs m >= 1")


def simulate_forced(system: ForcedSystem, cfg: SimConfig | None = None) -> Trajectory:
    cfg = cfg or SimConfig()
    if cfg.sigma != 1.0:
        raise ValueError("time scaling applies to networks, not forced systems")
    g1, g2, m = system.g1, system.g2, system.m
    if system.form == "linear":
        def rhs(t, y):
            return (g1(t) - g2(t) * y[0],)
    else:
        def rhs(t, y):
            x = y[0]
            return (x * (g1(t) - g2(t) * x ** m),)
    return _integrate(rhs, np.array([float(system.x0)]), ("x",), cfg)


# ---------------------------------------------------------------------------
# closed forms and small reference networks


def closed_form_reference(case: str, params: Mapping[str, float], t):
    """Exact solutions used as oracles for the integrator.

    naive_inversion        x' = 1 - a x
    designed_inversion     x' = x (1 - a x)
    identification         x' = a - x
    double_identification  y' = a - y, x' = y - x (returns x)
    """
    t = np.asarray(t, dtype=float)
    a = float(params["a"])
    x0 = float(params.get("x0", 0.0))
    if case == "naive_inversion":
        return 1.0 / a + (x0 - 1.0 / a) * np.exp(-a * t)
    if case == "designed_inversion":
        if x0 <= 0:
            raise ValueError("designed inversion needs x0 > 0")
        return x0 / (a * x0 + (1.0 - a * x0) * np.exp(-t))
    if case == "identification":
        return a + (x0 - a) * np.exp(-t)
    if case == "double_identification":
        y0 = float(params.get("y0", 0.0))
        return a * (1.0 - (1.0 + t) * np.exp(-t)) + (x0 + t * y0) * np.exp(-t)
    raise ValueError(f"unknown closed form {case!r}")


def naive_inversion_network() -> ReactionNetwork:
    """Constant production plus input-proportional consumption: the
    textbook x* = 1/a network whose speed depends on a."""
    return parse_network(
        "species: A[input], X[output]\n"
        "0 -> X ; k=1\n"
        "A + X -> A ; k=1\n")


def designed_inversion_network() -> ReactionNetwork:
    return parse_network(
        "species: A[input], X[output]\n"
        "X -> 2X ; k=1\n"
        "A + 2X -> A + X ; k=1\n")


def double_identification_network() -> ReactionNetwork:
    return parse_network(
        "species: A[input], Y[intermediate], X[output]\n"
        "A -> A + Y ; k=1\n"
        "Y -> 0 ; k=1\n"
        "Y -> Y + X ; k=1\n"
        "X -> 0 ; k=1\n")
