"""Measuring exponential convergence and checking predicted bounds.

The measured rate is the least-squares slope of ln|x(t) - target| over a
window chosen to dodge both the initial transient (error above err_ceil)
and integrator noise (error below err_floor).  Polynomial prefactors
t^k e^{-rho t} bias the fitted slope low by about k/t, which is why
speed checks compare against (1 - slack) * bound with one-sided slack
rather than a two-sided tolerance.

For deep gate chains the prefactor degree k reaches 2 or 3 and the plain
slope can eat most of that slack.  estimate_rate(detrend=True) removes
the bias by fitting ln err ~ c + k*ln(1+t) - rho*t instead, on per-bin
envelope maxima (which also erase the dips left by sign changes of the
error) over the best-fitting trailing sub-window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gates import SpeedBound
from .simulate import ForcedSystem, Trajectory


class EstimationError(ValueError):
    """No usable fit window in the trajectory."""


class NotConvergedError(ValueError):
    def __init__(self, message: str, final_error: float):
        super().__init__(message)
        self.final_error = final_error


class PreconditionError(ValueError):
    """Forced system outside the parameter region a lemma covers."""


@dataclass(frozen=True)
class RateEstimate:
    rho_hat: float  # math.inf when the error sits below the floor throughout
    fit_window: tuple[float, float]
    r_squared: float
    samples_used: int


@dataclass(frozen=True)
class DigitTime:
    n: int
    time: float


@dataclass(frozen=True)
class Verdict:
    passed: bool
    measured: float
    required: float
    bound: SpeedBound
    slack: float

    def __str__(self):
        word = "pass" if self.passed else "FAIL"
        return (f"{word}: rho_hat={self.measured:.4g} vs required "
                f"{self.required:.4g} = (1-{self.slack})*{self.bound.value:.4g}"
                f" [{self.bound.case}]")


MIN_FIT_SAMPLES = 8

_RESAMPLE = 1600        # uniform grid size when a dense interpolant is available
_ENVELOPE_BINS = 15
_MIN_SUFFIX_BINS = 8
_K_MAX = 6.0            # prefactor degree cap; composite chains here stay below it


def auto_err_floor(target: float, rel_tol: float, base: float = 1e-9) -> float:
    """Raise the fit-window floor above integrator noise for large targets:
    the computed trajectory is only accurate to about rel_tol * scale."""
    return max(base, 10.0 * rel_tol * (1.0 + abs(target)))


def _model_fit(bt: np.ndarray, be: np.ndarray) -> tuple[float, float, float]:
    """Least squares for ln err ~ c + k*ln(1+t) - rho*t with k in [0, _K_MAX]."""
    design = np.column_stack([np.ones_like(bt), bt, np.log1p(bt)])
    coef, *_ = np.linalg.lstsq(design, be, rcond=None)
    k = float(coef[2])
    if not 0.0 <= k <= _K_MAX:
        k = min(max(k, 0.0), _K_MAX)
        slope, c0 = np.polyfit(bt, be - k * np.log1p(bt), 1)
        coef = np.array([c0, slope, k])
    resid = be - design @ coef
    ss_tot = float(np.sum((be - be.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return -float(coef[1]), k, r2


def _detrended_fit(seg_t: np.ndarray, log_e: np.ndarray):
    """Prefactor-aware rate fit on envelope maxima of trailing sub-windows.

    Binning by time and keeping each bin's maximum discards the downward
    spikes where the signed error crosses zero; scanning suffixes lets the
    fit settle on the asymptotic regime when the window still starts inside
    a transient.  Among near-tied fits the longest window wins.
    """
    edges = np.linspace(seg_t[0], seg_t[-1], _ENVELOPE_BINS + 1)
    bt, be = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = (seg_t >= lo) & (seg_t <= hi)
        if m.any():
            j = int(np.argmax(log_e[m]))
            bt.append(seg_t[m][j])
            be.append(log_e[m][j])
    bt, be = np.array(bt), np.array(be)
    if bt.size < 4:
        raise EstimationError(f"only {bt.size} envelope bins in the fit window")
    fits = [(_model_fit(bt[s:], be[s:]), s)
            for s in range(max(1, bt.size - _MIN_SUFFIX_BINS + 1))]
    best_r2 = max(f[0][2] for f in fits)
    for (rho, _k, r2), s in fits:
        if r2 >= best_r2 - 1e-6:   # earliest (longest) near-tied suffix
            n_used = int(np.count_nonzero(seg_t >= bt[s]))
            return rho, (float(bt[s]), float(bt[-1])), r2, n_used
    raise AssertionError("unreachable")


def estimate_rate(traj: Trajectory, species: str, target: float,
                  err_floor: float = 1e-9, err_ceil: float = 1e-2,
                  detrend: bool = False) -> RateEstimate:
    """Fit the tail decay rate of |x(t) - target|.

    The window starts after the last sample with error above err_ceil and
    ends before the first subsequent sample below err_floor.  If the error
    stays below the floor for the whole run (after a 1% settle margin) the
    rate is reported as +inf.

    detrend=True switches from the plain log-linear slope to the
    prefactor-aware envelope fit (see module docstring), resampling the
    trajectory on a uniform grid first when dense output is available.
    """
    if not 0 < err_floor < err_ceil:
        raise ValueError("need 0 < err_floor < err_ceil")
    t = np.asarray(traj.times, dtype=float)
    if t.size < 2:
        raise EstimationError("trajectory too short")
    if detrend and traj.dense is not None:
        t = np.linspace(t[0], t[-1], _RESAMPLE)
        err = np.abs(traj.at(t, species) - float(target))
    else:
        err = np.abs(traj.series(species) - float(target))
    settle = t[0] + 0.01 * (t[-1] - t[0])
    tail = err[t >= settle]
    if tail.size and float(tail.max()) < err_floor:
        return RateEstimate(math.inf, (float(settle), float(t[-1])), 1.0, int(tail.size))
    above = np.nonzero(err > err_ceil)[0]
    start = int(above[-1]) + 1 if above.size else 0
    below = np.nonzero(err[start:] < err_floor)[0]
    end = start + int(below[0]) if below.size else t.size
    seg_t, seg_e = t[start:end], err[start:end]
    keep = seg_e > 0
    seg_t, seg_e = seg_t[keep], seg_e[keep]
    if seg_t.size < MIN_FIT_SAMPLES:
        raise EstimationError(
            f"only {seg_t.size} samples with error in [{err_floor:g}, {err_ceil:g}]")
    log_e = np.log(seg_e)
    if detrend:
        rho, win, r2, n_used = _detrended_fit(seg_t, log_e)
        if rho <= 0:
            raise EstimationError("error is not decaying over the fit window")
        return RateEstimate(float(rho), win, r2, n_used)
    slope, intercept = np.polyfit(seg_t, log_e, 1)
    resid = log_e - (slope * seg_t + intercept)
    ss_tot = float(np.sum((log_e - log_e.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    if slope >= 0:
        raise EstimationError("error is not decaying over the fit window")
    return RateEstimate(float(-slope), (float(seg_t[0]), float(seg_t[-1])),
                        r2, int(seg_t.size))


def digits_time(traj: Trajectory, species: str, target: float, n: int) -> DigitTime:
    """Smallest time after which |x - target| stays at or below 10^-n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    thr = 10.0 ** (-n)
    t = np.asarray(traj.times, dtype=float)
    err = np.abs(traj.series(species) - float(target))
    above = np.nonzero(err > thr)[0]
    if not above.size:
        return DigitTime(n, 0.0)
    i = int(above[-1])
    if i == t.size - 1:
        raise NotConvergedError(
            f"|{species} - {target:g}| still {err[-1]:.3g} > 1e-{n} at t={t[-1]:g}",
            float(err[-1]))
    e0, e1 = float(err[i]), float(err[i + 1])
    if e1 <= 0:
        frac = (e0 - thr) / e0
    else:
        frac = (math.log(e0) - math.log(thr)) / (math.log(e0) - math.log(e1))
    return DigitTime(n, float(t[i] + frac * (t[i + 1] - t[i])))


def check_speed(estimate: RateEstimate, bound: SpeedBound,
                slack: float = 0.15) -> Verdict:
    if not 0 <= slack < 1:
        raise ValueError("slack must lie in [0, 1)")
    if bound.value <= 0:
        raise ValueError("speed bound must be positive")
    required = (1.0 - slack) * bound.value
    return Verdict(estimate.rho_hat >= required, estimate.rho_hat,
                   required, bound, slack)


def growth_log_rate(traj: Trajectory, species: str, tail_frac: float = 1 / 3) -> float:
    """min of ln(x)/t over the final tail_frac of the run; lower bounds
    the exponential growth rate actually achieved."""
    t = np.asarray(traj.times, dtype=float)
    x = traj.series(species)
    cut = t[-1] - tail_frac * (t[-1] - t[0])
    keep = (t >= cut) & (x > 0) & (t > 0)
    if not np.any(keep):
        raise EstimationError("no positive samples in the growth tail")
    return float(np.min(np.log(x[keep]) / t[keep]))


# ---------------------------------------------------------------------------
# calculus of rate bounds for function composition
#
# Each step is (case, rates, limits); a rate of None refers to the result
# of the previous step, so pipelines can be chained.  These rules are the
# function-level facts (no capping at 1; that is a property of the gate
# dynamics, not of composition).


def _resolve(rates, prev):
    out = []
    for r in rates:
        if r is None:
            if prev is None:
                raise ValueError("no previous step to chain from")
            out.append(prev)
        else:
            out.append(float(r))
    if any(r <= 0 for r in out):
        raise ValueError("rates must be positive")
    return out


def bound_calculus(ops: Sequence) -> SpeedBound:
    """Fold composition steps into a single rate bound.

    cases: "scalar" (c*g, c != 0), "sum", "product", "reciprocal"
    (nonzero limit), ("root", m) for g^(1/m).
    """
    if not ops:
        raise ValueError("empty op list")
    prev: float | None = None
    case_text = ""
    for op in ops:
        case, rates, limits = op[0], op[1], op[2]
        rs = _resolve(rates, prev)
        if case == "scalar":
            (r,) = rs
            prev, case_text = r, "scalar multiple keeps the rate"
        elif case == "sum":
            r1, r2 = rs
            prev, case_text = min(r1, r2), "sum: min{rho_1, rho_2}"
        elif case == "product":
            r1, r2 = rs
            l1, l2 = (float(v) for v in limits)
            if l1 == 0 and l2 == 0:
                prev, case_text = r1 + r2, "product, both limits zero: rho_1 + rho_2"
            elif l1 == 0:
                prev, case_text = r1, "product, first limit zero: rho_1"
            elif l2 == 0:
                prev, case_text = r2, "product, second limit zero: rho_2"
            else:
                prev, case_text = min(r1, r2), "product: min{rho_1, rho_2}"
        elif case == "reciprocal":
            (r,) = rs
            (lim,) = (float(v) for v in limits)
            if lim == 0:
                raise ValueError("reciprocal of a zero limit is undefined")
            prev, case_text = r, "reciprocal keeps the rate"
        elif case == "root":
            (r,) = rs
            lim = float(limits[0])
            m = int(op[3]) if len(op) > 3 else 2
            if m < 2:
                raise ValueError("root needs m >= 2")
            if lim < 0:
                raise ValueError("root of a negative limit")
            if lim == 0:
                prev, case_text = r / m, f"root of zero limit: rho/{m}"
            else:
                prev, case_text = r, "root of positive limit keeps the rate"
        else:
            raise ValueError(f"unknown case {case!r}")
    return SpeedBound(float(prev), case_text)


# ---------------------------------------------------------------------------
# predictions for the forced scalar testbeds


@dataclass(frozen=True)
class LemmaPrediction:
    family: str
    target: float | None  # None for the unbounded growth family
    bound: SpeedBound


def forced_prediction(system: ForcedSystem) -> LemmaPrediction:
    g1, g2 = system.g1, system.g2
    if system.form == "linear":
        if g2.limit <= 0:
            raise PreconditionError("linear form needs g2 -> positive limit")
        b = min(g1.rate, g2.rate, g2.limit)
        return LemmaPrediction(
            "driven_linear", g1.limit / g2.limit,
            SpeedBound(b, "min{rho_g1, rho_g2, g2*}"))
    m = system.m
    if g1.limit > 0 and g2.limit > 0:
        if system.x0 <= 0:
            raise PreconditionError("power form needs x0 > 0")
        b = min(g1.rate, g2.rate, m * g1.limit)
        return LemmaPrediction(
            "driven_power", (g1.limit / g2.limit) ** (1.0 / m),
            SpeedBound(b, "min{rho_g1, rho_g2, m*g1*}"))
    if g1.limit < 0 < g2.limit:
        b = min(g1.rate, -g1.limit)
        return LemmaPrediction(
            "decay_to_zero", 0.0, SpeedBound(b, "min{rho_g1, -g1*}"))
    if g1.is_constant_one() and g2.limit == 0:
        if system.x0 <= 0:
            raise PreconditionError("growth family needs x0 > 0")
        b = min(g2.rate / m, 1.0)
        return LemmaPrediction(
            "unbounded_growth", None, SpeedBound(b, "min{rho_g2/m, 1}"))
    raise PreconditionError(
        "forced system not covered: need g2* > 0 (linear), g1*,g2* > 0 or "
        "g1* < 0 < g2* (power), or g1 == 1 with g2* = 0 (growth)")
