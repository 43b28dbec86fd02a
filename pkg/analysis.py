"""
Post-processing of simulated trajectories.

Crossing detection, terminal/twisting mode classification, settling and
reaching metrics, and the runtime monitors for the Lyapunov and
reachability conditions of the optimal surface.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

import numpy as np

import control
import dynamics
from errors import DomainError

logger = logging.getLogger(__name__)

DEFAULT_EPS_X1 = 1e-2
DEFAULT_EPS_X2 = 1e-1
DEFAULT_ETA = 0.01
DEFAULT_WINDOW_FRACTION = 0.25
# Default band is BAND_FACTOR * dt * (1 + 2*alpha) * max|x2|
BAND_FACTOR = 5.0
# Crossings closer to the origin than CHATTER_FACTOR * dt * U/m are relay chatter
CHATTER_FACTOR = 10.0
# Consecutive same-branch crossings that make a sliding interval
MIN_SLIDING_CROSSINGS = 3


class Mode(str, Enum):
    TERMINAL = "Terminal"
    TWISTING = "Twisting"
    MIXED = "Mixed"
    NOT_CONVERGED = "NotConverged"


@dataclass(frozen=True)
class CrossingEvent:
    """
    Sign change of s at time t.

    `index` is the last nonzero sample before the change. Usually s
    changes sign strictly between index and index+1; when s passes through
    a run of exact zeros, s[index+1] == 0 and t is the first zero sample.
    """
    t: float
    state: dynamics.State
    index: int

    def to_dict(self):
        return {"t": self.t, "x1": self.state.x1, "x2": self.state.x2, "index": self.index}


@dataclass(frozen=True)
class AnalysisSettings:
    """band=None and window=None mean 'derive from the run'"""
    band: Optional[float] = None
    eps_x1: float = DEFAULT_EPS_X1
    eps_x2: float = DEFAULT_EPS_X2
    eta: float = DEFAULT_ETA
    window: Optional[float] = None

    def __post_init__(self):
        for name in ("band", "eps_x1", "eps_x2", "eta", "window"):
            value = getattr(self, name)
            if value is None and name in ("band", "window"):
                continue
            if not np.isfinite(value) or value <= 0:
                raise DomainError(name, f"must be > 0, got {value}")


@dataclass(frozen=True)
class ReachingCheck:
    first_crossing_time: Optional[float]
    eta_star: Optional[float]
    bound: Optional[float]

    @property
    def holds(self):
        if self.first_crossing_time is None or self.bound is None:
            return None
        return self.first_crossing_time <= self.bound


@dataclass
class ModeReport:
    mode: Mode
    crossings: List[CrossingEvent]
    reach_time: Optional[float]
    settling_time: Optional[float]
    residual_amplitude: Optional[float]
    band: float = 0.0
    margins: Optional[dict] = None
    reaching: Optional[ReachingCheck] = None
    lyapunov_increase_fraction: Optional[float] = None
    recovery_times: Optional[list] = None

    def to_dict(self):
        """JSON-ready document; see SCENARIO_CONFIG_README.md for the schema"""
        reaching = None
        if self.reaching is not None:
            reaching = {
                "first_crossing_time": self.reaching.first_crossing_time,
                "eta_star": self.reaching.eta_star,
                "bound": self.reaching.bound,
                "holds": self.reaching.holds,
            }
        return {
            "mode": self.mode.value,
            "band": self.band,
            "crossing_count": len(self.crossings),
            "crossings": [c.to_dict() for c in self.crossings],
            "reach_time": self.reach_time,
            "settling_time": self.settling_time,
            "residual_amplitude": self.residual_amplitude,
            "margins": self.margins,
            "reaching": reaching,
            "lyapunov_increase_fraction": self.lyapunov_increase_fraction,
            "recovery_times": self.recovery_times,
        }


def _surface_gain(traj):
    surface = traj.surface
    return surface.alpha if isinstance(surface, control.Optimal) else 1.0


def default_band(traj):
    """Discrete sliding band: the relay overshoots s by about one Euler step"""
    if len(traj) == 0:
        return 0.0
    max_x2 = float(np.max(np.abs(traj.x2)))
    return BAND_FACTOR * traj.dt * (1.0 + 2.0 * _surface_gain(traj)) * max_x2


def chatter_floor(traj):
    return CHATTER_FACTOR * traj.dt * traj.plant.U / traj.plant.m


def detect_crossings(traj):
    """
    One event per sign change of s.

    Strict changes between neighbours are linearly interpolated. A run of
    exact zeros followed by the opposite sign yields one event placed at the
    first zero sample.
    """
    events = []
    s = traj.s
    prev_sign = 0.0
    prev_index = -1
    for k in range(len(s)):
        sign = float(np.sign(s[k]))
        if sign == 0.0:
            continue
        if prev_sign != 0.0 and sign != prev_sign:
            if prev_index == k - 1:
                frac = s[prev_index] / (s[prev_index] - s[k])
                t = traj.t[prev_index] + frac * (traj.t[k] - traj.t[prev_index])
                x1 = traj.x1[prev_index] + frac * (traj.x1[k] - traj.x1[prev_index])
                x2 = traj.x2[prev_index] + frac * (traj.x2[k] - traj.x2[prev_index])
                state = dynamics.State(float(x1), float(x2))
                events.append(CrossingEvent(t=float(t), state=state, index=prev_index))
            else:
                zero = prev_index + 1
                events.append(CrossingEvent(t=float(traj.t[zero]), state=traj.state_at(zero), index=prev_index))
        prev_sign = sign
        prev_index = k
    return events


def _has_sliding_interval(crossings):
    run = 0
    prev_sign = 0.0
    for c in crossings:
        sign = float(np.sign(c.state.x2))
        run = run + 1 if sign == prev_sign and sign != 0.0 else 1
        prev_sign = sign
        if run >= MIN_SLIDING_CROSSINGS:
            return True
    return False


def _strictly_decreasing(values):
    return all(b < a for a, b in zip(values, values[1:]))


def settling_time(traj, eps_x1=DEFAULT_EPS_X1, eps_x2=DEFAULT_EPS_X2):
    """First time after which |x1| <= eps_x1 and |x2| <= eps_x2 for good; None if never."""
    if eps_x1 <= 0 or eps_x2 <= 0:
        raise DomainError("eps", "settling tolerances must be > 0")
    outside = (np.abs(traj.x1) > eps_x1) | (np.abs(traj.x2) > eps_x2)
    idx = np.flatnonzero(outside)
    if len(idx) == 0:
        return float(traj.t[0])
    last = int(idx[-1])
    if last == len(traj) - 1:
        return None
    return float(traj.t[last + 1])


def limit_cycle_amplitude(traj, window):
    """max |x1| over the final `window` seconds"""
    if not window > 0 or window >= traj.duration:
        raise DomainError("window", f"must be in (0, {traj.duration}), got {window}")
    start = traj.t[-1] - window
    mask = traj.t >= start - 1e-9 * traj.dt
    return float(np.max(np.abs(traj.x1[mask])))


def classify_mode(traj, band=None, eps_x1=DEFAULT_EPS_X1, eps_x2=DEFAULT_EPS_X2, window=None):
    """
    Terminal, Twisting, Mixed or NotConverged.

    Terminal: |s| <= band for every sample after the first crossing.
    Mixed: the band is left, but some interval slides (three or more
    consecutive crossings on the same velocity branch).
    Twisting: three or more crossings with strictly decreasing state norm.
    Crossings inside the chatter floor around the origin are ignored for
    the last two.
    """
    if band is None:
        band = default_band(traj)
    elif not band > 0:
        raise DomainError("band", f"must be > 0, got {band}")

    crossings = detect_crossings(traj)
    settle = settling_time(traj, eps_x1, eps_x2)
    reach = crossings[0].t if crossings else None
    residual = None
    if settle is not None and traj.duration > 0:
        if window is None:
            window = DEFAULT_WINDOW_FRACTION * traj.duration
        residual = limit_cycle_amplitude(traj, window)

    abs_s = np.abs(traj.s)
    if not crossings:
        mode = Mode.TERMINAL if np.all(abs_s <= band) else Mode.NOT_CONVERGED
    elif np.all(abs_s[crossings[0].index + 1:] <= band):
        mode = Mode.TERMINAL
    else:
        floor = chatter_floor(traj)
        significant = [c for c in crossings if c.state.norm > floor]
        norms = [c.state.norm for c in significant]
        if _has_sliding_interval(significant):
            mode = Mode.MIXED
        elif len(significant) >= 3 and _strictly_decreasing(norms):
            mode = Mode.TWISTING
        else:
            mode = Mode.NOT_CONVERGED

    logger.debug(f"classify_mode: {mode.value}, {len(crossings)} crossings, band={band:g}")
    return ModeReport(
        mode=mode, crossings=crossings, reach_time=reach,
        settling_time=settle, residual_amplitude=residual, band=float(band),
    )


# --- Reaching and Lyapunov monitors ---

def reaching_time_bound(s0, eta):
    """Upper bound on the reaching time under eta-reachability: |s0| / eta"""
    if not eta > 0:
        raise DomainError("eta", f"must be > 0, got {eta}")
    return abs(s0) / eta


def reachability_margin(x2, s, alpha, eta):
    """(-eta + 2*alpha*|x2|) - x2*sign(s); positive where the reachability condition holds"""
    if not eta > 0:
        raise DomainError("eta", f"must be > 0, got {eta}")
    if not alpha > 0:
        raise DomainError("alpha", f"must be > 0, got {alpha}")
    return (-eta + 2.0 * alpha * abs(x2)) - x2 * float(np.sign(s))


def margin_series(traj, alpha, eta=DEFAULT_ETA):
    if not eta > 0:
        raise DomainError("eta", f"must be > 0, got {eta}")
    return (-eta + 2.0 * alpha * np.abs(traj.x2)) - traj.x2 * np.sign(traj.s)


def margin_summary(traj, alpha, eta=DEFAULT_ETA):
    margins = margin_series(traj, alpha, eta)
    return {
        "eta": eta,
        "min": float(np.min(margins)),
        "max": float(np.max(margins)),
        "fraction_positive": float(np.mean(margins > 0)),
    }


def lyapunov_series(traj):
    """V = 0.5 * s^2 per sample"""
    return 0.5 * np.square(traj.s)


def _reaching_end(traj):
    crossings = detect_crossings(traj)
    return crossings[0].index if crossings else None


def first_crossing_time(traj):
    crossings = detect_crossings(traj)
    return crossings[0].t if crossings else None


def lyapunov_increase_fraction(traj):
    """Share of reaching-phase steps on which V grew; None without a crossing."""
    end = _reaching_end(traj)
    if end is None or end == 0:
        return None
    v = lyapunov_series(traj)[: end + 1]
    return float(np.mean(np.diff(v) > 0))


def reaching_check(traj, alpha):
    """
    Compare the measured first-crossing time against |s0| / eta*.

    eta* is the smallest sign(s)-projected approach speed 2*alpha*|x2| - x2*sign(s)
    seen before the first crossing; the bound only applies when it is positive.
    """
    end = _reaching_end(traj)
    if end is None:
        return ReachingCheck(first_crossing_time=None, eta_star=None, bound=None)
    x2 = traj.x2[: end + 1]
    s = traj.s[: end + 1]
    eta_star = float(np.min(2.0 * alpha * np.abs(x2) - x2 * np.sign(s)))
    bound = reaching_time_bound(traj.s[0], eta_star) if eta_star > 0 else None
    return ReachingCheck(first_crossing_time=first_crossing_time(traj), eta_star=eta_star, bound=bound)


def derivative_consistency(traj, alpha, tol=None):
    """
    Fraction of non-switching samples where the finite difference of s
    matches sliding_derivative_optimal within tol (default 10*dt*U/m).
    """
    if tol is None:
        tol = 10.0 * traj.dt * traj.plant.U / traj.plant.m
    fd = np.diff(traj.s) / traj.dt
    x2 = traj.x2[:-1]
    predicted = x2 - 2.0 * alpha * np.abs(x2) * np.sign(traj.s[:-1])
    steady = traj.u[:-1] == traj.u[1:]
    if not np.any(steady):
        return None
    return float(np.mean(np.abs(fd - predicted)[steady] <= tol))


def recovery_times(traj, eps_x1=DEFAULT_EPS_X1, eps_x2=DEFAULT_EPS_X2):
    """
    For each sign change of xi after the state first enters the settling box,
    the time from the flip until the state is back in the box.

    0.0 when the flip does not push the state out before the next flip;
    None when it never comes back within the run.
    """
    inside = (np.abs(traj.x1) <= eps_x1) & (np.abs(traj.x2) <= eps_x2)
    entries = np.flatnonzero(inside)
    if len(entries) == 0:
        return []
    first_entry = int(entries[0])
    sign = np.sign(traj.xi)
    flips = [
        k for k in range(first_entry + 1, len(traj))
        if sign[k] != 0 and sign[k - 1] != 0 and sign[k] != sign[k - 1]
    ]
    result = []
    for i, k in enumerate(flips):
        stop = flips[i + 1] if i + 1 < len(flips) else len(traj)
        exits = np.flatnonzero(~inside[k:stop])
        if len(exits) == 0:
            result.append(0.0)
            continue
        exit_index = k + int(exits[0])
        returns = np.flatnonzero(inside[exit_index:])
        if len(returns) == 0:
            result.append(None)
        else:
            result.append(float(traj.t[exit_index + int(returns[0])] - traj.t[k]))
    return result


def euler_order_ratio(plant, surface, initial, t_probe, dt, dt_ref):
    """
    err(dt) / err(dt/2) at t_probe, errors measured against a dt_ref run.

    First-order convergence gives a ratio near 2 where the right-hand side
    is smooth over [0, t_probe].
    """
    pert = dynamics.NoPerturbation()

    def state_at_probe(step):
        cfg = dynamics.SimConfig(dt=step, t_end=t_probe, initial=initial)
        traj = dynamics.simulate(plant, surface, pert, cfg)
        return np.array([traj.x1[-1], traj.x2[-1]])

    reference = state_at_probe(dt_ref)
    coarse = float(np.linalg.norm(state_at_probe(dt) - reference))
    fine = float(np.linalg.norm(state_at_probe(dt / 2.0) - reference))
    if fine == 0.0:
        raise DomainError("dt", "fine run matches the reference exactly; ratio undefined")
    return coarse / fine


def analyze(traj, settings=None):
    """Full report used by scenario runs"""
    if settings is None:
        settings = AnalysisSettings()
    report = classify_mode(
        traj, band=settings.band, eps_x1=settings.eps_x1,
        eps_x2=settings.eps_x2, window=settings.window,
    )
    if isinstance(traj.surface, control.Optimal):
        alpha = traj.surface.alpha
        report.margins = margin_summary(traj, alpha, settings.eta)
        report.reaching = reaching_check(traj, alpha)
    report.lyapunov_increase_fraction = lyapunov_increase_fraction(traj)
    if isinstance(traj.perturbation, (dynamics.Harmonic, dynamics.RandomBinary)):
        report.recovery_times = recovery_times(traj, settings.eps_x1, settings.eps_x2)
    return report
