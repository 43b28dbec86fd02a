"""
Sliding surfaces, the relay law and the time-optimal bang-bang reference
for the bounded double-integrator.

All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import dynamics
from errors import DomainError, UnsupportedCaseError

# Boundary between the twisting and terminal regimes of the optimal surface
ALPHA_BOUNDARY = 0.5


def _sign(value):
    return float(np.sign(value))


def _odd_power(value, exponent):
    """Real odd extension |v|^r * sign(v)"""
    return float(np.abs(value) ** exponent) * _sign(value)


# --- Surfaces ---

@dataclass(frozen=True)
class Optimal:
    """s = x1 + alpha * m / U * x2 * |x2|"""
    alpha: float
    kind = "optimal"

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise DomainError("alpha", f"must be > 0, got {self.alpha}")

    @property
    def gain(self):
        return self.alpha


@dataclass(frozen=True)
class Classic:
    """s = x2 + beta * |x1|^(q/p) * sign(x1)"""
    beta: float
    q_over_p: float = 0.5
    kind = "classic"

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta <= 0:
            raise DomainError("beta", f"must be > 0, got {self.beta}")
        if not 0 < self.q_over_p < 1:
            raise DomainError("q_over_p", f"must be in (0, 1), got {self.q_over_p}")

    @property
    def gain(self):
        return self.beta


@dataclass(frozen=True)
class NonSingular:
    """s = x1 + beta^-1 * |x2|^(p/q) * sign(x2)"""
    beta: float
    p_over_q: float = 2.0
    kind = "nonsingular"

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta <= 0:
            raise DomainError("beta", f"must be > 0, got {self.beta}")
        if not np.isfinite(self.p_over_q) or self.p_over_q <= 1:
            raise DomainError("p_over_q", f"must be > 1, got {self.p_over_q}")

    @property
    def gain(self):
        return self.beta


@dataclass(frozen=True)
class ControlDecision:
    u: float
    s: float


def eval_surface(spec, state, plant):
    if isinstance(spec, Optimal):
        return state.x1 + spec.alpha * plant.m / plant.U * (state.x2 * abs(state.x2))
    if isinstance(spec, Classic):
        return state.x2 + spec.beta * _odd_power(state.x1, spec.q_over_p)
    if isinstance(spec, NonSingular):
        return state.x1 + _odd_power(state.x2, spec.p_over_q) / spec.beta
    raise DomainError("surface", f"unknown surface spec {spec!r}")


def relay_control(s, plant):
    """u = -U * sign(s), with u = 0 exactly on the surface"""
    if s > 0:
        u = -plant.U
    elif s < 0:
        u = plant.U
    else:
        u = 0.0
    return ControlDecision(u=u, s=s)


def sliding_derivative_optimal(state, s, alpha):
    """ds/dt of the unperturbed loop: x2 - 2*alpha*|x2|*sign(s)"""
    return state.x2 - 2.0 * alpha * abs(state.x2) * _sign(s)


def decelerating_parabola(x2, plant):
    """Position on the time-optimal switching curve for velocity x2"""
    return -(0.5 * plant.m / plant.U) * (x2 * abs(x2))


def matched_nonsingular(classic):
    """
    Non-singular surface with the same zero set as `classic`.

    Inverting x2 = -beta*|x1|^(q/p)*sign(x1) gives gain beta^(p/q), not beta.
    """
    p_over_q = 1.0 / classic.q_over_p
    return NonSingular(beta=classic.beta ** p_over_q, p_over_q=p_over_q)


# --- Existence conditions ---

def existence_condition(alpha):
    """Terminal sliding exists on the optimal surface iff alpha > 0.5"""
    if not alpha > 0:
        raise DomainError("alpha", f"must be > 0, got {alpha}")
    return alpha > ALPHA_BOUNDARY


def classic_existence_condition(alpha_relay_gain, beta):
    """
    Terminal mode of the classic surface under u = -alpha*sign(s): beta^2 < 2*alpha.

    alpha here is the relay amplitude (acceleration units), not the
    optimal-surface gain.
    """
    if not alpha_relay_gain > 0:
        raise DomainError("alpha_relay_gain", f"must be > 0, got {alpha_relay_gain}")
    if not beta > 0:
        raise DomainError("beta", f"must be > 0, got {beta}")
    return beta ** 2 < 2.0 * alpha_relay_gain


def regime_for_alpha(alpha):
    if alpha > ALPHA_BOUNDARY:
        return "terminal"
    if alpha == ALPHA_BOUNDARY:
        return "twisting-boundary"
    return "twisting"


def in_fuller_class(alpha):
    return 0.25 <= alpha <= ALPHA_BOUNDARY


def equivalent_control(state, xi, alpha, plant):
    """Force that holds an optimal-surface trajectory on s = 0 under disturbance xi"""
    return -_sign(state.x2) * plant.U / (2.0 * alpha) - xi


def sliding_headroom(alpha, U):
    """Largest disturbance against which sliding on s = 0 can be held (negative below 0.5)"""
    return U * (1.0 - 1.0 / (2.0 * alpha))


# --- Time-optimal reference ---

@dataclass(frozen=True)
class BangBangPlan:
    switch_state: "dynamics.State"
    switch_time: float
    final_time: float


def bang_bang_reference(initial, plant):
    """
    Single-switch time-optimal transfer of a resting state to the origin.

    Full thrust towards the origin for half the distance, full braking for
    the other half.
    """
    if initial.x2 != 0:
        raise UnsupportedCaseError(
            f"only rest-to-rest transfers are supported, got x2(0)={initial.x2}"
        )
    distance = abs(initial.x1)
    direction = -_sign(initial.x1)
    final_time = 2.0 * float(np.sqrt(plant.m * distance / plant.U))
    switch_speed = float(np.sqrt(plant.U * distance / plant.m))
    switch_state = dynamics.State(initial.x1 / 2.0, direction * switch_speed + 0.0)
    return BangBangPlan(switch_state=switch_state, switch_time=final_time / 2.0, final_time=final_time)


def bang_bang_state(plan, initial, plant, t):
    """State and control of the reference at time t; (origin, 0) after final_time."""
    direction = -_sign(initial.x1)
    accel = direction * plant.U / plant.m
    if t >= plan.final_time:
        return dynamics.State(0.0, 0.0), 0.0
    if t <= plan.switch_time:
        return dynamics.State(initial.x1 + 0.5 * accel * t * t, accel * t), direction * plant.U
    tau = t - plan.switch_time
    x1 = plan.switch_state.x1 + plan.switch_state.x2 * tau - 0.5 * accel * tau * tau
    x2 = plan.switch_state.x2 - accel * tau
    return dynamics.State(x1, x2), -direction * plant.U
