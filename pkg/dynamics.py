"""
Plant model, fixed-step integrator and matched perturbations for the
bounded double-integrator ``m * x'' = u + xi``.

Everything here is deterministic: a run is a pure function of its
PlantParams, SurfaceSpec, PerturbationSpec and SimConfig.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Union

import numpy as np
import pandas as pd

import control
from errors import DomainError, SimulationDiverged

logger = logging.getLogger(__name__)

# Presliding stiffness used when a friction spec does not give one (force per metre)
DEFAULT_SIGMA0 = 1.0e5
# Seconds between random binary resamples
DEFAULT_DWELL = 0.1
# Absorbs binary representation error of dt when counting samples / dwell slots
_GRID_EPS = 1e-9

TRAJECTORY_COLUMNS = ["t", "x1", "x2", "s", "u", "xi"]


def _require_finite(name, value):
    if not np.isfinite(value):
        raise DomainError(name, f"must be finite, got {value}")


def _require_positive(name, value):
    _require_finite(name, value)
    if value <= 0:
        raise DomainError(name, f"must be > 0, got {value}")


@dataclass(frozen=True)
class PlantParams:
    """Inertia m (kg or kg*m^2) and control bound U (N or N*m)"""
    m: float = 0.1
    U: float = 1.0

    def __post_init__(self):
        _require_positive("m", self.m)
        _require_positive("U", self.U)


@dataclass(frozen=True)
class State:
    """Position x1 and velocity x2 of the 1-DOF motion"""
    x1: float
    x2: float

    def __post_init__(self):
        _require_finite("x1", self.x1)
        _require_finite("x2", self.x2)

    @property
    def norm(self):
        return float(np.hypot(self.x1, self.x2))


# --- Perturbations ---

@dataclass(frozen=True)
class NoPerturbation:
    kind = "none"

    @property
    def amplitude(self):
        return 0.0


@dataclass(frozen=True)
class Friction:
    """Coulomb friction with Dahl presliding; enters the plant as xi = -f"""
    Fc: float
    sigma0: float = DEFAULT_SIGMA0
    kind = "friction"

    def __post_init__(self):
        _require_positive("Fc", self.Fc)
        _require_positive("sigma0", self.sigma0)

    @property
    def amplitude(self):
        return self.Fc


@dataclass(frozen=True)
class Harmonic:
    A: float
    omega: float
    phase: float = 0.0
    kind = "harmonic"

    def __post_init__(self):
        _require_positive("A", self.A)
        _require_finite("omega", self.omega)
        _require_finite("phase", self.phase)

    @property
    def amplitude(self):
        return self.A


@dataclass(frozen=True)
class RandomBinary:
    """xi in {-A, +A}, redrawn every `dwell` seconds. seed=None means use SimConfig.seed."""
    A: float
    dwell: float = DEFAULT_DWELL
    seed: Optional[int] = None
    kind = "random_binary"

    def __post_init__(self):
        _require_positive("A", self.A)
        _require_positive("dwell", self.dwell)
        if self.seed is not None and (int(self.seed) != self.seed or self.seed < 0):
            raise DomainError("seed", f"must be a non-negative integer, got {self.seed}")

    @property
    def amplitude(self):
        return self.A


PerturbationSpec = Union[NoPerturbation, Friction, Harmonic, RandomBinary]


def check_perturbation_bound(spec, plant):
    """Reject a disturbance that can reach the control bound (|xi| < U)."""
    if spec.amplitude >= plant.U:
        name = "Fc" if isinstance(spec, Friction) else "A"
        raise DomainError(
            f"perturbation.{name}",
            f"perturbation amplitude must be < U (|xi| < U boundedness condition), "
            f"got {spec.amplitude} with U={plant.U}",
        )


@dataclass(frozen=True)
class FrictionState:
    """Presliding deflection z (force units) and the time it was last advanced to"""
    z: float = 0.0
    t: Optional[float] = None


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.001
    t_end: float = 2.0
    initial: State = field(default_factory=lambda: State(-1.0, 0.0))
    seed: int = 0

    def __post_init__(self):
        _require_positive("dt", self.dt)
        _require_positive("t_end", self.t_end)
        if self.dt >= self.t_end:
            raise DomainError("dt", f"must be < t_end ({self.t_end}), got {self.dt}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise DomainError("seed", f"must be a non-negative integer, got {self.seed}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Sample-by-sample record of one run.

    Arrays are read-only and share one index: sample k is at t[k] = k * dt.
    """
    dt: float
    plant: PlantParams
    surface: object
    perturbation: object
    t: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    s: np.ndarray
    u: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        lengths = {len(getattr(self, name)) for name in TRAJECTORY_COLUMNS}
        if len(lengths) != 1:
            raise DomainError("samples", f"column lengths differ: {sorted(lengths)}")
        for name in TRAJECTORY_COLUMNS:
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.t)

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0]) if len(self.t) else 0.0

    def state_at(self, k):
        return State(float(self.x1[k]), float(self.x2[k]))

    def to_frame(self):
        return pd.DataFrame({name: getattr(self, name) for name in TRAJECTORY_COLUMNS})


# --- Integration ---

def step_euler(state, u, xi, plant, dt):
    """
    One explicit forward-Euler step of m * x'' = u + xi.

    Position advances with the velocity at the start of the step.
    """
    _require_finite("u", u)
    _require_finite("xi", xi)
    _require_positive("dt", dt)
    x1 = state.x1 + dt * state.x2
    x2 = state.x2 + dt * (u + xi) / plant.m
    return State(x1, x2)


def dahl_update(z, x2, Fc, sigma0, h):
    """
    Advance the Dahl state dz/dt = sigma0*x2*(1 - z/Fc*sign(x2)) by h at constant x2.

    Uses the exact exponential solution, so |z| <= Fc is kept for any step
    length. Zero velocity holds the presliding deflection.
    """
    if h < 0:
        raise DomainError("t", f"friction state cannot be advanced backwards (h={h})")
    if x2 == 0.0 or h == 0.0:
        return z
    z_ss = Fc * float(np.sign(x2))
    decay = float(np.exp(-sigma0 * abs(x2) * h / Fc))
    return z_ss + (z - z_ss) * decay


@lru_cache(maxsize=8192)
def random_binary_level(seed, index, A):
    """Level of slot `index`; a pure function of (seed, index)."""
    rng = np.random.default_rng([int(seed), int(index)])
    return A if int(rng.integers(0, 2)) == 1 else -A


def eval_perturbation(spec, t, state, fstate):
    """
    Matched disturbance at time t.

    Returns (xi, fstate'). fstate is only advanced by friction specs; the
    friction deflection is integrated from fstate.t up to t with the
    velocity of `state`.
    """
    if isinstance(spec, NoPerturbation):
        return 0.0, fstate
    if isinstance(spec, Harmonic):
        return float(spec.A * np.sin(spec.omega * t + spec.phase)), fstate
    if isinstance(spec, RandomBinary):
        if spec.seed is None:
            raise DomainError("seed", "random binary perturbation needs a seed")
        index = int(np.floor(t / spec.dwell + _GRID_EPS))
        return random_binary_level(spec.seed, index, spec.A), fstate
    if isinstance(spec, Friction):
        if fstate.t is None:
            z = fstate.z
        else:
            z = dahl_update(fstate.z, state.x2, spec.Fc, spec.sigma0, t - fstate.t)
        return 0.0 - z, FrictionState(z=z, t=t)
    raise DomainError("perturbation", f"unknown perturbation spec {spec!r}")


def n_samples(cfg):
    return int(np.floor(cfg.t_end / cfg.dt + _GRID_EPS)) + 1


def simulate(plant, surface, pert, cfg):
    """
    Closed loop: s -> u = relay(s) -> xi -> Euler step, recorded from t=0.

    Control and disturbance both use the state at the start of the step.
    Raises SimulationDiverged if the state stops being finite.
    """
    check_perturbation_bound(pert, plant)
    if isinstance(pert, RandomBinary) and pert.seed is None:
        pert = replace(pert, seed=cfg.seed)

    n = n_samples(cfg)
    t = np.arange(n) * cfg.dt
    x1 = np.empty(n)
    x2 = np.empty(n)
    s = np.empty(n)
    u = np.empty(n)
    xi = np.empty(n)

    logger.debug(f"simulate: {plant}, {surface}, {pert}, {n} samples")

    state = cfg.initial
    fstate = FrictionState()
    for k in range(n):
        tk = float(t[k])
        decision = control.relay_control(control.eval_surface(surface, state, plant), plant)
        xi_k, fstate = eval_perturbation(pert, tk, state, fstate)

        x1[k] = state.x1
        x2[k] = state.x2
        s[k] = decision.s
        u[k] = decision.u
        xi[k] = xi_k

        if k + 1 < n:
            try:
                state = step_euler(state, decision.u, xi_k, plant, cfg.dt)
            except DomainError as e:
                logger.error(f"Run diverged at t={t[k + 1]} ({e})")
                raise SimulationDiverged(float(t[k + 1]), str(e)) from e

    return Trajectory(
        dt=cfg.dt, plant=plant, surface=surface, perturbation=pert,
        t=t, x1=x1, x2=x2, s=s, u=u, xi=xi,
    )
