"""Shared fixtures: the standard plant (m=0.1, U=1) and runs from rest at x1=-1."""

import os

import numpy as np
import pytest

import control
import dynamics

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "scenarios")


@pytest.fixture
def plant():
    return dynamics.PlantParams(m=0.1, U=1.0)


@pytest.fixture
def start():
    return dynamics.State(-1.0, 0.0)


@pytest.fixture
def run(plant, start):
    """run(alpha, pert=None, t_end=2.0, initial=None, dt=0.001, seed=0) -> Trajectory"""

    def _run(alpha, pert=None, t_end=2.0, initial=None, dt=0.001, seed=0):
        cfg = dynamics.SimConfig(dt=dt, t_end=t_end, initial=initial or start, seed=seed)
        return dynamics.simulate(plant, control.Optimal(alpha), pert or dynamics.NoPerturbation(), cfg)

    return _run


def make_trajectory(s, x1=None, x2=None, xi=None, dt=0.001, alpha=0.6):
    """Hand-built trajectory for analysis tests; u follows the relay on s."""
    s = np.asarray(s, dtype=float)
    n = len(s)
    return dynamics.Trajectory(
        dt=dt,
        plant=dynamics.PlantParams(),
        surface=control.Optimal(alpha),
        perturbation=dynamics.NoPerturbation(),
        t=np.arange(n) * dt,
        x1=np.zeros(n) if x1 is None else np.asarray(x1, dtype=float),
        x2=np.zeros(n) if x2 is None else np.asarray(x2, dtype=float),
        s=s,
        u=-np.sign(s),
        xi=np.zeros(n) if xi is None else np.asarray(xi, dtype=float),
    )
