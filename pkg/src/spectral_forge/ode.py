"""Oscillation-safe propagation of -y'' + q(x) y = E_eff y.

Fixed-step classical RK4 on the first-order system, with the step chosen to
resolve both the solution frequency sqrt(E_eff) and the potential frequency
2*sqrt(lambda) at >= 64 samples per period.  All solution bookkeeping uses
the energy-adapted weighted norm sqrt(y^2 + y'^2/lambda).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import EmptyInterval, NonFiniteState, NonPositiveLambda, ZeroState

STEP_CAP = 0.01
SAMPLES_PER_PERIOD = 64


@dataclass(frozen=True)
class StateVec:
    """Solution value and derivative (y, y')."""

    y: float
    yp: float

    def as_array(self):
        return np.array([self.y, self.yp])


@dataclass(frozen=True)
class EnergyShift:
    """Spectral offset lambda above the threshold E0 = (n-1)^2 K0 / 4."""

    E0: float
    lam: float

    def __post_init__(self):
        if self.E0 < 0.0:
            raise ValueError("E0 must be >= 0")
        if self.lam <= 0.0:
            raise NonPositiveLambda(f"lambda must be > 0, got {self.lam}")

    @property
    def e_eff(self) -> float:
        return self.E0 + self.lam


@dataclass
class Trajectory:
    """Recorded samples of one propagated solution."""

    xs: np.ndarray
    ys: np.ndarray
    yps: np.ndarray
    norms: np.ndarray
    lam: float
    sup_norm: float

    @property
    def final_state(self) -> StateVec:
        return StateVec(float(self.ys[-1]), float(self.yps[-1]))

    @property
    def initial_norm(self) -> float:
        return float(self.norms[0])

    @property
    def final_norm(self) -> float:
        return float(self.norms[-1])

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("x,y,yp,weighted_norm\n")
            for x, y, yp, w in zip(self.xs, self.ys, self.yps, self.norms):
                fh.write("%.17g,%.17g,%.17g,%.17g\n" % (x, y, yp, w))


def weighted_norm(s: StateVec, lam: float) -> float:
    """Energy-adapted size sqrt(y^2 + y'^2 / lambda)."""
    if lam <= 0.0:
        raise NonPositiveLambda(f"lambda must be > 0, got {lam}")
    return math.hypot(s.y, s.yp / math.sqrt(lam))


def prufer_angle(s: StateVec, lam: float) -> float:
    """Projective boundary angle theta in [0, pi) with tan(theta) = y'/(sqrt(lam) y)."""
    if lam <= 0.0:
        raise NonPositiveLambda(f"lambda must be > 0, got {lam}")
    if s.y == 0.0 and s.yp == 0.0:
        raise ZeroState("zero state has no angle")
    theta = math.atan2(s.yp / math.sqrt(lam), s.y)
    return theta % math.pi


def angle_distance(a: float, b: float) -> float:
    """Distance between two projective angles, mod pi."""
    d = (a - b) % math.pi
    return min(d, math.pi - d)


def wronskian(s1: StateVec, s2: StateVec) -> float:
    return s1.y * s2.yp - s2.y * s1.yp


def default_step(e_eff: float, lam: float) -> float:
    """Step resolving both oscillation frequencies, capped at STEP_CAP."""
    freq2 = max(e_eff, 4.0 * lam, 1e-12)
    return min(STEP_CAP, 2.0 * math.pi / math.sqrt(freq2) / SAMPLES_PER_PERIOD)


def _as_shift(energy) -> EnergyShift:
    if isinstance(energy, EnergyShift):
        return energy
    return EnergyShift(0.0, float(energy))


def grid_for(x_from: float, x_to: float, step: float | None, e_eff: float,
             lam: float):
    """Signed step h and step count covering [x_from, x_to] exactly."""
    length = x_to - x_from
    if length == 0.0:
        raise EmptyInterval("x_from == x_to")
    target = step if step is not None else default_step(e_eff, lam)
    nsteps = max(1, int(math.ceil(abs(length) / target)))
    return length / nsteps, nsteps


def propagate(q_fn, energy, x_from: float, x_to: float, s0: StateVec,
              step: float | None = None, max_samples: int = 400_001) -> Trajectory:
    """Propagate the unique solution with initial state s0 from x_from to x_to.

    q_fn must accept numpy arrays.  `energy` is either an EnergyShift or a
    plain E_eff (then weighted norms use lambda = E_eff).  Backward
    integration is selected by x_to < x_from.
    """
    shift = _as_shift(energy)
    h, nsteps = grid_for(x_from, x_to, step, shift.e_eff, shift.lam)
    nodes = x_from + h * np.arange(nsteps + 1)
    mids = nodes[:-1] + 0.5 * h
    gn = np.asarray(q_fn(nodes), dtype=float) - shift.e_eff
    gm = np.asarray(q_fn(mids), dtype=float) - shift.e_eff
    if gn.shape != nodes.shape or gm.shape != mids.shape:
        raise ValueError("q_fn must be vectorized over numpy arrays")
    stride = max(1, -(-(nsteps + 1) // max_samples))
    ys, ps, sup = _kernels.rk4_record(gn, gm, h, s0.y, s0.yp,
                                      1.0 / shift.lam, stride)
    if not (np.all(np.isfinite(ys)) and np.all(np.isfinite(ps))):
        raise NonFiniteState("integration overflowed; check q_fn and step policy")
    idx = np.arange(len(ys)) * stride
    idx[-1] = nsteps
    xs = x_from + h * idx
    norms = np.hypot(ys, ps / math.sqrt(shift.lam))
    return Trajectory(xs, ys, ps, norms, shift.lam, float(sup))


def propagate_batch(q_fn, energy, x_from: float, x_to: float, states,
                    step: float | None = None):
    """Propagate several initial states through one equation.

    Returns (final_states, sup_factors) where sup_factors[i] is the max
    weighted norm along the way divided by the initial weighted norm.
    """
    shift = _as_shift(energy)
    h, nsteps = grid_for(x_from, x_to, step, shift.e_eff, shift.lam)
    nodes = x_from + h * np.arange(nsteps + 1)
    mids = nodes[:-1] + 0.5 * h
    gn = np.asarray(q_fn(nodes), dtype=float) - shift.e_eff
    gm = np.asarray(q_fn(mids), dtype=float) - shift.e_eff
    nb = len(states)
    gn_b = np.repeat(gn[:, None], nb, axis=1)
    gm_b = np.repeat(gm[:, None], nb, axis=1)
    ys = np.array([s.y for s in states], dtype=float)
    ps = np.array([s.yp for s in states], dtype=float)
    w0 = np.hypot(ys, ps / math.sqrt(shift.lam))
    sup = _kernels.rk4_batch(gn_b, gm_b, h, ys, ps, 1.0 / shift.lam)
    if not (np.all(np.isfinite(ys)) and np.all(np.isfinite(ps))):
        raise NonFiniteState("integration overflowed; check q_fn and step policy")
    finals = [StateVec(float(y), float(p)) for y, p in zip(ys, ps)]
    return finals, sup / w0
