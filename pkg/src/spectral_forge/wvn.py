"""Single oscillatory building block.

One block carries a smooth, compactly supported decaying-oscillation
potential A * sin(2*kappa*(x-b) + phi) / (x-b) on (x0, x1), ramped to zero
at both ends.  The phase is chosen so that the resonant solution for
lambda_target meets a prescribed boundary angle at x0 and decays across the
block like ((x-b))^(-a), while solutions for every other tracked energy
stay norm-bounded.  All three inequalities are certified numerically on the
integration grid before a block is returned.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels, ode
from .errors import (BadDimension, BlockTooShort, ContractViolated,
                     DegenerateEnergies, OutOfRange, PhaseNotFound,
                     XAtOrBelowShift)
from .ode import EnergyShift, StateVec, angle_distance, prufer_angle

MAP_METRIC = "metric"
MAP_DIRECT = "direct"


def smooth_ramp(t: float) -> float:
    """Smooth transition on [0,1] with all derivatives vanishing at both ends."""
    if t < 0.0 or t > 1.0:
        raise OutOfRange(f"ramp argument {t} outside [0, 1]")
    return _kernels.sigma(t)


def ramp_sigma(t):
    """Vectorized smooth_ramp, clamped outside [0, 1]."""
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, 1e-3, 1.0 - 1e-3)
    b1 = np.exp(-1.0 / tc)
    b2 = np.exp(-1.0 / (1.0 - tc))
    out = b1 / (b1 + b2)
    return np.where(t <= 1e-3, 0.0, np.where(t >= 1.0 - 1e-3, 1.0, out))


def ramp_sigma_prime(t):
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, 1e-3, 1.0 - 1e-3)
    b1 = np.exp(-1.0 / tc)
    b2 = np.exp(-1.0 / (1.0 - tc))
    s = b1 + b2
    out = b1 * b2 * (1.0 / tc**2 + 1.0 / (1.0 - tc) ** 2) / s**2
    return np.where((t <= 1e-3) | (t >= 1.0 - 1e-3), 0.0, out)


def ramp_constant(ramp_width: float) -> float:
    """Constant c_ramp in the derivative envelope bound."""
    return 1.0 + 2.0 / ramp_width


def amplitude_for_decay(a: float, lam: float, K0: float, n: int,
                        map_mode: str = MAP_METRIC) -> float:
    """Amplitude A making the induced oscillation of q - E0 equal 4*a*kappa.

    In metric mode the potential enters q through
    q = (n-1)^2/4 (sqrt(K0)+V)^2 + (n-1)/2 V', whose leading oscillatory
    coefficient is A * sqrt(((n-1)^2 sqrt(K0)/2)^2 + ((n-1) kappa)^2).
    """
    if n < 2:
        raise BadDimension(f"n must be >= 2, got {n}")
    kappa = math.sqrt(lam)
    if map_mode == MAP_DIRECT:
        return 4.0 * a * kappa
    gain = math.hypot((n - 1) ** 2 * math.sqrt(K0) / 2.0, (n - 1) * kappa)
    return 4.0 * a * kappa / gain


@dataclass
class WvnSegment:
    """One ramped oscillatory segment with its mapping context."""

    x0: float
    x1: float
    b: float
    lambda_target: float
    amplitude: float
    phase: float
    decay_exp: float
    ramp_width: float = 1.0
    map_mode: str = MAP_METRIC
    K0: float = 0.0
    n: int = 3

    @property
    def kappa(self) -> float:
        return math.sqrt(self.lambda_target)

    @property
    def c_ramp(self) -> float:
        return ramp_constant(self.ramp_width)

    @property
    def e0(self) -> float:
        if self.map_mode == MAP_DIRECT:
            return 0.0
        return (self.n - 1) ** 2 * self.K0 / 4.0

    def _ramps(self, x):
        ta = (x - self.x0) / self.ramp_width
        tb = (self.x1 - x) / self.ramp_width
        r = ramp_sigma(ta) * ramp_sigma(tb)
        rp = (ramp_sigma_prime(ta) * ramp_sigma(tb)
              - ramp_sigma(ta) * ramp_sigma_prime(tb)) / self.ramp_width
        return r, rp

    def v(self, x):
        """The ramped potential; zero outside (x0, x1)."""
        x = np.asarray(x, dtype=float)
        d = x - self.b
        r, _ = self._ramps(x)
        return self.amplitude * r * np.sin(2.0 * self.kappa * d + self.phase) / d

    def v_prime(self, x):
        x = np.asarray(x, dtype=float)
        d = x - self.b
        u = 2.0 * self.kappa * d + self.phase
        r, rp = self._ramps(x)
        return self.amplitude * (rp * np.sin(u) / d
                                 + r * (2.0 * self.kappa * np.cos(u) / d
                                        - np.sin(u) / d**2))

    def q_tilde(self, x):
        """Schrodinger potential induced by this segment."""
        v = self.v(x)
        if self.map_mode == MAP_DIRECT:
            return v
        c2 = (self.n - 1) ** 2 / 4.0
        c1 = (self.n - 1) / 2.0
        return c2 * (math.sqrt(self.K0) + v) ** 2 + c1 * self.v_prime(x)

    def to_json(self) -> dict:
        return {"x0": self.x0, "x1": self.x1, "b": self.b,
                "lambda": self.lambda_target, "amplitude": self.amplitude,
                "phase": self.phase, "decay_exp": self.decay_exp,
                "ramp_width": self.ramp_width, "map_mode": self.map_mode}

    @classmethod
    def from_json(cls, rec: dict, K0: float = 0.0, n: int = 3) -> "WvnSegment":
        return cls(x0=rec["x0"], x1=rec["x1"], b=rec["b"],
                   lambda_target=rec["lambda"], amplitude=rec["amplitude"],
                   phase=rec["phase"], decay_exp=rec["decay_exp"],
                   ramp_width=rec["ramp_width"], map_mode=rec["map_mode"],
                   K0=K0, n=n)


@dataclass
class BlockDiagnostics:
    achieved_angle_error: float
    decay_ratio: float
    inblock_sup_factor: float
    offspectrum_factors: dict
    threshold_used: float
    doublings: int = 0

    def to_json(self) -> dict:
        return {"achieved_angle_error": self.achieved_angle_error,
                "decay_ratio": self.decay_ratio,
                "inblock_sup_factor": self.inblock_sup_factor,
                "offspectrum_factors": {str(k): v for k, v in
                                        self.offspectrum_factors.items()},
                "threshold_used": self.threshold_used,
                "doublings": self.doublings}


@dataclass
class BlockParams:
    """Tunables for block construction and certification."""

    K0: float = 0.0
    n: int = 3
    map_mode: str = MAP_METRIC
    ramp_width: float = 1.0
    slack: float = 0.05
    min_offset: float | None = None   # None -> 50 periods of slowest oscillation
    min_block_length: float = 3.0
    separation_min: float = 10.0
    scan_points: int = 360
    zoom_points: int = 64
    zooms: int = 2
    max_doublings: int = 3

    def offset_floor(self, lam: float, others=()) -> float:
        if self.min_offset is not None:
            return self.min_offset
        kap_min = math.sqrt(min([lam, *others]))
        return 50.0 * math.pi / kap_min


def raw_wvn(x: float, seg: WvnSegment) -> float:
    """Unramped oscillation A*sin(2*kappa*(x-b)+phi)/(x-b)."""
    if x <= seg.b:
        raise XAtOrBelowShift(f"x={x} at or below shift b={seg.b}")
    d = x - seg.b
    return seg.amplitude * math.sin(2.0 * seg.kappa * d + seg.phase) / d


def seed_decaying_solution(seg: WvnSegment, E0: float = 0.0) -> StateVec:
    """Leading-order decaying state at x1: ((x1-b)^-a cos(k d + phi/2), -k (x1-b)^-a sin(...))."""
    if seg.x1 - seg.x0 < 2.0 * seg.ramp_width + 1.0:
        raise BlockTooShort(
            f"block length {seg.x1 - seg.x0} below {2 * seg.ramp_width + 1}")
    d = seg.x1 - seg.b
    a = seg.decay_exp
    kap = seg.kappa
    amp = d ** (-a)
    arg = kap * d + 0.5 * seg.phase
    return StateVec(amp * math.cos(arg), -kap * amp * math.sin(arg))


def _block_step(seg: WvnSegment, energies) -> float:
    """Step resolving the block oscillation and every tested energy."""
    h = ode.default_step(seg.lambda_target + seg.e0, seg.lambda_target)
    for mu in energies:
        h = min(h, ode.default_step(mu + seg.e0, mu))
    return h


def _scan_angles(seg: WvnSegment, phases: np.ndarray, h: float) -> np.ndarray:
    """Backward-propagate the decaying seed for each phase; return angles at x0."""
    lam = seg.lambda_target
    kap = seg.kappa
    d1 = seg.x1 - seg.b
    arg = kap * d1 + 0.5 * phases
    # seed normalized to unit weighted norm; overall scale is irrelevant
    ys = np.cos(arg)
    ps = -kap * np.sin(arg)
    nsteps = max(1, int(math.ceil((seg.x1 - seg.x0) / h)))
    hb = -(seg.x1 - seg.x0) / nsteps
    _kernels.wvn_phase_scan(seg.x1, hb, nsteps, np.asarray(phases, float),
                            ys, ps, seg.amplitude, kap, seg.b, seg.x0, seg.x1,
                            seg.ramp_width, seg.map_mode == MAP_METRIC,
                            float(seg.n), math.sqrt(seg.K0), lam + seg.e0,
                            1.0 / lam)
    sq = math.sqrt(lam)
    return np.mod(np.arctan2(ps / sq, ys), math.pi)


def _brackets(phases: np.ndarray, angles: np.ndarray, theta0: float,
              wrap: bool):
    """Sign-change brackets of the projective angle difference."""
    d = np.mod(angles - theta0 + 0.5 * math.pi, math.pi) - 0.5 * math.pi
    out = []
    m = len(phases)
    last = m if not wrap else m + 1
    for i in range(last - 1):
        j = (i + 1) % m
        di, dj = d[i], d[j]
        if di == 0.0:
            out.append((phases[i], phases[i], 0.0))
        elif di * dj < 0.0 and abs(di - dj) < 0.5 * math.pi:
            pj = phases[j] if j > i else phases[j] + 2.0 * math.pi
            root = phases[i] - di * (pj - phases[i]) / (dj - di)
            out.append((phases[i], pj, root))
    return out, d


def find_phase(seg_proto: WvnSegment, theta0: float, params: BlockParams,
               h: float) -> float:
    """Phase phi whose backward-propagated decaying seed hits theta0 at x0."""
    phases = np.linspace(0.0, 2.0 * math.pi, params.scan_points,
                         endpoint=False)
    angles = _scan_angles(seg_proto, phases, h)
    brs, _ = _brackets(phases, angles, theta0, wrap=True)
    if not brs:
        raise PhaseNotFound(
            f"no bracket for theta0={theta0:.6f} over {params.scan_points} phases")
    lo, hi, root = min(brs, key=lambda t: t[2])
    for _ in range(params.zooms):
        if hi == lo:
            break
        sub = np.linspace(lo, hi, params.zoom_points)
        angles = _scan_angles(seg_proto, sub, h)
        sbrs, _ = _brackets(sub, angles, theta0, wrap=False)
        if not sbrs:
            break
        lo, hi, root = sbrs[0]
    return root % (2.0 * math.pi)


def build_block(lam: float, other_energies, x0: float, x1: float, b: float,
                theta0: float, a: float, params: BlockParams):
    """Construct and certify one block; returns (WvnSegment, BlockDiagnostics).

    Raises ContractViolated when any certified inequality fails (the usual
    cure is a larger offset x0 - b), PhaseNotFound when the angle cannot be
    bracketed, DegenerateEnergies when a tracked energy is too close to lam
    for this block length.
    """
    others = sorted(set(other_energies))
    if lam in others:
        raise DegenerateEnergies(f"lambda={lam} is in other_energies")
    kap = math.sqrt(lam)
    for mu in others:
        if abs(kap - math.sqrt(mu)) * (x1 - x0) < params.separation_min:
            raise DegenerateEnergies(
                f"|sqrt({lam})-sqrt({mu})| * {x1 - x0} below "
                f"{params.separation_min}")
    offset = x0 - b
    floor = params.offset_floor(lam, others)
    if offset < floor:
        raise ContractViolated(
            f"offset x0-b={offset:.3g} below empirical threshold {floor:.3g}")
    if x1 - x0 < params.min_block_length:
        raise BlockTooShort(f"block length {x1 - x0} below "
                            f"{params.min_block_length}")

    amp = 0.0 if a == 0.0 else amplitude_for_decay(a, lam, params.K0,
                                                   params.n, params.map_mode)
    seg = WvnSegment(x0=x0, x1=x1, b=b, lambda_target=lam, amplitude=amp,
                     phase=0.0, decay_exp=a, ramp_width=params.ramp_width,
                     map_mode=params.map_mode, K0=params.K0, n=params.n)
    h = _block_step(seg, others)
    if a != 0.0:
        seg = replace(seg, phase=find_phase(seg, theta0, params, h))

    shift = EnergyShift(seg.e0, lam)
    if a != 0.0:
        seed = seed_decaying_solution(seg, seg.e0)
        traj = ode.propagate(seg.q_tilde, shift, x1, x0, seed, step=h)
        w_x0 = traj.final_norm
        decay_ratio = traj.initial_norm / w_x0
        sup_factor = traj.sup_norm / w_x0
        angle_err = angle_distance(prufer_angle(traj.final_state, lam), theta0)
    else:
        # free evolution: the weighted norm is an exact invariant
        s0 = StateVec(math.cos(theta0), math.sqrt(lam) * math.sin(theta0))
        traj = ode.propagate(seg.q_tilde, shift, x0, x1, s0, step=h)
        decay_ratio = traj.final_norm / traj.initial_norm
        sup_factor = traj.sup_norm / traj.initial_norm
        angle_err = 0.0

    off_factors = {}
    basis = [StateVec(1.0, 0.0), StateVec(0.0, 1.0)]
    for mu in others:
        _, factors = ode.propagate_batch(seg.q_tilde, EnergyShift(seg.e0, mu),
                                         x0, x1, basis, step=h)
        off_factors[mu] = float(np.max(factors))

    diag = BlockDiagnostics(achieved_angle_error=float(angle_err),
                            decay_ratio=float(decay_ratio),
                            inblock_sup_factor=float(sup_factor),
                            offspectrum_factors=off_factors,
                            threshold_used=float(offset))
    bound = 2.0 * ((x1 - b) / (x0 - b)) ** (-a)
    cap = 2.0 * (1.0 + params.slack)
    fails = []
    if decay_ratio > bound:
        fails.append(f"decay_ratio {decay_ratio:.4g} > {bound:.4g}")
    if sup_factor > cap:
        fails.append(f"inblock sup factor {sup_factor:.4g} > {cap:.4g}")
    for mu, fac in off_factors.items():
        if fac > cap:
            fails.append(f"offspectrum factor at mu={mu}: {fac:.4g} > {cap:.4g}")
    if fails:
        raise ContractViolated("; ".join(fails), diagnostics=diag)
    return seg, diag


def build_block_with_repair(lam: float, other_energies, x0: float, x1: float,
                            b: float, theta0: float, a: float,
                            params: BlockParams):
    """Retry build_block, doubling the offset x0-b (re-siting the block,
    preserving the length ratio (x1-b)/(x0-b)) on ContractViolated."""
    ratio = (x1 - b) / (x0 - b)
    offset = x0 - b
    last = None
    for doubling in range(params.max_doublings + 1):
        try:
            seg, diag = build_block(lam, other_energies, b + offset,
                                    b + ratio * offset, b, theta0, a, params)
            diag.doublings = doubling
            return seg, diag
        except ContractViolated as exc:
            last = exc
            offset *= 2.0
    raise ContractViolated(
        f"still violated after {params.max_doublings} offset doublings: {last}",
        diagnostics=getattr(last, "diagnostics", None))
