"""Metric and curvature layer for the rotationally symmetric manifold.

The warp factor is f1(r) = r near the origin, the smooth glue on [1/2, 1],
and exp(integral_1^r (sqrt(K0) + f)) beyond, where f is the assembled
oscillatory profile.  From S = f1'/f1 the radial curvature is
K = -S' - S^2 and the Schrödinger-gauge potential is
q = (n-1)^2 S^2 / 4 + (n-1) S' / 2; on [1, infinity) these reduce to the
algebraic forms in f used everywhere else (S = sqrt(K0) + f,
K = -K0 - 2 sqrt(K0) f - f^2 - f', q = (n-1)^2 (sqrt(K0)+f)^2/4 + (n-1)f'/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import ode, origin
from .errors import OutOfDomain, ZeroAtJunction
from .ode import EnergyShift, StateVec
from .schedule import PiecewisePotential

_FD_H = 1e-6


@dataclass
class MetricProfile:
    """Immutable warp-factor profile with a cached oscillation integral."""

    potential: PiecewisePotential
    K0: float
    n: int
    _seg_grids: list = field(default_factory=list, repr=False)
    _seg_bases: list = field(default_factory=list, repr=False)

    @classmethod
    def build(cls, potential: PiecewisePotential) -> "MetricProfile":
        prof = cls(potential=potential, K0=potential.K0, n=potential.n)
        base = 0.0
        for seg in potential.segments:
            step = min(5e-3, math.pi / seg.kappa / 64.0)
            m = max(9, int(math.ceil((seg.x1 - seg.x0) / step)) + 1)
            xs = np.linspace(seg.x0, seg.x1, m)
            cum = cumulative_trapezoid(seg.v(xs), xs, initial=0.0)
            prof._seg_grids.append((xs, cum))
            prof._seg_bases.append(base)
            base += float(cum[-1])
        prof._seg_bases.append(base)
        return prof

    @property
    def e0(self) -> float:
        return (self.n - 1) ** 2 * self.K0 / 4.0

    def oscillation_integral(self, r):
        """integral_1^r f, evaluated from the cached per-segment quadrature."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        segs = self.potential.segments
        for i, seg in enumerate(segs):
            xs, cum = self._seg_grids[i]
            m = (r > seg.x0) & (r <= seg.x1)
            if np.any(m):
                out[m] = self._seg_bases[i] + np.interp(r[m], xs, cum)
            m_after = r > seg.x1
            if i + 1 < len(segs):
                m_after &= r <= segs[i + 1].x0
            if np.any(m_after):
                out[m_after] = self._seg_bases[i + 1]
        return out

    def f1(self, r):
        """Warp factor on (0, R]."""
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0.0):
            raise OutOfDomain("warp factor defined for r > 0")
        out = np.empty_like(r)
        inner = r <= 0.5
        out[inner] = r[inner]
        mid = (r > 0.5) & (r < 1.0)
        if np.any(mid):
            out[mid] = origin.glue_f1(r[mid], self.K0)[0]
        outer = r >= 1.0
        if np.any(outer):
            sk = math.sqrt(self.K0)
            out[outer] = np.exp(sk * (r[outer] - 1.0)
                                + self.oscillation_integral(r[outer]))
        return out

    def S(self, r):
        """Logarithmic derivative f1'/f1."""
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        inner = r <= 0.5
        out[inner] = 1.0 / r[inner]
        mid = (r > 0.5) & (r < 1.0)
        if np.any(mid):
            f1, f1p = origin.glue_f1(r[mid], self.K0)
            out[mid] = f1p / f1
        outer = r >= 1.0
        if np.any(outer):
            out[outer] = math.sqrt(self.K0) + self.potential.f(r[outer])
        return out

    def _S_prime(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        inner = r <= 0.5
        out[inner] = -1.0 / r[inner] ** 2
        mid = (r > 0.5) & (r < 1.0)
        if np.any(mid):
            rm = np.clip(r[mid], 0.5 + _FD_H, 1.0 - _FD_H)
            out[mid] = (self.S(rm + _FD_H) - self.S(rm - _FD_H)) / (2 * _FD_H)
        outer = r >= 1.0
        if np.any(outer):
            out[outer] = self.potential.f_prime(r[outer])
        return out

    def metric_eval(self, r):
        """(f1, S, K, q) at the sample points."""
        r = np.asarray(r, dtype=float)
        f1 = self.f1(r)
        s = self.S(r)
        sp = self._S_prime(r)
        K = -sp - s ** 2
        q = (self.n - 1) ** 2 * s ** 2 / 4.0 + (self.n - 1) * sp / 2.0
        return f1, s, K, q

    def q_minus_e0(self, r):
        _, _, _, q = self.metric_eval(r)
        return q - self.e0


def curvature_profile(profile: MetricProfile, r_samples, budget=None):
    """Tabulate curvature data and the scaled envelopes over the samples."""
    r = np.asarray(r_samples, dtype=float)
    f1, s, K, q = profile.metric_eval(r)
    resid = r * np.abs(K + profile.K0)
    table = {"r": r, "K": K, "r_abs_K_plus_K0": resid,
             "S_minus_sqrtK0": s - math.sqrt(profile.K0),
             "q_minus_E0": q - profile.e0}
    sup_idx = int(np.argmax(resid))
    out = {"table": table,
           "sup_r_abs_K_plus_K0": float(resid[sup_idx]),
           "argmax_r": float(r[sup_idx])}
    if budget is not None:
        ratio = resid / np.asarray(budget(r), dtype=float)
        out["sup_budget_ratio"] = float(np.max(ratio))
        out["budget_ok"] = bool(np.all(resid <= budget(r)))
    return out


def w_trajectory(potential: PiecewisePotential, lam: float,
                 start_state: StateVec, max_samples_per_piece: int = 200_001):
    """Propagate the Schrödinger-gauge solution across the whole domain.

    Returns (xs, w, w') sampled over [x_start, domain_end], concatenating
    the free region and every segment.
    """
    e0 = potential.e0
    pieces = []
    x = potential.x_start
    for seg in potential.segments:
        if seg.x0 > x:
            pieces.append((x, seg.x0, None))
        pieces.append((seg.x0, seg.x1, seg))
        x = seg.x1
    if potential.domain_end > x:
        pieces.append((x, potential.domain_end, None))

    xs_all, w_all, wp_all = [], [], []
    state = start_state
    free = lambda z: np.full_like(np.asarray(z, dtype=float), e0)
    for (xa, xb, seg) in pieces:
        q_fn = free if seg is None else seg.q_tilde
        traj = ode.propagate(q_fn, EnergyShift(e0, lam), xa, xb, state,
                             max_samples=max_samples_per_piece)
        state = traj.final_state
        xs_all.append(traj.xs)
        w_all.append(traj.ys)
        wp_all.append(traj.yps)
    return (np.concatenate(xs_all), np.concatenate(w_all),
            np.concatenate(wp_all))


@dataclass
class GlobalEigenfunction:
    """Radial eigenfunction across the origin part and the Schrödinger gauge."""

    lam: float
    rs_inner: np.ndarray
    h_inner: np.ndarray
    hp_inner: np.ndarray
    xs_w: np.ndarray
    w: np.ndarray
    wp: np.ndarray
    h_outer: np.ndarray
    scale: float
    junction_gap_value: float
    junction_gap_deriv: float

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("r,h,w\n")
            for r, h in zip(self.rs_inner, self.h_inner):
                fh.write("%.17g,%.17g,\n" % (r, h))
            for x, h, w in zip(self.xs_w, self.h_outer, self.w):
                fh.write("%.17g,%.17g,%.17g\n" % (x, h, w))


def eigenfunction_assemble(lam: float, w_data, h1_data,
                           profile: MetricProfile) -> GlobalEigenfunction:
    """Glue the origin eigenfunction to the Schrödinger-gauge solution at r = 1.

    w_data is (xs, w, w') from w_trajectory; h1_data is (rs, h1, h1') from
    the origin series/extension.  The manifold-gauge tail is
    h2 = f1^{-(n-1)/2} w, rescaled so values match at r = 1; the derivative
    mismatch is recorded as the junction certificate.
    """
    xs, w, wp = (np.asarray(a, dtype=float) for a in w_data)
    rs, h1, h1p = (np.asarray(a, dtype=float) for a in h1_data)
    n = profile.n
    f1 = profile.f1(xs)
    s = profile.S(xs)
    pw = -(n - 1) / 2.0
    h2 = f1 ** pw * w
    h2p = f1 ** pw * (wp + pw * s * w)
    if abs(h2[0]) < 1e-14 * max(1.0, float(np.max(np.abs(h2)))):
        if abs(h2p[0]) < 1e-300:
            raise ZeroAtJunction("both h2 and h2' vanish at r = 1")
        scale = float(h1p[-1] / h2p[0])
    else:
        scale = float(h1[-1] / h2[0])
    gap_v = abs(h1[-1] - scale * h2[0]) / max(abs(h1[-1]), 1e-300)
    gap_d = (abs(h1p[-1] - scale * h2p[0])
             / max(abs(h1p[-1]), abs(scale * h2p[0]), 1e-300))
    return GlobalEigenfunction(lam=lam, rs_inner=rs, h_inner=h1,
                               hp_inner=h1p, xs_w=xs, w=scale * w,
                               wp=scale * wp, h_outer=scale * h2,
                               scale=scale, junction_gap_value=float(gap_v),
                               junction_gap_deriv=float(gap_d))


def l2_norm_manifold(h: GlobalEigenfunction, profile: MetricProfile, J_seq):
    """Inner-ball mass and inter-junction Schrödinger-gauge contributions.

    The sphere-area constant is omitted throughout (it scales every term
    equally).  Returns the inner integral of h^2 f1^{n-1}, the lead-in
    integral of w^2 over [x_start, J_1], the inter-junction integrals over
    [J_1, J_2], [J_2, J_3], ..., and successive contribution ratios of the
    inter-junction chain.
    """
    n = profile.n
    f1_in = profile.f1(h.rs_inner)
    inner = float(np.trapezoid(h.h_inner ** 2 * f1_in ** (n - 1), h.rs_inner))
    w2 = h.w ** 2
    cuts = [float(j) for j in J_seq]
    m0 = h.xs_w <= cuts[0]
    lead_in = float(np.trapezoid(w2[m0], h.xs_w[m0]))
    contribs = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        m = (h.xs_w >= lo) & (h.xs_w <= hi)
        contribs.append(float(np.trapezoid(w2[m], h.xs_w[m])))
    ratios = [contribs[i + 1] / contribs[i] if contribs[i] > 0 else math.inf
              for i in range(len(contribs) - 1)]
    return {"inner": inner, "lead_in": lead_in, "interjunction": contribs,
            "ratios": ratios, "total": inner + lead_in + sum(contribs)}
