"""Origin-side core: series eigenfunctions near r = 0 and the glue to r = 1.

Near the origin the metric is Euclidean (f1 = r), so the radial eigenfunction
solves u'' + (n-1)/r u' + E_eff u = 0 and is given by an even power series
with c0 = 1.  On [1/2, 1] the warp factor is a smooth positive blend between
r and exp(sqrt(K0)(r-1)); the eigenfunction is carried across the blend by
direct integration, producing the boundary angle handed to the inductive
construction at r = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadDimension, OutOfDomain, TailNotConverged
from .wvn import ramp_sigma, ramp_sigma_prime

TAIL_TOL = 1e-16
R_SERIES = 0.5


def frobenius_coeffs(e_eff: float, n: int, nterms: int | None = None) -> np.ndarray:
    """Power-series coefficients of the regular solution at r = 0.

    c0 = 1, c1 = 0, c_{j+2} = -E_eff c_j / ((j+2)(j+n)).  When nterms is
    None the series is truncated adaptively so |c_J| (1/2)^J < 1e-16.
    """
    if n < 2:
        raise BadDimension(f"n must be >= 2, got {n}")
    coeffs = [1.0, 0.0]
    j = 0
    while True:
        c_next = -e_eff * coeffs[j] / ((j + 2) * (j + n))
        coeffs.append(c_next)
        coeffs.append(0.0)
        j += 2
        if nterms is not None:
            if len(coeffs) >= nterms:
                return np.array(coeffs[:nterms])
        elif abs(c_next) * R_SERIES ** j < TAIL_TOL:
            return np.array(coeffs)
        if j > 400:
            raise TailNotConverged(f"series tail above {TAIL_TOL} after {j} terms")


@dataclass
class FrobeniusSeries:
    """Truncated even power series for the regular origin eigenfunction."""

    coeffs: np.ndarray
    e_eff: float
    n: int
    radius_of_validity: float = R_SERIES

    @classmethod
    def build(cls, e_eff: float, n: int) -> "FrobeniusSeries":
        return cls(frobenius_coeffs(e_eff, n), e_eff, n)

    def eval(self, r):
        """Series value and termwise derivative."""
        r = np.asarray(r, dtype=float)
        val = np.zeros_like(r)
        der = np.zeros_like(r)
        for j in range(len(self.coeffs) - 1, -1, -1):
            der = der * r + val
            val = val * r + self.coeffs[j]
        return val, der


def h1_eval(lam: float, K0: float, n: int, r):
    """Origin eigenfunction (value, derivative) on (0, 1/2]."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0.0) or np.any(r_arr > R_SERIES):
        raise OutOfDomain(f"r must lie in (0, {R_SERIES}]")
    e_eff = K0 * (n - 1) ** 2 / 4.0 + lam
    return FrobeniusSeries.build(e_eff, n).eval(r_arr)


def glue_f1(r, K0: float):
    """Warp factor and derivative on [1/2, 1]: smooth positive blend of
    r and exp(sqrt(K0)(r-1))."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0.5) or np.any(r_arr > 1.0):
        raise OutOfDomain("glue domain is [1/2, 1]")
    t = 2.0 * r_arr - 1.0
    s = ramp_sigma(t)
    sp = 2.0 * ramp_sigma_prime(t)
    sk = math.sqrt(K0)
    right = np.exp(sk * (r_arr - 1.0))
    f1 = (1.0 - s) * r_arr + s * right
    f1p = (1.0 - s) + s * sk * right + sp * (right - r_arr)
    return f1, f1p


def s_of_r(r, K0: float):
    """Log-derivative S = f1'/f1 of the origin-side warp factor on (0, 1]."""
    r_arr = np.asarray(r, dtype=float)
    out = np.empty_like(r_arr)
    inner = r_arr <= 0.5
    out[inner] = 1.0 / r_arr[inner]
    f1, f1p = glue_f1(np.clip(r_arr, 0.5, 1.0), K0)
    out[~inner] = (f1p / f1)[~inner]
    return out


def extend_h1_to_one(lam: float, K0: float, n: int, nsteps: int = 8192,
                     s_fn=None):
    """Carry (h1, h1') from r = 1/2 to r = 1 through
    h'' + (n-1) S(r) h' + E_eff h = 0.

    s_fn overrides the glued S(r) (used for closed-form cross-checks).
    RK4 on the first-order system with S precomputed at nodes and midpoints.
    """
    e_eff = K0 * (n - 1) ** 2 / 4.0 + lam
    if s_fn is None:
        s_fn = lambda r: s_of_r(r, K0)
    h_step = 0.5 / nsteps
    nodes = 0.5 + h_step * np.arange(nsteps + 1)
    mids = nodes[:-1] + 0.5 * h_step
    sn = np.asarray(s_fn(nodes), dtype=float) * (n - 1)
    sm = np.asarray(s_fn(mids), dtype=float) * (n - 1)
    val, der = h1_eval(lam, K0, n, 0.5)
    y = float(val)
    p = float(der)

    def f(s_coeff, yy, pp):
        return pp, -s_coeff * pp - e_eff * yy

    for i in range(nsteps):
        k1y, k1p = f(sn[i], y, p)
        k2y, k2p = f(sm[i], y + 0.5 * h_step * k1y, p + 0.5 * h_step * k1p)
        k3y, k3p = f(sm[i], y + 0.5 * h_step * k2y, p + 0.5 * h_step * k2p)
        k4y, k4p = f(sn[i + 1], y + h_step * k3y, p + h_step * k3p)
        y += h_step / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        p += h_step / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
    return y, p


def h1_profile(lam: float, K0: float, n: int, nsteps: int = 8192):
    """Sampled (r, h1, h1') across (0, 1]: series on (0, 1/2], integrated
    across the glue on [1/2, 1]."""
    rs_in = np.linspace(1e-6, 0.5, 512)
    v_in, d_in = h1_eval(lam, K0, n, rs_in)
    e_eff = K0 * (n - 1) ** 2 / 4.0 + lam
    h_step = 0.5 / nsteps
    nodes = 0.5 + h_step * np.arange(nsteps + 1)
    mids = nodes[:-1] + 0.5 * h_step
    sn = np.asarray(s_of_r(nodes, K0), dtype=float) * (n - 1)
    sm = np.asarray(s_of_r(mids, K0), dtype=float) * (n - 1)
    ys = np.empty(nsteps + 1)
    ps = np.empty(nsteps + 1)
    ys[0], ps[0] = (float(a) for a in h1_eval(lam, K0, n, 0.5))
    y, p = ys[0], ps[0]
    for i in range(nsteps):
        k1y, k1p = p, -sn[i] * p - e_eff * y
        y2 = y + 0.5 * h_step * k1y
        p2 = p + 0.5 * h_step * k1p
        k2y, k2p = p2, -sm[i] * p2 - e_eff * y2
        y3 = y + 0.5 * h_step * k2y
        p3 = p + 0.5 * h_step * k2p
        k3y, k3p = p3, -sm[i] * p3 - e_eff * y3
        y4 = y + h_step * k3y
        p4 = p + h_step * k3p
        k4y, k4p = p4, -sn[i + 1] * p4 - e_eff * y4
        y += h_step / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        p += h_step / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        ys[i + 1] = y
        ps[i + 1] = p
    stride = max(1, nsteps // 2048)
    rs = np.concatenate([rs_in, nodes[::stride], nodes[-1:]])
    vals = np.concatenate([v_in, ys[::stride], ys[-1:]])
    ders = np.concatenate([d_in, ps[::stride], ps[-1:]])
    return rs, vals, ders


def boundary_target(lam: float, K0: float, n: int, s_fn=None) -> float:
    """Boundary angle at r = 1 handed to the inductive construction:
    tan(theta) = h1'(1)/h1(1) + (n-1) sqrt(K0) / 2, handled projectively."""
    h1, h1p = extend_h1_to_one(lam, K0, n, s_fn=s_fn)
    num = h1p + (n - 1) * math.sqrt(K0) / 2.0 * h1
    return math.atan2(num, h1) % math.pi
