"""Low-level fixed-step RK4 kernels.

The propagated equation is always the linear system y' = p, p' = g(x) y
with g = q - E_eff precomputed on the step grid (nodes and midpoints), or
evaluated on the fly for the oscillatory-segment phase scan.  Kernels are
numba-compiled when numba is importable and fall back to plain Python
otherwise (slow but identical results).
"""

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep in practice
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


@njit(cache=True)
def _bump(t):
    if t <= 0.0:
        return 0.0
    return math.exp(-1.0 / t)


@njit(cache=True)
def sigma(t):
    """Smooth monotone step: 0 for t<=0, 1 for t>=1, flat at both ends."""
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    b1 = _bump(t)
    b2 = _bump(1.0 - t)
    return b1 / (b1 + b2)


@njit(cache=True)
def sigma_prime(t):
    if t <= 0.0 or t >= 1.0:
        return 0.0
    b1 = _bump(t)
    b2 = _bump(1.0 - t)
    s = b1 + b2
    return b1 * b2 * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t))) / (s * s)


@njit(cache=True)
def rk4_record(gn, gm, h, y0, p0, inv_lam, stride):
    """Propagate one state across the whole grid, recording every `stride` steps.

    gn: g at the nsteps+1 nodes, gm: g at the nsteps midpoints.
    Returns (ys, ps, sup_w) where ys/ps sample steps 0, stride, 2*stride, ...
    plus the final step, and sup_w is the max weighted norm over all steps.
    """
    nsteps = gm.shape[0]
    nrec = nsteps // stride + 1
    if (nsteps % stride) != 0:
        nrec += 1
    ys = np.empty(nrec)
    ps = np.empty(nrec)
    y = y0
    p = p0
    ys[0] = y
    ps[0] = p
    sup = math.sqrt(y * y + p * p * inv_lam)
    j = 1
    for i in range(nsteps):
        g0 = gn[i]
        gmid = gm[i]
        g1 = gn[i + 1]
        k1y = p
        k1p = g0 * y
        k2y = p + 0.5 * h * k1p
        k2p = gmid * (y + 0.5 * h * k1y)
        k3y = p + 0.5 * h * k2p
        k3p = gmid * (y + 0.5 * h * k2y)
        k4y = p + h * k3p
        k4p = g1 * (y + h * k3y)
        y = y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        p = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        w = math.sqrt(y * y + p * p * inv_lam)
        if w > sup:
            sup = w
        if ((i + 1) % stride) == 0 or i == nsteps - 1:
            ys[j] = y
            ps[j] = p
            j += 1
    return ys[:j], ps[:j], sup


@njit(cache=True)
def rk4_batch(gn, gm, h, ys, ps, inv_lam):
    """Propagate a batch of states; gn has shape (nsteps+1, B), gm (nsteps, B).

    Mutates ys/ps in place to the final states; returns per-column sup of the
    weighted norm.
    """
    nsteps = gm.shape[0]
    nb = ys.shape[0]
    sup = np.empty(nb)
    for j in range(nb):
        sup[j] = math.sqrt(ys[j] * ys[j] + ps[j] * ps[j] * inv_lam)
    for i in range(nsteps):
        for j in range(nb):
            y = ys[j]
            p = ps[j]
            g0 = gn[i, j]
            gmid = gm[i, j]
            g1 = gn[i + 1, j]
            k1y = p
            k1p = g0 * y
            k2y = p + 0.5 * h * k1p
            k2p = gmid * (y + 0.5 * h * k1y)
            k3y = p + 0.5 * h * k2p
            k3p = gmid * (y + 0.5 * h * k2y)
            k4y = p + h * k3p
            k4p = g1 * (y + h * k3y)
            y = y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            p = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
            ys[j] = y
            ps[j] = p
            w = math.sqrt(y * y + p * p * inv_lam)
            if w > sup[j]:
                sup[j] = w
    return sup


@njit(cache=True)
def _seg_g_base(x, b, x0, x1, rw, kappa):
    """Phase-independent pieces of the segment potential at one point.

    Returns (d, sin_base, cos_base, ramp, ramp_prime) with base = 2*kappa*(x-b).
    """
    d = x - b
    u = 2.0 * kappa * d
    ta = (x - x0) / rw
    tb = (x1 - x) / rw
    ra = sigma(ta)
    rb = sigma(tb)
    ramp = ra * rb
    rampp = sigma_prime(ta) / rw * rb - ra * sigma_prime(tb) / rw
    return d, math.sin(u), math.cos(u), ramp, rampp


@njit(cache=True)
def _seg_g_fill(out, d, sb, cb, ramp, rampp, cosphi, sinphi, amp, kappa,
                metric, c2, c1, sqrt_k0, e_eff):
    """g(x) for every phase at one point, from the phase-independent pieces."""
    nb = cosphi.shape[0]
    for j in range(nb):
        su = sb * cosphi[j] + cb * sinphi[j]
        cu = cb * cosphi[j] - sb * sinphi[j]
        v = amp * ramp * su / d
        vp = amp * (rampp * su / d + ramp * (2.0 * kappa * cu / d - su / (d * d)))
        if metric:
            sv = sqrt_k0 + v
            q = c2 * sv * sv + c1 * vp
        else:
            q = v
        out[j] = q - e_eff


@njit(cache=True)
def wvn_phase_scan(x_start, h, nsteps, phases, ys, ps, amp, kappa, b, x0, x1,
                   rw, metric, n, sqrt_k0, e_eff, inv_lam):
    """Batch-propagate one seed state per phase through the segment's potential.

    The potential for phase j is amp * ramp(x) * sin(2*kappa*(x-b)+phases[j])
    / (x-b), mapped through the metric formula when `metric` is set.  ys/ps
    are mutated to the final states; returns per-phase sup of the weighted
    norm.  h may be negative (backward integration).
    """
    nb = phases.shape[0]
    cosphi = np.cos(phases)
    sinphi = np.sin(phases)
    c2 = (n - 1.0) * (n - 1.0) / 4.0
    c1 = (n - 1.0) / 2.0
    ga = np.empty(nb)
    gmid = np.empty(nb)
    gb = np.empty(nb)
    sup = np.empty(nb)
    for j in range(nb):
        sup[j] = math.sqrt(ys[j] * ys[j] + ps[j] * ps[j] * inv_lam)
    d, sb, cb, ramp, rampp = _seg_g_base(x_start, b, x0, x1, rw, kappa)
    _seg_g_fill(ga, d, sb, cb, ramp, rampp, cosphi, sinphi, amp, kappa,
                metric, c2, c1, sqrt_k0, e_eff)
    for i in range(nsteps):
        x = x_start + i * h
        d, sb, cb, ramp, rampp = _seg_g_base(x + 0.5 * h, b, x0, x1, rw, kappa)
        _seg_g_fill(gmid, d, sb, cb, ramp, rampp, cosphi, sinphi, amp, kappa,
                    metric, c2, c1, sqrt_k0, e_eff)
        d, sb, cb, ramp, rampp = _seg_g_base(x + h, b, x0, x1, rw, kappa)
        _seg_g_fill(gb, d, sb, cb, ramp, rampp, cosphi, sinphi, amp, kappa,
                    metric, c2, c1, sqrt_k0, e_eff)
        for j in range(nb):
            y = ys[j]
            p = ps[j]
            k1y = p
            k1p = ga[j] * y
            k2y = p + 0.5 * h * k1p
            k2p = gmid[j] * (y + 0.5 * h * k1y)
            k3y = p + 0.5 * h * k2p
            k3p = gmid[j] * (y + 0.5 * h * k2y)
            k4y = p + h * k3p
            k4p = gb[j] * (y + h * k3y)
            y = y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            p = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
            ys[j] = y
            ps[j] = p
            w = math.sqrt(y * y + p * p * inv_lam)
            if w > sup[j]:
                sup[j] = w
            ga[j] = gb[j]
    return sup
