"""Warp factor, curvature identities, gauge change, and norms."""

import math

import numpy as np
import pytest

from spectral_forge import manifold, ode, origin
from spectral_forge.errors import OutOfDomain
from spectral_forge.manifold import (MetricProfile, curvature_profile,
                                     eigenfunction_assemble,
                                     l2_norm_manifold, w_trajectory)
from spectral_forge.schedule import (assemble, plan, start_state_from_angle)

FINITE = "manifold_finite"


def empty_profile(K0=0.0, n=3, domain_end=10.0):
    from spectral_forge.schedule import PiecewisePotential
    pot = PiecewisePotential(segments=[], K0=K0, n=n, map_mode="metric",
                             support_start=3.0, x_start=1.0,
                             domain_end=domain_end)
    return MetricProfile.build(pot)


def test_unperturbed_flat_space():
    # f = 0, K0 = 0: f1 = 1 on [1, R], S = 0, K = 0, q = 0
    prof = empty_profile(K0=0.0)
    rs = np.linspace(1.0, 10.0, 101)
    f1, s, K, q = prof.metric_eval(rs)
    assert np.allclose(f1, 1.0)
    assert np.all(s == 0.0)
    assert np.all(K == 0.0)
    assert np.all(q == 0.0)
    assert prof.e0 == 0.0


def test_unperturbed_constant_curvature():
    # f = 0, K0 > 0: S = sqrt(K0), K = -K0, q = E0 exactly on [1, R]
    K0, n = 2.0, 4
    prof = empty_profile(K0=K0, n=n)
    rs = np.linspace(1.0, 3.0, 51)
    f1, s, K, q = prof.metric_eval(rs)
    assert np.allclose(s, math.sqrt(K0))
    assert np.allclose(K, -K0)
    assert np.allclose(q, (n - 1) ** 2 * K0 / 4.0)
    assert np.allclose(f1, np.exp(math.sqrt(K0) * (rs - 1.0)))


def test_small_radius_sphere_limit():
    # near the origin f1 = r: S = 1/r, K = 0, q = (n-1)(n-3)/(4 r^2)
    prof = empty_profile(n=5)
    rs = np.linspace(0.05, 0.45, 41)
    f1, s, K, q = prof.metric_eval(rs)
    assert np.allclose(f1, rs)
    assert np.allclose(s, 1.0 / rs)
    assert np.allclose(K, 0.0, atol=1e-12)
    assert np.allclose(q, (5 - 1) * (5 - 3) / (4.0 * rs ** 2))


def test_f1_domain_guard():
    prof = empty_profile()
    with pytest.raises(OutOfDomain):
        prof.f1(np.array([0.0, 1.0]))


@pytest.fixture(scope="module")
def finite_run():
    p = plan([1.0, 2.0], FINITE, a=4.0, k_max=3, K0=0.0, n=3, C_min=2,
             J1=60.0, min_offset=55.0)
    targets = {lam: origin.boundary_target(lam, 0.0, 3)
               for lam in p.eigenvalues}
    pot, led = assemble(p, targets)
    prof = MetricProfile.build(pot)
    return p, pot, led, prof, targets


def test_curvature_identity_two_paths(finite_run):
    # K + K0 computed from (S, S') equals -2 sqrt(K0) f - f^2 - f' from the
    # oscillatory profile directly
    p, pot, led, prof, _ = finite_run
    rs = np.linspace(1.0, pot.domain_end, 20_001)
    _, _, K, _ = prof.metric_eval(rs)
    f = pot.f(rs)
    fp = pot.f_prime(rs)
    direct = -prof.K0 - 2.0 * math.sqrt(prof.K0) * f - f ** 2 - fp
    assert np.max(np.abs(K - direct)) <= 1e-12


def test_f1_continuity_and_positivity(finite_run):
    p, pot, led, prof, _ = finite_run
    h = 1e-8
    for r in [0.5, 1.0] + list(p.J_seq):
        lo = prof.f1(np.array([r - h]))[0]
        hi = prof.f1(np.array([r + h]))[0]
        assert hi == pytest.approx(lo, rel=1e-6)
    rs = np.linspace(1e-3, pot.domain_end, 50_000)
    assert np.all(prof.f1(rs) > 0.0)


def test_curvature_zero_in_free_regions(finite_run):
    p, pot, led, prof, _ = finite_run
    rs = np.linspace(1.5, p.J1 - 0.5, 101)   # before the first block
    _, _, K, q = prof.metric_eval(rs)
    assert np.allclose(K, -prof.K0, atol=1e-14)
    assert np.allclose(q, prof.e0, atol=1e-14)


def test_curvature_profile_report(finite_run):
    p, pot, led, prof, _ = finite_run
    rs = np.linspace(3.0, pot.domain_end, 50_000)
    rep = curvature_profile(prof, rs)
    assert rep["sup_r_abs_K_plus_K0"] > 0.0
    assert 3.0 <= rep["argmax_r"] <= pot.domain_end
    assert rep["table"]["r_abs_K_plus_K0"].shape == rs.shape
    from spectral_forge.schedule import Budget
    rep2 = curvature_profile(prof, rs, budget=Budget("constant", c=1e9))
    assert rep2["budget_ok"]
    assert rep2["sup_budget_ratio"] < 1.0


def test_gauge_identity(finite_run):
    # h2^2 f1^{n-1} = w^2 pointwise for n = 3 (power -(n-1)/2 = -1)
    p, pot, led, prof, targets = finite_run
    lam = 1.0
    s0 = start_state_from_angle(targets[lam], lam)
    xs, w, wp = w_trajectory(pot, lam, s0)
    rs, h1, h1p = origin.h1_profile(lam, prof.K0, prof.n)
    gf = eigenfunction_assemble(lam, (xs, w, wp), (rs, h1, h1p), prof)
    f1 = prof.f1(xs)
    assert np.allclose(gf.h_outer ** 2 * f1 ** (prof.n - 1), gf.w ** 2,
                       rtol=1e-12)
    assert gf.junction_gap_value <= 1e-8
    assert gf.junction_gap_deriv <= 1e-8


def test_l2_report_structure_and_decay(finite_run):
    p, pot, led, prof, targets = finite_run
    lam = 2.0
    s0 = start_state_from_angle(targets[lam], lam)
    xs, w, wp = w_trajectory(pot, lam, s0)
    rs, h1, h1p = origin.h1_profile(lam, prof.K0, prof.n)
    gf = eigenfunction_assemble(lam, (xs, w, wp), (rs, h1, h1p), prof)
    rep = l2_norm_manifold(gf, prof, p.J_seq)
    assert rep["inner"] > 0.0 and rep["lead_in"] > 0.0
    assert len(rep["interjunction"]) == len(p.J_seq) - 1
    assert all(r <= 0.5 for r in rep["ratios"])
    assert rep["total"] == pytest.approx(
        rep["inner"] + rep["lead_in"] + sum(rep["interjunction"]))
    # gauge identity implies the manifold mass over [1, J1] equals the
    # w-mass over the same window
    m = xs <= p.J1
    f1 = prof.f1(xs[m])
    manifold_mass = np.trapezoid(gf.h_outer[m] ** 2 * f1 ** (prof.n - 1),
                                 xs[m])
    assert manifold_mass == pytest.approx(rep["lead_in"], rel=1e-12)


def test_inner_ball_oracle():
    # K0=0, n=3, lam=1: h = sin(r)/r, f1 = r so the density is sin^2(r)
    prof = empty_profile(K0=0.0, n=3)
    rs = np.linspace(1e-6, 0.5, 8192)
    h = np.sin(rs) / rs
    mass = np.trapezoid(h ** 2 * prof.f1(rs) ** 2, rs)
    exact = 0.25 * (1.0 - math.sin(1.0))  # integral_0^{1/2} sin^2 = 1/4 - sin(1)/4
    assert mass == pytest.approx(exact, rel=1e-6)
