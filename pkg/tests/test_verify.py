"""Independent certification layer: ledger checks, envelopes, FD probe."""

import math

import numpy as np
import pytest

from spectral_forge import verify
from spectral_forge.errors import DegenerateEnergies, GridTooCoarse
from spectral_forge.schedule import (EigenLedger, LedgerEntry,
                                     PiecewisePotential, assemble, plan)
from spectral_forge.verify import (check_decay_ledger, check_offspectrum,
                                   check_segment_bounds,
                                   default_offspectrum_energies,
                                   discrete_spectrum_probe, run_all)

HALF = "schrodinger_halfline"


def synthetic_ledger(norms, rho=0.5, admitted=1):
    led = EigenLedger(J_seq=[10.0 * (i + 1) for i in range(len(norms))],
                      rho_seq=[None] + [rho] * (len(norms) - 1))
    led.entries[1.0] = LedgerEntry(lam=1.0, start_angle=0.0,
                                   admitted_at_step=admitted,
                                   junction_norms=list(norms))
    return led


def synthetic_plan(k_max=4):
    return plan([1.0], HALF, a=4.0, k_max=k_max, C_min=4, J1=60.0,
                min_offset=55.0)


def test_decay_ledger_passes_contracting_norms():
    led = synthetic_ledger([1.0, 0.4, 0.15, 0.05])
    out = check_decay_ledger(led, synthetic_plan())
    assert out[1.0]["ok"]
    assert out[1.0]["worst_ratio_vs_rho"] <= 1.0


def test_decay_ledger_flags_slow_decay():
    led = synthetic_ledger([1.0, 0.6])
    out = check_decay_ledger(led, synthetic_plan(k_max=2))
    assert not out[1.0]["ok"]


def test_decay_ledger_ignores_preadmission_steps():
    # admitted at step 3: the 1->2 junction ratio is exempt
    led = synthetic_ledger([1.0, 0.9, 0.4, 0.15], admitted=3)
    out = check_decay_ledger(led, synthetic_plan())
    assert out[1.0]["ok"]
    assert all(r["k"] >= 4 for r in out[1.0]["steps"])


def test_default_offspectrum_energies():
    es = default_offspectrum_energies([1.0, 2.0, 4.0])
    assert es == [0.5, 1.5, 3.0, 4.5]


@pytest.fixture(scope="module")
def halfline_run():
    p = plan([1.0], HALF, a=4.0, k_max=3, C_min=4, J1=60.0, min_offset=55.0)
    pot, led = assemble(p, {1.0: 0.0})
    return p, pot, led


def test_segment_bounds_certify(halfline_run):
    _, pot, _ = halfline_run
    rows = check_segment_bounds(pot)
    assert len(rows) == len(pot.segments)
    assert all(r["ok"] for r in rows)
    assert all(r["C_block"] > 0.0 for r in rows)


def test_offspectrum_free_potential_is_isometric():
    pot = PiecewisePotential(segments=[], map_mode="direct",
                             support_start=1.0, x_start=0.0, domain_end=50.0)
    pot.segments = []
    out = check_offspectrum(pot, energies=[0.5, 2.0])
    for mu, rec in out.items():
        assert rec["factor"] == pytest.approx(1.0, abs=1e-8)
        assert not rec["flagged"]


def test_offspectrum_rejects_energy_near_eigenvalue(halfline_run):
    _, pot, _ = halfline_run
    with pytest.raises(DegenerateEnergies):
        check_offspectrum(pot, energies=[1.0 + 1e-6])


def test_offspectrum_bounded_on_real_construction(halfline_run):
    _, pot, _ = halfline_run
    out = check_offspectrum(pot, energies=[0.5, 2.0, 3.0])
    assert all(not rec["flagged"] for rec in out.values())
    assert all(rec["factor"] < 5.0 for rec in out.values())


def test_probe_closed_form_dirichlet_box():
    # q = 0 with u(0) = 0 (angle pi/2) and u(L) = 0: eigenvalues (k pi/L)^2
    L = 10.0
    pot = PiecewisePotential(segments=[], map_mode="direct",
                             support_start=1.0, x_start=0.0, domain_end=L)
    lam1 = (math.pi / L) ** 2
    lam2 = (2 * math.pi / L) ** 2
    out = discrete_spectrum_probe(pot, X=L, h_grid=1e-3,
                                  targets=[lam1, lam2],
                                  left_angle=math.pi / 2)
    assert out[0]["eigenvalue"] == pytest.approx(lam1, rel=1e-5)
    assert out[1]["eigenvalue"] == pytest.approx(lam2, rel=1e-5)


def test_probe_closed_form_neumann_box():
    # q = 0 with u'(0) = 0 (angle 0) and u(L) = 0: ((k+1/2) pi/L)^2
    L = 10.0
    pot = PiecewisePotential(segments=[], map_mode="direct",
                             support_start=1.0, x_start=0.0, domain_end=L)
    lam = (0.5 * math.pi / L) ** 2
    out = discrete_spectrum_probe(pot, X=L, h_grid=1e-3, targets=[lam],
                                  left_angle=0.0)
    assert out[0]["eigenvalue"] == pytest.approx(lam, rel=1e-4)


def test_probe_grid_guards(halfline_run):
    _, pot, _ = halfline_run
    with pytest.raises(GridTooCoarse):
        discrete_spectrum_probe(pot, X=60.0, h_grid=1.0, targets=[1.0])
    with pytest.raises(GridTooCoarse):
        discrete_spectrum_probe(pot, X=pot.domain_end + 1.0, h_grid=1e-3,
                                targets=[1.0])


def test_run_all_passes_on_valid_construction(halfline_run):
    p, pot, led = halfline_run
    rep = run_all(p, pot, led)
    assert rep.passed
    data = rep.to_json()
    assert data["passed"]
    assert "never gates" in data["probe_note"]


def test_run_all_fails_on_corrupted_ledger(halfline_run):
    import copy
    p, pot, led = halfline_run
    bad = copy.deepcopy(led)
    # inflate a junction norm so contraction appears broken
    bad.entries[1.0].junction_norms[-1] = \
        bad.entries[1.0].junction_norms[-2] * 0.9
    rep = run_all(p, pot, bad)
    assert not rep.passed


def test_run_all_probe_never_gates(halfline_run):
    p, pot, led = halfline_run
    fake_probe = [{"lambda": 1.0, "eigenvalue": 57.0, "error": 56.0,
                   "localization_mass": 0.0}]
    rep = run_all(p, pot, led, probe=fake_probe)
    assert rep.passed
    assert rep.probe_spectrum == fake_probe
