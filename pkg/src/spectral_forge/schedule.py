"""Double-induction assembler.

plan() fixes the bookkeeping constants: block multiplicities N(k), length
growth factors C_k, block lengths T_k = T_{k-1} C_k and junctions
J_k = sum_{i<=k} N(i) T_i, choosing each C_k as the smallest integer >= C_min
whose per-step net contraction rho_k = 2^{N(k)} * 2 * ((J_{k-1}+T_k)/J_{k-1})^{-a}
is at most 1/2.  In countable mode a new eigenvalue is admitted at a step
only when the projected curvature envelope of the enlarged block family
stays below the budget function on that step's interval.

assemble() tiles [J_{k-1}, J_k] with N(k) blocks (slot t targets the t-th
tracked eigenvalue, input order), chains each tracked solution's boundary
angle from block to block, and records the per-eigenvalue junction ledger.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import ode
from .errors import (BudgetTooTight, ConfigInvalid, ContractViolated,
                     DegenerateEnergies, EmptySpectrum, InconsistentPlan,
                     NonNeumannAngles)
from .ode import EnergyShift, StateVec, prufer_angle, weighted_norm
from .wvn import (MAP_DIRECT, MAP_METRIC, BlockParams, WvnSegment,
                  amplitude_for_decay, build_block)

MODE_MANIFOLD_FINITE = "manifold_finite"
MODE_MANIFOLD_COUNTABLE = "manifold_countable"
MODE_HALFLINE = "schrodinger_halfline"
MODE_WHOLELINE = "schrodinger_wholeline"
MODES = (MODE_MANIFOLD_FINITE, MODE_MANIFOLD_COUNTABLE, MODE_HALFLINE,
         MODE_WHOLELINE)

RHO_TARGET = 0.5
ANGLE_CHAIN_TOL = 1e-9


def start_state_from_angle(theta: float, lam: float) -> StateVec:
    """Unit-weighted-norm state with log-derivative w'/w = tan(theta)."""
    th = float(theta) % math.pi
    raw = StateVec(math.cos(th), math.sin(th))
    w0 = weighted_norm(raw, lam)
    return StateVec(raw.y / w0, raw.yp / w0)


@dataclass(frozen=True)
class Budget:
    """Named slow-growth bound family: constant c, c*ln(e+x), or c*x^alpha."""

    family: str
    c: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        if self.family not in ("constant", "log", "power"):
            raise ConfigInvalid(f"unknown budget family {self.family!r}")
        if self.c <= 0.0:
            raise ConfigInvalid("budget scale c must be > 0")
        if self.family == "power" and not 0.0 < self.alpha < 1.0:
            raise ConfigInvalid("power budget needs 0 < alpha < 1")

    @property
    def grows(self) -> bool:
        return self.family != "constant"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "constant":
            return np.full_like(x, self.c)
        if self.family == "log":
            return self.c * np.log(math.e + x)
        return self.c * x ** self.alpha

    def to_json(self) -> dict:
        return {"family": self.family, "c": self.c, "alpha": self.alpha}

    @classmethod
    def from_json(cls, rec: dict) -> "Budget":
        return cls(family=rec["family"], c=rec.get("c", 1.0),
                   alpha=rec.get("alpha", 0.5))


@dataclass
class LevelPlan:
    """One induction step: N blocks of length T tiling [J_start, J_end]."""

    k: int
    N: int
    C: float
    T: float
    J_start: float
    J_end: float
    rho: float
    targets: list
    newly_admitted: float | None = None


@dataclass
class ConstructionPlan:
    eigenvalues: list
    mode: str
    K0: float
    n: int
    a: float
    k_max: int
    C_min: int
    J1: float
    ramp_width: float
    slack: float
    min_offset: float | None
    budget: Budget | None
    levels: list = field(default_factory=list)
    admitted: dict = field(default_factory=dict)
    budget_warning: bool = False

    @property
    def is_manifold(self) -> bool:
        return self.mode in (MODE_MANIFOLD_FINITE, MODE_MANIFOLD_COUNTABLE)

    @property
    def map_mode(self) -> str:
        return MAP_METRIC if self.is_manifold else MAP_DIRECT

    @property
    def x_start(self) -> float:
        return 1.0 if self.is_manifold else 0.0

    @property
    def support_start(self) -> float:
        return 3.0 if self.is_manifold else 1.0

    @property
    def e0(self) -> float:
        if not self.is_manifold:
            return 0.0
        return (self.n - 1) ** 2 * self.K0 / 4.0

    @property
    def N_seq(self):
        return [1] + [lv.N for lv in self.levels]

    @property
    def C_seq(self):
        return [self.J1] + [lv.C for lv in self.levels]

    @property
    def T_seq(self):
        return [self.J1] + [lv.T for lv in self.levels]

    @property
    def J_seq(self):
        return [self.J1] + [lv.J_end for lv in self.levels]

    def block_params(self, zooms: int = 3) -> BlockParams:
        return BlockParams(K0=self.K0, n=self.n, map_mode=self.map_mode,
                           ramp_width=self.ramp_width, slack=self.slack,
                           min_offset=self.min_offset, zooms=zooms)

    def to_json(self) -> dict:
        return {
            "eigenvalues": list(self.eigenvalues), "mode": self.mode,
            "K0": self.K0, "n": self.n, "a": self.a, "k_max": self.k_max,
            "C_min": self.C_min, "J1": self.J1,
            "ramp_width": self.ramp_width, "slack": self.slack,
            "min_offset": self.min_offset,
            "budget": self.budget.to_json() if self.budget else None,
            "budget_warning": self.budget_warning,
            "admitted": {repr(k): v for k, v in self.admitted.items()},
            "levels": [{"k": lv.k, "N": lv.N, "C": lv.C, "T": lv.T,
                        "J_start": lv.J_start, "J_end": lv.J_end,
                        "rho": lv.rho, "targets": list(lv.targets),
                        "newly_admitted": lv.newly_admitted}
                       for lv in self.levels],
            "N_seq": self.N_seq, "C_seq": self.C_seq,
            "T_seq": self.T_seq, "J_seq": self.J_seq,
        }

    @classmethod
    def from_json(cls, rec: dict) -> "ConstructionPlan":
        p = cls(eigenvalues=list(rec["eigenvalues"]), mode=rec["mode"],
                K0=rec["K0"], n=rec["n"], a=rec["a"], k_max=rec["k_max"],
                C_min=rec["C_min"], J1=rec["J1"],
                ramp_width=rec["ramp_width"], slack=rec["slack"],
                min_offset=rec["min_offset"],
                budget=Budget.from_json(rec["budget"]) if rec["budget"]
                else None,
                budget_warning=rec.get("budget_warning", False))
        p.admitted = {float(k): v for k, v in rec["admitted"].items()}
        p.levels = [LevelPlan(k=lv["k"], N=lv["N"], C=lv["C"], T=lv["T"],
                              J_start=lv["J_start"], J_end=lv["J_end"],
                              rho=lv["rho"], targets=list(lv["targets"]),
                              newly_admitted=lv["newly_admitted"])
                    for lv in rec["levels"]]
        return p


def projected_envelope(targets, a: float, K0: float, n: int,
                       ramp_width: float, J_lo: float, T: float,
                       nsamples: int = 64):
    """Worst-case samples of r*|K(r)+K0| for one step's prospective blocks.

    Slot t of the step occupies [J_lo + t*T, J_lo + (t+1)*T] with shift
    b = t*T; the oscillation amplitude bound |f| <= A/(x-b) and
    |f'| <= A*(2*kappa + 2/ramp_width)/(x-b) + A/(x-b)^2 feed the curvature
    identity K + K0 = -2*sqrt(K0)*f - f^2 - f'.
    """
    xs_all, env_all = [], []
    for t, lam in enumerate(targets):
        A = amplitude_for_decay(a, lam, K0, n, MAP_METRIC)
        kap = math.sqrt(lam)
        b = t * T
        xs = np.linspace(J_lo + b, J_lo + b + T, nsamples)
        d = xs - b
        fm = A / d
        fpm = A * (2.0 * kap + 2.0 / ramp_width) / d + A / d ** 2
        env = xs * (2.0 * math.sqrt(K0) * fm + fm ** 2 + fpm)
        xs_all.append(xs)
        env_all.append(env)
    return np.concatenate(xs_all), np.concatenate(env_all)


def _choose_C(N: int, a: float, T_prev: float, J_prev: float, C_min: int):
    """Smallest integer C >= C_min whose step contraction rho <= 1/2."""
    C = max(2, int(math.ceil(C_min)))
    while C < 10_000:
        T = T_prev * C
        ratio = (J_prev + T) / J_prev
        rho = 2.0 ** N * 2.0 * ratio ** (-a)
        if rho <= RHO_TARGET:
            return C, T, rho
        C += 1
    raise ConfigInvalid(
        f"no growth factor below 10000 contracts at a={a}, N={N}")


def plan(eigenvalues, mode: str, a: float, k_max: int, K0: float = 0.0,
         n: int = 3, C_min: int = 4, J1: float | None = None,
         budget: Budget | None = None, ramp_width: float = 1.0,
         slack: float = 0.05,
         min_offset: float | None = None) -> ConstructionPlan:
    """Plan the double induction for the given eigenvalue family."""
    lams = [float(x) for x in eigenvalues]
    if not lams:
        raise EmptySpectrum("at least one eigenvalue is required")
    if len(set(lams)) != len(lams):
        raise DegenerateEnergies("eigenvalues must be pairwise distinct")
    if any(x <= 0.0 for x in lams):
        raise ConfigInvalid("eigenvalues must be positive")
    if mode not in MODES:
        raise ConfigInvalid(f"unknown mode {mode!r}")
    if a <= 0.0:
        raise ConfigInvalid("decay exponent a must be > 0")
    if k_max < 2:
        raise ConfigInvalid("k_max must be >= 2")
    if C_min < 2:
        raise ConfigInvalid("C_min must be >= 2")
    if K0 < 0.0:
        raise ConfigInvalid("K0 must be >= 0")
    countable = mode == MODE_MANIFOLD_COUNTABLE
    if countable:
        if budget is None:
            raise ConfigInvalid("countable mode requires a budget function")
        if not budget.grows:
            raise ConfigInvalid("countable-mode budget must grow unboundedly")
    if K0 != 0.0 and not mode.startswith("manifold"):
        raise ConfigInvalid("K0 > 0 only applies to manifold modes")

    probe_params = BlockParams(K0=K0, n=n, min_offset=min_offset)
    floor = probe_params.offset_floor(min(lams), lams)
    support_start = 3.0 if mode.startswith("manifold") else 1.0
    if J1 is None:
        J1 = float(math.ceil(max(floor, support_start + 1.0)))
    if J1 < floor or J1 <= support_start:
        raise ConfigInvalid(
            f"J1={J1} below offset floor {floor:.3g} or support start "
            f"{support_start}")

    p = ConstructionPlan(eigenvalues=lams, mode=mode, K0=K0, n=n, a=a,
                         k_max=k_max, C_min=C_min, J1=float(J1),
                         ramp_width=ramp_width, slack=slack,
                         min_offset=min_offset, budget=budget)
    p.admitted = {lams[0]: 1} if countable else {x: 1 for x in lams}
    tracked = [lams[0]] if countable else list(lams)

    N_prev, T_prev, J_prev = 1, float(J1), float(J1)
    for k in range(2, k_max + 1):
        newly = None
        if countable and len(tracked) < len(lams):
            cand = lams[len(tracked)]
            N_try = len(tracked) + 1
            C, T, rho = _choose_C(N_try, a, T_prev, J_prev, C_min)
            xs, env = projected_envelope(tracked + [cand], a, K0, n,
                                         ramp_width, J_prev, T)
            if np.all(env <= budget(xs)):
                tracked = tracked + [cand]
                p.admitted[cand] = k
                newly = cand
        N = len(tracked)
        if newly is None:
            C, T, rho = _choose_C(N, a, T_prev, J_prev, C_min)
            if countable:
                xs, env = projected_envelope(tracked, a, K0, n, ramp_width,
                                             J_prev, T)
                if not np.all(env <= budget(xs)):
                    raise BudgetTooTight(
                        f"budget violated at step {k} even without admission")
        J = J_prev + N * T
        if J_prev / T > 2.0 * N_prev / C + 1e-12:
            raise InconsistentPlan(
                f"junction/length bookkeeping violated at step {k}")
        p.levels.append(LevelPlan(k=k, N=N, C=C, T=T, J_start=J_prev,
                                  J_end=J, rho=rho, targets=list(tracked),
                                  newly_admitted=newly))
        N_prev, T_prev, J_prev = N, T, J
    p.budget_warning = countable and len(tracked) < len(lams)
    return p


@dataclass
class PiecewisePotential:
    """The assembled perturbation f: ordered, non-overlapping ramped segments."""

    segments: list
    K0: float = 0.0
    n: int = 3
    map_mode: str = MAP_METRIC
    support_start: float = 3.0
    x_start: float = 1.0
    domain_end: float = 0.0

    @property
    def e0(self) -> float:
        if self.map_mode == MAP_DIRECT:
            return 0.0
        return (self.n - 1) ** 2 * self.K0 / 4.0

    def _segment_masks(self, x):
        for seg in self.segments:
            m = (x > seg.x0) & (x < seg.x1)
            if np.any(m):
                yield seg, m

    def f(self, x):
        """The oscillatory profile; identically zero between segments."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for seg, m in self._segment_masks(x):
            out[m] = seg.v(x[m])
        return out

    def f_prime(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for seg, m in self._segment_masks(x):
            out[m] = seg.v_prime(x[m])
        return out

    def q(self, x):
        """Full induced potential (metric map) or f itself (direct map)."""
        x = np.asarray(x, dtype=float)
        if self.map_mode == MAP_DIRECT:
            return self.f(x)
        c2 = (self.n - 1) ** 2 / 4.0
        c1 = (self.n - 1) / 2.0
        sk = math.sqrt(self.K0)
        return c2 * (sk + self.f(x)) ** 2 + c1 * self.f_prime(x)

    def to_json(self) -> dict:
        return {"segments": [s.to_json() for s in self.segments],
                "K0": self.K0, "n": self.n, "map_mode": self.map_mode,
                "support_start": self.support_start, "x_start": self.x_start,
                "domain_end": self.domain_end}

    @classmethod
    def from_json(cls, rec: dict) -> "PiecewisePotential":
        segs = [WvnSegment.from_json(s, K0=rec["K0"], n=rec["n"])
                for s in rec["segments"]]
        return cls(segments=segs, K0=rec["K0"], n=rec["n"],
                   map_mode=rec["map_mode"],
                   support_start=rec["support_start"],
                   x_start=rec["x_start"], domain_end=rec["domain_end"])

    def sample(self, resolution: int):
        xs = np.linspace(self.x_start, self.domain_end, resolution)
        return xs, self.f(xs), self.f_prime(xs)

    def to_csv(self, path, resolution: int = 4096):
        xs, f, fp = self.sample(resolution)
        with open(path, "w") as fh:
            fh.write("x,f,f_prime\n")
            for x, a, b in zip(xs, f, fp):
                fh.write("%.17g,%.17g,%.17g\n" % (x, a, b))


@dataclass
class LedgerEntry:
    lam: float
    start_angle: float
    admitted_at_step: int
    junction_norms: list = field(default_factory=list)
    junction_angles: list = field(default_factory=list)


@dataclass
class EigenLedger:
    """Per-eigenvalue junction bookkeeping across the induction."""

    entries: dict = field(default_factory=dict)
    J_seq: list = field(default_factory=list)
    rho_seq: list = field(default_factory=list)
    block_records: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "J_seq": list(self.J_seq),
            "rho_seq": list(self.rho_seq),
            "eigenvalues": [
                {"lambda": e.lam, "start_angle": e.start_angle,
                 "admitted_at_step": e.admitted_at_step,
                 "junction_norms": list(e.junction_norms),
                 "junction_angles": list(e.junction_angles)}
                for e in self.entries.values()],
            "blocks": [
                {"k": k, "t": t, "lambda": lam, **diag.to_json()}
                for (k, t, lam, diag) in self.block_records],
        }

    @classmethod
    def from_json(cls, rec: dict) -> "EigenLedger":
        from .wvn import BlockDiagnostics
        led = cls(J_seq=list(rec["J_seq"]), rho_seq=list(rec["rho_seq"]))
        for e in rec["eigenvalues"]:
            led.entries[e["lambda"]] = LedgerEntry(
                lam=e["lambda"], start_angle=e["start_angle"],
                admitted_at_step=e["admitted_at_step"],
                junction_norms=list(e["junction_norms"]),
                junction_angles=list(e["junction_angles"]))
        for b in rec["blocks"]:
            diag = BlockDiagnostics(
                achieved_angle_error=b["achieved_angle_error"],
                decay_ratio=b["decay_ratio"],
                inblock_sup_factor=b["inblock_sup_factor"],
                offspectrum_factors={float(k): v for k, v in
                                     b["offspectrum_factors"].items()},
                threshold_used=b["threshold_used"],
                doublings=b["doublings"])
            led.block_records.append((b["k"], b["t"], b["lambda"], diag))
        return led


def assemble(cplan: ConstructionPlan, boundary_targets: dict):
    """Build the full potential and ledger from a plan and boundary angles.

    boundary_targets maps every candidate eigenvalue to a log-derivative
    angle theta with tan(theta) = w'(x_start)/w(x_start) (x_start = 1 in
    manifold modes, 0 in pure modes).
    """
    missing = [lam for lam in cplan.eigenvalues if lam not in boundary_targets]
    if missing:
        raise ConfigInvalid(f"boundary target missing for {missing}")
    params = cplan.block_params()
    e0 = cplan.e0

    states, ledger = {}, EigenLedger()
    ledger.J_seq = list(cplan.J_seq)
    ledger.rho_seq = [None] + [lv.rho for lv in cplan.levels]
    for lam in cplan.eigenvalues:
        th = float(boundary_targets[lam]) % math.pi
        states[lam] = start_state_from_angle(th, lam)
        ledger.entries[lam] = LedgerEntry(
            lam=lam, start_angle=th,
            admitted_at_step=cplan.admitted.get(lam, 0))

    def record_junction():
        for lam, s in states.items():
            ledger.entries[lam].junction_norms.append(weighted_norm(s, lam))
            ledger.entries[lam].junction_angles.append(prufer_angle(s, lam))

    free = lambda x: np.full_like(np.asarray(x, dtype=float), e0)
    for lam in cplan.eigenvalues:
        traj = ode.propagate(free, EnergyShift(e0, lam), cplan.x_start,
                             cplan.J1, states[lam])
        states[lam] = traj.final_state
    record_junction()

    segments = []
    for level in cplan.levels:
        for t, lam_t in enumerate(level.targets):
            x0 = level.J_start + t * level.T
            x1 = x0 + level.T
            b = t * level.T
            theta0 = prufer_angle(states[lam_t], lam_t)
            others = [mu for mu in cplan.eigenvalues if mu != lam_t]
            seg, diag = build_block(lam_t, others, x0, x1, b, theta0,
                                    cplan.a, params)
            if diag.achieved_angle_error > ANGLE_CHAIN_TOL:
                raise ContractViolated(
                    f"angle chaining error {diag.achieved_angle_error:.3g} "
                    f"above {ANGLE_CHAIN_TOL} at step {level.k} slot {t}",
                    diagnostics=diag)
            segments.append(seg)
            ledger.block_records.append((level.k, t, lam_t, diag))
            for mu in cplan.eigenvalues:
                traj = ode.propagate(seg.q_tilde, EnergyShift(e0, mu),
                                     x0, x1, states[mu])
                states[mu] = traj.final_state
        record_junction()

    x_prev = cplan.J1
    for seg in segments:
        if abs(seg.x0 - x_prev) > 1e-12 * max(1.0, abs(x_prev)):
            raise InconsistentPlan(
                f"tiling gap: segment starts at {seg.x0}, expected {x_prev}")
        x_prev = seg.x1
    if abs(x_prev - cplan.J_seq[-1]) > 1e-12 * abs(cplan.J_seq[-1]):
        raise InconsistentPlan("tiling does not end at the last junction")

    pot = PiecewisePotential(segments=segments, K0=cplan.K0, n=cplan.n,
                             map_mode=cplan.map_mode,
                             support_start=cplan.support_start,
                             x_start=cplan.x_start,
                             domain_end=cplan.J_seq[-1])
    return pot, ledger


@dataclass
class WholeLinePotential:
    """Even reflection q(-x) = q(x) of a half-line potential."""

    half: PiecewisePotential

    def q(self, x):
        return self.half.q(np.abs(np.asarray(x, dtype=float)))

    def f(self, x):
        return self.half.f(np.abs(np.asarray(x, dtype=float)))

    @property
    def domain(self):
        return -self.half.domain_end, self.half.domain_end


def whole_line_extend(potential: PiecewisePotential,
                      ledger: EigenLedger) -> WholeLinePotential:
    """Reflect a Neumann-data half-line construction evenly about x = 0."""
    if potential.map_mode != MAP_DIRECT:
        raise NonNeumannAngles("whole-line extension applies to the pure "
                               "half-line construction only")
    bad = [lam for lam, e in ledger.entries.items()
           if min(e.start_angle % math.pi,
                  math.pi - e.start_angle % math.pi) > 1e-12]
    if bad:
        raise NonNeumannAngles(
            f"start angles must encode u'(0)=0; offending: {bad}")
    return WholeLinePotential(half=potential)
