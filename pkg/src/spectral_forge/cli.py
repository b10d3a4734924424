"""Batch front-end: plan -> build -> verify -> export / probe pipelines.

Every stage reads a JSON config plus the previous stage's artifacts from
the output directory and writes its own artifacts there.  Outputs are
deterministic for a fixed config: stable JSON key order, 17-significant-
digit floats in CSVs, no randomness anywhere.

Exit codes: 0 success, 2 certified contract failure (report still
written), 3 invalid configuration or missing artifact.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from . import manifold, origin, schedule, verify  # noqa: E402
from .errors import (ConfigInvalid, ContractViolated, MissingArtifact,  # noqa: E402
                     SpectralForgeError)
from .schedule import (MODE_HALFLINE, MODE_MANIFOLD_COUNTABLE,  # noqa: E402
                       MODE_WHOLELINE, MODES, Budget, ConstructionPlan,
                       EigenLedger, PiecewisePotential)

EXIT_OK = 0
EXIT_CONTRACT = 2
EXIT_CONFIG = 3


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigInvalid(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config is not valid JSON: {exc}")
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict):
    for key in ("eigenvalues", "mode", "a", "k_max"):
        if key not in cfg:
            raise ConfigInvalid(f"config missing required key {key!r}")
    if cfg["mode"] not in MODES:
        raise ConfigInvalid(f"unknown mode {cfg['mode']!r}")
    if cfg["mode"] == MODE_MANIFOLD_COUNTABLE and "budget" not in cfg:
        raise ConfigInvalid("countable mode requires a budget spec")
    if cfg["mode"] in (MODE_HALFLINE, MODE_WHOLELINE):
        if "boundary_angles" not in cfg:
            raise ConfigInvalid("pure Schrödinger modes require "
                                "boundary_angles")


def _budget_from_config(cfg: dict):
    spec = cfg.get("budget")
    if spec is None:
        return None
    return Budget.from_json(spec)


def make_plan(cfg: dict) -> ConstructionPlan:
    return schedule.plan(
        cfg["eigenvalues"], mode=cfg["mode"], a=cfg["a"],
        k_max=cfg["k_max"], K0=cfg.get("K0", 0.0), n=cfg.get("n", 3),
        C_min=cfg.get("C_min", 4), J1=cfg.get("J1"),
        budget=_budget_from_config(cfg),
        ramp_width=cfg.get("ramp_width", 1.0),
        slack=cfg.get("slack", 0.05), min_offset=cfg.get("min_offset"))


def boundary_angles(cfg: dict, cplan: ConstructionPlan) -> dict:
    if cplan.is_manifold:
        return {lam: origin.boundary_target(lam, cplan.K0, cplan.n)
                for lam in cplan.eigenvalues}
    given = {float(k): float(v) for k, v in cfg["boundary_angles"].items()}
    missing = [lam for lam in cplan.eigenvalues if lam not in given]
    if missing:
        raise ConfigInvalid(f"boundary_angles missing for {missing}")
    return given


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_artifact(out: str, name: str) -> dict:
    path = os.path.join(out, name)
    if not os.path.exists(path):
        raise MissingArtifact(f"expected artifact {path}; "
                              "run the earlier pipeline stages first")
    with open(path) as fh:
        return json.load(fh)


def stage_plan(cfg: dict, out: str) -> ConstructionPlan:
    cplan = make_plan(cfg)
    _dump_json(cplan.to_json(), os.path.join(out, "plan.json"))
    return cplan


def _write_metric_csv(path, cplan, potential, resolution):
    xs = np.linspace(cplan.x_start, potential.domain_end, resolution)
    if cplan.is_manifold:
        prof = manifold.MetricProfile.build(potential)
        f1, s, K, q = prof.metric_eval(xs)
        with open(path, "w") as fh:
            fh.write("r,f1,S,K,q\n")
            for row in zip(xs, f1, s, K, q):
                fh.write("%.17g,%.17g,%.17g,%.17g,%.17g\n" % row)
    else:
        q = potential.q(xs)
        with open(path, "w") as fh:
            fh.write("x,q\n")
            for row in zip(xs, q):
                fh.write("%.17g,%.17g\n" % row)


def stage_build(cfg: dict, out: str):
    cplan = ConstructionPlan.from_json(_load_artifact(out, "plan.json"))
    angles = boundary_angles(cfg, cplan)
    potential, ledger = schedule.assemble(cplan, angles)
    resolution = cfg.get("resolution", 4096)
    _dump_json(potential.to_json(), os.path.join(out, "potential.json"))
    potential.to_csv(os.path.join(out, "potential.csv"), resolution)
    _write_metric_csv(os.path.join(out, "metric.csv"), cplan, potential,
                      resolution)
    _dump_json(ledger.to_json(), os.path.join(out, "ledger.json"))
    eig_dir = os.path.join(out, "eigenfunctions")
    os.makedirs(eig_dir, exist_ok=True)
    prof = manifold.MetricProfile.build(potential) if cplan.is_manifold \
        else None
    for lam in cplan.eigenvalues:
        s0 = schedule.start_state_from_angle(angles[lam], lam)
        wd = manifold.w_trajectory(potential, lam, s0)
        path = os.path.join(eig_dir, "lambda_%g.csv" % lam)
        if cplan.is_manifold:
            h1d = origin.h1_profile(lam, cplan.K0, cplan.n)
            ge = manifold.eigenfunction_assemble(lam, wd, h1d, prof)
            ge.to_csv(path)
        else:
            xs, w, wp = wd
            with open(path, "w") as fh:
                fh.write("x,w,wp\n")
                for row in zip(xs, w, wp):
                    fh.write("%.17g,%.17g,%.17g\n" % row)
    return cplan, potential, ledger


def _verification_inputs(cfg: dict, out: str):
    cplan = ConstructionPlan.from_json(_load_artifact(out, "plan.json"))
    potential = PiecewisePotential.from_json(
        _load_artifact(out, "potential.json"))
    ledger = EigenLedger.from_json(_load_artifact(out, "ledger.json"))
    return cplan, potential, ledger


def stage_verify(cfg: dict, out: str):
    cplan, potential, ledger = _verification_inputs(cfg, out)
    curvature = junction_gaps = l2_reports = None
    if cplan.is_manifold:
        prof = manifold.MetricProfile.build(potential)
        rs = np.linspace(3.0, potential.domain_end,
                         cfg.get("curvature_samples", 500_000))
        curvature = manifold.curvature_profile(prof, rs,
                                               budget=cplan.budget)
        angles = boundary_angles(cfg, cplan)
        junction_gaps, l2_reports = {}, {}
        for lam in cplan.eigenvalues:
            s0 = schedule.start_state_from_angle(angles[lam], lam)
            wd = manifold.w_trajectory(potential, lam, s0)
            h1d = origin.h1_profile(lam, cplan.K0, cplan.n)
            ge = manifold.eigenfunction_assemble(lam, wd, h1d, prof)
            junction_gaps[lam] = (ge.junction_gap_value,
                                  ge.junction_gap_deriv)
            l2_reports[lam] = manifold.l2_norm_manifold(ge, prof,
                                                        cplan.J_seq)
    report = verify.run_all(cplan, potential, ledger, curvature=curvature,
                            junction_gaps=junction_gaps,
                            l2_reports=l2_reports)
    _dump_json(report.to_json(), os.path.join(out, "report.json"))
    return report


def stage_probe(cfg: dict, out: str):
    cplan, potential, _ = _verification_inputs(cfg, out)
    spec = cfg.get("probe", {})
    X = spec.get("X", min(potential.domain_end, 300.0))
    h_grid = spec.get("h_grid", 1e-3)
    angles = boundary_angles(cfg, cplan)
    lam0 = cplan.eigenvalues[0]
    rows = verify.discrete_spectrum_probe(potential, X=X, h_grid=h_grid,
                                          targets=cplan.eigenvalues,
                                          left_angle=angles[lam0])
    with open(os.path.join(out, "probe.csv"), "w") as fh:
        fh.write("lambda,eigenvalue,error,localization_mass\n")
        for r in rows:
            fh.write("%.17g,%.17g,%.17g,%.17g\n"
                     % (r["lambda"], r["eigenvalue"], r["error"],
                        r["localization_mass"]))
    return rows


def stage_export(cfg: dict, out: str, resolution: int):
    cplan, potential, _ = _verification_inputs(cfg, out)
    potential.to_csv(os.path.join(out, "potential.csv"), resolution)
    _write_metric_csv(os.path.join(out, "metric.csv"), cplan, potential,
                      resolution)


def stage_plots(cfg: dict, out: str):
    cplan, potential, ledger = _verification_inputs(cfg, out)
    plot_dir = os.path.join(out, "plots")
    os.makedirs(plot_dir, exist_ok=True)
    xs, f, _ = potential.sample(cfg.get("resolution", 4096))

    fig, ax = plt.subplots(figsize=(9, 3.2))
    ax.plot(xs, f, lw=0.6)
    ax.set_xlabel("x")
    ax.set_ylabel("f")
    ax.set_title("assembled oscillatory profile")
    fig.tight_layout()
    fig.savefig(os.path.join(plot_dir, "potential.svg"))
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    for lam, e in ledger.entries.items():
        ax.semilogy(ledger.J_seq, e.junction_norms, "o-",
                    label="lambda=%g" % lam)
    ax.set_xlabel("junction")
    ax.set_ylabel("weighted norm")
    ax.legend()
    ax.set_title("junction-norm ledger")
    fig.tight_layout()
    fig.savefig(os.path.join(plot_dir, "ledger.svg"))
    plt.close(fig)

    if cplan.is_manifold:
        prof = manifold.MetricProfile.build(potential)
        rs = np.linspace(3.0, potential.domain_end, 200_000)
        cp = manifold.curvature_profile(prof, rs, budget=cplan.budget)
        fig, ax = plt.subplots(figsize=(9, 3.2))
        ax.plot(rs, cp["table"]["r_abs_K_plus_K0"], lw=0.5,
                label="r |K + K0|")
        if cplan.budget is not None:
            ax.plot(rs, cplan.budget(rs), "r--", lw=1.0, label="budget")
        ax.set_xlabel("r")
        ax.legend()
        ax.set_title("curvature envelope")
        fig.tight_layout()
        fig.savefig(os.path.join(plot_dir, "curvature.svg"))
        plt.close(fig)


def cmd_run(cfg: dict, out: str, plots: bool) -> int:
    stage_plan(cfg, out)
    stage_build(cfg, out)
    report = stage_verify(cfg, out)
    if "probe" in cfg:
        stage_probe(cfg, out)
    if plots:
        stage_plots(cfg, out)
    return EXIT_OK if report.passed else EXIT_CONTRACT


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="spectral-forge",
        description="Construct and certify potentials and metric profiles "
                    "with eigenvalues embedded in the continuous spectrum.")
    ap.add_argument("command",
                    choices=["run", "plan", "build", "verify", "export",
                             "probe", "plots"])
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", default=".", help="artifact directory")
    ap.add_argument("--resolution", type=int, default=4096,
                    help="CSV sample count for export")
    ap.add_argument("--plots", choices=["on", "off"], default="on",
                    help="render SVG plots during `run`")
    args = ap.parse_args(argv)

    try:
        cfg = load_config(args.config)
        os.makedirs(args.out, exist_ok=True)
        if args.command == "run":
            return cmd_run(cfg, args.out, args.plots == "on")
        if args.command == "plan":
            stage_plan(cfg, args.out)
        elif args.command == "build":
            stage_build(cfg, args.out)
        elif args.command == "verify":
            report = stage_verify(cfg, args.out)
            return EXIT_OK if report.passed else EXIT_CONTRACT
        elif args.command == "probe":
            for row in stage_probe(cfg, args.out):
                print("lambda=%g eigenvalue=%.12g error=%.3g mass=%.6f"
                      % (row["lambda"], row["eigenvalue"], row["error"],
                         row["localization_mass"]))
        elif args.command == "export":
            stage_export(cfg, args.out, args.resolution)
        elif args.command == "plots":
            stage_plots(cfg, args.out)
        return EXIT_OK
    except (ConfigInvalid, MissingArtifact) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractViolated as exc:
        print(f"contract failure: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except SpectralForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
