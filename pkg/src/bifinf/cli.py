"""Configuration-driven scenario runner.

Builds the operator/split/gate pipeline from a config file, runs the
bifurcation study (branches, blow-up fits, three-solution reports, index
signature, annulus margins) or, with --verify, just the invariant suites,
and writes deterministic CSV/JSON artifacts.

Exit codes: 0 success, 1 config schema violation (field path printed),
2 smallness-gate failure (product printed), 3 verification suite failure.
No artifacts are written before the gate has passed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bifurcation as bif
from . import manifold as mf
from . import nonlinearity as nl
from . import pde
from . import reduced as rd
from . import semigroup as sg
from .config import ScenarioConfig, load_config
from .errors import (
    BifinfError,
    ConfigError,
    GateRefusedError,
    InsufficientDataError,
)
from .operator import (
    Potential,
    assemble_operator,
    build_domain,
    compute_spectrum,
    export_spectrum_csv,
    spectral_split,
)

__all__ = ["ModelContext", "build_model", "run_scenario", "emit_diagram", "main"]


@dataclass
class ModelContext:
    cfg: ScenarioConfig
    split: object
    f: nl.Nonlinearity
    gate: nl.SmallnessGate
    mu: float
    problem: bif.BifurcationProblem


def _make_potential(cfg: ScenarioConfig) -> Potential:
    if cfg.potential_kind == "poschl_teller":
        return Potential.poschl_teller(cfg.potential_depth, cfg.potential_asymptote)
    if cfg.potential_kind == "double_well":
        return Potential.double_well(
            cfg.potential_depth, cfg.potential_asymptote, cfg.potential_separation
        )
    if cfg.potential_kind == "constant":
        return Potential.constant(cfg.potential_level)
    return Potential.from_csv(cfg.potential_path)


def _make_nonlinearity(cfg: ScenarioConfig) -> nl.Nonlinearity:
    if cfg.nonlinearity_kind == "tanh_sech":
        return nl.Nonlinearity.tanh_sech(cfg.amplitude)
    if cfg.nonlinearity_kind == "constant":
        return nl.Nonlinearity.constant(cfg.level)
    if cfg.nonlinearity_kind == "zero":
        return nl.Nonlinearity.zero()
    return nl.Nonlinearity.from_csv(cfg.nonlinearity_path, cfg.f_plus, cfg.f_minus)


def build_model(cfg: ScenarioConfig) -> ModelContext:
    """Operator -> spectrum -> split -> gate; refuses when the gate fails."""
    domain = build_domain(cfg.half_width, cfg.nodes)
    op = assemble_operator(domain, _make_potential(cfg))
    spectrum = compute_spectrum(op, cfg.eigen_count)
    point = spectrum.point_spectrum
    if point.size <= cfg.target_index:
        raise ConfigError(
            f"target_index {cfg.target_index} exceeds the {point.size} point-spectrum "
            "eigenvalues found",
            "spectral.target_index",
        )
    split = spectral_split(
        spectrum,
        float(point[cfg.target_index]),
        alpha=cfg.alpha,
        beta_fraction=cfg.beta_fraction,
        cluster_tol=cfg.cluster_tol,
        seed=cfg.seed,
    )
    f = _make_nonlinearity(cfg)
    l_f = nl.estimate_lipschitz(f, split, seed=cfg.seed)
    mu = cfg.mu_fraction * split.beta
    f_mu = nl.compute_F_mu(split.growth_constant, split.beta, mu, split.alpha)
    gate = nl.check_gate(f_mu, l_f)
    if not gate.passed:
        raise GateRefusedError(
            f"smallness gate failed: F_mu * L_f = {gate.product:.6g} >= 1", gate.product
        )
    solver_options = dict(
        mu=mu,
        horizon=cfg.horizon,
        time_step=cfg.time_step,
        tol=cfg.tolerance,
        max_sweeps=cfg.max_sweeps,
        tail_tol=cfg.tail_tolerance,
    )
    problem = bif.BifurcationProblem(
        split, f, gate, solver_options=solver_options, seed=cfg.seed
    )
    return ModelContext(cfg=cfg, split=split, f=f, gate=gate, mu=mu, problem=problem)


def _point_row(point: bif.BranchPoint) -> dict:
    return {
        "lambda": float(point.lam),
        "coords": [float(v) for v in point.coords],
        "l2_norm": float(point.l2_norm),
        "energy_norm": float(point.energy_norm),
        "morse_index": int(point.morse_index),
        "residual": float(point.residual),
    }


def run_verification(ctx: ModelContext) -> dict:
    """Invariant suites: semigroup bounds, projections, contraction, margins."""
    split = ctx.split
    cfg = ctx.cfg
    rng = np.random.default_rng(cfg.seed + 1)
    suites: dict[str, dict] = {}

    m_est = split.growth_constant
    violations = sg.replay_bound_samples(split, m_est, 2000, seed=cfg.seed + 2)
    suites["semigroup_bounds"] = {
        "passed": bool(m_est <= 1.06 and violations == 0),
        "growth_constant": float(m_est),
        "violations": int(violations),
    }

    u = rng.standard_normal(split.domain.nodes)
    recon = sum(split.project(i, u) for i in (1, 2, 3)) - u
    cross = split.domain.norm(split.project(1, split.project(3, u)))
    idem = split.domain.norm(split.project(2, split.project(2, u)) - split.project(2, u))
    ok = max(split.domain.norm(recon), cross, idem) <= 1e-10
    suites["projections"] = {
        "passed": bool(ok),
        "identity_defect": float(split.domain.norm(recon)),
    }

    suites["gate"] = {
        "passed": bool(ctx.gate.passed),
        "f_mu": float(ctx.gate.f_mu),
        "l_f": float(ctx.gate.l_f),
        "product": float(ctx.gate.product),
    }

    lam = split.lambda_star - ctx.cfg.lambda_offsets[0]
    solver = ctx.problem.solver(lam)
    ratio = mf.measure_contraction(solver, pairs=10, rng=rng)
    suites["contraction"] = {
        "passed": bool(ratio <= ctx.gate.product),
        "measured_ratio": float(ratio),
        "bound": float(ctx.gate.product),
    }

    kb = split.kernel_basis[:, 0]
    traj = solver.solve(0.5 * kb)
    final_resid = solver.residual_log[-1]
    ratios = [
        b / a for a, b in zip(solver.residual_log, solver.residual_log[1:]) if a > 1e3 * cfg.tolerance
    ]
    rate_ok = all(r <= ctx.gate.product + 0.05 for r in ratios)
    suites["fixed_point"] = {
        "passed": bool(final_resid <= cfg.tolerance and rate_ok),
        "residual": float(final_resid),
        "sweeps": len(solver.residual_log),
    }

    bound = mf.xi_bound(split, ctx.f)
    sup = 0.0
    for _ in range(20):
        w2 = rng.uniform(-3.0, 3.0, split.multiplicity)
        c = solver.xi_coords(w2, coords=True)
        sup = max(sup, float(np.linalg.norm(solver.alpha_weights * c)))
    suites["xi_bound"] = {
        "passed": bool(sup <= bound),
        "sampled_sup": float(sup),
        "bound": float(bound),
    }

    margin_ok = True
    s0 = None
    if min(ctx.f.f_plus, ctx.f.f_minus) > 0:
        try:
            s0 = nl.find_saturation_scale(ctx.f, split, radius=1.0, epsilon=0.1, seed=cfg.seed)
            for k in range(10):
                mg = nl._margin_worst_case(
                    ctx.f, split, 1.0, s0 * (1.0 + 0.5 * k), np.random.default_rng(cfg.seed + 3 + k), 5
                )
                margin_ok = margin_ok and mg >= -0.1
        except BifinfError:
            margin_ok = False
    suites["resonance_margin"] = {
        "passed": bool(margin_ok),
        "s0": None if s0 is None else float(s0),
    }
    return suites


def run_bifurcation_study(ctx: ModelContext) -> dict:
    cfg = ctx.cfg
    problem = ctx.problem
    split = ctx.split
    star = split.lambda_star
    out: dict = {}

    offsets = sorted(cfg.lambda_offsets, reverse=True)
    lam_grid = star - np.geomspace(cfg.branch_max_offset, cfg.branch_min_offset, cfg.branch_points)

    first_bounds = problem.bounds(float(lam_grid[0]))
    r_seed = first_bounds.r_lam if np.isfinite(first_bounds.r_lam) else 0.5 * (
        first_bounds.R0 + first_bounds.R_lam
    )
    m = split.multiplicity
    dir0 = np.zeros(m)
    dir0[0] = 1.0

    branches = []
    fits = {}
    for label, seed_coords in (
        ("plus", 1.5 * r_seed * dir0),
        ("minus", -1.5 * r_seed * dir0),
        ("bounded", np.zeros(m)),
    ):
        branch = bif.continue_branch(problem, lam_grid, seed_coords, tol=cfg.tolerance)
        branches.append(branch)
        if branch.label != "bounded":
            try:
                fit = bif.detect_blowup(branch, star)
                fits[branch.label] = {
                    "slope": fit.slope,
                    "intercept": fit.intercept,
                    "r_squared": fit.r_squared,
                    "amplitude": fit.amplitude,
                }
            except InsufficientDataError:
                pass
    out["branches"] = [
        {"label": b.label, "points": [_point_row(p) for p in b.points]} for b in branches
    ]
    out["blowup_fits"] = fits

    triples = []
    annuli = []
    theta_measured = 0.0
    for off in offsets:
        lam = star - off
        fld = problem.bulk_field(lam)
        bounds = problem.bounds(lam)
        margin = None
        if bounds.exists:
            margin = rd.annulus_check(fld, bounds, cfg.annulus_samples, seed=cfg.seed)
            if margin >= 0.0:
                theta_measured = max(theta_measured, off)
        annuli.append(
            {
                "lambda": float(lam),
                "eta": float(off),
                "r_lambda": float(bounds.r_lam) if np.isfinite(bounds.r_lam) else None,
                "R_lambda": float(bounds.R_lam),
                "margin_min": None if margin is None else float(margin),
            }
        )
        rep = bif.three_solutions(problem, lam, tol=cfg.tolerance)
        triples.append(
            {
                "lambda": float(lam),
                "complete": bool(rep.complete),
                "separation": float(rep.separation),
                "required_separation": float(rep.required_separation),
                "missing": list(rep.missing),
                "solutions": [_point_row(p) for p in rep.solutions],
            }
        )
    out["three_solutions"] = triples
    out["annulus"] = annuli
    out["theta_measured"] = float(theta_measured)

    left = star - cfg.index_offset
    right = star + cfg.index_offset
    sig = bif.index_signature(problem, left, right, tol=cfg.tolerance)
    out["index_signature"] = {"left": int(sig[0]), "right": int(sig[1])}

    out["suites"] = {
        "three_solutions": {"passed": bool(all(t["complete"] for t in triples))},
        "blowup_scaling": {
            "passed": bool(
                fits
                and all(0.9 <= f["slope"] <= 1.1 and f["r_squared"] >= 0.99 for f in fits.values())
            )
        },
        "index_jump": {"passed": bool(sig == (0, split.multiplicity))},
        "annulus_margins": {
            "passed": bool(
                all(a["margin_min"] is not None and a["margin_min"] >= 0.0 for a in annuli)
            )
        },
        "bounded_branch": {
            "passed": bool(
                branches[-1].label == "bounded"
                and max(p.l2_norm for p in branches[-1].points) <= problem.bounded_cap + 1e-9
            )
        },
    }
    return out


def _constants_report(ctx: ModelContext) -> dict:
    split = ctx.split
    consts = ctx.problem.constants if min(ctx.f.f_plus, ctx.f.f_minus) > 0 else None
    rep = {
        "lambda_star": float(split.lambda_star),
        "multiplicity": int(split.multiplicity),
        "beta": float(split.beta),
        "growth_constant": float(split.growth_constant),
        "alpha": float(split.alpha),
        "a_shift": float(split.a_shift),
        "mu": float(ctx.mu),
        "F_mu": float(ctx.gate.f_mu),
        "L_f": float(ctx.gate.l_f),
        "gate_product": float(ctx.gate.product),
    }
    if consts is not None:
        rep.update(
            R0=float(consts.R0),
            c0=float(consts.c0),
            C1=float(consts.C1),
            delta=float(consts.delta),
            l1_min=float(consts.l1_min),
            xi_radius=float(consts.R1),
        )
    return rep


def run_scenario(
    cfg: ScenarioConfig,
    lam_grid: np.ndarray | None = None,
    verify_only: bool = False,
) -> dict:
    """Execute the configured pipeline and return the run report dict."""
    ctx = build_model(cfg)
    if lam_grid is not None:
        lo, hi = ctx.split.interval
        grid = np.asarray(lam_grid, dtype=float)
        if grid.min() <= lo or grid.max() >= hi:
            raise ConfigError(
                f"lambda grid leaves the admissible window ({lo:.8g}, {hi:.8g})",
                "cli.lambda_range",
            )
        star = ctx.split.lambda_star
        below = np.sort(star - grid[grid < star])[::-1]
        if below.size >= 2:
            cfg.branch_max_offset = float(below[0])
            cfg.branch_min_offset = float(below[-1])
            cfg.branch_points = int(below.size)
    report: dict = {
        "label": cfg.label,
        "config": cfg.provenance(),
        "constants": _constants_report(ctx),
        "verification": run_verification(ctx),
    }
    if not verify_only:
        report["study"] = run_bifurcation_study(ctx)
        report["suites"] = {**report["study"].pop("suites"), "gate": {"passed": True}}
    report["_context"] = ctx  # stripped before serialization
    return report


def emit_diagram(report: dict, out_dir: str | Path) -> list[Path]:
    """Write diagram.csv, equilibria.csv, spectrum.csv and report.json."""
    study = report.get("study")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    ctx: ModelContext | None = report.get("_context")

    if study is not None:
        if not study.get("branches"):
            raise InsufficientDataError("report has no branches to draw")
        diagram = out / "diagram.csv"
        with open(diagram, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lambda", "label", "l2_norm", "morse_index", "residual"])
            for branch in study["branches"]:
                for p in branch["points"]:
                    writer.writerow(
                        [
                            f"{p['lambda']:.12g}",
                            branch["label"],
                            f"{p['l2_norm']:.12g}",
                            p["morse_index"],
                            f"{p['residual']:.12g}",
                        ]
                    )
        written.append(diagram)

        rows = []
        margin_by_lam = {a["lambda"]: a["margin_min"] for a in study["annulus"]}
        for trip in study["three_solutions"]:
            for p in trip["solutions"]:
                mg = margin_by_lam.get(trip["lambda"])
                rows.append(
                    (
                        trip["lambda"],
                        p["coords"][0],
                        p["residual"],
                        float("nan") if mg is None else mg,
                    )
                )
        eq_path = out / "equilibria.csv"
        rd.export_equilibria_csv(rows, eq_path)
        written.append(eq_path)

    if ctx is not None:
        spec_path = out / "spectrum.csv"
        export_spectrum_csv(
            compute_spectrum(ctx.split.operator, ctx.cfg.eigen_count), spec_path
        )
        written.append(spec_path)

    clean = {k: v for k, v in report.items() if not k.startswith("_")}
    report_path = out / "report.json"
    with open(report_path, "w") as fh:
        json.dump(clean, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(report_path)
    return written


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="bifinf",
        description="Bifurcation from infinity via invariant-manifold reduction.",
    )
    parser.add_argument("--config", required=True, help="config file path or bundled name")
    parser.add_argument("--out", default="bifinf_out", help="output directory")
    parser.add_argument("--lambda-min", type=float, default=None)
    parser.add_argument("--lambda-max", type=float, default=None)
    parser.add_argument("--lambda-steps", type=int, default=None)
    parser.add_argument(
        "--verify", action="store_true", help="run the invariant suites only"
    )
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        cfg.seed = args.seed

    lam_grid = None
    if args.lambda_min is not None or args.lambda_max is not None:
        if args.lambda_min is None or args.lambda_max is None:
            print("config error: cli.lambda_range: need both --lambda-min and --lambda-max",
                  file=sys.stderr)
            return 1
        steps = args.lambda_steps or 7
        lam_grid = np.linspace(args.lambda_min, args.lambda_max, steps)

    try:
        report = run_scenario(cfg, lam_grid=lam_grid, verify_only=args.verify)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except GateRefusedError as exc:
        print(f"gate refused: F_mu * L_f = {exc.product:.6g} >= 1", file=sys.stderr)
        return 2
    except BifinfError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 4

    emit_diagram(report, args.out)
    failures = [
        name
        for name, suite in report.get("verification", {}).items()
        if not suite.get("passed", True)
    ]
    for name, suite in report.get("suites", {}).items():
        if not suite.get("passed", True):
            failures.append(name)
    for name in sorted(set(failures)):
        print(f"suite failed: {name}", file=sys.stderr)
    if args.verify and failures:
        return 3
    print(f"report written to {Path(args.out) / 'report.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
