"""Lyapunov-Perron operator, fixed point and the manifold map."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.linalg import solve

import bifinf as bf
from bifinf.errors import GateRefusedError, HorizonTooShortError, InvalidArgumentError
from bifinf.manifold import (
    ManifoldMap,
    export_manifold_samples,
    lyapunov_perron_apply,
    measure_contraction,
    random_trajectory,
    solve_fixed_point,
)
from bifinf.pde import step_parabolic


@pytest.fixture(scope="module")
def zero_solver(zero_model):
    return zero_model.problem.solver(zero_model.lambda_star - 0.02)


def test_zero_nonlinearity_reduces_to_kernel_propagation(zero_model, zero_solver, rng):
    # G(u)(t) = e^{-A2 t} w regardless of u when f == 0
    solver = zero_solver
    w = 0.7 * zero_model.phi
    u = random_trajectory(solver, rng, amplitude=2.0)
    out = lyapunov_perron_apply(solver, w, u)
    expected = solver.initial_trajectory(solver.kernel_coords(w))
    assert np.max(np.abs(out.coeffs - expected.coeffs)) < 1e-12


def test_zero_nonlinearity_at_lambda_star_is_constant(zero_model, rng):
    solver = zero_model.problem.solver(zero_model.lambda_star)
    w = 0.3 * zero_model.phi
    u = random_trajectory(solver, rng)
    out = lyapunov_perron_apply(solver, w, u)
    w2 = solver.kernel_coords(w)
    assert np.allclose(out.coeffs[:, zero_model.split.idx2], w2, atol=1e-12)


def test_contraction_bound(fast_model, fast_solver, rng):
    # measured ratio must stay below F_mu * L_f (12 pairs here, 50 in the
    # acceptance suite)
    ratio = measure_contraction(fast_solver, pairs=12, rng=rng)
    assert 0.0 < ratio <= fast_model.gate.product


def test_fixed_point_zero_nonlinearity(zero_model, zero_solver):
    w = 0.5 * zero_model.phi
    traj = solve_fixed_point(zero_solver, w)
    expected = zero_solver.initial_trajectory(zero_solver.kernel_coords(w))
    assert np.max(np.abs(traj.coeffs - expected.coeffs)) < 1e-12
    assert zero_solver.residual_log[-1] < 1e-14


def test_fixed_point_anchor_and_residual(fast_model, fast_solver):
    w = 0.5 * fast_model.phi
    traj = solve_fixed_point(fast_solver, w)
    # anchor is reproduced exactly at t = 0
    w2 = fast_solver.kernel_coords(w)
    assert np.allclose(traj.coeffs[fast_solver.i0, fast_model.split.idx2], w2, atol=1e-9)
    # direct recomputation of the fixed-point residual
    again = fast_solver.apply(w2, traj)
    assert fast_solver.weighted_norm(again.coeffs - traj.coeffs) <= 1e-9


def test_fixed_point_sweep_budget(fast_model):
    # geometric-rate bound: sweeps <= log(tol)/log(F_mu L_f) + 2
    solver = fast_model.problem.solver(fast_model.lambda_star - 0.01)
    solver.clear_cache()
    solver.solve(0.5 * fast_model.phi, tol=1e-9)
    budget = math.log(1e-9) / math.log(fast_model.gate.product) + 2.0
    assert len(solver.residual_log) <= budget
    # logged residuals decay geometrically within the advertised ratio
    log = solver.residual_log
    ratios = [b / a for a, b in zip(log, log[1:]) if a > 1e-6]
    assert all(r <= fast_model.gate.product + 0.05 for r in ratios)


def test_gate_refusal(fast_model):
    big = bf.Nonlinearity.tanh_sech(10.0)
    l_f = bf.estimate_lipschitz(big, fast_model.split)
    gate = bf.check_gate(fast_model.f_mu, l_f)
    with pytest.raises(GateRefusedError):
        ManifoldMap(fast_model.split, big, fast_model.lambda_star - 0.01, gate)


def test_lambda_outside_window_rejected(fast_model):
    with pytest.raises(InvalidArgumentError):
        ManifoldMap(
            fast_model.split,
            fast_model.f,
            fast_model.lambda_star + fast_model.split.beta,
            fast_model.gate,
        )


def test_horizon_too_short(fast_model):
    with pytest.raises(HorizonTooShortError) as err:
        ManifoldMap(
            fast_model.split,
            fast_model.f,
            fast_model.lambda_star - 0.01,
            fast_model.gate,
            time_step=0.1,
            tail_tol=1e-12,
        )
    assert err.value.suggested_horizon > 40.0 / fast_model.split.beta


def test_xi_vanishes_for_zero_nonlinearity(zero_model, zero_solver):
    for scale in (0.3, -1.7):
        x = zero_solver.xi(scale * zero_model.phi)
        assert zero_model.domain.norm(x) < 1e-12


def test_xi_constant_forcing_matches_linear_solve(fast_model):
    # f(x, s) = c independent of s: xi = (A - lam)^-1 restricted to block 3,
    # applied to P3 of the constant forcing; oracle is a dense solve
    split = fast_model.split
    c = 0.05
    f = bf.Nonlinearity.constant(c)
    gate = bf.check_gate(fast_model.f_mu, 0.0)
    lam = fast_model.lambda_star - 0.01
    solver = ManifoldMap(split, f, lam, gate, mu=fast_model.mu, time_step=0.1)
    got1 = solver.xi(0.4 * fast_model.phi)
    got2 = solver.xi(-2.0 * fast_model.phi)
    forcing = split.project(3, c * np.ones(split.domain.nodes))
    dense = split.operator.to_dense() - lam * np.eye(split.operator.size)
    oracle = split.project(3, solve(dense, forcing))
    assert split.domain.norm(got1 - oracle) < 1e-7
    assert split.domain.norm(got1 - got2) < 1e-8  # constant in w


def test_xi_equals_offkernel_part_of_anchor_state(fast_model, fast_solver):
    w = 1.2 * fast_model.phi
    traj = fast_solver.solve(w)
    split = fast_model.split
    u0 = traj.state_at_zero()
    x = fast_solver.xi(w)
    assert split.domain.norm((u0 - split.project(2, u0)) - x) < 1e-10
    # manifold point = w + xi(w)
    assert split.domain.norm(fast_solver.point(w) - (w + x)) < 1e-12


def test_xi_bound_closed_form(fast_model):
    from scipy.integrate import quad

    split = fast_model.split
    m_f = split.domain.norm(fast_model.f.bound(split.domain.x))
    rate = 0.75 * split.beta
    near, _ = quad(lambda s: (1 + s**-0.5) * np.exp(-rate * s), 0, 1.0, limit=200)
    far, _ = quad(lambda s: (1 + s**-0.5) * np.exp(-rate * s), 1.0, np.inf, limit=200)
    expected = split.growth_constant * m_f * (near + far)
    assert bf.xi_bound(split, fast_model.f) == pytest.approx(expected, rel=1e-7)


def test_xi_bound_zero_forcing(zero_model):
    assert bf.xi_bound(zero_model.split, zero_model.f) == 0.0


def test_sampled_xi_below_bound(fast_model, fast_solver, rng):
    bound = bf.xi_bound(fast_model.split, fast_model.f)
    sup = 0.0
    for w2 in np.sort(rng.uniform(-4.0, 4.0, 15)):
        c = fast_solver.xi_coords(np.array([w2]), coords=True)
        sup = max(sup, float(np.linalg.norm(fast_solver.alpha_weights * c)))
    assert 0.0 < sup <= bound


def test_xi_lipschitz_in_anchor(fast_model, fast_solver, rng):
    # constant M q / (1 - q) from the fixed-point estimate, plus slack
    q = fast_model.gate.product
    m = fast_model.split.growth_constant
    bound = m * q / (1.0 - q) + 0.05
    for _ in range(6):
        a, b = rng.uniform(-3.0, 3.0, 2)
        wa, wb = a * fast_model.phi, b * fast_model.phi
        num = fast_solver.alpha_norm_state(fast_solver.xi(wa) - fast_solver.xi(wb))
        den = fast_solver.alpha_norm_state(wa - wb)
        if den > 1e-12:
            assert num / den <= bound


def test_xi_continuous_in_lambda(fast_model):
    star = fast_model.lambda_star
    w = 1.5 * fast_model.phi
    vals = []
    for lam in (star - 0.012, star - 0.01, star - 0.008):
        solver = fast_model.problem.solver(lam)
        vals.append(solver.alpha_norm_state(solver.xi(w)))
    spread = max(vals) - min(vals)
    assert spread < 0.05 * max(vals)  # sampled modulus of continuity


def test_weighted_trajectory_invariants(fast_model, fast_solver):
    traj = fast_solver.solve(2.0 * fast_model.phi)
    # finite weighted norm
    assert np.isfinite(fast_solver.weighted_norm(traj.coeffs))
    # continuity surrogate: successive alpha-norm differences are O(dt)
    diffs = np.sqrt(
        np.sum(((traj.coeffs[1:] - traj.coeffs[:-1]) * fast_solver.alpha_weights) ** 2, axis=1)
    )
    scale = np.sqrt(np.sum((traj.coeffs * fast_solver.alpha_weights) ** 2, axis=1)).max()
    assert diffs.max() <= 5.0 * fast_solver.dt * max(scale, 1.0)


def test_fixed_point_is_full_solution(fast_model, fast_solver):
    # stepping the discretized evolution from u(t_j) reproduces u(t_{j+1})
    # within O(dt^2) + tol (spec: forward direction of the integral lemma)
    traj = fast_solver.solve(0.8 * fast_model.phi)
    split = fast_model.split
    dt = fast_solver.dt
    sub = 20
    for j in (fast_solver.i0, fast_solver.i0 + 5, fast_solver.i0 - 7):
        u = traj.state(j)
        for _ in range(sub):
            u = step_parabolic(
                split.operator, fast_model.f, fast_solver.lam, u, dt / sub, "crank_nicolson"
            )
        err = split.domain.norm(u - traj.state(j + 1))
        assert err < 2.0 * dt**2


def test_invariance_under_parabolic_flow(fast_model, fast_solver):
    # short module-scale version of the invariance check (acceptance runs the
    # full-quality one): trajectory from a manifold point stays close in the
    # graph distance
    split = fast_model.split
    u = fast_solver.point(0.5 * fast_model.phi)
    dt = 2e-3
    for _ in range(int(2.0 / dt)):
        u = step_parabolic(split.operator, fast_model.f, fast_solver.lam, u, dt, "crank_nicolson")
    assert fast_solver.distance(u) < 1e-4


def test_export_manifold_samples(tmp_path, fast_model, fast_solver):
    path = tmp_path / "manifold.csv"
    export_manifold_samples(fast_solver, np.array([[0.5], [1.0], [-0.5]]), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "w0,w_norm,xi_alpha_norm"
    assert len(lines) == 4
