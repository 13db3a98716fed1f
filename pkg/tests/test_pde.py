"""Full-system oracles: IMEX stepping and elliptic Newton."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import solve

import bifinf as bf
from bifinf.errors import (
    InvalidArgumentError,
    NonConvergenceError,
    NumericFailureError,
)
from bifinf.pde import (
    elliptic_newton,
    evolve,
    export_norm_history_csv,
    gradient_energy,
    manifold_distance,
    stationary_residual,
    step_parabolic,
)


def test_step_consistency_as_dt_shrinks(fast_model, rng):
    op = fast_model.op
    u = fast_model.split.from_coeffs(rng.standard_normal(op.size))
    lam = fast_model.lambda_star - 0.01
    for dt in (1e-2, 1e-3, 1e-4):
        up = step_parabolic(op, fast_model.f, lam, u, dt)
        assert fast_model.domain.norm(up - u) < 5.0 * dt * fast_model.domain.norm(
            op.apply(u)
        )


def test_step_diagonal_solve_oracle(zero_model):
    # f == 0, eigenfunction input: one step divides by 1 + dt (lam_k - lam)
    split = zero_model.split
    k = split.idx3[2]
    phi = split.basis[:, k]
    lam = split.lambda_star - 0.03
    dt = 0.05
    up = step_parabolic(split.operator, zero_model.f, lam, phi, dt)
    expected = phi / (1.0 + dt * (split.eigenvalues[k] - lam))
    assert np.max(np.abs(up - expected)) < 1e-11


def test_stationary_state_is_scheme_fixed_point(fast_model):
    # u* solving (A - lam) u = c stays put under the IMEX step
    op = fast_model.op
    lam = fast_model.lambda_star - 0.05
    c = 0.07
    f = bf.Nonlinearity.constant(c)
    dense = op.to_dense() - lam * np.eye(op.size)
    u_star = solve(dense, np.full(op.size, c))
    up = step_parabolic(op, f, lam, u_star, 0.1)
    assert fast_model.domain.norm(up - u_star) < 1e-10


def test_step_rejects_bad_inputs(fast_model):
    with pytest.raises(InvalidArgumentError):
        step_parabolic(fast_model.op, fast_model.f, 2.0, np.zeros(fast_model.op.size), 0.0)
    with pytest.raises(InvalidArgumentError):
        step_parabolic(
            fast_model.op, fast_model.f, 2.0, np.zeros(fast_model.op.size), 0.1, "verlet"
        )


def test_evolve_zero_horizon_returns_start(fast_model, rng):
    u0 = rng.standard_normal(fast_model.op.size)
    out = evolve(fast_model.op, fast_model.f, 2.0, u0, horizon=0.0, dt=0.1)
    assert np.array_equal(out.final, u0)
    assert out.times.size == 1


def test_evolve_eigen_decay_oracle(zero_model):
    # f == 0, lam below the bottom of the spectrum: exponential decay rate
    split = zero_model.split
    lam = split.eigenvalues[0] - 0.5
    u0 = split.basis[:, split.idx2[0]].copy()
    horizon, dt = 2.0, 1e-3
    out = evolve(split.operator, zero_model.f, lam, u0, horizon, dt)
    expected = np.exp(-(split.eigenvalues[0] - lam) * horizon)
    assert out.l2_norms[-1] == pytest.approx(expected, rel=5e-3)
    assert out.l2_norms[-1] <= expected * (1.0 + 10.0 * dt)


def test_evolve_records_norm_histories(fast_model, rng):
    u0 = fast_model.split.from_coeffs(rng.standard_normal(fast_model.op.size))
    out = evolve(fast_model.op, fast_model.f, 2.0, u0, horizon=0.5, dt=0.01, samples=6)
    assert out.l2_norms.size == out.times.size == out.energy_norms.size
    assert np.all(out.energy_norms >= 0)


def test_scheme_orders():
    # against a reference run at dt/8: semi-implicit is first order with f,
    # Crank-Nicolson second order when f == 0
    dom = bf.build_domain(10.0, 81)
    op = bf.assemble_operator(dom, bf.Potential.poschl_teller())
    z = bf.Nonlinearity.zero()
    g = bf.Nonlinearity.tanh_sech(0.5)
    rng = np.random.default_rng(0)
    u0 = rng.standard_normal(op.size) / np.cosh(dom.x)
    lam, horizon = 1.9, 1.0

    def terminal(f, dt, scheme):
        return evolve(op, f, lam, u0, horizon, dt, scheme=scheme, samples=1).final

    for f, scheme, target in ((g, "semi_implicit", 1.0), (z, "crank_nicolson", 2.0)):
        ref = terminal(f, 1.0 / 512, scheme)
        errs = [
            np.linalg.norm(terminal(f, dt, scheme) - ref) for dt in (1.0 / 16, 1.0 / 32)
        ]
        order = np.log2(errs[0] / errs[1])
        assert order >= target - 0.15


def test_elliptic_newton_trivial_solution(zero_model):
    op = zero_model.op
    lam = zero_model.lambda_star - 0.3  # not an eigenvalue
    u0 = 1e-2 * np.sin(op.domain.x)
    u = elliptic_newton(op, zero_model.f, lam, u0, tol=1e-12)
    assert zero_model.domain.norm(u) < 1e-12


def test_elliptic_newton_singular_at_resonance(zero_model):
    # the seed must leave the kernel, otherwise it already solves the
    # resonant linear equation exactly
    op = zero_model.op
    u0 = 0.1 * zero_model.phi + 0.05 * np.sin(op.domain.x) / np.cosh(op.domain.x)
    with pytest.raises((NumericFailureError, NonConvergenceError)):
        elliptic_newton(op, zero_model.f, zero_model.lambda_star, u0, tol=1e-14)


def test_elliptic_newton_refines_lifted_equilibrium(fast_model):
    # a lifted reduced equilibrium is a near-solution: five steps suffice
    lam = fast_model.lambda_star - 0.01
    fld = fast_model.problem.field(lam)
    from bifinf.reduced import find_equilibria

    root = find_equilibria(fld, [np.array([12.0])], tol=1e-10)[0]
    w = fast_model.split.kernel_state(root)
    lift = w + fld.solver.xi(w)
    u = elliptic_newton(fast_model.op, fast_model.f, lam, lift, tol=1e-10, max_iter=5)
    assert stationary_residual(fast_model.op, fast_model.f, lam, u) <= 1e-10
    assert fast_model.domain.norm(u - lift) < 1e-4  # polish, not a different root


def test_manifold_distance_properties(fast_model, fast_solver, rng):
    split = fast_model.split
    w = 0.6 * fast_model.phi
    point = fast_solver.point(w)
    assert manifold_distance(point, fast_solver) < 1e-8
    # additive block-3 perturbation of unit alpha-norm moves the distance by 1
    k = split.idx3[4]
    pert = split.basis[:, k] / (split.eigenvalues[k] + split.a_shift) ** split.alpha
    eps = 1e-3
    assert manifold_distance(point + eps * pert, fast_solver) == pytest.approx(
        eps, rel=1e-5
    )


def test_manifold_distance_zero_nonlinearity(zero_model, rng):
    solver = zero_model.problem.solver(zero_model.lambda_star - 0.02)
    u = rng.standard_normal(zero_model.op.size)
    rest = u - zero_model.split.project(2, u)
    assert manifold_distance(u, solver) == pytest.approx(
        solver.alpha_norm_state(rest), rel=1e-10
    )


def test_random_starts_attracted_to_manifold(fast_model, fast_solver, rng):
    # module-scale attraction check; the acceptance suite drives it to 1e-5
    split = fast_model.split
    u = fast_solver.point(0.4 * fast_model.phi)
    u = u + 0.5 * split.from_coeffs(rng.standard_normal(split.domain.nodes))
    d0 = manifold_distance(u, fast_solver)
    dt = 2e-3
    for _ in range(int(4.0 / dt)):
        u = step_parabolic(split.operator, fast_model.f, fast_solver.lam, u, dt, "crank_nicolson")
    d1 = manifold_distance(u, fast_solver)
    assert d1 < 2e-2 * d0


def test_gradient_energy_decays_along_flow(fast_model, rng):
    op = fast_model.op
    lam = fast_model.lambda_star - 0.01
    u = 2.0 * fast_model.phi + 0.3 * fast_model.split.from_coeffs(
        rng.standard_normal(op.size)
    )
    energies = []
    dt = 1e-3
    for k in range(2000):
        if k % 200 == 0:
            energies.append(gradient_energy(op, fast_model.f, lam, u))
        u = step_parabolic(op, fast_model.f, lam, u, dt, "crank_nicolson")
    assert np.all(np.diff(energies) <= 1e-10)


def test_gradient_energy_needs_antiderivative(fast_model):
    f = bf.Nonlinearity(
        evaluator=lambda x, s: np.zeros_like(x),
        bound=lambda x: np.zeros_like(x),
        lipschitz_field=lambda x: np.zeros_like(x),
        f_plus=0.0,
        f_minus=0.0,
    )
    with pytest.raises(InvalidArgumentError):
        gradient_energy(fast_model.op, f, 2.0, np.zeros(fast_model.op.size))


def test_export_norm_history(tmp_path, fast_model):
    out = evolve(fast_model.op, fast_model.f, 2.0, fast_model.phi, 0.2, 0.01, samples=5)
    path = tmp_path / "norms.csv"
    export_norm_history_csv(out, path)
    assert path.read_text().splitlines()[0] == "t,l2_norm,energy_norm"
