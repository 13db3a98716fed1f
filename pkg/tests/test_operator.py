"""Operator assembly, spectrum and splitting."""

from __future__ import annotations

import numpy as np
import pytest

import bifinf as bf
from bifinf.errors import (
    AssumptionViolationError,
    InvalidArgumentError,
    NotAnEigenvalueError,
)


def test_build_domain_smallest_grid():
    dom = bf.build_domain(1.0, 3)
    assert np.allclose(dom.x, [-1.0, 0.0, 1.0])
    assert dom.spacing == 1.0


def test_build_domain_spacing_arithmetic():
    dom = bf.build_domain(20.0, 2001)
    assert dom.spacing == pytest.approx(0.02, abs=0)
    assert dom.x[0] == -20.0 and dom.x[-1] == 20.0


@pytest.mark.parametrize("bad", [(20.0, 2), (0.0, 11), (-3.0, 11)])
def test_build_domain_preconditions(bad):
    with pytest.raises(InvalidArgumentError):
        bf.build_domain(*bad)


def test_box_mode_eigenvalue_against_discrete_oracle():
    # V == 1 box: the discrete Dirichlet Laplacian (ghost nodes just outside
    # +-L) has the exact eigenvalue 1 + 2 (1 - cos(pi/(n+1))) / h^2.
    dom = bf.build_domain(np.pi, 801)
    op = bf.assemble_operator(dom, bf.Potential.constant(1.0))
    spec = bf.compute_spectrum(op, 3)
    n, h = dom.nodes, dom.spacing
    exact_discrete = 1.0 + 2.0 * (1.0 - np.cos(np.pi / (n + 1))) / h**2
    assert spec.eigenvalues[0] == pytest.approx(exact_discrete, abs=1e-10)
    # and the analytic Dirichlet-box value 1 + (pi / (2 L))^2 up to O(h)
    assert spec.eigenvalues[0] == pytest.approx(1.0 + 0.25, abs=2e-3)


def test_poschl_teller_min_diagonal_potential():
    dom = bf.build_domain(20.0, 2001)
    op = bf.assemble_operator(dom, bf.Potential.poschl_teller())
    v = op.diagonal - 2.0 / dom.spacing**2
    assert v.min() == pytest.approx(1.0, abs=1e-12)  # sech(0)^2 = 1
    assert dom.x[np.argmin(v)] == 0.0


def test_negative_potential_rejected():
    dom = bf.build_domain(5.0, 51)
    pot = bf.Potential(
        evaluator=lambda x: np.full_like(x, -1.0), a1=1.0, a2=1.0, v_inf=1.0
    )
    with pytest.raises(AssumptionViolationError) as err:
        bf.assemble_operator(dom, pot)
    assert err.value.node is not None


def test_declared_bounds_enforced():
    dom = bf.build_domain(5.0, 51)
    pot = bf.Potential(evaluator=lambda x: 1.0 + x**2, a1=1.0, a2=2.0, v_inf=26.0)
    with pytest.raises(AssumptionViolationError):
        bf.assemble_operator(dom, pot)


def test_bound_state_matches_analytic_value():
    # depth-2 sech^2 well: single bound state at v_inf - 1
    dom = bf.build_domain(20.0, 2001)
    op = bf.assemble_operator(dom, bf.Potential.poschl_teller())
    spec = bf.compute_spectrum(op, 4)
    assert spec.below_threshold[0]
    assert not spec.below_threshold[1:].any()
    assert spec.eigenvalues[0] == pytest.approx(2.0, abs=1e-3)
    # eigenfunction is proportional to sech
    sech = 1.0 / np.cosh(dom.x)
    sech /= dom.norm(sech)
    assert abs(dom.inner(spec.eigenfunctions[:, 0], sech)) == pytest.approx(1.0, abs=1e-5)


def test_constant_potential_has_no_well(fast_model):
    dom = bf.build_domain(14.0, 161)
    op = bf.assemble_operator(dom, bf.Potential.constant(2.0))
    spec = bf.compute_spectrum(op, 4)
    assert not spec.below_threshold.any()


def test_eigenfunction_normalization(fast_model):
    spec = fast_model.spectrum
    h = fast_model.domain.spacing
    for j in range(spec.eigenvalues.size):
        assert h * np.sum(spec.eigenfunctions[:, j] ** 2) == pytest.approx(1.0, abs=1e-10)


def test_compute_spectrum_preconditions(fast_model):
    with pytest.raises(InvalidArgumentError):
        bf.compute_spectrum(fast_model.op, 0)


def test_self_adjointness(fast_model, rng):
    op = fast_model.op
    for _ in range(5):
        u = rng.standard_normal(op.size)
        v = rng.standard_normal(op.size)
        lhs = fast_model.domain.inner(op.apply(u), v)
        rhs = fast_model.domain.inner(u, op.apply(v))
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_spectral_convergence_order():
    # lambda* error vs the analytic value 2 should shrink at second order
    errors = []
    for n in (501, 1001, 2001):
        dom = bf.build_domain(20.0, n)
        op = bf.assemble_operator(dom, bf.Potential.poschl_teller())
        spec = bf.compute_spectrum(op, 1)
        errors.append(abs(spec.eigenvalues[0] - 2.0))
    order1 = np.log2(errors[0] / errors[1])
    order2 = np.log2(errors[1] / errors[2])
    assert 1.8 <= order1 <= 2.2
    assert 1.8 <= order2 <= 2.2


def test_bound_state_insensitive_to_box_size():
    vals = []
    for half_width, n in ((20.0, 2001), (40.0, 4001)):  # same h = 0.02
        dom = bf.build_domain(half_width, n)
        op = bf.assemble_operator(dom, bf.Potential.poschl_teller())
        vals.append(bf.compute_spectrum(op, 1).eigenvalues[0])
    assert abs(vals[0] - vals[1]) < 1e-8


def test_split_structure(fast_model):
    split = fast_model.split
    assert split.multiplicity == 1
    assert split.idx1.size == 0  # nothing below the bound state
    gap = split.gap_upper
    assert split.beta == pytest.approx(0.8 * gap, rel=1e-12)
    assert split.beta == pytest.approx(0.8, abs=0.02)


def test_projections_resolve_identity(fast_model, rng):
    split = fast_model.split
    u = rng.standard_normal(split.domain.nodes)
    total = split.project(1, u) + split.project(2, u) + split.project(3, u)
    assert split.domain.norm(total - u) < 1e-12 * split.domain.norm(u)
    # idempotence and mutual orthogonality
    p2 = split.project(2, u)
    assert split.domain.norm(split.project(2, p2) - p2) < 1e-12
    assert split.domain.norm(split.project(3, p2)) < 1e-12
    assert split.domain.norm(split.project(1, split.project(3, u))) < 1e-12


def test_split_rejects_non_eigenvalue(fast_model):
    with pytest.raises(NotAnEigenvalueError):
        bf.spectral_split(fast_model.spectrum, 2.5)


def test_double_well_cluster_multiplicity():
    dom = bf.build_domain(18.0, 361)
    op = bf.assemble_operator(dom, bf.Potential.double_well(separation=6.0))
    spec = bf.compute_spectrum(op, 6)
    pair = spec.eigenvalues[:2]
    assert abs(pair[1] - pair[0]) < 1e-4  # exponentially near-degenerate
    split = bf.spectral_split(spec, float(pair[0]), cluster_tol=1e-3)
    assert split.multiplicity == 2
    assert split.kernel_basis.shape[1] == 2


def test_csv_exports(tmp_path, fast_model):
    spath = tmp_path / "spectrum.csv"
    opath = tmp_path / "operator.csv"
    from bifinf.operator import export_operator_csv, export_spectrum_csv

    export_spectrum_csv(fast_model.spectrum, spath)
    export_operator_csv(fast_model.op, opath)
    head = spath.read_text().splitlines()[0]
    assert head == "index,eigenvalue,below_threshold"
    assert opath.read_text().splitlines()[0] == "x,potential,diagonal"
