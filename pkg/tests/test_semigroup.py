"""Block semigroups, fractional norms and the sampled growth constant."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import expm

import bifinf as bf
from bifinf.errors import InvalidArgumentError, InvalidShiftError
from bifinf.semigroup import (
    FractionalScale,
    SemigroupAction,
    dump_bound_ratios,
    estimate_decay_constant,
    estimate_smoothing_constant,
    replay_bound_samples,
    semigroup_action,
)


def test_identity_at_time_zero(fast_model, rng):
    split = fast_model.split
    u = rng.standard_normal(split.domain.nodes)
    act = SemigroupAction(split, lam=split.lambda_star - 0.05, block=2)
    out = semigroup_action(act, 0.0, u)
    assert np.allclose(out, split.project(2, u), atol=1e-13)


def test_kernel_block_is_frozen_at_lambda_star(fast_model, rng):
    split = fast_model.split
    u = rng.standard_normal(split.domain.nodes)
    act = SemigroupAction(split, lam=split.lambda_star, block=2)
    for t in (-3.0, 0.7, 12.0):
        assert np.allclose(semigroup_action(act, t, u), split.project(2, u), atol=1e-12)


def test_block3_action_matches_dense_exponential(fast_model, rng):
    # independent oracle: scipy.linalg.expm of the dense shifted operator
    split = fast_model.split
    lam = split.lambda_star - 0.05
    u = rng.standard_normal(split.domain.nodes)
    p3u = split.project(3, u)
    t = 1.0
    dense = expm(-t * (split.operator.to_dense() - lam * np.eye(split.operator.size)))
    expected = dense @ p3u
    got = semigroup_action(SemigroupAction(split, lam, 3), t, u)
    assert split.domain.norm(got - expected) < 1e-8 * split.domain.norm(expected)
    # decay at the spectral-gap rate
    bound = np.exp(-(split.lambda_star + split.gap_upper - lam) * t)
    assert split.domain.norm(got) <= bound * split.domain.norm(p3u) * (1 + 1e-12)


@pytest.mark.parametrize("block,t", [(1, 0.5), (3, -0.5)])
def test_inadmissible_time_sign_rejected(fast_model, block, t):
    act = SemigroupAction(fast_model.split, fast_model.lambda_star, block)
    with pytest.raises(InvalidArgumentError):
        semigroup_action(act, t, np.zeros(fast_model.domain.nodes))


def test_semigroup_law(fast_model, rng):
    split = fast_model.split
    lam = split.lambda_star + 0.03
    u = rng.standard_normal(split.domain.nodes)
    for block, times in ((2, (-1.2, 0.4)), (3, (0.8, 1.7))):
        act = SemigroupAction(split, lam, block)
        t, s = times
        once = semigroup_action(act, t + s, u)
        twice = semigroup_action(act, t, semigroup_action(act, s, u))
        assert split.domain.norm(once - twice) <= 1e-10 * max(1.0, split.domain.norm(once))


def test_fractional_norm_alpha_zero_is_l2(fast_model, rng):
    split = fast_model.split
    u = rng.standard_normal(split.domain.nodes)
    scale = FractionalScale(a=split.a_shift, alpha=0.0)
    assert bf.fractional_norm(scale, split, u) == pytest.approx(split.domain.norm(u), rel=1e-12)


def test_fractional_norm_diagonal_action(fast_model):
    split = fast_model.split
    k = split.idx3[3]
    phi = split.basis[:, k]
    nu = split.eigenvalues[k] + split.a_shift
    scale = FractionalScale(a=split.a_shift, alpha=0.5)
    assert bf.fractional_norm(scale, split, phi) == pytest.approx(nu**0.5, rel=1e-12)


def test_fractional_norm_quadratic_form_oracle(fast_model, rng):
    # ‖Lambda^1/2 u‖^2 = <Lambda u, u> with the right side through op.apply
    split = fast_model.split
    u = rng.standard_normal(split.domain.nodes)
    scale = FractionalScale(a=split.a_shift, alpha=0.5)
    lhs = bf.fractional_norm(scale, split, u) ** 2
    lam_u = split.operator.apply(u) + split.a_shift * u
    rhs = split.domain.inner(lam_u, u)
    assert lhs == pytest.approx(rhs, rel=1e-9)


def test_invalid_shift_rejected(fast_model):
    split = fast_model.split
    scale = FractionalScale(a=-10.0, alpha=0.5)
    with pytest.raises(InvalidShiftError):
        bf.fractional_norm(scale, split, np.ones(split.domain.nodes))


def test_estimated_growth_constant_small(fast_model):
    m = estimate_decay_constant(fast_model.split, 400, seed=7)
    assert 1.0 < m <= 1.06


def test_single_sample_gives_floor(fast_model):
    assert estimate_decay_constant(fast_model.split, 1, seed=0) == pytest.approx(1.05)


def test_replay_has_no_violations(fast_model):
    m = fast_model.split.growth_constant
    assert replay_bound_samples(fast_model.split, m, 2000, seed=99) == 0


def test_smoothing_constant_is_separate_diagnostic(fast_model):
    # the t^-alpha smoothing form genuinely exceeds 1; it must not be folded
    # into the growth constant
    c = estimate_smoothing_constant(fast_model.split, 200, seed=3)
    assert c > 1.0


def test_dump_bound_ratios(tmp_path, fast_model):
    path = tmp_path / "ratios.csv"
    dump_bound_ratios(fast_model.split, path, sample_count=50, seed=0)
    lines = path.read_text().splitlines()
    assert lines[0] == "block,lambda,t,alpha,ratio"
    assert len(lines) > 50  # several blocks per sample
    ratios = [float(line.split(",")[-1]) for line in lines[1:]]
    assert max(ratios) <= 1.0 + 1e-12
