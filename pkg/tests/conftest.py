"""Shared model fixtures.

Two Poschl-Teller setups: a fast one (coarse grid and time step) for the
module tests that iterate a lot, and a full-quality one reserved for the
acceptance suite.  Both carry the single bound state at lambda* ~ 2 with the
essential-spectrum threshold at 3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

import bifinf as bf
from bifinf.bifurcation import BifurcationProblem


@dataclass
class Model:
    domain: bf.GridDomain
    op: bf.DiscreteOperator
    spectrum: bf.SpectrumData
    split: bf.SpectralSplit
    f: bf.Nonlinearity
    l_f: float
    f_mu: float
    gate: bf.SmallnessGate
    mu: float
    problem: BifurcationProblem

    @property
    def lambda_star(self) -> float:
        return self.split.lambda_star

    @property
    def phi(self) -> np.ndarray:
        return self.split.kernel_basis[:, 0]

    def solver(self, lam: float, **kw) -> bf.ManifoldMap:
        opts = dict(mu=self.mu, time_step=self.time_step, tol=1e-9)
        opts.update(kw)
        return bf.ManifoldMap(self.split, self.f, lam, self.gate, **opts)

    time_step: float = 0.1


def _build_model(half_width, nodes, amplitude, time_step, seed=0):
    domain = bf.build_domain(half_width, nodes)
    op = bf.assemble_operator(domain, bf.Potential.poschl_teller())
    spectrum = bf.compute_spectrum(op, 8)
    split = bf.spectral_split(spectrum, float(spectrum.eigenvalues[0]), seed=seed)
    f = bf.Nonlinearity.tanh_sech(amplitude)
    l_f = bf.estimate_lipschitz(f, split, seed=seed)
    mu = 0.5 * split.beta
    f_mu = bf.compute_F_mu(split.growth_constant, split.beta, mu, split.alpha)
    gate = bf.check_gate(f_mu, l_f)
    problem = BifurcationProblem(
        split,
        f,
        gate,
        solver_options=dict(mu=mu, time_step=time_step, tol=1e-9),
        seed=seed,
    )
    return Model(
        domain=domain,
        op=op,
        spectrum=spectrum,
        split=split,
        f=f,
        l_f=l_f,
        f_mu=f_mu,
        gate=gate,
        mu=mu,
        problem=problem,
        time_step=time_step,
    )


@pytest.fixture(scope="session")
def fast_model() -> Model:
    return _build_model(half_width=14.0, nodes=161, amplitude=0.1, time_step=0.1)


@pytest.fixture(scope="session")
def full_model() -> Model:
    return _build_model(half_width=16.0, nodes=257, amplitude=0.1, time_step=0.05)


@pytest.fixture(scope="session")
def fast_solver(fast_model) -> bf.ManifoldMap:
    """Shared solver at lambda* - 0.01 (fast profile)."""
    return fast_model.problem.solver(fast_model.lambda_star - 0.01)


@pytest.fixture(scope="session")
def zero_model() -> Model:
    """Linear test model: f == 0 on the fast grid."""
    m = _build_model(half_width=14.0, nodes=161, amplitude=0.0, time_step=0.1)
    f = bf.Nonlinearity.zero()
    problem = BifurcationProblem(
        m.split,
        f,
        bf.check_gate(m.f_mu, 0.0),
        solver_options=dict(mu=m.mu, time_step=0.1, tol=1e-9),
    )
    return Model(
        domain=m.domain,
        op=m.op,
        spectrum=m.spectrum,
        split=m.split,
        f=f,
        l_f=0.0,
        f_mu=m.f_mu,
        gate=bf.check_gate(m.f_mu, 0.0),
        mu=m.mu,
        problem=problem,
        time_step=0.1,
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
