"""Full-system oracles: parabolic time stepping and elliptic Newton.

These paths never touch the manifold machinery, so they can validate it.
The parabolic scheme treats the stiff linear part implicitly (eigenvalues of
the discrete Laplacian reach 4/h^2) and the bounded nonlinearity explicitly;
Crank-Nicolson weighting of the linear part is optional and raises the order
to two when f == 0.  The elliptic solver is a damped Newton iteration on the
stationary equation with a diagonal Nemitski Jacobian, finite-differenced
per node.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded

from .errors import InvalidArgumentError, NonConvergenceError, NumericFailureError
from .manifold import ManifoldMap
from .nonlinearity import Nonlinearity, nemitski
from .operator import DiscreteOperator

__all__ = [
    "step_parabolic",
    "evolve",
    "EvolveResult",
    "elliptic_newton",
    "stationary_residual",
    "manifold_distance",
    "gradient_energy",
    "export_norm_history_csv",
]

_SCHEMES = ("semi_implicit", "crank_nicolson")


class _Stepper:
    """Pre-factorized one-step map for a fixed (op, f, lam, dt, scheme)."""

    def __init__(self, op: DiscreteOperator, f: Nonlinearity, lam: float, dt: float, scheme: str):
        if dt <= 0:
            raise InvalidArgumentError(f"dt must be positive, got {dt}")
        if scheme not in _SCHEMES:
            raise InvalidArgumentError(f"scheme must be one of {_SCHEMES}, got '{scheme}'")
        self.op = op
        self.f = f
        self.lam = float(lam)
        self.dt = float(dt)
        self.scheme = scheme
        w = dt if scheme == "semi_implicit" else 0.5 * dt
        ab = np.zeros((2, op.size))
        ab[0, 1:] = w * op.offdiagonal
        ab[1, :] = 1.0 + w * (op.diagonal - lam)
        try:
            self._chol = cholesky_banded(ab)
        except np.linalg.LinAlgError as exc:
            raise NumericFailureError(f"implicit-step factorization failed: {exc}") from exc
        self._w = w

    def __call__(self, u: np.ndarray) -> np.ndarray:
        fu = nemitski(self.f, self.op.domain.x, u)
        if self.scheme == "semi_implicit":
            rhs = u + self.dt * fu
        else:
            rhs = u - self._w * (self.op.apply(u) - self.lam * u) + self.dt * fu
        try:
            return cho_solve_banded((self._chol, False), rhs)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise NumericFailureError(f"implicit linear solve failed: {exc}") from exc


def step_parabolic(
    op: DiscreteOperator,
    f: Nonlinearity,
    lam: float,
    u: np.ndarray,
    dt: float,
    scheme: str = "semi_implicit",
) -> np.ndarray:
    """One IMEX step of u_t + (A - lam) u = f~(u)."""
    return _Stepper(op, f, lam, dt, scheme)(np.asarray(u, dtype=float))


@dataclass
class EvolveResult:
    times: np.ndarray
    states: np.ndarray       # sampled states, one row per sample
    l2_norms: np.ndarray
    energy_norms: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def evolve(
    op: DiscreteOperator,
    f: Nonlinearity,
    lam: float,
    u0: np.ndarray,
    horizon: float,
    dt: float,
    scheme: str = "semi_implicit",
    samples: int = 50,
) -> EvolveResult:
    """Repeated stepping with L2/energy norm history at ``samples`` times."""
    if horizon < 0:
        raise InvalidArgumentError(f"horizon must be nonnegative, got {horizon}")
    u = np.asarray(u0, dtype=float).copy()
    n_steps = int(round(horizon / dt)) if horizon > 0 else 0
    sample_idx = set(
        np.unique(np.linspace(0, n_steps, min(samples, n_steps + 1)).astype(int))
    )
    sample_idx.add(n_steps)  # the terminal state is always recorded
    stepper = _Stepper(op, f, lam, dt, scheme) if n_steps else None
    rows = [u.copy()]
    times = [0.0]
    for k in range(1, n_steps + 1):
        u = stepper(u)
        if k in sample_idx:
            rows.append(u.copy())
            times.append(k * dt)
    states = np.asarray(rows)
    h = op.domain.spacing
    l2 = np.sqrt(h * np.sum(states**2, axis=1))
    energy = np.sqrt(np.maximum(h * np.einsum("ij,ij->i", states, np.apply_along_axis(op.apply, 1, states)), 0.0))
    return EvolveResult(
        times=np.asarray(times), states=states, l2_norms=l2, energy_norms=energy
    )


def stationary_residual(op: DiscreteOperator, f: Nonlinearity, lam: float, u: np.ndarray) -> float:
    """L2 norm of (A - lam) u - f~(u)."""
    r = op.apply(u) - lam * u - nemitski(f, op.domain.x, u)
    return op.domain.norm(r)


def _nemitski_slope(f: Nonlinearity, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    if f.slope is not None:
        return np.asarray(f.slope(x, u), dtype=float)
    eps = 1e-6 * (1.0 + np.abs(u))
    return (np.asarray(f(x, u + eps), dtype=float) - np.asarray(f(x, u - eps), dtype=float)) / (2.0 * eps)


def elliptic_newton(
    op: DiscreteOperator,
    f: Nonlinearity,
    lam: float,
    u0: np.ndarray,
    tol: float = 1e-9,
    max_iter: int = 50,
) -> np.ndarray:
    """Damped Newton for the stationary equation (A - lam) u = f~(u).

    The Jacobian is tridiagonal: (A - lam) minus the diagonal pointwise slope
    of f (finite-differenced when no analytic slope is available).  Steps are
    halved up to 30 times; a numerically singular Jacobian or an exhausted
    budget raises with the last residual attached.
    """
    if tol <= 0:
        raise InvalidArgumentError(f"tol must be positive, got {tol}")
    x = op.domain.x
    u = np.asarray(u0, dtype=float).copy()
    h = op.domain
    probe = np.cos(np.arange(op.size))  # fixed direction for the condition probe
    probe /= h.norm(probe)
    res = op.apply(u) - lam * u - nemitski(f, x, u)
    res_norm = h.norm(res)
    for _ in range(max_iter):
        if res_norm <= tol:
            return u
        ab = np.zeros((3, op.size))
        ab[0, 1:] = op.offdiagonal
        ab[2, :-1] = op.offdiagonal
        ab[1, :] = op.diagonal - lam - _nemitski_slope(f, x, u)
        try:
            # inverse-power probe: a resonant linearization amplifies a
            # generic direction even when the Newton system is consistent
            amp = h.norm(solve_banded((1, 1), ab, probe))
            delta = solve_banded((1, 1), ab, -res)
        except np.linalg.LinAlgError as exc:
            raise NumericFailureError(f"Newton Jacobian solve failed: {exc}") from exc
        scale = float(np.max(np.abs(ab[1])) + 2.0 * np.max(np.abs(op.offdiagonal)))
        dn = h.norm(delta)
        if not np.isfinite(dn) or amp * scale > 1e12:
            raise NumericFailureError(
                "Newton Jacobian is numerically singular (resonant linearization)",
                residual=float(res_norm),
            )
        step = 1.0
        for _ in range(30):
            trial = u + step * delta
            trial_res = op.apply(trial) - lam * trial - nemitski(f, x, trial)
            trial_norm = h.norm(trial_res)
            if trial_norm < res_norm:
                break
            step *= 0.5
        else:
            raise NonConvergenceError(
                "Newton backtracking stalled", residual=float(res_norm)
            )
        u = u + step * delta
        res, res_norm = trial_res, trial_norm
    if res_norm <= tol:
        return u
    raise NonConvergenceError(
        f"elliptic Newton did not reach tol = {tol:.1e} in {max_iter} iterations",
        residual=float(res_norm),
        iterations=max_iter,
    )


def manifold_distance(u: np.ndarray, solver: ManifoldMap) -> float:
    """alpha-norm distance ‖(P1 + P3) u - xi(P2 u)‖ to the manifold graph."""
    return solver.distance(u)


def gradient_energy(op: DiscreteOperator, f: Nonlinearity, lam: float, u: np.ndarray) -> float:
    """Monitor E(u) = 1/2 ‖u‖_Y^2 - lam/2 |u|^2 - int F(x, u) dx.

    Requires the nonlinearity to carry its s-antiderivative F.  Along the
    parabolic flow this should be non-increasing (gradient structure); it is
    a diagnostic, not a certificate.
    """
    if f.antiderivative is None:
        raise InvalidArgumentError(f"nonlinearity '{f.name}' has no antiderivative")
    x = op.domain.x
    h = op.domain.spacing
    quad = h * float(np.dot(u, op.apply(u)))
    mass = h * float(np.dot(u, u))
    potential = h * float(np.sum(np.asarray(f.antiderivative(x, u), dtype=float)))
    return 0.5 * quad - 0.5 * lam * mass - potential


def export_norm_history_csv(result: EvolveResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "l2_norm", "energy_norm"])
        for t, a, b in zip(result.times, result.l2_norms, result.energy_norms):
            writer.writerow([f"{t:.12g}", f"{a:.12g}", f"{b:.12g}"])
