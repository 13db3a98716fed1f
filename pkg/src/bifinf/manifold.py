"""Weighted trajectory space and the Lyapunov-Perron fixed point.

A trajectory lives on a uniform symmetric time grid [-T, T] and is stored by
its eigenbasis coefficients; the ambient norm is the weighted sup norm
sup_t e^{-mu |t|} ‖u(t)‖_alpha with mu strictly between beta/4 and 3 beta/4.

The map G combines four pieces (kernel propagation of the anchor w, the
kernel integral from 0, the causal block-3 integral from -T, and the
anti-causal block-1 integral from +T) and is a contraction with factor
F_mu * L_f when the smallness gate passes.  Its fixed point u_w is the unique
full solution with P2 u_w(0) = w; the manifold correction is
xi(w) = (P1 + P3) u_w(0) and the manifold point is w + xi(w).

Solves for nearby anchors are warm-started from a small cache: the kernel
term is linear in w, so shifting a cached fixed point by the propagated
anchor difference lands within a few contraction sweeps of the new fixed
point.  This is the cache the reduced-field evaluation leans on.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    GateRefusedError,
    HorizonTooShortError,
    InvalidArgumentError,
    NonConvergenceError,
)
from .nonlinearity import Nonlinearity, SmallnessGate, compute_F_mu, nemitski
from .operator import SpectralSplit
from .quadrature import convolve_causal, decay_tail_integral

__all__ = [
    "WeightedTrajectory",
    "ManifoldMap",
    "lyapunov_perron_apply",
    "solve_fixed_point",
    "xi",
    "xi_bound",
    "manifold_point",
    "random_trajectory",
    "measure_contraction",
    "export_manifold_samples",
]


@dataclass
class WeightedTrajectory:
    """Time-sampled path in eigenbasis coefficients with weight mu."""

    split: SpectralSplit
    times: np.ndarray
    coeffs: np.ndarray  # (n_t, n)
    weight: float

    @property
    def states(self) -> np.ndarray:
        """Grid-space states, one row per time sample."""
        return self.split.from_coeffs(self.coeffs)

    def state(self, j: int) -> np.ndarray:
        return self.split.from_coeffs(self.coeffs[j])

    def state_at_zero(self) -> np.ndarray:
        j = int(np.argmin(np.abs(self.times)))
        return self.split.from_coeffs(self.coeffs[j])

    def copy(self) -> "WeightedTrajectory":
        return WeightedTrajectory(self.split, self.times, self.coeffs.copy(), self.weight)


class ManifoldMap:
    """Lyapunov-Perron solver for one parameter value lam in J.

    Holds the discretized time grid, the per-block quadrature data, the
    smallness gate, the iteration log of the last solve and a warm-start
    cache of recent fixed points.
    """

    def __init__(
        self,
        split: SpectralSplit,
        f: Nonlinearity,
        lam: float,
        gate: SmallnessGate,
        mu: float | None = None,
        horizon: float | None = None,
        time_step: float = 0.05,
        tol: float = 1e-9,
        max_sweeps: int = 120,
        tail_tol: float = 1e-3,
        cache_size: int = 24,
    ):
        lo, hi = split.interval
        if not lo < lam < hi:
            raise InvalidArgumentError(
                f"lambda = {lam} outside the admissible window J = ({lo:.8g}, {hi:.8g})"
            )
        if not gate.passed:
            raise GateRefusedError(
                f"smallness gate failed: F_mu * L_f = {gate.product:.6g} >= 1", gate.product
            )
        if time_step <= 0 or tol <= 0:
            raise InvalidArgumentError("time_step and tol must be positive")
        self.split = split
        self.f = f
        self.lam = float(lam)
        self.gate = gate
        self.mu = 0.5 * split.beta if mu is None else float(mu)
        if not 0.25 * split.beta < self.mu < 0.75 * split.beta:
            raise InvalidArgumentError(
                f"mu = {self.mu} outside (beta/4, 3 beta/4) = "
                f"({0.25 * split.beta}, {0.75 * split.beta})"
            )
        self.tol = float(tol)
        self.max_sweeps = int(max_sweeps)
        self.tail_tol = float(tail_tol)

        target_T = 40.0 / split.beta if horizon is None else float(horizon)
        n_half = max(2, int(math.ceil(target_T / time_step)))
        self.dt = float(time_step)
        self.horizon = n_half * self.dt
        self.times = self.dt * np.arange(-n_half, n_half + 1)
        self.i0 = n_half

        ev = split.eigenvalues
        self.nu1 = ev[split.idx1] - self.lam
        self.nu2 = ev[split.idx2] - self.lam
        self.nu3 = ev[split.idx3] - self.lam
        self.alpha_weights = (ev + split.a_shift) ** split.alpha
        self.envelope = np.exp(-self.mu * np.abs(self.times))
        self.kernel_prop = np.exp(-np.outer(self.times, self.nu2))  # (n_t, m)

        x = split.domain.x
        self.m_f = split.domain.norm(np.asarray(f.bound(x), dtype=float))
        self._check_horizon()

        self.residual_log: list[float] = []
        self._cache: list[tuple[np.ndarray, np.ndarray]] = []
        self._cache_size = int(cache_size)
        self.f_mu = compute_F_mu(split.growth_constant, split.beta, self.mu, split.alpha)

    # ------------------------------------------------------------------ basics

    @property
    def kernel_dim(self) -> int:
        return self.split.multiplicity

    def _check_horizon(self) -> None:
        """Weighted book-keeping bound on the truncated tails.

        The tail integrands are f-values, bounded by g, so the discarded mass
        beyond the window is at most M * ‖g‖ * Q(t + T) and is worst, after
        weighting, at t = -T.
        """
        split = self.split
        rate = 0.75 * split.beta
        bound = (
            math.exp(-self.mu * self.horizon)
            * split.growth_constant
            * self.m_f
            * decay_tail_integral(rate, split.alpha, 0.0)
        )
        self.tail_bound = bound
        if bound > self.tail_tol:
            base = split.growth_constant * self.m_f * decay_tail_integral(rate, split.alpha, 0.0)
            suggested = math.log(max(base, 1e-300) / self.tail_tol) / self.mu
            raise HorizonTooShortError(
                f"weighted tail bound {bound:.3e} exceeds tolerance {self.tail_tol:.1e}",
                suggested_horizon=1.05 * suggested,
            )

    def kernel_coords(self, w: np.ndarray, tol: float = 1e-8) -> np.ndarray:
        """Coordinates of a kernel-block state; rejects anything outside it."""
        w = np.asarray(w, dtype=float)
        if not self.split.in_kernel(w, tol=tol):
            raise InvalidArgumentError("anchor w is not in the kernel block within tolerance")
        return self.split.kernel_coords(w)

    def weighted_norm(self, coeffs: np.ndarray) -> float:
        """sup_t e^{-mu |t|} ‖ . ‖_alpha of a coefficient trajectory."""
        norms = np.sqrt(np.sum((coeffs * self.alpha_weights) ** 2, axis=1))
        return float(np.max(self.envelope * norms))

    def alpha_norm_state(self, u: np.ndarray) -> float:
        c = self.split.to_coeffs(u)
        return float(np.linalg.norm(self.alpha_weights * c))

    def initial_trajectory(self, w2: np.ndarray) -> WeightedTrajectory:
        """u0(t) = e^{-A2 t} w, exact for f == 0."""
        coeffs = np.zeros((self.times.size, self.split.eigenvalues.size))
        coeffs[:, self.split.idx2] = self.kernel_prop * w2
        return WeightedTrajectory(self.split, self.times, coeffs, self.mu)

    # ------------------------------------------------------------- the operator

    def apply(self, w2: np.ndarray, traj: WeightedTrajectory) -> WeightedTrajectory:
        """One application of the integral operator G at anchor coordinates w2."""
        if traj.coeffs.shape != (self.times.size, self.split.eigenvalues.size):
            raise InvalidArgumentError("trajectory grid does not match this solver")
        split = self.split
        u = traj.coeffs @ split.basis.T
        fu = nemitski(self.f, split.domain.x, u)
        cf = split.spacing * (fu @ split.basis)

        out = np.zeros_like(traj.coeffs)
        i0 = self.i0
        idx1, idx2, idx3 = split.idx1, split.idx2, split.idx3

        out[:, idx2] = self.kernel_prop * w2
        c2 = cf[:, idx2]
        out[i0:, idx2] += convolve_causal(self.nu2, self.dt, c2[i0:])
        back = convolve_causal(-self.nu2, self.dt, c2[: i0 + 1][::-1])
        out[: i0 + 1, idx2] -= back[::-1]

        if idx3.size:
            out[:, idx3] = convolve_causal(self.nu3, self.dt, cf[:, idx3])
        if idx1.size:
            anti = convolve_causal(-self.nu1, self.dt, cf[:, idx1][::-1])
            out[:, idx1] = -anti[::-1]
        return WeightedTrajectory(split, self.times, out, self.mu)

    # ------------------------------------------------------------- fixed point

    def _warm_start(self, w2: np.ndarray) -> WeightedTrajectory:
        if not self._cache:
            return self.initial_trajectory(w2)
        dists = [float(np.linalg.norm(w2 - key)) for key, _ in self._cache]
        k = int(np.argmin(dists))
        key, coeffs = self._cache[k]
        if dists[k] > 4.0 * (1.0 + np.linalg.norm(w2)):
            return self.initial_trajectory(w2)
        warm = coeffs.copy()
        warm[:, self.split.idx2] += self.kernel_prop * (w2 - key)
        return WeightedTrajectory(self.split, self.times, warm, self.mu)

    def _remember(self, w2: np.ndarray, coeffs: np.ndarray) -> None:
        for k, (key, _) in enumerate(self._cache):
            if np.linalg.norm(key - w2) <= 1e-12 * (1.0 + np.linalg.norm(w2)):
                self._cache[k] = (w2.copy(), coeffs.copy())
                return
        self._cache.append((w2.copy(), coeffs.copy()))
        if len(self._cache) > self._cache_size:
            self._cache.pop(0)

    def clear_cache(self) -> None:
        self._cache.clear()

    def solve(
        self,
        w: np.ndarray,
        tol: float | None = None,
        max_iter: int | None = None,
        coords: bool = False,
    ) -> WeightedTrajectory:
        """Fixed point u_w of G by contraction iteration with warm start."""
        w2 = np.asarray(w, dtype=float) if coords else self.kernel_coords(w)
        tol = self.tol if tol is None else float(tol)
        limit = self.max_sweeps if max_iter is None else int(max_iter)
        traj = self._warm_start(w2)
        self.residual_log = []
        residual = np.inf
        for _ in range(limit):
            nxt = self.apply(w2, traj)
            residual = self.weighted_norm(nxt.coeffs - traj.coeffs)
            self.residual_log.append(residual)
            traj = nxt
            if residual <= tol:
                self._remember(w2, traj.coeffs)
                return traj
        raise NonConvergenceError(
            f"fixed point did not reach tol = {tol:.1e} in {limit} sweeps "
            f"(last residual {residual:.3e})",
            residual=float(residual),
            iterations=limit,
        )

    # ------------------------------------------------------------- derived maps

    def xi_coords(self, w: np.ndarray, coords: bool = False) -> np.ndarray:
        traj = self.solve(w, coords=coords)
        c0 = traj.coeffs[self.i0].copy()
        c0[self.split.idx2] = 0.0
        return c0

    def xi(self, w: np.ndarray, coords: bool = False) -> np.ndarray:
        """Correction xi(w) in Y1 + Y3, as a grid state."""
        return self.split.from_coeffs(self.xi_coords(w, coords=coords))

    def point(self, w: np.ndarray) -> np.ndarray:
        """Manifold point w + xi(w)."""
        w = np.asarray(w, dtype=float)
        return w + self.xi(w)

    def distance(self, u: np.ndarray) -> float:
        """alpha-norm distance of a full state to the manifold graph."""
        u = np.asarray(u, dtype=float)
        w = self.split.project(2, u)
        rest = u - w
        return self.alpha_norm_state(rest - self.xi(w))

    def contraction_bound(self) -> float:
        return self.f_mu * self.gate.l_f


# ------------------------------------------------------------ free functions


def lyapunov_perron_apply(
    solver: ManifoldMap, w: np.ndarray, traj: WeightedTrajectory
) -> WeightedTrajectory:
    """G(u) for anchor w (grid state in the kernel block)."""
    return solver.apply(solver.kernel_coords(w), traj)


def solve_fixed_point(
    solver: ManifoldMap, w: np.ndarray, tol: float | None = None, max_iter: int | None = None
) -> WeightedTrajectory:
    return solver.solve(w, tol=tol, max_iter=max_iter)


def xi(solver: ManifoldMap, w: np.ndarray) -> np.ndarray:
    return solver.xi(w)


def manifold_point(solver: ManifoldMap, w: np.ndarray) -> np.ndarray:
    return solver.point(w)


def xi_bound(split: SpectralSplit, f: Nonlinearity, growth_constant: float | None = None) -> float:
    """Closed-form bound M * M_f * int_0^inf (1 + s^-alpha) e^{-(3/4) beta s} ds.

    M_f is the L2 norm of the pointwise bound g on the grid; the integral is
    1/(0.75 beta) + Gamma(1 - alpha) / (0.75 beta)^(1 - alpha).
    """
    m = split.growth_constant if growth_constant is None else float(growth_constant)
    m_f = split.domain.norm(np.asarray(f.bound(split.domain.x), dtype=float))
    return m * m_f * decay_tail_integral(0.75 * split.beta, split.alpha, 0.0)


def random_trajectory(
    solver: ManifoldMap, rng: np.random.Generator, amplitude: float = 1.0, modes: int = 12
) -> WeightedTrajectory:
    """Smooth random element of the weighted space (for contraction probes).

    Low-order Fourier time profiles under a sub-critical growth envelope,
    spread over a random subset of eigenmodes.
    """
    n = solver.split.eigenvalues.size
    n_t = solver.times.size
    coeffs = np.zeros((n_t, n))
    chosen = rng.choice(n, size=min(modes, n), replace=False)
    t = solver.times
    env = np.exp(rng.uniform(0.0, 0.9) * solver.mu * np.abs(t))
    for k in chosen:
        omega = rng.uniform(0.0, 1.5)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        coeffs[:, k] = rng.normal(0.0, amplitude) * np.cos(omega * t + phase) * env
    scale = solver.weighted_norm(coeffs)
    if scale > 0:
        coeffs *= amplitude / scale
    return WeightedTrajectory(solver.split, solver.times, coeffs, solver.mu)


def measure_contraction(
    solver: ManifoldMap,
    pairs: int,
    rng: np.random.Generator,
    amplitude: float = 1.0,
    anchor_scale: float = 1.0,
) -> float:
    """Worst measured ratio ‖G u1 - G u2‖_mu / ‖u1 - u2‖_mu over random pairs."""
    worst = 0.0
    m = solver.kernel_dim
    for _ in range(pairs):
        w2 = anchor_scale * rng.standard_normal(m)
        u1 = random_trajectory(solver, rng, amplitude=amplitude)
        u2 = random_trajectory(solver, rng, amplitude=amplitude)
        g1 = solver.apply(w2, u1)
        g2 = solver.apply(w2, u2)
        den = solver.weighted_norm(u1.coeffs - u2.coeffs)
        if den == 0.0:
            continue
        worst = max(worst, solver.weighted_norm(g1.coeffs - g2.coeffs) / den)
    return worst


def export_manifold_samples(
    solver: ManifoldMap, anchors: np.ndarray, path: str | Path
) -> None:
    """CSV of (anchor coordinates, |w|, ‖xi(w)‖_alpha) for plotting the graph."""
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        m = solver.kernel_dim
        writer.writerow([f"w{j}" for j in range(m)] + ["w_norm", "xi_alpha_norm"])
        for w2 in anchors:
            c = solver.xi_coords(w2, coords=True)
            xi_norm = float(np.linalg.norm(solver.alpha_weights * c))
            writer.writerow(
                [f"{v:.12g}" for v in w2]
                + [f"{float(np.linalg.norm(w2)):.12g}", f"{xi_norm:.12g}"]
            )
