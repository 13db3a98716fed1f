"""The m-dimensional reduced system on the kernel block.

Kernel states are handled as coordinate vectors in the kernel eigenbasis
(grid states in the kernel block are accepted and converted).  The reduced
vector field is

    F(w) = -(A - lam) w + P2 f~(w + xi(w)),

evaluated through the manifold solver; for one-dimensional kernels the
solver's correction can be tabulated over an anchor interval and spline
interpolated, which makes trajectory integration and margin sampling cheap
while equilibrium refinement stays on exact evaluations.

The dissipativity constants follow the resonance margin: delta is 40% of the
smaller declared level, c0 = m_L1 * delta / 2 with m_L1 the minimal L1 norm
on the kernel unit sphere, R0 is the searched saturation scale, and the outer
radius R_lam = C1 / (lam* - lam) comes from the Gronwall bound with
C1 = f_inf times the largest L1/L2 ratio on the kernel block.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DivergenceDetectedError, InvalidArgumentError
from .manifold import ManifoldMap, xi_bound
from .nonlinearity import Nonlinearity, find_saturation_scale, nemitski
from .operator import SpectralSplit

__all__ = [
    "ReducedField",
    "ReducedConstants",
    "AnnulusBounds",
    "reduced_field",
    "field_jacobian",
    "integrate_reduced",
    "find_equilibria",
    "reduced_constants",
    "annulus_bounds",
    "annulus_check",
    "dissipative_radius",
    "export_equilibria_csv",
]

_OVERFLOW_GUARD = 1e8


class ReducedField:
    """Vector field of the flow restricted to the invariant manifold."""

    def __init__(self, solver: ManifoldMap):
        self.solver = solver
        self.split = solver.split
        self.lam = solver.lam
        self.dim = solver.kernel_dim
        self._nu2 = solver.nu2
        self._spline: CubicSpline | None = None
        self._spline_range: tuple[float, float] | None = None

    def as_coords(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape == (self.dim,):
            return w
        return self.solver.kernel_coords(w)

    # ----------------------------------------------------------- evaluations

    def correction_coeffs(self, w2: np.ndarray, exact: bool = False) -> np.ndarray:
        """Eigen-coefficients of xi at anchor coordinates w2."""
        if self._spline is not None and not exact and self.dim == 1:
            lo, hi = self._spline_range
            s = float(w2[0])
            if lo <= s <= hi:
                return self._spline(s)
        return self.solver.xi_coords(w2, coords=True)

    def __call__(self, w: np.ndarray, exact: bool = False) -> np.ndarray:
        """F(w) in kernel coordinates."""
        w2 = self.as_coords(w)
        c = self.correction_coeffs(w2, exact=exact)
        point = self.split.from_coeffs(c) + self.split.kernel_state(w2)
        fu = nemitski(self.solver.f, self.split.domain.x, point)
        proj = self.split.spacing * (fu @ self.split.basis[:, self.split.idx2])
        return -self._nu2 * w2 + proj

    def build_interpolant(
        self,
        s_max: float,
        core: float | None = None,
        num_core: int = 33,
        num_tail: int = 7,
        tol: float | None = None,
    ) -> None:
        """Tabulate xi over [-s_max, s_max] (m = 1 only) for bulk evaluation.

        The anchor grid is dense on the core interval (where the correction
        curves) and geometric on the saturated tails.  Anchors are solved in
        norm order so every solve warm-starts from its neighbor.
        """
        if self.dim != 1:
            raise InvalidArgumentError("interpolated corrections only supported for m = 1")
        if s_max <= 0:
            raise InvalidArgumentError(f"s_max must be positive, got {s_max}")
        a = min(s_max, 8.0 if core is None else float(core))
        grid = np.linspace(-a, a, num_core)
        if s_max > a * 1.01:
            tail = np.geomspace(a * 1.1, s_max, num_tail)
            grid = np.concatenate([-tail[::-1], grid, tail])
        order = np.argsort(np.abs(grid), kind="stable")
        table = np.empty((grid.size, self.split.eigenvalues.size))
        for i in order:
            table[i] = self.solver.solve(
                np.array([grid[i]]), tol=tol, coords=True
            ).coeffs[self.solver.i0].copy()
            table[i][self.split.idx2] = 0.0
        self._spline = CubicSpline(grid, table, axis=0)
        self._spline_range = (float(grid[0]), float(grid[-1]))

    @property
    def interpolant_span(self) -> float:
        return 0.0 if self._spline_range is None else self._spline_range[1]

    def drop_interpolant(self) -> None:
        self._spline = None
        self._spline_range = None


def reduced_field(field: ReducedField, w: np.ndarray) -> np.ndarray:
    return field(w)


def field_jacobian(field: ReducedField, w2: np.ndarray, exact: bool = True) -> np.ndarray:
    """Central-difference Jacobian of the reduced field at coordinates w2.

    xi is only Lipschitz in general, so derivatives are finite differences
    with step 1e-6 * (1 + |w|).
    """
    w2 = field.as_coords(w2)
    m = w2.size
    step = 1e-6 * (1.0 + float(np.linalg.norm(w2)))
    jac = np.empty((m, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = step
        jac[:, j] = (field(w2 + e, exact=exact) - field(w2 - e, exact=exact)) / (2.0 * step)
    return jac


def integrate_reduced(
    field: ReducedField,
    w0: np.ndarray,
    horizon: float,
    dt: float,
    exact: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4 on the reduced field; returns (times, coordinates)."""
    if dt <= 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    w = field.as_coords(w0).copy()
    steps = max(1, int(round(horizon / dt)))
    times = dt * np.arange(steps + 1)
    out = np.empty((steps + 1, w.size))
    out[0] = w
    for i in range(steps):
        k1 = field(w, exact=exact)
        k2 = field(w + 0.5 * dt * k1, exact=exact)
        k3 = field(w + 0.5 * dt * k2, exact=exact)
        k4 = field(w + dt * k3, exact=exact)
        w = w + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(w)) or np.linalg.norm(w) > _OVERFLOW_GUARD:
            raise DivergenceDetectedError(
                f"reduced trajectory blew past the overflow guard at t = {times[i + 1]:.6g}"
            )
        out[i + 1] = w
    return times, out


def find_equilibria(
    field: ReducedField,
    guesses: Sequence[np.ndarray],
    tol: float = 1e-9,
    max_iter: int = 40,
) -> list[np.ndarray]:
    """Newton roots of the reduced field, deduplicated within 10*tol.

    Guesses that fail to converge are dropped; a singular Jacobian skips the
    guess.  An empty return is a finding, not an error.
    """
    if len(guesses) == 0:
        raise InvalidArgumentError("need at least one guess")
    roots: list[np.ndarray] = []
    for guess in guesses:
        w = field.as_coords(guess).astype(float).copy()
        converged = False
        for _ in range(max_iter):
            r = field(w, exact=True)
            if np.linalg.norm(r) <= tol:
                converged = True
                break
            jac = field_jacobian(field, w)
            try:
                delta = np.linalg.solve(jac, -r)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(delta)):
                break
            # damped halving keeps resonant flat landscapes in check
            lam_damp = 1.0
            base = float(np.linalg.norm(r))
            for _ in range(30):
                trial = w + lam_damp * delta
                if np.linalg.norm(field(trial, exact=True)) < base:
                    break
                lam_damp *= 0.5
            w = w + lam_damp * delta
        if not converged:
            continue
        if all(np.linalg.norm(w - r0) > 10.0 * tol * (1.0 + np.linalg.norm(w)) for r0 in roots):
            roots.append(w)
    return roots


@dataclass(frozen=True)
class ReducedConstants:
    """Model-level dissipativity data (independent of lam)."""

    l1_min: float     # min ‖v‖_L1 over the kernel unit sphere
    l1_max: float     # max ‖v‖_L1 over the kernel unit sphere
    delta: float      # 0.4 * min(f_plus, f_minus)
    c0: float         # l1_min * delta / 2
    R0: float         # saturation scale s0 from the margin search
    R1: float         # L2 radius bounding xi (from the closed-form bound)
    C1: float         # f_inf * l1_max
    f_inf: float


@dataclass(frozen=True)
class AnnulusBounds:
    """Per-lam annulus data for the positively invariant shell."""

    R0: float
    c0: float
    eta: float        # lam* - lam
    r_lam: float      # inner radius (nan when no nonempty annulus certified)
    R_lam: float      # outer radius C1 / eta
    C1: float

    @property
    def exists(self) -> bool:
        return np.isfinite(self.r_lam) and self.R0 < self.r_lam <= self.R_lam


def _kernel_l1_range(split: SpectralSplit, samples: int = 256, seed: int = 0) -> tuple[float, float]:
    """Extremes of ‖v‖_L1 over the kernel-block unit L2 sphere."""
    kb = split.kernel_basis
    h = split.spacing
    m = kb.shape[1]
    if m == 1:
        val = h * float(np.abs(kb[:, 0]).sum())
        return val, val
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((samples, m))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    norms = h * np.abs(dirs @ kb.T).sum(axis=1)
    return float(norms.min()), float(norms.max())


def reduced_constants(
    split: SpectralSplit,
    f: Nonlinearity,
    margin_pairs: int = 40,
    seed: int = 0,
) -> ReducedConstants:
    """Dissipativity constants from the resonance margin and L1/L2 geometry."""
    level = min(f.f_plus, f.f_minus)
    if level <= 0:
        raise InvalidArgumentError(
            "reduced constants need positive declared levels f_plus, f_minus"
        )
    l1_min, l1_max = _kernel_l1_range(split)
    delta = 0.4 * level
    c0 = 0.5 * l1_min * delta
    shifted = split.eigenvalues + split.a_shift
    off_kernel = np.concatenate(
        [shifted[split.idx1], shifted[split.idx3]]
    )
    r1 = xi_bound(split, f) / math.sqrt(float(off_kernel.min()))
    s0 = find_saturation_scale(
        f, split, radius=r1, epsilon=0.5 * l1_min * delta, pairs=margin_pairs, seed=seed
    )
    f_inf = f.sup_bound(split.domain.x)
    return ReducedConstants(
        l1_min=l1_min,
        l1_max=l1_max,
        delta=delta,
        c0=c0,
        R0=s0,
        R1=r1,
        C1=f_inf * l1_max,
        f_inf=f_inf,
    )


def dissipative_radius(lam: float, lam_star: float, c1: float) -> float:
    """Gronwall outer radius R_lam = C1 / (lam* - lam), for lam < lam*."""
    if lam >= lam_star:
        raise InvalidArgumentError(f"need lam < lam*, got lam = {lam}, lam* = {lam_star}")
    if c1 <= 0:
        raise InvalidArgumentError(f"C1 must be positive, got {c1}")
    return c1 / (lam_star - lam)


def _sphere_margin(
    field: ReducedField, consts: ReducedConstants, radius: float, dirs: np.ndarray
) -> float:
    worst = np.inf
    for d in dirs:
        w = radius * d
        val = 2.0 * float(np.dot(field(w), w)) - consts.c0 * radius
        worst = min(worst, val)
    return worst


def annulus_bounds(
    field: ReducedField,
    consts: ReducedConstants,
    dirs_per_radius: int = 8,
    radial_steps: int = 20,
    seed: int = 0,
) -> AnnulusBounds:
    """Annulus radii for the field's lam (which must sit below lam*).

    The inner radius uses the analytic formula sqrt(l1_min delta R0 / (4 eta))
    when it clears R0, and otherwise the largest sampled radius in
    [R0, R_lam] whose margin stays nonnegative (the spec's measured-theta1
    reading); nan when even that fails.
    """
    lam_star = field.split.lambda_star
    eta = lam_star - field.lam
    if eta <= 0:
        raise InvalidArgumentError("annulus bounds require lam < lam*")
    big_r = dissipative_radius(field.lam, lam_star, consts.C1)
    rng = np.random.default_rng(seed)
    m = field.dim
    if m == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        dirs = rng.standard_normal((dirs_per_radius, m))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    r_formula = math.sqrt(consts.l1_min * consts.delta * consts.R0 / (4.0 * eta))
    if consts.R0 < r_formula <= big_r:
        r_lam = r_formula
    else:
        r_lam = math.nan
        if consts.R0 < big_r:
            radii = np.geomspace(consts.R0 * 1.0001, big_r, radial_steps)
            last_pass = math.nan
            for r in radii:
                if _sphere_margin(field, consts, float(r), dirs) >= 0.0:
                    last_pass = float(r)
                else:
                    break
            # back off slightly: the scan certifies discrete radii only
            r_lam = 0.95 * last_pass if np.isfinite(last_pass) else math.nan
            if np.isfinite(r_lam) and r_lam <= consts.R0:
                r_lam = math.nan
    return AnnulusBounds(
        R0=consts.R0, c0=consts.c0, eta=eta, r_lam=r_lam, R_lam=big_r, C1=consts.C1
    )


def annulus_check(
    field: ReducedField,
    bounds: AnnulusBounds,
    samples: int,
    seed: int = 0,
    outer: float | None = None,
) -> float:
    """Minimum of d/dt |w|^2 - c0 |w| over samples in the annulus shell.

    d/dt |w|^2 is evaluated as 2 <F(w), w>.  Samples are drawn between R0 and
    ``outer`` (default: the certified inner radius r_lam for lam < lam*, or
    3 R0 for the lam >= lam* case where the growth holds unboundedly).
    """
    if samples < 1:
        raise InvalidArgumentError(f"samples must be >= 1, got {samples}")
    hi = outer
    if hi is None:
        hi = bounds.r_lam if np.isfinite(bounds.r_lam) else 3.0 * bounds.R0
    if not hi > bounds.R0:
        raise InvalidArgumentError(
            f"empty sampling shell: outer radius {hi} does not exceed R0 = {bounds.R0}"
        )
    rng = np.random.default_rng(seed)
    m = field.dim
    worst = np.inf
    for _ in range(samples):
        r = rng.uniform(bounds.R0, hi)
        d = rng.standard_normal(m)
        d /= np.linalg.norm(d)
        w = r * d
        val = 2.0 * float(np.dot(field(w), w)) - bounds.c0 * r
        worst = min(worst, val)
    return float(worst)


def export_equilibria_csv(
    rows: Sequence[tuple[float, float, float, float]], path: str | Path
) -> None:
    """CSV rows (lambda, s, residual, margin)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "s", "residual", "margin"])
        for lam, s, resid, margin in rows:
            writer.writerow([f"{lam:.12g}", f"{s:.12g}", f"{resid:.12g}", f"{margin:.12g}"])
