"""Bounded nonlinearities f(x, s), their Nemitski operators and the gate.

A Nonlinearity carries, besides the evaluator, the data the theory consumes:
a pointwise bound g(x) with finite L2 and sup norms, declared asymptotic
levels f_plus/f_minus (the saturation values entering the resonance margin),
and a pointwise Lipschitz field l(x).  The levels are declared rather than
inferred: extracting a liminf from a black-box evaluator is ill-posed.

The builtin family is ``amplitude * tanh(s) * sech(x)``: odd, saturating,
with g = amplitude * sech integrable and the margin inequality satisfied
against kernel directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import InvalidArgumentError, NumericFailureError
from .operator import SpectralSplit
from .semigroup import FractionalScale

__all__ = [
    "Nonlinearity",
    "SmallnessGate",
    "make_nonlinearity",
    "nemitski",
    "estimate_lipschitz",
    "compute_F_mu",
    "check_gate",
    "landesman_lazer_margin",
    "find_saturation_scale",
]


@dataclass(frozen=True)
class Nonlinearity:
    """f(x, s) together with its bound, levels and Lipschitz field."""

    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    bound: Callable[[np.ndarray], np.ndarray]          # g(x) >= |f(x, s)|
    lipschitz_field: Callable[[np.ndarray], np.ndarray]  # l(x)
    f_plus: float
    f_minus: float
    name: str = "custom"
    slope: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None  # df/ds
    antiderivative: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __call__(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        return self.evaluator(x, s)

    def sup_bound(self, x: np.ndarray) -> float:
        """f_infinity = sup |f| over the sampled grid."""
        return float(np.max(self.bound(x)))

    @staticmethod
    def tanh_sech(amplitude: float) -> "Nonlinearity":
        """amplitude * tanh(s) * sech(x); levels declared at the amplitude."""
        if amplitude < 0:
            raise InvalidArgumentError(f"amplitude must be nonnegative, got {amplitude}")
        c = float(amplitude)
        return Nonlinearity(
            evaluator=lambda x, s: c * np.tanh(s) / np.cosh(x),
            bound=lambda x: c / np.cosh(x),
            lipschitz_field=lambda x: c / np.cosh(x),
            f_plus=c,
            f_minus=c,
            name="tanh_sech",
            slope=lambda x, s: c / (np.cosh(x) * np.cosh(s) ** 2),
            antiderivative=lambda x, s: c * (np.logaddexp(s, -s) - math.log(2.0)) / np.cosh(x),
        )

    @staticmethod
    def constant(level: float) -> "Nonlinearity":
        """f == level, independent of x and s (test model; g is constant)."""
        c = float(level)
        return Nonlinearity(
            evaluator=lambda x, s: np.broadcast_to(np.float64(c), np.broadcast_shapes(x.shape, np.shape(s))).copy(),
            bound=lambda x: np.full_like(x, abs(c)),
            lipschitz_field=lambda x: np.zeros_like(x),
            f_plus=c,
            f_minus=c,
            name="constant",
            slope=lambda x, s: np.zeros(np.broadcast_shapes(x.shape, np.shape(s))),
            antiderivative=lambda x, s: c * np.asarray(s) * np.ones_like(x),
        )

    @staticmethod
    def zero() -> "Nonlinearity":
        """The linear test model f == 0 (gate product vanishes)."""
        z = Nonlinearity.constant(0.0)
        return Nonlinearity(
            evaluator=z.evaluator,
            bound=z.bound,
            lipschitz_field=z.lipschitz_field,
            f_plus=0.0,
            f_minus=0.0,
            name="zero",
            slope=z.slope,
            antiderivative=z.antiderivative,
        )

    @staticmethod
    def from_table(
        x: np.ndarray,
        s: np.ndarray,
        values: np.ndarray,
        f_plus: float,
        f_minus: float,
    ) -> "Nonlinearity":
        """Tabulated f on an (x, s) grid with bilinear interpolation.

        Queries outside the table clamp to the nearest edge, matching the
        saturating asymptotics the levels declare.
        """
        x = np.asarray(x, dtype=float)
        s = np.asarray(s, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.shape != (x.size, s.size):
            raise InvalidArgumentError(
                f"table shape {values.shape} does not match (len(x), len(s)) = {(x.size, s.size)}"
            )
        interp = RegularGridInterpolator((x, s), values, method="linear", bounds_error=False)
        g_node = np.max(np.abs(values), axis=1)
        ds = np.diff(s)
        l_node = np.max(np.abs(np.diff(values, axis=1)) / ds, axis=1)

        def ev(xq: np.ndarray, sq: np.ndarray) -> np.ndarray:
            xb, sb = np.broadcast_arrays(xq, sq)
            pts = np.stack(
                [np.clip(xb, x[0], x[-1]), np.clip(sb, s[0], s[-1])], axis=-1
            )
            return interp(pts)

        return Nonlinearity(
            evaluator=ev,
            bound=lambda xq: np.interp(xq, x, g_node),
            lipschitz_field=lambda xq: np.interp(xq, x, l_node),
            f_plus=float(f_plus),
            f_minus=float(f_minus),
            name="tabulated",
        )

    @staticmethod
    def from_csv(path: str | Path, f_plus: float, f_minus: float) -> "Nonlinearity":
        """CSV rows (x, s, f) on a full rectangular grid."""
        data = np.loadtxt(path, delimiter=",", comments="#")
        if data.ndim != 2 or data.shape[1] < 3:
            raise InvalidArgumentError(f"{path}: expected three CSV columns (x, s, f)")
        xs = np.unique(data[:, 0])
        ss = np.unique(data[:, 1])
        if xs.size * ss.size != data.shape[0]:
            raise InvalidArgumentError(f"{path}: rows do not form a full (x, s) grid")
        vals = np.full((xs.size, ss.size), np.nan)
        ix = np.searchsorted(xs, data[:, 0])
        isx = np.searchsorted(ss, data[:, 1])
        vals[ix, isx] = data[:, 2]
        return Nonlinearity.from_table(xs, ss, vals, f_plus=f_plus, f_minus=f_minus)


def make_nonlinearity(kind: str, **params) -> Nonlinearity:
    """Builtin registry used by the configuration layer."""
    if kind == "tanh_sech":
        return Nonlinearity.tanh_sech(params.get("amplitude", 0.1))
    if kind == "constant":
        return Nonlinearity.constant(params.get("level", 0.1))
    if kind == "zero":
        return Nonlinearity.zero()
    if kind == "tabulated":
        return Nonlinearity.from_csv(
            params["path"], f_plus=params["f_plus"], f_minus=params["f_minus"]
        )
    raise InvalidArgumentError(f"unknown nonlinearity kind '{kind}'")


def nemitski(f: Nonlinearity, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Pointwise image f(x, u(x)); raises on non-finite output values."""
    out = np.asarray(f(x, u), dtype=float)
    if not np.all(np.isfinite(out)):
        flat = np.flatnonzero(~np.isfinite(out).reshape(-1))
        node = int(flat[0] % x.size)
        raise NumericFailureError(
            f"nonlinearity produced a non-finite value at node {node} (x = {x[node]:.6g})",
            node=node,
        )
    return out


@dataclass(frozen=True)
class SmallnessGate:
    """Record of the contraction gate F_mu * L_f < 1."""

    f_mu: float
    l_f: float
    product: float

    @property
    def passed(self) -> bool:
        return self.product < 1.0


def compute_F_mu(m: float, beta: float, mu: float, alpha: float) -> float:
    """Closed form of the weighted-kernel constant F_mu.

    F_mu = M * [ 1/(mu - beta/4) + 1/(3 beta/4 - mu)
                 + Gamma(1 - alpha) / (3 beta/4 - mu)^(1 - alpha) ],
    the three integrals being int e^{-(mu-beta/4)s} ds and
    int (1 + s^-alpha) e^{-(3 beta/4 - mu)s} ds over (0, inf).
    """
    if beta <= 0:
        raise InvalidArgumentError(f"beta must be positive, got {beta}")
    if not 0.25 * beta < mu < 0.75 * beta:
        raise InvalidArgumentError(
            f"mu = {mu} outside the open interval (beta/4, 3*beta/4) = "
            f"({0.25 * beta}, {0.75 * beta})"
        )
    if not 0.0 <= alpha < 1.0:
        raise InvalidArgumentError(f"alpha must lie in [0, 1), got {alpha}")
    lo = mu - 0.25 * beta
    hi = 0.75 * beta - mu
    return m * (1.0 / lo + 1.0 / hi + math.gamma(1.0 - alpha) / hi ** (1.0 - alpha))


def check_gate(f_mu: float, l_f: float) -> SmallnessGate:
    if f_mu < 0 or l_f < 0:
        raise InvalidArgumentError(f"gate inputs must be nonnegative, got ({f_mu}, {l_f})")
    return SmallnessGate(f_mu=float(f_mu), l_f=float(l_f), product=float(f_mu * l_f))


def estimate_lipschitz(
    f: Nonlinearity,
    split: SpectralSplit,
    samples: int = 64,
    scale: FractionalScale | None = None,
    seed: int = 0,
) -> float:
    """Lipschitz constant of the Nemitski operator from the energy space to L2.

    The pointwise slope field is measured over sampled s-pairs per node; the
    induced operator-norm quotient sup ‖l * psi‖ / ‖Lambda^alpha psi‖ is then
    the top eigenvalue of a weighted quadratic form, found by power iteration.
    The returned value carries the spec's 1.05 safety factor.
    """
    if samples < 1:
        raise InvalidArgumentError(f"samples must be >= 1, got {samples}")
    op = split.operator
    x = op.domain.x
    rng = np.random.default_rng(seed)
    # s-grid: symmetric log-spaced plus random draws; adjacent secants bound
    # the local slope and the near-zero pair captures the tanh-type maximum.
    s_fixed = np.concatenate([[-1e-3, 0.0, 1e-3], np.geomspace(1e-2, 50.0, 12)])
    s_grid = np.unique(np.concatenate([s_fixed, -s_fixed, rng.uniform(-20, 20, samples)]))
    vals = np.stack([np.asarray(f(x, np.full_like(x, s)), dtype=float) for s in s_grid])
    secants = np.abs(np.diff(vals, axis=0)) / np.diff(s_grid)[:, None]
    l_node = secants.max(axis=0)
    if not np.any(l_node > 0):
        return 0.0

    # Quotient via the generalized eigenproblem max c' S c / c' W^2 c in the
    # eigenbasis, with S the weighted mass form and W the fractional weights.
    sc = scale or FractionalScale.for_split(split)
    nu = (split.eigenvalues + sc.a) ** sc.alpha
    h = op.domain.spacing
    basis = split.basis

    def quad_op(c: np.ndarray) -> np.ndarray:
        psi = basis @ (c / nu)
        return (h * (basis.T @ (l_node**2 * psi))) / nu

    c = rng.standard_normal(op.size)
    c /= np.linalg.norm(c)
    lam_max = 0.0
    for _ in range(100):
        d = quad_op(c)
        lam_new = float(np.dot(c, d))
        nrm = np.linalg.norm(d)
        if nrm == 0.0:
            return 0.0
        c = d / nrm
        if abs(lam_new - lam_max) <= 1e-12 * max(1.0, lam_new):
            lam_max = lam_new
            break
        lam_max = lam_new
    return 1.05 * math.sqrt(max(lam_max, 0.0))


def landesman_lazer_margin(
    f: Nonlinearity,
    split: SpectralSplit,
    v: np.ndarray,
    w: np.ndarray,
    s: float,
    kernel_tol: float = 1e-8,
) -> float:
    """Resonance margin int f(x, v + s w) w dx - (1/2) int (f+ w_+ + f- w_-) dx.

    ``w`` must lie in the kernel block; for s beyond the saturation scale the
    margin stays above -eps uniformly over bounded v (Landesman-Lazer).
    """
    if not split.in_kernel(w, tol=kernel_tol):
        raise InvalidArgumentError("w is not in the kernel block within tolerance")
    x = split.domain.x
    h = split.spacing
    fu = nemitski(f, x, v + s * w)
    lead = h * float(np.dot(fu, w))
    w_plus = np.maximum(w, 0.0)
    w_minus = np.maximum(-w, 0.0)
    ref = 0.5 * h * float(np.sum(f.f_plus * w_plus + f.f_minus * w_minus))
    return lead - ref


def _margin_worst_case(
    f: Nonlinearity,
    split: SpectralSplit,
    radius: float,
    s: float,
    rng: np.random.Generator,
    pairs: int,
) -> float:
    """Minimum sampled margin over v in the L2 ball and w in the kernel ball."""
    n = split.domain.nodes
    kb = split.kernel_basis
    m = kb.shape[1]
    worst = np.inf
    for j in range(pairs):
        t = rng.uniform(-1.0, 1.0, m)
        if np.linalg.norm(t) > 1.0:
            t /= np.linalg.norm(t) * rng.uniform(1.0, 2.0)
        w = kb @ t
        if j % 4 == 0:
            # kernel-aligned stress: v opposes the shift where w is largest
            v = -radius * (w / max(split.domain.norm(w), 1e-30))
        elif j % 4 == 1:
            c = rng.standard_normal(n) * np.exp(-0.05 * np.arange(n))  # smooth low-mode draw
            v = split.from_coeffs(c)
            v *= radius / max(split.domain.norm(v), 1e-30)
        else:
            c = rng.standard_normal(n)
            v = split.from_coeffs(c)
            v *= radius * rng.uniform(0.2, 1.0) / max(split.domain.norm(v), 1e-30)
        worst = min(worst, landesman_lazer_margin(f, split, v, w, s))
    return worst


def find_saturation_scale(
    f: Nonlinearity,
    split: SpectralSplit,
    radius: float,
    epsilon: float,
    pairs: int = 40,
    s_max: float = 400.0,
    seed: int = 0,
) -> float:
    """Search for s0 such that the margin stays above -epsilon for all s >= s0.

    Scans a geometric s-grid with randomized (v, w) batches (plus structured
    kernel-aligned stress directions) and returns the smallest grid point from
    which every larger tested s keeps the worst sampled margin above -epsilon,
    inflated by a 1.25 safety factor.  Raises NumericFailureError when even
    the largest tested s fails, which signals levels declared too high.
    """
    if radius < 0 or epsilon <= 0:
        raise InvalidArgumentError("radius must be >= 0 and epsilon > 0")
    rng = np.random.default_rng(seed)
    s_grid = np.geomspace(0.25, s_max, 28)
    ok = np.zeros(s_grid.size, dtype=bool)
    for i, s in enumerate(s_grid):
        ok[i] = _margin_worst_case(f, split, radius, float(s), rng, pairs) >= -epsilon
    if not ok[-1]:
        raise NumericFailureError(
            "margin stays below -epsilon at the largest tested s; "
            "declared asymptotic levels appear too high for this nonlinearity"
        )
    # smallest index from which the tail is all-ok
    idx = s_grid.size - 1
    while idx > 0 and ok[idx - 1]:
        idx -= 1
    return 1.25 * float(s_grid[idx])
