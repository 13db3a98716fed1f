"""Discretized Schrodinger operator A = -d^2/dx^2 + V(x) on a truncated line.

The unbounded domain is replaced by a Dirichlet box: nodes are uniform on
[-L, L] and the second-order centered-difference Laplacian uses homogeneous
ghost values just outside the box, so the matrix is symmetric tridiagonal of
size n.  Bound states decay exponentially, which makes the truncation error
measurable by doubling L.

The discrete L2 inner product is ``h * sum(u * v)``; eigenfunctions returned
here are orthonormal in that product.  The three-way spectral split around a
target eigenvalue (below / at / above) carries everything downstream modules
need: the full eigenbasis, the projections, the gap constant and the growth
constant of the block semigroups.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import (
    AssumptionViolationError,
    InvalidArgumentError,
    NotAnEigenvalueError,
    NumericFailureError,
)

__all__ = [
    "GridDomain",
    "Potential",
    "DiscreteOperator",
    "SpectrumData",
    "SpectralSplit",
    "build_domain",
    "assemble_operator",
    "compute_spectrum",
    "spectral_split",
    "export_spectrum_csv",
    "export_operator_csv",
]


@dataclass(frozen=True)
class GridDomain:
    """Uniform grid on [-half_width, half_width]."""

    half_width: float
    nodes: int
    spacing: float
    x: np.ndarray = field(repr=False)

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """Discrete L2 inner product h * sum(u v)."""
        return float(self.spacing * np.dot(u, v))

    def norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(self.spacing) * np.linalg.norm(u))


def build_domain(half_width: float, nodes: int) -> GridDomain:
    """Uniform Dirichlet-box grid with ``nodes`` points on [-L, L]."""
    if not np.isfinite(half_width) or half_width <= 0:
        raise InvalidArgumentError(f"half_width must be positive, got {half_width}")
    if nodes < 3:
        raise InvalidArgumentError(f"need at least 3 nodes, got {nodes}")
    h = 2.0 * half_width / (nodes - 1)
    x = np.linspace(-half_width, half_width, nodes)
    return GridDomain(half_width=float(half_width), nodes=int(nodes), spacing=h, x=x)


@dataclass(frozen=True)
class Potential:
    """Bounded positive potential with a limit value at the box edge.

    ``evaluator`` maps node positions to V(x); ``a1 <= V <= a2`` must hold on
    every sampled node and V must be within ``tail_tol`` of ``v_inf`` at the
    truncation boundary (the essential-spectrum threshold is [v_inf, inf)).
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    a1: float
    a2: float
    v_inf: float
    name: str = "custom"
    tail_tol: float = 1e-6

    @staticmethod
    def poschl_teller(depth: float = 2.0, asymptote: float = 3.0) -> "Potential":
        """V(x) = asymptote - depth*sech(x)^2.

        With depth 2 this well has the single bound state asymptote - 1 with
        eigenfunction proportional to sech(x).
        """
        if asymptote - depth <= 0:
            raise InvalidArgumentError(
                f"well bottom must stay positive: asymptote-depth = {asymptote - depth}"
            )
        return Potential(
            evaluator=lambda x: asymptote - depth / np.cosh(x) ** 2,
            a1=asymptote - depth,
            a2=asymptote,
            v_inf=asymptote,
            name="poschl_teller",
        )

    @staticmethod
    def double_well(depth: float = 2.0, asymptote: float = 3.0, separation: float = 6.0) -> "Potential":
        """Two mirrored sech^2 wells; the lowest pair is near-degenerate."""
        # the wells overlap only through exponentially small tails
        floor = asymptote - depth * (1.0 + 1.0 / np.cosh(2.0 * separation) ** 2)
        if floor <= 0:
            raise InvalidArgumentError(
                f"well bottom must stay positive: V(+-separation) = {floor:.6g}"
            )

        def v(x: np.ndarray) -> np.ndarray:
            return asymptote - depth / np.cosh(x - separation) ** 2 - depth / np.cosh(x + separation) ** 2

        return Potential(
            evaluator=v,
            a1=floor,
            a2=asymptote,
            v_inf=asymptote,
            name="double_well",
        )

    @staticmethod
    def constant(level: float) -> "Potential":
        if level <= 0:
            raise InvalidArgumentError(f"constant potential must be positive, got {level}")
        return Potential(
            evaluator=lambda x: np.full_like(x, float(level)),
            a1=level,
            a2=level,
            v_inf=level,
            name="constant",
        )

    @staticmethod
    def from_table(x: Sequence[float], values: Sequence[float], tail_tol: float = 1e-3) -> "Potential":
        """Tabulated (x, V) pairs, linearly interpolated onto the grid."""
        xt = np.asarray(x, dtype=float)
        vt = np.asarray(values, dtype=float)
        if xt.ndim != 1 or xt.shape != vt.shape or xt.size < 2:
            raise InvalidArgumentError("potential table needs matching 1-D x and V columns")
        order = np.argsort(xt)
        xt, vt = xt[order], vt[order]
        v_inf = 0.5 * (vt[0] + vt[-1])
        return Potential(
            evaluator=lambda q: np.interp(q, xt, vt),
            a1=float(vt.min()),
            a2=float(vt.max()),
            v_inf=float(v_inf),
            name="tabulated",
            tail_tol=tail_tol,
        )

    @staticmethod
    def from_csv(path: str | Path, tail_tol: float = 1e-3) -> "Potential":
        data = np.loadtxt(path, delimiter=",", comments="#")
        if data.ndim != 2 or data.shape[1] < 2:
            raise InvalidArgumentError(f"{path}: expected two CSV columns (x, V)")
        return Potential.from_table(data[:, 0], data[:, 1], tail_tol=tail_tol)


@dataclass(frozen=True)
class DiscreteOperator:
    """Symmetric tridiagonal discretization of -d^2/dx^2 + V(x)."""

    domain: GridDomain
    potential: Potential
    diagonal: np.ndarray = field(repr=False)
    offdiagonal: np.ndarray = field(repr=False)  # length n-1, constant -1/h^2

    @property
    def size(self) -> int:
        return self.domain.nodes

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Matrix-vector product A @ u (vectorized tridiagonal stencil)."""
        out = self.diagonal * u
        out[:-1] += self.offdiagonal * u[1:]
        out[1:] += self.offdiagonal * u[:-1]
        return out

    def to_dense(self) -> np.ndarray:
        a = np.diag(self.diagonal)
        idx = np.arange(self.size - 1)
        a[idx, idx + 1] = self.offdiagonal
        a[idx + 1, idx] = self.offdiagonal
        return a


def assemble_operator(domain: GridDomain, potential: Potential) -> DiscreteOperator:
    """Centered-difference Laplacian plus diagonal potential on the grid.

    Raises AssumptionViolationError (with the offending node) when the sampled
    potential leaves (0, a1..a2] or drifts from v_inf at the boundary.
    """
    v = np.asarray(potential.evaluator(domain.x), dtype=float)
    if v.shape != domain.x.shape:
        raise InvalidArgumentError("potential evaluator must return one value per node")
    bad = np.flatnonzero(~np.isfinite(v) | (v <= 0))
    if bad.size:
        i = int(bad[0])
        raise AssumptionViolationError(
            f"potential must be positive: V({domain.x[i]:.6g}) = {v[i]:.6g}",
            node=i,
            value=float(v[i]),
        )
    tol = 1e-12 * max(1.0, abs(potential.a2))
    bad = np.flatnonzero((v < potential.a1 - tol) | (v > potential.a2 + tol))
    if bad.size:
        i = int(bad[0])
        raise AssumptionViolationError(
            f"potential leaves its declared bounds [{potential.a1}, {potential.a2}] "
            f"at x = {domain.x[i]:.6g}: V = {v[i]:.6g}",
            node=i,
            value=float(v[i]),
        )
    for i in (0, domain.nodes - 1):
        if abs(v[i] - potential.v_inf) > potential.tail_tol * max(1.0, abs(potential.v_inf)):
            raise AssumptionViolationError(
                f"potential has not reached v_inf = {potential.v_inf} at the boundary "
                f"x = {domain.x[i]:.6g} (V = {v[i]:.6g}); enlarge the box",
                node=i,
                value=float(v[i]),
            )
    h2 = domain.spacing**2
    diag = 2.0 / h2 + v
    off = np.full(domain.nodes - 1, -1.0 / h2)
    return DiscreteOperator(domain=domain, potential=potential, diagonal=diag, offdiagonal=off)


@dataclass(frozen=True)
class SpectrumData:
    """Lowest eigenpairs of a DiscreteOperator.

    Eigenfunctions are columns, orthonormal in the discrete L2 product.
    ``below_threshold`` flags members of the point spectrum under v_inf.
    """

    operator: DiscreteOperator
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray = field(repr=False)
    below_threshold: np.ndarray
    v_inf: float

    @property
    def point_spectrum(self) -> np.ndarray:
        return self.eigenvalues[self.below_threshold]


def compute_spectrum(op: DiscreteOperator, k: int, residual_tol: float = 1e-8) -> SpectrumData:
    """Lowest ``k`` eigenpairs via the tridiagonal symmetric eigensolver."""
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    k = min(k, op.size)
    try:
        vals, vecs = eigh_tridiagonal(
            op.diagonal, op.offdiagonal, select="i", select_range=(0, k - 1)
        )
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails here
        raise NumericFailureError(f"eigen-solver failed: {exc}") from exc
    # LAPACK returns unit Euclidean columns; rescale to unit discrete L2 norm.
    vecs = vecs / np.sqrt(op.domain.spacing)
    resid = 0.0
    for j in range(k):
        r = op.apply(vecs[:, j]) - vals[j] * vecs[:, j]
        resid = max(resid, op.domain.norm(r))
    scale = max(1.0, float(np.abs(vals).max()))
    if resid > residual_tol * scale:
        raise NumericFailureError(
            f"eigenpair residual {resid:.3e} exceeds {residual_tol:.1e} * {scale:.3e}",
            residual=resid,
        )
    below = vals < op.potential.v_inf
    return SpectrumData(
        operator=op,
        eigenvalues=vals,
        eigenfunctions=vecs,
        below_threshold=below,
        v_inf=op.potential.v_inf,
    )


@dataclass(frozen=True)
class SpectralSplit:
    """Three-way eigen-splitting of A around an isolated eigenvalue.

    Block 1 collects eigenvalues below the target, block 2 the target cluster
    (dimension m), block 3 everything above.  ``basis`` holds the full
    eigenbasis as columns, orthonormal in the discrete L2 product, ordered by
    eigenvalue; ``idx1/idx2/idx3`` index into it.
    """

    operator: DiscreteOperator
    lambda_star: float
    multiplicity: int
    alpha: float
    beta: float
    growth_constant: float  # M in the block-semigroup bounds
    a_shift: float          # Lambda = A + a I has positive spectrum
    eigenvalues: np.ndarray = field(repr=False)
    basis: np.ndarray = field(repr=False)
    idx1: np.ndarray = field(repr=False)
    idx2: np.ndarray = field(repr=False)
    idx3: np.ndarray = field(repr=False)
    gap_lower: float = np.inf
    gap_upper: float = np.inf

    @property
    def domain(self) -> GridDomain:
        return self.operator.domain

    @property
    def spacing(self) -> float:
        return self.operator.domain.spacing

    @property
    def interval(self) -> tuple[float, float]:
        """Admissible parameter window J = (lambda* - beta/4, lambda* + beta/4)."""
        return (self.lambda_star - 0.25 * self.beta, self.lambda_star + 0.25 * self.beta)

    @property
    def kernel_basis(self) -> np.ndarray:
        """Columns spanning the target eigenspace (grid representation)."""
        return self.basis[:, self.idx2]

    # -- coefficient transforms (Parseval: L2 norms equal coefficient norms) --

    def to_coeffs(self, u: np.ndarray) -> np.ndarray:
        """Eigenbasis coefficients of grid state(s); last axis is the grid."""
        return self.spacing * (u @ self.basis)

    def from_coeffs(self, c: np.ndarray) -> np.ndarray:
        return c @ self.basis.T

    def project(self, block: int, u: np.ndarray) -> np.ndarray:
        """Orthogonal projection P_block applied to grid state(s)."""
        idx = self._block_index(block)
        cols = self.basis[:, idx]
        return (self.spacing * (u @ cols)) @ cols.T

    def kernel_coords(self, u: np.ndarray) -> np.ndarray:
        """Coordinates of P2 u in the kernel basis."""
        return self.spacing * (u @ self.basis[:, self.idx2])

    def kernel_state(self, coords: np.ndarray) -> np.ndarray:
        return np.asarray(coords) @ self.basis[:, self.idx2].T

    def in_kernel(self, w: np.ndarray, tol: float = 1e-8) -> bool:
        resid = w - self.project(2, w)
        scale = max(1.0, self.domain.norm(w))
        return self.domain.norm(resid) <= tol * scale

    def _block_index(self, block: int) -> np.ndarray:
        if block == 1:
            return self.idx1
        if block == 2:
            return self.idx2
        if block == 3:
            return self.idx3
        raise InvalidArgumentError(f"block must be 1, 2 or 3, got {block}")


def spectral_split(
    spectrum: SpectrumData,
    lambda_star: float,
    alpha: float = 0.5,
    beta_fraction: float = 0.8,
    match_tol: float = 1e-6,
    cluster_tol: float = 1e-6,
    growth_samples: int = 200,
    seed: int = 0,
) -> SpectralSplit:
    """Split the spectrum around ``lambda_star`` and size the gap constant.

    ``lambda_star`` must match a computed eigenvalue below v_inf within
    ``match_tol``; eigenvalues within ``cluster_tol`` of it form the kernel
    block (multiplicity m).  beta is ``beta_fraction`` times the smaller
    spectral gap, strictly inside the admissible range.  The growth constant
    is sampled by the semigroup module on the finished split.
    """
    if not 0.0 <= alpha < 1.0:
        raise InvalidArgumentError(f"alpha must lie in [0, 1), got {alpha}")
    if not 0.0 < beta_fraction < 1.0:
        raise InvalidArgumentError(f"beta_fraction must lie in (0, 1), got {beta_fraction}")
    op = spectrum.operator
    point = spectrum.eigenvalues[spectrum.below_threshold]
    if point.size == 0 or np.min(np.abs(point - lambda_star)) > match_tol:
        raise NotAnEigenvalueError(
            f"lambda* = {lambda_star} is not a computed eigenvalue below "
            f"v_inf = {spectrum.v_inf} (match tolerance {match_tol:.1e}); "
            f"point spectrum: {np.array2string(point, precision=8)}"
        )
    try:
        vals, vecs = eigh_tridiagonal(op.diagonal, op.offdiagonal)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericFailureError(f"full eigen-decomposition failed: {exc}") from exc
    vecs = vecs / np.sqrt(op.domain.spacing)

    in_cluster = np.abs(vals - lambda_star) <= cluster_tol
    idx2 = np.flatnonzero(in_cluster)
    if idx2.size == 0:  # pragma: no cover - guarded by the match test above
        raise NotAnEigenvalueError(f"no eigenvalue within {cluster_tol:.1e} of {lambda_star}")
    star = float(vals[idx2].mean())
    idx1 = np.flatnonzero(vals < star - cluster_tol)
    idx3 = np.flatnonzero(vals > star + cluster_tol)

    gap_lower = star - float(vals[idx1].max()) if idx1.size else np.inf
    gap_upper = float(vals[idx3].min()) - star if idx3.size else np.inf
    if not np.isfinite(gap_upper):
        raise NumericFailureError("target cluster has no spectrum above it; grid too small")
    beta = beta_fraction * min(gap_lower, gap_upper)
    a_shift = 1.0 + abs(float(vals[0]))

    split = SpectralSplit(
        operator=op,
        lambda_star=star,
        multiplicity=int(idx2.size),
        alpha=float(alpha),
        beta=float(beta),
        growth_constant=1.05,
        a_shift=a_shift,
        eigenvalues=vals,
        basis=vecs,
        idx1=idx1,
        idx2=idx2,
        idx3=idx3,
        gap_lower=float(gap_lower),
        gap_upper=float(gap_upper),
    )
    from .semigroup import estimate_decay_constant  # deferred: avoids an import cycle

    m_est = estimate_decay_constant(split, growth_samples, seed=seed)
    object.__setattr__(split, "growth_constant", m_est)
    return split


def export_spectrum_csv(spectrum: SpectrumData, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "eigenvalue", "below_threshold"])
        for j, (lam, below) in enumerate(zip(spectrum.eigenvalues, spectrum.below_threshold)):
            writer.writerow([j, f"{lam:.12g}", int(below)])


def export_operator_csv(op: DiscreteOperator, path: str | Path) -> None:
    v = op.diagonal - 2.0 / op.domain.spacing**2
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "potential", "diagonal"])
        for x, pot, d in zip(op.domain.x, v, op.diagonal):
            writer.writerow([f"{x:.12g}", f"{pot:.12g}", f"{d:.12g}"])
