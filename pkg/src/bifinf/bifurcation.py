"""Continuation near the resonant eigenvalue and branch accounting.

Branches are tracked in the reduced (kernel) coordinates by natural-parameter
continuation with Newton refinement, lifted through the manifold map, and
polished by the full elliptic Newton so every branch point carries a genuine
stationary residual.  The two unbounded branches blow up like
C / (lam* - lam); the bounded branch persists on a two-sided neighborhood.
The topological index data is surrogated by Morse indices: the number of
unstable directions of the reduced linearization at the bounded equilibrium,
which jumps from 0 to m across lam*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyBranchError,
    InsufficientDataError,
    InvalidArgumentError,
    SideMissingError,
)
from .manifold import ManifoldMap
from .nonlinearity import Nonlinearity, SmallnessGate
from .operator import SpectralSplit
from .pde import elliptic_newton, stationary_residual
from .reduced import (
    AnnulusBounds,
    ReducedConstants,
    ReducedField,
    annulus_bounds,
    field_jacobian,
    find_equilibria,
    reduced_constants,
)

__all__ = [
    "BranchPoint",
    "BifurcationBranch",
    "BlowupFit",
    "ThreeSolutionsReport",
    "BifurcationProblem",
    "continue_branch",
    "detect_blowup",
    "three_solutions",
    "index_signature",
    "morse_index",
]

_LABELS = ("plus-infinity", "minus-infinity", "bounded")


@dataclass(frozen=True)
class BranchPoint:
    lam: float
    coords: np.ndarray           # reduced equilibrium, kernel coordinates
    state: np.ndarray            # lifted and Newton-polished full solution
    l2_norm: float
    energy_norm: float
    morse_index: int
    residual: float              # full stationary residual of ``state``


@dataclass(frozen=True)
class BlowupFit:
    slope: float
    intercept: float
    r_squared: float
    amplitude: float             # exp(intercept), comparable to C1


@dataclass
class BifurcationBranch:
    label: str
    points: list[BranchPoint]
    blowup: BlowupFit | None = None

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    @property
    def norms(self) -> np.ndarray:
        return np.array([p.l2_norm for p in self.points])


@dataclass
class ThreeSolutionsReport:
    lam: float
    solutions: list[BranchPoint]
    separation: float            # smallest pairwise L2 distance
    required_separation: float
    bounds: AnnulusBounds
    missing: list[str] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return len(self.solutions) >= 3 and not self.missing


class BifurcationProblem:
    """Shared context: split, nonlinearity, gate and per-lam reduced fields.

    Fields are cached per parameter value.  Plain fields evaluate the
    manifold correction exactly (Newton refinement, Jacobians); bulk fields
    additionally carry an interpolated correction table for m = 1, sized by
    the Gronwall radius, which makes trajectory integration and margin
    sampling cheap.
    """

    def __init__(
        self,
        split: SpectralSplit,
        f: Nonlinearity,
        gate: SmallnessGate,
        solver_options: dict | None = None,
        bounded_cap: float | None = None,
        seed: int = 0,
    ):
        self.split = split
        self.f = f
        self.gate = gate
        self.solver_options = dict(solver_options or {})
        self.seed = int(seed)
        self._fields: dict[float, ReducedField] = {}
        self._constants: ReducedConstants | None = None
        self._cap = bounded_cap

    @property
    def lambda_star(self) -> float:
        return self.split.lambda_star

    @property
    def constants(self) -> ReducedConstants:
        if self._constants is None:
            self._constants = reduced_constants(self.split, self.f, seed=self.seed)
        return self._constants

    @property
    def bounded_cap(self) -> float:
        """Norm cap separating the bounded branch from the unbounded pair."""
        if self._cap is not None:
            return self._cap
        if min(self.f.f_plus, self.f.f_minus) <= 0:
            return 1.0  # linear model: no saturation scale to derive a cap from
        return self.constants.R0

    def solver(self, lam: float) -> ManifoldMap:
        return self.field(lam).solver

    def field(self, lam: float) -> ReducedField:
        key = float(lam)
        if key not in self._fields:
            solver = ManifoldMap(self.split, self.f, key, self.gate, **self.solver_options)
            self._fields[key] = ReducedField(solver)
        return self._fields[key]

    def bulk_field(self, lam: float, span: float | None = None) -> ReducedField:
        """Field with an interpolated correction covering at least ``span``."""
        fld = self.field(lam)
        if self.split.multiplicity != 1:
            return fld
        want = 1.25 * self._anchor_span(lam) if span is None else float(span)
        if fld.interpolant_span < want:
            fld.build_interpolant(want, core=3.0 * self.constants.R0 + 2.0)
        return fld

    def _anchor_span(self, lam: float) -> float:
        base = max(3.0 * self.constants.R0, 1.0)
        if lam < self.lambda_star:
            base = max(base, 1.1 * self.constants.C1 / (self.lambda_star - lam))
        return base

    def bounds(self, lam: float) -> AnnulusBounds:
        return annulus_bounds(self.field(lam), self.constants, seed=self.seed)


def morse_index(fld: ReducedField, coords: np.ndarray) -> int:
    """Unstable-direction count of the reduced linearization at an equilibrium.

    Equals the number of negative eigenvalues of the stationary-map Jacobian
    (A - lam) - D(P2 f~(. + xi)), i.e. of minus the flow-field Jacobian.
    """
    jac = field_jacobian(fld, coords)
    eig = np.linalg.eigvals(jac)
    return int(np.sum(eig.real > 0.0))


def _branch_point(problem: BifurcationProblem, lam: float, coords: np.ndarray, tol: float) -> BranchPoint:
    fld = problem.field(lam)
    split = problem.split
    op = split.operator
    anchor = split.kernel_state(coords)
    lift = anchor + fld.solver.xi(anchor)
    state = elliptic_newton(op, problem.f, lam, lift, tol=tol)
    h = op.domain
    energy = math.sqrt(max(h.spacing * float(np.dot(state, op.apply(state))), 0.0))
    return BranchPoint(
        lam=float(lam),
        coords=np.asarray(coords, dtype=float).copy(),
        state=state,
        l2_norm=h.norm(state),
        energy_norm=energy,
        morse_index=morse_index(fld, coords),
        residual=stationary_residual(op, problem.f, lam, state),
    )


def _classify(problem: BifurcationProblem, points: list[BranchPoint]) -> str:
    norms = np.array([float(np.linalg.norm(p.coords)) for p in points])
    if norms.max() <= problem.bounded_cap:
        return "bounded"
    # orientation from the point closest to lam*
    lams = np.array([p.lam for p in points])
    lead = points[int(np.argmin(np.abs(lams - problem.lambda_star)))]
    return "plus-infinity" if lead.coords[0] >= 0.0 else "minus-infinity"


def continue_branch(
    problem: BifurcationProblem,
    lam_grid: np.ndarray,
    seed_coords: np.ndarray,
    tol: float = 1e-9,
) -> BifurcationBranch:
    """Natural-parameter continuation from ``seed_coords`` along ``lam_grid``.

    Newton restarts from the previous equilibrium; losing Newton mid-grid
    terminates the branch (a finding), failing at the first point raises.
    """
    lam_grid = np.asarray(lam_grid, dtype=float)
    if lam_grid.size < 1:
        raise InvalidArgumentError("lambda grid is empty")
    d = np.diff(lam_grid)
    if lam_grid.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise InvalidArgumentError("lambda grid must be strictly monotone")
    lo, hi = problem.split.interval
    if lam_grid.min() <= lo or lam_grid.max() >= hi:
        raise InvalidArgumentError(
            f"lambda grid leaves the admissible window ({lo:.8g}, {hi:.8g})"
        )
    w = np.atleast_1d(np.asarray(seed_coords, dtype=float))
    points: list[BranchPoint] = []
    for lam in lam_grid:
        fld = problem.field(float(lam))
        roots = find_equilibria(fld, [w], tol=tol)
        if not roots:
            if not points:
                raise EmptyBranchError(
                    f"seed {w} found no equilibrium at the first grid value {lam}"
                )
            break
        w = roots[0]
        points.append(_branch_point(problem, float(lam), w, tol))
    branch = BifurcationBranch(label=_classify(problem, points), points=points)
    return branch


def detect_blowup(branch: BifurcationBranch, lam_star: float) -> BlowupFit:
    """Least-squares fit of log ‖u‖ against log 1/(lam* - lam).

    Requires at least 4 points on an unbounded branch with lam < lam*.
    """
    if branch.label == "bounded":
        raise InsufficientDataError("bounded branches carry no blow-up scaling")
    pts = [p for p in branch.points if p.lam < lam_star]
    if len(pts) < 4:
        raise InsufficientDataError(
            f"need at least 4 branch points below lam*, have {len(pts)}"
        )
    x = np.log([1.0 / (lam_star - p.lam) for p in pts])
    y = np.log([p.l2_norm for p in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    fit = BlowupFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r2,
        amplitude=float(np.exp(intercept)),
    )
    branch.blowup = fit
    return fit


def three_solutions(
    problem: BifurcationProblem,
    lam: float,
    tol: float = 1e-9,
) -> ThreeSolutionsReport:
    """The annulus pair plus the bounded solution at one lam < lam*.

    Seeds sit at +-1.5 r_lam along kernel directions (inside the trapped
    shell) and at the origin; all three are Newton-refined on the reduced
    field, lifted, and polished by the full elliptic Newton.  Distinctness
    demands pairwise L2 separation of at least r_lam / 2.
    """
    star = problem.lambda_star
    lo, _ = problem.split.interval
    if not lo < lam < star:
        raise InvalidArgumentError(
            f"three-solution search needs lam in ({lo:.8g}, lam* = {star:.8g}), got {lam}"
        )
    bounds = problem.bounds(lam)
    missing: list[str] = []
    r_seed = bounds.r_lam if np.isfinite(bounds.r_lam) else 0.5 * (bounds.R0 + bounds.R_lam)
    fld = problem.field(lam)
    m = fld.dim
    dir0 = np.zeros(m)
    dir0[0] = 1.0

    found: list[BranchPoint] = []
    for sign, tag in ((1.0, "plus"), (-1.0, "minus")):
        seed = sign * 1.5 * r_seed * dir0
        roots = find_equilibria(fld, [seed], tol=tol)
        roots = [r for r in roots if np.linalg.norm(r) > problem.bounded_cap]
        if roots:
            found.append(_branch_point(problem, lam, roots[0], tol))
        else:
            missing.append(f"no unbounded equilibrium from the {tag} seed")
    roots = find_equilibria(fld, [np.zeros(m)], tol=tol)
    roots = [r for r in roots if np.linalg.norm(r) <= problem.bounded_cap]
    if roots:
        found.append(_branch_point(problem, lam, roots[0], tol))
    else:
        missing.append("no bounded equilibrium near the origin")

    sep = math.inf
    h = problem.split.domain
    for i in range(len(found)):
        for j in range(i + 1, len(found)):
            sep = min(sep, h.norm(found[i].state - found[j].state))
    required = bounds.r_lam / 2.0 if np.isfinite(bounds.r_lam) else bounds.R0 / 2.0
    if len(found) >= 2 and sep < required:
        missing.append(
            f"solutions not separated: min pairwise distance {sep:.3e} < {required:.3e}"
        )
    return ThreeSolutionsReport(
        lam=float(lam),
        solutions=found,
        separation=float(sep if np.isfinite(sep) else 0.0),
        required_separation=float(required),
        bounds=bounds,
        missing=missing,
    )


def index_signature(
    problem: BifurcationProblem,
    lam_left: float,
    lam_right: float,
    tol: float = 1e-9,
) -> tuple[int, int]:
    """Morse indices of the bounded equilibrium on both sides of lam*.

    The expected return is (0, m): the trivial index below the eigenvalue and
    the full kernel dimension above it.
    """
    star = problem.lambda_star
    lo, hi = problem.split.interval
    if not (lo < lam_left < star < lam_right < hi):
        raise InvalidArgumentError(
            f"need lam_left < lam* < lam_right inside ({lo:.8g}, {hi:.8g}); "
            f"got ({lam_left}, {lam_right})"
        )
    out = []
    for lam, side in ((lam_left, "left"), (lam_right, "right")):
        fld = problem.field(float(lam))
        m = fld.dim
        seeds = [np.zeros(m)]
        rng = np.random.default_rng(problem.seed)
        seeds += [0.1 * rng.standard_normal(m) for _ in range(2)]
        roots = find_equilibria(fld, seeds, tol=tol)
        roots = [r for r in roots if np.linalg.norm(r) <= problem.bounded_cap]
        if not roots:
            raise SideMissingError(f"no bounded equilibrium at lam = {lam} ({side} side)", side)
        root = min(roots, key=lambda r: float(np.linalg.norm(r)))
        out.append(morse_index(fld, root))
    return out[0], out[1]
