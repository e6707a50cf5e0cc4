"""Minimization of the Thomas-Fermi functional.

The functional is ``E[rho] = c_tf * I(rho^(1+2/d)) + I(V rho) - i_w * I(rho^2)``
over densities with unit mass, where ``I`` is the grid quadrature. In 2D the
minimizer has the closed form ``(lam - V)_+ / (2 (c_tf - i_w))`` and only the
chemical potential ``lam`` must be found. In 1D the quadratic term makes the
functional non-convex; minimization goes through the relaxed local energy,
whose pointwise structure gives the global minimizer of the discrete problem
by a per-point selection rule plus a bisection on the mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, MassJumpError, ValidationError
from .model import SpatialGrid, TFConstants, TrapPotential

Array = np.ndarray

_MAX_BRACKET_DOUBLINGS = 80


@dataclass
class DensityField:
    """Nonnegative grid density with quadrature helpers."""

    grid: SpatialGrid
    values: Array

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.shape != (self.grid.size,):
            raise ValidationError(
                f"density has {self.values.size} values for a grid of size {self.grid.size}"
            )
        if np.any(self.values < 0):
            raise ValidationError("density values must be nonnegative")

    @classmethod
    def from_callable(cls, grid: SpatialGrid, fn) -> "DensityField":
        return cls(grid, np.asarray(fn(grid.points()), dtype=float))

    @property
    def mass(self) -> float:
        return self.grid.integrate(self.values)

    def power_integral(self, p: float) -> float:
        return self.grid.integrate(self.values**p)

    def normalized(self) -> "DensityField":
        m = self.mass
        if m <= 0:
            raise ValidationError("cannot normalize a zero-mass density")
        return DensityField(self.grid, self.values / m)


@dataclass(frozen=True)
class RelaxedLocalEnergy:
    """Pointwise local energy and its convex relaxation (1D).

    For coupling ``i_w`` and cubic coefficient ``(1-eta) c_tf`` the local
    energy ``e(t) = (1-eta) c_tf t^3 - i_w t^2 + alpha t`` with
    ``alpha = i_w^2 / (4 (1-eta) c_tf)`` has exactly the two minimizers
    ``t = 0`` and ``t = rho_jump = i_w / (2 (1-eta) c_tf)``, both at value 0.
    The relaxation ``J(t) = e(t) * [t >= rho_jump]`` is convex and coincides
    with ``e`` above the jump density. ``eta = 0`` is the plain relaxation
    used for minimization; ``eta`` in (0, 1) reserves part of the cubic term
    for separate kinetic bookkeeping.
    """

    c_tf: float
    i_w: float
    eta: float = 0.0

    def __post_init__(self):
        if self.c_tf <= 0:
            raise ValidationError("c_tf must be positive")
        if self.i_w < 0:
            raise ValidationError("i_w must be nonnegative")
        if not (0.0 <= self.eta < 1.0):
            raise ValidationError("eta must lie in [0, 1)")

    @classmethod
    def eta_variant(cls, c_tf: float, i_w: float, eta: float = 0.5) -> "RelaxedLocalEnergy":
        """The partially relaxed local energy; half the cubic term by default."""
        return cls(c_tf, i_w, eta)

    @property
    def cubic_coefficient(self) -> float:
        return (1.0 - self.eta) * self.c_tf

    @property
    def alpha(self) -> float:
        return self.i_w**2 / (4.0 * self.cubic_coefficient)

    @property
    def rho_jump(self) -> float:
        return self.i_w / (2.0 * self.cubic_coefficient)

    def local_energy(self, t: Array) -> Array:
        t = np.asarray(t, dtype=float)
        return self.cubic_coefficient * t**3 - self.i_w * t**2 + self.alpha * t

    def local_energy_derivative(self, t: Array) -> Array:
        t = np.asarray(t, dtype=float)
        return 3.0 * self.cubic_coefficient * t**2 - 2.0 * self.i_w * t + self.alpha

    def relaxed_local_energy(self, t: Array) -> Array:
        t = np.asarray(t, dtype=float)
        return np.where(t >= self.rho_jump, self.local_energy(t), 0.0)


@dataclass
class EnergyBreakdown:
    kinetic_term: float
    potential_term: float
    interaction_term: float

    @property
    def total(self) -> float:
        return self.kinetic_term + self.potential_term + self.interaction_term


@dataclass
class TFSolution:
    """Minimizer record: density, multiplier, energies and certificates."""

    rho: DensityField
    lam: float
    energy: EnergyBreakdown
    el_residual: float
    el_complement_min: float
    mass_gap: float
    c_tf: float
    i_w: float
    eta: float = 0.0
    support_interior_min: float = math.nan


def tf_energy(rho: DensityField, potential: TrapPotential, constants: TFConstants, i_w: float) -> EnergyBreakdown:
    """Evaluate the three terms of the functional at a density.

    The coupling ``i_w`` is taken as a raw number so that super-critical
    values can be explored; constructors, not this evaluator, enforce the
    2D sub-criticality bound. The interaction term carries its minus sign.
    """
    if potential.d != rho.grid.d:
        raise ValidationError("potential and density dimensions differ")
    if constants.d != rho.grid.d:
        raise ValidationError("constants and density dimensions differ")
    d = rho.grid.d
    v = np.asarray(potential.evaluate(rho.grid.points()), dtype=float)
    if v.shape != (rho.grid.size,):
        raise ValidationError("potential sampling does not match the density grid")
    kinetic = constants.c_tf * rho.power_integral(1.0 + 2.0 / d)
    pot = rho.grid.integrate(v * rho.values)
    inter = -i_w * rho.power_integral(2.0)
    return EnergyBreakdown(kinetic, pot, inter)


def _bisect_on_mass(mass_of, lo: float, hi: float, tol: float, max_iter: int):
    """Bisect ``lam`` for unit mass; the mass map must be nondecreasing.

    Returns ``(lam, mass)``. Raises ``MassJumpError`` when the bracket
    collapses to floating-point width while the mass still jumps across 1,
    and ``ConvergenceError`` when the iteration cap is hit first.
    """
    m_lo, m_hi = mass_of(lo), mass_of(hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        m_mid = mass_of(mid)
        if abs(m_mid - 1.0) <= tol:
            return mid, m_mid
        if m_mid < 1.0:
            lo, m_lo = mid, m_mid
        else:
            hi, m_hi = mid, m_mid
        if hi - lo <= 64.0 * np.finfo(float).eps * max(1.0, abs(hi)):
            raise MassJumpError(
                "no multiplier reaches unit mass within tolerance: the mass map "
                f"jumps from {m_lo:.12g} to {m_hi:.12g} across lam in "
                f"[{lo:.15g}, {hi:.15g}] (residual gap "
                f"{min(abs(m_lo - 1.0), abs(m_hi - 1.0)):.3g})",
                lam_low=lo,
                lam_high=hi,
                mass_low=m_lo,
                mass_high=m_hi,
            )
    raise ConvergenceError(f"mass bisection did not converge in {max_iter} iterations")


def _expand_bracket(mass_of, lo: float):
    hi, step = lo + 1.0, 1.0
    for _ in range(_MAX_BRACKET_DOUBLINGS):
        if mass_of(hi) >= 1.0:
            return hi
        step *= 2.0
        hi += step
    raise ConvergenceError(
        "could not bracket unit mass: the potential looks unbounded on the grid "
        "or the box is too small"
    )


def _check_support_inside(grid: SpatialGrid, values: Array):
    vals = values.reshape(grid.shape)
    if grid.d == 1:
        edge = max(vals[0], vals[-1])
    else:
        edge = max(vals[0, :].max(), vals[-1, :].max(), vals[:, 0].max(), vals[:, -1].max())
    if edge > 0:
        raise ValidationError(
            "minimizer support touches the box boundary; enlarge the grid half_width"
        )


def minimize_2d(
    potential: TrapPotential,
    constants: TFConstants,
    i_w: float,
    grid: SpatialGrid,
    tol: float = 1e-6,
    max_iter: int = 200,
) -> TFSolution:
    """Closed-form 2D minimizer (lam - V)_+ / (2 kappa), kappa = c_tf - i_w.

    The mass is nondecreasing in lam, so lam is found by bisection until
    ``|mass - 1| <= tol``. The mass map is continuous here (no relaxation
    jump), so bisection always converges for an adequate box.
    """
    if grid.d != 2:
        raise ValidationError("minimize_2d requires a 2D grid")
    kappa = constants.c_tf - i_w
    if kappa <= 0:
        raise ValidationError(
            f"minimize_2d requires i_w < c_tf, got i_w={i_w} with c_tf={constants.c_tf}"
        )
    v = np.asarray(potential.evaluate(grid.points()), dtype=float)
    volume = grid.cell_volume

    def mass_of(lam):
        return float(np.sum(np.clip(lam - v, 0.0, None)) * volume / (2.0 * kappa))

    lo = float(v.min())
    hi = _expand_bracket(mass_of, lo)
    lam, mass = _bisect_on_mass(mass_of, lo, hi, tol, max_iter)

    values = np.clip(lam - v, 0.0, None) / (2.0 * kappa)
    _check_support_inside(grid, values)
    rho = DensityField(grid, values)
    energy = tf_energy(rho, potential, constants, i_w)

    supp = values > 0
    residual = float(np.max(np.abs(2.0 * kappa * values[supp] + v[supp] - lam))) if supp.any() else 0.0
    comp_min = float(np.min(v[~supp] - lam)) if (~supp).any() else math.inf
    return TFSolution(
        rho=rho,
        lam=lam,
        energy=energy,
        el_residual=residual,
        el_complement_min=comp_min,
        mass_gap=abs(mass - 1.0),
        c_tf=constants.c_tf,
        i_w=i_w,
        support_interior_min=float(values[supp].min()) if supp.any() else math.nan,
    )


def _pointwise_density(v: Array, lam: float, rel: RelaxedLocalEnergy) -> Array:
    """Per-point minimizer of J(t) + (V - alpha - lam) t over t >= 0.

    On [rho_jump, inf) the tilted energy is the cubic
    ``a t^3 - i_w t^2 + (V - lam) t`` (the alpha terms cancel), whose only
    admissible stationary point is the larger root of
    ``3 a t^2 - 2 i_w t = lam - V``. The minimum is attained either there
    or at t = 0; exact ties go to 0, which reproduces the jump of the
    continuum minimizer instead of smearing it across a cell.
    """
    a = rel.cubic_coefficient
    disc = rel.i_w**2 + 3.0 * a * (lam - v)
    root = np.zeros_like(v)
    pos = disc > 0
    root[pos] = (rel.i_w + np.sqrt(disc[pos])) / (3.0 * a)
    tilted = a * root**3 - rel.i_w * root**2 + (v - lam) * root
    take = pos & (root >= rel.rho_jump) & (tilted < 0.0)
    return np.where(take, root, 0.0)


def _support_interior(grid: SpatialGrid, values: Array) -> Array:
    """Mask of support points all of whose grid neighbors are also occupied."""
    pos = (values > 0).reshape(grid.shape)
    interior = pos.copy()
    if grid.d == 1:
        shifted_left = np.concatenate([[False], pos[:-1]])
        shifted_right = np.concatenate([pos[1:], [False]])
        interior &= shifted_left & shifted_right
    else:
        pad = np.pad(pos, 1, constant_values=False)
        interior &= pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
    return interior.ravel()


def minimize_1d_relaxed(
    potential: TrapPotential,
    rel: RelaxedLocalEnergy,
    grid: SpatialGrid,
    tol: float = 1e-6,
    max_iter: int = 400,
) -> TFSolution:
    """Minimize the relaxed 1D functional by pointwise selection + bisection.

    For each trial lam the pointwise rule yields the global minimizer of the
    convex discrete relaxed functional with mass multiplier lam; lam is then
    bisected on the mass. Because the pointwise minimizer jumps from 0 to
    rho_jump, the mass map has jumps of height ``rho_jump * h`` per
    activated point (twice that on symmetric grids); if unit mass falls
    inside such a jump a ``MassJumpError`` reports the residual gap and the
    bracketing multipliers, as the tie at the jump is resolved to 0 rather
    than smeared. A tolerance of at least ``2 * rho_jump * h`` cannot land
    in a jump; tighter tolerances succeed whenever unit mass is crossed in a
    continuous segment. The solution carries the jump certificate
    ``min(rho) >= rho_jump`` over the discrete support interior.
    """
    if grid.d != 1:
        raise ValidationError("minimize_1d_relaxed requires a 1D grid")
    if not potential.flat_spots_null:
        raise ValidationError(
            "the 1D minimizer requires a potential whose level sets are null "
            "(flat_spots_null flag)"
        )
    v = np.asarray(potential.evaluate(grid.points()), dtype=float)
    h = grid.cell_volume

    def mass_of(lam):
        return float(np.sum(_pointwise_density(v, lam, rel)) * h)

    lo = float(v.min()) - rel.alpha
    hi = _expand_bracket(mass_of, lo)
    lam, mass = _bisect_on_mass(mass_of, lo, hi, tol, max_iter)

    values = _pointwise_density(v, lam, rel)
    _check_support_inside(grid, values)
    rho = DensityField(grid, values)
    constants = TFConstants(1, rel.c_tf, math.pi, source=_source_placeholder())
    energy = tf_energy(rho, potential, constants, rel.i_w)

    res = el_residual_values(values, v, lam, rel)
    interior = _support_interior(grid, values)
    interior_min = float(values[interior].min()) if interior.any() else math.nan
    return TFSolution(
        rho=rho,
        lam=lam,
        energy=energy,
        el_residual=res[0],
        el_complement_min=res[1],
        mass_gap=abs(mass - 1.0),
        c_tf=rel.c_tf,
        i_w=rel.i_w,
        eta=rel.eta,
        support_interior_min=interior_min,
    )


def _source_placeholder():
    from .model import ConstantsSource

    return ConstantsSource.BATHTUB_CONSISTENT


def sample_minimizer(
    potential: TrapPotential, rel: RelaxedLocalEnergy, grid: SpatialGrid, lam: float
) -> DensityField:
    """Pointwise minimizer profile at a given multiplier, on any grid.

    The selection rule is local, so a multiplier found on a fine grid can be
    resampled onto a coarser one; the coarse mass then deviates from 1 only
    by the coarse quadrature error, bypassing the activation-jump lottery of
    a direct coarse-grid bisection.
    """
    v = np.asarray(potential.evaluate(grid.points()), dtype=float)
    return DensityField(grid, _pointwise_density(v, lam, rel))


def el_residual_values(values: Array, v: Array, lam: float, rel: RelaxedLocalEnergy) -> tuple[float, float]:
    supp = values > 0
    if supp.any():
        defect = rel.local_energy_derivative(values[supp]) + v[supp] - rel.alpha - lam
        supp_residual = float(np.max(np.abs(defect)))
    else:
        supp_residual = 0.0
    comp = ~supp
    comp_min = float(np.min(v[comp] - rel.alpha - lam)) if comp.any() else math.inf
    return supp_residual, comp_min


def el_residual(sol: TFSolution, potential: TrapPotential, rel: RelaxedLocalEnergy | None = None):
    """Euler-Lagrange defect of a solution (or of any density in a TFSolution).

    Returns ``(sup-norm of the stationarity defect on supp(rho),
    min over the complement of V - alpha - lam)``. A valid minimizer has the
    first ~ 0 and the second >= -tol. In 2D the stationarity condition is
    ``2 (c_tf - i_w) rho + V = lam`` and alpha plays no role.
    """
    grid = sol.rho.grid
    v = np.asarray(potential.evaluate(grid.points()), dtype=float)
    values = sol.rho.values
    if grid.d == 2:
        kappa = sol.c_tf - sol.i_w
        supp = values > 0
        supp_residual = (
            float(np.max(np.abs(2.0 * kappa * values[supp] + v[supp] - sol.lam))) if supp.any() else 0.0
        )
        comp = ~supp
        comp_min = float(np.min(v[comp] - sol.lam)) if comp.any() else math.inf
        return supp_residual, comp_min
    if rel is None:
        rel = RelaxedLocalEnergy(sol.c_tf, sol.i_w, sol.eta)
    return el_residual_values(values, v, sol.lam, rel)


@dataclass
class EquivalenceReport:
    relaxed_minimum: float
    tf_energy_at_minimizer: float
    difference: float
    jump_certificate_min: float
    rho_jump: float
    passed: bool


def relaxed_energy(rho: DensityField, potential: TrapPotential, rel: RelaxedLocalEnergy) -> float:
    """Relaxed functional: I(J(rho)) + I(V rho) - alpha * I(rho)."""
    v = np.asarray(potential.evaluate(rho.grid.points()), dtype=float)
    return float(
        rho.grid.integrate(rel.relaxed_local_energy(rho.values))
        + rho.grid.integrate(v * rho.values)
        - rel.alpha * rho.mass
    )


def relaxation_equivalence_check(
    potential: TrapPotential,
    rel: RelaxedLocalEnergy,
    grid: SpatialGrid,
    tol: float = 1e-6,
) -> EquivalenceReport:
    """Check that relaxing the local energy does not move the minimum.

    Solves the relaxed problem, evaluates the un-relaxed functional at the
    relaxed minimizer, and passes iff the two energies agree within ``tol``
    and the minimizer sits above the jump density on its support interior.
    """
    sol = minimize_1d_relaxed(potential, rel, grid, tol=min(tol, 1e-6))
    e_relaxed = relaxed_energy(sol.rho, potential, rel)
    constants = TFConstants(1, rel.c_tf, math.pi, source=_source_placeholder())
    e_tf = tf_energy(sol.rho, potential, constants, rel.i_w).total
    interior_min = sol.support_interior_min
    jump_ok = (not math.isfinite(interior_min)) or interior_min >= rel.rho_jump - tol
    diff = abs(e_tf - e_relaxed)
    return EquivalenceReport(
        relaxed_minimum=e_relaxed,
        tf_energy_at_minimizer=e_tf,
        difference=diff,
        jump_certificate_min=interior_min,
        rho_jump=rel.rho_jump,
        passed=bool(diff <= tol and jump_ok),
    )


def mass_curve(
    potential: TrapPotential,
    grid: SpatialGrid,
    rel: RelaxedLocalEnergy | None = None,
    constants: TFConstants | None = None,
    i_w: float = 0.0,
    lam_values: Array | None = None,
) -> tuple[Array, Array]:
    """Lam -> mass samples, for monotonicity diagnostics."""
    v = np.asarray(potential.evaluate(grid.points()), dtype=float)
    volume = grid.cell_volume
    if lam_values is None:
        lam_values = np.linspace(float(v.min()), float(v.min()) + 10.0, 41)
    masses = []
    for lam in lam_values:
        if grid.d == 2:
            if constants is None:
                raise ValidationError("2D mass curve needs constants")
            kappa = constants.c_tf - i_w
            masses.append(float(np.sum(np.clip(lam - v, 0.0, None)) * volume / (2.0 * kappa)))
        else:
            if rel is None:
                raise ValidationError("1D mass curve needs a RelaxedLocalEnergy")
            masses.append(float(np.sum(_pointwise_density(v, lam, rel)) * volume))
    return np.asarray(lam_values, dtype=float), np.asarray(masses)
