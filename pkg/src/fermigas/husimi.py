"""Squeezed coherent states, Husimi functions and the semiclassical bridge
between phase-space occupation functions and one-body operators.

The envelope is a fixed smooth compactly supported radial bump with unit L2
norm, localized at scale sqrt(hbar_x) in space and sqrt(hbar_p) in momentum
with hbar_x * hbar_p = hbar^2, hbar = N^(-1/d). Momentum sums use the grid
dual to the spatial lattice (half-width pi*hbar/h), on which plane-wave sums
are exact discrete deltas; the frame identities then close to quadrature
precision instead of leaking staircase error.

Operators are carried in occupancy form: ``matrix[i, j]`` is the h-weighted
kernel, so eigenvalues are natural occupations in [0, 1], the trace counts
particles, and inner products are ``h * f^dagger B g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import GridResolutionError, HypothesisViolationError, ValidationError
from .model import ScaledInteraction, SpatialGrid, TrapPotential
from .vlasov import MomentumGrid, PhaseSpaceDensity, brillouin_momentum_grid

Array = np.ndarray

TWO_PI = 2.0 * math.pi

MIN_POINTS_PER_ENVELOPE = 8


def _raw_bump(u: Array) -> Array:
    out = np.zeros_like(u, dtype=float)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ui**2))
    return out


def _raw_bump_derivative(u: Array) -> Array:
    out = np.zeros_like(u, dtype=float)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ui**2)) * (-2.0 * ui / (1.0 - ui**2) ** 2)
    return out


@lru_cache(maxsize=1)
def _envelope_constants() -> tuple[float, float]:
    """(normalization c with ||c*bump||_L2 = 1, squared L2 norm of the gradient)."""
    n = 1 << 17
    du = 2.0 / n
    u = -1.0 + du * (np.arange(n) + 0.5)
    norm2 = float(np.sum(_raw_bump(u) ** 2) * du)
    c = 1.0 / math.sqrt(norm2)
    grad2 = float(np.sum((c * _raw_bump_derivative(u)) ** 2) * du)
    return c, grad2


def envelope(u: Array) -> Array:
    """Unit-L2 radial bump profile, supported on |u| <= 1."""
    c, _ = _envelope_constants()
    return c * _raw_bump(np.asarray(u, dtype=float))


def envelope_gradient_norm_sq() -> float:
    """Squared L2 norm of the envelope gradient (1D profile)."""
    return _envelope_constants()[1]


@dataclass(frozen=True)
class CoherentFamily:
    """Squeezing scales of the coherent frame for N particles in 1D.

    ``hbar_x * hbar_p = hbar^2`` is enforced at construction within 1e-12
    relative. The defaults ``hbar_x = N^(-beta-1)``, ``hbar_p = N^(beta-1)``
    keep both scales small while the spatial smearing stays below the
    interaction range.
    """

    n_particles: int
    hbar_x: float
    hbar_p: float
    d: int = 1

    def __post_init__(self):
        if self.d != 1:
            raise ValidationError("coherent-frame operators are desk-scale 1D only")
        if self.n_particles < 1:
            raise ValidationError("need at least one particle")
        if self.hbar_x <= 0 or self.hbar_p <= 0:
            raise ValidationError("squeezing scales must be positive")
        product = self.hbar_x * self.hbar_p
        if abs(product - self.hbar**2) > 1e-12 * self.hbar**2:
            raise ValidationError(
                f"hbar_x * hbar_p = {product:.3e} must equal hbar^2 = {self.hbar**2:.3e}"
            )

    @property
    def hbar(self) -> float:
        return float(self.n_particles) ** (-1.0 / self.d)

    @classmethod
    def default(cls, n_particles: int, beta: float, hbar_x: float | None = None) -> "CoherentFamily":
        hbar = float(n_particles) ** -1.0
        if hbar_x is None:
            hbar_x = float(n_particles) ** (-beta - 1.0)
        return cls(n_particles, hbar_x, hbar**2 / hbar_x)

    @property
    def envelope_width(self) -> float:
        return 2.0 * math.sqrt(self.hbar_x)

    def check_resolution(self, grid: SpatialGrid):
        points = self.envelope_width / grid.spacing
        if points < MIN_POINTS_PER_ENVELOPE:
            raise GridResolutionError(
                f"grid puts only {points:.1f} points across the envelope width "
                f"{self.envelope_width:.3g}; need >= {MIN_POINTS_PER_ENVELOPE}"
            )

    def envelope_at(self, y: Array, center: float) -> Array:
        """f^h(y - center) = hbar_x^(-1/4) f((y - center)/sqrt(hbar_x))."""
        s = math.sqrt(self.hbar_x)
        return self.hbar_x**-0.25 * envelope((np.asarray(y) - center) / s)


def coherent_state(x: float, p: float, family: CoherentFamily, grid: SpatialGrid) -> Array:
    """Grid samples of the squeezed coherent state centered at (x, p)."""
    if grid.d != 1:
        raise ValidationError("coherent states are sampled on 1D grids")
    family.check_resolution(grid)
    y = grid.axis()
    return family.envelope_at(y, x) * np.exp(1j * p * y / family.hbar)


@dataclass
class OneBodyOperator:
    """Occupancy-form operator on the grid: eigenvalues are occupations."""

    grid: SpatialGrid
    matrix: Array
    is_density_like: bool = True

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix)
        m = self.grid.size
        if self.matrix.shape != (m, m):
            raise ValidationError(f"operator matrix must be {(m, m)}")
        herm = np.max(np.abs(self.matrix - self.matrix.T.conj()))
        scale = max(1.0, float(np.max(np.abs(self.matrix))))
        if herm > 1e-10 * scale:
            raise ValidationError(f"operator is not Hermitian (defect {herm:.3e})")

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def occupations(self) -> Array:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T.conj()))

    def density(self) -> Array:
        """Spatial density rho_gamma; integrates to the trace."""
        return np.real(np.diag(self.matrix)) / self.grid.spacing

    def check_density_bounds(self, tol: float = 1e-8):
        occ = self.occupations()
        if occ.min() < -tol or occ.max() > 1.0 + tol:
            raise ValidationError(
                f"occupations outside [0, 1]: min={occ.min():.3e}, max={occ.max():.3e}"
            )


def slater_operator(orbitals: Array, grid: SpatialGrid) -> OneBodyOperator:
    """gamma = sum_a |u_a><u_a| for plainly orthonormal orbital columns."""
    n = orbitals.shape[1]
    overlap = orbitals.T.conj() @ orbitals
    if not np.allclose(overlap, np.eye(n), atol=1e-8):
        raise ValidationError("orbital columns must be orthonormal")
    return OneBodyOperator(grid, orbitals @ orbitals.T.conj())


def lowest_orbitals(grid: SpatialGrid, potential: TrapPotential, n: int, hbar: float) -> Array:
    """Columns = N lowest eigenvectors of the lattice one-body Hamiltonian."""
    from .oracle import one_body_matrix

    mat = one_body_matrix(grid, potential, hbar)
    _, vecs = np.linalg.eigh(mat)
    return vecs[:, :n]


# ---------------------------------------------------------------------------
# Husimi tables
# ---------------------------------------------------------------------------


@dataclass
class HusimiTable:
    """Husimi values, either on a full (x, p) product grid or at samples."""

    k: int
    family: CoherentFamily
    x_axis: Array | None = None
    p_axis: Array | None = None
    values: Array | None = None
    samples: Array | None = None

    def phase_space_integral(self, grid: SpatialGrid, momentum: MomentumGrid) -> float:
        """Plain double integral of the tabulated values (k = 1 tables)."""
        if self.values is None:
            raise ValidationError("integral needs a grid-form table")
        return float(np.sum(self.values) * grid.cell_volume * momentum.cell_volume)


def _window_matrix(family: CoherentFamily, grid: SpatialGrid, centers: Array) -> Array:
    """W[i, y] = f^h(y - centers[i]) on the grid axis."""
    y = grid.axis()
    return family.envelope_at(y[None, :], 0.0 * y[None, :] + centers[:, None])


def _operator_eigenpairs(gamma: OneBodyOperator, tol: float = 1e-12):
    vals, vecs = np.linalg.eigh(0.5 * (gamma.matrix + gamma.matrix.T.conj()))
    keep = vals > tol
    return vals[keep], vecs[:, keep]


def husimi_grid_table(
    gamma: OneBodyOperator,
    family: CoherentFamily,
    momentum: MomentumGrid | None = None,
) -> HusimiTable:
    """One-particle Husimi function on the full spatial x dual-momentum grid.

    m(x, p) = h * <f_{x,p}| B |f_{x,p}> computed through the eigenpairs of B,
    so the cost is one windowed Fourier transform per occupied mode.
    """
    grid = gamma.grid
    family.check_resolution(grid)
    if momentum is None:
        momentum = brillouin_momentum_grid(grid, family.hbar)
    y = grid.axis()
    p = momentum.axis()
    w = _window_matrix(family, grid, y)  # sample x at the grid points
    phases = np.exp(-1j * np.outer(y, p) / family.hbar)  # (y, p)
    vals, vecs = _operator_eigenpairs(gamma)
    h = grid.spacing
    table = np.zeros((grid.size, momentum.size))
    for lam, u in zip(vals, vecs.T):
        amp = (w * u[None, :]) @ phases  # (x, p)
        table += lam * (h * np.abs(amp)) ** 2 / h
    return HusimiTable(k=1, family=family, x_axis=y, p_axis=p, values=table)


def husimi_at_samples(source, family: CoherentFamily, samples: Array, k: int = 1) -> Array:
    """Husimi values at explicit phase-space samples.

    ``source`` is a OneBodyOperator (k = 1, or k = 2 through the Wick rule
    for Slater-type operators) or an oracle FermionState (any k <= N, via
    annihilation on the occupation basis). Samples have shape (n, 2) for
    k = 1 and (n, 4) for k = 2 as (x1, p1, x2, p2).
    """
    from .oracle import FermionState

    samples = np.asarray(samples, dtype=float)
    if isinstance(source, OneBodyOperator):
        if k == 1:
            return _husimi1_operator(source, family, samples)
        if k == 2:
            return _husimi2_slater(source, family, samples)
        raise ValidationError("operator sources support k in {1, 2}")
    if isinstance(source, FermionState):
        if k > source.n_particles:
            raise ValidationError(f"k={k} exceeds N={source.n_particles}")
        return _husimi_state(source, family, samples, k)
    raise ValidationError(f"unsupported Husimi source {type(source).__name__}")


def _husimi1_operator(gamma: OneBodyOperator, family: CoherentFamily, samples: Array) -> Array:
    grid = gamma.grid
    family.check_resolution(grid)
    h = grid.spacing
    out = np.zeros(samples.shape[0])
    for idx, (x, p) in enumerate(samples):
        f = coherent_state(x, p, family, grid)
        out[idx] = float(np.real(h * (f.conj() @ (gamma.matrix @ f))))
    return out


def _husimi2_slater(gamma: OneBodyOperator, family: CoherentFamily, samples: Array) -> Array:
    # Wick rule for gamma^(2) = gamma (x) gamma (1 - Ex):
    #   m2(z1, z2) = m1(z1) m1(z2) - |<f_z1| gamma |f_z2>|^2
    grid = gamma.grid
    h = grid.spacing
    out = np.zeros(samples.shape[0])
    for idx, (x1, p1, x2, p2) in enumerate(samples):
        f1 = coherent_state(x1, p1, family, grid)
        f2 = coherent_state(x2, p2, family, grid)
        m1a = np.real(h * (f1.conj() @ (gamma.matrix @ f1)))
        m1b = np.real(h * (f2.conj() @ (gamma.matrix @ f2)))
        cross = h * (f1.conj() @ (gamma.matrix @ f2))
        out[idx] = float(m1a * m1b - np.abs(cross) ** 2)
    return out


def annihilate(state, orbital: Array):
    """Apply a(phi) = sum_i sqrt(h) conj(phi_i) c_i to an occupation-basis state.

    Returns (child occupation array, child coefficients) over the (N-1)-basis.
    """
    from .oracle import DiscreteHamiltonian  # noqa: F401  (type context only)

    ham = state.ham
    n = ham.n_particles
    occ = ham.occupations
    coeff = state.coefficients
    sqrt_h = math.sqrt(ham.grid.spacing)
    children: dict[tuple[int, ...], complex] = {}
    for row in range(occ.shape[0]):
        c = coeff[row]
        if c == 0.0:
            continue
        sites = occ[row]
        for pos in range(n):
            amp = np.conj(orbital[sites[pos]]) * sqrt_h * ((-1) ** pos) * c
            if amp == 0.0:
                continue
            child = tuple(np.delete(sites, pos))
            children[child] = children.get(child, 0.0) + amp
    return children


def _husimi_state(state, family: CoherentFamily, samples: Array, k: int) -> Array:
    grid = state.ham.grid
    out = np.zeros(samples.shape[0])
    for idx, row in enumerate(samples):
        zs = row.reshape(k, 2)
        current = {tuple(state.ham.occupations[r]): state.coefficients[r] for r in range(state.ham.dim)}
        current = {s: c for s, c in current.items() if c != 0.0}
        value_ok = True
        for x, p in zs:
            f = coherent_state(x, p, family, grid)
            nxt: dict[tuple[int, ...], complex] = {}
            sqrt_h = math.sqrt(grid.spacing)
            for sites, c in current.items():
                for pos, site in enumerate(sites):
                    amp = np.conj(f[site]) * sqrt_h * ((-1) ** pos) * c
                    if amp == 0.0:
                        continue
                    child = sites[:pos] + sites[pos + 1 :]
                    nxt[child] = nxt.get(child, 0.0) + amp
            current = nxt
            if not current:
                value_ok = False
                break
        out[idx] = sum(abs(c) ** 2 for c in current.values()) if value_ok else 0.0
    return out


def husimi(source, family: CoherentFamily, k: int = 1, samples: Array | None = None,
           momentum: MomentumGrid | None = None):
    """Husimi function of an operator or state.

    With ``samples=None`` and k=1 returns the full grid table; otherwise the
    values at the given samples.
    """
    from .oracle import FermionState

    if isinstance(source, FermionState) and k > source.n_particles:
        raise ValidationError(f"k={k} exceeds N={source.n_particles}")
    if samples is None:
        if k != 1:
            raise ValidationError("full tables are only built for k = 1")
        if isinstance(source, FermionState):
            from .oracle import reduced_densities

            gamma = OneBodyOperator(source.ham.grid, reduced_densities(source, k=1).gamma1)
            return husimi_grid_table(gamma, family, momentum)
        return husimi_grid_table(source, family, momentum)
    return husimi_at_samples(source, family, np.asarray(samples, dtype=float), k=k)


# ---------------------------------------------------------------------------
# Frame identities and the measure -> operator construction
# ---------------------------------------------------------------------------


def frame_apply(psi: Array, family: CoherentFamily, grid: SpatialGrid,
                momentum: MomentumGrid | None = None) -> Array:
    """Apply the frame operator (double integral of |f><f|) to a vector.

    For an adequately resolved grid this returns (2 pi hbar)^d psi away from
    the box edges (resolution of the identity).
    """
    family.check_resolution(grid)
    if momentum is None:
        momentum = brillouin_momentum_grid(grid, family.hbar)
    y = grid.axis()
    w = _window_matrix(family, grid, y)
    h, dp = grid.spacing, momentum.cell_volume
    out = np.zeros(grid.size, dtype=complex)
    for p in momentum.axis():
        phase = np.exp(1j * p * y / family.hbar)
        g = h * (w @ (psi * np.conj(phase)))  # <f_{x_i, p}, psi>
        out += h * dp * phase * (w.T @ g)  # x, p quadrature of f_{x,p} <f, psi>
    return out


def semiclassical_fourier(u: Array, grid: SpatialGrid, hbar: float, momentum: MomentumGrid) -> Array:
    """F[u](p) = (2 pi hbar)^(-1/2) * h * sum_y u(y) exp(-i p y / hbar)."""
    y = grid.axis()
    phases = np.exp(-1j * np.outer(momentum.axis(), y) / hbar)
    return (TWO_PI * hbar) ** -0.5 * grid.spacing * (phases @ u)


def momentum_density(gamma: OneBodyOperator, hbar: float, momentum: MomentumGrid) -> Array:
    """t_gamma(p) = sum_a lambda_a |F[u_a](p)|^2; integrates to the trace.

    Occupancy-form eigenvectors are plainly normalized; they are rescaled by
    1/sqrt(h) to unit L2 norm before the transform.
    """
    vals, vecs = _operator_eigenpairs(gamma)
    scale = 1.0 / math.sqrt(gamma.grid.spacing)
    t = np.zeros(momentum.size)
    for lam, u in zip(vals, vecs.T):
        t += lam * np.abs(semiclassical_fourier(u * scale, gamma.grid, hbar, momentum)) ** 2
    return t


def marginal_identity_report(gamma: OneBodyOperator, family: CoherentFamily,
                             momentum: MomentumGrid | None = None) -> dict:
    """L1 defects of the two marginal identities of the one-particle Husimi.

    Space: N (2 pi)^-d * integral of m over p  =  rho_gamma * |f^h|^2.
    Momentum: N (2 pi)^-d * integral of m over x  =  t_gamma * |g^h|^2,
    with the momentum convolution taken periodically over the dual cell
    (both sides are trigonometric polynomials on the momentum lattice).
    """
    grid = gamma.grid
    if momentum is None:
        momentum = brillouin_momentum_grid(grid, family.hbar)
    n = family.n_particles
    table = husimi_grid_table(gamma, family, momentum)
    h, dp = grid.spacing, momentum.cell_volume
    y = grid.axis()

    lhs_rho = n / (TWO_PI * 1.0) * table.values.sum(axis=1) * dp
    windows = _window_matrix(family, grid, y)
    rho1 = np.real(np.diag(gamma.matrix)) / h
    rhs_rho = (windows**2 @ rho1) * h
    space_gap = float(np.sum(np.abs(lhs_rho - rhs_rho)) * h)

    lhs_t = n / TWO_PI * table.values.sum(axis=0) * h
    t_gamma = momentum_density(gamma, family.hbar, momentum)
    env = family.envelope_at(y, 0.0)
    k = momentum.size
    offsets = np.arange(k) * dp  # periodic offset lattice of the dual cell
    phases = np.exp(-1j * np.outer(offsets, y) / family.hbar)
    g_off = (TWO_PI * family.hbar) ** -0.5 * h * (phases @ env)
    g2 = np.abs(g_off) ** 2
    idx = np.arange(k)
    conv = np.array([np.sum(t_gamma * g2[(i - idx) % k]) for i in range(k)]) * dp
    momentum_gap = float(np.sum(np.abs(lhs_t - conv)) * dp)
    return {
        "space_l1_gap": space_gap,
        "momentum_l1_gap": momentum_gap,
        "trace_normalized": table.phase_space_integral(grid, momentum) / (TWO_PI * family.hbar) / n,
    }


def gamma_from_measure(
    m: PhaseSpaceDensity,
    family: CoherentFamily,
    mass_rtol: float = 0.02,
    bound_tol: float = 1e-9,
) -> OneBodyOperator:
    """Coherent quantization of an occupation function.

    B = (2 pi hbar)^-d * sum over the product grid of
    ``m(x, p) |f_{x,p}><f_{x,p}| h dp``. Hypotheses checked: the phase-space
    mass equals one particle-normalized unit (double integral (2 pi)^d)
    within ``mass_rtol``, 0 <= m <= 1, and the spatial density vanishes near
    the box edge so the frame truncation is inert. The result satisfies
    0 <= B <= 1 up to quadrature and has trace N up to the mass defect.
    """
    grid = m.grid
    family.check_resolution(grid)
    if not np.any(m.values):
        return OneBodyOperator(grid, np.zeros((grid.size, grid.size)))
    mass = m.normalization()
    if abs(mass - 1.0) > mass_rtol:
        raise HypothesisViolationError(
            f"phase-space mass {mass:.6g} deviates from 1 beyond rtol {mass_rtol}"
        )
    if float(np.min(m.values)) < -bound_tol or float(np.max(m.values)) > 1.0 + bound_tol:
        raise HypothesisViolationError("occupation function must satisfy 0 <= m <= 1")
    rho = m.spatial_density()
    edge = max(2, int(math.ceil(family.envelope_width / grid.spacing)))
    if float(np.max(rho[:edge], initial=0.0)) > 1e-9 or float(np.max(rho[-edge:], initial=0.0)) > 1e-9:
        raise HypothesisViolationError(
            "spatial density of m must vanish within an envelope width of the box edge"
        )

    y = grid.axis()
    w = _window_matrix(family, grid, y)
    h, dp = grid.spacing, m.momentum.cell_volume
    # one h from the x quadrature, one to convert the kernel to occupancy form
    coef = h * h * dp / (TWO_PI * family.hbar)
    out = np.zeros((grid.size, grid.size), dtype=complex)
    p_axis = m.momentum.axis()
    for k_idx in range(m.momentum.size):
        col = m.values[:, k_idx]
        if not np.any(col):
            continue
        s = w.T @ (col[:, None] * w)  # real symmetric
        phase = np.exp(1j * p_axis[k_idx] * y / family.hbar)
        out += coef * (phase[:, None] * s * phase[None, :].conj())
    out = 0.5 * (out + out.T.conj())
    return OneBodyOperator(grid, out)


def hartree_energy(
    gamma: OneBodyOperator,
    potential: TrapPotential,
    w_n: ScaledInteraction | None,
    n_particles: int,
) -> dict:
    """hbar^2 tr(-Lap gamma) + tr(V gamma) - N^-1 * double integral (w_N * rho) rho.

    The Laplacian is the fixed 3-point lattice stencil; the interaction is a
    direct double quadrature of the scaled kernel against the operator's
    spatial density.
    """
    grid = gamma.grid
    hbar = float(n_particles) ** -1.0
    h = grid.spacing
    b = gamma.matrix
    hop = hbar**2 / h**2
    diag = np.real(np.diag(b))
    off = np.real(np.diag(b, 1))
    kinetic = hop * (2.0 * diag.sum() - 2.0 * off.sum())
    v = np.asarray(potential.evaluate(grid.points()), dtype=float)
    pot = float(v @ diag)
    inter = 0.0
    if w_n is not None:
        rho = diag / h
        m = grid.points_per_axis
        seps = np.abs(np.arange(m)[:, None] - np.arange(m)[None, :]) * h
        w_full = np.asarray(w_n.evaluate(seps.reshape(-1, 1)), dtype=float).reshape(m, m)
        inter = -float(rho @ w_full @ rho) * h * h / n_particles
    return {
        "kinetic_term": float(kinetic),
        "potential_term": pot,
        "interaction_term": float(inter),
        "total": float(kinetic + pot + inter),
    }


# ---------------------------------------------------------------------------
# Smearing estimates and the error decomposition
# ---------------------------------------------------------------------------


def smearing_errors(
    w_eval,
    support_radius: float,
    hbar_x_values,
    n_points: int = 1 << 15,
) -> list[dict]:
    """L1 smearing defect of a kernel under single and double envelope blur.

    For each hbar_x: err = || w - w * phi (* phi) ||_L1 with phi = |f^h|^2,
    reported together with the ratios err / (sqrt(hbar_x) * ||w'||_L1). The
    gradient norm is the fine-grid total variation, so kernels with steep
    edges are handled verbatim.
    """
    records = []
    for hbar_x in hbar_x_values:
        s = math.sqrt(float(hbar_x))
        extent = support_radius + 3.0 * s + 0.1 * support_radius
        h = 2.0 * extent / n_points
        y = -extent + h * (np.arange(n_points) + 0.5)
        w_vals = np.asarray(w_eval(y[:, None]), dtype=float)
        n_phi = int(2 * math.ceil(s / h)) + 1
        u = (np.arange(n_phi) - (n_phi - 1) / 2) * h / s
        phi = envelope(u) ** 2 / s
        phi = phi / (phi.sum() * h)  # unit mass on the grid
        once = np.convolve(w_vals, phi, mode="same") * h
        twice = np.convolve(once, phi, mode="same") * h
        grad_l1 = float(np.sum(np.abs(np.diff(w_vals))))
        err1 = float(np.sum(np.abs(w_vals - once)) * h)
        err2 = float(np.sum(np.abs(w_vals - twice)) * h)
        denom = s * grad_l1
        records.append(
            {
                "hbar_x": float(hbar_x),
                "error_single": err1,
                "error_double": err2,
                "grad_l1": grad_l1,
                "ratio_single": err1 / denom,
                "ratio_double": err2 / denom,
            }
        )
    return records


@dataclass
class SemiclassicalErrorReport:
    kinetic_husimi: float
    kinetic_spectral: float
    measured_correction: float
    expected_correction: float
    potential_husimi: float
    potential_operator: float
    potential_gap: float
    potential_gap_scale: float
    smearing: list[dict]


def semiclassical_error_decomposition(
    gamma: OneBodyOperator,
    family: CoherentFamily,
    potential: TrapPotential,
    w_n: ScaledInteraction | None = None,
    hbar_x_values=(1e-2, 1e-3, 1e-4),
) -> SemiclassicalErrorReport:
    """Split the Husimi-level energy from the operator-level energy.

    The kinetic gap is the exact identity
    ``(2 pi hbar)^-d * integral |p|^2 m - tr(-hbar^2 Lap gamma)
      = N * hbar_p * ||grad f||^2``
    (per particle after dividing by N); the operator kinetic trace is taken
    in the same momentum representation, so the identity is clean of stencil
    artifacts. The potential gap is reported against its sqrt(hbar_x) scale,
    and the kernel smearing table carries fitted constants per hbar_x.
    """
    grid = gamma.grid
    momentum = brillouin_momentum_grid(grid, family.hbar)
    table = husimi_grid_table(gamma, family, momentum)
    n = family.n_particles
    hbar = family.hbar
    h, dp = grid.spacing, momentum.cell_volume
    p2 = momentum.axis() ** 2
    kin_husimi = float((table.values @ p2).sum() * h * dp) / (TWO_PI * hbar)
    t_gamma = momentum_density(gamma, hbar, momentum)
    kin_spectral = float((t_gamma * p2).sum() * dp)
    measured = (kin_husimi - kin_spectral) / n
    expected = family.hbar_p * envelope_gradient_norm_sq()

    v = np.asarray(potential.evaluate(grid.points()), dtype=float)
    rho_blur = (table.values.sum(axis=1) * dp) / (TWO_PI * hbar)  # rho_gamma * |f^h|^2
    pot_husimi = float((v * rho_blur).sum() * h)
    pot_operator = float(v @ np.real(np.diag(gamma.matrix)))
    gap = abs(pot_husimi - pot_operator)
    gap_scale = math.sqrt(family.hbar_x) * n ** (1.0 + 0.5 * getattr(getattr(w_n, "profile", None), "beta", 0.0))

    smearing = []
    if w_n is not None:
        smearing = smearing_errors(w_n.evaluate, w_n.support_radius, hbar_x_values)
    return SemiclassicalErrorReport(
        kinetic_husimi=kin_husimi,
        kinetic_spectral=kin_spectral,
        measured_correction=measured,
        expected_correction=expected,
        potential_husimi=pot_husimi,
        potential_operator=pot_operator,
        potential_gap=gap,
        potential_gap_scale=gap_scale,
        smearing=smearing,
    )
