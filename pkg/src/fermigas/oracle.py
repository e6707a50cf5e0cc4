"""Exact small-N ground states of the discretized many-body Hamiltonian.

Spinless lattice fermions on a 1D grid, at most one particle per site; the
occupation basis enforces antisymmetry structurally. The Hamiltonian is

    H = sum_j (-hbar^2 Lap_j) + sum_j V(x_j) - N^-1 sum_{j<k} w_N(x_j - x_k)

with hbar = 1/N, a 3-point Laplacian stencil and Dirichlet walls. All
assertions downstream are made against this discrete model itself; the
continuum is approached only under grid refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.sparse as sp

from .errors import CapExceededError, ConvergenceError, ValidationError
from .model import ScaledInteraction, SpatialGrid, TrapPotential

Array = np.ndarray

BASIS_CAP = 2_000_000
DENSE_FALLBACK_DIM = 2000

_POP16 = np.array([bin(i).count("1") for i in range(1 << 16)], dtype=np.int64)


def _popcount64(masks: Array) -> Array:
    m = masks.astype(np.uint64)
    out = np.zeros(m.shape, dtype=np.int64)
    for shift in (0, 16, 32, 48):
        out += _POP16[((m >> np.uint64(shift)) & np.uint64(0xFFFF)).astype(np.int64)]
    return out


def one_body_matrix(grid: SpatialGrid, potential: TrapPotential, hbar: float) -> Array:
    """Dense one-body matrix: 3-point -hbar^2*Laplacian plus diagonal V."""
    if grid.d != 1:
        raise ValidationError("the lattice oracle is 1D only")
    m = grid.points_per_axis
    h = grid.spacing
    t = hbar**2 / h**2
    mat = np.zeros((m, m))
    np.fill_diagonal(mat, 2.0 * t)
    idx = np.arange(m - 1)
    mat[idx, idx + 1] = -t
    mat[idx + 1, idx] = -t
    mat[np.diag_indices(m)] += np.asarray(potential.evaluate(grid.points()), dtype=float)
    return mat


@dataclass
class DiscreteHamiltonian:
    """Sparse many-body Hamiltonian over the occupation basis."""

    grid: SpatialGrid
    potential: TrapPotential
    n_particles: int
    w_n: ScaledInteraction | None = None
    basis_cap: int = BASIS_CAP

    occupations: Array = field(init=False)  # (dim, N) sorted site indices
    masks: Array = field(init=False)
    matrix: sp.csr_matrix = field(init=False)
    hbar: float = field(init=False)

    def __post_init__(self):
        if self.grid.d != 1:
            raise ValidationError("the many-body oracle supports d=1 only")
        m = self.grid.points_per_axis
        n = self.n_particles
        if not (1 <= n <= m):
            raise ValidationError(f"need 1 <= N <= M, got N={n}, M={m}")
        dim = math.comb(m, n)
        if dim > self.basis_cap:
            raise CapExceededError(
                f"occupation basis C({m},{n}) = {dim} exceeds the cap {self.basis_cap}"
            )
        if m > 63:
            raise ValidationError("lattice limited to 63 sites (uint64 masks)")
        self.hbar = 1.0 / n
        self.occupations = np.array(list(combinations(range(m), n)), dtype=np.int64)
        self.masks = np.zeros(dim, dtype=np.uint64)
        for col in range(n):
            self.masks |= np.uint64(1) << self.occupations[:, col].astype(np.uint64)
        self.matrix = self._build_matrix()

    @property
    def dim(self) -> int:
        return self.occupations.shape[0]

    def site_distance_couplings(self) -> Array:
        """w_N sampled at lattice separations 0..M-1 (0 where no coupling)."""
        m = self.grid.points_per_axis
        if self.w_n is None:
            return np.zeros(m)
        seps = (np.arange(m) * self.grid.spacing)[:, None]
        return np.asarray(self.w_n.evaluate(seps), dtype=float)

    def _build_matrix(self) -> sp.csr_matrix:
        m = self.grid.points_per_axis
        n = self.n_particles
        dim = self.dim
        occ = self.occupations
        hop = self.hbar**2 / self.grid.spacing**2
        v = np.asarray(self.potential.evaluate(self.grid.points()), dtype=float)

        diag = v[occ].sum(axis=1) + 2.0 * hop * n
        w_table = self.site_distance_couplings()
        if self.w_n is not None:
            for a in range(n):
                for b in range(a + 1, n):
                    diag -= w_table[occ[:, b] - occ[:, a]] / n

        # Nearest-neighbor hops; the Jordan-Wigner string between adjacent
        # sites is empty, so every hopping element is -hop.
        order = np.argsort(self.masks, kind="stable")
        sorted_masks = self.masks[order]
        rows, cols = [], []
        one = np.uint64(1)
        for col in range(n):
            sites = occ[:, col]
            for step in (-1, 1):
                target = sites + step
                ok = (target >= 0) & (target < m)
                ok &= ((self.masks >> target.clip(0, m - 1).astype(np.uint64)) & one) == 0
                src = np.nonzero(ok)[0]
                if src.size == 0:
                    continue
                new_masks = (
                    self.masks[src]
                    ^ (one << sites[src].astype(np.uint64))
                    | (one << target[src].astype(np.uint64))
                )
                pos = np.searchsorted(sorted_masks, new_masks)
                dst = order[pos]
                rows.append(src)
                cols.append(dst)
        rows = np.concatenate(rows) if rows else np.array([], dtype=np.int64)
        cols = np.concatenate(cols) if cols else np.array([], dtype=np.int64)
        data = np.full(rows.shape, -hop)
        mat = sp.coo_matrix((data, (rows, cols)), shape=(dim, dim))
        mat = mat + sp.diags(diag)
        return mat.tocsr()

    def index_of(self, sites: tuple[int, ...]) -> int:
        mask = np.uint64(0)
        for s in sites:
            mask |= np.uint64(1) << np.uint64(s)
        order = np.argsort(self.masks, kind="stable")
        pos = np.searchsorted(self.masks[order], mask)
        return int(order[pos])


@dataclass
class FermionState:
    """Normalized coefficient vector over the occupation basis."""

    ham: DiscreteHamiltonian
    coefficients: Array

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float).ravel()
        if self.coefficients.shape != (self.ham.dim,):
            raise ValidationError("coefficient vector does not match the basis size")
        norm = np.linalg.norm(self.coefficients)
        if abs(norm - 1.0) > 1e-10:
            raise ValidationError(f"state norm {norm} deviates from 1 beyond 1e-10")

    @property
    def n_particles(self) -> int:
        return self.ham.n_particles

    def energy(self) -> float:
        return float(self.coefficients @ (self.ham.matrix @ self.coefficients))


def expectation(ham: DiscreteHamiltonian, coefficients: Array) -> float:
    """Rayleigh quotient of an arbitrary (not necessarily normalized) vector."""
    c = np.asarray(coefficients, dtype=float).ravel()
    nrm2 = float(c @ c)
    if nrm2 == 0.0:
        raise ValidationError("zero trial vector")
    return float(c @ (ham.matrix @ c)) / nrm2


def _lanczos_lowest(matvec, dim: int, tol: float, rng, max_krylov: int = 160, max_restarts: int = 40):
    """Restarted Lanczos with full reorthogonalization for the lowest pair."""
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    theta = math.inf
    for _ in range(max_restarts):
        k = min(max_krylov, dim)
        basis = np.zeros((k, dim))
        alphas = np.zeros(k)
        betas = np.zeros(max(k - 1, 0))
        basis[0] = v
        w = matvec(v)
        alphas[0] = v @ w
        used = 1
        for j in range(1, k):
            w = w - alphas[j - 1] * basis[j - 1]
            if j >= 2:
                w = w - betas[j - 2] * basis[j - 2]
            # full reorthogonalization against every stored vector
            w -= basis[:j].T @ (basis[:j] @ w)
            w -= basis[:j].T @ (basis[:j] @ w)
            beta = np.linalg.norm(w)
            if beta < 1e-13:
                break
            betas[j - 1] = beta
            basis[j] = w / beta
            w = matvec(basis[j])
            alphas[j] = basis[j] @ w
            used = j + 1
        t = np.diag(alphas[:used])
        if used > 1:
            t += np.diag(betas[: used - 1], 1) + np.diag(betas[: used - 1], -1)
        evals, evecs = np.linalg.eigh(t)
        theta = float(evals[0])
        x = basis[:used].T @ evecs[:, 0]
        x /= np.linalg.norm(x)
        residual = float(np.linalg.norm(matvec(x) - theta * x))
        if residual <= tol:
            return theta, x, residual
        v = x
    raise ConvergenceError(
        f"Lanczos did not reach residual {tol} (last residual {residual:.3e})"
    )


def ground_state(ham: DiscreteHamiltonian, tol: float = 1e-9, seed: int = 7) -> tuple[float, FermionState]:
    """Lowest eigenpair; dense below DENSE_FALLBACK_DIM, else restarted Lanczos."""
    if ham.dim <= DENSE_FALLBACK_DIM:
        dense = ham.matrix.toarray()
        evals, evecs = np.linalg.eigh(dense)
        energy, vec = float(evals[0]), evecs[:, 0]
    else:
        rng = np.random.default_rng(seed)
        energy, vec, _ = _lanczos_lowest(lambda x: ham.matrix @ x, ham.dim, tol, rng)
    vec = vec / np.linalg.norm(vec)
    return energy, FermionState(ham, vec)


@dataclass
class ReducedDensities:
    """One- and two-point reduced objects of a lattice state.

    ``rho1`` integrates to N, ``rho2`` (ordered-pair density, zero on the
    diagonal) integrates to C(N, 2), and ``gamma1`` is the occupancy-form
    one-body matrix whose eigenvalues are the natural occupations in [0, 1].
    """

    rho1: Array
    rho2: Array
    gamma1: Array
    grid: SpatialGrid
    n_particles: int

    def occupations(self) -> Array:
        return np.linalg.eigvalsh(gamma_hermitize(self.gamma1))


def gamma_hermitize(g: Array) -> Array:
    return 0.5 * (g + g.T.conj())


def reduced_densities(state: FermionState, k: int = 2) -> ReducedDensities:
    """Site occupations, pair density and the one-body matrix of a state."""
    ham = state.ham
    n = ham.n_particles
    if k > n:
        raise ValidationError(f"k={k} exceeds the particle number N={n}")
    m = ham.grid.points_per_axis
    h = ham.grid.spacing
    w2 = state.coefficients**2
    occ = ham.occupations

    site_occ = np.zeros(m)
    np.add.at(site_occ, occ.ravel(), np.repeat(w2, n))

    pair = np.zeros((m, m))
    for a in range(n):
        for b in range(a + 1, n):
            np.add.at(pair, (occ[:, a], occ[:, b]), w2)
    pair = pair + pair.T  # ordered pairs; diagonal stays exactly zero

    gamma = np.diag(site_occ)
    order = np.argsort(ham.masks, kind="stable")
    sorted_masks = ham.masks[order]
    coeffs = state.coefficients
    one = np.uint64(1)
    for i in range(m):
        bit_i = one << np.uint64(i)
        has_i = (ham.masks & bit_i) != 0
        for j in range(i + 1, m):
            bit_j = one << np.uint64(j)
            sel = np.nonzero(has_i & ((ham.masks & bit_j) == 0))[0]
            if sel.size == 0:
                continue
            new_masks = (ham.masks[sel] ^ bit_i) | bit_j
            dst = order[np.searchsorted(sorted_masks, new_masks)]
            # Jordan-Wigner string: parity of occupation strictly between i and j
            between = ((one << np.uint64(j)) - one) ^ ((one << np.uint64(i + 1)) - one)
            parity = _popcount64(ham.masks[sel] & between) & 1
            signs = 1.0 - 2.0 * parity
            val = float(np.sum(signs * coeffs[sel] * coeffs[dst]))
            gamma[i, j] += val
            gamma[j, i] += val

    return ReducedDensities(
        rho1=site_occ / h,
        rho2=pair / (2.0 * h * h),
        gamma1=gamma,
        grid=ham.grid,
        n_particles=n,
    )


def slater_energy(ham: DiscreteHamiltonian, orbitals: Array) -> float:
    """Exact lattice energy of the Slater determinant of orthonormal orbitals.

    Wick's rule gives <n_i n_j> = nu_i nu_j - |G_ij|^2 for the
    density-density interaction; the one-body part is the orbital trace of
    the lattice kinetic-plus-potential matrix.
    """
    n = ham.n_particles
    if orbitals.shape != (ham.grid.points_per_axis, n):
        raise ValidationError(f"orbitals must have shape (M, N) = {(ham.grid.points_per_axis, n)}")
    overlap = orbitals.T.conj() @ orbitals
    if not np.allclose(overlap, np.eye(n), atol=1e-8):
        raise ValidationError("orbitals must be orthonormal in the plain lattice product")
    t_mat = one_body_matrix(ham.grid, ham.potential, ham.hbar)
    e_one = float(np.real(np.einsum("ia,ij,ja->", orbitals.conj(), t_mat, orbitals)))
    if ham.w_n is None:
        return e_one
    g = orbitals @ orbitals.T.conj()
    nu = np.real(np.diag(g))
    w_table = ham.site_distance_couplings()
    m = ham.grid.points_per_axis
    w_full = w_table[np.abs(np.arange(m)[:, None] - np.arange(m)[None, :])]
    np.fill_diagonal(w_full, 0.0)  # i < j pairing excludes self-interaction
    direct = 0.5 * float(nu @ w_full @ nu)
    exchange = 0.5 * float(np.sum(w_full * np.abs(g) ** 2))
    return e_one - (direct - exchange) / n


@dataclass
class TrialEnergyReport:
    trial_energy: float
    ground_energy: float
    gap: float
    satisfied: bool
    occupations_used: Array


def slater_upper_bound(
    ham: DiscreteHamiltonian,
    gamma_matrix: Array,
    ground_energy: float | None = None,
    tol: float = 1e-10,
) -> TrialEnergyReport:
    """Variational bound from the N dominant natural orbitals of a one-body matrix.

    Diagonalizes ``gamma_matrix`` (occupancy form on the oracle grid), takes
    its top-N eigenvectors as Slater orbitals, evaluates the exact lattice
    energy of that determinant, and checks E(N) <= trial + tol.
    """
    n = ham.n_particles
    evals, evecs = np.linalg.eigh(gamma_hermitize(gamma_matrix))
    top = np.argsort(evals)[::-1][:n]
    if evals[top[-1]] <= 1e-12:
        raise ValidationError(
            f"one-body matrix has rank below N={n}; cannot form a Slater trial"
        )
    orbitals = evecs[:, top]
    trial = slater_energy(ham, orbitals)
    if ground_energy is None:
        ground_energy, _ = ground_state(ham)
    gap = trial - ground_energy
    return TrialEnergyReport(
        trial_energy=trial,
        ground_energy=ground_energy,
        gap=gap,
        satisfied=bool(ground_energy <= trial + tol),
        occupations_used=evals[top],
    )


@dataclass
class AprioriReport:
    n_particles: int
    kinetic_potential: float
    interaction_integral: float
    kinetic_potential_scale: float
    interaction_scale: float


def apriori_diagnostics(state: FermionState) -> AprioriReport:
    """Kinetic+potential expectation and the two-body interaction integral.

    Reported next to the reference growth scales N^(1+beta*d/2) and
    N^(1+beta*d^2/(2(d+2))); purely diagnostic, nothing is asserted.
    """
    ham = state.ham
    red = reduced_densities(state, k=2)
    t_mat = one_body_matrix(ham.grid, ham.potential, ham.hbar)
    kinpot = float(np.sum(t_mat * red.gamma1.T))
    n = ham.n_particles
    if ham.w_n is None:
        inter = 0.0
        beta = 0.0
    else:
        w_table = ham.site_distance_couplings()
        m = ham.grid.points_per_axis
        w_full = w_table[np.abs(np.arange(m)[:, None] - np.arange(m)[None, :])]
        np.fill_diagonal(w_full, 0.0)
        h = ham.grid.spacing
        inter = float(np.sum(w_full * red.rho2) * h * h) / n
        beta = ham.w_n.profile.beta
    return AprioriReport(
        n_particles=n,
        kinetic_potential=kinpot,
        interaction_integral=inter,
        kinetic_potential_scale=n ** (1.0 + beta / 2.0),
        interaction_scale=n ** (1.0 + beta / 6.0),
    )


def fitted_exponent(n_values, quantities) -> float:
    """Least-squares slope of log(quantity) against log(N)."""
    x = np.log(np.asarray(n_values, dtype=float))
    y = np.log(np.asarray(quantities, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def free_fermion_energy(ham: DiscreteHamiltonian) -> float:
    """Filling rule: sum of the N lowest one-body eigenvalues (w = 0)."""
    t_mat = one_body_matrix(ham.grid, ham.potential, ham.hbar)
    evals = np.linalg.eigvalsh(t_mat)
    return float(np.sum(evals[: ham.n_particles]))
