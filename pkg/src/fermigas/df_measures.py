"""Exchangeable-measure laboratory on finite state spaces.

Implements the Diaconis-Freedman construction exactly: a symmetric N-body
law on a finite state space is rewritten as a mixture of N-fold products of
empirical measures; the first marginal is reproduced exactly and the k-th
marginal within total variation 2k(k-1)/N. Small laws are carried in exact
rational arithmetic so these identities are tested with zero tolerance.

The module also provides the phase-space tiling, measure averaging,
Wasserstein-1 distances with a dual optimality certificate, Monte Carlo
statistics for local Pauli-bound violations, and the restriction/averaging
energy-defect experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement, product

import numpy as np
from scipy.optimize import linprog
from scipy.stats import binom

from .errors import CapExceededError, ValidationError
from .model import ScaledInteraction, TrapPotential

Array = np.ndarray

TWO_PI = 2.0 * math.pi

ENUMERATION_CAP = 10_000_000
TRANSPORT_SUPPORT_CAP = 5000


# ---------------------------------------------------------------------------
# Exchangeable laws and the Diaconis-Freedman mixture
# ---------------------------------------------------------------------------


def _multiset_counts(multiset: tuple[int, ...], n_states: int) -> tuple[int, ...]:
    counts = [0] * n_states
    for s in multiset:
        counts[s] += 1
    return tuple(counts)


def _multinomial(counts) -> int:
    total = sum(counts)
    out = math.factorial(total)
    for c in counts:
        out //= math.factorial(c)
    return out


@dataclass
class FiniteExchangeableLaw:
    """Symmetric probability law on S^N stored by multiset weights.

    ``weights[multiset]`` is the total probability of all orderings of that
    multiset. Exact rational weights keep every identity in this module
    exact; float weights are accepted for laws derived from numerics.
    """

    n_states: int
    n_particles: int
    weights: dict[tuple[int, ...], Fraction | float]

    def __post_init__(self):
        if self.n_states < 1 or self.n_particles < 1:
            raise ValidationError("state space and particle number must be positive")
        total = sum(self.weights.values())
        exact = all(isinstance(w, (Fraction, int)) for w in self.weights.values())
        if exact:
            if total != 1:
                raise ValidationError(f"law weights sum to {total}, expected exactly 1")
        elif abs(float(total) - 1.0) > 1e-12:
            raise ValidationError(f"law weights sum to {float(total)}, expected 1 within 1e-12")
        for multiset, w in self.weights.items():
            if len(multiset) != self.n_particles or tuple(sorted(multiset)) != multiset:
                raise ValidationError(f"multiset key {multiset} is not a sorted N-tuple")
            if w < 0:
                raise ValidationError("negative weight")

    @property
    def exact(self) -> bool:
        return all(isinstance(w, (Fraction, int)) for w in self.weights.values())

    @classmethod
    def uniform(cls, n_states: int, n_particles: int) -> "FiniteExchangeableLaw":
        total = n_states**n_particles
        if total > ENUMERATION_CAP:
            raise CapExceededError(f"S^N = {total} exceeds the enumeration cap")
        weights = {
            ms: Fraction(_multinomial(_multiset_counts(ms, n_states)), total)
            for ms in combinations_with_replacement(range(n_states), n_particles)
        }
        return cls(n_states, n_particles, weights)

    @classmethod
    def from_product(cls, sigma, n_particles: int) -> "FiniteExchangeableLaw":
        """Product law sigma^(x)N of a single-particle distribution."""
        sigma = list(sigma)
        weights = {}
        for ms in combinations_with_replacement(range(len(sigma)), n_particles):
            counts = _multiset_counts(ms, len(sigma))
            w = _multinomial(counts)
            for s, c in enumerate(counts):
                for _ in range(c):
                    w = w * sigma[s]
            weights[ms] = w
        return cls(len(sigma), n_particles, weights)

    @classmethod
    def from_tensor(cls, tensor: Array) -> "FiniteExchangeableLaw":
        """Symmetric tensor over ordered configurations (S, ..., S), N axes."""
        tensor = np.asarray(tensor)
        n_particles = tensor.ndim
        n_states = tensor.shape[0]
        if tensor.shape != (n_states,) * n_particles:
            raise ValidationError("tensor must be a hypercube over the state space")
        if tensor.size > ENUMERATION_CAP:
            raise CapExceededError(f"tensor with {tensor.size} entries exceeds the cap")
        weights: dict[tuple[int, ...], Fraction | float] = {}
        for config in product(range(n_states), repeat=n_particles):
            w = tensor[config]
            if isinstance(w, np.generic):
                w = w.item()
            if w == 0:
                continue
            key = tuple(sorted(config))
            weights[key] = weights.get(key, 0) + w
        return cls(n_states, n_particles, weights)

    def marginal(self, k: int) -> Array:
        """Exact k-point marginal over ordered k-tuples, shape (S,)*k.

        P(Z_1 = s_1, ..., Z_k = s_k) is a ratio of falling factorials of the
        multiset counts; rational weights stay rational.
        """
        if not (1 <= k <= self.n_particles):
            raise ValidationError(f"need 1 <= k <= N, got k={k}")
        n = self.n_particles
        shape = (self.n_states,) * k
        out = np.zeros(shape, dtype=object)
        denom = math.perm(n, k)
        for multiset, w in self.weights.items():
            counts = _multiset_counts(multiset, self.n_states)
            for prefix in product(range(self.n_states), repeat=k):
                numer = 1
                used = [0] * self.n_states
                ok = True
                for s in prefix:
                    avail = counts[s] - used[s]
                    if avail <= 0:
                        ok = False
                        break
                    numer *= avail
                    used[s] += 1
                if not ok:
                    continue
                if isinstance(w, (Fraction, int)):
                    out[prefix] += w * Fraction(numer, denom)
                else:
                    out[prefix] += w * numer / denom
        return out


@dataclass
class DFDecomposition:
    """The mixture over empirical measures and its product-law marginals."""

    law: FiniteExchangeableLaw
    # mixture: multiset -> (empirical measure as counts/N, probability)
    components: list[tuple[Array, Fraction | float]]

    def mixture_marginal(self, k: int) -> Array:
        """m-tilde^(k) = sum over the mixture of (empirical)^(x)k."""
        shape = (self.law.n_states,) * k
        out = np.zeros(shape, dtype=object)
        for emp, w in self.components:
            term = np.ones((), dtype=object)
            for _ in range(k):
                term = np.multiply.outer(term, emp)
            out = out + w * term
        return out


def df_decomposition(law: FiniteExchangeableLaw) -> DFDecomposition:
    """Rewrite a symmetric law as a mixture of empirical product laws.

    Each multiset contributes its empirical measure (counts / N) with its
    total probability; the first mixture marginal equals the law's first
    marginal identically, and the second obeys
    m-tilde2 = (N-1)/N * m2 + (1/N) * m1 on the diagonal.
    """
    n = law.n_particles
    components = []
    for multiset, w in law.weights.items():
        counts = _multiset_counts(multiset, law.n_states)
        if law.exact:
            emp = np.array([Fraction(c, n) for c in counts], dtype=object)
        else:
            emp = np.array([c / n for c in counts], dtype=float)
        components.append((emp, w))
    return DFDecomposition(law, components)


@dataclass
class TVReport:
    k: int
    tv: Fraction | float
    bound: Fraction | float
    passed: bool


def tv_bound_check(law: FiniteExchangeableLaw, k: int) -> TVReport:
    """Total variation | m^(k) - m-tilde^(k) |_1 against the 2k(k-1)/N bound."""
    decomp = df_decomposition(law)
    exact_m = law.marginal(k)
    tilde = decomp.mixture_marginal(k)
    diff = (exact_m - tilde).ravel()
    if law.exact:
        tv = sum(abs(x) for x in diff)
        bound = Fraction(2 * k * (k - 1), law.n_particles)
        passed = tv <= bound
    else:
        tv = float(sum(abs(float(x)) for x in diff))
        bound = 2.0 * k * (k - 1) / law.n_particles
        passed = tv <= bound + 1e-12
    return TVReport(k=k, tv=tv, bound=bound, passed=bool(passed))


# ---------------------------------------------------------------------------
# Tiling, empirical measures, averaging
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Tiling:
    """Partition of the phase-space box [-L, L]^(2d) into hyperrectangles.

    Cells have spatial side ``l_x = 2L/cells_x`` (each of the d spatial
    axes) and momentum side ``l_p = 2L/cells_p``; with ``cells_x = cells_p
    = 2n`` per axis the cell count is the canonical 4^d n^(2d).
    """

    d: int
    half_width: float
    cells_x: int
    cells_p: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValidationError("phase-space tilings support d = 1 or 2")
        if self.cells_x < 1 or self.cells_p < 1:
            raise ValidationError("cell counts must be positive")
        if self.half_width <= 0:
            raise ValidationError("tiling half-width must be positive")

    @property
    def l_x(self) -> float:
        return 2.0 * self.half_width / self.cells_x

    @property
    def l_p(self) -> float:
        return 2.0 * self.half_width / self.cells_p

    @property
    def cell_volume(self) -> float:
        return self.l_x**self.d * self.l_p**self.d

    @property
    def n_cells(self) -> int:
        return self.cells_x**self.d * self.cells_p**self.d

    @property
    def cell_diameter(self) -> float:
        return math.sqrt(self.d * self.l_x**2 + self.d * self.l_p**2)

    @property
    def box_volume(self) -> float:
        return (2.0 * self.half_width) ** (2 * self.d)

    def _axis_cells(self) -> tuple[int, ...]:
        return (self.cells_x,) * self.d + (self.cells_p,) * self.d

    def _axis_sides(self) -> tuple[float, ...]:
        return (self.l_x,) * self.d + (self.l_p,) * self.d

    def cell_index(self, points: Array) -> Array:
        """Flat cell index per point; -1 for points outside the box."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != 2 * self.d:
            raise ValidationError(f"points must have {2 * self.d} phase-space coordinates")
        idx = np.zeros(pts.shape[0], dtype=np.int64)
        inside = np.ones(pts.shape[0], dtype=bool)
        for axis, (cells, side) in enumerate(zip(self._axis_cells(), self._axis_sides())):
            co = np.floor((pts[:, axis] + self.half_width) / side).astype(np.int64)
            at_edge = pts[:, axis] == self.half_width
            co[at_edge] = cells - 1
            inside &= (co >= 0) & (co < cells)
            idx = idx * cells + np.clip(co, 0, cells - 1)
        idx[~inside] = -1
        return idx

    def cell_bounds(self, flat: int) -> tuple[Array, Array]:
        cells = self._axis_cells()
        sides = self._axis_sides()
        coords = []
        rest = flat
        for c in reversed(cells):
            coords.append(rest % c)
            rest //= c
        coords = coords[::-1]
        lo = np.array([-self.half_width + co * s for co, s in zip(coords, sides)])
        hi = lo + np.array(sides)
        return lo, hi

    def cell_center(self, flat: int) -> Array:
        lo, hi = self.cell_bounds(flat)
        return 0.5 * (lo + hi)

    def cell_centers(self) -> Array:
        return np.array([self.cell_center(j) for j in range(self.n_cells)])

    @classmethod
    def square(cls, d: int, half_width: float, cells_per_axis: int) -> "Tiling":
        return cls(d, half_width, cells_per_axis, cells_per_axis)


def paper_scaling(n_particles: int, d: int, beta: float, growth_exponent: float,
                  n_boxes: int | None = None) -> dict:
    """Named tiling preset tied to the lower-bound parameter schedule.

    gamma = 4/(4d+1), delta = 1/20, spatial side N^(-2/(d(2d+1))), momentum
    side N^(-2/(d(2d+1)(4d+1))), hypercube half-width L = n N^(-gamma/(2d))
    with n growing like N^(5 beta d/(2s) + 1) for s <= 2 and
    N^(5 beta d/4 + 1) otherwise. Side lengths are rounded to an integer
    cell count; actual values are reported alongside the targets.
    """
    n = float(n_particles)
    gamma = 4.0 / (4 * d + 1)
    delta = 1.0 / 20.0
    l_x = n ** (-2.0 / (d * (2 * d + 1)))
    l_p = n ** (-2.0 / (d * (2 * d + 1) * (4 * d + 1)))
    if n_boxes is None:
        if growth_exponent <= 2:
            n_boxes = math.ceil(n ** (5.0 * beta * d / (2.0 * growth_exponent) + 1.0))
        else:
            n_boxes = math.ceil(n ** (5.0 * beta * d / 4.0 + 1.0))
    half_width = n_boxes * n ** (-gamma / (2.0 * d))
    cells_x = max(1, round(2.0 * half_width / l_x))
    cells_p = max(1, round(2.0 * half_width / l_p))
    tiling = Tiling(d, half_width, cells_x, cells_p)
    return {
        "gamma": gamma,
        "delta": delta,
        "target_l_x": l_x,
        "target_l_p": l_p,
        "n_boxes": n_boxes,
        "tiling": tiling,
    }


@dataclass
class EmpiricalMeasure:
    """Uniform atoms at phase-space points; weights are exactly 1/N."""

    points: Array

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] < 1:
            raise ValidationError("empirical measure needs at least one atom")

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @property
    def atom_weight(self) -> Fraction:
        return Fraction(1, self.n_atoms)

    def float_weights(self) -> Array:
        return np.full(self.n_atoms, 1.0 / self.n_atoms)


@dataclass
class AveragedMeasure:
    """Piecewise-constant measure with exact per-cell masses."""

    tiling: Tiling
    cell_masses: Array  # object (Fraction) or float per cell
    source: str = ""

    def mass(self):
        return sum(self.cell_masses)

    def densities(self) -> Array:
        vol = self.tiling.cell_volume
        return np.array([float(m) / vol for m in self.cell_masses])

    def atoms(self) -> tuple[Array, Array]:
        """Cell-center atomization for transport computations."""
        keep = [j for j in range(self.tiling.n_cells) if float(self.cell_masses[j]) > 0]
        centers = np.array([self.tiling.cell_center(j) for j in keep])
        masses = np.array([float(self.cell_masses[j]) for j in keep])
        return centers, masses


def average_measure(mu: EmpiricalMeasure, tiling: Tiling) -> AveragedMeasure:
    """Project a measure onto per-cell uniform densities, preserving cell masses.

    Atoms outside the tiling's box are dropped (the averaged measure covers
    the restriction to the box); for an empirical measure the cell masses
    are exact rationals count/N.
    """
    idx = tiling.cell_index(mu.points)
    masses = np.array([Fraction(0)] * tiling.n_cells, dtype=object)
    for j in idx:
        if j >= 0:
            masses[j] += mu.atom_weight
    return AveragedMeasure(tiling, masses, source=f"empirical({mu.n_atoms})")


# ---------------------------------------------------------------------------
# Wasserstein-1
# ---------------------------------------------------------------------------


@dataclass
class TransportResult:
    distance: float
    dual_feasibility_gap: float
    duality_gap: float

    @property
    def certified(self) -> bool:
        return self.dual_feasibility_gap <= 1e-8 and self.duality_gap <= 1e-8


def _as_atoms(measure) -> tuple[Array, Array]:
    if isinstance(measure, EmpiricalMeasure):
        return measure.points, measure.float_weights()
    if isinstance(measure, AveragedMeasure):
        return measure.atoms()
    if isinstance(measure, tuple) and len(measure) == 2:
        pts = np.atleast_2d(np.asarray(measure[0], dtype=float))
        wts = np.asarray(measure[1], dtype=float)
        return pts, wts
    raise ValidationError(f"unsupported measure type {type(measure).__name__}")


def wasserstein1(mu, nu) -> TransportResult:
    """Wasserstein-1 distance with the Euclidean ground metric.

    One-dimensional supports use the exact CDF formula. Otherwise the
    transport linear program is solved and certified by its dual: the
    reported potentials must be feasible (u_i + v_j <= cost_ij) and close
    the duality gap within 1e-8.
    """
    a_pts, a_w = _as_atoms(mu)
    b_pts, b_w = _as_atoms(nu)
    if abs(a_w.sum() - b_w.sum()) > 1e-9 * max(1.0, a_w.sum()):
        raise ValidationError("transport requires equal total masses")
    if a_pts.shape[0] > TRANSPORT_SUPPORT_CAP or b_pts.shape[0] > TRANSPORT_SUPPORT_CAP:
        raise CapExceededError(
            f"transport supports capped at {TRANSPORT_SUPPORT_CAP} x {TRANSPORT_SUPPORT_CAP}"
        )
    if a_pts.shape[1] != b_pts.shape[1]:
        raise ValidationError("measures live in different ambient dimensions")

    # collapse to the 1D CDF formula when both supports share a line
    spread = np.ptp(np.vstack([a_pts, b_pts]), axis=0)
    active = spread > 0
    if active.sum() <= 1:
        axis = int(np.argmax(active)) if active.any() else 0
        return TransportResult(_wasserstein1_line(a_pts[:, axis], a_w, b_pts[:, axis], b_w), 0.0, 0.0)

    cost = np.linalg.norm(a_pts[:, None, :] - b_pts[None, :, :], axis=2)
    n, m = cost.shape
    c = cost.ravel()
    # supply rows then demand rows
    a_eq = np.zeros((n + m, n * m))
    for i in range(n):
        a_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        a_eq[n + j, j::m] = 1.0
    b_eq = np.concatenate([a_w, b_w])
    res = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise ValidationError(f"transport LP failed: {res.message}")
    duals = res.eqlin.marginals
    u, v = duals[:n], duals[n:]
    feas = float(np.max(u[:, None] + v[None, :] - cost))
    gap = abs(float(u @ a_w + v @ b_w) - float(res.fun))
    return TransportResult(float(res.fun), max(feas, 0.0), gap)


def _wasserstein1_line(a_x: Array, a_w: Array, b_x: Array, b_w: Array) -> float:
    xs = np.concatenate([a_x, b_x])
    order = np.argsort(xs)
    signed = np.concatenate([a_w, -b_w])[order]
    xs = xs[order]
    cdf = np.cumsum(signed)[:-1]
    gaps = np.diff(xs)
    return float(np.sum(np.abs(cdf) * gaps))


# ---------------------------------------------------------------------------
# Pauli-violation statistics
# ---------------------------------------------------------------------------


def uniform_box_sampler(tiling: Tiling):
    """Draw configurations i.i.d. uniform on the tiling's phase-space box."""
    half = tiling.half_width
    dim = 2 * tiling.d

    def draw(rng, n_trials, n_particles):
        return rng.uniform(-half, half, size=(n_trials, n_particles, dim))

    return draw


def exchangeable_law_sampler(law: FiniteExchangeableLaw, tiling: Tiling):
    """Draw N-point configurations from a finite exchangeable law.

    Law states are identified with tiling cells (state count must match);
    each drawn particle is placed uniformly inside its cell. Supports the
    tiny-law regime, e.g. symmetrized Husimi weights at N <= 3.
    """
    if law.n_states != tiling.n_cells:
        raise ValidationError(
            f"law has {law.n_states} states but the tiling has {tiling.n_cells} cells"
        )
    keys = list(law.weights.keys())
    probs = np.array([float(law.weights[k]) for k in keys])
    probs = probs / probs.sum()
    lows = np.array([tiling.cell_bounds(j)[0] for j in range(tiling.n_cells)])
    sides = np.array(tiling._axis_sides())

    def draw(rng, n_trials, n_particles):
        if n_particles != law.n_particles:
            raise ValidationError("sampler is bound to the law's particle number")
        choice = rng.choice(len(keys), size=n_trials, p=probs)
        cells = np.array([keys[c] for c in choice])
        jitter = rng.uniform(0.0, 1.0, size=(n_trials, n_particles, 2 * tiling.d))
        return lows[cells] + jitter * sides

    return draw


def iid_cell_sampler(tiling: Tiling, cell_probs: Array):
    """Draw particles i.i.d. from a per-cell distribution, uniform in-cell."""
    probs = np.asarray(cell_probs, dtype=float)
    if probs.shape != (tiling.n_cells,) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValidationError("cell probabilities must sum to 1 over the tiling")
    lows = np.array([tiling.cell_bounds(j)[0] for j in range(tiling.n_cells)])
    sides = np.array(tiling._axis_sides())

    def draw(rng, n_trials, n_particles):
        cells = rng.choice(tiling.n_cells, size=(n_trials, n_particles), p=probs)
        jitter = rng.uniform(0.0, 1.0, size=(n_trials, n_particles, 2 * tiling.d))
        return lows[cells] + jitter * sides

    return draw


@dataclass
class PauliViolationStats:
    epsilon: float
    threshold_mass: float
    threshold_count: int
    frequency: float
    ci_low: float
    ci_high: float
    n_trials: int
    exact_tail: float | None = None
    any_cell_frequency: float | None = None

    @property
    def matches_exact(self) -> bool:
        if self.exact_tail is None:
            return True
        return self.ci_low <= self.exact_tail <= self.ci_high


def pauli_violation_stats(
    sampler,
    tiling: Tiling,
    cell: int,
    epsilon: float,
    n_particles: int,
    n_trials: int,
    seed: int,
    exact_cell_prob: float | None = None,
    track_all_cells: bool = False,
    chunk: int = 2048,
) -> PauliViolationStats:
    """Monte Carlo frequency of a local occupancy exceeding the Pauli level.

    The event is {empirical mass of the cell >= (1+eps) (2 pi)^-d |cell|};
    its frequency is reported with a 95% binomial confidence interval.
    Streams are chunked with seeds spawned deterministically from ``seed``,
    so results are reproducible regardless of worker layout. For an i.i.d.
    sampler with known per-draw cell probability the exact binomial tail is
    attached as the oracle.
    """
    d = tiling.d
    threshold_mass = (1.0 + epsilon) * tiling.cell_volume / TWO_PI**d
    if threshold_mass <= 0:
        raise ValidationError("zero-width cells make the violation event ill-posed")
    threshold_count = math.ceil(threshold_mass * n_particles)  # event includes equality

    seeds = np.random.SeedSequence(seed).spawn(max(1, (n_trials + chunk - 1) // chunk))
    hits = 0
    any_hits = 0
    done = 0
    for s_idx, ss in enumerate(seeds):
        size = min(chunk, n_trials - done)
        if size <= 0:
            break
        rng = np.random.default_rng(ss)
        pts = sampler(rng, size, n_particles)
        idx = tiling.cell_index(pts.reshape(-1, 2 * d)).reshape(size, n_particles)
        counts = (idx == cell).sum(axis=1)
        hits += int((counts >= threshold_count).sum())
        if track_all_cells:
            per_cell = np.zeros((size, tiling.n_cells), dtype=np.int64)
            for t in range(size):
                valid = idx[t][idx[t] >= 0]
                np.add.at(per_cell[t], valid, 1)
            any_hits += int((per_cell >= threshold_count).any(axis=1).sum())
        done += size

    freq = hits / n_trials
    half = 1.96 * math.sqrt(max(freq * (1.0 - freq), 1e-12) / n_trials)
    exact = None
    if exact_cell_prob is not None:
        exact = float(binom.sf(threshold_count - 1, n_particles, exact_cell_prob))
    return PauliViolationStats(
        epsilon=epsilon,
        threshold_mass=threshold_mass,
        threshold_count=threshold_count,
        frequency=freq,
        ci_low=freq - half - 0.5 / n_trials,
        ci_high=freq + half + 0.5 / n_trials,
        n_trials=n_trials,
        exact_tail=exact,
        any_cell_frequency=(any_hits / n_trials) if track_all_cells else None,
    )


def decay_fit(n_values, frequencies, epsilon: float, delta: float) -> dict:
    """Fit log-frequency against N^delta * log(1+eps) and against log N."""
    n_arr = np.asarray(n_values, dtype=float)
    freq = np.asarray(frequencies, dtype=float)
    if np.any(freq <= 0):
        raise ValidationError("decay fit needs strictly positive frequencies")
    x = n_arr**delta * math.log1p(epsilon)
    slope_delta = float(np.polyfit(x, np.log(freq), 1)[0])
    slope_logn = float(np.polyfit(np.log(n_arr), np.log(freq), 1)[0])
    return {"slope_vs_ndelta": slope_delta, "slope_vs_logn": slope_logn}


# ---------------------------------------------------------------------------
# Energies of one-body measures, restriction and averaging defects
# ---------------------------------------------------------------------------


def measure_energy(
    points: Array,
    weights: Array,
    potential: TrapPotential,
    w_n: ScaledInteraction | None,
) -> float:
    """Semiclassical energy of an atomic phase-space measure.

    integral (|p|^2 + V) d mu  -  double integral w_N(x - y) d mu (x) d mu;
    the product measure includes the diagonal, faithful to mu^(x)2.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(weights, dtype=float)
    d = pts.shape[1] // 2
    x, p = pts[:, :d], pts[:, d:]
    one_body = float(np.sum(w * (np.sum(p**2, axis=1) + potential.evaluate(x))))
    if w_n is None or pts.shape[0] == 0:
        return one_body
    diffs = x[:, None, :] - x[None, :, :]
    kernel = np.asarray(w_n.evaluate(diffs.reshape(-1, d)), dtype=float).reshape(len(w), len(w))
    two_body = float(w @ kernel @ w)
    return one_body - two_body


def averaged_measure_energy(
    avg: AveragedMeasure,
    potential: TrapPotential,
    w_n: ScaledInteraction | None,
    subsamples: int = 5,
) -> float:
    """Energy of a piecewise-constant measure.

    |p|^2 averages over momentum sides are closed-form; V is averaged on a
    per-cell midpoint subgrid; the interaction uses cell-center separations
    (adequate for the diagnostic defect shapes).
    """
    t = avg.tiling
    d = t.d
    centers, masses = avg.atoms()
    if len(masses) == 0:
        return 0.0
    # closed-form mean of p^2 over a centered interval of side l_p per axis
    kin_per_axis = []
    total_kin = 0.0
    pot = 0.0
    for center, mass in zip(centers, masses):
        p_c = center[d:]
        kin = float(np.sum(p_c**2) + d * t.l_p**2 / 12.0)
        total_kin += mass * kin
        x_lo = center[:d] - 0.5 * t.l_x
        offs = (np.arange(subsamples) + 0.5) / subsamples * t.l_x
        if d == 1:
            xs = (x_lo[0] + offs)[:, None]
        else:
            g1, g2 = np.meshgrid(x_lo[0] + offs, x_lo[1] + offs, indexing="ij")
            xs = np.column_stack([g1.ravel(), g2.ravel()])
        pot += mass * float(np.mean(potential.evaluate(xs)))
    one_body = total_kin + pot
    if w_n is None:
        return one_body
    diffs = centers[:, None, :d] - centers[None, :, :d]
    kernel = np.asarray(w_n.evaluate(diffs.reshape(-1, d)), dtype=float).reshape(len(masses), len(masses))
    return one_body - float(masses @ kernel @ masses)


@dataclass
class DefectReport:
    energy_full: float
    energy_restricted: float
    energy_averaged: float
    restriction_defect: float
    averaging_defect: float
    restriction_shape: float
    averaging_shape: float
    fitted_restriction_constant: float
    fitted_averaging_constant: float
    tau_exceeded: bool


def restriction_energy_defect(
    mu: EmpiricalMeasure,
    tiling: Tiling,
    potential: TrapPotential,
    w_n: ScaledInteraction | None,
    tau: float,
) -> DefectReport:
    """Energies of a measure, its box restriction and its cell average.

    The defects are reported against the bound shapes
    ``tau^2 N^(d beta) / min(L^4, L^(2s))`` (restriction) and
    ``(l_x + l_p) (|E| + 1)`` (averaging), with fitted constants; nothing
    is asserted here, downstream tests own the comparisons.
    """
    d = tiling.d
    pts = mu.points
    w = mu.float_weights()
    e_full = measure_energy(pts, w, potential, w_n)

    inside = tiling.cell_index(pts) >= 0
    e_restricted = measure_energy(pts[inside], w[inside], potential, w_n) if inside.any() else 0.0

    avg = average_measure(mu, tiling)
    e_avg = averaged_measure_energy(avg, potential, w_n)

    x, p = pts[:, :d], pts[:, d:]
    one_body = float(np.sum(w * (np.sum(p**2, axis=1) + potential.evaluate(x))))
    tau_exceeded = one_body > tau

    n_beta = 1.0
    if w_n is not None:
        n_beta = float(w_n.n_particles) ** (d * w_n.profile.beta)
    s = potential.growth_exponent
    l_box = tiling.half_width
    restriction_shape = tau**2 * n_beta / min(l_box**4, l_box ** (2 * s))
    averaging_shape = (tiling.l_x + tiling.l_p) * (abs(e_avg) + 1.0)
    r_defect = e_full - e_restricted
    a_defect = e_restricted - e_avg
    return DefectReport(
        energy_full=e_full,
        energy_restricted=e_restricted,
        energy_averaged=e_avg,
        restriction_defect=r_defect,
        averaging_defect=a_defect,
        restriction_shape=restriction_shape,
        averaging_shape=averaging_shape,
        fitted_restriction_constant=abs(r_defect) / restriction_shape if restriction_shape > 0 else math.nan,
        fitted_averaging_constant=abs(a_defect) / averaging_shape if averaging_shape > 0 else math.nan,
        tau_exceeded=tau_exceeded,
    )


def pauli_critical_volume(d: int, n_particles: int) -> float:
    """Cell volume below which a single atom already violates the local bound."""
    return TWO_PI**d / n_particles
