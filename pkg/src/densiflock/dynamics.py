"""Particle state, interaction rules, normalization policies, and diagnostics.

Four velocity-alignment rules share one state representation:

* ``di`` -- density-gated consensus: particle i is pulled toward the
  velocities of the particles inside the open ball B(x_i, delta), but only
  when that ball holds strictly more than m particles (itself included).
  Neighborhoods are evaluated on delayed positions, which the integrator
  supplies through its snapshot buffer.
* ``cs`` -- classic all-to-all alignment with weight psi(s) = (1+s)^(-alpha).
* ``cs_delta`` -- the same weight cut off at range delta (closed ball).
* ``cs_q`` -- alignment restricted to the q closest other particles.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .domains import euclidean_distances
from .errors import ConfigError

MODELS = ("di", "cs", "cs_delta", "cs_q")
POLICY_KINDS = ("flat", "per_neighbor", "constant")

# Prefactor conventions the models usually appear with: mean-field scaling
# for cs, per-neighbor averaging for the local rules.
DEFAULT_POLICY = {
    "di": "per_neighbor",
    "cs": "flat",
    "cs_delta": "per_neighbor",
    "cs_q": "per_neighbor",
}


def alignment_weight(s, alpha: float = 0.5):
    """Communication weight (1 + s)^(-alpha) used by the cs family."""
    return (1.0 + np.asarray(s, dtype=float)) ** (-alpha)


@dataclass(frozen=True)
class MPolicy:
    """Normalization rule M(N, i, #N_i) scaling every interaction term.

    kind "flat" gives kappa/N, "per_neighbor" gives kappa/#N_i, and
    "constant" gives kappa.  Every value is strictly positive, so for a
    fixed N the infimum M_* and supremum M^* over feasible neighborhood
    sizes 1..N are positive and finite.
    """

    kind: str
    kappa: float = 1.0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown m_policy {self.kind!r}")
        if not self.kappa > 0:
            raise ConfigError("kappa must be > 0")

    def value(self, N: int, i: int, set_size: int) -> float:
        return m_value(self, N, i, set_size)

    def m_star(self, N: int) -> float:
        """Analytic infimum of M over neighborhood sizes 1..N."""
        if self.kind == "constant":
            return self.kappa
        return self.kappa / N

    def m_sup(self, N: int) -> float:
        """Analytic supremum of M over neighborhood sizes 1..N."""
        if self.kind == "flat":
            return self.kappa / N
        return self.kappa


def m_value(policy: MPolicy, N: int, i: int, set_size: int) -> float:
    """Interaction prefactor for particle i with the given neighborhood size."""
    if set_size < 0:
        raise ValueError("set_size must be >= 0")
    if policy.kind == "flat":
        return policy.kappa / N
    if policy.kind == "constant":
        return policy.kappa
    if set_size == 0:
        raise ValueError("per_neighbor normalization queried for an empty neighborhood")
    return policy.kappa / set_size


def _policy_values(policy: MPolicy, N: int, sizes: np.ndarray) -> np.ndarray:
    """Vector of M values per particle; zero placeholder where the set is empty."""
    out = np.zeros(len(sizes))
    nonempty = sizes > 0
    if policy.kind == "flat":
        out[nonempty] = policy.kappa / N
    elif policy.kind == "constant":
        out[nonempty] = policy.kappa
    else:
        out[nonempty] = policy.kappa / sizes[nonempty]
    return out


@dataclass
class ModelParams:
    """Model selection plus every scalar knob the interaction rules read."""

    model: str
    N: int
    kappa: float = 1.0
    m: int | None = None
    delta: float | None = None
    q: int | None = None
    alpha: float = 0.5
    m_policy: str | None = None
    h_steps: int = 1

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.N < 1:
            raise ConfigError("n must be >= 1")
        if not self.kappa > 0:
            raise ConfigError("kappa must be > 0")
        if not self.alpha > 0:
            raise ConfigError("alpha must be > 0")
        if self.h_steps < 1:
            raise ConfigError("h_steps must be >= 1")
        if self.m_policy is None:
            self.m_policy = DEFAULT_POLICY[self.model]
        if self.m_policy not in POLICY_KINDS:
            raise ConfigError(f"unknown m_policy {self.m_policy!r}")

        needs_delta = self.model in ("di", "cs_delta")
        if needs_delta:
            if self.delta is None or not self.delta > 0:
                raise ConfigError(f"model {self.model} requires delta > 0")
        elif self.delta is not None:
            raise ConfigError(f"model {self.model} takes no delta")

        if self.model == "di":
            if self.m is None or self.m < 1:
                raise ConfigError("model di requires m >= 1")
        elif self.m is not None:
            raise ConfigError(f"model {self.model} takes no m")

        if self.model == "cs_q":
            if self.q is None or not 1 <= self.q <= self.N - 1:
                raise ConfigError("model cs_q requires 1 <= q <= n-1")
        elif self.q is not None:
            raise ConfigError(f"model {self.model} takes no q")

    def policy(self) -> MPolicy:
        return MPolicy(self.m_policy, self.kappa)


@dataclass
class EnsembleState:
    """Positions and velocities of N particles in d dimensions at time t."""

    t: float
    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.velocities = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        if self.positions.shape != self.velocities.shape:
            raise ValueError("positions and velocities must have identical shape")
        if self.positions.ndim != 2 or min(self.positions.shape) < 1:
            raise ValueError("state requires N >= 1 particles in d >= 1 dimensions")
        if not (np.isfinite(self.positions).all() and np.isfinite(self.velocities).all()):
            raise ValueError("non-finite coordinates in state")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def mean_position(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def mean_velocity(self) -> np.ndarray:
        return self.velocities.mean(axis=0)


@dataclass(eq=False)
class NeighborTable:
    """Per-particle neighbor index sets (each sorted ascending).

    source_time records the delayed time whose positions produced the table.
    """

    sets: list[np.ndarray]
    source_time: float = 0.0

    @property
    def n(self) -> int:
        return len(self.sets)

    def sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.sets], dtype=int)

    def contains(self, i: int, k: int) -> bool:
        """True when particle k belongs to the neighbor set of particle i."""
        s = self.sets[i]
        j = np.searchsorted(s, k)
        return bool(j < len(s) and s[j] == k)

    def membership_matrix(self) -> np.ndarray:
        """Boolean (n, n) matrix with row i marking the members of set i."""
        out = np.zeros((self.n, self.n), dtype=bool)
        for i, s in enumerate(self.sets):
            out[i, s] = True
        return out

    def same_as(self, other: "NeighborTable") -> bool:
        return self.n == other.n and all(
            np.array_equal(a, b) for a, b in zip(self.sets, other.sets)
        )


def _check_positions(positions) -> np.ndarray:
    x = np.atleast_2d(np.asarray(positions, dtype=float))
    if not np.isfinite(x).all():
        raise ValueError("non-finite coordinates")
    return x


def neighbor_sets_di(
    delayed_positions,
    delta: float,
    m: int,
    dist=euclidean_distances,
    source_time: float = 0.0,
) -> NeighborTable:
    """Density-gated neighborhoods from delayed positions.

    k enters set i exactly when dist(x_k, x_i) < delta and the open ball
    around x_i holds strictly more than m particles (count includes i, so
    a gated particle always lists itself).  Below the gate the set is empty.
    """
    if not delta > 0:
        raise ConfigError("delta must be > 0")
    if m < 1:
        raise ConfigError("m must be >= 1")
    x = _check_positions(delayed_positions)
    inside = dist(x, x) < delta
    counts = inside.sum(axis=1)
    active = counts > m
    empty = np.empty(0, dtype=int)
    sets = [np.flatnonzero(inside[i]) if active[i] else empty for i in range(len(x))]
    return NeighborTable(sets, source_time)


def neighbor_sets_cs_delta(
    positions, delta: float, dist=euclidean_distances, source_time: float = 0.0
) -> NeighborTable:
    """Purely geometric neighborhoods: k in set i iff dist(x_k, x_i) <= delta (closed ball)."""
    if not delta > 0:
        raise ConfigError("delta must be > 0")
    x = _check_positions(positions)
    inside = dist(x, x) <= delta
    sets = [np.flatnonzero(inside[i]) for i in range(len(x))]
    return NeighborTable(sets, source_time)


def neighbor_sets_cs_q(
    positions, q: int, dist=euclidean_distances, source_time: float = 0.0
) -> NeighborTable:
    """The q other particles closest to i; distance ties break toward the lower index."""
    x = _check_positions(positions)
    n = len(x)
    if not 1 <= q <= n - 1:
        raise ConfigError("q must satisfy 1 <= q <= n-1")
    d = dist(x, x).copy()
    np.fill_diagonal(d, np.inf)
    # Stable sort keeps equal distances in index order.
    order = np.argsort(d, axis=1, kind="stable")[:, :q]
    sets = [np.sort(order[i]) for i in range(n)]
    return NeighborTable(sets, source_time)


def neighbor_sets_all(n: int, source_time: float = 0.0) -> NeighborTable:
    """Complete table used by the all-to-all cs model (self included, harmless)."""
    everyone = np.arange(n)
    return NeighborTable([everyone.copy() for _ in range(n)], source_time)


def neighbor_sets_di_grid(
    delayed_positions,
    delta: float,
    m: int,
    L: float | None = None,
    source_time: float = 0.0,
) -> NeighborTable:
    """Cell-list variant of the gated neighbor search; identical tables.

    Pass L for a periodic box (minimum-image distances); leave it None on
    the unbounded plane.  Cells have side >= delta, so candidates only come
    from the surrounding cell block.
    """
    if not delta > 0:
        raise ConfigError("delta must be > 0")
    if m < 1:
        raise ConfigError("m must be >= 1")
    x = _check_positions(delayed_positions)
    n, dim = x.shape

    if L is None:
        origin = x.min(axis=0)
        cells = np.floor((x - origin) / delta).astype(int)
        n_cells = None
    else:
        x = np.mod(x, L)
        per_axis = max(int(L // delta), 1)
        size = L / per_axis
        cells = np.minimum(np.floor(x / size).astype(int), per_axis - 1)
        n_cells = per_axis

    buckets: dict[tuple, list[int]] = {}
    for i, cell in enumerate(map(tuple, cells)):
        buckets.setdefault(cell, []).append(i)

    offsets = list(product((-1, 0, 1), repeat=dim))
    empty = np.empty(0, dtype=int)
    sets: list[np.ndarray] = []
    for i in range(n):
        seen: set[tuple] = set()
        candidates: list[int] = []
        for off in offsets:
            key = tuple(
                (c + o) % n_cells if n_cells is not None else c + o
                for c, o in zip(cells[i], off)
            )
            if key in seen:
                continue
            seen.add(key)
            candidates.extend(buckets.get(key, ()))
        cand = np.array(candidates, dtype=int)
        diff = x[cand] - x[i]
        if L is not None:
            diff -= L * np.round(diff / L)
        inside = cand[np.einsum("ij,ij->i", diff, diff) < delta * delta]
        sets.append(np.sort(inside) if len(inside) > m else empty)
    return NeighborTable(sets, source_time)


def neighbor_sets_di_ghost(
    delayed_positions, delta: float, m: int, L: float, source_time: float = 0.0
) -> NeighborTable:
    """Mirror-copy realization of the periodic gated neighbor rule.

    The box is extended by a band of width delta holding shifted copies of
    boundary particles; plain Euclidean search over base plus copies then
    matches the minimum-image tables whenever L > 2*delta.
    """
    if not L > 2 * delta:
        raise ConfigError("ghost construction requires L > 2*delta")
    x = np.mod(_check_positions(delayed_positions), L)
    n, dim = x.shape
    points = [x]
    owners = [np.arange(n)]
    for off in product((-L, 0.0, L), repeat=dim):
        if all(o == 0 for o in off):
            continue
        shifted = x + np.asarray(off)
        keep = ((shifted > -delta) & (shifted < L + delta)).all(axis=1)
        if keep.any():
            points.append(shifted[keep])
            owners.append(np.flatnonzero(keep))
    allx = np.vstack(points)
    owner = np.concatenate(owners)

    inside = euclidean_distances(x, allx) < delta
    counts = inside.sum(axis=1)
    empty = np.empty(0, dtype=int)
    sets = [
        np.sort(owner[inside[i]]) if counts[i] > m else empty for i in range(n)
    ]
    return NeighborTable(sets, source_time)


def di_weight_matrix(table: NeighborTable, policy: MPolicy, N: int) -> np.ndarray:
    """Dense weight matrix W with W[i, k] = M(N, i, #N_i) for k in set i, else 0."""
    mvals = _policy_values(policy, N, table.sizes())
    return table.membership_matrix() * mvals[:, None]


def _coupling_acceleration(weights: np.ndarray, velocities: np.ndarray) -> np.ndarray:
    # a_i = sum_k W_ik (v_k - v_i); the diagonal term cancels automatically.
    return weights @ velocities - weights.sum(axis=1, keepdims=True) * velocities


def acceleration_di(state: EnsembleState, table: NeighborTable, policy: MPolicy) -> np.ndarray:
    """Gated consensus force a_i = sum_{k in N_i} M(N, i, #N_i) (v_k - v_i)."""
    w = di_weight_matrix(table, policy, state.n)
    return _coupling_acceleration(w, state.velocities)


def cs_weight_matrix(
    positions: np.ndarray,
    table: NeighborTable,
    policy: MPolicy,
    alpha: float = 0.5,
    dist=euclidean_distances,
    psi=None,
) -> np.ndarray:
    """Weight matrix M_i * psi(dist) over the table membership."""
    n = len(table.sets)
    mvals = _policy_values(policy, n, table.sizes())
    d = dist(positions, positions)
    weights = psi(d) if psi is not None else alignment_weight(d, alpha)
    return table.membership_matrix() * weights * mvals[:, None]


def acceleration_cs(
    state: EnsembleState,
    table: NeighborTable,
    policy: MPolicy,
    alpha: float = 0.5,
    dist=euclidean_distances,
    psi=None,
) -> np.ndarray:
    """Weighted alignment force a_i = sum_{k in N_i} M psi(dist(x_i, x_k)) (v_k - v_i).

    psi overrides the built-in (1 + s)^(-alpha) weight when given.
    """
    w = cs_weight_matrix(state.positions, table, policy, alpha, dist, psi)
    return _coupling_acceleration(w, state.velocities)


def velocity_diameter(state: EnsembleState) -> float:
    """Largest pairwise velocity difference norm; zero at consensus."""
    if state.n < 2:
        return 0.0
    v = state.velocities
    diff = v[:, None, :] - v[None, :, :]
    # sqrt is monotone, so the max of squared norms gives the exact answer.
    return float(np.sqrt((diff * diff).sum(axis=-1).max()))


def total_momentum(state: EnsembleState) -> np.ndarray:
    """Componentwise sum of all velocities."""
    return state.velocities.sum(axis=0)


def density_ratio(N: int, m: int, delta: float, L: float) -> tuple[float, float]:
    """(average density N/L^2, gating density m/(pi delta^2)) for the square box."""
    if not L > 0:
        raise ConfigError("L must be > 0")
    rho_a = N / L**2
    rho_m = m / (np.pi * delta**2)
    return rho_a, rho_m
