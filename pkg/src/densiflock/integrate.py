"""Classic fourth-order Runge-Kutta time stepping with per-step topology.

The neighbor relation is rebuilt once per step -- from the delay buffer for
the density-gated model, from the current positions for the cs family -- and
held fixed across the four stages.  Distance weights of the cs family are
re-evaluated at the staged positions.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .domains import Domain, min_image_distance  # noqa: F401  (re-exported surface)
from .dynamics import (
    EnsembleState,
    ModelParams,
    NeighborTable,
    alignment_weight,
    di_weight_matrix,
    neighbor_sets_all,
    neighbor_sets_cs_delta,
    neighbor_sets_cs_q,
    neighbor_sets_di,
    total_momentum,
    velocity_diameter,
    _policy_values,
)
from .errors import IntegrationFault
from .graph import ClusterLabeling, build_digraph, strongly_connected_components
from .scenarios import ScenarioSpec, initial_state


class DelayBuffer:
    """Ring of recent position snapshots realizing the topology delay.

    With snapshots pushed for steps 0..n, delayed() returns the snapshot of
    step max(n - h_steps, 0): the initial positions serve until the buffer
    has aged past the delay.
    """

    def __init__(self, h_steps: int, initial=None, t0: float = 0.0):
        if h_steps < 1:
            raise ValueError("h_steps must be >= 1")
        self.h_steps = h_steps
        self._ring: deque[tuple[float, np.ndarray]] = deque(maxlen=h_steps + 1)
        if initial is not None:
            self.push(initial, t0)

    def push(self, positions: np.ndarray, t: float = 0.0) -> None:
        self._ring.append((float(t), np.array(positions, dtype=float, copy=True)))

    def delayed(self) -> np.ndarray:
        if not self._ring:
            raise ValueError("buffer holds no snapshot")
        return self._ring[0][1]

    def delayed_time(self) -> float:
        """Time of the snapshot delayed() returns."""
        if not self._ring:
            raise ValueError("buffer holds no snapshot")
        return self._ring[0][0]


@dataclass(eq=False)
class TrajectorySample:
    """One recorded instant: state, topology, clusters, scalar diagnostics."""

    step: int
    t: float
    state: EnsembleState
    unwrapped: np.ndarray
    delayed_positions: np.ndarray
    table: NeighborTable
    labels: ClusterLabeling
    vmax: float
    momentum: np.ndarray

    @property
    def n_clusters(self) -> int:
        return self.labels.cluster_count


@dataclass(eq=False)
class TrajectoryRecord:
    """Sampled time series of one run plus the spec that produced it.

    spec is None for runs started from an explicit initial state rather than
    a declared scenario.
    """

    spec: ScenarioSpec | None
    samples: list[TrajectorySample] = field(default_factory=list)

    @property
    def seed(self) -> int | None:
        return self.spec.seed if self.spec is not None else None

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def vmax_series(self) -> np.ndarray:
        return np.array([s.vmax for s in self.samples])

    def momentum_series(self) -> np.ndarray:
        return np.array([s.momentum for s in self.samples])

    def cluster_counts(self) -> np.ndarray:
        return np.array([s.n_clusters for s in self.samples])


# ---------------------------------------------------------------------------
# Per-step topology


def _table_from_rows(rows: list[np.ndarray], t: float) -> NeighborTable:
    return NeighborTable(rows, source_time=t)


class _StepTopology:
    """Membership mask and weights of one step, shared by stages and samples."""

    __slots__ = ("mask", "sizes", "mvals", "source_time")

    def __init__(self, mask: np.ndarray, sizes: np.ndarray, mvals: np.ndarray, t: float):
        self.mask = mask
        self.sizes = sizes
        self.mvals = mvals
        self.source_time = t

    def table(self) -> NeighborTable:
        empty = np.empty(0, dtype=int)
        rows = [
            np.flatnonzero(row) if size else empty
            for row, size in zip(self.mask, self.sizes)
        ]
        return _table_from_rows(rows, self.source_time)


def _step_topology(
    params: ModelParams, positions: np.ndarray, buffer: DelayBuffer, domain: Domain, t: float
) -> _StepTopology:
    metric = domain.distances
    policy = params.policy()
    if params.model == "di":
        delayed = buffer.delayed()
        inside = metric(delayed, delayed) < params.delta
        counts = inside.sum(axis=1)
        active = counts > params.m
        mask = inside & active[:, None]
        sizes = np.where(active, counts, 0)
        return _StepTopology(
            mask, sizes, _policy_values(policy, params.N, sizes), buffer.delayed_time()
        )
    if params.model == "cs":
        n = params.N
        mask = np.ones((n, n), dtype=bool)
        sizes = np.full(n, n)
    elif params.model == "cs_delta":
        mask = metric(positions, positions) <= params.delta
        sizes = mask.sum(axis=1)
    else:  # cs_q
        d = metric(positions, positions).copy()
        np.fill_diagonal(d, np.inf)
        order = np.argsort(d, axis=1, kind="stable")[:, : params.q]
        mask = np.zeros(d.shape, dtype=bool)
        mask[np.arange(len(d))[:, None], order] = True
        sizes = np.full(len(d), params.q)
    return _StepTopology(mask, sizes, _policy_values(policy, params.N, sizes), t)


def neighbor_table_for_step(
    params: ModelParams, state: EnsembleState, buffer: DelayBuffer, domain: Domain
) -> NeighborTable:
    """Table in effect for the step starting at state.t."""
    metric = domain.distances
    if params.model == "di":
        return neighbor_sets_di(
            buffer.delayed(), params.delta, params.m, dist=metric,
            source_time=buffer.delayed_time(),
        )
    if params.model == "cs":
        return neighbor_sets_all(params.N, source_time=state.t)
    if params.model == "cs_delta":
        return neighbor_sets_cs_delta(
            state.positions, params.delta, dist=metric, source_time=state.t
        )
    return neighbor_sets_cs_q(state.positions, params.q, dist=metric, source_time=state.t)


def _accel_from_topology(params: ModelParams, topo: _StepTopology, domain: Domain):
    """Stage-callable a(x, v) with the step's membership frozen."""
    if params.model == "di":
        w = topo.mask * topo.mvals[:, None]
        row = w.sum(axis=1, keepdims=True)

        def accel(_x, v):
            return w @ v - row * v

        return accel

    membership = topo.mask
    mvals = topo.mvals[:, None]
    metric = domain.distances
    alpha = params.alpha

    def accel(x, v):
        w = membership * alignment_weight(metric(x, x), alpha) * mvals
        return w @ v - w.sum(axis=1, keepdims=True) * v

    return accel


def _acceleration_fn(params: ModelParams, table: NeighborTable, domain: Domain):
    """Stage-callable a(x, v) built from an explicit table."""
    policy = params.policy()
    if params.model == "di":
        w = di_weight_matrix(table, policy, params.N)
        row = w.sum(axis=1, keepdims=True)

        def accel(_x, v):
            return w @ v - row * v

        return accel

    membership = table.membership_matrix()
    mvals = _policy_values(policy, params.N, table.sizes())[:, None]
    metric = domain.distances
    alpha = params.alpha

    def accel(x, v):
        w = membership * alignment_weight(metric(x, x), alpha) * mvals
        return w @ v - w.sum(axis=1, keepdims=True) * v

    return accel


def _rk4_arrays(x: np.ndarray, v: np.ndarray, dt: float, accel):
    """The four-stage update: velocity stages use the model force, position
    stages the staged velocities."""
    kv1 = accel(x, v) * dt
    kx1 = v * dt
    kv2 = accel(x + kx1 / 2, v + kv1 / 2) * dt
    kx2 = (v + kv1 / 2) * dt
    kv3 = accel(x + kx2 / 2, v + kv2 / 2) * dt
    kx3 = (v + kv2 / 2) * dt
    kv4 = accel(x + kx3, v + kv3) * dt
    kx4 = (v + kv3) * dt
    v_next = v + (kv1 + 2 * kv2 + 2 * kv3 + kv4) / 6
    x_next = x + (kx1 + 2 * kx2 + 2 * kx3 + kx4) / 6
    return x_next, v_next


def rk4_step(
    state: EnsembleState,
    dt: float,
    params: ModelParams,
    buffer: DelayBuffer,
    domain: Domain,
    table: NeighborTable | None = None,
) -> EnsembleState:
    """Advance one step; positions are wrapped back into a periodic box.

    The step's neighbor table (hence every gating decision) is computed once
    and reused by all four stages.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if table is None:
        table = neighbor_table_for_step(params, state, buffer, domain)
    accel = _acceleration_fn(params, table, domain)
    x_next, v_next = _rk4_arrays(state.positions, state.velocities, dt, accel)
    if not (np.isfinite(x_next).all() and np.isfinite(v_next).all()):
        raise IntegrationFault(int(round(state.t / dt)))
    return EnsembleState(state.t + dt, domain.wrap(x_next), v_next)


def _sample(step, t, x, v, unwrapped, delayed, topo: _StepTopology, params) -> TrajectorySample:
    state = EnsembleState(t, x, v)
    table = topo.table()
    digraph = build_digraph(table, params.policy(), params.N)
    labels = strongly_connected_components(digraph)
    return TrajectorySample(
        step=step,
        t=t,
        state=state,
        unwrapped=unwrapped.copy(),
        delayed_positions=np.array(delayed, copy=True),
        table=table,
        labels=labels,
        vmax=velocity_diameter(state),
        momentum=total_momentum(state),
    )


def simulate(
    initial: EnsembleState,
    params: ModelParams,
    domain: Domain,
    dt: float,
    t_end: float,
    sample_every: int = 10,
    spec: ScenarioSpec | None = None,
) -> TrajectoryRecord:
    """Integrate from an explicit initial state.

    Samples are recorded every sample_every steps; the initial and final
    steps are always included.  Deterministic: the stepper holds no
    randomness beyond the initial state.
    """
    if initial.n != params.N:
        raise ValueError("initial state particle count differs from params.N")
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    x = domain.wrap(initial.positions)
    v = initial.velocities.copy()
    n_steps = int(round(t_end / dt))
    buffer = DelayBuffer(params.h_steps, x, t0=0.0)
    unwrapped = x.copy()

    record = TrajectoryRecord(spec)
    for step in range(n_steps + 1):
        t = step * dt
        topo = _step_topology(params, x, buffer, domain, t)
        if step % sample_every == 0 or step == n_steps:
            record.samples.append(
                _sample(step, t, x, v, unwrapped, buffer.delayed(), topo, params)
            )
        if step == n_steps:
            break
        accel = _accel_from_topology(params, topo, domain)
        x_next, v_next = _rk4_arrays(x, v, dt, accel)
        if not (np.isfinite(x_next).all() and np.isfinite(v_next).all()):
            raise IntegrationFault(step)
        wrapped = domain.wrap(x_next)
        unwrapped += domain.shortest_displacement(wrapped, x)
        buffer.push(wrapped, (step + 1) * dt)
        x, v = wrapped, v_next
    return record


def run_simulation(spec: ScenarioSpec) -> TrajectoryRecord:
    """Integrate a declared scenario; deterministic for a fixed spec."""
    return simulate(
        initial_state(spec),
        spec.params,
        spec.domain,
        spec.dt,
        spec.t_end,
        spec.sample_every,
        spec=spec,
    )
