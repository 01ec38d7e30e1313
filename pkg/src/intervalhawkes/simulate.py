"""Exact simulation of MHP sample paths and aggregation into interval counts.

Paths are drawn by thinning the total intensity: candidate arrivals come
from a homogeneous process whose rate dominates the intensity, and each is
accepted with probability lambda*(t) / bound.  For exponential kernels the
current total intensity dominates all future decay; for gamma kernels the
bound is the supremum of the intensity over a lookahead window, refreshed
after each accepted event.

Simulation requires gamma shapes >= 1 (the density is unbounded at 0+
otherwise, so no finite thinning bound exists just after an event).
"""

from dataclasses import dataclass

import numpy as np

from . import _batch
from .dataio import IntervalCounts
from .errors import GridHorizonMismatch, InvalidInput, UnstableExplosion
from .model import (
    EXPONENTIAL,
    EventSequence,
    baseline_max,
    baseline_value,
    kernel_mean_delay,
    validate,
    _kernel_pdf,
)

DEFAULT_EVENT_CAP = 10_000_000


def replicate_rng(seed, index):
    """Independent generator for replicate `index` of a seeded batch."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


@dataclass(frozen=True, eq=False)
class AggregationGrid:
    """Observation boundaries t_0 = 0 < t_1 < ... < t_I; widths may differ."""

    boundaries: np.ndarray

    def __post_init__(self):
        bnd = np.asarray(self.boundaries, dtype=float).copy()
        if bnd.ndim != 1 or bnd.size < 2:
            raise InvalidInput("a grid needs at least one interval")
        if bnd[0] != 0.0:
            raise InvalidInput("grids start at t_0 = 0")
        if not np.all(np.diff(bnd) > 0):
            raise InvalidInput("grid boundaries must be strictly increasing")
        bnd.flags.writeable = False
        object.__setattr__(self, "boundaries", bnd)

    @classmethod
    def regular(cls, horizon, width):
        n = round(horizon / width)
        if n < 1 or abs(n * width - horizon) > 1e-9 * max(1.0, horizon):
            raise InvalidInput(f"width {width} does not divide horizon {horizon}")
        bnd = width * np.arange(n + 1)
        bnd[-1] = horizon
        return cls(boundaries=bnd)

    @property
    def horizon(self):
        return float(self.boundaries[-1])

    @property
    def n_intervals(self):
        return int(self.boundaries.size - 1)


def _require_simulable(spec, theta):
    for i in range(spec.n_types):
        for j in range(spec.n_types):
            if spec.kernels[i][j] != EXPONENTIAL and theta.kernel_params[i][j][0] < 1.0:
                raise InvalidInput(
                    "thinning needs gamma shapes >= 1 (density unbounded at 0+ otherwise)"
                )


def _mean_delay_lookahead(spec, theta):
    delays = [
        kernel_mean_delay(spec.kernels[i][j], theta.kernel_params[i][j])
        for i in range(spec.n_types)
        for j in range(spec.n_types)
    ]
    return float(np.mean(delays))


def simulate_path(theta, spec, horizon, seed, max_events=DEFAULT_EVENT_CAP):
    """Draw one exact realization on (0, horizon] by thinning.

    Deterministic given the seed (an int, or a Generator to draw from an
    existing stream).  Raises UnstableExplosion past `max_events`.
    """
    validate(spec, theta)
    _require_simulable(spec, theta)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    horizon = float(horizon)
    if horizon <= 0:
        raise InvalidInput("horizon must be positive")
    m = spec.n_types
    all_exp = all(k == EXPONENTIAL for row in spec.kernels for k in row)
    eta = theta.eta_matrix()
    times = []
    types = []

    if all_exp:
        beta = np.array([[theta.kernel_params[i][j][0] for j in range(m)] for i in range(m)])
        jump = eta / beta
        eps = np.zeros((m, m))
        t = 0.0
        while True:
            base_bound = sum(baseline_max(theta, spec, a + 1, t, horizon) for a in range(m))
            bound = base_bound + eps.sum()
            if bound <= 0.0:
                break
            t_new = t + rng.exponential(1.0 / bound)
            if t_new > horizon:
                break
            eps *= np.exp(-(t_new - t) / beta)
            t = t_new
            lam = np.array([baseline_value(theta, spec, a + 1, t) for a in range(m)])
            lam += eps.sum(axis=1)
            lam_star = lam.sum()
            assert lam_star <= bound * (1.0 + 1e-9), "thinning bound violated"
            u = rng.random() * bound
            if u <= lam_star:
                z = int(np.searchsorted(np.cumsum(lam), u, side="left"))
                z = min(z, m - 1)
                times.append(t)
                types.append(z + 1)
                eps[:, z] += jump[:, z]
                if len(times) > max_events:
                    raise UnstableExplosion(f"event count exceeded cap {max_events}")
    else:
        lookahead = _mean_delay_lookahead(spec, theta)
        kinds = [[spec.kernels[i][j] for j in range(m)] for i in range(m)]
        params = theta.kernel_params
        t = 0.0
        while t < horizon:
            w_end = min(t + lookahead, horizon)
            bound = sum(baseline_max(theta, spec, a + 1, t, w_end) for a in range(m))
            for tau, z in zip(times, types):
                s0 = t - tau
                s1 = w_end - tau
                for a in range(m):
                    bound += eta[a, z - 1] * _sup_pdf(
                        kinds[a][z - 1], params[a][z - 1], s0, s1
                    )
            if bound <= 0.0:
                t = w_end
                continue
            s = t
            while True:
                s += rng.exponential(1.0 / bound)
                if s > w_end:
                    t = w_end
                    break
                lam = np.array([baseline_value(theta, spec, a + 1, s) for a in range(m)])
                if times:
                    ts = np.asarray(times)
                    zs = np.asarray(types)
                    for j in range(1, m + 1):
                        gap = s - ts[zs == j]
                        if gap.size == 0:
                            continue
                        for a in range(m):
                            lam[a] += eta[a, j - 1] * float(
                                np.sum(_kernel_pdf(kinds[a][j - 1], params[a][j - 1], gap))
                            )
                lam_star = lam.sum()
                assert lam_star <= bound * (1.0 + 1e-9), "thinning bound violated"
                u = rng.random() * bound
                if u <= lam_star:
                    z = int(np.searchsorted(np.cumsum(lam), u, side="left"))
                    z = min(z, m - 1)
                    times.append(s)
                    types.append(z + 1)
                    if len(times) > max_events:
                        raise UnstableExplosion(f"event count exceeded cap {max_events}")
                    t = s
                    break

    return EventSequence(times=np.array(times), types=np.array(types, dtype=np.int64),
                         horizon=horizon)


def _sup_pdf(kind, params, s0, s1):
    if kind == EXPONENTIAL or params[0] <= 1.0:
        return float(_kernel_pdf(kind, params, s0))
    kappa, delta = params
    mode = (kappa - 1.0) * delta
    if s1 <= mode:
        return float(_kernel_pdf(kind, params, s1))
    if s0 >= mode:
        return float(_kernel_pdf(kind, params, s0))
    return float(_kernel_pdf(kind, params, mode))


def simulate_paths(theta, spec, horizon, n_paths, seed, max_events=DEFAULT_EVENT_CAP):
    """Independent replicate paths; replicate i uses the (seed, i) stream."""
    return [
        simulate_path(theta, spec, horizon, replicate_rng(seed, i), max_events=max_events)
        for i in range(n_paths)
    ]


def aggregate(path, grid, n_types=None):
    """Count events per type in each half-open window (t_{i-1}, t_i].

    An event exactly at a boundary belongs to the interval it closes.  The
    grid must span the path's observation window.
    """
    horizon = path.horizon
    if abs(grid.horizon - horizon) > 1e-9 * max(1.0, abs(horizon)):
        raise GridHorizonMismatch(
            f"grid ends at {grid.horizon}, path horizon is {horizon}"
        )
    if n_types is None:
        n_types = int(path.types.max()) if path.n_events else 1
    if path.n_events and int(path.types.max()) > n_types:
        raise InvalidInput("path contains types beyond n_types")
    counts = np.zeros((grid.n_intervals, n_types), dtype=np.int64)
    if path.n_events:
        idx = np.searchsorted(grid.boundaries[1:], path.times, side="left")
        np.add.at(counts, (idx, path.types - 1), 1)
    return IntervalCounts(boundaries=grid.boundaries, counts=counts)


def simulate_counts(theta, spec, grid, n_paths, seed, max_events=DEFAULT_EVENT_CAP):
    """Aggregated counts of `n_paths` independent replicates, shape (n_paths, I, M).

    Constant-baseline models run through a compiled batch loop (one derived
    stream consumed sequentially, single threaded, so results do not depend
    on worker counts); spline baselines fall back to per-path simulation.
    """
    validate(spec, theta)
    _require_simulable(spec, theta)
    m = spec.n_types
    constant = all(b.kind == "constant" for b in spec.baselines)
    if not constant:
        out = np.empty((n_paths, grid.n_intervals, m), dtype=np.int64)
        for i in range(n_paths):
            path = simulate_path(theta, spec, grid.horizon, replicate_rng(seed, i),
                                 max_events=max_events)
            out[i] = aggregate(path, grid, n_types=m).counts
        return out

    nu = np.array([row[0] for row in theta.nu])
    eta = theta.eta_matrix()
    bnd = np.asarray(grid.boundaries, dtype=float)
    seed_int = int(np.random.SeedSequence(entropy=seed).generate_state(1)[0])
    all_exp = all(k == EXPONENTIAL for row in spec.kernels for k in row)
    if all_exp:
        beta = np.array([[theta.kernel_params[i][j][0] for j in range(m)] for i in range(m)])
        counts, ok = _batch.thin_counts_exponential(nu, eta, beta, bnd, n_paths,
                                                    seed_int, max_events)
    else:
        kind = np.zeros((m, m), dtype=np.int64)
        p1 = np.empty((m, m))
        p2 = np.ones((m, m))
        for i in range(m):
            for j in range(m):
                cell = theta.kernel_params[i][j]
                if spec.kernels[i][j] == EXPONENTIAL:
                    p1[i, j] = cell[0]
                else:
                    kind[i, j] = 1
                    p1[i, j] = cell[0]
                    p2[i, j] = cell[1]
        lookahead = _mean_delay_lookahead(spec, theta)
        counts, ok = _batch.thin_counts_general(nu, eta, kind, p1, p2, bnd, n_paths,
                                                seed_int, max_events, lookahead)
    if not ok:
        raise UnstableExplosion(f"event count exceeded cap {max_events}")
    return counts
