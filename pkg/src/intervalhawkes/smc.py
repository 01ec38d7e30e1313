"""Unbiased SMC estimation of the interval-count likelihood.

The likelihood of count data factorizes over observation windows, and each
factor is estimated by a guided particle filter: latent event times are
proposed so that every particle agrees with the observed counts (ordered
uniforms over the window, plus a uniformly random arrangement of the typed
multiset), and the importance weight of a particle is

    log w = sum_k log lambda_{z_k}(tau_k) - int_{t_prev}^{t_cur} lambda*(t) dt
            + n* log(t_cur - t_prev) - sum_m log(n_m!)

with the compensator in closed form from the excitation mass G.  A Poisson
time proposal (rate chosen so all proposals land in the window with
probability 0.95) is available for variance comparisons; its out-of-window
proposals receive zero weight.

All weight arithmetic is in log space; per-window likelihood factors are
log-mean-exp of the weights, combined with the carried normalized weights
when resampling is skipped.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammainc, gammaincinv, gammaln, xlogy

from . import _batch
from .dataio import IntervalCounts
from .errors import AllParticlesDead, InvalidInput, TimeReversal
from .model import (
    EXPONENTIAL,
    EpsilonMatrix,
    EventSequence,
    baseline_integral,
    baseline_value,
    validate,
)

_LOG_FACT_CACHE_SIZE = 10_000
_log_fact_cache = None


def log_factorial(n):
    """log(n!) via log-gamma, cached for n <= 10_000."""
    global _log_fact_cache
    if _log_fact_cache is None:
        _log_fact_cache = gammaln(np.arange(_LOG_FACT_CACHE_SIZE + 1) + 1.0)
    n = np.asarray(n)
    if n.size and n.max() <= _LOG_FACT_CACHE_SIZE:
        return _log_fact_cache[n]
    return gammaln(n + 1.0)


def _logsumexp(x):
    """1-D log-sum-exp; -inf entries are handled without warnings."""
    m = np.max(x)
    if not np.isfinite(m):
        return float(m)  # all -inf, or a nan/inf that should propagate
    return float(m + math.log(np.exp(x - m).sum()))


_gamma_q95_cache = {}


def _gamma_quantile_95(n):
    """0.95 quantile of Gamma(shape=n, rate=1)."""
    out = _gamma_q95_cache.get(n)
    if out is None:
        out = float(gammaincinv(n, 0.95))
        _gamma_q95_cache[n] = out
    return out


# ---------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class SmcConfig:
    """Particle filter settings.

    resampling "every" matches the reference construction (multinomial
    resampling before every propagation); "ess" resamples only when the
    effective sample size drops below ess_threshold * n_particles, an
    opt-in optimization.
    """

    n_particles: int
    proposal: str = "uniform"
    resampling: str = "every"
    ess_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 2:
            raise InvalidInput("need at least two particles")
        if self.proposal not in ("uniform", "poisson"):
            raise InvalidInput(f"unknown proposal {self.proposal!r}")
        if self.resampling not in ("every", "ess"):
            raise InvalidInput(f"unknown resampling scheme {self.resampling!r}")
        if not 0.0 < self.ess_threshold <= 1.0:
            raise InvalidInput("ess_threshold must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class ParticleCloud:
    """Final weighted particle set.

    This approximates the filtering law of the latent times given all
    counts.  Because the guided proposal does not dominate the predictive
    law, it must NOT be read as a predictive sample.
    """

    weights: np.ndarray
    anchor: float
    eps: np.ndarray = None          # (J, M, M) for exponential kernels
    times: np.ndarray = None        # (J, K) retained histories otherwise
    types: np.ndarray = None        # (J, K), 1-based


@dataclass(frozen=True, eq=False)
class SmcResult:
    """Log-likelihood estimate with per-window factors and an ESS trace.

    If every particle dies inside some window, `degenerate` is set, the
    estimate is -inf, and the factor/ESS arrays are truncated at the failing
    window (its ESS entry is 0).
    """

    log_likelihood_estimate: float
    per_interval_log_factors: np.ndarray
    ess_trace: np.ndarray
    degenerate: bool
    particles: ParticleCloud = None

    def to_dict(self):
        return {
            "format_version": 1,
            "log_likelihood_estimate": self.log_likelihood_estimate,
            "per_interval_log_factors": [float(x) for x in self.per_interval_log_factors],
            "ess_trace": [float(x) for x in self.ess_trace],
            "degenerate": bool(self.degenerate),
        }


@dataclass(frozen=True)
class ParticleState:
    """One particle: excitation state (exponential kernels) or retained
    history (general kernels), plus its current log-weight."""

    log_weight: float
    id: int = 0
    eps: EpsilonMatrix = None
    history: EventSequence = None


# ---------------------------------------------------------------------------
# proposals


def propose_times_uniform(t_prev, t_cur, n_star, rng):
    """Ordered uniform times in (t_prev, t_cur] via normalized exponential
    spacings: O(n), no sort."""
    if n_star < 1:
        raise InvalidInput("n_star must be at least 1")
    if not t_prev < t_cur:
        raise InvalidInput("window must have positive width")
    gaps = rng.standard_exponential(n_star + 1)
    return t_prev + (t_cur - t_prev) * (np.cumsum(gaps[:-1]) / gaps.sum())


def propose_types(counts_row, rng):
    """Uniformly random arrangement of the typed multiset given by counts_row."""
    counts_row = np.asarray(counts_row, dtype=np.int64)
    if counts_row.sum() < 1:
        raise InvalidInput("counts_row must contain at least one event")
    base = np.repeat(np.arange(1, counts_row.size + 1), counts_row)
    rng.shuffle(base)
    return base


def propose_times_poisson(t_prev, t_cur, n_star, rng):
    """First n_star arrivals of a Poisson process started at t_prev whose
    rate is tuned so they all land in the window with probability 0.95.
    Times may exit the window; the weight step kills such particles."""
    if n_star < 1:
        raise InvalidInput("n_star must be at least 1")
    rate = _gamma_quantile_95(n_star) / (t_cur - t_prev)
    return t_prev + np.cumsum(rng.exponential(1.0 / rate, n_star))


def _times_uniform_batch(t_prev, t_cur, n_star, n_particles, rng):
    gaps = rng.standard_exponential((n_particles, n_star + 1))
    cum = np.cumsum(gaps[:, :-1], axis=1)
    return t_prev + (t_cur - t_prev) * (cum / gaps.sum(axis=1, keepdims=True))


def _times_poisson_batch(t_prev, t_cur, n_star, n_particles, rng):
    rate = _gamma_quantile_95(n_star) / (t_cur - t_prev)
    return t_prev + np.cumsum(rng.exponential(1.0 / rate, (n_particles, n_star)), axis=1)


def _types_batch(counts_row, n_particles, rng):
    base = np.repeat(np.arange(counts_row.size, dtype=np.int64), counts_row)
    return rng.permuted(np.tile(base, (n_particles, 1)), axis=1)  # 0-based


# ---------------------------------------------------------------------------
# parameter pack: arrays precomputed once per SMC run


class _ParamPack:
    def __init__(self, theta, spec):
        self.spec = spec
        self.theta = theta
        self.m = spec.n_types
        self.eta = theta.eta_matrix()
        self.all_exp = all(k == EXPONENTIAL for row in spec.kernels for k in row)
        m = self.m
        if self.all_exp:
            self.beta = np.array(
                [[theta.kernel_params[i][j][0] for j in range(m)] for i in range(m)]
            )
            self.beta_flat = np.ascontiguousarray(self.beta.reshape(-1))
            with np.errstate(invalid="ignore"):
                self.jump = np.where(self.beta > 0, self.eta / self.beta, 0.0)
        # unified gamma view (exponential == gamma with shape 1) for the
        # history-based path
        self.kappa = np.empty((m, m))
        self.delta = np.empty((m, m))
        for i in range(m):
            for j in range(m):
                cell = theta.kernel_params[i][j]
                if spec.kernels[i][j] == EXPONENTIAL:
                    self.kappa[i, j] = 1.0
                    self.delta[i, j] = cell[0]
                else:
                    self.kappa[i, j] = cell[0]
                    self.delta[i, j] = cell[1]
        self.log_norm = gammaln(self.kappa) + self.kappa * np.log(self.delta)
        self.constant = all(b.kind == "constant" for b in spec.baselines)
        if self.constant:
            self.nu_vec = np.array([row[0] for row in theta.nu])

    def baseline_at(self, types0, t):
        """nu_{z}(t) for 0-based types and matching times (vectorized)."""
        if self.constant:
            return self.nu_vec[types0]
        out = np.empty(np.shape(t), dtype=float)
        for m0 in range(self.m):
            mask = types0 == m0
            if np.any(mask):
                out[mask] = baseline_value(self.theta, self.spec, m0 + 1, t[mask])
        return out

    def baseline_compensator(self, a, b):
        return sum(
            baseline_integral(self.theta, self.spec, m, a, b)
            for m in range(1, self.m + 1)
        )


def _gamma_pdf_arrays(kappa, delta, log_norm, s):
    """Gamma density with elementwise parameters (log_norm is
    log Gamma(kappa) + kappa log delta); s <= 0 yields 0, or 1/delta at
    s == 0 in the exponential (shape 1) limit."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(xlogy(kappa - 1.0, s) - s / delta - log_norm)
    return np.where(s > 0, out, np.where(kappa == 1.0, np.exp(-log_norm) * (s == 0), 0.0))


# ---------------------------------------------------------------------------
# batched weight computation


def _propagate_exponential(eps2, t_prev, t_cur, times, types0, pack):
    """Advance flattened (J, M*M) excitation states through the window's
    proposed events, returning (core, eps2) with core = sum log-intensities
    minus the full window compensator.

    State entry [j, a*M + p] is the contribution of type-(p+1) events to the
    type-(a+1) intensity of particle j; each inter-event gap integrates to
    eps * beta * (1 - decay).  Constant-baseline models go through the
    compiled sweep; the vectorized path below also covers spline baselines.
    """
    if pack.constant:
        eps2 = np.ascontiguousarray(eps2)
        core = _batch.propagate_exponential_const(
            eps2, times, types0, pack.beta_flat, pack.jump, pack.nu_vec,
            float(t_prev), float(t_cur),
        )
        core -= pack.baseline_compensator(t_prev, t_cur)
        return core, eps2
    n_particles, mm = eps2.shape
    m = pack.m
    beta_flat = pack.beta.reshape(-1)
    neg_inv_beta = -1.0 / beta_flat
    jump_by_type = np.ascontiguousarray(pack.jump.T)  # row p: jump onto column p
    row_cols = np.arange(m)  # offsets within a state row
    rows = np.arange(n_particles)[:, None]
    comp = eps2 @ beta_flat
    loglam = np.zeros(n_particles)
    prev = float(t_prev)
    with np.errstate(divide="ignore"):
        for k in range(times.shape[1]):
            tk = times[:, k]
            decay = np.exp(np.outer(tk - prev, neg_inv_beta))
            eps2 = eps2 * decay
            comp -= eps2 @ beta_flat
            zk = types0[:, k]
            lam = pack.baseline_at(zk, tk) + eps2[rows, zk[:, None] * m + row_cols].sum(axis=1)
            loglam += np.log(lam)
            eps2[rows, row_cols * m + zk[:, None]] += jump_by_type[zk]
            comp += eps2 @ beta_flat
            prev = tk
        dt = np.maximum(t_cur - prev, 0.0)  # clamp for dead out-of-window particles
        decay = np.exp(np.outer(dt, neg_inv_beta)) if times.shape[1] else \
            np.exp(dt * neg_inv_beta)[None, :]
        eps2 = eps2 * decay
        comp -= eps2 @ beta_flat
    comp += pack.baseline_compensator(t_prev, t_cur)
    return loglam - comp, eps2


def _excitation_mass_total(times, types0, t_end, pack):
    """sum_m sum_k G_{m, z_k}(t_end - tau_k) over (J, K) histories."""
    n_particles = times.shape[0]
    total = np.zeros(n_particles)
    if times.shape[1] == 0:
        return total
    s = np.maximum(t_end - times, 0.0)
    for m0 in range(pack.m):
        kap = pack.kappa[m0][types0]
        del_ = pack.delta[m0][types0]
        total += (pack.eta[m0][types0] * gammainc(kap, s / del_)).sum(axis=1)
    return total


def _weights_general(hist_times, hist_types0, t_prev, t_cur, times, types0, pack):
    """core = sum log-intensities minus the window compensator, computed
    from retained histories (any kernel mix)."""
    n_particles = times.shape[0]
    all_times = np.concatenate([hist_times, times], axis=1)
    all_types = np.concatenate([hist_types0, types0], axis=1)
    comp = np.full(n_particles, pack.baseline_compensator(t_prev, t_cur))
    comp += _excitation_mass_total(all_times, all_types, t_cur, pack)
    comp -= _excitation_mass_total(hist_times, hist_types0, t_prev, pack)
    loglam = np.zeros(n_particles)
    n_hist = hist_times.shape[1]
    for k in range(times.shape[1]):
        tk = times[:, k]
        zk = types0[:, k]
        past_t = all_times[:, : n_hist + k]
        past_z = all_types[:, : n_hist + k]
        s = tk[:, None] - past_t
        kap = pack.kappa[zk[:, None], past_z]
        del_ = pack.delta[zk[:, None], past_z]
        lam = pack.baseline_at(zk, tk) + (
            pack.eta[zk[:, None], past_z]
            * _gamma_pdf_arrays(kap, del_, pack.log_norm[zk[:, None], past_z], s)
        ).sum(axis=1)
        with np.errstate(divide="ignore"):
            loglam += np.log(lam)
    return loglam - comp, all_times, all_types


def _proposal_correction(times, counts_row, t_prev, t_cur, proposal):
    """log [ p(n | times agree) / q(times, types) ] terms beyond the core."""
    n_star = int(counts_row.sum())
    width = t_cur - t_prev
    log_fact_row = float(log_factorial(counts_row).sum())
    if proposal == "uniform":
        return n_star * math.log(width) - log_fact_row
    # Poisson proposal: remove its log-density instead of the uniform's
    corr = np.zeros(times.shape[0]) + (math.lgamma(n_star + 1) - log_fact_row)
    if n_star:
        rate = _gamma_quantile_95(n_star) / width
        last = times[:, -1]
        corr -= n_star * math.log(rate) - rate * (last - t_prev)
        corr = np.where(last > t_cur, -np.inf, corr)
    return corr


# ---------------------------------------------------------------------------
# public per-particle operations


def interval_log_weight(particle, theta, spec, t_prev, t_cur, proposed, counts_row,
                        proposal="uniform"):
    """Log importance weight of one particle for one observation window.

    `proposed` is a (times, types) pair with 1-based types.  Returns -inf
    (never raises) for zero-probability configurations: a type multiset that
    disagrees with the counts, or out-of-window times.
    """
    pack = _ParamPack(theta, spec)
    times = np.asarray(proposed[0], dtype=float).reshape(1, -1)
    types = np.asarray(proposed[1], dtype=np.int64).reshape(1, -1)
    counts_row = np.asarray(counts_row, dtype=np.int64)
    if times.shape != types.shape:
        raise InvalidInput("proposed times and types differ in length")
    if np.bincount(types[0] - 1, minlength=pack.m).tolist() != counts_row.tolist():
        return -math.inf
    if times.shape[1] and (np.any(np.diff(times[0]) <= 0) or times[0, 0] <= t_prev):
        return -math.inf
    if proposal == "uniform" and times.shape[1] and times[0, -1] > t_cur:
        return -math.inf
    types0 = types - 1
    if pack.all_exp:
        state = particle.eps if particle.eps is not None else EpsilonMatrix.zeros(pack.m, t_prev)
        if state.anchor > t_prev:
            raise TimeReversal("particle state anchored past the window start")
        if state.anchor < t_prev:
            from .model import epsilon_advance

            state = epsilon_advance(state, theta, t_prev)
        core, _ = _propagate_exponential(state.eps.reshape(1, -1).copy(), t_prev,
                                         t_cur, times, types0, pack)
    else:
        if particle.history is not None:
            hist_t = particle.history.times[None, :]
            hist_z = (particle.history.types - 1)[None, :]
            if hist_t.size and hist_t[0, -1] > t_prev:
                raise TimeReversal("particle history extends past the window start")
        else:
            hist_t = np.zeros((1, 0))
            hist_z = np.zeros((1, 0), dtype=np.int64)
        core, _, _ = _weights_general(hist_t, hist_z, t_prev, t_cur, times, types0, pack)
    corr = _proposal_correction(times, counts_row, t_prev, t_cur, proposal)
    logw = core + corr
    return float(logw[0])


def resample(particles, rng):
    """Multinomial resampling with replacement; returned particles carry
    uniform (zero) log-weights."""
    logw = np.array([p.log_weight for p in particles])
    if np.all(np.isinf(logw) & (logw < 0)):
        raise AllParticlesDead("all particle weights are zero")
    idx = _multinomial_indices(logw, rng)
    return [replace(particles[int(i)], log_weight=0.0) for i in idx]


def _multinomial_indices(log_weights, rng, normalized=False):
    if normalized:
        w = np.exp(log_weights)
    else:
        w = np.exp(log_weights - _logsumexp(log_weights))
    cum = np.cumsum(w)
    cum[-1] = 1.0
    return np.searchsorted(cum, rng.random(log_weights.size), side="left")


# ---------------------------------------------------------------------------
# the filter


def _ess(log_w_normalized):
    return float(1.0 / np.exp(2.0 * log_w_normalized).sum())


def smc_log_likelihood(theta, spec, counts, config, return_particles=False):
    """Estimate the log-likelihood of interval counts by the guided filter.

    Iterates the observation windows: (optionally) resample, propose latent
    times and types for each particle, weight, and accumulate the
    log-mean-exp factor.  Unbiased on the likelihood scale; deterministic
    given (seed, n_particles, proposal, resampling scheme).
    """
    validate(spec, theta)
    if not isinstance(counts, IntervalCounts):
        raise InvalidInput("counts must be an IntervalCounts")
    if counts.n_types != spec.n_types:
        raise InvalidInput(
            f"counts have {counts.n_types} types, model has {spec.n_types}"
        )
    pack = _ParamPack(theta, spec)
    n_particles = config.n_particles
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    bnd = counts.boundaries
    matrix = counts.counts
    log_j = math.log(n_particles)
    log_w = np.full(n_particles, -log_j)  # normalized (log-sum-exp is 0)
    eps = np.zeros((n_particles, pack.m * pack.m)) if pack.all_exp else None
    hist_t = np.zeros((n_particles, 0))
    hist_z = np.zeros((n_particles, 0), dtype=np.int64)
    factors = []
    ess_trace = []
    degenerate = False

    for i in range(counts.n_intervals):
        if i > 0:
            do_resample = config.resampling == "every" or (
                _ess(log_w) < config.ess_threshold * n_particles
            )
            if do_resample:
                idx = _multinomial_indices(log_w, rng, normalized=True)
                if pack.all_exp:
                    eps = eps[idx]
                else:
                    hist_t = hist_t[idx]
                    hist_z = hist_z[idx]
                log_w = np.full(n_particles, -log_j)
        t_prev = float(bnd[i])
        t_cur = float(bnd[i + 1])
        row = matrix[i]
        n_star = int(row.sum())
        if n_star == 0:
            times = np.zeros((n_particles, 0))
            types0 = np.zeros((n_particles, 0), dtype=np.int64)
        else:
            if config.proposal == "uniform":
                times = _times_uniform_batch(t_prev, t_cur, n_star, n_particles, rng)
            else:
                times = _times_poisson_batch(t_prev, t_cur, n_star, n_particles, rng)
            types0 = _types_batch(row, n_particles, rng)
        if pack.all_exp:
            core, eps = _propagate_exponential(eps, t_prev, t_cur, times, types0, pack)
        else:
            core, hist_t, hist_z = _weights_general(hist_t, hist_z, t_prev, t_cur,
                                                    times, types0, pack)
        logw_interval = core + _proposal_correction(times, row, t_prev, t_cur,
                                                    config.proposal)
        combined = log_w + logw_interval
        factor = _logsumexp(combined)
        if factor == -math.inf or math.isnan(factor):
            factors.append(-math.inf)
            ess_trace.append(0.0)
            degenerate = True
            break
        factors.append(factor)
        log_w = combined - factor
        ess_trace.append(_ess(log_w))

    total = -math.inf if degenerate else float(np.sum(factors))
    cloud = None
    if return_particles and not degenerate:
        weights = np.exp(log_w)
        if pack.all_exp:
            cloud = ParticleCloud(weights=weights, anchor=float(bnd[-1]),
                                  eps=eps.reshape(n_particles, pack.m, pack.m))
        else:
            cloud = ParticleCloud(weights=weights, anchor=float(bnd[-1]),
                                  times=hist_t, types=hist_z + 1)
    return SmcResult(
        log_likelihood_estimate=total,
        per_interval_log_factors=np.array(factors),
        ess_trace=np.array(ess_trace),
        degenerate=degenerate,
        particles=cloud,
    )
