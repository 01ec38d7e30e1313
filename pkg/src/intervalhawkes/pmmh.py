"""Pseudo-marginal Metropolis-Hastings over MHP parameters.

Each step proposes a Gaussian random-walk move of the flat parameter vector
(tied groups move as one coordinate), evaluates a fresh SMC estimate of the
likelihood at the proposal, and accepts with probability
min(1, L_hat(theta') / L_hat(theta)).  The estimate stored with the current
state is never recomputed while the state is unchanged, which is what makes
the chain target the exact likelihood despite the noisy estimates.

Proposals that leave the positivity domain are rejected immediately (the
flat-prior-on-the-domain reading of the symmetric Gaussian proposal).
Summaries follow the quantile conventions used for reporting: the estimate
is the marginal median and the standard error is the 95% interval width
divided by 2 * PHI_INV_975.
"""

import json
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .dataio import IntervalCounts
from .errors import ChainTooShort, DegenerateData, InvalidInput
from .model import GAMMA, ParameterVector, validate
from .simulate import simulate_counts
from .smc import smc_log_likelihood

logger = logging.getLogger(__name__)

# Phi^{-1}(0.975), fixed by convention so summaries are reproducible
PHI_INV_975 = 1.959964


@dataclass(frozen=True)
class PmmhConfig:
    """Chain settings.

    jump_size is the random-walk standard deviation; set jump_is_variance
    when a source quotes it as a variance.  jump_scale optionally rescales
    the move per flat coordinate (entries of 0 freeze a coordinate);
    log_scale switches to a random walk on log-parameters with the matching
    Jacobian correction (not the reference construction; off by default).
    """

    n_iterations: int
    jump_size: float = 0.12
    burn_in_fraction: float = 0.10
    seed: int = 0
    init: ParameterVector = None
    jump_is_variance: bool = False
    log_scale: bool = False
    jump_scale: tuple = None

    def __post_init__(self):
        if self.n_iterations < 1:
            raise InvalidInput("need at least one iteration")
        if not self.jump_size > 0:
            raise InvalidInput("jump size must be positive")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise InvalidInput("burn-in fraction must lie in [0, 1)")
        if self.jump_scale is not None:
            object.__setattr__(
                self, "jump_scale", tuple(float(x) for x in self.jump_scale)
            )


@dataclass(frozen=True)
class ChainRecord:
    """State after one PMMH iteration; log_lik_hat is the stored estimate
    for theta and is never recomputed."""

    theta: ParameterVector
    log_lik_hat: float
    accepted: bool
    iteration: int


@dataclass(frozen=True)
class ParameterSummary:
    name: str
    estimate: float
    se: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True, eq=False)
class EnvelopeBands:
    """Pointwise quantile curves of cumulative counts from simulated paths."""

    boundaries: np.ndarray  # interval right endpoints t_1..t_I
    quantiles: np.ndarray
    bands: np.ndarray  # (n_quantiles, I, M)


def default_init(counts, spec):
    """Chain start: half the observed events are treated as background
    (nu = totals / 2T), self-excitation 0.6 and cross-excitation 0.2, unit
    kernel parameters."""
    totals = counts.totals_by_type()
    if counts.n_types != spec.n_types:
        raise InvalidInput("counts and model disagree on the number of types")
    for m, total in enumerate(totals, start=1):
        if total == 0:
            raise DegenerateData(f"type {m} has no events; heuristic init undefined")
    horizon = counts.horizon
    nu = tuple(
        tuple([float(totals[m]) / (2.0 * horizon)] * b.n_coefficients)
        for m, b in enumerate(spec.baselines)
    )
    m = spec.n_types
    eta = tuple(tuple(0.6 if i == j else 0.2 for j in range(m)) for i in range(m))
    kernel_params = tuple(
        tuple(
            (1.0, 1.0) if spec.kernels[i][j] == GAMMA else (1.0,)
            for j in range(m)
        )
        for i in range(m)
    )
    return ParameterVector(nu=nu, eta=eta, kernel_params=kernel_params)


def _smc_seed(master_seed, iteration):
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(1, iteration))
    return int(ss.generate_state(1)[0])


def run_chain(spec, counts, smc_config, pmmh_config, record_callback=None):
    """Run the pseudo-marginal chain; returns every iteration as a ChainRecord.

    Record 0 is the initial state.  A fresh SMC seed is derived per
    iteration from the chain seed; degenerate SMC results reject the
    proposal (logged).  The proposal/acceptance stream is deterministic
    given the chain seed.
    """
    theta = pmmh_config.init if pmmh_config.init is not None else default_init(counts, spec)
    validate(spec, theta)
    if not isinstance(counts, IntervalCounts):
        raise InvalidInput("counts must be an IntervalCounts")
    flat = theta.to_flat(spec)
    dim = flat.size
    scale = (
        np.ones(dim)
        if pmmh_config.jump_scale is None
        else np.asarray(pmmh_config.jump_scale, dtype=float)
    )
    if scale.shape != (dim,):
        raise InvalidInput(f"jump_scale needs {dim} entries")
    step = (
        math.sqrt(pmmh_config.jump_size)
        if pmmh_config.jump_is_variance
        else pmmh_config.jump_size
    )
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=pmmh_config.seed, spawn_key=(0,))
    )
    result = smc_log_likelihood(
        theta, spec, counts, replace(smc_config, seed=_smc_seed(pmmh_config.seed, 0))
    )
    log_lik = result.log_likelihood_estimate
    records = [ChainRecord(theta=theta, log_lik_hat=log_lik, accepted=True, iteration=0)]
    if record_callback is not None:
        record_callback(records[0])
    n_degenerate = 0
    for it in range(1, pmmh_config.n_iterations + 1):
        z = rng.standard_normal(dim)
        log_jacobian = 0.0
        if pmmh_config.log_scale:
            proposal_flat = np.exp(np.log(flat) + step * scale * z)
            log_jacobian = float(np.sum(np.log(proposal_flat)) - np.sum(np.log(flat)))
        else:
            proposal_flat = flat + step * scale * z
        accepted = False
        proposal = None
        try:
            proposal = ParameterVector.from_flat(spec, proposal_flat)
            validate(spec, proposal)
        except InvalidInput:
            proposal = None
        if proposal is not None:
            res = smc_log_likelihood(
                proposal, spec, counts,
                replace(smc_config, seed=_smc_seed(pmmh_config.seed, it)),
            )
            if res.degenerate:
                n_degenerate += 1
                logger.debug("iteration %d: degenerate SMC estimate, rejecting", it)
            else:
                log_ratio = res.log_likelihood_estimate - log_lik + log_jacobian
                if math.isnan(log_ratio):  # -inf vs -inf current state
                    log_ratio = -math.inf
                u = rng.random()
                if math.log(u) < log_ratio:
                    accepted = True
                    theta = proposal
                    flat = proposal_flat
                    log_lik = res.log_likelihood_estimate
        record = ChainRecord(theta=theta, log_lik_hat=log_lik, accepted=accepted,
                             iteration=it)
        records.append(record)
        if record_callback is not None:
            record_callback(record)
    if n_degenerate:
        logger.info("%d of %d proposals rejected on degenerate SMC estimates",
                    n_degenerate, pmmh_config.n_iterations)
    return records


def summarize_samples(samples, labels=None):
    """Median / quantile-based summaries of an (n, d) sample matrix.

    Quantiles use linear interpolation of order statistics (numpy default),
    so results are bit-for-bit reproducible across runs.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if labels is None:
        labels = [f"x_{i}" for i in range(samples.shape[1])]
    med = np.median(samples, axis=0)
    lo, hi = np.quantile(samples, [0.025, 0.975], axis=0)
    se = (hi - lo) / (2.0 * PHI_INV_975)
    return [
        ParameterSummary(name=labels[i], estimate=float(med[i]), se=float(se[i]),
                         ci_low=float(lo[i]), ci_high=float(hi[i]))
        for i in range(samples.shape[1])
    ]


def summarize(chain, burn_in_fraction, spec):
    """Per-parameter (estimate, se, ci) from a chain after burn-in removal."""
    records = list(chain)
    drop = int(math.floor(len(records) * burn_in_fraction))
    post = records[drop:]
    if len(post) < 100:
        raise ChainTooShort(f"{len(post)} post-burn-in iterations; need at least 100")
    matrix = np.array([r.theta.to_flat(spec) for r in post])
    return summarize_samples(matrix, labels=spec.flat_labels())


def posterior_predictive_envelope(theta_hat, spec, grid, n_replicates, quantiles,
                                  seed):
    """Pointwise quantile bands of cumulative counts over simulated paths."""
    counts = simulate_counts(theta_hat, spec, grid, n_replicates, seed)
    cumulative = counts.cumsum(axis=1)
    bands = np.quantile(cumulative, quantiles, axis=0)
    return EnvelopeBands(
        boundaries=np.array(grid.boundaries[1:]),
        quantiles=np.asarray(quantiles, dtype=float),
        bands=bands,
    )


# ---------------------------------------------------------------------------
# chain persistence (JSON lines, one record per line)


def record_to_dict(record, spec):
    return {
        "iteration": record.iteration,
        "theta": [float(x) for x in record.theta.to_flat(spec)],
        "log_lik_hat": float(record.log_lik_hat),
        "accepted": bool(record.accepted),
    }


def record_from_dict(d, spec):
    return ChainRecord(
        theta=ParameterVector.from_flat(spec, np.array(d["theta"], dtype=float)),
        log_lik_hat=float(d["log_lik_hat"]),
        accepted=bool(d["accepted"]),
        iteration=int(d["iteration"]),
    )


def save_chain(records, pathname, spec):
    with open(pathname, "w") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record, spec)) + "\n")


def load_chain(pathname, spec):
    records = []
    with open(pathname) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(record_from_dict(json.loads(line), spec))
    return records
