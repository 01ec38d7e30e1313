"""Multivariate Hawkes process (MHP) model family.

A model couples M counting processes: events of type j raise the intensity
of type-m events through an excitation function ``eta[m,j] * h[m,j](s)``,
where ``h`` is a probability density on (0, inf) (exponential or gamma here)
and ``eta[m,j]`` is the expected number of direct type-m offspring of one
type-j event.  Background arrivals follow a per-type baseline rate, either
constant or a piecewise-linear spline.

This module holds the structural description (:class:`ModelSpec`), concrete
parameter values (:class:`ParameterVector`), event data
(:class:`EventSequence`), intensity and compensator evaluation, the
exponential-kernel excitation-state recursion (:class:`EpsilonMatrix`), and
the flat-vector parameter layout used by optimizers and MCMC chains.

Event types are 1-based everywhere in the public API, matching the on-disk
CSV formats.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammainc, xlogy

from .errors import (
    InvalidInput,
    NegativeElapsedTime,
    NonConstantBaseline,
    NonExponentialKernel,
    NonPositiveParameter,
    ReversedInterval,
    TieViolation,
    TimeReversal,
    UnstableBranching,
)

EXPONENTIAL = "exponential"
GAMMA = "gamma"

# number of kernel parameters per family: exponential (beta,), gamma (kappa, delta)
_KERNEL_ARITY = {EXPONENTIAL: 1, GAMMA: 2}


# ---------------------------------------------------------------------------
# baselines


@dataclass(frozen=True)
class ConstantBaseline:
    """Time-invariant background rate; one coefficient."""

    kind: str = field(default="constant", init=False)

    @property
    def n_coefficients(self):
        return 1


@dataclass(frozen=True)
class SplineBaseline:
    """Piecewise-linear background rate (order-2 B-spline with interior knots).

    The coefficients in :class:`ParameterVector` are the baseline values at
    the augmented grid ``(0, knots..., horizon)``; between grid points the
    baseline interpolates linearly and outside ``[0, horizon]`` it clamps to
    the nearest endpoint value.
    """

    knots: tuple
    horizon: float
    kind: str = field(default="bspline", init=False)

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "horizon", float(self.horizon))
        if not self.horizon > 0:
            raise InvalidInput("spline baseline horizon must be positive")
        grid = (0.0,) + knots + (self.horizon,)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise InvalidInput(
                "spline knots must be strictly increasing inside (0, horizon)"
            )

    @property
    def n_coefficients(self):
        return len(self.knots) + 2

    @property
    def grid(self):
        return (0.0,) + self.knots + (self.horizon,)


def _baseline_from_dict(d):
    if d["kind"] == "constant":
        return ConstantBaseline()
    if d["kind"] == "bspline":
        return SplineBaseline(knots=tuple(d["knots"]), horizon=d["horizon"])
    raise InvalidInput(f"unknown baseline kind {d['kind']!r}")


def _baseline_to_dict(b):
    if isinstance(b, ConstantBaseline):
        return {"kind": "constant"}
    return {"kind": "bspline", "knots": list(b.knots), "horizon": b.horizon}


# ---------------------------------------------------------------------------
# model specification


@dataclass(frozen=True)
class ModelSpec:
    """Structural description of an MHP family.

    Parameters
    ----------
    baselines : per-type baseline descriptors (ConstantBaseline or SplineBaseline).
    kernels : M x M nested tuple of kernel family names, "exponential" or
        "gamma"; entry [m][j] shapes the effect of type-(j+1) events on
        type-(m+1) intensity.
    ties : groups of indices into the *full* parameter layout (see
        :func:`full_parameter_labels`) that are constrained equal.  Tied
        slots collapse to a single coordinate of the flat vector.
    """

    baselines: tuple
    kernels: tuple
    ties: tuple = ()

    def __post_init__(self):
        baselines = tuple(self.baselines)
        if len(baselines) < 1:
            raise InvalidInput("a model needs at least one event type")
        kernels = tuple(tuple(row) for row in self.kernels)
        m = len(baselines)
        if len(kernels) != m or any(len(row) != m for row in kernels):
            raise InvalidInput(f"kernels must form an {m}x{m} grid")
        for row in kernels:
            for k in row:
                if k not in _KERNEL_ARITY:
                    raise InvalidInput(f"unknown kernel family {k!r}")
        ties = tuple(tuple(sorted(int(i) for i in g)) for g in self.ties)
        object.__setattr__(self, "baselines", baselines)
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "ties", ties)
        slots = _full_slots(self)
        seen = set()
        for group in ties:
            if len(group) < 2:
                raise InvalidInput("tie groups need at least two members")
            roles = set()
            for i in group:
                if not 0 <= i < len(slots):
                    raise InvalidInput(f"tie index {i} outside parameter layout")
                if i in seen:
                    raise InvalidInput("tie groups must be disjoint")
                seen.add(i)
                roles.add(slots[i][0])
            if len(roles) != 1:
                raise InvalidInput("tie groups may only join parameters of one role")

    @property
    def n_types(self):
        return len(self.baselines)

    def full_size(self):
        return len(_full_slots(self))

    def flat_size(self):
        keep, _ = _flat_map(self)
        return len(keep)

    def flat_labels(self):
        return flat_parameter_labels(self)

    def to_dict(self):
        return {
            "format_version": 1,
            "baselines": [_baseline_to_dict(b) for b in self.baselines],
            "kernels": [list(row) for row in self.kernels],
            "ties": [list(g) for g in self.ties],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            baselines=tuple(_baseline_from_dict(b) for b in d["baselines"]),
            kernels=tuple(tuple(row) for row in d["kernels"]),
            ties=tuple(tuple(g) for g in d.get("ties", [])),
        )


@lru_cache(maxsize=None)
def _full_slots(spec):
    """Slot descriptors (role, m, index) of the full parameter layout.

    Order: baseline coefficients type-major, then eta row-major, then kernel
    parameters row-major with gamma contributing (kappa, delta) pairs.
    """
    slots = []
    for m, b in enumerate(spec.baselines, start=1):
        for c in range(1, b.n_coefficients + 1):
            slots.append(("nu", m, c))
    mm = spec.n_types
    for m in range(1, mm + 1):
        for j in range(1, mm + 1):
            slots.append(("eta", m, j))
    for m in range(1, mm + 1):
        for j in range(1, mm + 1):
            if spec.kernels[m - 1][j - 1] == EXPONENTIAL:
                slots.append(("beta", m, j))
            else:
                slots.append(("kappa", m, j))
                slots.append(("delta", m, j))
    return tuple(slots)


@lru_cache(maxsize=None)
def _flat_map(spec):
    """(keep, expand): full indices kept in the flat vector, and for every
    full index the flat position it reads back from."""
    n = len(_full_slots(spec))
    rep = {}
    for group in spec.ties:
        for i in group:
            rep[i] = group[0]
    keep = tuple(i for i in range(n) if rep.get(i, i) == i)
    pos = {f: p for p, f in enumerate(keep)}
    expand = tuple(pos[rep.get(i, i)] for i in range(n))
    return keep, expand


def full_parameter_labels(spec):
    """Labels of the full (uncollapsed) layout, e.g. nu_1, eta_2_1, beta_1_2."""
    labels = []
    for role, m, j in _full_slots(spec):
        if role == "nu" and spec.baselines[m - 1].n_coefficients == 1:
            labels.append(f"nu_{m}")
        else:
            labels.append(f"{role}_{m}_{j}")
    return labels


def flat_parameter_labels(spec):
    """Labels of the collapsed flat vector; a tie spanning a whole kernel row
    shortens to e.g. beta_1."""
    slots = _full_slots(spec)
    full = full_parameter_labels(spec)
    keep, _ = _flat_map(spec)
    row_tie = {}
    for group in spec.ties:
        role, m, _ = slots[group[0]]
        members = {slots[i] for i in group}
        wanted = {(role, m, j) for j in range(1, spec.n_types + 1)}
        if members == wanted:
            row_tie[group[0]] = f"{role}_{m}"
    return [row_tie.get(i, full[i]) for i in keep]


def kernel_row_ties(baselines, kernels):
    """Tie groups equating kernel parameters across source types within each row.

    This encodes the common assumption that the offspring delay law of
    type-m events does not depend on the parent's type.  Rows must use a
    single kernel family.
    """
    spec = ModelSpec(baselines=tuple(baselines), kernels=tuple(kernels))
    slots = _full_slots(spec)
    index = {s: i for i, s in enumerate(slots)}
    groups = []
    for m in range(1, spec.n_types + 1):
        row = {spec.kernels[m - 1][j] for j in range(spec.n_types)}
        if len(row) != 1:
            raise InvalidInput(f"kernel row {m} mixes families; cannot tie it")
        roles = ("beta",) if row == {EXPONENTIAL} else ("kappa", "delta")
        for role in roles:
            group = tuple(index[(role, m, j)] for j in range(1, spec.n_types + 1))
            if len(group) >= 2:
                groups.append(group)
    return tuple(groups)


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class ParameterVector:
    """Concrete MHP parameter values.

    Fields
    ------
    nu : per-type tuples of baseline coefficients (one scalar for a constant
        baseline, one value per spline grid point otherwise).
    eta : M x M nested tuple of branching ratios.
    kernel_params : per (m, j) tuple: (beta,) for exponential kernels,
        (kappa, delta) for gamma kernels.
    """

    nu: tuple
    eta: tuple
    kernel_params: tuple

    def __post_init__(self):
        nu = tuple(tuple(float(x) for x in row) for row in self.nu)
        eta = tuple(tuple(float(x) for x in row) for row in self.eta)
        kp = tuple(
            tuple(tuple(float(x) for x in cell) for cell in row)
            for row in self.kernel_params
        )
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "kernel_params", kp)
        m = len(nu)
        if len(eta) != m or any(len(r) != m for r in eta):
            raise InvalidInput("eta must be an MxM matrix matching nu")
        if len(kp) != m or any(len(r) != m for r in kp):
            raise InvalidInput("kernel_params must be an MxM grid matching nu")

    @property
    def n_types(self):
        return len(self.nu)

    def eta_matrix(self):
        return np.array(self.eta, dtype=float)

    def full_values(self, spec):
        """Parameter values in the full layout order of ``_full_slots``."""
        _check_shape(spec, self)
        vals = []
        for row in self.nu:
            vals.extend(row)
        for row in self.eta:
            vals.extend(row)
        for row in self.kernel_params:
            for cell in row:
                vals.extend(cell)
        return np.array(vals, dtype=float)

    def to_flat(self, spec):
        """Collapse to the flat vector (tied groups occupy one coordinate)."""
        full = self.full_values(spec)
        keep, _ = _flat_map(spec)
        return full[list(keep)]

    @classmethod
    def from_flat(cls, spec, flat):
        """Rebuild parameters from a flat vector, broadcasting tied groups."""
        flat = np.asarray(flat, dtype=float)
        keep, expand = _flat_map(spec)
        if flat.shape != (len(keep),):
            raise InvalidInput(
                f"flat vector has length {flat.size}, expected {len(keep)}"
            )
        full = flat[list(expand)]
        pos = 0
        nu = []
        for b in spec.baselines:
            k = b.n_coefficients
            nu.append(tuple(full[pos : pos + k]))
            pos += k
        m = spec.n_types
        eta = []
        for _ in range(m):
            eta.append(tuple(full[pos : pos + m]))
            pos += m
        kernel_params = []
        for i in range(m):
            row = []
            for j in range(m):
                arity = _KERNEL_ARITY[spec.kernels[i][j]]
                row.append(tuple(full[pos : pos + arity]))
                pos += arity
            kernel_params.append(tuple(row))
        return cls(nu=tuple(nu), eta=tuple(eta), kernel_params=tuple(kernel_params))

    def to_dict(self):
        return {
            "format_version": 1,
            "nu": [list(r) for r in self.nu],
            "eta": [list(r) for r in self.eta],
            "kernel_params": [[list(c) for c in r] for r in self.kernel_params],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            nu=tuple(tuple(r) for r in d["nu"]),
            eta=tuple(tuple(r) for r in d["eta"]),
            kernel_params=tuple(
                tuple(tuple(c) for c in r) for r in d["kernel_params"]
            ),
        )


def exponential_model(nu, eta, beta, tie_rows=False):
    """Constant-baseline MHP with exponential kernels; returns (spec, theta).

    ``beta[m][j]`` is the mean offspring delay of type-(j+1) parents on the
    type-(m+1) intensity.  With ``tie_rows`` the betas of each row are
    constrained equal (one offspring time scale per child type).
    """
    nu = [float(x) for x in np.atleast_1d(np.asarray(nu, dtype=float))]
    m = len(nu)
    kernels = tuple(tuple(EXPONENTIAL for _ in range(m)) for _ in range(m))
    baselines = tuple(ConstantBaseline() for _ in range(m))
    ties = kernel_row_ties(baselines, kernels) if tie_rows and m > 1 else ()
    spec = ModelSpec(baselines=baselines, kernels=kernels, ties=ties)
    beta = np.asarray(beta, dtype=float)
    theta = ParameterVector(
        nu=tuple((x,) for x in nu),
        eta=tuple(tuple(row) for row in np.asarray(eta, dtype=float)),
        kernel_params=tuple(
            tuple((float(beta[i, j]),) for j in range(m)) for i in range(m)
        ),
    )
    return spec, theta


def gamma_model(nu, eta, kappa, delta, tie_rows=False):
    """Constant-baseline MHP with gamma kernels; returns (spec, theta)."""
    nu = [float(x) for x in np.atleast_1d(np.asarray(nu, dtype=float))]
    m = len(nu)
    kernels = tuple(tuple(GAMMA for _ in range(m)) for _ in range(m))
    baselines = tuple(ConstantBaseline() for _ in range(m))
    ties = kernel_row_ties(baselines, kernels) if tie_rows and m > 1 else ()
    spec = ModelSpec(baselines=baselines, kernels=kernels, ties=ties)
    kappa = np.asarray(kappa, dtype=float)
    delta = np.asarray(delta, dtype=float)
    theta = ParameterVector(
        nu=tuple((x,) for x in nu),
        eta=tuple(tuple(row) for row in np.asarray(eta, dtype=float)),
        kernel_params=tuple(
            tuple((float(kappa[i, j]), float(delta[i, j])) for j in range(m))
            for i in range(m)
        ),
    )
    return spec, theta


def _check_shape(spec, theta):
    m = spec.n_types
    if theta.n_types != m:
        raise InvalidInput(f"parameters have {theta.n_types} types, model has {m}")
    for i, (b, row) in enumerate(zip(spec.baselines, theta.nu), start=1):
        if len(row) != b.n_coefficients:
            raise InvalidInput(
                f"baseline {i} expects {b.n_coefficients} coefficients, got {len(row)}"
            )
    for i in range(m):
        for j in range(m):
            arity = _KERNEL_ARITY[spec.kernels[i][j]]
            if len(theta.kernel_params[i][j]) != arity:
                raise InvalidInput(
                    f"kernel ({i + 1},{j + 1}) is {spec.kernels[i][j]} and takes "
                    f"{arity} parameter(s), got {len(theta.kernel_params[i][j])}"
                )


# ---------------------------------------------------------------------------
# event data


@dataclass(frozen=True, eq=False)
class EventSequence:
    """Ordered, typed event times on (0, horizon].

    times are strictly increasing positive reals; types are 1-based integers.
    Arrays are stored read-only, so instances are safe to share.
    """

    times: np.ndarray
    types: np.ndarray
    horizon: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).copy()
        types = np.asarray(self.types, dtype=np.int64).copy()
        horizon = float(self.horizon)
        if times.ndim != 1 or types.ndim != 1 or times.size != types.size:
            raise InvalidInput("times and types must be 1-D and equal length")
        if not horizon > 0:
            raise InvalidInput("horizon must be positive")
        if times.size:
            if not np.all(np.diff(times) > 0):
                raise InvalidInput("event times must be strictly increasing")
            if times[0] <= 0 or times[-1] > horizon:
                raise InvalidInput("event times must lie in (0, horizon]")
            if types.min() < 1:
                raise InvalidInput("event types are 1-based")
        times.flags.writeable = False
        types.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "horizon", horizon)

    @property
    def n_events(self):
        return int(self.times.size)

    def counts_by_type(self, n_types=None):
        m = n_types or (int(self.types.max()) if self.n_events else 1)
        return np.bincount(self.types - 1, minlength=m)[:m]


# ---------------------------------------------------------------------------
# kernels


def _kernel_pdf(kind, params, s):
    """Offspring density h(s); vectorized over s >= 0."""
    s = np.asarray(s, dtype=float)
    if kind == EXPONENTIAL:
        (beta,) = params
        return np.exp(-s / beta) / beta
    kappa, delta = params
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(
            xlogy(kappa - 1.0, s)
            - s / delta
            - math.lgamma(kappa)
            - kappa * math.log(delta)
        )
    return out


def _kernel_cdf(kind, params, s):
    """Offspring delay CDF; vectorized over s >= 0."""
    s = np.asarray(s, dtype=float)
    if kind == EXPONENTIAL:
        (beta,) = params
        return -np.expm1(-s / beta)
    kappa, delta = params
    return gammainc(kappa, s / delta)


def kernel_mean_delay(kind, params):
    if kind == EXPONENTIAL:
        return params[0]
    kappa, delta = params
    return kappa * delta


# ---------------------------------------------------------------------------
# baseline evaluation


def baseline_value(theta, spec, m, t):
    """Background rate nu_m(t); vectorized over t."""
    b = spec.baselines[m - 1]
    coefs = theta.nu[m - 1]
    if isinstance(b, ConstantBaseline):
        out = np.full_like(np.asarray(t, dtype=float), coefs[0])
        return out if out.ndim else float(out)
    vals = np.interp(t, b.grid, coefs)
    return vals if np.ndim(t) else float(vals)


def baseline_integral(theta, spec, m, a, b):
    """Exact integral of the type-m baseline over [a, b]."""
    a = float(a)
    b = float(b)
    if b < a:
        raise ReversedInterval(f"interval ({a}, {b}) is reversed")
    if a < 0:
        raise ReversedInterval("baseline integrals start at nonnegative times")
    base = spec.baselines[m - 1]
    coefs = theta.nu[m - 1]
    if isinstance(base, ConstantBaseline):
        return coefs[0] * (b - a)
    grid = np.asarray(base.grid)
    inner = grid[(grid > a) & (grid < b)]
    pts = np.concatenate(([a], inner, [b]))
    vals = np.interp(pts, grid, coefs)
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(pts)))


def baseline_max(theta, spec, m, a, b):
    """Upper bound of the type-m baseline over [a, b] (exact for both kinds)."""
    base = spec.baselines[m - 1]
    coefs = theta.nu[m - 1]
    if isinstance(base, ConstantBaseline):
        return coefs[0]
    grid = np.asarray(base.grid)
    inner = grid[(grid > a) & (grid < b)]
    pts = np.concatenate(([a], inner, [b]))
    return float(np.max(np.interp(pts, grid, coefs)))


# ---------------------------------------------------------------------------
# intensities and excitation mass


def intensity(theta, spec, history, m, t):
    """Conditional intensity of type-m events at time t.

    Sums the baseline and the excitation of all history events strictly
    before t.  An empty history is allowed.
    """
    _check_shape(spec, theta)
    if not 1 <= m <= spec.n_types:
        raise InvalidInput(f"type {m} outside 1..{spec.n_types}")
    if history.n_events and int(history.types.max()) > spec.n_types:
        raise InvalidInput("history contains types beyond the model")
    lam = float(baseline_value(theta, spec, m, t))
    times = history.times
    types = history.types
    mask = times < t
    for j in range(1, spec.n_types + 1):
        sel = mask & (types == j)
        if not sel.any():
            continue
        s = t - times[sel]
        lam += theta.eta[m - 1][j - 1] * float(
            np.sum(_kernel_pdf(spec.kernels[m - 1][j - 1], theta.kernel_params[m - 1][j - 1], s))
        )
    return lam


def total_intensity(theta, spec, history, t):
    return sum(intensity(theta, spec, history, m, t) for m in range(1, spec.n_types + 1))


def excitation_antiderivative(theta, spec, m, j, s):
    """Excitation mass G[m,j](s) = eta[m,j] * CDF of the offspring delay.

    Nondecreasing in s and bounded by eta[m,j]; G(0) = 0.
    """
    if np.any(np.asarray(s) < 0):
        raise NegativeElapsedTime("elapsed time must be nonnegative")
    g = theta.eta[m - 1][j - 1] * _kernel_cdf(
        spec.kernels[m - 1][j - 1], theta.kernel_params[m - 1][j - 1], s
    )
    return g if np.ndim(s) else float(g)


# ---------------------------------------------------------------------------
# exponential-kernel excitation state


@dataclass(frozen=True, eq=False)
class EpsilonMatrix:
    """Excitation state for exponential kernels at an anchor time.

    ``eps[m, p]`` is the contribution of past type-(p+1) events to the
    type-(m+1) intensity.  Entries are right limits: an event exactly at the
    anchor has its jump included.  Between events every entry decays as
    ``exp(-(t - anchor) / beta[m, p])``, which is what lets particle filters
    drop the event history entirely.
    """

    eps: np.ndarray
    anchor: float

    def __post_init__(self):
        eps = np.asarray(self.eps, dtype=float).copy()
        if eps.ndim != 2 or eps.shape[0] != eps.shape[1]:
            raise InvalidInput("epsilon state must be a square matrix")
        if np.any(eps < 0) or not np.all(np.isfinite(eps)):
            raise InvalidInput("epsilon entries must be finite and nonnegative")
        eps.flags.writeable = False
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "anchor", float(self.anchor))

    @classmethod
    def zeros(cls, n_types, anchor=0.0):
        return cls(eps=np.zeros((n_types, n_types)), anchor=anchor)


def _beta_matrix(theta):
    m = theta.n_types
    out = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            cell = theta.kernel_params[i][j]
            if len(cell) != 1:
                raise NonExponentialKernel(
                    "excitation-state recursion requires exponential kernels"
                )
            out[i, j] = cell[0]
    return out


def epsilon_advance(eps, theta, to, event=None):
    """Move an exponential-kernel excitation state forward in time.

    Decays every entry by ``exp(-(to - anchor) / beta)``; if ``event =
    (tau, p)`` is given (anchor <= tau <= to), the state first decays to tau,
    the jump ``eta[:, p] / beta[:, p]`` is added to column p, and the decay
    continues to ``to``.
    """
    beta = _beta_matrix(theta)
    to = float(to)
    if to < eps.anchor:
        raise TimeReversal(f"cannot advance from {eps.anchor} back to {to}")
    mat = np.array(eps.eps)
    t0 = eps.anchor
    if event is not None:
        tau, p = float(event[0]), int(event[1])
        if tau < t0 or tau > to:
            raise TimeReversal("event time must lie between the anchor and `to`")
        if not 1 <= p <= theta.n_types:
            raise InvalidInput(f"event type {p} outside 1..{theta.n_types}")
        mat *= np.exp(-(tau - t0) / beta)
        eta = theta.eta_matrix()
        mat[:, p - 1] += eta[:, p - 1] / beta[:, p - 1]
        t0 = tau
    mat *= np.exp(-(to - t0) / beta)
    return EpsilonMatrix(eps=mat, anchor=to)


def epsilon_intensity(eps, theta, spec, m, t):
    """Type-m intensity at t > anchor implied by an excitation state with no
    events in (anchor, t)."""
    beta = _beta_matrix(theta)
    if t < eps.anchor:
        raise TimeReversal("probe time precedes the state anchor")
    decayed = eps.eps[m - 1] * np.exp(-(t - eps.anchor) / beta[m - 1])
    return float(baseline_value(theta, spec, m, t)) + float(decayed.sum())


def epsilon_from_history(theta, history, anchor):
    """Excitation state at `anchor` accumulated from all events <= anchor."""
    m = theta.n_types
    state = EpsilonMatrix.zeros(m, anchor=0.0)
    for tau, z in zip(history.times, history.types):
        if tau > anchor:
            break
        state = epsilon_advance(state, theta, tau, event=(tau, int(z)))
    return epsilon_advance(state, theta, anchor)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    spectral_radius: float
    warnings: tuple = ()


def spectral_radius(eta, tol=1e-10, max_iter=200_000):
    """Spectral radius of |eta| by power iteration to relative tolerance tol.

    Iterates on |eta| + I so that periodic branching structures still
    converge; the shift moves every eigenvalue by exactly one.
    """
    a = np.abs(np.asarray(eta, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInput("eta must be a square matrix")
    if not a.any():
        return 0.0
    b = a + np.eye(a.shape[0])
    v = np.full(a.shape[0], 1.0 / a.shape[0])
    est = 1.0
    for _ in range(max_iter):
        w = b @ v
        new = w.sum() / v.sum()
        v = w / w.sum()
        if abs(new - est) <= tol * max(1.0, abs(new)):
            est = new
            break
        est = new
    return max(est - 1.0, 0.0)


def validate(spec, theta, mode="finite_horizon"):
    """Check parameter admissibility for a model.

    finite_horizon: positivity and tie constraints must hold; a branching
    spectral radius >= 1 is reported as a warning only (finite-window
    likelihoods remain well defined).  stationary: additionally requires
    spectral radius < 1.

    Raises NonPositiveParameter, TieViolation, or (stationary mode)
    UnstableBranching; otherwise returns a ValidationResult.
    """
    if mode not in ("finite_horizon", "stationary"):
        raise InvalidInput(f"unknown validation mode {mode!r}")
    _check_shape(spec, theta)
    for m, row in enumerate(theta.nu, start=1):
        for c, x in enumerate(row, start=1):
            if x < 0 or not math.isfinite(x):
                raise NonPositiveParameter(f"baseline coefficient nu_{m}({c}) = {x}")
    for m, row in enumerate(theta.eta, start=1):
        for j, x in enumerate(row, start=1):
            if x < 0 or not math.isfinite(x):
                raise NonPositiveParameter(f"branching ratio eta_{m}_{j} = {x}")
    for m, row in enumerate(theta.kernel_params, start=1):
        for j, cell in enumerate(row, start=1):
            for x in cell:
                if x <= 0 or not math.isfinite(x):
                    raise NonPositiveParameter(
                        f"kernel parameter of pair ({m},{j}) = {x}"
                    )
    full = theta.full_values(spec)
    for group in spec.ties:
        vals = full[list(group)]
        if np.any(vals != vals[0]):
            raise TieViolation(f"tie group {group} holds unequal values {vals}")
    rho = spectral_radius(theta.eta_matrix())
    warnings = ()
    if rho >= 1.0:
        msg = f"branching spectral radius {rho:.6g} >= 1; process is not stationary"
        if mode == "stationary":
            raise UnstableBranching(msg)
        warnings = (msg,)
    return ValidationResult(ok=True, spectral_radius=rho, warnings=warnings)


def stationary_mean_rates(theta):
    """Long-run mean arrival rates (I - eta)^-1 nu for constant baselines."""
    if any(len(row) != 1 for row in theta.nu):
        raise NonConstantBaseline("stationary rates need constant baselines")
    eta = theta.eta_matrix()
    if spectral_radius(eta) >= 1.0:
        raise UnstableBranching("spectral radius >= 1: no stationary rates")
    nu = np.array([row[0] for row in theta.nu])
    return np.linalg.solve(np.eye(theta.n_types) - eta, nu)
