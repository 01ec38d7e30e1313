"""Complete-data log-likelihood, MLE, and curvature-based standard errors.

When exact event times are observed the log-likelihood is

    sum_{k: tau_k < T} log lambda_{z_k}(tau_k) - int_0^T lambda*(t) dt,

with the compensator in closed form.  For exponential kernels a single
recursion over the events evaluates both the value and (with constant
baselines) the analytic gradient in O(n M^2).  The MLE maximizes the
log-likelihood over log-transformed coordinates; the covariance is the
inverse negative Hessian at the optimum, with the Hessian by central finite
differences on the original scale.
"""

import math

import numpy as np
from scipy.optimize import minimize

from .errors import (
    InvalidInput,
    NonConstantBaseline,
    NonExponentialKernel,
    NonFiniteLogLik,
    OptimizerDiverged,
    SingularHessian,
)
from .model import (
    EXPONENTIAL,
    ParameterVector,
    baseline_integral,
    baseline_value,
    validate,
    _flat_map,
    _kernel_cdf,
    _kernel_pdf,
)

GRADIENT_TOLERANCE = 1e-6
MAX_ITERATIONS = 500
HESSIAN_RELATIVE_STEP = 1e-4


def _all_exponential(spec):
    return all(k == EXPONENTIAL for row in spec.kernels for k in row)


def _all_constant(spec):
    return all(b.kind == "constant" for b in spec.baselines)


def complete_loglik(theta, spec, path):
    """Complete-data log-likelihood of an event sequence on (0, horizon].

    Raises NonFiniteLogLik if some event sits at zero intensity.
    """
    validate(spec, theta)
    m = spec.n_types
    if path.n_events and int(path.types.max()) > m:
        raise InvalidInput("path contains types beyond the model")
    horizon = path.horizon
    if _all_exponential(spec):
        loglam, comp_exc, _ = _exponential_sweep(theta, spec, path)
        comp = comp_exc + sum(
            baseline_integral(theta, spec, i, 0.0, horizon) for i in range(1, m + 1)
        )
        if not np.isfinite(loglam):
            raise NonFiniteLogLik("an event has zero intensity")
        return loglam - comp
    # general kernels: closed-form compensator via the excitation mass,
    # intensities by direct history sums
    comp = sum(baseline_integral(theta, spec, i, 0.0, horizon) for i in range(1, m + 1))
    times = path.times
    types = path.types
    for i in range(m):
        for j in range(m):
            sel = types == j + 1
            if not sel.any():
                continue
            comp += theta.eta[i][j] * float(
                np.sum(_kernel_cdf(spec.kernels[i][j], theta.kernel_params[i][j],
                                   horizon - times[sel]))
            )
    loglam = 0.0
    for k in range(path.n_events):
        tau = times[k]
        if tau >= horizon:
            break
        z = int(types[k])
        lam = float(baseline_value(theta, spec, z, tau))
        for j in range(m):
            sel = types[:k] == j + 1
            if not sel.any():
                continue
            lam += theta.eta[z - 1][j] * float(
                np.sum(_kernel_pdf(spec.kernels[z - 1][j], theta.kernel_params[z - 1][j],
                                   tau - times[:k][sel]))
            )
        if lam <= 0.0:
            raise NonFiniteLogLik(f"event {k} at t={tau} has zero intensity")
        loglam += math.log(lam)
    return loglam - comp


def _exponential_sweep(theta, spec, path):
    """One pass over an event sequence with the excitation-state recursion.

    Returns (sum of log event intensities, excitation compensator over
    (0, horizon], unit-excitation state at the horizon).  eps0 tracks
    sum (1/beta) e^(-s/beta) per (m, p), so the intensity contribution is
    eta * eps0 and each inter-event gap integrates to
    eta * eps0 * beta * (1 - decay).
    """
    m = spec.n_types
    beta = np.array([[theta.kernel_params[i][j][0] for j in range(m)] for i in range(m)])
    eta = theta.eta_matrix()
    horizon = path.horizon
    eps0 = np.zeros((m, m))
    comp = 0.0
    loglam = 0.0
    t_state = 0.0
    for tau, z in zip(path.times, path.types):
        d = tau - t_state
        decay = np.exp(-d / beta)
        comp += float((eta * eps0 * beta * (1.0 - decay)).sum())
        eps0 = eps0 * decay
        t_state = tau
        if tau < horizon:
            lam = float(baseline_value(theta, spec, int(z), tau))
            lam += float((eta[z - 1] * eps0[z - 1]).sum())
            loglam += math.log(lam) if lam > 0 else -math.inf
        eps0[:, z - 1] += 1.0 / beta[:, z - 1]
    d = horizon - t_state
    decay = np.exp(-d / beta)
    comp += float((eta * eps0 * beta * (1.0 - decay)).sum())
    eps0 = eps0 * decay
    return loglam, comp, eps0


def complete_loglik_grad(theta, spec, path):
    """Analytic gradient of the complete-data log-likelihood over the full
    parameter layout (exponential kernels with constant baselines)."""
    _, grad = _value_and_grad_exponential(theta, spec, path)
    return grad


def _value_and_grad_exponential(theta, spec, path):
    if not _all_exponential(spec):
        raise NonExponentialKernel("analytic gradient needs exponential kernels")
    if not _all_constant(spec):
        raise NonConstantBaseline("analytic gradient needs constant baselines")
    m = spec.n_types
    beta = np.array([[theta.kernel_params[i][j][0] for j in range(m)] for i in range(m)])
    eta = theta.eta_matrix()
    nu = np.array([row[0] for row in theta.nu])
    horizon = path.horizon
    # unit-excitation states: eps0 = sum e^(-s/beta)/beta, psi0 = sum (s/beta) e^(-s/beta)
    eps0 = np.zeros((m, m))
    psi0 = np.zeros((m, m))
    loglam = 0.0
    g_nu = np.zeros(m)
    g_eta = np.zeros((m, m))
    g_beta = np.zeros((m, m))
    type_counts = np.zeros(m)
    t_state = 0.0
    for tau, z in zip(path.times, path.types):
        z0 = int(z) - 1
        d = tau - t_state
        decay = np.exp(-d / beta)
        psi0 = decay * (psi0 + d * eps0)
        eps0 = eps0 * decay
        t_state = tau
        if tau < horizon:
            lam = nu[z0] + float((eta[z0] * eps0[z0]).sum())
            if lam <= 0:
                raise NonFiniteLogLik(f"event at t={tau} has zero intensity")
            loglam += math.log(lam)
            g_nu[z0] += 1.0 / lam
            g_eta[z0] += eps0[z0] / lam
            g_beta[z0] += eta[z0] * (psi0[z0] - beta[z0] * eps0[z0]) / (beta[z0] ** 2 * lam)
        type_counts[z0] += 1
        eps0[:, z0] += 1.0 / beta[:, z0]
    d = horizon - t_state
    decay = np.exp(-d / beta)
    psi0 = decay * (psi0 + d * eps0)
    eps0 = eps0 * decay
    # compensator: nu_m * T + sum_k eta (1 - e^(-u/beta));  its eta-gradient is
    # n_p - beta * eps0(T) and its beta-gradient is -(eta/beta) * psi0(T)
    comp = float(nu.sum()) * horizon + float((eta * (type_counts[None, :] - beta * eps0)).sum())
    g_nu -= horizon
    g_eta -= type_counts[None, :] - beta * eps0
    g_beta += eta * psi0 / beta
    value = loglam - comp
    grad = np.concatenate([g_nu, g_eta.ravel(), g_beta.ravel()])
    return value, grad


def _collapse_gradient(spec, grad_full):
    keep, expand = _flat_map(spec)
    out = np.zeros(len(keep))
    np.add.at(out, np.asarray(expand), grad_full)
    return out


def mle_fit(spec, path, init, max_iterations=MAX_ITERATIONS,
            gradient_tolerance=GRADIENT_TOLERANCE, fixed=None):
    """Maximize the complete-data log-likelihood; returns (theta_hat, covariance).

    Optimization runs on log coordinates of the flat vector (quasi-Newton,
    analytic gradient when kernels are exponential with constant baselines).
    The branching spectral radius is deliberately not constrained: the
    finite-horizon likelihood is defined without it.  `fixed` optionally
    marks flat coordinates to hold at their init values (they then stay out
    of the covariance, whose rows/columns are zeroed).  The covariance is
    the inverse negative finite-difference Hessian over the flat coordinates.
    """
    validate(spec, init)
    flat0 = init.to_flat(spec)
    dim = flat0.size
    if fixed is None:
        free = np.ones(dim, dtype=bool)
    else:
        fixed = np.asarray(fixed, dtype=bool)
        if fixed.shape != (dim,):
            raise InvalidInput(f"fixed mask needs {dim} entries")
        free = ~fixed
        if not free.any():
            raise InvalidInput("at least one coordinate must be free")
    if np.any(flat0[free] <= 0):
        raise InvalidInput("log-scale optimization needs strictly positive free coordinates")
    analytic = _all_exponential(spec) and _all_constant(spec)

    def assemble(x):
        flat = flat0.copy()
        flat[free] = np.exp(x)
        return flat

    def objective(x):
        theta = ParameterVector.from_flat(spec, assemble(x))
        try:
            if analytic:
                value, grad_full = _value_and_grad_exponential(theta, spec, path)
                grad = (_collapse_gradient(spec, grad_full) * assemble(x))[free]
                return -value, -grad
            return -complete_loglik(theta, spec, path)
        except NonFiniteLogLik:
            if analytic:
                return np.inf, np.zeros(int(free.sum()))
            return np.inf

    result = minimize(
        objective,
        np.log(flat0[free]),
        jac=True if analytic else None,
        method="L-BFGS-B",
        options={"maxiter": max_iterations, "gtol": gradient_tolerance},
    )
    if not np.isfinite(result.fun):
        raise OptimizerDiverged(f"optimizer failed: {result.message}")
    flat_hat = flat0.copy()
    flat_hat[free] = np.exp(result.x)
    theta_hat = ParameterVector.from_flat(spec, flat_hat)

    def loglik_free(values):
        flat = flat_hat.copy()
        flat[free] = values
        return complete_loglik(ParameterVector.from_flat(spec, flat), spec, path)

    hessian = _central_hessian(loglik_free, flat_hat[free])
    try:
        cov_free = np.linalg.inv(-hessian)
    except np.linalg.LinAlgError as err:
        raise SingularHessian(str(err)) from None
    if not np.all(np.isfinite(cov_free)) or np.any(np.diag(cov_free) <= 0):
        raise SingularHessian("negative-Hessian inverse is not positive on the diagonal")
    covariance = np.zeros((dim, dim))
    covariance[np.ix_(free, free)] = cov_free
    return theta_hat, covariance


def _central_hessian(fun, x, relative_step=HESSIAN_RELATIVE_STEP):
    x = np.asarray(x, dtype=float)
    d = x.size
    h = relative_step * np.abs(x)
    h[h == 0] = relative_step
    hess = np.empty((d, d))
    f0 = fun(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        fpp = fun(x + ei)
        fmm = fun(x - ei)
        hess[i, i] = (fpp - 2.0 * f0 + fmm) / h[i] ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h[j]
            fa = fun(x + ei + ej)
            fb = fun(x + ei - ej)
            fc = fun(x - ei + ej)
            fd = fun(x - ei - ej)
            hess[i, j] = hess[j, i] = (fa - fb - fc + fd) / (4.0 * h[i] * h[j])
    return hess
