"""Compiled thinning loops for batches of constant-baseline sample paths.

These back the Monte Carlo count oracles and posterior-predictive envelopes,
where millions of short paths are drawn.  Only aggregated interval counts
are returned; full paths go through the pure-Python simulator instead.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _pdf_h(kind, a, b, s):
    """Offspring density: kind 0 exponential (beta=a), kind 1 gamma (kappa=a, delta=b)."""
    if kind == 0:
        return math.exp(-s / a) / a
    if s <= 0.0:
        if a == 1.0:
            return 1.0 / b
        return 0.0  # shapes < 1 are rejected before entering compiled code
    return math.exp((a - 1.0) * math.log(s) - s / b - math.lgamma(a) - a * math.log(b))


@njit(cache=True)
def _sup_h(kind, a, b, s0, s1):
    """Supremum of the offspring density over elapsed times [s0, s1]."""
    if kind == 0 or a <= 1.0:
        return _pdf_h(kind, a, b, s0)  # monotone decreasing
    mode = (a - 1.0) * b
    if s1 <= mode:
        return _pdf_h(kind, a, b, s1)
    if s0 >= mode:
        return _pdf_h(kind, a, b, s0)
    return _pdf_h(kind, a, b, mode)


@njit(cache=True)
def propagate_exponential_const(eps2, times, types0, beta_flat, jump, nu_vec,
                                t_prev, t_cur):
    """Particle-filter window sweep for constant baselines and exponential
    kernels: advances flattened excitation states in place through each
    particle's proposed events and returns sum(log intensities) minus the
    excitation compensator (baseline compensator excluded)."""
    n_particles, mm = eps2.shape
    n_events = times.shape[1]
    m = nu_vec.shape[0]
    core = np.zeros(n_particles)
    for j in range(n_particles):
        comp = 0.0
        loglam = 0.0
        prev = t_prev
        for k in range(n_events):
            tk = times[j, k]
            d = tk - prev
            for a in range(mm):
                e0 = eps2[j, a]
                e1 = e0 * math.exp(-d / beta_flat[a])
                comp += (e0 - e1) * beta_flat[a]
                eps2[j, a] = e1
            z = types0[j, k]
            lam = nu_vec[z]
            for p in range(m):
                lam += eps2[j, z * m + p]
            loglam += np.log(lam)
            for a in range(m):
                eps2[j, a * m + z] += jump[a, z]
            prev = tk
        d = t_cur - prev
        if d < 0.0:  # dead out-of-window particle; hold the state instead
            d = 0.0
        for a in range(mm):
            e0 = eps2[j, a]
            e1 = e0 * math.exp(-d / beta_flat[a])
            comp += (e0 - e1) * beta_flat[a]
            eps2[j, a] = e1
        core[j] = loglam - comp
    return core


@njit(cache=True)
def thin_counts_exponential(nu, eta, beta, boundaries, n_paths, seed, cap):
    """Aggregated counts of thinned paths for all-exponential kernels.

    The excitation state decays between events, so the current total
    intensity dominates the future until the next event and serves as the
    thinning bound.  Returns (counts, ok); ok False means the per-path event
    cap was exceeded.
    """
    np.random.seed(seed)
    n_types = nu.shape[0]
    n_intervals = boundaries.shape[0] - 1
    horizon = boundaries[n_intervals]
    nu_tot = nu.sum()
    jump = eta / beta
    counts = np.zeros((n_paths, n_intervals, n_types), dtype=np.int64)
    eps = np.zeros((n_types, n_types))
    lam = np.zeros(n_types)
    for path in range(n_paths):
        for a in range(n_types):
            for b in range(n_types):
                eps[a, b] = 0.0
        t = 0.0
        ptr = 0
        n_events = 0
        while True:
            s_eps = 0.0
            for a in range(n_types):
                for b in range(n_types):
                    s_eps += eps[a, b]
            bound = nu_tot + s_eps
            if bound <= 0.0:
                break
            t_new = t + np.random.exponential(1.0 / bound)
            if t_new > horizon:
                break
            for a in range(n_types):
                for b in range(n_types):
                    eps[a, b] *= math.exp(-(t_new - t) / beta[a, b])
            t = t_new
            lam_star = 0.0
            for a in range(n_types):
                la = nu[a]
                for b in range(n_types):
                    la += eps[a, b]
                lam[a] = la
                lam_star += la
            u = np.random.random() * bound
            if u <= lam_star:
                c = 0.0
                z = n_types - 1
                for a in range(n_types):
                    c += lam[a]
                    if u <= c:
                        z = a
                        break
                while t > boundaries[ptr + 1]:
                    ptr += 1
                counts[path, ptr, z] += 1
                for a in range(n_types):
                    eps[a, z] += jump[a, z]
                n_events += 1
                if n_events > cap:
                    return counts, False
    return counts, True


@njit(cache=True)
def thin_counts_general(nu, eta, kind, p1, p2, boundaries, n_paths, seed, cap,
                        lookahead):
    """Aggregated counts of thinned paths for gamma or mixed kernels.

    Gamma densities are not monotone, so the bound is the supremum of the
    total intensity over a lookahead window, refreshed after each accepted
    event or window crossing.
    """
    np.random.seed(seed)
    n_types = nu.shape[0]
    n_intervals = boundaries.shape[0] - 1
    horizon = boundaries[n_intervals]
    nu_tot = nu.sum()
    counts = np.zeros((n_paths, n_intervals, n_types), dtype=np.int64)
    capacity = 1024
    times = np.empty(capacity)
    types = np.empty(capacity, dtype=np.int64)
    lam = np.zeros(n_types)
    for path in range(n_paths):
        n = 0
        t = 0.0
        ptr = 0
        while t < horizon:
            w_end = min(t + lookahead, horizon)
            bound = nu_tot
            for k in range(n):
                zk = types[k]
                s0 = t - times[k]
                s1 = w_end - times[k]
                for a in range(n_types):
                    bound += eta[a, zk] * _sup_h(kind[a, zk], p1[a, zk], p2[a, zk], s0, s1)
            if bound <= 0.0:
                t = w_end
                continue
            s = t
            while True:
                s += np.random.exponential(1.0 / bound)
                if s > w_end:
                    t = w_end
                    break
                lam_star = 0.0
                for a in range(n_types):
                    la = nu[a]
                    for k in range(n):
                        zk = types[k]
                        la += eta[a, zk] * _pdf_h(kind[a, zk], p1[a, zk], p2[a, zk],
                                                  s - times[k])
                    lam[a] = la
                    lam_star += la
                u = np.random.random() * bound
                if u <= lam_star:
                    c = 0.0
                    z = n_types - 1
                    for a in range(n_types):
                        c += lam[a]
                        if u <= c:
                            z = a
                            break
                    if n >= capacity:
                        capacity *= 2
                        new_times = np.empty(capacity)
                        new_types = np.empty(capacity, dtype=np.int64)
                        new_times[:n] = times[:n]
                        new_types[:n] = types[:n]
                        times = new_times
                        types = new_types
                    times[n] = s
                    types[n] = z
                    n += 1
                    if n > cap:
                        return counts, False
                    while s > boundaries[ptr + 1]:
                        ptr += 1
                    counts[path, ptr, z] += 1
                    t = s
                    break
    return counts, True
