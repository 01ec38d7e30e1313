"""Interval count data, CSV formats, and MCMC chain diagnostics.

CSV schemas
-----------
daily counts        header ``date,count_1,...,count_M``; ISO-8601 dates on
                    consecutive calendar days; one time unit per day, with
                    boundaries at integer day offsets from the first date.
boundary counts     header ``t_start,t_end,count_1,...,count_M``; rows must
                    be contiguous (each t_start equals the previous t_end)
                    and start at 0.  Unequal widths are allowed.
events              header ``time,type``; strictly increasing times with
                    1-based integer types.
"""

import csv
import datetime
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    GapInDates,
    InvalidInput,
    NegativeCount,
    NonContiguousBoundaries,
    RaggedRow,
)
from .model import EventSequence


@dataclass(frozen=True, eq=False)
class IntervalCounts:
    """Per-type event counts over contiguous observation windows.

    boundaries: times t_0 = 0 < t_1 < ... < t_I; counts: I x M integer
    matrix with counts[i, m-1] the number of type-m events in
    (t_i, t_{i+1}].  Arrays are stored read-only.
    """

    boundaries: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        bnd = np.asarray(self.boundaries, dtype=float).copy()
        cnt = np.asarray(self.counts).copy()
        if bnd.ndim != 1 or bnd.size < 2:
            raise InvalidInput("boundaries must hold at least one interval")
        if bnd[0] != 0.0:
            raise InvalidInput("boundaries must start at t_0 = 0")
        if not np.all(np.diff(bnd) > 0):
            raise InvalidInput("boundaries must be strictly increasing")
        if cnt.ndim != 2 or cnt.shape[0] != bnd.size - 1:
            raise InvalidInput("counts must be an I x M matrix matching boundaries")
        if not np.issubdtype(cnt.dtype, np.integer):
            as_int = cnt.astype(np.int64)
            if not np.array_equal(as_int, cnt):
                raise InvalidInput("counts must be integers")
            cnt = as_int
        else:
            cnt = cnt.astype(np.int64)
        if np.any(cnt < 0):
            raise NegativeCount("counts must be nonnegative")
        bnd.flags.writeable = False
        cnt.flags.writeable = False
        object.__setattr__(self, "boundaries", bnd)
        object.__setattr__(self, "counts", cnt)

    @property
    def n_intervals(self):
        return int(self.counts.shape[0])

    @property
    def n_types(self):
        return int(self.counts.shape[1])

    @property
    def horizon(self):
        return float(self.boundaries[-1])

    @property
    def widths(self):
        return np.diff(self.boundaries)

    def totals_by_type(self):
        return self.counts.sum(axis=0)


# ---------------------------------------------------------------------------
# counts CSV


def _sniff_schema(header):
    if header and header[0] == "date":
        return "daily"
    if len(header) >= 2 and header[0] == "t_start" and header[1] == "t_end":
        return "boundaries"
    raise InvalidInput(f"unrecognized counts header {header!r}")


def read_counts_csv(pathname, schema="auto"):
    """Load interval counts from CSV in the daily or boundaries schema."""
    with open(pathname, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise InvalidInput(f"{pathname}: empty file")
    header = rows[0]
    if schema == "auto":
        schema = _sniff_schema(header)
    if schema == "daily":
        return _parse_daily(header, rows[1:], pathname)
    if schema == "boundaries":
        return _parse_boundaries(header, rows[1:], pathname)
    raise InvalidInput(f"unknown counts schema {schema!r}")


def _parse_count_fields(fields, row_idx, pathname):
    out = []
    for f in fields:
        try:
            val = int(f)
        except ValueError:
            raise NegativeCount(f"{pathname}: row {row_idx}: bad count {f!r}") from None
        if val < 0:
            raise NegativeCount(f"{pathname}: row {row_idx}: negative count {val}")
        out.append(val)
    return out


def _parse_daily(header, body, pathname):
    n_types = len(header) - 1
    if n_types < 1 or header != ["date"] + [f"count_{m}" for m in range(1, n_types + 1)]:
        raise InvalidInput(f"{pathname}: daily header must be date,count_1,...  got {header}")
    if not body:
        raise InvalidInput(f"{pathname}: no data rows")
    counts = []
    start = None
    for i, row in enumerate(body, start=1):
        if len(row) != n_types + 1:
            raise RaggedRow(f"{pathname}: row {i} has {len(row)} fields, expected {n_types + 1}")
        try:
            day = datetime.date.fromisoformat(row[0])
        except ValueError:
            raise InvalidInput(f"{pathname}: row {i}: bad date {row[0]!r}") from None
        if start is None:
            start = day
        elif (day - start).days != i - 1:
            raise GapInDates(f"{pathname}: row {i}: date {day} breaks the daily sequence")
        counts.append(_parse_count_fields(row[1:], i, pathname))
    boundaries = np.arange(len(counts) + 1, dtype=float)
    return IntervalCounts(boundaries=boundaries, counts=np.array(counts))


def _parse_boundaries(header, body, pathname):
    n_types = len(header) - 2
    expected = ["t_start", "t_end"] + [f"count_{m}" for m in range(1, n_types + 1)]
    if n_types < 1 or header != expected:
        raise InvalidInput(
            f"{pathname}: boundaries header must be t_start,t_end,count_1,...  got {header}"
        )
    if not body:
        raise InvalidInput(f"{pathname}: no data rows")
    boundaries = []
    counts = []
    for i, row in enumerate(body, start=1):
        if len(row) != n_types + 2:
            raise RaggedRow(f"{pathname}: row {i} has {len(row)} fields, expected {n_types + 2}")
        try:
            t0, t1 = float(row[0]), float(row[1])
        except ValueError:
            raise InvalidInput(f"{pathname}: row {i}: bad boundary value") from None
        if i == 1:
            if t0 != 0.0:
                raise NonContiguousBoundaries(f"{pathname}: row 1 must start at t_start = 0")
            boundaries.append(t0)
        elif t0 != boundaries[-1]:
            raise NonContiguousBoundaries(
                f"{pathname}: row {i}: t_start {t0} != previous t_end {boundaries[-1]}"
            )
        if t1 <= t0:
            raise NonContiguousBoundaries(f"{pathname}: row {i}: t_end must exceed t_start")
        boundaries.append(t1)
        counts.append(_parse_count_fields(row[2:], i, pathname))
    return IntervalCounts(boundaries=np.array(boundaries), counts=np.array(counts))


def write_counts_csv(counts, pathname, schema="boundaries", start_date="2000-01-01"):
    """Write interval counts; the daily schema requires unit-width intervals."""
    m = counts.n_types
    with open(pathname, "w", newline="") as fh:
        writer = csv.writer(fh)
        if schema == "daily":
            if not np.allclose(counts.widths, 1.0):
                raise InvalidInput("daily schema requires unit-width intervals")
            day0 = datetime.date.fromisoformat(start_date)
            writer.writerow(["date"] + [f"count_{j}" for j in range(1, m + 1)])
            for i, row in enumerate(counts.counts):
                writer.writerow([(day0 + datetime.timedelta(days=i)).isoformat()]
                                + [int(x) for x in row])
        elif schema == "boundaries":
            writer.writerow(["t_start", "t_end"] + [f"count_{j}" for j in range(1, m + 1)])
            bnd = counts.boundaries
            for i, row in enumerate(counts.counts):
                writer.writerow([repr(float(bnd[i])), repr(float(bnd[i + 1]))]
                                + [int(x) for x in row])
        else:
            raise InvalidInput(f"unknown counts schema {schema!r}")


# ---------------------------------------------------------------------------
# events CSV


def write_events_csv(path, pathname):
    with open(pathname, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "type"])
        for t, z in zip(path.times, path.types):
            writer.writerow([repr(float(t)), int(z)])


def read_events_csv(pathname, horizon=None):
    """Load an event sequence; horizon defaults to the last event time."""
    with open(pathname, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0] != ["time", "type"]:
        raise InvalidInput(f"{pathname}: events header must be time,type")
    times = []
    types = []
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != 2:
            raise RaggedRow(f"{pathname}: row {i} has {len(row)} fields, expected 2")
        times.append(float(row[0]))
        types.append(int(row[1]))
    if horizon is None:
        if not times:
            raise InvalidInput(f"{pathname}: empty event file needs an explicit horizon")
        horizon = times[-1]
    return EventSequence(times=np.array(times), types=np.array(types, dtype=np.int64),
                         horizon=horizon)


# ---------------------------------------------------------------------------
# chain diagnostics


@dataclass(frozen=True, eq=False)
class ChainDiagnostics:
    """Per-parameter mixing summaries plus plot-ready data tables."""

    labels: tuple
    acceptance_rate: float
    autocorrelations: np.ndarray  # (n_params, max_lag + 1), lag 0 first
    ess: np.ndarray
    trace: np.ndarray  # (n_iterations, n_params)
    histograms: tuple  # per parameter: (bin_counts, bin_edges)


def _autocovariances(x, max_lag):
    n = x.size
    xc = x - x.mean()
    # FFT autocovariance, biased normalization (divide by n)
    size = 1
    while size < 2 * n:
        size *= 2
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[: max_lag + 1].real / n
    return acov


def effective_sample_size(x):
    """ESS via the initial monotone sequence estimator.

    Pair sums Gamma_k = rho_{2k} + rho_{2k+1} are accumulated while positive,
    forced nonincreasing, and the integrated autocorrelation time is
    tau = -1 + 2 * sum Gamma_k.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    acov = _autocovariances(x, n - 1)
    if acov[0] <= 0:
        return float(n)
    rho = acov / acov[0]
    total = 0.0
    running = np.inf
    for k in range((rho.size - 1) // 2 + 1):
        i = 2 * k
        if i + 1 >= rho.size:
            break
        pair = rho[i] + rho[i + 1]
        if pair <= 0:
            break
        running = min(running, pair)
        total += running
    tau = max(-1.0 + 2.0 * total, 1.0 / n, 1e-12)
    return float(min(n / tau, n))


def chain_diagnostics(chain, spec=None, max_lag=50, bins=50):
    """Mixing diagnostics for a PMMH chain.

    ``chain`` is either a sequence of records with ``theta`` / ``accepted``
    attributes (pass the matching ``spec`` to flatten parameters) or a plain
    (n_iterations, n_params) array, in which case the acceptance rate is
    reported as nan.
    """
    if hasattr(chain, "ndim"):
        trace = np.asarray(chain, dtype=float)
        if trace.ndim == 1:
            trace = trace[:, None]
        labels = tuple(f"x_{i}" for i in range(trace.shape[1]))
        acc = math.nan
    else:
        records = list(chain)
        if not records:
            raise InvalidInput("empty chain")
        if spec is None:
            raise InvalidInput("chain records need the model spec to flatten")
        trace = np.array([r.theta.to_flat(spec) for r in records])
        labels = tuple(spec.flat_labels())
        flags = [bool(r.accepted) for r in records[1:]]
        acc = float(np.mean(flags)) if flags else math.nan
    n, d = trace.shape
    lags = min(max_lag, n - 1)
    auto = np.empty((d, lags + 1))
    ess = np.empty(d)
    hists = []
    for k in range(d):
        acov = _autocovariances(trace[:, k], lags)
        auto[k] = acov / acov[0] if acov[0] > 0 else np.r_[1.0, np.zeros(lags)]
        ess[k] = effective_sample_size(trace[:, k])
        hists.append(np.histogram(trace[:, k], bins=bins))
    return ChainDiagnostics(
        labels=labels,
        acceptance_rate=acc,
        autocorrelations=auto,
        ess=ess,
        trace=trace,
        histograms=tuple(hists),
    )
