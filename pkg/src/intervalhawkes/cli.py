"""Command-line front end.

Subcommands: simulate, loglik, fit, mle, envelope.  Every subcommand is
deterministic given its full flag set including --seed.  Flags override
values from an optional --config JSON; hard-coded defaults apply last.

Exit codes: 0 success, 1 usage error, 2 validation error (bad parameters or
data files), 3 runtime failure (degenerate SMC estimate, optimizer failure,
interruption).
"""

import argparse
import concurrent.futures
import json
import sys

import numpy as np

from .dataio import read_counts_csv, read_events_csv, write_counts_csv, write_events_csv
from .errors import ComputationError, InvalidInput
from .model import ModelSpec, ParameterVector, validate
from .pmmh import (
    PmmhConfig,
    default_init,
    posterior_predictive_envelope,
    record_to_dict,
    run_chain,
    summarize,
)
from .simulate import AggregationGrid, aggregate, simulate_path
from .smc import SmcConfig, smc_log_likelihood


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise _UsageError(message)


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"{text} is not a positive number")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return value


def _fraction(text):
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1)")
    return value


def _load_json(pathname, what):
    try:
        with open(pathname) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InvalidInput(f"{what} file not found: {pathname}") from None
    except json.JSONDecodeError as err:
        raise InvalidInput(f"{what} file {pathname} is not valid JSON: {err}") from None


def _load_model(pathname):
    return ModelSpec.from_dict(_load_json(pathname, "model"))


def _load_theta(pathname):
    return ParameterVector.from_dict(_load_json(pathname, "theta"))


def _resolve(args, config, key, default=None, required=False):
    value = getattr(args, key, None)
    if value is None:
        value = config.get(key, default)
    if value is None and required:
        raise InvalidInput(f"missing required option --{key.replace('_', '-')}")
    return value


def _config_of(args):
    if getattr(args, "config", None):
        cfg = _load_json(args.config, "config")
        if not isinstance(cfg, dict):
            raise InvalidInput("config file must hold a JSON object")
        return cfg
    return {}


def _add_common(sub):
    sub.add_argument("--config", help="JSON file bundling options; flags override it")
    sub.add_argument("--threads", type=_positive_int, default=None,
                     help="cap on worker threads; results are independent of it")
    sub.add_argument("--seed", type=int, default=None, help="master random seed")


def _grid_from_option(value, horizon):
    """--aggregate / --grid value: an interval width, or a CSV of boundaries
    (header 't', one boundary per row, starting at 0)."""
    try:
        width = float(value)
    except ValueError:
        width = None
    if width is not None:
        if horizon is None:
            raise InvalidInput("a width-based grid needs --horizon")
        return AggregationGrid.regular(horizon, width)
    import csv

    with open(value, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t"]:
        raise InvalidInput(f"{value}: grid header must be a single column 't'")
    boundaries = np.array([float(r[0]) for r in rows[1:]])
    return AggregationGrid(boundaries=boundaries)


def _derived_seed(master, index):
    ss = np.random.SeedSequence(entropy=master, spawn_key=(index,))
    return int(ss.generate_state(1)[0])


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(args):
    config = _config_of(args)
    spec = _load_model(_resolve(args, config, "model", required=True))
    theta = _load_theta(_resolve(args, config, "theta", required=True))
    horizon = float(_resolve(args, config, "horizon", required=True))
    seed = int(_resolve(args, config, "seed", 0))
    out = _resolve(args, config, "out", required=True)
    validate(spec, theta)
    path = simulate_path(theta, spec, horizon, seed)
    write_events_csv(path, out)
    print(f"wrote {path.n_events} events to {out}")
    agg = _resolve(args, config, "aggregate")
    if agg is not None:
        grid = _grid_from_option(agg, horizon)
        counts = aggregate(path, grid, n_types=spec.n_types)
        counts_out = _resolve(args, config, "counts_out") or _default_counts_out(out)
        write_counts_csv(counts, counts_out, schema="boundaries")
        print(f"wrote {counts.n_intervals} intervals to {counts_out}")
    return 0


def _default_counts_out(out):
    return (out[:-4] if out.endswith(".csv") else out) + ".counts.csv"


def _cmd_loglik(args):
    config = _config_of(args)
    spec = _load_model(_resolve(args, config, "model", required=True))
    theta = _load_theta(_resolve(args, config, "theta", required=True))
    counts = read_counts_csv(_resolve(args, config, "counts", required=True))
    particles = int(_resolve(args, config, "particles", 500))
    proposal = _resolve(args, config, "proposal", "uniform")
    reps = int(_resolve(args, config, "reps", 1))
    seed = int(_resolve(args, config, "seed", 0))
    threads = int(_resolve(args, config, "threads", 1))
    resampling = _resolve(args, config, "resampling", "every")
    ess_threshold = float(_resolve(args, config, "ess_threshold", 0.5))

    def one(rep):
        cfg = SmcConfig(n_particles=particles, proposal=proposal,
                        resampling=resampling, ess_threshold=ess_threshold,
                        seed=_derived_seed(seed, rep))
        return smc_log_likelihood(theta, spec, counts, cfg)

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(reps)))
    else:
        results = [one(rep) for rep in range(reps)]
    estimates = [r.log_likelihood_estimate for r in results]
    for value in estimates:
        print(repr(value))
    finite = [v for v in estimates if np.isfinite(v)]
    n_degenerate = sum(1 for r in results if r.degenerate)
    linear = [float(np.exp(v)) for v in estimates]
    summary = {
        "format_version": 1,
        "reps": reps,
        "n_degenerate": n_degenerate,
        "mean_log_likelihood": float(np.mean(finite)) if finite else None,
        "variance_log_likelihood": float(np.var(finite, ddof=1)) if len(finite) > 1 else None,
        "mean_likelihood_estimate": float(np.mean(linear)),
        "variance_likelihood_estimate": float(np.var(linear, ddof=1)) if reps > 1 else None,
    }
    print(json.dumps(summary))
    result_out = _resolve(args, config, "result_out")
    if result_out:
        with open(result_out, "w") as fh:
            json.dump([r.to_dict() for r in results], fh, indent=1)
    return 3 if n_degenerate else 0


def _cmd_fit(args):
    config = _config_of(args)
    spec = _load_model(_resolve(args, config, "model", required=True))
    counts = read_counts_csv(_resolve(args, config, "counts", required=True))
    iters = int(_resolve(args, config, "iters", required=True))
    delta = float(_resolve(args, config, "delta", 0.12))
    if delta <= 0:
        raise InvalidInput("--delta must be positive")
    particles = int(_resolve(args, config, "particles", 200))
    burn_in = float(_resolve(args, config, "burn_in", 0.10))
    seed = int(_resolve(args, config, "seed", 0))
    proposal = _resolve(args, config, "proposal", "uniform")
    chain_path = _resolve(args, config, "chain", required=True)
    summary_path = _resolve(args, config, "summary", required=True)
    init_path = _resolve(args, config, "init")
    init = _load_theta(init_path) if init_path else None
    log_scale = bool(_resolve(args, config, "log_scale", False))
    smc_config = SmcConfig(n_particles=particles, proposal=proposal, seed=0)
    pmmh_config = PmmhConfig(n_iterations=iters, jump_size=delta,
                             burn_in_fraction=burn_in, seed=seed, init=init,
                             log_scale=log_scale)
    records = []
    with open(chain_path, "w") as fh:

        def stream(record):
            records.append(record)
            fh.write(json.dumps(record_to_dict(record, spec)) + "\n")
            fh.flush()

        try:
            run_chain(spec, counts, smc_config, pmmh_config, record_callback=stream)
        except (KeyboardInterrupt, ComputationError) as err:
            print(f"interrupted after {len(records)} records: {err}", file=sys.stderr)
            return 3
    rows = summarize(records, burn_in, spec)
    _write_summary_csv(rows, summary_path)
    print(f"wrote {len(records)} records to {chain_path} and summary to {summary_path}")
    return 0


def _write_summary_csv(rows, pathname):
    import csv

    with open(pathname, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["parameter", "estimate", "se", "ci_low", "ci_high"])
        for row in rows:
            writer.writerow([row.name, repr(row.estimate), repr(row.se),
                             repr(row.ci_low), repr(row.ci_high)])


def _cmd_mle(args):
    from .exact import mle_fit

    config = _config_of(args)
    spec = _load_model(_resolve(args, config, "model", required=True))
    init = _load_theta(_resolve(args, config, "init", required=True))
    horizon = _resolve(args, config, "horizon")
    path = read_events_csv(_resolve(args, config, "events", required=True),
                           horizon=float(horizon) if horizon is not None else None)
    theta_hat, covariance = mle_fit(spec, path, init)
    se = np.sqrt(np.diag(covariance))
    flat = theta_hat.to_flat(spec)
    labels = spec.flat_labels()
    out = _resolve(args, config, "out")
    lines = ["parameter,estimate,se"]
    lines += [f"{labels[i]},{float(flat[i])!r},{float(se[i])!r}" for i in range(flat.size)]
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
        print(f"wrote MLE table to {out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_envelope(args):
    config = _config_of(args)
    spec = _load_model(_resolve(args, config, "model", required=True))
    theta = _load_theta(_resolve(args, config, "theta", required=True))
    horizon = _resolve(args, config, "horizon")
    grid = _grid_from_option(_resolve(args, config, "grid", required=True),
                             float(horizon) if horizon is not None else None)
    reps = int(_resolve(args, config, "reps", 500))
    seed = int(_resolve(args, config, "seed", 0))
    quantiles = _resolve(args, config, "quantiles", "0.025,0.975")
    qs = tuple(float(q) for q in str(quantiles).split(","))
    out = _resolve(args, config, "out", required=True)
    validate(spec, theta)
    bands = posterior_predictive_envelope(theta, spec, grid, reps, qs, seed)
    import csv

    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t_end"]
        for m in range(1, spec.n_types + 1):
            for q in qs:
                header.append(f"cum_count_type{m}_q{q}")
        writer.writerow(header)
        for i, t in enumerate(bands.boundaries):
            row = [repr(float(t))]
            for m in range(spec.n_types):
                for k in range(len(qs)):
                    row.append(repr(float(bands.bands[k, i, m])))
            writer.writerow(row)
    print(f"wrote envelope for {reps} paths to {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = _Parser(
        prog="intervalhawkes",
        description="Fit, simulate, and diagnose multivariate Hawkes processes "
                    "observed as interval count data.",
    )
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw one sample path (thinning)")
    p.add_argument("--model", help="model spec JSON")
    p.add_argument("--theta", help="parameter JSON")
    p.add_argument("--horizon", type=_positive_float, help="censoring time T")
    p.add_argument("--out", help="events CSV to write (columns time,type)")
    p.add_argument("--aggregate", help="interval width or grid CSV; also writes counts")
    p.add_argument("--counts-out", dest="counts_out", help="counts CSV path (default derived from --out)")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("loglik", help="repeated SMC log-likelihood estimates")
    p.add_argument("--counts", help="interval counts CSV (daily or boundaries schema)")
    p.add_argument("--model", help="model spec JSON")
    p.add_argument("--theta", help="parameter JSON")
    p.add_argument("--particles", type=_positive_int, help="particle count J (default 500)")
    p.add_argument("--proposal", choices=["uniform", "poisson"], help="time proposal (default uniform)")
    p.add_argument("--reps", type=_positive_int, help="number of estimates (default 1)")
    p.add_argument("--resampling", choices=["every", "ess"], help="resampling schedule (default every)")
    p.add_argument("--ess-threshold", dest="ess_threshold", type=_positive_float,
                   help="ESS fraction triggering resampling (default 0.5)")
    p.add_argument("--result-out", dest="result_out", help="write full per-rep results JSON here")
    _add_common(p)
    p.set_defaults(func=_cmd_loglik)

    p = sub.add_parser("fit", help="pseudo-marginal MCMC over parameters")
    p.add_argument("--counts", help="interval counts CSV")
    p.add_argument("--model", help="model spec JSON")
    p.add_argument("--init", help="initial parameter JSON (default: data-driven heuristic)")
    p.add_argument("--iters", type=_positive_int, help="number of MCMC iterations")
    p.add_argument("--delta", type=_positive_float, help="random-walk jump size (default 0.12)")
    p.add_argument("--particles", type=_positive_int, help="particles per likelihood estimate (default 200)")
    p.add_argument("--burn-in", dest="burn_in", type=_fraction, help="burn-in fraction (default 0.1)")
    p.add_argument("--proposal", choices=["uniform", "poisson"], help="SMC time proposal (default uniform)")
    p.add_argument("--log-scale", dest="log_scale", action="store_const", const=True,
                   help="random walk on log-parameters (off by default)")
    p.add_argument("--chain", help="chain JSONL output path")
    p.add_argument("--summary", help="summary CSV output path")
    _add_common(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("mle", help="complete-data MLE from exact event times")
    p.add_argument("--events", help="events CSV (columns time,type)")
    p.add_argument("--model", help="model spec JSON")
    p.add_argument("--init", help="initial parameter JSON")
    p.add_argument("--horizon", type=_positive_float,
                   help="censoring time (default: last event time)")
    p.add_argument("--out", help="write the estimate table here instead of stdout")
    _add_common(p)
    p.set_defaults(func=_cmd_mle)

    p = sub.add_parser("envelope", help="posterior-predictive count envelope")
    p.add_argument("--theta", help="parameter JSON")
    p.add_argument("--model", help="model spec JSON")
    p.add_argument("--grid", help="interval width or grid CSV")
    p.add_argument("--horizon", type=_positive_float, help="needed when --grid is a width")
    p.add_argument("--reps", type=_positive_int, help="simulated paths (default 500)")
    p.add_argument("--quantiles", help="comma-separated quantiles (default 0.025,0.975)")
    p.add_argument("--out", help="envelope CSV output path")
    _add_common(p)
    p.set_defaults(func=_cmd_envelope)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except _UsageError:
        return 1
    except InvalidInput as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2
    except ComputationError as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 3
    except KeyboardInterrupt:
        return 3


def run():
    raise SystemExit(main())
