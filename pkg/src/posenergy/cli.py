"""``posenergy`` command line.

Exit codes: 0 success, 2 lookup/parse error, 3 domain error, 4 degenerate
calibration, 5 transport failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .calibration import fit_series, lagged_pearson
from .catalog import load_dataset, read_series_csv, resolve_power, save_dataset
from .connectors import FIXTURE_DIR_ENV, FixtureStore, HttpTransport, ReplayTransport, fetch_all, snapshot
from .errors import (
    DatasetError,
    DegenerateSeriesError,
    DomainError,
    EnergyModelError,
    InsufficientOverlapError,
    ModelDegenerateError,
)
from .model import HOURS_PER_YEAR, Throughput, ThroughputDomain, per_tx_consumption, projected_per_tx
from .report import (
    FORMATS,
    SCENARIOS,
    build_comparison,
    fit_models,
    format_sig,
    network_domain,
    render,
    sample_curve,
    write_curve_csvs,
)

EXIT_OK = 0
EXIT_LOOKUP = 2
EXIT_DOMAIN = 3
EXIT_DEGENERATE = 4
EXIT_TRANSPORT = 5

DATASET_ENV = "POSENERGY_DATASET"

log = logging.getLogger("posenergy")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class CliConfig:
    dataset_path: Path | None
    output_format: str
    scenario_selection: str
    offline_flag: bool
    cache_dir: Path | None
    significant_digits: int
    hours_per_year: float


def _load(cfg: CliConfig):
    if cfg.dataset_path is not None and not cfg.dataset_path.exists():
        raise CliError(f"dataset not found: {cfg.dataset_path}", EXIT_LOOKUP)
    try:
        return load_dataset(cfg.dataset_path)
    except DatasetError as exc:
        raise CliError(f"cannot load dataset: {exc}", EXIT_LOOKUP) from exc


def _network(d, network_id: str):
    if network_id not in d.networks:
        raise CliError(
            f"unknown network {network_id!r}; available: {', '.join(d.networks)}", EXIT_LOOKUP
        )
    return d.networks[network_id]


def cmd_estimate(cfg: CliConfig, args, out) -> int:
    d = _load(cfg)
    net = _network(d, args.network)
    if args.tps is None:
        rows = [
            r
            for r in build_comparison(d, fit_models(d) if args.projected else None, cfg.hours_per_year)
            if r.network_id == net.id
        ]
        out.write(render(rows, cfg.output_format, cfg.significant_digits))
        return EXIT_OK

    if not 0 < args.tps <= net.tps_max:
        raise CliError(
            f"throughput {args.tps:g} tx/s outside (0, {net.tps_max:g}] for {net.id}", EXIT_DOMAIN
        )
    low, high = d.band(net.id)
    powers = {"optimistic": low, "pessimistic": high}
    models = fit_models(d) if args.projected else {}
    model = models.get(net.id)
    l = Throughput(args.tps)
    lines = []
    for scenario in SCENARIOS if cfg.scenario_selection == "both" else (cfg.scenario_selection,):
        p = resolve_power(powers[scenario], cfg.hours_per_year)
        global_kw = net.n_val * p.watts / 1000.0
        per_tx = per_tx_consumption(net.n_val, p, l).kwh_per_tx
        line = (
            f"{net.id} {scenario}: tps={format_sig(l.tps, cfg.significant_digits)} "
            f"global_kw={format_sig(global_kw, cfg.significant_digits)} "
            f"kwh_per_tx={format_sig(per_tx, cfg.significant_digits)}"
        )
        if model is not None:
            line += f" projected_kwh_per_tx={format_sig(projected_per_tx(model, p, l).kwh_per_tx, cfg.significant_digits)}"
        lines.append(line)
    out.write("\n".join(lines) + "\n")
    return EXIT_OK


def _read_series(path: str):
    try:
        return read_series_csv(path)
    except DatasetError as exc:
        raise CliError(str(exc), EXIT_LOOKUP) from exc


def cmd_fit(cfg: CliConfig, args, out) -> int:
    series = _read_series(args.series)
    method = args.method
    if method == "auto":
        method = "two_point" if len(series) == 2 else "ols"
    max_tps = args.max_tps if args.max_tps is not None else max(series.tps_values)
    model = fit_series(series, method, max_tps)
    lines = [
        f"method: {model.method}",
        f"kappa: {model.kappa!r}",
        f"lambda: {model.lambda_!r}",
        f"domain: [{model.domain.min_tps!r}, {model.domain.max_tps!r}] tx/s",
    ]
    if model.diagnostics is not None:
        lines += [
            f"r_squared: {model.diagnostics.r_squared!r}",
            f"residual_sum_squares: {model.diagnostics.residual_sum_squares!r}",
            f"n_points: {model.diagnostics.n_points}",
        ]
    if args.lag is not None:
        corr = lagged_pearson(series, args.lag)
        lines.append(f"pearson_r(lag={corr.lag_days}d): {corr.r!r} over {corr.n_pairs} pairs")
    out.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_correlate(cfg: CliConfig, args, out) -> int:
    series = _read_series(args.series)
    lines = ["lag_days,r,n_pairs"]
    for lag in args.lag or [0]:
        c = lagged_pearson(series, lag)
        lines.append(f"{c.lag_days},{c.r!r},{c.n_pairs}")
    out.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_compare(cfg: CliConfig, args, out) -> int:
    d = _load(cfg)
    rows = build_comparison(d, fit_models(d) if args.projected else None, cfg.hours_per_year)
    text = render(rows, cfg.output_format, cfg.significant_digits)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8", newline="\n")
    else:
        out.write(text)
    return EXIT_OK


def cmd_curve(cfg: CliConfig, args, out) -> int:
    d = _load(cfg)
    net = _network(d, args.network)
    model = None if args.fixed else fit_models(d).get(net.id)
    full = network_domain(net, model)
    lo = args.min if args.min is not None else full.min_tps
    hi = args.max if args.max is not None else full.max_tps
    if not (full.min_tps <= lo <= hi <= full.max_tps) or lo == hi and args.points > 1:
        raise CliError(
            f"curve bounds [{lo:g}, {hi:g}] tx/s must lie within [{full.min_tps:g}, {full.max_tps:g}] "
            f"for {net.id} and be increasing",
            EXIT_DOMAIN,
        )
    domain = ThroughputDomain(hi, lo)
    low, high = d.band(net.id)
    powers = {"optimistic": low, "pessimistic": high}
    curves = []
    for scenario in SCENARIOS if cfg.scenario_selection == "both" else (cfg.scenario_selection,):
        p = resolve_power(powers[scenario], cfg.hours_per_year)
        source = model if model is not None else net.n_val
        curves.append(sample_curve(net.id, source, p, domain, args.points, args.spacing, scenario))
    if args.out_dir:
        for path in write_curve_csvs(curves, args.out_dir):
            out.write(f"wrote {path}\n")
    elif cfg.output_format == "csv" and len(curves) > 1:
        raise CliError("CSV holds one curve; pick --scenario or pass --out-dir", EXIT_LOOKUP)
    else:
        out.write(render(curves, cfg.output_format, cfg.significant_digits))
    return EXIT_OK


def cmd_fetch(cfg: CliConfig, args, out, clock: Callable[[], datetime], transport=None) -> int:
    d = _load(cfg)
    if args.network == "all":
        descs = list(d.sources.values())
    else:
        _network(d, args.network)
        descs = [s for s in d.sources.values() if s.network_id == args.network]
    store = FixtureStore(cfg.cache_dir) if cfg.cache_dir else FixtureStore.default()
    if transport is None:
        transport = ReplayTransport(store, descs) if cfg.offline_flag else HttpTransport()
    outcomes = fetch_all(descs, transport, clock=clock)
    failed = False
    for o in outcomes:
        if o.status == "ok":
            out.write(f"ok       {o.source.id}: {o.result.value!r}\n")
        elif o.status == "skipped":
            out.write(f"skipped  {o.source.id}: manual source\n")
        else:
            failed = True
            out.write(f"failed   {o.source.id}: {o.error}\n")
    as_of = args.as_of or clock().date()
    try:
        new = snapshot([o.result for o in outcomes if o.result is not None], d, as_of)
    except DatasetError as exc:
        raise CliError(f"fetched values violate dataset invariants: {exc}", EXIT_DOMAIN) from exc
    target = Path(args.output)
    source_path = cfg.dataset_path
    if source_path is not None and target.resolve() == source_path.resolve():
        raise CliError("refusing to overwrite the input dataset; choose another --output", EXIT_LOOKUP)
    save_dataset(new, target)
    out.write(f"wrote {target}\n")
    return EXIT_TRANSPORT if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posenergy", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--dataset", type=Path, default=None, help="dataset YAML (default: bundled snapshot)")
    parser.add_argument("--format", dest="output_format", choices=FORMATS, default="plain_table")
    parser.add_argument("--scenario", choices=("optimistic", "pessimistic", "both"), default="both")
    parser.add_argument("--digits", type=int, default=4, help="significant digits for plain tables")
    parser.add_argument("--hours-per-year", type=float, default=HOURS_PER_YEAR, help="annualisation constant")
    parser.add_argument("--cache-dir", type=Path, default=None, help=f"fixture directory (env {FIXTURE_DIR_ENV})")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="global and per-transaction bands for one network")
    p.add_argument("network")
    p.add_argument("--tps", type=float, default=None, help="throughput override [tx/s]")
    p.add_argument("--projected", action="store_true", help="also apply the fitted validator model")

    p = sub.add_parser("fit", help="fit kappa/lambda from a date,n_val,tps CSV")
    p.add_argument("series")
    p.add_argument("--method", choices=("auto", "ols", "two_point"), default="auto")
    p.add_argument("--lag", type=int, default=None, help="also report Pearson r at this lag [days]")
    p.add_argument("--max-tps", type=float, default=None)

    p = sub.add_parser("correlate", help="lagged Pearson correlation of a series")
    p.add_argument("series")
    p.add_argument("--lag", type=int, action="append", help="lag in days (repeatable)")

    p = sub.add_parser("compare", help="comparison table of all networks and reference systems")
    p.add_argument("--projected", action="store_true")
    p.add_argument("--output", default=None)

    p = sub.add_parser("curve", help="per-transaction energy as a function of throughput")
    p.add_argument("network")
    p.add_argument("--min", type=float, default=None)
    p.add_argument("--max", type=float, default=None)
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--spacing", choices=("log", "linear"), default="log")
    p.add_argument("--fixed", action="store_true", help="ignore the fitted model, keep n_val fixed")
    p.add_argument("--out-dir", default=None, help="write <network>_<scenario>.csv files here")

    p = sub.add_parser("fetch", help="refresh validator counts and throughput into a new snapshot")
    p.add_argument("network", nargs="?", default="all")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--offline", dest="offline", action="store_true", default=True, help="replay fixtures (default)")
    mode.add_argument("--live", dest="offline", action="store_false", help="query the public sources")
    p.add_argument("--output", required=True, help="path of the new snapshot file")
    p.add_argument("--as-of", type=date.fromisoformat, default=None, help="snapshot date (default: today)")
    return parser


def main(
    argv: Sequence[str] | None = None,
    out=None,
    err=None,
    clock: Callable[[], datetime] | None = None,
    transport=None,
) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    clock = clock or (lambda: datetime.now(timezone.utc))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_LOOKUP if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=err)

    dataset = args.dataset or (Path(os.environ[DATASET_ENV]) if os.environ.get(DATASET_ENV) else None)
    cache = args.cache_dir or (Path(os.environ[FIXTURE_DIR_ENV]) if os.environ.get(FIXTURE_DIR_ENV) else None)
    cfg = CliConfig(
        dataset_path=dataset,
        output_format=args.output_format,
        scenario_selection=args.scenario,
        offline_flag=getattr(args, "offline", True),
        cache_dir=cache,
        significant_digits=args.digits,
        hours_per_year=args.hours_per_year,
    )
    commands = {
        "estimate": cmd_estimate,
        "fit": cmd_fit,
        "correlate": cmd_correlate,
        "compare": cmd_compare,
        "curve": cmd_curve,
    }
    try:
        if args.command == "fetch":
            return cmd_fetch(cfg, args, out, clock, transport)
        return commands[args.command](cfg, args, out)
    except CliError as exc:
        err.write(f"posenergy: {exc}\n")
        return exc.code
    except (DegenerateSeriesError, InsufficientOverlapError, ModelDegenerateError) as exc:
        err.write(f"posenergy: degenerate calibration: {exc}\n")
        return EXIT_DEGENERATE
    except DomainError as exc:
        err.write(f"posenergy: domain error: {exc}\n")
        return EXIT_DOMAIN
    except DatasetError as exc:
        err.write(f"posenergy: {exc}\n")
        return EXIT_LOOKUP
    except EnergyModelError as exc:
        err.write(f"posenergy: {exc}\n")
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
