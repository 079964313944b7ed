"""Comparison table and consumption-vs-throughput curves.

Output is plotter-agnostic: plain text for humans, CSV/JSON at full float
precision for machines.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Mapping, Sequence

from .calibration import AffineValidatorModel, fit_series
from .catalog import Dataset, NetworkProfile, resolve_power
from .errors import DomainError, EnergyModelError
from .model import (
    HOURS_PER_YEAR,
    EnergyPerTx,
    GlobalPower,
    PowerDraw,
    ScenarioBand,
    Throughput,
    ThroughputDomain,
    bounded_projection,
    per_tx_consumption,
    projected_per_tx,
    reference_global_power,
    reference_per_tx,
    scenario_range,
)

Scenario = Literal["optimistic", "pessimistic"]
SCENARIOS: tuple[Scenario, ...] = ("optimistic", "pessimistic")
Format = Literal["plain_table", "csv", "json"]
FORMATS: tuple[str, ...] = ("plain_table", "csv", "json")


@dataclass(frozen=True)
class ComparisonRow:
    network_id: str
    display_name: str
    kind: Literal["network", "reference"]
    global_band: ScenarioBand
    per_tx_band: ScenarioBand
    throughput_used: Throughput
    projection: Literal["low", "high"] | None = None
    model_per_tx_band: ScenarioBand | None = None
    notes: str = field(default="", compare=False)


@dataclass(frozen=True)
class CurveSeries:
    network_id: str
    scenario: Scenario
    points: tuple[tuple[float, float], ...]
    domain: ThroughputDomain


# --------------------------------------------------------------------------
# building


def fit_models(d: Dataset) -> dict[str, AffineValidatorModel]:
    """Fit every network that has an observation series, bounded by its ``tps_max``."""
    models = {}
    for s in d.series.values():
        if s.network_id in d.networks:
            models[s.network_id] = fit_series(s, max_tps=d.networks[s.network_id].tps_max)
    return models


def _band_powers(d: Dataset, net: NetworkProfile, hours_per_year: float) -> tuple[PowerDraw, PowerDraw]:
    low, high = d.band(net.id)
    return resolve_power(low, hours_per_year), resolve_power(high, hours_per_year)


def _model_band(model, powers, l: Throughput) -> ScenarioBand | None:
    try:
        return ScenarioBand(*(projected_per_tx(model, p, l) for p in powers))
    except EnergyModelError:
        return None


def build_comparison(
    d: Dataset,
    models: Mapping[str, AffineValidatorModel] | None = None,
    hours_per_year: float = HOURS_PER_YEAR,
) -> list[ComparisonRow]:
    """One row per network (two for projection-only networks), then references.

    Network rows use the observed validator count. When a fitted model is
    supplied for a network, its prediction at the same throughput is attached
    as ``model_per_tx_band``.
    """
    models = models or {}
    rows: list[ComparisonRow] = []
    for net in d.networks.values():
        try:
            powers = _band_powers(d, net, hours_per_year)
            if net.tps_projection_bounds is not None:
                lo, hi = (Throughput(t) for t in net.tps_projection_bounds)
                estimates = zip(("low", "high"), bounded_projection(net.n_val, powers, lo, hi))
            else:
                estimates = [(None, scenario_range(net.n_val, powers, Throughput(net.tps_contemporary)))]
            for projection, est in estimates:
                model = models.get(net.id)
                rows.append(
                    ComparisonRow(
                        network_id=net.id,
                        display_name=net.display_name,
                        kind="network",
                        global_band=est.global_band,
                        per_tx_band=est.per_tx_band,
                        throughput_used=est.throughput,
                        projection=projection,
                        model_per_tx_band=_model_band(model, powers, est.throughput) if model else None,
                        notes=f"{projection} throughput projection" if projection else "",
                    )
                )
        except EnergyModelError as exc:
            raise type(exc)(f"network {net.id!r}: {exc}") from exc

    for ref in d.references.values():
        l = ref.throughput
        globals_ = []
        for b in ref.bounds:
            if b.annual_energy is not None:
                globals_.append(reference_global_power(b.annual_energy, hours_per_year))
            else:
                globals_.append(GlobalPower(b.global_kw))
        lo_g, hi_g = min(globals_), max(globals_)
        rows.append(
            ComparisonRow(
                network_id=ref.id,
                display_name=ref.display_name,
                kind="reference",
                global_band=ScenarioBand(lo_g, hi_g),
                per_tx_band=ScenarioBand(reference_per_tx(lo_g, l), reference_per_tx(hi_g, l)),
                throughput_used=l,
                notes="; ".join(p for b in ref.bounds for p in b.provenance[:1]),
            )
        )
    return rows


def sample_abscissae(domain: ThroughputDomain, n_points: int, spacing: str = "log") -> list[float]:
    if n_points < 2:
        raise DomainError(f"need at least 2 points, got {n_points}")
    a, b = domain.min_tps, domain.max_tps
    if spacing == "log":
        la, lb = math.log(a), math.log(b)
        step = (lb - la) / (n_points - 1)
        xs = [math.exp(la + i * step) for i in range(n_points)]
    elif spacing == "linear":
        step = (b - a) / (n_points - 1)
        xs = [a + i * step for i in range(n_points)]
    else:
        raise ValueError(f"unknown spacing {spacing!r}")
    xs[0], xs[-1] = a, b
    return xs


def sample_curve(
    network_id: str,
    source: AffineValidatorModel | int,
    power: PowerDraw,
    domain: ThroughputDomain,
    n_points: int = 50,
    spacing: str = "log",
    scenario: Scenario = "optimistic",
) -> CurveSeries:
    """Sample per-transaction energy over ``domain``.

    ``source`` is either a fitted model (validator count follows throughput)
    or a fixed validator count.
    """
    power = getattr(power, "power", power)
    if isinstance(source, AffineValidatorModel):
        if domain.min_tps < source.domain.min_tps or domain.max_tps > source.domain.max_tps:
            raise DomainError(
                f"{network_id}: requested [{domain.min_tps:g}, {domain.max_tps:g}] tx/s exceeds model domain "
                f"[{source.domain.min_tps:g}, {source.domain.max_tps:g}]"
            )

        def ordinate(l: Throughput) -> EnergyPerTx:
            return projected_per_tx(source, power, l)

    else:

        def ordinate(l: Throughput) -> EnergyPerTx:
            return per_tx_consumption(source, power, l)

    points = tuple((x, ordinate(Throughput(x)).kwh_per_tx) for x in sample_abscissae(domain, n_points, spacing))
    return CurveSeries(network_id, scenario, points, domain)


def network_domain(net: NetworkProfile, model: AffineValidatorModel | None) -> ThroughputDomain:
    return model.domain if model is not None else ThroughputDomain(net.tps_max)


def build_curves(
    d: Dataset,
    models: Mapping[str, AffineValidatorModel] | None = None,
    n_points: int = 50,
    spacing: str = "log",
    hours_per_year: float = HOURS_PER_YEAR,
) -> list[CurveSeries]:
    """Both scenario curves for every network; truncated model domains are respected."""
    models = models or {}
    curves = []
    for net in d.networks.values():
        model = models.get(net.id)
        source = model if model is not None else net.n_val
        domain = network_domain(net, model)
        for scenario, power in zip(SCENARIOS, _band_powers(d, net, hours_per_year)):
            curves.append(sample_curve(net.id, source, power, domain, n_points, spacing, scenario))
    return curves


# --------------------------------------------------------------------------
# rendering


def format_sig(x: float, digits: int = 4) -> str:
    """Positional notation rounded to ``digits`` significant digits."""
    if x == 0:
        return "0"
    r = float(f"{x:.{digits - 1}e}")
    exp = math.floor(math.log10(abs(r)))
    return f"{r:.{max(digits - 1 - exp, 0)}f}"


_ROW_CSV_HEADER = [
    "network_id",
    "display_name",
    "kind",
    "projection",
    "tps",
    "global_kw_optimistic",
    "global_kw_pessimistic",
    "kwh_per_tx_optimistic",
    "kwh_per_tx_pessimistic",
]


def _rows_plain(rows: Sequence[ComparisonRow], digits: int) -> str:
    header = ["Platform", "Throughput [tx/s]", "Global [kW]", "Per transaction [kWh/tx]"]

    def band(b: ScenarioBand, attr: str) -> str:
        lo, hi = getattr(b.optimistic, attr), getattr(b.pessimistic, attr)
        return format_sig(hi, digits) if lo == hi else f"{format_sig(lo, digits)} - {format_sig(hi, digits)}"

    def cells(r: ComparisonRow) -> list[str]:
        name = r.display_name + {"low": " (low)", "high": " (high)"}.get(r.projection or "", "")
        return [
            name,
            format_sig(r.throughput_used.tps, digits),
            band(r.global_band, "kilowatts"),
            band(r.per_tx_band, "kwh_per_tx"),
        ]

    body = [cells(r) for r in rows]
    widths = [max(len(c) for c in col) for col in zip(header, *body)]

    def line(cs: list[str]) -> str:
        first = cs[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cs[1:], widths[1:])]
        return "  ".join([first, *rest]).rstrip()

    rule = "  ".join("-" * w for w in widths)
    out = [line(header), rule]
    seen_reference = False
    for r, cs in zip(rows, body):
        if r.kind == "reference" and not seen_reference:
            seen_reference = True
            if out[-1] != rule:
                out.append(rule)
        out.append(line(cs))
    return "\n".join(out) + "\n"


def _rows_csv(rows: Sequence[ComparisonRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_ROW_CSV_HEADER)
    for r in rows:
        w.writerow(
            [
                r.network_id,
                r.display_name,
                r.kind,
                r.projection or "",
                repr(r.throughput_used.tps),
                repr(r.global_band.optimistic.kilowatts),
                repr(r.global_band.pessimistic.kilowatts),
                repr(r.per_tx_band.optimistic.kwh_per_tx),
                repr(r.per_tx_band.pessimistic.kwh_per_tx),
            ]
        )
    return buf.getvalue()


def _curves_plain(curves: Sequence[CurveSeries], digits: int) -> str:
    out = []
    for c in curves:
        out.append(f"# {c.network_id} {c.scenario} [{format_sig(c.domain.min_tps, digits)}, {format_sig(c.domain.max_tps, digits)}] tx/s")
        out.append(f"{'tps':>12}  {'kwh_per_tx':>12}")
        out.extend(f"{format_sig(x, digits):>12}  {format_sig(y, digits):>12}" for x, y in c.points)
    return "\n".join(out) + "\n" if out else "tps  kwh_per_tx\n"


def curve_csv(curve: CurveSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tps", "kwh_per_tx"])
    for x, y in curve.points:
        w.writerow([repr(x), repr(y)])
    return buf.getvalue()


def _curve_dict(c: CurveSeries) -> dict:
    return {
        "network_id": c.network_id,
        "scenario": c.scenario,
        "domain": {"min_tps": c.domain.min_tps, "max_tps": c.domain.max_tps},
        "points": [[x, y] for x, y in c.points],
    }


def render(items: Sequence[ComparisonRow] | Sequence[CurveSeries] | CurveSeries, fmt: Format = "plain_table", digits: int = 4) -> str:
    """Deterministic text rendering of comparison rows or curves.

    CSV holds one curve per document; pass a single :class:`CurveSeries`.
    """
    if isinstance(items, CurveSeries):
        items = [items]
    items = list(items)
    is_curves = bool(items) and isinstance(items[0], CurveSeries)
    if fmt == "plain_table":
        return _curves_plain(items, digits) if is_curves else _rows_plain(items, digits)
    if fmt == "csv":
        if is_curves:
            if len(items) != 1:
                raise ValueError("CSV output holds exactly one curve; use write_curve_csvs for several")
            return curve_csv(items[0])
        return _rows_csv(items)
    if fmt == "json":
        key = "curves" if is_curves else "rows"
        payload = [_curve_dict(c) for c in items] if is_curves else [asdict(r) for r in items]
        return json.dumps({key: payload}, indent=2) + "\n"
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def curve_filename(curve: CurveSeries) -> str:
    return f"{curve.network_id}_{curve.scenario}.csv"


def write_curve_csvs(curves: Iterable[CurveSeries], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for c in curves:
        p = out / curve_filename(c)
        p.write_text(curve_csv(c), encoding="utf-8", newline="\n")
        paths.append(p)
    return paths
