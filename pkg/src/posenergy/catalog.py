"""Dataset of networks, hardware, observation series and reference systems.

A dataset lives in one YAML file with the sections ``networks``,
``hardware``, ``series``, ``references`` and ``sources``. Series may be given
inline or as a ``date,n_val,tps`` CSV referenced by a path relative to the
dataset file.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field, replace
from datetime import date
from enum import Enum
from fractions import Fraction
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Literal, Mapping

import yaml

from .calibration import Observation, ObservationSeries
from .errors import DanglingReferenceError, InvariantError, ParseError, SchemaError
from .model import HOURS_PER_YEAR, AnnualEnergy, PowerDraw, Throughput, tx_per_day_to_tps

Tier = Literal["minimum", "medium", "maximum"]

# permissionless validators run on minimum..medium hardware, permissioned on medium..maximum
BAND_FOR_PERMISSIONING = {
    "permissionless": ("minimum", "medium"),
    "permissioned": ("medium", "maximum"),
}
_TIER_RANK = {"minimum": 0, "medium": 1, "maximum": 2}
SECTIONS = ("networks", "hardware", "series", "references", "sources")


class ViolationCode(str, Enum):
    DANGLING_HARDWARE_REF = "DANGLING_HARDWARE_REF"
    DANGLING_SERIES_NETWORK = "DANGLING_SERIES_NETWORK"
    DANGLING_SOURCE_NETWORK = "DANGLING_SOURCE_NETWORK"
    TPS_CONTEMPORARY_EXCEEDS_MAX = "TPS_CONTEMPORARY_EXCEEDS_MAX"
    THROUGHPUT_SPEC_CONFLICT = "THROUGHPUT_SPEC_CONFLICT"
    PROJECTION_BOUNDS_ORDER = "PROJECTION_BOUNDS_ORDER"
    BAND_CLASS_MISMATCH = "BAND_CLASS_MISMATCH"
    BAND_ORDER = "BAND_ORDER"
    NON_POSITIVE_POWER = "NON_POSITIVE_POWER"
    SERIES_ORDER = "SERIES_ORDER"
    REFERENCE_THROUGHPUT_MISMATCH = "REFERENCE_THROUGHPUT_MISMATCH"
    REFERENCE_BOUND_LABELS = "REFERENCE_BOUND_LABELS"
    SOURCE_SCALE_MISSING = "SOURCE_SCALE_MISSING"


DANGLING_CODES = frozenset(
    {
        ViolationCode.DANGLING_HARDWARE_REF,
        ViolationCode.DANGLING_SERIES_NETWORK,
        ViolationCode.DANGLING_SOURCE_NETWORK,
    }
)


@dataclass(frozen=True)
class Violation:
    code: ViolationCode
    message: str
    location: str = ""

    def __str__(self) -> str:
        where = f"{self.location}: " if self.location else ""
        return f"{where}[{self.code.value}] {self.message}"


# --------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class PowerSpec:
    kind: Literal["average_watts", "idle_and_load_watts", "yearly_kwh"]
    average_watts: float | None = None
    idle_watts: float | None = None
    load_watts: float | None = None
    yearly_kwh: float | None = None


@dataclass(frozen=True)
class HardwareProfile:
    id: str
    label: str
    tier: Tier
    power_spec: PowerSpec
    exemplar: str = ""
    provenance: tuple[str, ...] = ()

    @property
    def resolved_watts(self) -> float:
        return resolve_watts(self.power_spec)

    @property
    def power(self) -> PowerDraw:
        return resolve_power(self)


@dataclass(frozen=True)
class NetworkProfile:
    id: str
    display_name: str
    permissioning: Literal["permissioned", "permissionless"]
    accounting: Literal["account", "utxo"]
    structure: Literal["block", "dag"]
    n_val: int
    tps_max: float
    hardware_band_ref: tuple[str, str]
    tps_contemporary: float | None = None
    tps_projection_bounds: tuple[float, float] | None = None
    bonding: bool = False
    slashing: bool = False
    rewards: bool = False
    provenance: Mapping[str, str] = field(default_factory=lambda: MappingProxyType({}))

    @property
    def domain_max(self) -> float:
        return self.tps_max


@dataclass(frozen=True)
class ReferenceBound:
    label: Literal["lower", "upper"] | None
    annual_energy: AnnualEnergy | None = None
    global_kw: float | None = None
    throughput_value: float = 0.0
    throughput_unit: Literal["tps", "tx_per_day"] = "tps"
    provenance: tuple[str, ...] = ()

    @property
    def throughput(self) -> Throughput:
        if self.throughput_unit == "tx_per_day":
            return tx_per_day_to_tps(self.throughput_value)
        return Throughput(self.throughput_value)


@dataclass(frozen=True)
class ReferenceSystem:
    """Non-PoS comparator; Bitcoin carries a lower and an upper bound row."""

    id: str
    display_name: str
    bounds: tuple[ReferenceBound, ...]

    @property
    def throughput(self) -> Throughput:
        return self.bounds[0].throughput


@dataclass(frozen=True)
class ExtractionRule:
    kind: Literal["json_pointer", "regex"]
    expr: str


@dataclass(frozen=True)
class SourceDescriptor:
    id: str
    network_id: str
    url: str
    metric: Literal["validator_count", "tps", "tx_per_day", "tx_per_epoch"]
    extraction: ExtractionRule | None  # None: manual source, never fetched
    post_scale: Fraction | None = None
    notes: str = ""

    @property
    def manual(self) -> bool:
        return self.extraction is None


@dataclass(frozen=True)
class Dataset:
    networks: Mapping[str, NetworkProfile]
    hardware: Mapping[str, HardwareProfile]
    series: Mapping[str, ObservationSeries]
    references: Mapping[str, ReferenceSystem]
    snapshot_date: date
    sources: Mapping[str, SourceDescriptor] = field(default_factory=lambda: MappingProxyType({}))

    def __post_init__(self) -> None:
        for name in SECTIONS:
            value = getattr(self, name)
            if not isinstance(value, MappingProxyType):
                object.__setattr__(self, name, MappingProxyType(dict(value)))

    def band(self, network_id: str) -> tuple[HardwareProfile, HardwareProfile]:
        net = self.networks[network_id]
        low, high = net.hardware_band_ref
        return self.hardware[low], self.hardware[high]

    def series_for(self, network_id: str) -> ObservationSeries | None:
        for s in self.series.values():
            if s.network_id == network_id:
                return s
        return None

    def with_updates(self, **changes: Any) -> "Dataset":
        return replace(self, **changes)


# --------------------------------------------------------------------------
# power resolution


def resolve_watts(spec: PowerSpec, hours_per_year: float = HOURS_PER_YEAR) -> float:
    if spec.kind == "average_watts":
        return float(spec.average_watts)
    if spec.kind == "idle_and_load_watts":
        return (spec.idle_watts + spec.load_watts) / 2.0
    if spec.kind == "yearly_kwh":
        return spec.yearly_kwh * 1000.0 / hours_per_year
    raise SchemaError(f"unknown power spec kind {spec.kind!r}")


def resolve_power(h: HardwareProfile, hours_per_year: float = HOURS_PER_YEAR) -> PowerDraw:
    """Average draw of a hardware profile in watts.

    Idle/load pairs are averaged arithmetically; yearly energy is spread
    evenly over ``hours_per_year``.
    """
    return PowerDraw(resolve_watts(h.power_spec, hours_per_year))


# --------------------------------------------------------------------------
# validation


def validate_dataset(d: Dataset, locations: Mapping[tuple[str, str], str] | None = None) -> list[Violation]:
    """Check every cross-record invariant; an empty list means the dataset is sound."""
    loc = locations or {}
    out: list[Violation] = []

    def add(code: ViolationCode, msg: str, section: str, key: str) -> None:
        out.append(Violation(code, msg, loc.get((section, key), f"{section}.{key}")))

    for h in d.hardware.values():
        try:
            watts = h.resolved_watts
        except (TypeError, ValueError):
            watts = math.nan
        if not (math.isfinite(watts) and watts > 0):
            add(ViolationCode.NON_POSITIVE_POWER, f"hardware {h.id!r} resolves to {watts!r} W", "hardware", h.id)

    for net in d.networks.values():
        refs = net.hardware_band_ref
        missing = [r for r in refs if r not in d.hardware]
        if missing:
            add(
                ViolationCode.DANGLING_HARDWARE_REF,
                f"network {net.id!r} references unknown hardware {', '.join(map(repr, missing))}",
                "networks",
                net.id,
            )
        else:
            low, high = (d.hardware[r] for r in refs)
            if _TIER_RANK[low.tier] > _TIER_RANK[high.tier] or low.resolved_watts > high.resolved_watts:
                add(ViolationCode.BAND_ORDER, f"network {net.id!r}: band {refs} is not ascending", "networks", net.id)
            expected = BAND_FOR_PERMISSIONING[net.permissioning]
            if (low.tier, high.tier) != expected:
                add(
                    ViolationCode.BAND_CLASS_MISMATCH,
                    f"{net.permissioning} network {net.id!r} must use the {expected[0]}-to-{expected[1]} band, "
                    f"got {low.tier}-to-{high.tier}",
                    "networks",
                    net.id,
                )
        has_cont = net.tps_contemporary is not None
        has_proj = net.tps_projection_bounds is not None
        if has_cont == has_proj:
            add(
                ViolationCode.THROUGHPUT_SPEC_CONFLICT,
                f"network {net.id!r} needs exactly one of tps_contemporary / tps_projection_bounds",
                "networks",
                net.id,
            )
        if has_cont and net.tps_contemporary > net.tps_max:
            add(
                ViolationCode.TPS_CONTEMPORARY_EXCEEDS_MAX,
                f"network {net.id!r}: tps_contemporary {net.tps_contemporary:g} > tps_max {net.tps_max:g}",
                "networks",
                net.id,
            )
        if has_proj:
            lo, hi = net.tps_projection_bounds
            if not 0 < lo < hi <= net.tps_max:
                add(
                    ViolationCode.PROJECTION_BOUNDS_ORDER,
                    f"network {net.id!r}: projection bounds ({lo:g}, {hi:g}) must satisfy 0 < low < high <= tps_max",
                    "networks",
                    net.id,
                )

    for key, s in d.series.items():
        if s.network_id is not None and s.network_id not in d.networks:
            add(ViolationCode.DANGLING_SERIES_NETWORK, f"series {key!r} names unknown network {s.network_id!r}", "series", key)
        if not s.is_ordered():
            add(ViolationCode.SERIES_ORDER, f"series {key!r}: timestamps not strictly increasing", "series", key)

    for ref in d.references.values():
        tps = {(b.throughput_value, b.throughput_unit) for b in ref.bounds}
        if len(tps) > 1:
            add(
                ViolationCode.REFERENCE_THROUGHPUT_MISMATCH,
                f"reference {ref.id!r}: bound rows disagree on throughput",
                "references",
                ref.id,
            )
        labels = [b.label for b in ref.bounds]
        ok = labels == [None] if len(labels) == 1 else sorted(labels, key=str) == ["lower", "upper"]
        if not ok:
            add(
                ViolationCode.REFERENCE_BOUND_LABELS,
                f"reference {ref.id!r}: expected one unlabelled row or one lower and one upper row, got {labels}",
                "references",
                ref.id,
            )

    for src in d.sources.values():
        if src.network_id not in d.networks:
            add(ViolationCode.DANGLING_SOURCE_NETWORK, f"source {src.id!r} names unknown network {src.network_id!r}", "sources", src.id)
        if src.metric == "tx_per_epoch" and src.post_scale is None:
            add(ViolationCode.SOURCE_SCALE_MISSING, f"source {src.id!r}: tx_per_epoch needs a post_scale", "sources", src.id)
    return out


def check_dataset(d: Dataset, locations: Mapping[tuple[str, str], str] | None = None) -> Dataset:
    violations = validate_dataset(d, locations)
    dangling = [v for v in violations if v.code in DANGLING_CODES]
    if dangling:
        raise DanglingReferenceError("; ".join(map(str, dangling)), violations)
    if violations:
        raise InvariantError("; ".join(map(str, violations)), violations)
    return d


# --------------------------------------------------------------------------
# parsing


class _Fields:
    """Typed accessor over one YAML mapping, raising SchemaError with context."""

    def __init__(self, raw: Any, where: str):
        if not isinstance(raw, dict):
            raise SchemaError(f"{where}: expected a mapping, got {type(raw).__name__}")
        self.raw = raw
        self.where = where
        self.used: set[str] = set()

    def get(self, key: str, kind: type | tuple[type, ...], required: bool = True, default: Any = None) -> Any:
        self.used.add(key)
        if key not in self.raw or self.raw[key] is None:
            if required:
                raise SchemaError(f"{self.where}: missing field {key!r}")
            return default
        value = self.raw[key]
        kinds = kind if isinstance(kind, tuple) else (kind,)
        if float in kinds and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if isinstance(value, bool) and bool not in kinds:
            raise SchemaError(f"{self.where}: field {key!r} must be {_kind_name(kinds)}, got a boolean")
        if not isinstance(value, kinds):
            raise SchemaError(f"{self.where}: field {key!r} must be {_kind_name(kinds)}, got {value!r}")
        return value

    def choice(self, key: str, options: Iterable[str], required: bool = True, default: str | None = None) -> str:
        value = self.get(key, str, required, default)
        options = tuple(options)
        if value is not None and value not in options:
            raise SchemaError(f"{self.where}: field {key!r} must be one of {options}, got {value!r}")
        return value

    def finish(self) -> None:
        extra = set(self.raw) - self.used
        if extra:
            raise SchemaError(f"{self.where}: unknown field(s) {sorted(extra)}")


def _kind_name(kinds: tuple[type, ...]) -> str:
    return " or ".join(k.__name__ for k in kinds)


def _pair(f: _Fields, key: str, kind: type, required: bool = True):
    value = f.get(key, list, required)
    if value is None:
        return None
    if len(value) != 2:
        raise SchemaError(f"{f.where}: field {key!r} must have exactly two entries")
    out = []
    for item in value:
        if kind is float and isinstance(item, int) and not isinstance(item, bool):
            item = float(item)
        if not isinstance(item, kind) or isinstance(item, bool):
            raise SchemaError(f"{f.where}: field {key!r} entries must be {kind.__name__}, got {item!r}")
        out.append(item)
    return tuple(out)


def _positive(f: _Fields, key: str, value: float | None) -> float | None:
    if value is not None and not (math.isfinite(value) and value > 0):
        raise SchemaError(f"{f.where}: field {key!r} must be a positive number, got {value!r}")
    return value


def _provenance_list(f: _Fields) -> tuple[str, ...]:
    value = f.get("provenance", (list, str), required=False, default=[])
    return (value,) if isinstance(value, str) else tuple(str(v) for v in value)


def _parse_hardware(raw: Any, where: str) -> HardwareProfile:
    f = _Fields(raw, where)
    spec_f = _Fields(f.get("power_spec", dict), f"{where}.power_spec")
    kind = spec_f.choice("kind", ("average_watts", "idle_and_load_watts", "yearly_kwh"))
    if kind == "average_watts":
        spec = PowerSpec(kind, average_watts=spec_f.get("average_watts", float))
    elif kind == "idle_and_load_watts":
        spec = PowerSpec(kind, idle_watts=spec_f.get("idle_watts", float), load_watts=spec_f.get("load_watts", float))
    else:
        spec = PowerSpec(kind, yearly_kwh=spec_f.get("yearly_kwh", float))
    spec_f.finish()
    h = HardwareProfile(
        id=f.get("id", str),
        label=f.get("label", str),
        tier=f.choice("tier", tuple(_TIER_RANK)),
        power_spec=spec,
        exemplar=f.get("exemplar", str, required=False, default=""),
        provenance=_provenance_list(f),
    )
    f.finish()
    return h


def _parse_network(raw: Any, where: str) -> NetworkProfile:
    f = _Fields(raw, where)
    n_val = f.get("n_val", int)
    if n_val < 0:
        raise SchemaError(f"{where}: field 'n_val' must be >= 0, got {n_val}")
    prov = f.get("provenance", dict, required=False, default={})
    net = NetworkProfile(
        id=f.get("id", str),
        display_name=f.get("display_name", str),
        permissioning=f.choice("permissioning", ("permissioned", "permissionless")),
        accounting=f.choice("accounting", ("account", "utxo")),
        structure=f.choice("structure", ("block", "dag")),
        n_val=n_val,
        tps_max=_positive(f, "tps_max", f.get("tps_max", float)),
        hardware_band_ref=_pair(f, "hardware_band_ref", str),
        tps_contemporary=_positive(f, "tps_contemporary", f.get("tps_contemporary", float, required=False)),
        tps_projection_bounds=_pair(f, "tps_projection_bounds", float, required=False),
        bonding=f.get("bonding", bool, required=False, default=False),
        slashing=f.get("slashing", bool, required=False, default=False),
        rewards=f.get("rewards", bool, required=False, default=False),
        provenance=MappingProxyType({str(k): str(v) for k, v in prov.items()}),
    )
    f.finish()
    return net


def read_series_csv(path: str | os.PathLike, **kwargs: Any) -> ObservationSeries:
    """Read a ``date,n_val,tps`` file into an :class:`ObservationSeries`."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: cannot read series file ({exc.strerror})") from exc
    return parse_series_csv(text, str(path), **kwargs)


def parse_series_csv(text: str, where: str = "<series>", **kwargs: Any) -> ObservationSeries:
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows or [c.strip() for c in rows[0]] != ["date", "n_val", "tps"]:
        raise ParseError(f"{where}:1: expected header 'date,n_val,tps'")
    samples = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(f"{where}:{lineno}: expected 3 columns, got {len(row)}")
        try:
            d = date.fromisoformat(row[0].strip())
            n = int(row[1])
            tps = float(row[2])
        except ValueError as exc:
            raise ParseError(f"{where}:{lineno}: {exc}") from exc
        if n < 0 or not math.isfinite(tps) or tps < 0:
            raise ParseError(f"{where}:{lineno}: n_val and tps must be non-negative")
        samples.append(Observation(d, n, tps))
    if not samples:
        raise ParseError(f"{where}: series has no samples")
    kwargs.setdefault("source_label", Path(where).name)
    return ObservationSeries(tuple(samples), path=str(Path(where).resolve()) if where != "<series>" else None, **kwargs)


def format_series_csv(series: ObservationSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "n_val", "tps"])
    for s in series.samples:
        w.writerow([s.date.isoformat(), s.n_val, repr(float(s.tps))])
    return buf.getvalue()


def _parse_series(raw: Any, where: str, base_dir: Path | None) -> tuple[str, ObservationSeries]:
    f = _Fields(raw, where)
    sid = f.get("id", str)
    common = dict(
        source_label=f.get("source_label", str, required=False, default=sid),
        network_id=f.get("network_id", str, required=False),
        fit_method=f.choice("fit_method", ("ols", "two_point"), required=False, default="ols"),
    )
    rel = f.get("path", str, required=False)
    inline = f.get("samples", list, required=False)
    f.finish()
    if (rel is None) == (inline is None):
        raise SchemaError(f"{where}: give exactly one of 'samples' or 'path'")
    if rel is not None:
        target = Path(rel) if base_dir is None else base_dir / rel
        return sid, read_series_csv(target, **common)
    samples = []
    for i, item in enumerate(inline):
        if not (isinstance(item, list) and len(item) == 3):
            raise SchemaError(f"{where}.samples[{i}]: expected [date, n_val, tps]")
        d, n, tps = item
        if isinstance(d, str):
            try:
                d = date.fromisoformat(d)
            except ValueError as exc:
                raise SchemaError(f"{where}.samples[{i}]: {exc}") from exc
        if not isinstance(d, date) or isinstance(n, bool) or not isinstance(n, int) or n < 0:
            raise SchemaError(f"{where}.samples[{i}]: expected [ISO date, non-negative int, number]")
        if isinstance(tps, bool) or not isinstance(tps, (int, float)) or tps < 0:
            raise SchemaError(f"{where}.samples[{i}]: tps must be a non-negative number")
        samples.append(Observation(d, n, float(tps)))
    if not samples:
        raise SchemaError(f"{where}: series has no samples")
    return sid, ObservationSeries(tuple(samples), **common)


def _parse_reference_row(raw: Any, where: str) -> tuple[str, str, ReferenceBound]:
    f = _Fields(raw, where)
    rid = f.get("id", str)
    name = f.get("display_name", str, required=False, default=rid)
    label = f.choice("bound_label", ("lower", "upper"), required=False)
    energy_raw = f.get("annual_energy", dict, required=False)
    global_kw = f.get("global_kw", float, required=False)
    if (energy_raw is None) == (global_kw is None):
        raise SchemaError(f"{where}: give exactly one of 'annual_energy' or 'global_kw'")
    energy = None
    if energy_raw is not None:
        ef = _Fields(energy_raw, f"{where}.annual_energy")
        try:
            energy = AnnualEnergy(ef.get("value", float), ef.get("unit", str))
        except ValueError as exc:
            raise SchemaError(f"{where}.annual_energy: {exc}") from exc
        ef.finish()
    tf = _Fields(f.get("throughput_spec", dict), f"{where}.throughput_spec")
    t_value = _positive(tf, "value", tf.get("value", float))
    t_unit = tf.choice("unit", ("tps", "tx_per_day"))
    tf.finish()
    bound = ReferenceBound(label, energy, global_kw, t_value, t_unit, _provenance_list(f))
    f.finish()
    return rid, name, bound


def _parse_source(raw: Any, where: str) -> SourceDescriptor:
    f = _Fields(raw, where)
    extraction_raw = f.get("extraction", (dict, str))
    if extraction_raw == "manual":
        rule = None
    elif isinstance(extraction_raw, dict):
        ef = _Fields(extraction_raw, f"{where}.extraction")
        rule = ExtractionRule(ef.choice("kind", ("json_pointer", "regex")), ef.get("expr", str))
        ef.finish()
    else:
        raise SchemaError(f"{where}: extraction must be a rule mapping or 'manual'")
    scale_raw = f.get("post_scale", (str, int, float), required=False)
    scale = None
    if scale_raw is not None:
        try:
            scale = Fraction(str(scale_raw))
        except (ValueError, ZeroDivisionError) as exc:
            raise SchemaError(f"{where}: post_scale {scale_raw!r} is not a rational number") from exc
    src = SourceDescriptor(
        id=f.get("id", str),
        network_id=f.get("network_id", str),
        url=f.get("url", str),
        metric=f.choice("metric", ("validator_count", "tps", "tx_per_day", "tx_per_epoch")),
        extraction=rule,
        post_scale=scale,
        notes=f.get("notes", str, required=False, default=""),
    )
    f.finish()
    return src


def _compose(text: str, name: str):
    loader = yaml.SafeLoader(text)
    try:
        node = loader.get_single_node()
        data = loader.construct_document(node) if node is not None else None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{name}:{mark.line + 1}" if mark is not None else name
        problem = getattr(exc, "problem", None) or str(exc)
        raise ParseError(f"{where}: {problem}") from exc
    finally:
        loader.dispose()
    return node, data


def _item_lines(node, name: str) -> dict[tuple[str, int], str]:
    lines: dict[tuple[str, int], str] = {}
    if not isinstance(node, yaml.MappingNode):
        return lines
    for key_node, value_node in node.value:
        if isinstance(value_node, yaml.SequenceNode):
            for i, item in enumerate(value_node.value):
                lines[(key_node.value, i)] = f"{name}:{item.start_mark.line + 1}"
    return lines


def parse_dataset(text: str, name: str = "<dataset>", base_dir: Path | None = None, validate: bool = True):
    """Parse dataset text; returns ``(dataset, locations)``."""
    node, data = _compose(text, name)
    top = _Fields(data, name)
    lines = _item_lines(node, name)
    locations: dict[tuple[str, str], str] = {}

    snap = top.get("snapshot_date", (date, str))
    if isinstance(snap, str):
        try:
            snap = date.fromisoformat(snap)
        except ValueError as exc:
            raise SchemaError(f"{name}: snapshot_date: {exc}") from exc

    def section(key: str) -> list:
        return top.get(key, list, required=key in ("networks", "hardware"), default=[])

    def keyed(sec: str, items: list, parse) -> dict:
        out: dict = {}
        for i, raw in enumerate(items):
            where = lines.get((sec, i), f"{name}:{sec}[{i}]")
            rec = parse(raw, where)
            key = rec[0] if isinstance(rec, tuple) else rec.id
            if key in out:
                raise SchemaError(f"{where}: duplicate {sec} id {key!r}")
            out[key] = rec[1] if isinstance(rec, tuple) else rec
            locations[(sec, key)] = where
        return out

    hardware = keyed("hardware", section("hardware"), _parse_hardware)
    networks = keyed("networks", section("networks"), _parse_network)
    series = keyed("series", section("series"), lambda raw, where: _parse_series(raw, where, base_dir))
    sources = keyed("sources", section("sources"), _parse_source)

    grouped: dict[str, tuple[str, list[ReferenceBound]]] = {}
    for i, raw in enumerate(section("references")):
        where = lines.get(("references", i), f"{name}:references[{i}]")
        rid, display, bound = _parse_reference_row(raw, where)
        grouped.setdefault(rid, (display, []))[1].append(bound)
        locations.setdefault(("references", rid), where)
    references = {
        rid: ReferenceSystem(rid, display, tuple(sorted(bounds, key=lambda b: str(b.label))))
        for rid, (display, bounds) in grouped.items()
    }
    top.finish()

    d = Dataset(networks, hardware, series, references, snap, sources)
    if validate:
        check_dataset(d, locations)
    return d, locations


def load_dataset(path: str | os.PathLike | None = None, validate: bool = True) -> Dataset:
    """Load and validate a dataset file; ``None`` loads the bundled snapshot."""
    p = Path(path) if path is not None else bundled_dataset_path()
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{p}: cannot read dataset ({exc.strerror})") from exc
    d, _ = parse_dataset(text, str(p), p.parent, validate=validate)
    return d


def bundled_dataset_path() -> Path:
    return Path(str(resources.files("posenergy") / "data" / "snapshot.yaml"))


# --------------------------------------------------------------------------
# serialisation


def _clean(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def _dump_hardware(h: HardwareProfile) -> dict:
    spec = {"kind": h.power_spec.kind}
    for key in ("average_watts", "idle_watts", "load_watts", "yearly_kwh"):
        v = getattr(h.power_spec, key)
        if v is not None:
            spec[key] = v
    out = {"id": h.id, "label": h.label, "tier": h.tier, "power_spec": spec}
    if h.exemplar:
        out["exemplar"] = h.exemplar
    if h.provenance:
        out["provenance"] = list(h.provenance)
    return out


def _dump_network(n: NetworkProfile) -> dict:
    out: dict[str, Any] = {
        "id": n.id,
        "display_name": n.display_name,
        "permissioning": n.permissioning,
        "accounting": n.accounting,
        "structure": n.structure,
        "n_val": n.n_val,
    }
    if n.tps_contemporary is not None:
        out["tps_contemporary"] = n.tps_contemporary
    if n.tps_projection_bounds is not None:
        out["tps_projection_bounds"] = list(n.tps_projection_bounds)
    out["tps_max"] = n.tps_max
    out["hardware_band_ref"] = list(n.hardware_band_ref)
    out.update(bonding=n.bonding, slashing=n.slashing, rewards=n.rewards)
    if n.provenance:
        out["provenance"] = dict(n.provenance)
    return out


def _dump_series(key: str, s: ObservationSeries, base_dir: Path | None) -> dict:
    out: dict[str, Any] = {"id": key}
    if s.network_id is not None:
        out["network_id"] = s.network_id
    out["source_label"] = s.source_label
    out["fit_method"] = s.fit_method
    if s.path is not None and base_dir is not None:
        out["path"] = Path(os.path.relpath(s.path, base_dir.resolve())).as_posix()
    else:
        out["samples"] = [[o.date, o.n_val, float(o.tps)] for o in s.samples]
    return out


def _dump_references(r: ReferenceSystem) -> list[dict]:
    rows = []
    for b in r.bounds:
        row: dict[str, Any] = {"id": r.id, "display_name": r.display_name}
        if b.label is not None:
            row["bound_label"] = b.label
        if b.annual_energy is not None:
            row["annual_energy"] = {"value": b.annual_energy.value, "unit": b.annual_energy.unit}
        else:
            row["global_kw"] = b.global_kw
        row["throughput_spec"] = {"value": b.throughput_value, "unit": b.throughput_unit}
        if b.provenance:
            row["provenance"] = list(b.provenance)
        rows.append(row)
    return rows


def _dump_source(s: SourceDescriptor) -> dict:
    out: dict[str, Any] = {"id": s.id, "network_id": s.network_id, "url": s.url, "metric": s.metric}
    out["extraction"] = "manual" if s.extraction is None else {"kind": s.extraction.kind, "expr": s.extraction.expr}
    if s.post_scale is not None:
        out["post_scale"] = str(s.post_scale)
    if s.notes:
        out["notes"] = s.notes
    return out


def dump_dataset(d: Dataset, base_dir: str | os.PathLike | None = None) -> str:
    """Serialise to YAML text.

    File-backed series are written as paths relative to ``base_dir`` when it
    is given, otherwise inline.
    """
    base = Path(base_dir) if base_dir is not None else None
    doc = {
        "snapshot_date": d.snapshot_date,
        "hardware": [_dump_hardware(h) for h in d.hardware.values()],
        "networks": [_dump_network(n) for n in d.networks.values()],
        "series": [_dump_series(k, s, base) for k, s in d.series.items()],
        "references": [row for r in d.references.values() for row in _dump_references(r)],
        "sources": [_dump_source(s) for s in d.sources.values()],
    }
    return yaml.safe_dump(_clean(doc), sort_keys=False, allow_unicode=True, default_flow_style=None, width=100)


def save_dataset(d: Dataset, path: str | os.PathLike) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(dump_dataset(d, p.parent), encoding="utf-8", newline="\n")
    return p
