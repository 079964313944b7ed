"""Consumption equations for Proof-of-Stake ledgers.

Canonical units: W for a single validator, kW for a whole network, kWh/tx
for per-transaction energy and tx/s for throughput. All conversions happen
here; callers pass the typed quantities below, never bare floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence, Union

from .errors import BandOrderError, BoundsError, DomainError, ModelDegenerateError, UnitError

if TYPE_CHECKING:
    from .calibration import AffineValidatorModel

HOURS_PER_YEAR = 8760.0
SECONDS_PER_HOUR = 3600.0
SECONDS_PER_DAY = 86400.0
JOULES_PER_KWH = 3.6e6
JOULES_PER_GJ = 1e9
MIN_TPS = 1e-6

_ENERGY_UNITS = {
    "kwh": 1.0,
    "kwh/year": 1.0,
    "gj": JOULES_PER_GJ / JOULES_PER_KWH,
    "gj/year": JOULES_PER_GJ / JOULES_PER_KWH,
}


def _finite_nonneg(value: float, what: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise DomainError(f"{what} must be finite and >= 0, got {value!r}")
    return value


@dataclass(frozen=True, order=True)
class PowerDraw:
    watts: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "watts", _finite_nonneg(self.watts, "power draw [W]"))


@dataclass(frozen=True, order=True)
class Throughput:
    tps: float

    def __post_init__(self) -> None:
        tps = float(self.tps)
        if not math.isfinite(tps) or tps <= 0:
            raise DomainError(f"throughput must be finite and > 0 tx/s, got {tps!r}")
        object.__setattr__(self, "tps", tps)


@dataclass(frozen=True)
class ThroughputDomain:
    """Closed interval ``[min_tps, max_tps]`` standing in for ``(0, l_max]``."""

    max_tps: float
    min_tps: float = MIN_TPS

    def __post_init__(self) -> None:
        lo, hi = float(self.min_tps), float(self.max_tps)
        if not (math.isfinite(lo) and math.isfinite(hi)) or not 0 < lo <= hi:
            raise DomainError(f"invalid throughput domain [{lo!r}, {hi!r}]")
        object.__setattr__(self, "min_tps", lo)
        object.__setattr__(self, "max_tps", hi)

    def __contains__(self, l: Throughput | float) -> bool:
        tps = l.tps if isinstance(l, Throughput) else float(l)
        return self.min_tps <= tps <= self.max_tps


@dataclass(frozen=True, order=True)
class EnergyPerTx:
    kwh_per_tx: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "kwh_per_tx", _finite_nonneg(self.kwh_per_tx, "energy per tx [kWh]"))


@dataclass(frozen=True, order=True)
class GlobalPower:
    kilowatts: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "kilowatts", _finite_nonneg(self.kilowatts, "global power [kW]"))

    @property
    def watts(self) -> float:
        return self.kilowatts * 1000.0


Quantity = Union[EnergyPerTx, GlobalPower]


@dataclass(frozen=True)
class ScenarioBand:
    optimistic: Quantity
    pessimistic: Quantity

    def __post_init__(self) -> None:
        if type(self.optimistic) is not type(self.pessimistic):
            raise TypeError("scenario band ends must share a unit")
        if self.optimistic > self.pessimistic:
            raise BandOrderError(f"optimistic {self.optimistic} exceeds pessimistic {self.pessimistic}")


@dataclass(frozen=True)
class EnergyEstimate:
    global_band: ScenarioBand
    per_tx_band: ScenarioBand
    throughput: Throughput
    provenance: str = field(default="", compare=False)


@dataclass(frozen=True)
class AnnualEnergy:
    """Yearly energy figure as published, e.g. ``AnnualEnergy(706000, "GJ")``."""

    value: float
    unit: str

    def __post_init__(self) -> None:
        if self.unit.lower() not in _ENERGY_UNITS:
            raise UnitError(f"unsupported energy unit {self.unit!r}; expected kWh or GJ (per year)")
        object.__setattr__(self, "value", _finite_nonneg(self.value, "annual energy"))

    @property
    def kwh(self) -> float:
        return self.value * _ENERGY_UNITS[self.unit.lower()]


def _per_tx_kwh(n_val: float, watts: float, tps: float) -> float:
    # W * s/tx = J/tx; the fixed-count and projected paths share this expression
    return (n_val * watts) / (tps * JOULES_PER_KWH)


def _power_of(item) -> PowerDraw:
    power = getattr(item, "power", item)
    if not isinstance(power, PowerDraw):
        raise TypeError(f"expected PowerDraw or hardware profile, got {type(item).__name__}")
    return power


def total_power(n_val: int, p: PowerDraw) -> GlobalPower:
    """Network-wide average power: validator count times per-node draw."""
    if isinstance(n_val, bool) or not isinstance(n_val, int) or n_val < 0:
        raise DomainError(f"validator count must be a non-negative integer, got {n_val!r}")
    return GlobalPower(n_val * p.watts / 1000.0)


def per_tx_consumption(n_val: float, p: PowerDraw, l: Throughput) -> EnergyPerTx:
    """Energy per transaction at fixed validator count, in kWh/tx.

    ``n_val`` may be fractional so that the affine projection can reuse this
    exact arithmetic path.
    """
    n = _finite_nonneg(n_val, "validator count")
    if not isinstance(l, Throughput):
        raise DomainError(f"throughput must be a Throughput, got {l!r}")
    return EnergyPerTx(_per_tx_kwh(n, p.watts, l.tps))


def projected_per_tx(model: AffineValidatorModel, p: PowerDraw, l: Throughput) -> EnergyPerTx:
    """Per-transaction energy with the validator count predicted from throughput."""
    n = model.validators_at(l.tps)
    if not n >= 1.0:
        raise ModelDegenerateError(
            f"model predicts {n:.6g} validators at {l.tps:g} tx/s (kappa={model.kappa:g}, lambda={model.lambda_:g})"
        )
    if l not in model.domain:
        raise DomainError(
            f"{l.tps:g} tx/s outside model domain [{model.domain.min_tps:g}, {model.domain.max_tps:g}]"
        )
    return per_tx_consumption(n, p, l)


def scenario_range(n_val: int, hardware_band: Sequence, l: Throughput) -> EnergyEstimate:
    """Optimistic/pessimistic bands from a (low, high) hardware pair."""
    low, high = (_power_of(h) for h in hardware_band)
    if low > high:
        raise BandOrderError(f"hardware band not ascending: {low.watts:g} W > {high.watts:g} W")
    return EnergyEstimate(
        global_band=ScenarioBand(total_power(n_val, low), total_power(n_val, high)),
        per_tx_band=ScenarioBand(per_tx_consumption(n_val, low, l), per_tx_consumption(n_val, high, l)),
        throughput=l,
    )


def bounded_projection(
    n_val: int, hardware_band: Sequence, l_low: Throughput, l_high: Throughput
) -> tuple[EnergyEstimate, EnergyEstimate]:
    """Bands at both ends of a throughput range when no contemporary figure exists."""
    if not l_low.tps < l_high.tps:
        raise BoundsError(f"projection bounds must satisfy low < high, got {l_low.tps:g} >= {l_high.tps:g}")
    return scenario_range(n_val, hardware_band, l_low), scenario_range(n_val, hardware_band, l_high)


def reference_global_power(annual_energy: AnnualEnergy, hours_per_year: float = HOURS_PER_YEAR) -> GlobalPower:
    if not isinstance(annual_energy, AnnualEnergy):
        raise UnitError(f"expected AnnualEnergy, got {annual_energy!r}")
    if not hours_per_year > 0:
        raise DomainError(f"hours per year must be > 0, got {hours_per_year!r}")
    return GlobalPower(annual_energy.kwh / hours_per_year)


def reference_per_tx(global_power: GlobalPower, l: Throughput) -> EnergyPerTx:
    if not isinstance(l, Throughput):
        raise DomainError(f"throughput must be a Throughput, got {l!r}")
    return EnergyPerTx(global_power.kilowatts / (l.tps * SECONDS_PER_HOUR))


def tx_per_day_to_tps(tx_per_day: float) -> Throughput:
    value = float(tx_per_day)
    if not math.isfinite(value) or value <= 0:
        raise DomainError(f"transactions per day must be > 0, got {value!r}")
    return Throughput(value / SECONDS_PER_DAY)
