"""Fitting the affine validator model ``n_val = kappa + lambda * tps``.

Also home to the correlation diagnostics used to justify that model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Literal, NamedTuple, Sequence

from .errors import (
    CoincidentAbscissaError,
    DegenerateSeriesError,
    InsufficientOverlapError,
    InvariantError,
    LengthMismatchError,
    ModelDegenerateError,
)
from .model import MIN_TPS, ThroughputDomain

FitMethod = Literal["ols", "two_point"]


class Observation(NamedTuple):
    date: date
    n_val: int
    tps: float


@dataclass(frozen=True)
class ObservationSeries:
    """Dated (validator count, throughput) samples for one network.

    Construction does not enforce date ordering so that a malformed dataset
    can still be loaded and reported on; the calibration functions check it.
    """

    samples: tuple[Observation, ...]
    source_label: str = ""
    network_id: str | None = None
    fit_method: FitMethod = "ols"
    path: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(Observation(*s) for s in self.samples))
        if not self.samples:
            raise InvariantError("observation series needs at least one sample")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def dates(self) -> list[date]:
        return [s.date for s in self.samples]

    @property
    def n_vals(self) -> list[float]:
        return [float(s.n_val) for s in self.samples]

    @property
    def tps_values(self) -> list[float]:
        return [float(s.tps) for s in self.samples]

    def is_ordered(self) -> bool:
        return all(a.date < b.date for a, b in zip(self.samples, self.samples[1:]))

    def require_ordered(self) -> None:
        if not self.is_ordered():
            raise InvariantError(f"series {self.source_label!r}: timestamps not strictly increasing")


@dataclass(frozen=True)
class FitDiagnostics:
    r_squared: float
    residual_sum_squares: float
    n_points: int


@dataclass(frozen=True)
class AffineValidatorModel:
    kappa: float
    lambda_: float
    method: FitMethod
    domain: ThroughputDomain
    diagnostics: FitDiagnostics | None = None

    @classmethod
    def create(
        cls,
        kappa: float,
        lambda_: float,
        method: FitMethod,
        max_tps: float,
        min_tps: float = MIN_TPS,
        diagnostics: FitDiagnostics | None = None,
    ) -> "AffineValidatorModel":
        """Build a model whose domain is cut down to where it predicts >= 1 validator."""
        if not (math.isfinite(kappa) and math.isfinite(lambda_)):
            raise ModelDegenerateError(f"non-finite model parameters kappa={kappa!r}, lambda={lambda_!r}")
        lo, hi = float(min_tps), float(max_tps)
        if lambda_ > 0:
            lo = max(lo, (1.0 - kappa) / lambda_)
            while kappa + lambda_ * lo < 1.0:
                lo = math.nextafter(lo, math.inf)
        elif lambda_ < 0:
            hi = min(hi, (kappa - 1.0) / -lambda_)
            while hi > 0 and kappa + lambda_ * hi < 1.0:
                hi = math.nextafter(hi, -math.inf)
        elif kappa < 1.0:
            hi = -math.inf
        if not (0 < lo <= hi):
            raise ModelDegenerateError(
                f"kappa={kappa:g}, lambda={lambda_:g} predicts fewer than one validator on all of "
                f"[{min_tps:g}, {max_tps:g}] tx/s"
            )
        return cls(kappa, lambda_, method, ThroughputDomain(hi, lo), diagnostics)

    def validators_at(self, tps: float) -> float:
        return self.kappa + self.lambda_ * tps


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    lag_days: int
    n_pairs: int


def pearson(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """Sample Pearson correlation coefficient of two equal-length series."""
    if len(x) != len(y):
        raise LengthMismatchError(f"series lengths differ: {len(x)} != {len(y)}")
    if len(x) < 2:
        raise DegenerateSeriesError("need at least two pairs for a correlation")
    xs = [float(v) for v in x]
    ys = [float(v) for v in y]
    mx = math.fsum(xs) / len(xs)
    my = math.fsum(ys) / len(ys)
    dx = [v - mx for v in xs]
    dy = [v - my for v in ys]
    ax = max(abs(a) for a in dx)
    ay = max(abs(b) for b in dy)
    if ax == 0 or ay == 0:
        raise DegenerateSeriesError("correlation undefined for a constant series")
    # r is scale-free; rescaling keeps tiny or huge deviations from under/overflowing
    dx = [a / ax for a in dx]
    dy = [b / ay for b in dy]
    sxx = math.fsum(a * a for a in dx)
    syy = math.fsum(b * b for b in dy)
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    r = sxy / (math.sqrt(sxx) * math.sqrt(syy))
    return CorrelationResult(max(-1.0, min(1.0, r)), 0, len(xs))


def lagged_pearson(series: ObservationSeries, lag_days: int) -> CorrelationResult:
    """Correlate validator count at ``t - lag`` with throughput at ``t``.

    Pairs are matched on calendar dates. Dates without a partner are dropped,
    so gaps in the series break pairs instead of shifting them.
    """
    if lag_days < 0:
        raise ValueError(f"lag must be non-negative, got {lag_days}")
    series.require_ordered()
    by_date = {s.date: s for s in series.samples}
    lag = timedelta(days=lag_days)
    xs, ys = [], []
    for s in series.samples:
        earlier = by_date.get(s.date - lag)
        if earlier is not None:
            xs.append(float(earlier.n_val))
            ys.append(float(s.tps))
    if len(xs) < 2:
        raise InsufficientOverlapError(
            f"only {len(xs)} aligned pair(s) at lag {lag_days} d in series {series.source_label!r}"
        )
    res = pearson(xs, ys)
    return CorrelationResult(res.r, lag_days, res.n_pairs)


def fit_ols(series: ObservationSeries, max_tps: float | None = None) -> AffineValidatorModel:
    """Least-squares fit of validator count against throughput.

    Closed-form normal equations on mean-centred data. ``max_tps`` sets the
    upper end of the validity domain; it defaults to the largest observed
    throughput.
    """
    series.require_ordered()
    xs, ys = series.tps_values, series.n_vals
    n = len(xs)
    if n < 2:
        raise DegenerateSeriesError("OLS needs at least two samples")
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    dx = [x - mx for x in xs]
    sxx = math.fsum(d * d for d in dx)
    if sxx == 0:
        raise DegenerateSeriesError("all throughput values are equal; slope is undefined")
    sxy = math.fsum(d * (y - my) for d, y in zip(dx, ys))
    lam = sxy / sxx
    kappa = my - lam * mx

    residuals = [y - (kappa + lam * x) for x, y in zip(xs, ys)]
    rss = math.fsum(r * r for r in residuals)
    syy = math.fsum((y - my) ** 2 for y in ys)
    r2 = 1.0 if syy == 0 else min(1.0, max(0.0, 1.0 - rss / syy))
    diag = FitDiagnostics(r_squared=r2, residual_sum_squares=rss, n_points=n)
    return AffineValidatorModel.create(kappa, lam, "ols", max_tps if max_tps is not None else max(xs), diagnostics=diag)


def fit_two_point(
    p1: tuple[float, float], p2: tuple[float, float], max_tps: float | None = None
) -> AffineValidatorModel:
    """Line through two ``(tps, n_val)`` points."""
    (l1, n1), (l2, n2) = p1, p2
    if l1 == l2:
        raise CoincidentAbscissaError(f"both points have throughput {l1:g} tx/s")
    lam = (n2 - n1) / (l2 - l1)
    kappa = n1 - lam * l1
    diag = FitDiagnostics(r_squared=1.0, residual_sum_squares=0.0, n_points=2)
    return AffineValidatorModel.create(
        kappa, lam, "two_point", max_tps if max_tps is not None else max(l1, l2), diagnostics=diag
    )


def fit_series(series: ObservationSeries, method: FitMethod | None = None, max_tps: float | None = None):
    """Fit with the series' preferred method; two-point uses the first and last samples."""
    method = method or series.fit_method
    if method == "two_point":
        series.require_ordered()
        if len(series) < 2:
            raise DegenerateSeriesError("two-point fit needs two samples")
        first, last = series.samples[0], series.samples[-1]
        return fit_two_point((first.tps, first.n_val), (last.tps, last.n_val), max_tps)
    if method == "ols":
        return fit_ols(series, max_tps)
    raise ValueError(f"unknown fit method {method!r}")
