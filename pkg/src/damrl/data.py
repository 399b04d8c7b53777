"""Daily reservoir datasets: CSV schema, train/test split and a seeded
synthetic generator standing in for the gauge record.

CSV header: ``date,rainfall_mm,water_level_m,inflow_bcm``. Dates are
ISO-8601; missing optional values are empty fields.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .exceptions import DataFormatError
from .hydro import SimParams, discharge_to_volume, level_from_storage, storage_from_level
from .policies import SchedulePolicy

HEADER = ("date", "rainfall_mm", "water_level_m", "inflow_bcm")
DECIMALS = 6


@dataclass(frozen=True)
class DailyRecord:
    date: date
    rainfall_mm: float
    water_level_m: float | None = None
    inflow_bcm: float | None = None


def _parse_optional(text, lineno, name):
    text = text.strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        raise DataFormatError(f"{name} {text!r} is not a number", lineno) from None
    if not math.isfinite(value):
        raise DataFormatError(f"{name} must be finite", lineno)
    return value


def resolve_data_path(path) -> Path:
    """Return ``path`` as given, or under ``$REPO_DATA_DIR`` when only found there."""
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get("REPO_DATA_DIR"):
        alt = Path(os.environ["REPO_DATA_DIR"]) / p
        if alt.exists():
            return alt
    return p


def load_csv(path) -> list:
    """Parse and validate a dataset file.

    Raises:
        DataFormatError: on a bad header, malformed row, negative rainfall, a
            date that does not strictly increase or a missing day; the message
            names the line.
    """
    path = resolve_data_path(path)
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HEADER:
            raise DataFormatError(f"header must be {','.join(HEADER)}, got {header}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(HEADER):
                raise DataFormatError(f"expected {len(HEADER)} fields, got {len(row)}", lineno)
            try:
                day = date.fromisoformat(row[0].strip())
            except ValueError:
                raise DataFormatError(f"bad date {row[0]!r}", lineno) from None
            rain = _parse_optional(row[1], lineno, "rainfall_mm")
            if rain is None:
                raise DataFormatError("rainfall_mm is required", lineno)
            if rain < 0:
                raise DataFormatError(f"negative rainfall {rain}", lineno)
            level = _parse_optional(row[2], lineno, "water_level_m")
            inflow = _parse_optional(row[3], lineno, "inflow_bcm")
            if inflow is not None and inflow < 0:
                raise DataFormatError(f"negative inflow {inflow}", lineno)
            if records and day <= records[-1].date:
                raise DataFormatError(
                    f"date {day} does not follow {records[-1].date} (duplicate or regression)",
                    lineno)
            if records and day != records[-1].date + timedelta(days=1):
                raise DataFormatError(f"gap: no records between {records[-1].date} and {day}", lineno)
            records.append(DailyRecord(day, rain, level, inflow))
    return records


def _fmt(value):
    return "" if value is None else f"{value:.{DECIMALS}f}"


def write_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r in records:
            w.writerow([r.date.isoformat(), _fmt(r.rainfall_mm), _fmt(r.water_level_m),
                        _fmt(r.inflow_bcm)])


def split_by_year(records, train_end_year: int, test_year: int):
    """Train on everything up to 31 Dec of ``train_end_year``; test on ``test_year``."""
    if train_end_year >= test_year:
        raise ValueError(f"train_end_year {train_end_year} must precede test_year {test_year}")
    train = [r for r in records if r.date.year <= train_end_year]
    test = [r for r in records if r.date.year == test_year]
    if not train:
        raise ValueError(f"no records on or before {train_end_year}")
    if not test:
        raise ValueError(f"no records in test year {test_year}")
    return train, test


def series(records, name):
    """Column ``name`` as a float array; missing values become NaN."""
    return np.array([np.nan if getattr(r, name) is None else getattr(r, name)
                     for r in records], dtype=float)


def derive_inflow(records, params: SimParams | None = None, schedule=None):
    """Fill missing ``inflow_bcm`` from level changes.

    Inflow is the storage gain plus the scheduled release inside the dry
    season schedule, or the storage gain alone outside it, floored at zero.
    The first record has no predecessor and gets zero.
    """
    params = params or SimParams()
    schedule = schedule or SchedulePolicy(a_max=params.a_max)
    curve = params.curve
    out = []
    prev = None
    for r in records:
        if r.inflow_bcm is None and r.water_level_m is not None:
            if prev is None or prev.water_level_m is None:
                inflow = 0.0
            else:
                gain = (storage_from_level(curve, r.water_level_m)
                        - storage_from_level(curve, prev.water_level_m))
                release = (discharge_to_volume(schedule.baseline_act(r.date, 0.0))
                           if schedule.covers(r.date) else 0.0)
                inflow = max(0.0, gain + release)
            r = replace(r, inflow_bcm=round(inflow, DECIMALS))
        out.append(r)
        prev = r
    return out


# -- synthetic generator -----------------------------------------------------------

# wet-day probability and mean wet-day depth (mm), Jan..Dec, for a
# central-Indian monsoon catchment
_WET_PROB = (0.05, 0.05, 0.04, 0.03, 0.05, 0.35, 0.70, 0.70, 0.50, 0.12, 0.04, 0.03)
_WET_MEAN = (9.7, 9.7, 8.0, 5.5, 6.5, 11.4, 15.2, 15.2, 12.0, 8.0, 8.0, 5.5)


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the synthetic catchment.

    Daily rainfall is a wet/dry draw followed by a gamma depth. Inflow is the
    runoff coefficient times rainfall volume routed through ``kernel``; the
    coefficient carries AR(1) noise and, when ``drift_sd > 0``, a log random
    walk that makes the rainfall-inflow relation change over time.
    """

    seed: int = 0
    start_year: int = 2012
    years: int = 8
    wet_prob: tuple = _WET_PROB
    wet_mean_mm: tuple = _WET_MEAN
    gamma_shape: float = 0.8
    intensity: float = 1.0
    monsoon_months: tuple = (6, 7, 8, 9)
    catchment_km2: float = 18000.0
    runoff_coefficient: float = 0.2
    kernel: tuple = (0.5, 0.3, 0.15, 0.05)
    noise_rho: float = 0.7
    noise_sd: float = 0.1
    drift_sd: float = 0.0
    drift_bounds: tuple = (0.25, 4.0)
    base_level: float = 339.0

    def __post_init__(self):
        if self.years < 1:
            raise ValueError("years must be at least 1")
        if len(self.wet_prob) != 12 or len(self.wet_mean_mm) != 12:
            raise ValueError("wet_prob and wet_mean_mm need one value per month")
        if not all(0 <= p <= 1 for p in self.wet_prob):
            raise ValueError("wet_prob values must lie in [0, 1]")
        if self.gamma_shape <= 0 or self.intensity < 0 or self.catchment_km2 < 0:
            raise ValueError("gamma_shape must be positive; intensity and area non-negative")
        if not 0 <= self.runoff_coefficient <= 1:
            raise ValueError("runoff_coefficient must lie in [0, 1]")
        if not -1 < self.noise_rho < 1 or self.noise_sd < 0 or self.drift_sd < 0:
            raise ValueError("need |noise_rho| < 1 and non-negative noise_sd, drift_sd")
        if not self.kernel or any(w < 0 for w in self.kernel):
            raise ValueError("kernel weights must be non-negative")


def synthesize(config: SyntheticConfig = SyntheticConfig(), params: SimParams | None = None) -> list:
    """Generate a daily dataset, levels integrated under the baseline schedule
    with perfect knowledge of the day's inflow."""
    params = params or SimParams()
    rng = np.random.default_rng(config.seed)
    start = date(config.start_year, 1, 1)
    days = [start + timedelta(days=i)
            for i in range((date(config.start_year + config.years, 1, 1) - start).days)]
    n = len(days)
    months = np.array([d.month for d in days]) - 1

    wet = rng.random(n) < np.asarray(config.wet_prob)[months]
    scale = np.asarray(config.wet_mean_mm)[months] / config.gamma_shape
    depth = rng.gamma(config.gamma_shape, scale)
    rain = np.round(np.where(wet, depth, 0.0) * config.intensity, DECIMALS)

    kernel = np.asarray(config.kernel, dtype=float)
    routed = np.convolve(rain, kernel)[:n]
    volume = routed * 1e-3 * config.catchment_km2 * 1e6 / 1e9

    noise = np.empty(n)
    drift = np.empty(n)
    e, w = 0.0, 0.0
    innov_sd = config.noise_sd * math.sqrt(1 - config.noise_rho ** 2)
    lo, hi = (math.log(b) for b in config.drift_bounds)
    for t in range(n):
        e = config.noise_rho * e + rng.normal(0.0, innov_sd)
        w = min(max(w + rng.normal(0.0, config.drift_sd), lo), hi) if config.drift_sd else 0.0
        noise[t], drift[t] = e, w
    coefficient = config.runoff_coefficient * np.exp(drift) * (1.0 + noise)
    inflow = np.round(np.maximum(volume * coefficient, 0.0), DECIMALS)

    curve = params.curve
    schedule = SchedulePolicy(a_max=params.a_max)
    s_cap = curve.storage_cap
    s = storage_from_level(curve, config.base_level)
    records = []
    for t, d in enumerate(days):
        request = discharge_to_volume(schedule.baseline_act(d, inflow[t]))
        released = min(request, max(s + inflow[t] - params.dam_base_water, 0.0))
        s = min(s + inflow[t] - released, s_cap)
        level = round(level_from_storage(curve, s), DECIMALS)
        records.append(DailyRecord(d, float(rain[t]), level, float(inflow[t])))
    return records


@dataclass
class Dataset:
    """Records plus lookup by calendar date."""

    records: list
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {r.date: r for r in self.records}

    def __len__(self):
        return len(self.records)

    def get(self, d: date):
        return self._index.get(d)

    def years(self):
        return sorted({r.date.year for r in self.records})

    def same_calendar_day(self, d: date) -> list:
        """Records on ``d``'s month and day in any year (29 Feb falls back to 28 Feb)."""
        out = []
        for y in self.years():
            try:
                r = self._index.get(d.replace(year=y))
            except ValueError:
                r = self._index.get(date(y, 2, 28))
            if r is not None:
                out.append(r)
        return out
