"""Reservoir physics and calibrated reward models for the Bansagar-style dam.

Levels are metres above datum, storage is billion cubic metres (BCM) and
discharges are cumecs held constant over one day.
"""

from __future__ import annotations

import calendar
import configparser
import dataclasses
import math
from functools import cached_property
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Mapping

from .exceptions import DomainError

SECONDS_PER_DAY = 86400.0

RICE_COEF = (0.1315, -43.121)
WHEAT_COEF = (0.2642, -86.641)
HYDRO_COEF = (5.1927, -1342.5)
FLOOD_LOG_SCALE = -981.0
FLOOD_EXPONENT = 170.0

_MONTHS = [m.lower() for m in calendar.month_abbr]


@dataclass(frozen=True)
class StageStorageCurve:
    """Affine stage-storage relation ``storage = slope * level + intercept``.

    The curve is only trusted between the zero-storage level and twice the
    height of the dam above it; queries outside raise ``DomainError``.
    """

    slope: float = 0.3653
    intercept: float = -119.78
    dam_cap: float = 342.934

    def __post_init__(self):
        if not self.slope > 0:
            raise ValueError(f"slope must be positive, got {self.slope}")
        if not self.dam_cap > self.level_min:
            raise ValueError("dam_cap must lie above the zero-storage level")

    @property
    def level_min(self) -> float:
        return -self.intercept / self.slope

    @property
    def level_max(self) -> float:
        return self.level_min + 2.0 * (self.dam_cap - self.level_min)

    @property
    def storage_max(self) -> float:
        return self.slope * self.level_max + self.intercept

    @property
    def storage_cap(self) -> float:
        return storage_from_level(self, self.dam_cap)


def storage_from_level(curve: StageStorageCurve, h: float) -> float:
    """Stored volume (BCM) at water level ``h`` (m)."""
    h = float(h)
    if not math.isfinite(h):
        raise DomainError(f"non-finite water level {h}")
    s = curve.slope * h + curve.intercept
    # tolerate round-off right at the zero-storage level
    if s < -1e-12 or h > curve.level_max:
        raise DomainError(
            f"level {h:.6f} m outside curve domain "
            f"[{curve.level_min:.6f}, {curve.level_max:.6f}]"
        )
    return max(s, 0.0)


def level_from_storage(curve: StageStorageCurve, s: float) -> float:
    """Water level (m) holding ``s`` BCM; exact inverse of :func:`storage_from_level`."""
    s = float(s)
    if not math.isfinite(s) or s < 0:
        raise DomainError(f"storage must be finite and non-negative, got {s}")
    if s > curve.storage_max * (1 + 1e-12):
        raise DomainError(f"storage {s} BCM above curve domain maximum {curve.storage_max}")
    return (s - curve.intercept) / curve.slope


def log_flood_damage(h_max: float) -> float:
    if not h_max > 0:
        raise DomainError(f"flood damage needs a positive level, got {h_max}")
    return FLOOD_LOG_SCALE + FLOOD_EXPONENT * math.log(h_max)


def flood_damage(h_max: float) -> float:
    """Downstream flood damage ``exp(-981) * h_max**170``, evaluated in log space.

    ``h_max`` is the highest level seen over the trailing flood window.
    """
    return math.exp(log_flood_damage(h_max))


def _affine(coef, h):
    return coef[0] * float(h) + coef[1]


def rice_potential(h: float) -> float:
    """Potential rice productivity (million tonnes), zero below the intake."""
    return max(0.0, _affine(RICE_COEF, h))


def wheat_potential(h: float) -> float:
    """Potential wheat productivity (million tonnes), zero below the intake."""
    return max(0.0, _affine(WHEAT_COEF, h))


def hydropower_potential(h: float) -> float:
    """Hydropower potential (MW), zero below the turbine head."""
    return max(0.0, _affine(HYDRO_COEF, h))


def discharge_to_volume(a: float) -> float:
    """Daily volume (BCM) released by a constant discharge of ``a`` cumecs."""
    a = float(a)
    if not math.isfinite(a) or a < 0:
        raise DomainError(f"discharge must be finite and non-negative, got {a}")
    return a * SECONDS_PER_DAY / 1e9


def volume_to_discharge(v: float) -> float:
    """Constant discharge (cumecs) that releases ``v`` BCM in one day."""
    return float(v) * 1e9 / SECONDS_PER_DAY


def _month_range(first: int, last: int) -> tuple:
    months = [first]
    while months[-1] != last:
        months.append(months[-1] % 12 + 1)
    return tuple(months)


def parse_month_range(text: str) -> tuple:
    """Parse ``"Nov-Jun"`` into ``(11, 12, 1, 2, 3, 4, 5, 6)``."""
    try:
        first, last = (_MONTHS.index(p.strip().lower()[:3]) for p in text.split("-"))
    except ValueError:
        raise ValueError(f"bad month range {text!r}, expected e.g. 'Nov-Jun'") from None
    if first == 0 or last == 0:
        raise ValueError(f"bad month range {text!r}")
    return _month_range(first, last)


def format_month_range(months) -> str:
    return f"{calendar.month_abbr[months[0]]}-{calendar.month_abbr[months[-1]]}"


def parse_day_of_year(text: str) -> tuple:
    """Parse ``"01 June"`` (or ``"06-01"``) into ``(month, day)``."""
    text = text.strip()
    candidates = [(f"{text} 2001", "%d %B %Y"), (f"{text} 2001", "%d %b %Y"),
                  (f"2001-{text}", "%Y-%m-%d")]
    for value, fmt in candidates:
        try:
            d = datetime.strptime(value, fmt)
        except ValueError:
            continue
        return (d.month, d.day)
    raise ValueError(f"cannot parse calendar day {text!r}")


def format_day_of_year(md) -> str:
    return f"{md[1]:02d} {calendar.month_name[md[0]]}"


@dataclass(frozen=True)
class SimParams:
    """Simulator constants. Defaults reproduce the published parameter table.

    ``a_max``, ``flood_window`` and ``rainfall_window`` are not published;
    they are simulator choices.
    """

    dam_cap: float = 342.934
    dam_break_damage: float = 80.0
    dam_base_water: float = 0.1
    water_year_start: tuple = (6, 1)
    water_year_end: tuple = (5, 31)
    dry_season_months: tuple = (11, 12, 1, 2, 3, 4, 5, 6)
    discount: float = 0.999
    max_step: int = 365
    flooded_area_slope: float = 0.00006
    power_potential_slope: float = 0.003
    wheat_slope: float = 30.0
    rice_slope: float = 30.0
    a_max: float = 3000.0
    flood_window: int = 14
    rainfall_window: int = 7
    curve_slope: float = 0.3653
    curve_intercept: float = -119.78

    def __post_init__(self):
        if not 0 < self.discount < 1:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount}")
        if self.max_step < 1:
            raise ValueError("max_step must be at least 1")
        for name in ("flooded_area_slope", "power_potential_slope", "wheat_slope",
                     "rice_slope", "dam_break_damage"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.a_max <= 0 or self.flood_window < 1 or self.rainfall_window < 1:
            raise ValueError("a_max, flood_window and rainfall_window must be positive")
        if not self.dam_base_water < self.curve.storage_cap:
            raise ValueError("dam_base_water must be below the storage at dam_cap")

    @cached_property
    def curve(self) -> StageStorageCurve:
        return StageStorageCurve(self.curve_slope, self.curve_intercept, self.dam_cap)

    @cached_property
    def irrigation_scale(self) -> float:
        """One over the number of dry-season days in a non-leap water year."""
        days = sum(calendar.monthrange(2001, m)[1] for m in self.dry_season_months)
        return 1.0 / days

    # -- flat key = value config ------------------------------------------

    def to_mapping(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name in ("water_year_start", "water_year_end"):
                v = format_day_of_year(v)
            elif f.name == "dry_season_months":
                v = format_month_range(v)
            out[f.name] = str(v)
        return out

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str], strict: bool = False) -> "SimParams":
        """Build params from string values; unknown keys raise only when ``strict``."""
        kwargs = {}
        types = {f.name: f for f in dataclasses.fields(cls)}
        for key, raw in mapping.items():
            if key not in types:
                if strict:
                    raise KeyError(f"unknown simulator parameter {key!r}")
                continue
            raw = str(raw).strip()
            if key in ("water_year_start", "water_year_end"):
                kwargs[key] = parse_day_of_year(raw)
            elif key == "dry_season_months":
                kwargs[key] = parse_month_range(raw)
            elif key in ("max_step", "flood_window", "rainfall_window"):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        return cls(**kwargs)

    def save(self, path) -> None:
        write_config(path, self.to_mapping())

    @classmethod
    def load(cls, path) -> "SimParams":
        return cls.from_mapping(read_config(path))


def read_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines (``#`` comments allowed) into a dict."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string("[root]\n" + text)
    return dict(parser["root"])


def read_config(path) -> dict:
    return read_config_text(Path(path).read_text())


def write_config(path, mapping: Mapping[str, str]) -> None:
    lines = [f"{k} = {v}" for k, v in mapping.items()]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class RewardBreakdown:
    """One day's reward and the unweighted components it was built from.

    ``rice``, ``wheat`` and ``hydro`` are clamped at zero; the ``*_raw``
    fields keep the affine values for diagnostics.
    """

    rice: float
    wheat: float
    hydro: float
    flood: float
    dam_break: float
    total: float
    rice_raw: float = field(default=0.0, compare=False)
    wheat_raw: float = field(default=0.0, compare=False)
    hydro_raw: float = field(default=0.0, compare=False)

    @staticmethod
    def combine(rice, wheat, hydro, flood, dam_break, in_dry_season, params: SimParams) -> float:
        irrigation = params.rice_slope * rice + params.wheat_slope * wheat
        return (params.power_potential_slope * hydro
                + float(in_dry_season) * irrigation * params.irrigation_scale
                - params.flooded_area_slope * flood
                - dam_break)


def aggregate_reward(h: float, h_max14: float, in_dry_season: bool, overflowed: bool,
                     params: SimParams) -> RewardBreakdown:
    """Weighted daily reward: hydropower plus dry-season irrigation minus flood
    damage and the dam-break penalty."""
    rice, wheat, hydro = rice_potential(h), wheat_potential(h), hydropower_potential(h)
    flood = flood_damage(h_max14)
    dam_break = params.dam_break_damage if overflowed else 0.0
    total = RewardBreakdown.combine(rice, wheat, hydro, flood, dam_break, in_dry_season, params)
    return RewardBreakdown(
        rice=rice, wheat=wheat, hydro=hydro, flood=flood, dam_break=dam_break, total=total,
        rice_raw=_affine(RICE_COEF, h), wheat_raw=_affine(WHEAT_COEF, h),
        hydro_raw=_affine(HYDRO_COEF, h),
    )
