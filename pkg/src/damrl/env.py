"""Daily dam-operation MDP.

One step is one day: the operator fixes a discharge, today's rainfall
arrives, the inflow model turns it into a volume, and the water balance
moves the level along the stage-storage curve.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .data import Dataset
from .hydro import (
    RewardBreakdown,
    SimParams,
    aggregate_reward,
    discharge_to_volume,
    level_from_storage,
    storage_from_level,
)
from .inflow import InflowSpec, OnlineInflow


def is_dry_season(d: date, params: SimParams | None = None) -> bool:
    months = params.dry_season_months if params is not None else SimParams.dry_season_months
    return d.month in months


def water_year_start(year: int, params: SimParams) -> date:
    m, d = params.water_year_start
    return date(year, m, d)


# -- rainfall sources ----------------------------------------------------------------------

class ConstantSource:
    """Same rainfall (and optional observed inflow) every day."""

    def __init__(self, rainfall: float = 0.0, inflow: float | None = 0.0):
        self.rainfall = float(rainfall)
        self.inflow = inflow

    def history(self, d: date) -> float:
        return 0.0

    def start(self, params, rng):
        return None, None

    def draw(self, d: date, rng):
        return self.rainfall, self.inflow


class ReplaySource:
    """Replays a dataset by date. Days past its end reuse the latest year's
    record for the same calendar day."""

    def __init__(self, dataset: Dataset):
        self.dataset = dataset if isinstance(dataset, Dataset) else Dataset(list(dataset))
        if not len(self.dataset):
            raise ValueError("replay source needs at least one record")

    def history(self, d: date) -> float:
        r = self.dataset.get(d)
        return r.rainfall_mm if r is not None else 0.0

    def _start_dates(self, params):
        out = []
        for y in self.dataset.years():
            r = self.dataset.get(water_year_start(y, params))
            if r is not None:
                out.append(r)
        return out

    def start(self, params, rng):
        starts = self._start_dates(params)
        if not starts:
            return None, None
        return starts[0].date, starts[0].water_level_m

    def _lookup(self, d):
        r = self.dataset.get(d)
        if r is None:
            same = self.dataset.same_calendar_day(d)
            if not same:
                raise KeyError(f"no record for calendar day {d:%m-%d}")
            r = same[-1]
        return r

    def draw(self, d: date, rng):
        r = self._lookup(d)
        return r.rainfall_mm, r.inflow_bcm


class BootstrapSource(ReplaySource):
    """Each day draws a random historical year's record for the same calendar
    day; each episode starts at a random historical water-year start."""

    def start(self, params, rng):
        starts = self._start_dates(params)
        if not starts:
            return None, None
        r = starts[int(rng.integers(len(starts)))]
        return r.date, r.water_level_m

    def draw(self, d: date, rng):
        same = self.dataset.same_calendar_day(d)
        if not same:
            raise KeyError(f"no record for calendar day {d:%m-%d}")
        r = same[int(rng.integers(len(same)))]
        return r.rainfall_mm, r.inflow_bcm


# -- state and config ------------------------------------------------------------------

@dataclass(frozen=True)
class EnvState:
    """What the operator sees before choosing today's discharge.

    ``rainfall_window`` holds the previous K days, most recent first.
    ``inflow_forecast`` is the operator's estimate of today's inflow (BCM).
    """

    level: float
    rainfall_window: tuple
    day_index: int
    date: date
    level_window: tuple
    inflow_forecast: float = 0.0

    @property
    def h_max(self) -> float:
        return max(self.level_window)


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    reward: RewardBreakdown
    rainfall: float
    action: float
    inflow: float
    released: float
    spilled: float
    storage_before: float
    storage_after: float
    done: bool
    overflowed: bool
    inflow_variance: float = 0.0

    @property
    def mass_balance_residual(self) -> float:
        return (self.storage_after - self.storage_before) - (self.inflow - self.released - self.spilled)


@dataclass
class EpisodeConfig:
    """Everything needed to reproduce an episode.

    ``initial_level`` and ``start_date`` default to the source's historical
    water-year start, or to 60% of capacity on 1 June 2019 without data.
    With ``perfect_forecast`` the state's inflow forecast is the realised
    inflow rather than a persistence forecast.
    """

    params: SimParams = field(default_factory=SimParams)
    inflow: InflowSpec = field(default_factory=InflowSpec.replay)
    source: object = field(default_factory=ConstantSource)
    initial_level: float | None = None
    start_date: date | None = None
    seed: int = 0
    perfect_forecast: bool = False

    def __post_init__(self):
        if self.inflow.n_lags != self.params.rainfall_window:
            raise ValueError(
                f"inflow model uses {self.inflow.n_lags} rainfall days but the simulator "
                f"window is {self.params.rainfall_window}")
        if self.initial_level is not None:
            s = storage_from_level(self.params.curve, self.initial_level)
            if s < self.params.dam_base_water - 1e-12:
                raise ValueError("initial storage is below dam_base_water")


def default_initial_level(params: SimParams) -> float:
    curve = params.curve
    return level_from_storage(curve, 0.6 * curve.storage_cap)


class DamEnv:
    """Stateful simulator with ``reset`` / ``step``."""

    def __init__(self, config: EpisodeConfig):
        self.config = config
        self.params = config.params
        self.curve = config.params.curve
        self.rng = np.random.default_rng(config.seed)
        self._inflow = OnlineInflow(config.inflow)
        self.state = None

    def reset(self, seed: int | None = None) -> EnvState:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        cfg, p = self.config, self.params
        self._inflow.reset()
        start, level = cfg.source.start(p, self.rng)
        if cfg.start_date is not None:
            start = cfg.start_date
        if start is None:
            start = water_year_start(2019, p)
        if cfg.initial_level is not None:
            level = cfg.initial_level
        if level is None:
            level = default_initial_level(p)
        storage = storage_from_level(self.curve, level)
        if storage < p.dam_base_water - 1e-12:
            raise ValueError(f"initial level {level} holds less than dam_base_water")
        window = tuple(float(cfg.source.history(start - timedelta(days=k)))
                       for k in range(1, p.rainfall_window + 1))
        self.state = self._prepare(EnvState(float(level), window, 0, start, (float(level),)))
        return self.state

    def _prepare(self, state: EnvState) -> EnvState:
        """Draw the day's exogenous inputs and attach the operator's forecast."""
        persistence = self._inflow.persistence_forecast(state.rainfall_window)
        rf, observed = self.config.source.draw(state.date, self.rng)
        inflow, var = self._inflow(rf, state.rainfall_window, observed)
        self._pending = (float(rf), float(inflow), float(var))
        forecast = inflow if self.config.perfect_forecast else persistence
        return EnvState(state.level, state.rainfall_window, state.day_index, state.date,
                        state.level_window, float(forecast))

    def step(self, discharge: float) -> StepOutcome:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        discharge = float(discharge)
        if math.isnan(discharge):
            raise ValueError("discharge is NaN")
        p, state = self.params, self.state
        a = min(max(discharge, 0.0), p.a_max)
        rf, inflow, var = self._pending

        s = storage_from_level(self.curve, state.level)
        released = min(discharge_to_volume(a), max(s + inflow - p.dam_base_water, 0.0))
        s_next = s + inflow - released
        spilled = max(s_next - self.curve.storage_cap, 0.0)
        s_next -= spilled
        overflowed = spilled > 0
        h_next = level_from_storage(self.curve, s_next)
        if not math.isfinite(h_next):
            raise FloatingPointError("water level became non-finite")

        window = (rf,) + state.rainfall_window[:-1]
        levels = (state.level_window + (h_next,))[-p.flood_window:]
        reward = aggregate_reward(h_next, max(levels), is_dry_season(state.date, p),
                                  overflowed, p)
        done = state.day_index + 1 >= p.max_step
        nxt = EnvState(h_next, window, state.day_index + 1, state.date + timedelta(days=1),
                       levels)
        if not done:
            nxt = self._prepare(nxt)
        self.state = nxt
        return StepOutcome(nxt, reward, rf, a, inflow, released, spilled, s,
                           storage_from_level(self.curve, h_next), done, overflowed, var)


# -- episodes --------------------------------------------------------------------------

TRACE_COLUMNS = ("date", "level", "storage", "rainfall", "inflow", "action_cumecs",
                 "released", "spilled", "reward_total", "rice", "wheat", "hydro", "flood",
                 "dam_break", "mass_balance_residual")


@dataclass
class EpisodeTrace:
    start: EnvState
    outcomes: list
    discount: float

    @property
    def rewards(self) -> np.ndarray:
        return np.array([o.reward.total for o in self.outcomes])

    @property
    def undiscounted_return(self) -> float:
        return float(np.sum(self.rewards))

    @property
    def discounted_return(self) -> float:
        r = self.rewards
        return float(np.sum(self.discount ** np.arange(len(r)) * r))

    @property
    def spill_total(self) -> float:
        return float(sum(o.spilled for o in self.outcomes))

    @property
    def flood_days(self) -> int:
        return sum(1 for o in self.outcomes if o.overflowed)

    def rows(self):
        prev = self.start
        for o in self.outcomes:
            r = o.reward
            yield (prev.date.isoformat(), o.next_state.level, o.storage_after, o.rainfall,
                   o.inflow, o.action, o.released, o.spilled, r.total, r.rice, r.wheat,
                   r.hydro, r.flood, r.dam_break, o.mass_balance_residual)
            prev = o.next_state

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for row in self.rows():
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def run_episode(policy, config: EpisodeConfig | DamEnv, explore: bool = False) -> EpisodeTrace:
    """Reset, then step ``max_step`` days under ``policy``."""
    env = config if isinstance(config, DamEnv) else DamEnv(config)
    state = env.reset()
    policy.reset()
    start = state
    outcomes = []
    done = False
    while not done:
        out = env.step(policy.act(state, explore=explore))
        outcomes.append(out)
        state, done = out.next_state, out.done
    return EpisodeTrace(start, outcomes, env.params.discount)


def observation(state: EnvState, params: SimParams, rain_scale: float = 100.0) -> np.ndarray:
    """Normalised feature vector: level in [-1, 1] over the curve domain,
    scaled rainfall window, and the day of year as a sin/cos pair."""
    curve = params.curve
    lo, hi = curve.level_min, curve.level_max
    level = 2.0 * (state.level - lo) / (hi - lo) - 1.0
    doy = 2.0 * math.pi * (state.date.timetuple().tm_yday - 1) / 365.25
    return np.concatenate([[level], np.asarray(state.rainfall_window) / rain_scale,
                           [math.sin(doy), math.cos(doy)]])
