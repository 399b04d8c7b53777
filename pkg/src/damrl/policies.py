"""Reference release policies: the operators' ten-daily schedule plus
constant and random diagnostics.

A policy maps an environment state to a discharge in cumecs through
``act(state, explore=False)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .hydro import volume_to_discharge

# (start, end, discharge in cumecs); third period of each month runs to month end
BASELINE_TABLE = (
    ((11, 1), (11, 10), 73.1), ((11, 11), (11, 20), 68.6), ((11, 21), (11, 30), 64.1),
    ((12, 1), (12, 10), 59.6), ((12, 11), (12, 20), 55.1), ((12, 21), (12, 31), 48.5),
    ((1, 1), (1, 10), 41.8), ((1, 11), (1, 20), 35.2), ((1, 21), (1, 30), 33.6),
    ((2, 1), (2, 10), 31.9), ((2, 11), (2, 20), 30.3), ((2, 21), (2, 28), 29.2),
    ((3, 1), (3, 10), 28.1), ((3, 11), (3, 20), 27.0), ((3, 21), (3, 31), 23.8),
    ((4, 1), (4, 10), 20.5), ((4, 11), (4, 20), 17.3), ((4, 21), (4, 30), 16.1),
    ((5, 1), (5, 10), 14.9), ((5, 11), (5, 20), 13.7), ((5, 21), (5, 31), 12.5),
    ((6, 1), (6, 10), 11.3), ((6, 11), (6, 20), 57.6), ((6, 21), (6, 30), 104.0),
)

_SCHEDULE_START_MONTH = 11


def _key(month, day):
    return ((month - _SCHEDULE_START_MONTH) % 12, day)


class Policy:
    """Base class. Subclasses return discharges within ``[0, a_max]``."""

    a_max: float = 3000.0

    def act(self, state, explore: bool = False) -> float:
        raise NotImplementedError

    def reset(self) -> None:
        """Called at the start of every episode."""

    def _clip(self, a):
        return float(np.clip(a, 0.0, self.a_max))


@dataclass(frozen=True)
class ScheduleEntry:
    start: tuple
    end: tuple
    discharge: float

    @property
    def label(self):
        names = ["", "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep",
                 "Oct", "Nov", "Dec"]
        return f"{names[self.start[0]]} {self.start[1]:02d}-{self.end[1]:02d}"


def _validate_entries(entries):
    if not entries:
        raise ValueError("schedule is empty")
    for prev, cur in zip(entries, entries[1:]):
        if cur.start[0] == prev.end[0]:
            contiguous = cur.start[1] == prev.end[1] + 1
        else:
            # a month-end period absorbs 28/29/30/31
            contiguous = (cur.start[1] == 1 and prev.end[1] >= 28
                          and cur.start[0] == prev.end[0] % 12 + 1)
        if not contiguous:
            raise ValueError(f"schedule gap or overlap between {prev.label} and {cur.label}")
    for e in entries:
        if not e.discharge > 0:
            raise ValueError(f"schedule discharge for {e.label} must be positive")


class SchedulePolicy(Policy):
    """Ten-daily release schedule for the dry season; outside it, release the
    forecast inflow so the level holds steady."""

    def __init__(self, entries=None, a_max: float = 3000.0):
        if entries is None:
            entries = [ScheduleEntry(s, e, q) for s, e, q in BASELINE_TABLE]
        self.entries = tuple(entries)
        self.a_max = a_max
        _validate_entries(self.entries)
        self._starts = [_key(*e.start) for e in self.entries]
        last = self.entries[-1].end
        self._stop = _key(last[0], 31 if last[1] >= 28 else last[1])

    @property
    def discharges(self):
        return [e.discharge for e in self.entries]

    def covers(self, d: date) -> bool:
        k = _key(d.month, d.day)
        return self._starts[0] <= k <= self._stop

    def lookup_period(self, d: date) -> int:
        """Index of the schedule row containing ``d``."""
        if not self.covers(d):
            raise ValueError(f"{d} lies outside the release schedule")
        k = _key(d.month, d.day)
        idx = 0
        for i, start in enumerate(self._starts):
            if start <= k:
                idx = i
        return idx

    def baseline_act(self, d: date, inflow_estimate: float) -> float:
        if self.covers(d):
            return self._clip(self.entries[self.lookup_period(d)].discharge)
        return self._clip(volume_to_discharge(max(inflow_estimate, 0.0)))

    def act(self, state, explore: bool = False) -> float:
        return self.baseline_act(state.date, state.inflow_forecast)

    @classmethod
    def from_csv(cls, path, a_max: float = 3000.0) -> "SchedulePolicy":
        """Read ``period_start,period_end,discharge_cumecs`` rows with MM-DD dates."""
        entries = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"period_start", "period_end", "discharge_cumecs"} - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"schedule CSV lacks columns {sorted(missing)}")
            for row in reader:
                start = tuple(int(p) for p in row["period_start"].split("-"))
                end = tuple(int(p) for p in row["period_end"].split("-"))
                entries.append(ScheduleEntry(start, end, float(row["discharge_cumecs"])))
        return cls(entries, a_max)

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["period_start", "period_end", "discharge_cumecs"])
            for e in self.entries:
                w.writerow([f"{e.start[0]:02d}-{e.start[1]:02d}",
                            f"{e.end[0]:02d}-{e.end[1]:02d}", e.discharge])


def lookup_period(d: date) -> int:
    return SchedulePolicy().lookup_period(d)


def baseline_act(state, inflow_estimate: float, a_max: float = 3000.0) -> float:
    return SchedulePolicy(a_max=a_max).baseline_act(state.date, inflow_estimate)


class ConstantPolicy(Policy):
    def __init__(self, discharge: float, a_max: float = 3000.0):
        if not 0 <= discharge <= a_max:
            raise ValueError(f"constant discharge {discharge} outside [0, {a_max}]")
        self.discharge = float(discharge)
        self.a_max = a_max

    def act(self, state, explore: bool = False) -> float:
        return self.discharge


class RandomPolicy(Policy):
    """Uniform discharges in ``bounds``; the generator restarts on ``reset``."""

    def __init__(self, seed: int = 0, bounds=(0.0, 3000.0)):
        low, high = bounds
        if not 0 <= low <= high:
            raise ValueError(f"invalid bounds {bounds}")
        self.seed = seed
        self.bounds = (float(low), float(high))
        self.a_max = float(high)
        self.reset()

    def reset(self) -> None:
        self._rng = np.random.default_rng(self.seed)

    def act(self, state, explore: bool = False) -> float:
        return float(self._rng.uniform(*self.bounds))


def constant_policy(c: float, a_max: float = 3000.0) -> ConstantPolicy:
    return ConstantPolicy(c, a_max)


def random_policy(seed: int, bounds=(0.0, 3000.0)) -> RandomPolicy:
    return RandomPolicy(seed, bounds)
