from datetime import date
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from damrl.hydro import discharge_to_volume
from damrl.policies import (
    BASELINE_TABLE,
    ConstantPolicy,
    RandomPolicy,
    ScheduleEntry,
    SchedulePolicy,
    baseline_act,
    constant_policy,
    lookup_period,
    random_policy,
)

PUBLISHED = [73.1, 68.6, 64.1, 59.6, 55.1, 48.5, 41.8, 35.2, 33.6, 31.9, 30.3, 29.2,
             28.1, 27.0, 23.8, 20.5, 17.3, 16.1, 14.9, 13.7, 12.5, 11.3, 57.6, 104.0]


def _state(d, forecast=0.0):
    return SimpleNamespace(date=d, inflow_forecast=forecast)


def test_schedule_matches_published_values():
    assert SchedulePolicy().discharges == PUBLISHED
    assert len(BASELINE_TABLE) == 24


@pytest.mark.parametrize("d, idx", [
    (date(2019, 11, 1), 0), (date(2019, 11, 10), 0), (date(2019, 11, 11), 1),
    (date(2019, 12, 31), 5), (date(2020, 1, 30), 8), (date(2020, 1, 31), 8),
    (date(2019, 2, 28), 11), (date(2020, 2, 29), 11), (date(2020, 3, 31), 14),
    (date(2020, 6, 1), 21), (date(2020, 6, 30), 23),
])
def test_lookup_period_edges(d, idx):
    assert lookup_period(d) == idx


@pytest.mark.parametrize("d", [date(2019, 7, 1), date(2019, 10, 31), date(2019, 8, 15)])
def test_lookup_period_outside_schedule(d):
    with pytest.raises(ValueError):
        lookup_period(d)
    assert not SchedulePolicy().covers(d)


def test_baseline_act_in_schedule_ignores_forecast():
    assert baseline_act(_state(date(2019, 11, 5)), 99.0) == 73.1
    assert SchedulePolicy().act(_state(date(2020, 6, 25), 5.0)) == 104.0


def test_baseline_act_holds_level_outside_schedule():
    inflow = 0.05
    a = baseline_act(_state(date(2019, 8, 10)), inflow)
    assert discharge_to_volume(a) == pytest.approx(inflow, rel=1e-12)


def test_baseline_act_clips_large_inflow():
    assert baseline_act(_state(date(2019, 8, 10)), 10.0) == 3000.0
    assert baseline_act(_state(date(2019, 8, 10)), -1.0) == 0.0


@given(st.dates(min_value=date(2000, 1, 1), max_value=date(2030, 12, 31)),
       st.floats(0, 1))
def test_schedule_actions_within_bounds(d, inflow):
    a = SchedulePolicy().act(_state(d, inflow))
    assert 0.0 <= a <= 3000.0


def test_schedule_csv_roundtrip(tmp_path):
    path = tmp_path / "s.csv"
    SchedulePolicy().to_csv(path)
    text = path.read_text().splitlines()
    assert text[0] == "period_start,period_end,discharge_cumecs"
    assert text[1] == "11-01,11-10,73.1"
    back = SchedulePolicy.from_csv(path)
    assert back.entries == SchedulePolicy().entries


def test_schedule_validation():
    with pytest.raises(ValueError, match="gap"):
        SchedulePolicy([ScheduleEntry((11, 1), (11, 10), 5.0), ScheduleEntry((11, 12), (11, 20), 5.0)])
    with pytest.raises(ValueError, match="positive"):
        SchedulePolicy([ScheduleEntry((11, 1), (11, 10), 0.0)])
    with pytest.raises(ValueError):
        SchedulePolicy([])


def test_constant_policy():
    p = constant_policy(250.0)
    assert p.act(_state(date(2019, 1, 1))) == 250.0
    with pytest.raises(ValueError):
        ConstantPolicy(-1.0)
    with pytest.raises(ValueError):
        ConstantPolicy(3001.0)


def test_random_policy_reproducible_and_bounded():
    p = random_policy(3, (10.0, 20.0))
    first = [p.act(None) for _ in range(50)]
    p.reset()
    assert [p.act(None) for _ in range(50)] == first
    assert all(10.0 <= a <= 20.0 for a in first)
    assert first != [RandomPolicy(4, (10.0, 20.0)).act(None) for _ in range(50)]
    with pytest.raises(ValueError):
        RandomPolicy(0, (5.0, 1.0))
    assert np.std(first) > 0
