from datetime import date

import numpy as np
import pytest

from damrl.data import (
    DailyRecord,
    Dataset,
    SyntheticConfig,
    load_csv,
    resolve_data_path,
    series,
    split_by_year,
    synthesize,
    write_csv,
)
from damrl.exceptions import DataFormatError
from damrl.hydro import SimParams

HEADER = "date,rainfall_mm,water_level_m,inflow_bcm\n"


def _write(tmp_path, body, header=HEADER):
    path = tmp_path / "d.csv"
    path.write_text(header + body)
    return path


def test_load_well_formed(tmp_path):
    path = _write(tmp_path, "2019-06-01,0.0,340.1,0.01\n2019-06-02,12.5,340.2,0.02\n"
                            "2019-06-03,3.0,340.3,0.0\n")
    recs = load_csv(path)
    assert len(recs) == 3
    assert recs[1] == DailyRecord(date(2019, 6, 2), 12.5, 340.2, 0.02)


def test_load_rainfall_only(tmp_path):
    recs = load_csv(_write(tmp_path, "2019-06-01,1.0,,\n2019-06-02,0.0,,\n"))
    assert all(r.water_level_m is None and r.inflow_bcm is None for r in recs)
    assert np.isnan(series(recs, "water_level_m")).all()


@pytest.mark.parametrize("body, line, match", [
    ("2019-06-01,1,,\n2019-06-01,2,,\n", 3, "duplicate"),
    ("2019-06-02,1,,\n2019-06-01,2,,\n", 3, "regression"),
    ("2019-06-01,-1,,\n", 2, "negative rainfall"),
    ("2019-06-01,1,,-0.5\n", 2, "negative inflow"),
    ("2019-06-01,1,,\n2019-13-01,1,,\n", 3, "bad date"),
    ("2019-06-01,1,,\n2019-06-03,1,,\n", 3, "gap"),
    ("2019-06-01,1,\n", 2, "fields"),
    ("2019-06-01,abc,,\n", 2, "not a number"),
    ("2019-06-01,,,\n", 2, "required"),
])
def test_load_errors_name_line(tmp_path, body, line, match):
    with pytest.raises(DataFormatError, match=match) as exc:
        load_csv(_write(tmp_path, body))
    assert exc.value.lineno == line
    assert str(exc.value).startswith(f"line {line}:")


def test_load_bad_header(tmp_path):
    with pytest.raises(DataFormatError, match="header"):
        load_csv(_write(tmp_path, "2019-06-01,1,,\n", header="day,rain\n"))


def test_roundtrip_is_textually_exact(tmp_path):
    recs = synthesize(SyntheticConfig(seed=4, years=1))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(a, recs)
    loaded = load_csv(a)
    assert loaded == recs
    write_csv(b, loaded)
    assert a.read_bytes() == b.read_bytes()


def test_resolve_data_path_env_fallback(tmp_path, monkeypatch):
    (tmp_path / "x.csv").write_text(HEADER)
    monkeypatch.setenv("REPO_DATA_DIR", str(tmp_path))
    assert resolve_data_path("x.csv") == tmp_path / "x.csv"
    assert load_csv("x.csv") == []


def test_split_by_year():
    recs = synthesize(SyntheticConfig(years=8))
    train, test = split_by_year(recs, 2018, 2019)
    assert train[-1].date == date(2018, 12, 31)
    assert test[0].date == date(2019, 1, 1) and test[-1].date == date(2019, 12, 31)
    assert len(train) + len(test) == len(recs)
    with pytest.raises(ValueError):
        split_by_year(recs, 2019, 2019)
    with pytest.raises(ValueError):
        split_by_year(recs, 2018, 2020)


def test_synthesize_deterministic():
    a = synthesize(SyntheticConfig(seed=9, years=2))
    b = synthesize(SyntheticConfig(seed=9, years=2))
    c = synthesize(SyntheticConfig(seed=10, years=2))
    assert a == b
    assert a != c


def test_zero_intensity_gives_no_water():
    recs = synthesize(SyntheticConfig(intensity=0.0, years=1))
    assert all(r.rainfall_mm == 0.0 and r.inflow_bcm == 0.0 for r in recs)


def test_rainfall_concentrated_in_monsoon():
    cfg = SyntheticConfig(seed=1, years=10)
    recs = synthesize(cfg)
    rain = series(recs, "rainfall_mm")
    monsoon = np.array([r.date.month in cfg.monsoon_months for r in recs])
    assert rain[monsoon].sum() / rain.sum() >= 0.8


def test_synthetic_inflow_non_negative_and_dry_stretches():
    cfg = SyntheticConfig(seed=2, years=3, drift_sd=0.05)
    recs = synthesize(cfg)
    rain, flow = series(recs, "rainfall_mm"), series(recs, "inflow_bcm")
    assert (flow >= 0).all()
    memory = len(cfg.kernel)
    checked = 0
    for t in range(memory, len(rain)):
        if not rain[t - memory + 1:t + 1].any():
            assert flow[t] == 0.0
            checked += 1
    assert checked > 100


def test_synthetic_levels_within_dam():
    p = SimParams()
    recs = synthesize(SyntheticConfig(seed=0, runoff_coefficient=0.25, base_level=340.0), p)
    levels = series(recs, "water_level_m")
    assert levels.max() <= p.dam_cap + 1e-6
    assert levels.min() > p.curve.level_min


def test_synthetic_config_validation():
    for bad in ({"years": 0}, {"runoff_coefficient": 1.5}, {"noise_rho": 1.0},
                {"wet_prob": (0.5,) * 11}, {"kernel": (-1.0,)}):
        with pytest.raises(ValueError):
            SyntheticConfig(**bad)


def test_dataset_same_calendar_day_leap_fallback():
    recs = synthesize(SyntheticConfig(years=3, start_year=2019))
    ds = Dataset(recs)
    same = ds.same_calendar_day(date(2024, 2, 29))
    assert [r.date for r in same] == [date(2019, 2, 28), date(2020, 2, 29), date(2021, 2, 28)]
