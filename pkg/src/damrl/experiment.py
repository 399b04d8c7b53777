"""Wiring between datasets, inflow models, simulators and learners.

Training simulators bootstrap rainfall from the training years and drive
inflow with a fitted model; the test simulator replays the held-out year.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources

from .data import Dataset, SyntheticConfig, derive_inflow, series, split_by_year, synthesize
from .env import BootstrapSource, EpisodeConfig, ReplaySource
from .hydro import SimParams, read_config, read_config_text
from .inflow import DLMInflowModel, GLSInflowModel, InflowModelKind, InflowSpec
from .rl.learners import ActorCriticLearner


def fit_inflow_model(kind, records, n_lags=7, **kwargs):
    """Fit the estimator for ``kind`` on ``records`` and return it."""
    kind = InflowModelKind.parse(kind)
    rain, flow = series(records, "rainfall_mm"), series(records, "inflow_bcm")
    dates = [r.date for r in records]
    if kind is InflowModelKind.GLS:
        return GLSInflowModel(n_lags=n_lags, **kwargs).fit(rain, flow)
    if kind is InflowModelKind.REPLAY:
        raise ValueError("REPLAY has nothing to fit")
    est = DLMInflowModel(n_lags=n_lags, use_gls=kind is InflowModelKind.GLS_PLUS_DLM, **kwargs)
    return est.fit(rain, flow, dates=dates)


def prepare_records(records, params):
    if any(r.inflow_bcm is None for r in records):
        records = derive_inflow(records, params)
    return records


def train_config(records, params: SimParams, inflow: InflowSpec, seed=0) -> EpisodeConfig:
    """Simulator over bootstrapped training-year rainfall."""
    return EpisodeConfig(params=params, inflow=inflow, source=BootstrapSource(Dataset(records)),
                         seed=seed)


def evaluation_config(records, params: SimParams, seed=0, start_date=None) -> EpisodeConfig:
    """Simulator replaying the held-out year's rainfall and inflow."""
    return EpisodeConfig(params=params, inflow=InflowSpec.replay(params.rainfall_window),
                         source=ReplaySource(Dataset(records)), seed=seed, start_date=start_date)


# -- benchmark configuration ---------------------------------------------------------------

_LEARNER_KEYS = {p for p in ActorCriticLearner().get_params()}
_SYNTH_KEYS = {f.name for f in dataclasses.fields(SyntheticConfig)}
_SIM_KEYS = {f.name for f in dataclasses.fields(SimParams)}


def _coerce(text):
    text = text.strip()
    if "," in text:
        return tuple(_coerce(p) for p in text.split(",") if p.strip())
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


@dataclass
class RunConfig:
    """Flat settings for a CLI run, split by the component they configure.

    Keys prefixed ``synthetic.`` go to :class:`SyntheticConfig`, ``learner.``
    to :class:`ActorCriticLearner`; bare simulator keys go to
    :class:`SimParams`; everything else stays in ``extra``.
    """

    params: SimParams = field(default_factory=SimParams)
    synthetic: dict = field(default_factory=dict)
    learner: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, mapping) -> "RunConfig":
        sim, synth, learner, extra = {}, {}, {}, {}
        for key, value in mapping.items():
            if key.startswith("synthetic."):
                name = key.split(".", 1)[1]
                if name not in _SYNTH_KEYS:
                    raise KeyError(f"unknown synthetic setting {name!r}")
                synth[name] = _coerce(value)
            elif key.startswith("learner."):
                name = key.split(".", 1)[1]
                if name not in _LEARNER_KEYS:
                    raise KeyError(f"unknown learner setting {name!r}")
                learner[name] = _coerce(value)
            elif key in _SIM_KEYS:
                sim[key] = value
            else:
                extra[key] = _coerce(value)
        return cls(SimParams.from_mapping(sim), synth, learner, extra)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_mapping(read_config(path))

    def synthetic_config(self, seed=None) -> SyntheticConfig:
        kwargs = dict(self.synthetic)
        if seed is not None and "seed" not in kwargs:
            kwargs["seed"] = seed
        return SyntheticConfig(**kwargs)

    def learner_for(self, algorithm, **overrides) -> ActorCriticLearner:
        return ActorCriticLearner(**{**self.learner, "algorithm": algorithm, **overrides})

    def snapshot(self) -> dict:
        out = dict(self.params.to_mapping())
        out.update({f"synthetic.{k}": v for k, v in self.synthetic.items()})
        out.update({f"learner.{k}": v for k, v in self.learner.items()})
        out.update(self.extra)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in out.items()}


def benchmark_config() -> RunConfig:
    """The shipped synthetic benchmark settings."""
    text = resources.files("damrl").joinpath("benchmark.cfg").read_text()
    return RunConfig.from_mapping(read_config_text(text))


def benchmark_records(run: RunConfig):
    return synthesize(run.synthetic_config(), run.params)


def split_records(records, train_end, test_year):
    return split_by_year(records, train_end, test_year)
