"""Upstream inflow models: GLS with AR(1) errors, a discount-factor dynamic
linear model filtered by Kalman recursions, their combination, and replay.

Every model regresses daily inflow (BCM/day) on a design vector
``[1, rf_today, rf_1, ..., rf_{K-1}]`` of rainfall in mm, optionally
extended by the GLS prediction for the same day.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegenerateForecastError, RankDeficientError, UndefinedNSEError
from .validation import check_design, check_series, check_series_pair


class InflowModelKind(str, enum.Enum):
    GLS = "GLS"
    DLM = "DLM"
    GLS_PLUS_DLM = "GLS_PLUS_DLM"
    REPLAY = "REPLAY"

    @classmethod
    def parse(cls, value) -> "InflowModelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("+", "_PLUS_").replace("-", "_")
        aliases = {"GLS_DLM": "GLS_PLUS_DLM", "DLM_GLS": "GLS_PLUS_DLM",
                   "DLM_PLUS_GLS": "GLS_PLUS_DLM", "REAL": "REPLAY"}
        return cls(aliases.get(key, key))


# -- design vectors ---------------------------------------------------------

def design_matrix(rainfall, n_lags: int, gls_prediction=None) -> np.ndarray:
    """Stack one design row per day; rainfall before the series start counts as zero."""
    rf = np.asarray(rainfall, dtype=float)
    n = rf.shape[0]
    cols = [np.ones(n)]
    for lag in range(n_lags):
        shifted = np.zeros(n)
        shifted[lag:] = rf[:n - lag] if lag else rf
        cols.append(shifted)
    if gls_prediction is not None:
        cols.append(np.asarray(gls_prediction, dtype=float))
    return np.column_stack(cols)


def design_vector(rf_today: float, window: Sequence[float], gls_prediction=None) -> np.ndarray:
    """Design vector for one day given today's rainfall and the previous-days
    window (most recent first). Its length is ``1 + len(window)``."""
    window = np.asarray(window, dtype=float)
    parts = [[1.0, float(rf_today)], window[:-1]]
    if gls_prediction is not None:
        parts.append([float(gls_prediction)])
    return np.concatenate(parts)


# -- GLS ----------------------------------------------------------------------

@dataclass(frozen=True)
class GlsModel:
    coefficients: np.ndarray
    rho: float
    sigma2: float
    n_lags: int
    n_iter: int = 0

    def to_dict(self) -> dict:
        return {"kind": "GLS", "n_lags": self.n_lags,
                "coefficients": [float(c) for c in self.coefficients],
                "rho": float(self.rho), "sigma2": float(self.sigma2), "n_iter": self.n_iter}

    @classmethod
    def from_dict(cls, d: dict) -> "GlsModel":
        return cls(np.asarray(d["coefficients"], dtype=float), float(d["rho"]),
                   float(d["sigma2"]), int(d["n_lags"]), int(d.get("n_iter", 0)))


def _ols(X, y):
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficientError(
            f"design matrix of shape {X.shape} has rank {np.linalg.matrix_rank(X)}")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return beta


def _lag1_autocorrelation(e, scale):
    prev = e[:-1]
    denom = prev @ prev
    # an exact fit leaves only round-off in the residuals
    if np.sqrt(denom / max(len(prev), 1)) <= 1e-10 * scale:
        return 0.0
    return float(np.clip((prev @ e[1:]) / denom, -0.999, 0.999))


def fit_gls(rainfall, inflow, n_lags: int = 7, max_iter: int = 50, tol: float = 1e-6) -> GlsModel:
    """Feasible GLS with AR(1) residuals by iterated Cochrane-Orcutt.

    OLS gives starting residuals; each round estimates ``rho`` from their
    lag-1 autocorrelation, quasi-differences the data and refits, until
    ``rho`` moves by less than ``tol``.
    """
    rainfall, inflow = check_series_pair(rainfall, inflow)
    n = len(inflow)
    if n - (n_lags - 1) < 10 * (n_lags + 1):
        raise ValueError(
            f"need at least {10 * (n_lags + 1) + n_lags - 1} days to fit GLS with "
            f"{n_lags} rainfall terms, got {n}")
    X = design_matrix(rainfall, n_lags)[n_lags - 1:]
    y = inflow[n_lags - 1:]
    scale = float(np.sqrt(np.mean(y ** 2))) + 1e-300

    beta = _ols(X, y)
    rho = _lag1_autocorrelation(y - X @ beta, scale)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        beta = _ols(X[1:] - rho * X[:-1], y[1:] - rho * y[:-1])
        new_rho = _lag1_autocorrelation(y - X @ beta, scale)
        converged = abs(new_rho - rho) < tol
        rho = new_rho
        if converged:
            break
    e = y - X @ beta
    innovations = e[1:] - rho * e[:-1]
    sigma2 = max(float(np.mean(innovations ** 2)), 1e-30)
    return GlsModel(beta, rho, sigma2, n_lags, n_iter)


def gls_predict(model: GlsModel, x) -> float | np.ndarray:
    """Mean inflow for design vector(s) ``x``, floored at zero."""
    x = check_design(x, len(model.coefficients))
    return np.maximum(x @ model.coefficients, 0.0) if x.ndim == 2 else max(float(x @ model.coefficients), 0.0)


# -- DLM ----------------------------------------------------------------------

@dataclass(frozen=True)
class DlmModel:
    """Posterior of a dynamic regression: coefficient mean ``m`` and covariance ``C``,
    observation variance ``V`` and evolution discount ``delta``."""

    mean: np.ndarray
    covariance: np.ndarray
    obs_variance: float
    discount: float

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def to_dict(self) -> dict:
        return {"dim": self.dim, "mean": [float(v) for v in self.mean],
                "covariance": [float(v) for v in self.covariance.ravel()],
                "obs_variance": float(self.obs_variance), "discount": float(self.discount)}

    @classmethod
    def from_dict(cls, d: dict) -> "DlmModel":
        dim = int(d["dim"])
        return cls(np.asarray(d["mean"], dtype=float),
                   np.asarray(d["covariance"], dtype=float).reshape(dim, dim),
                   float(d["obs_variance"]), float(d["discount"]))


def dlm_init(dim: int, prior_mean=None, prior_scale: float = 1.0, obs_variance: float = 1.0,
             discount: float = 0.98) -> DlmModel:
    if dim < 1:
        raise ValueError("dim must be at least 1")
    if not prior_scale > 0:
        raise ValueError("prior_scale must be positive")
    if not 0 < discount <= 1:
        raise ValueError(f"discount must lie in (0, 1], got {discount}")
    if not obs_variance >= 0:
        raise ValueError("obs_variance must be non-negative")
    mean = np.zeros(dim) if prior_mean is None else np.asarray(prior_mean, dtype=float).copy()
    if mean.shape != (dim,):
        raise ValueError(f"prior_mean must have length {dim}")
    return DlmModel(mean, prior_scale * np.eye(dim), float(obs_variance), float(discount))


def _prior(model: DlmModel, x):
    x = check_design(x, model.dim)
    if x.ndim != 1:
        raise ValueError("DLM steps take a single design vector")
    R = model.covariance / model.discount
    return x, R, float(x @ model.mean), float(x @ R @ x) + model.obs_variance


def dlm_forecast(model: DlmModel, x) -> tuple:
    """One-step forecast ``(mean, variance)`` with ``R = C / delta``."""
    _, _, f, q = _prior(model, x)
    return f, q


def dlm_update(model: DlmModel, x, y: float) -> DlmModel:
    """Kalman update of the coefficient posterior after observing ``y`` at ``x``."""
    if not np.isfinite(y):
        raise ValueError(f"observation must be finite, got {y}")
    x, R, f, q = _prior(model, x)
    if not q > 0:
        raise DegenerateForecastError(f"forecast variance {q} is not positive")
    A = R @ x / q
    mean = model.mean + A * (y - f)
    C = R - np.outer(A, A) * q
    return DlmModel(mean, 0.5 * (C + C.T), model.obs_variance, model.discount)


def warmup_obs_variance(inflow, warmup: int = 60, floor: float = 1e-10) -> float:
    """Variance of first-differenced inflow over the first ``warmup`` days."""
    head = np.asarray(inflow, dtype=float)[:warmup + 1]
    if head.shape[0] < 3:
        return floor
    return max(float(np.var(np.diff(head))), floor)


# -- records and NSE -------------------------------------------------------------

@dataclass(frozen=True)
class ForecastRecord:
    date: object
    observed: float
    predicted: float
    variance: float


def nash_sutcliffe(observed, predicted) -> float:
    obs = np.asarray(observed, dtype=float)
    pred = np.asarray(predicted, dtype=float)
    if obs.shape != pred.shape or obs.ndim != 1:
        raise ValueError("observed and predicted must be 1-D arrays of equal length")
    if obs.shape[0] < 2:
        raise UndefinedNSEError("NSE needs at least two observations")
    sst = np.sum((obs - obs.mean()) ** 2)
    if sst == 0:
        raise UndefinedNSEError("observed series has zero variance")
    return float(1.0 - np.sum((obs - pred) ** 2) / sst)


def nse(records: Sequence[ForecastRecord]) -> float:
    """Nash-Sutcliffe efficiency of a list of one-step forecasts."""
    return nash_sutcliffe([r.observed for r in records], [r.predicted for r in records])


def write_records_csv(path, records: Sequence[ForecastRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "observed", "predicted", "variance"])
        for r in records:
            date = r.date.isoformat() if hasattr(r.date, "isoformat") else r.date
            w.writerow([date, f"{r.observed:.9g}", f"{r.predicted:.9g}", f"{r.variance:.9g}"])


# -- sequential filtering ------------------------------------------------------------

def _default_dates(n, dates):
    return list(range(n)) if dates is None else list(dates)


def run_dlm(model: DlmModel, X, inflow, dates=None):
    """Forecast-then-update over every row of ``X``. Returns (final model, records)."""
    dates = _default_dates(len(inflow), dates)
    records = []
    for t, (x, y) in enumerate(zip(X, inflow)):
        f, q = dlm_forecast(model, x)
        records.append(ForecastRecord(dates[t], float(y), max(f, 0.0), q))
        model = dlm_update(model, x, float(y))
    return model, records


def filter_series(kind, rainfall, inflow, n_lags: int = 7, *, dates=None, model=None,
                  gls_model: GlsModel | None = None, discount: float = 0.98,
                  prior_scale: float = 1.0, obs_variance: float | None = None,
                  warmup: int = 60) -> list:
    """One-step-ahead forecasts of ``inflow`` from ``rainfall``.

    ``model`` continues from an existing fit (a ``GlsModel`` for GLS, a
    ``DlmModel`` for the DLM kinds); otherwise the model is fitted or
    initialised on this very series.
    """
    kind = InflowModelKind.parse(kind)
    rainfall, inflow = check_series_pair(rainfall, inflow)
    dates = _default_dates(len(inflow), dates)
    if kind is InflowModelKind.REPLAY:
        return [ForecastRecord(d, float(y), float(y), 0.0) for d, y in zip(dates, inflow)]
    if kind is InflowModelKind.GLS:
        gls = model if model is not None else fit_gls(rainfall, inflow, n_lags)
        pred = gls_predict(gls, design_matrix(rainfall, gls.n_lags))
        return [ForecastRecord(d, float(y), float(p), gls.sigma2 / (1 - gls.rho ** 2))
                for d, y, p in zip(dates, inflow, pred)]

    extra = None
    if kind is InflowModelKind.GLS_PLUS_DLM:
        gls = gls_model if gls_model is not None else fit_gls(rainfall, inflow, n_lags)
        extra = gls_predict(gls, design_matrix(rainfall, n_lags))
    X = design_matrix(rainfall, n_lags, extra)
    if model is None:
        v = warmup_obs_variance(inflow, warmup) if obs_variance is None else obs_variance
        model = dlm_init(X.shape[1], prior_scale=prior_scale, obs_variance=v, discount=discount)
    return run_dlm(model, X, inflow, dates)[1]


# -- estimators ----------------------------------------------------------------------

def _with_history(rain, history):
    if history is None or len(history) == 0:
        return rain
    return np.concatenate([check_series(history), rain])


class GLSInflowModel(BaseEstimator, RegressorMixin):
    """Static rainfall-to-inflow regression with AR(1) errors.

    ``X`` is the daily rainfall series (mm), ``y`` the daily inflow (BCM).
    """

    kind = InflowModelKind.GLS

    def __init__(self, n_lags=7, max_iter=50, tol=1e-6):
        self.n_lags = n_lags
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        self.model_ = fit_gls(X, y, self.n_lags, self.max_iter, self.tol)
        self.coef_ = self.model_.coefficients
        self.rho_ = self.model_.rho
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        rain, _ = check_series_pair(X, None)
        return gls_predict(self.model_, design_matrix(rain, self.n_lags))

    def forecast_records(self, X, y, dates=None, history=None):
        """One-step forecasts for ``X``; ``history`` is rainfall preceding ``X`` that
        fills the lags instead of zeros."""
        check_is_fitted(self, "model_")
        rain, inflow = check_series_pair(X, y)
        full = _with_history(rain, history)
        pred = gls_predict(self.model_, design_matrix(full, self.n_lags))[len(full) - len(rain):]
        dates = _default_dates(len(rain), dates)
        var = self.model_.sigma2 / (1 - self.model_.rho ** 2)
        return [ForecastRecord(d, float(o), float(p), float(var))
                for d, o, p in zip(dates, inflow, np.atleast_1d(pred))]

    def to_dict(self):
        check_is_fitted(self, "model_")
        return self.model_.to_dict()


class DLMInflowModel(BaseEstimator, RegressorMixin):
    """Dynamic regression of inflow on rainfall with drifting coefficients.

    ``fit`` filters the whole training series; the final posterior is the
    starting point for later forecasting. With ``use_gls=True`` a GLS model is
    fitted first and its prediction becomes one more regressor.
    """

    def __init__(self, n_lags=7, discount=0.98, prior_scale=1.0, obs_variance=None,
                 warmup=60, use_gls=False):
        self.n_lags = n_lags
        self.discount = discount
        self.prior_scale = prior_scale
        self.obs_variance = obs_variance
        self.warmup = warmup
        self.use_gls = use_gls

    @property
    def kind(self):
        return InflowModelKind.GLS_PLUS_DLM if self.use_gls else InflowModelKind.DLM

    def _design(self, rain):
        extra = None
        if self.gls_model_ is not None:
            extra = gls_predict(self.gls_model_, design_matrix(rain, self.n_lags))
        return design_matrix(rain, self.n_lags, extra)

    def fit(self, X, y, dates=None):
        rain, inflow = check_series_pair(X, y)
        self.gls_model_ = fit_gls(rain, inflow, self.n_lags) if self.use_gls else None
        design = self._design(rain)
        v = (warmup_obs_variance(inflow, self.warmup) if self.obs_variance is None
             else self.obs_variance)
        self.initial_model_ = dlm_init(design.shape[1], prior_scale=self.prior_scale,
                                       obs_variance=v, discount=self.discount)
        self.model_, self.records_ = run_dlm(self.initial_model_, design, inflow, dates)
        return self

    def forecast_records(self, X, y, dates=None, history=None):
        """Continue forecast-then-update filtering from the fitted posterior.
        ``history`` is rainfall preceding ``X`` that fills the lags."""
        check_is_fitted(self, "model_")
        rain, inflow = check_series_pair(X, y)
        full = _with_history(rain, history)
        design = self._design(full)[len(full) - len(rain):]
        return run_dlm(self.model_, design, inflow, dates)[1]

    def predict(self, X):
        """Forecast means from the fitted posterior with the coefficients frozen."""
        check_is_fitted(self, "model_")
        rain, _ = check_series_pair(X, None)
        return np.maximum(self._design(rain) @ self.model_.mean, 0.0)

    def to_dict(self):
        check_is_fitted(self, "model_")
        d = {"kind": self.kind.value, "n_lags": self.n_lags, **self.model_.to_dict()}
        if self.gls_model_ is not None:
            d["gls"] = self.gls_model_.to_dict()
        return d


@dataclass(frozen=True)
class InflowSpec:
    """A fitted inflow model ready to drive the simulator."""

    kind: InflowModelKind
    n_lags: int
    gls: GlsModel | None = None
    dlm: DlmModel | None = None

    @classmethod
    def from_estimator(cls, est) -> "InflowSpec":
        return cls.from_dict(est.to_dict())

    @classmethod
    def replay(cls, n_lags: int = 7) -> "InflowSpec":
        return cls(InflowModelKind.REPLAY, n_lags)

    def to_dict(self) -> dict:
        if self.kind is InflowModelKind.REPLAY:
            return {"kind": "REPLAY", "n_lags": self.n_lags}
        if self.kind is InflowModelKind.GLS:
            return self.gls.to_dict()
        d = {"kind": self.kind.value, "n_lags": self.n_lags, **self.dlm.to_dict()}
        if self.gls is not None:
            d["gls"] = self.gls.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InflowSpec":
        kind = InflowModelKind.parse(d["kind"])
        n_lags = int(d["n_lags"])
        if kind is InflowModelKind.REPLAY:
            return cls(kind, n_lags)
        if kind is InflowModelKind.GLS:
            return cls(kind, n_lags, gls=GlsModel.from_dict(d))
        gls = GlsModel.from_dict(d["gls"]) if "gls" in d else None
        if kind is InflowModelKind.GLS_PLUS_DLM and gls is None:
            raise ValueError("GLS_PLUS_DLM model document lacks its 'gls' block")
        return cls(kind, n_lags, gls=gls, dlm=DlmModel.from_dict(d))


def save_model(path, model) -> None:
    """Write a fitted estimator or ``InflowSpec`` as a JSON document."""
    Path(path).write_text(json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n")


def load_model(path) -> InflowSpec:
    return InflowSpec.from_dict(json.loads(Path(path).read_text()))


class OnlineInflow:
    """Per-episode inflow generator used inside the simulator.

    DLM kinds forecast with the current posterior and, when the rainfall
    source also reports an observed inflow for the day, update on it.
    """

    def __init__(self, spec: InflowSpec):
        self.spec = spec
        self.reset()

    def reset(self):
        self._dlm = self.spec.dlm
        self._last_observed = 0.0

    def _x(self, rf_today, window):
        extra = None
        if self.spec.gls is not None and self.spec.kind is InflowModelKind.GLS_PLUS_DLM:
            extra = gls_predict(self.spec.gls, design_vector(rf_today, window))
        return design_vector(rf_today, window, extra)

    def __call__(self, rf_today, window, observed=None) -> tuple:
        """Inflow for the day as ``(volume, forecast variance)``."""
        kind = self.spec.kind
        if kind is InflowModelKind.REPLAY:
            if observed is None:
                raise ValueError("REPLAY inflow needs a rainfall source with observed inflow")
            self._last_observed = float(observed)
            return max(float(observed), 0.0), 0.0
        if kind is InflowModelKind.GLS:
            g = self.spec.gls
            return gls_predict(g, design_vector(rf_today, window)), g.sigma2 / (1 - g.rho ** 2)
        x = self._x(rf_today, window)
        f, q = dlm_forecast(self._dlm, x)
        if observed is not None:
            self._dlm = dlm_update(self._dlm, x, float(observed))
        return max(f, 0.0), q

    def persistence_forecast(self, window) -> float:
        """Forecast for a day whose rainfall is not yet known: assume it repeats
        yesterday's (replay repeats yesterday's observed inflow)."""
        if self.spec.kind is InflowModelKind.REPLAY:
            return self._last_observed
        window = np.asarray(window, dtype=float)
        rf_today = window[0] if window.size else 0.0
        if self.spec.kind is InflowModelKind.GLS:
            return gls_predict(self.spec.gls, design_vector(rf_today, window))
        return max(float(self._x(rf_today, window) @ self._dlm.mean), 0.0)
