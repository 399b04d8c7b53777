"""Input checks shared by the estimators."""

import numpy as np
from sklearn.utils.validation import check_array


def check_series(values, name="series", allow_none=False):
    if values is None and allow_none:
        return None
    arr = check_array(values, ensure_2d=False, dtype=float, input_name=name)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def check_series_pair(rainfall, inflow):
    """Validate aligned rainfall/inflow series; ``inflow`` may be None."""
    rain = check_series(rainfall, "rainfall")
    flow = check_series(inflow, "inflow", allow_none=True)
    if flow is not None and flow.shape != rain.shape:
        raise ValueError(f"rainfall and inflow lengths differ: {rain.shape[0]} vs {flow.shape[0]}")
    return rain, flow


def check_design(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise ValueError(f"design vector has length {x.shape[-1]}, model expects {dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("design vector contains non-finite values")
    return x
