"""
Error metrics for predicted controls.

Provides:
- abs_error(u_hat, u_star): L² distance with trapezoid weights
- mean_sd(values): mean and population standard deviation
- metrics_row(method, m, rel, abs): one row of the metrics table
- ErrorTracker: incremental per-record accumulator

Population SD (divide by N) is used everywhere; an empty sample gives
(0.0, 0.0).
"""
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .field import GridField, norm_l2, relative_error

METRIC_COLUMNS = ["method", "m", "eps_rel_mean", "eps_rel_sd",
                  "eps_abs_mean", "eps_abs_sd", "n_records"]


def _to_np(x) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return x
    return np.array(x, dtype=float)


def abs_error(u_hat: GridField, u_star: GridField) -> float:
    return norm_l2(u_hat - u_star)


def mean_sd(values: Sequence[float]) -> Tuple[float, float]:
    arr = _to_np(values)
    if arr.size == 0:
        return 0.0, 0.0
    return float(np.mean(arr)), float(np.std(arr))


def metrics_row(method: str, m: int, rel: Sequence[float], absolute: Sequence[float]) -> Dict:
    rel_mean, rel_sd = mean_sd(rel)
    abs_mean, abs_sd = mean_sd(absolute)
    return {
        "method": method,
        "m": int(m),
        "eps_rel_mean": rel_mean,
        "eps_rel_sd": rel_sd,
        "eps_abs_mean": abs_mean,
        "eps_abs_sd": abs_sd,
        "n_records": len(rel),
    }


class ErrorTracker:
    """Collects ε_rel and ε_abs record by record."""

    def __init__(self, eps_floor: Optional[float] = None):
        self.eps_floor = eps_floor
        self.rel: List[float] = []
        self.abs: List[float] = []

    def update(self, u_hat: GridField, u_star: GridField) -> float:
        """Record one prediction; returns its relative error."""
        rel = relative_error(u_hat, u_star, self.eps_floor)
        self.rel.append(rel)
        self.abs.append(abs_error(u_hat, u_star))
        return rel

    def __len__(self) -> int:
        return len(self.rel)

    def row(self, method: str, m: int) -> Dict:
        return metrics_row(method, m, self.rel, self.abs)

    def frame(self, method: str, m: int) -> pd.DataFrame:
        return pd.DataFrame([self.row(method, m)], columns=METRIC_COLUMNS)
