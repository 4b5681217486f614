"""
Solver benchmarks over a dataset.

Every classical method solves each record from scratch and stops once its
relative error against the stored reference drops to rtol (SSN runs to its
own tolerance). The table reports mean wall time and mean iteration count
per method; a trained network can be added as one more row, with its layer
count as iteration count.
"""
import logging
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .classic import ExactSchur, ScalarSigma, SaddleState, SolveReport, admissible_sigma, pd_solve, ssn_solve, uzawa_solve
from .dataset import Dataset, DatasetRecord, record_instance
from .experiment_config import ExperimentConfig
from .net import NetParams, predict
from .pde import PdeOperator, kind_for_experiment
from .train import method_label

METHODS = ("ssn", "uzawa", "pd")
BENCH_COLUMNS = ["method", "m", "mean_time_s", "mean_iters"]


@dataclass
class BenchResult:
    table: pd.DataFrame
    failures: int


def solve_record(kind: str, operator: PdeOperator, record: DatasetRecord, method: str,
                 rtol: Optional[float] = None, use_reference: bool = True,
                 max_iter: Optional[int] = None) -> Tuple[SaddleState, SolveReport]:
    """Run one classical method on one stored record."""
    if method not in METHODS:
        raise KeyError(f"Unknown method {method!r}, expected one of {METHODS}")
    instance = record_instance(kind, operator, record)
    reference = record.u_star if use_reference else None
    rtol = ExperimentConfig.get_default(kind, 'rtol') if rtol is None else rtol
    if method == "ssn":
        return ssn_solve(instance, max_iter=max_iter)

    kwargs = dict(reference=reference, rtol=rtol if reference is not None else None)
    if max_iter is not None:
        kwargs["max_iter"] = max_iter
    if method == "uzawa":
        qs = ExactSchur() if operator.is_elliptic else ScalarSigma(admissible_sigma(instance.spec))
        return uzawa_solve(instance, qs, **kwargs)
    return pd_solve(instance,
                    ExperimentConfig.get_default(kind, 'pd_step_primal'),
                    ExperimentConfig.get_default(kind, 'pd_step_dual'),
                    **kwargs)


def bench(dataset: Dataset, methods: Sequence[str] = METHODS, rtol: Optional[float] = None,
          net: Optional[NetParams] = None, net_label: Optional[str] = None) -> BenchResult:
    for method in methods:
        if method not in METHODS:
            raise KeyError(f"Unknown method {method!r}, expected one of {METHODS}")
    operator = PdeOperator(kind_for_experiment(dataset.kind), dataset.domain)
    m = dataset.domain.shape[-1]
    rows = []
    failures = 0

    for method in methods:
        times: List[float] = []
        iters: List[int] = []
        for record in dataset:
            _, report = solve_record(dataset.kind, operator, record, method, rtol)
            times.append(report.wall_time)
            iters.append(report.iterations)
            if not report.converged:
                failures += 1
        rows.append({"method": method, "m": m, "mean_time_s": float(np.mean(times)),
                     "mean_iters": float(np.mean(iters))})
        logging.info("📊 %s: %.4fs, %.1f iterations on average", method,
                     rows[-1]["mean_time_s"], rows[-1]["mean_iters"])

    if net is not None:
        times = []
        for record in dataset:
            start = time.perf_counter()
            predict(net, record.y_d, record.f, (record.u_a, record.u_b))
            times.append(time.perf_counter() - start)
        rows.append({"method": net_label or method_label(net), "m": m, "mean_time_s": float(np.mean(times)),
                     "mean_iters": float(net.config.layers if net.config.model == "iuzawa" else 1)})

    if failures:
        logging.warning(f"⚠️ {failures} solves did not reach their tolerance")
    return BenchResult(pd.DataFrame(rows, columns=BENCH_COLUMNS), failures)
