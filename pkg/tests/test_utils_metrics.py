import numpy as np
import pytest

from src.field import Domain, GridField
from src.utils_metrics import METRIC_COLUMNS, ErrorTracker, abs_error, mean_sd, metrics_row


def test_population_sd():
    mean, sd = mean_sd([0.1, 0.2, 0.3])
    assert mean == pytest.approx(0.2)
    assert sd == pytest.approx(0.0816497, rel=1e-5)


def test_empty_sample():
    assert mean_sd([]) == (0.0, 0.0)


def test_abs_error_of_constants():
    domain = Domain.square(9)
    assert abs_error(GridField.constant(domain, 3.0), GridField.constant(domain, 1.0)) == pytest.approx(2.0)


def test_metrics_row():
    row = metrics_row("pd", 64, [0.1, 0.3], [1.0, 3.0])
    assert list(row) == METRIC_COLUMNS
    assert row["eps_rel_mean"] == pytest.approx(0.2)
    assert row["eps_abs_sd"] == pytest.approx(1.0)
    assert row["n_records"] == 2


class TestErrorTracker:
    def test_accumulates(self):
        domain = Domain.square(9)
        target = GridField.constant(domain, 2.0)
        tracker = ErrorTracker()
        assert tracker.update(GridField.zeros(domain), target) == pytest.approx(1.0)
        assert tracker.update(target, target) == 0.0
        assert len(tracker) == 2
        frame = tracker.frame("FNO", 9)
        assert list(frame.columns) == METRIC_COLUMNS
        assert frame.loc[0, "eps_rel_mean"] == pytest.approx(0.5)
        assert frame.loc[0, "eps_rel_sd"] == pytest.approx(0.5)
        assert frame.loc[0, "eps_abs_mean"] == pytest.approx(1.0)

    def test_floor(self):
        domain = Domain.square(9)
        tracker = ErrorTracker(eps_floor=0.5)
        rel = tracker.update(GridField.constant(domain, 0.1), GridField.zeros(domain))
        assert rel == pytest.approx(0.2)
        assert np.isfinite(tracker.abs[0])
