import logging
import math

import pytest
from hypothesis import given, settings, strategies as st

from gridsim.errors import InvalidSpecError
from gridsim.resilience.checkpoint import (
    CheckpointPolicy,
    FailureHistory,
    IntervalSeries,
    next_interval,
    recurrence_limit,
    recurrence_term,
    seed_intervals,
    young_interval,
)


def test_recurrence_examples():
    assert next_interval(CheckpointPolicy(W=1.0), 12.0, 99.0) == 12.0
    assert next_interval(CheckpointPolicy(W=0.5), 20.0, 10.0) == 15.0
    for W in (0.1, 0.5, 0.9, 1.5):
        assert all(recurrence_term(W, 7.0, 7.0, n) == 7.0 for n in range(50))


def test_negative_interval_clamps_with_warning(caplog):
    pol = CheckpointPolicy(W=1.9, min_interval=2.0)
    with caplog.at_level(logging.WARNING):
        assert next_interval(pol, 1.0, 100.0) == 2.0
    assert "clamping" in caplog.text


def test_w_outside_domain():
    assert any("outside (0,2) convergence domain" in v for v in CheckpointPolicy(W=2.5).violations())
    assert CheckpointPolicy(W=1.5).warnings()
    with pytest.raises(InvalidSpecError):
        CheckpointPolicy(export_every=0).validate()


def test_closed_form_against_long_iteration():
    # The limit must agree with a brute-force 10^4-step iteration.
    for W in (0.1, 0.5, 0.9, 1.5):
        for i0, i1 in ((10, 20), (20, 10), (7, 7), (3, 11)):
            far = recurrence_term(W, i0, i1, 10_000)
            assert far == pytest.approx(recurrence_limit(W, i0, i1), rel=1e-12, abs=1e-12)


@settings(max_examples=100)
@given(st.floats(0.05, 1.95), st.floats(0.1, 1e4), st.floats(0.1, 1e4), st.integers(0, 60))
def test_closed_form_every_step(W, i0, i1, n):
    limit = recurrence_limit(W, i0, i1)
    exact = limit + (i0 - i1) / (2 - W) * (W - 1) ** n
    assert recurrence_term(W, i0, i1, n) == pytest.approx(exact, rel=1e-9, abs=1e-9 * max(i0, i1))


def test_young_examples():
    assert young_interval(2.0, 1e4) == pytest.approx(200.0)
    assert young_interval(1.0, 1e2) / young_interval(1.0, 1e4) == pytest.approx(0.1)
    t0, t1 = seed_intervals(FailureHistory(), 1.0)
    assert t0 == t1 == pytest.approx(math.sqrt(2e4))


def test_history_rate():
    h = FailureHistory(prior_mtbf=1e4, alpha=0.5)
    assert h.mtbf_estimate == 1e4
    h.record(100.0)
    assert h.ew_failure_rate == pytest.approx(0.5 / 100 + 0.5 / 1e4)
    h.record(150.0)
    assert h.ew_failure_rate == pytest.approx(0.5 / 50 + 0.5 * (0.5 / 100 + 0.5 / 1e4))
    assert h.mtbf_estimate == pytest.approx(1 / h.ew_failure_rate)
    unstable = seed_intervals(h, 1.0)[0]
    assert unstable < seed_intervals(FailureHistory(), 1.0)[0]


def test_interval_series_emits_seeds_then_recurrence():
    s = IntervalSeries(CheckpointPolicy(W=0.5), 10.0, 20.0)
    assert [s.next() for _ in range(4)] == [10.0, 20.0, 15.0, 17.5]
