import csv
import itertools
import math

import numpy as np
import pytest

from broadwell.blowup import (
    FLAG_INCONSISTENT,
    FLAG_OK,
    REPORT_HEADER,
    BlowupCandidate,
    ConeLabel,
    ConePoint,
    classify_primary,
    corollary_ratio,
    detect_blowup,
    estimate_tstar,
    refine_tstar,
    write_blowup_report,
)
from broadwell.exceptions import NoBlowupTrend, ParameterDomainError, SeriesOrderError


def loglog_rate(t, t_star=1.0):
    d = t_star - t
    return math.log(abs(math.log(d))) / (4.0 * d)


def series(func, lo, hi, n=100):
    return [(float(t), func(float(t))) for t in np.linspace(lo, hi, n)]


def test_estimate_inverse_growth():
    t_star, quality = estimate_tstar(series(lambda t: 1.0 / (1.0 - t), 0.5, 0.99))
    assert t_star == pytest.approx(1.0, rel=1e-2)
    assert quality == pytest.approx(1.0)


def test_estimate_is_exact_for_inverse_growth():
    t_star, _ = estimate_tstar(series(lambda t: 2.0 / (1.3 - t), 0.0, 1.2, n=40))
    assert t_star == pytest.approx(1.3, abs=1e-6)


def test_estimate_log_corrected_growth():
    t_star, quality = estimate_tstar(series(loglog_rate, 0.9, 0.999))
    assert t_star == pytest.approx(1.0, rel=2e-2)
    assert 0.9 < quality <= 1.0


def test_constant_series_has_no_trend():
    with pytest.raises(NoBlowupTrend):
        estimate_tstar([(0.1 * i, 2.0) for i in range(20)])


def test_short_series_has_no_trend():
    with pytest.raises(NoBlowupTrend) as exc_info:
        estimate_tstar([(0.1 * i, 1.0 + i) for i in range(7)])
    assert "at least 8" in str(exc_info.value)


def test_non_finite_tail_has_no_trend():
    data = [(0.1 * i, 1.0 + i) for i in range(12)]
    data[-1] = (1.1, math.inf)
    with pytest.raises(NoBlowupTrend):
        estimate_tstar(data)


def test_corollary_ratio_examples():
    assert corollary_ratio(1000.0, 0.0, 1e-3) == pytest.approx(1.0 / 1.932645, rel=1e-6)
    assert corollary_ratio(1000.0, 0.0, 1e-3) == pytest.approx(0.517426, abs=1e-6)
    assert corollary_ratio(0.0, 0.5, 0.6) == 0.0
    t = 0.99
    assert corollary_ratio(loglog_rate(t), t, 1.0) == pytest.approx(0.25)


def test_corollary_ratio_domain():
    with pytest.raises(ParameterDomainError):
        corollary_ratio(1.0, 0.0, 0.5)
    with pytest.raises(ParameterDomainError):
        corollary_ratio(1.0, 1.0, 1.0)


def test_corollary_ratio_increases_with_s():
    assert corollary_ratio(2.0, 0.9, 1.0) > corollary_ratio(1.0, 0.9, 1.0)


def test_corollary_ratio_tends_to_a_quarter_on_the_tail():
    for t in np.linspace(0.9, 0.999, 50):
        assert corollary_ratio(loglog_rate(t), t, 1.0) == pytest.approx(0.25, rel=0.05)


def test_classify_primary_backward_cone():
    late = ConePoint(1.0, (0.0, 0.0))
    early = ConePoint(0.5, (0.5, 0.0))
    far = ConePoint(0.5, (5.0, 0.0))
    C = math.sqrt(2.0)
    assert classify_primary([late, early], C) == [ConeLabel.SECONDARY, ConeLabel.PRIMARY]
    assert classify_primary([early, late], C) == [ConeLabel.PRIMARY, ConeLabel.SECONDARY]
    assert classify_primary([late, far], C) == [ConeLabel.PRIMARY, ConeLabel.PRIMARY]


def test_classify_primary_cone_edge_is_outside():
    star = ConePoint(1.0, (0.0, 0.0))
    edge = ConePoint(0.5, (1.0, 0.0))
    assert classify_primary([star, edge], 1.0)[0] is ConeLabel.PRIMARY


def test_classify_primary_ignores_candidate_order():
    points = [
        ConePoint(1.0, (0.0, 0.0)),
        ConePoint(0.5, (0.5, 0.0)),
        ConePoint(0.9, (0.2, 0.3)),
        ConePoint(0.5, (5.0, 0.0)),
    ]
    C = math.sqrt(2.0)
    expected = dict(zip(points, classify_primary(points, C)))
    assert set(expected.values()) == {ConeLabel.PRIMARY, ConeLabel.SECONDARY}
    for order in itertools.permutations(points):
        assert dict(zip(order, classify_primary(list(order), C))) == expected


def test_classify_primary_needs_positive_speed():
    with pytest.raises(ParameterDomainError):
        classify_primary([], 0.0)


def test_detect_blowup_consistent_growth():
    candidate = detect_blowup(series(lambda t: 1.0 / (1.0 - t), 0.5, 0.99), (0.1, -0.2))
    assert candidate.t_star_est == pytest.approx(1.0, rel=1e-2)
    assert candidate.x_star_est == (0.1, -0.2)
    assert candidate.ratio_series
    assert all(flag == FLAG_OK for _, flag in candidate.flags)
    assert not candidate.inconsistent


def test_detect_blowup_flags_slow_growth():
    candidate = detect_blowup(series(lambda t: 0.1 / (1.0 - t), 0.5, 0.99))
    assert candidate.inconsistent
    assert candidate.flags[-1][1] == FLAG_INCONSISTENT
    relaxed = detect_blowup(series(lambda t: 0.1 / (1.0 - t), 0.5, 0.99), rate_constant=0.05)
    assert not relaxed.inconsistent


def test_candidate_repr():
    candidate = BlowupCandidate(1.0, (0.0, 0.0), 0.99)
    assert repr(candidate) == "<BlowupCandidate: t*~1 at (0.0, 0.0), R^2=0.9900>"
    assert not candidate.inconsistent


def test_write_blowup_report(tmp_path):
    data = series(lambda t: 1.0 / (1.0 - t), 0.5, 0.99, n=20)
    candidate = detect_blowup(data)
    path = write_blowup_report(candidate, data, str(tmp_path / "blowup_report.csv"))
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == REPORT_HEADER
    assert len(rows) == 21
    # the first sample is farther than 1/e from t*, so it carries no ratio
    assert rows[1][3] == "" and rows[1][4] == ""
    assert rows[-1][4] == FLAG_OK
    assert float(rows[-1][2]) == pytest.approx(candidate.t_star_est)


def test_write_blowup_report_without_candidate(tmp_path):
    data = [(0.0, 1.0), (0.1, 1.0)]
    path = write_blowup_report(None, data, str(tmp_path / "blowup_report.csv"))
    with open(path, encoding="utf-8", newline="") as fh:
        assert fh.read() == "t,sup,t_star_est,ratio,flag\n0.0,1.0,,,\n0.1,1.0,,,\n"


@pytest.mark.parametrize("n", [50, 200, 1000])
def test_estimate_log_corrected_growth_follows_the_data(n):
    data = series(loglog_rate, 0.9, 0.999, n=n)
    t_star, _ = estimate_tstar(data)
    assert t_star > data[-1][0]
    assert t_star == pytest.approx(1.0, rel=2e-2)


def test_estimate_rejects_a_root_inside_the_data():
    # 1/s drops sharply at the end, so every tail fit crosses zero before t=9
    inverse = [10.0, 9.0, 8.0, 7.0, 6.0, 5.0, 2.0, 1.0, 0.3, 0.01]
    with pytest.raises(NoBlowupTrend) as exc_info:
        estimate_tstar([(float(t), 1.0 / y) for t, y in enumerate(inverse)])
    assert "precedes the last sample" in str(exc_info.value)


@pytest.mark.parametrize("n", [50, 200, 1000])
def test_detect_blowup_accepts_the_marginal_rate(n):
    data = series(loglog_rate, 0.9, 0.999, n=n)
    candidate = detect_blowup(data)
    assert candidate.t_star_est > data[-1][0]
    assert candidate.t_star_est == pytest.approx(1.0, abs=1e-8)
    assert len(candidate.ratio_series) == n
    assert candidate.ratio_series[-1][1] == pytest.approx(0.25, rel=1e-6)
    assert not candidate.inconsistent
    assert all(flag == FLAG_OK for _, flag in candidate.flags)


def test_detect_blowup_keeps_the_affine_fit_for_inverse_growth():
    candidate = detect_blowup(series(lambda t: 2.0 / (1.3 - t), 0.0, 1.2, n=40))
    assert candidate.t_star_est == pytest.approx(1.3, abs=1e-6)


def test_refine_tstar_recovers_the_marginal_blowup_time():
    data = series(lambda t: loglog_rate(t, t_star=1.2), 1.1, 1.199, n=100)
    t_star, quality = refine_tstar(data, 1.1995)
    assert t_star == pytest.approx(1.2, abs=1e-9)
    assert quality == pytest.approx(1.0)


def test_refine_tstar_gives_up_outside_the_double_log_range():
    data = series(lambda t: 1.0 / (1.0 - t), 0.0, 0.5, n=30)
    assert refine_tstar(data, 1.0) is None


def test_candidate_must_follow_the_last_sample():
    with pytest.raises(NoBlowupTrend):
        BlowupCandidate(0.998, (0.0, 0.0), 0.99, last_time=0.999)
    assert BlowupCandidate(1.0, (0.0, 0.0), 0.99, last_time=0.999).last_time == 0.999


def test_candidate_ratio_times_increase():
    with pytest.raises(SeriesOrderError):
        BlowupCandidate(1.0, (0.0, 0.0), 0.99, ratio_series=[(0.9, 0.3), (0.9, 0.3)])
