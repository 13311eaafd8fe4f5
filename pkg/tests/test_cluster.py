import math

import pytest

from bosonlc.cluster import (GaplessError, clustering_bound,
                             clustering_experiment, decay_rate)
from bosonlc.fock import bose_hubbard
from bosonlc.lattice import build_path


def test_bound_at_zero_separation_is_scale():
    assert clustering_bound(0, 1.0, 1.0, 4.3, 4.3, 0, c5=2.5) == 2.5


def test_bound_decay_rate():
    gap, mu, theta = 3.0, 1.0, 4.3
    rate = decay_rate(1, gap, mu, theta, 4.3, 0)
    b1 = clustering_bound(3, gap, mu, theta, 4.3, 0)
    b2 = clustering_bound(7, gap, mu, theta, 4.3, 0)
    assert math.log(b1 / b2) == pytest.approx(4 * rate, rel=1e-12)
    # doubling the gap halves the decay length
    assert decay_rate(1, 2 * gap, mu, theta, 4.3, 0) == pytest.approx(2 * rate, rel=1e-12)


def test_bound_refuses_gapless():
    with pytest.raises(GaplessError):
        clustering_bound(2, 0.0, 1.0, 4.3, 4.3, 0)
    with pytest.raises(GaplessError):
        clustering_bound(2, -1.0, 1.0, 4.3, 4.3, 0)


def test_product_ground_state_zero_correlations():
    model = bose_hubbard(build_path(6), 0.0, 5.0)
    report = clustering_experiment(model, [1, 2, 3], per_site_cap=2, filling=1)
    for row in report.rows:
        assert row.exact <= 1e-12
    assert report.gap == pytest.approx(10.0, rel=1e-10)  # doublon-hole pair costs 2 U0


def test_mott_regime_decay_small():
    model = bose_hubbard(build_path(6), 1.0, 15.0)
    report = clustering_experiment(model, [1, 2, 3], per_site_cap=2, filling=1)
    vals = [row.exact for row in report.rows]
    assert all(a > b for a, b in zip(vals, vals[1:]))  # monotone decay
    assert report.fit_rate > 0
    # log|Cor| vs r concave-or-linear decreasing away from the edges
    logs = [math.log(v) for v in vals]
    first_diffs = [b - a for a, b in zip(logs, logs[1:])]
    assert all(d < 0 for d in first_diffs)


def test_bound_column_positive_decreasing():
    model = bose_hubbard(build_path(6), 1.0, 15.0)
    report = clustering_experiment(model, [1, 2, 3], per_site_cap=2, filling=1)
    bounds = [row.bound for row in report.rows]
    assert all(b > 0 for b in bounds)
    assert all(a > b for a, b in zip(bounds, bounds[1:]))


def test_bound_dominates_with_unit_scale():
    model = bose_hubbard(build_path(6), 1.0, 15.0)
    report = clustering_experiment(model, [1, 2, 3], per_site_cap=2, filling=1)
    for row in report.rows:
        assert row.exact <= row.bound
        assert row.minimal_c5 <= 1.0


def test_gapless_configuration_refused():
    model = bose_hubbard(build_path(6), 0.0, 0.0)
    with pytest.raises(GaplessError):
        clustering_experiment(model, [1, 2], per_site_cap=2, filling=1)


def test_invalid_separation_rejected():
    model = bose_hubbard(build_path(6), 1.0, 15.0)
    with pytest.raises(ValueError):
        clustering_experiment(model, [0], per_site_cap=2, filling=1)
    with pytest.raises(ValueError):
        clustering_experiment(model, [6], per_site_cap=2, filling=1)


def test_report_serialization():
    model = bose_hubbard(build_path(6), 1.0, 15.0)
    report = clustering_experiment(model, [1, 2], per_site_cap=2, filling=1)
    csv = report.to_csv()
    assert csv.splitlines()[0] == "r,exact,bound,ratio,observable"
    d = report.to_dict()
    assert d["gap"] == report.gap
    assert len(d["rows"]) == 2
    assert "note" in d["metadata"]
