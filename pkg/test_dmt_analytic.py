import json
from fractions import Fraction

import numpy as np
import pytest

from services.curve_export import breakpoints_record, curve_table, r_grid
from services.dmt_analytic import (
    SISO,
    AntennaConfig,
    DmtCurve,
    d1,
    d1_curve,
    delta_offset,
    parallel_dmt,
    parallel_min_oracle,
    prop1_dmt,
    prop1_first_exponent,
    prop1_region_oracle,
    prop1_second_exponent,
    prop2_dmt,
    simple_bound,
    streaming_dmt,
    treecode_lag_bound,
    treecode_lag_exponent,
)
from services.errors import DimensionError, DomainError, GridError


@pytest.mark.parametrize("nt,nr", [(1, 1), (2, 2), (2, 1), (4, 2)])
def test_d1_breakpoints_exact(nt, nr):
    curve = d1_curve(AntennaConfig(nt, nr))
    expected = [(Fraction(k), Fraction((nr - k) * (nt - k))) for k in range(min(nt, nr) + 1)]
    assert list(curve.breakpoints) == expected
    assert curve.is_convex()


def test_d1_values():
    cfg = AntennaConfig(2, 2)
    assert d1(cfg, 0) == 4
    assert d1(cfg, 1) == 1
    assert d1(cfg, 0.5) == pytest.approx(2.5)
    assert d1(cfg, 2) == 0
    assert d1(SISO, 0.5) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        d1(SISO, 1.5)
    with pytest.raises(DomainError):
        d1(SISO, -0.1)


def test_curve_invariants_rejected():
    with pytest.raises(DomainError):
        DmtCurve(((Fraction(0), Fraction(1)),))
    with pytest.raises(DomainError):
        DmtCurve(((Fraction(0), Fraction(1)), (Fraction(1), Fraction(2)), (Fraction(2), Fraction(0))))
    with pytest.raises(DomainError):
        DmtCurve(((Fraction(0), Fraction(1)), (Fraction(1), Fraction(1, 2))))
    with pytest.raises(DimensionError):
        AntennaConfig(0, 1)


def test_curve_json_and_slopes():
    curve = d1_curve(AntennaConfig(2, 2))
    assert json.loads(curve.to_json()) == [[0.0, 4.0], [1.0, 1.0], [2.0, 0.0]]
    assert curve.slopes() == [Fraction(-3), Fraction(-1)]


def test_parallel_and_streaming():
    assert parallel_dmt(2, SISO, 1.0) == pytest.approx(1.0)
    assert parallel_dmt(3, AntennaConfig(2, 2), 3.0) == pytest.approx(3.0)
    assert streaming_dmt(2, SISO, 0.5) == pytest.approx(1.0)
    assert streaming_dmt(3, AntennaConfig(2, 2), 1.0) == pytest.approx(3.0)
    with pytest.raises(DomainError):
        parallel_dmt(2, SISO, 2.5)
    with pytest.raises(DomainError):
        streaming_dmt(0, SISO, 0.5)


def test_delta_offset():
    assert delta_offset(SISO, 0.5) == pytest.approx(0.125)
    assert delta_offset(SISO, 0.0) == pytest.approx(0.25)
    assert delta_offset(AntennaConfig(2, 2), 1.0) == pytest.approx(0.25)
    with pytest.raises(DomainError):
        delta_offset(SISO, 1.0)


@pytest.mark.parametrize("L", [1, 2, 3])
@pytest.mark.parametrize("nt,nr", [(1, 1), (2, 2)])
def test_parallel_oracle_agrees(L, nt, nr):
    cfg = AntennaConfig(nt, nr)
    step = 0.05 if L < 3 else 0.1
    for s in np.linspace(0.0, L * cfg.min_dim, 10):
        best = parallel_min_oracle(L, cfg, float(s), step)
        assert best >= parallel_dmt(L, cfg, float(s)) - 1e-9
        assert best - parallel_dmt(L, cfg, float(s)) <= L * (nt + nr - 1) * step + 1e-9


def test_parallel_oracle_limits():
    with pytest.raises(GridError):
        parallel_min_oracle(5, SISO, 1.0, 0.1)
    with pytest.raises(GridError):
        parallel_min_oracle(4, AntennaConfig(2, 2), 4.0, 0.001)
    with pytest.raises(DomainError):
        parallel_min_oracle(2, SISO, 3.0, 0.1)


def test_simple_bound():
    assert simple_bound(0, 0.5) == pytest.approx(1.5)
    assert simple_bound(3, 0.5) == pytest.approx(3.0)
    assert simple_bound(0, 3.0) == 0.0
    with pytest.raises(DomainError):
        simple_bound(-1, 0.5)


def test_prop_curves():
    assert prop1_dmt(0.5) == pytest.approx(0.75)
    assert prop1_dmt(0.9) == pytest.approx(0.2)
    assert prop1_dmt(0.0) == pytest.approx(1.0)
    assert prop2_dmt(0.5) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        prop1_dmt(1.2)


def test_prop1_region_oracle_matches_closed_form():
    for r in (0.2, 0.5, 0.8):
        value = prop1_region_oracle(r, 0.01)
        assert value == pytest.approx(prop1_second_exponent(r), abs=0.03)
    assert prop1_region_oracle(0.5, 0.01, beta=0.5) == pytest.approx(
        prop1_second_exponent(0.5, beta=0.5), abs=0.03)


def test_prop1_event_exponents():
    assert prop1_first_exponent(0.5) == pytest.approx(0.5)
    assert prop1_first_exponent(0.5, beta=0.5) == pytest.approx(0.75)
    assert prop1_first_exponent(0.5, beta=0.1) == 0.0
    # the scheme's exponent at beta = r is min(1 - r/2, 2 - 5r/2)
    r = 0.5
    assert min(prop1_first_exponent(r, r), prop1_second_exponent(r, r)) == pytest.approx(0.75)


def test_treecode_lag_exponent_dominates_bound():
    cases = [(SISO, r) for r in (0.1, 0.3, 0.5, 0.7, 0.9)] + [(AntennaConfig(2, 2), r) for r in (0.1, 0.3, 0.5)]
    for cfg, r in cases:
        for lag in range(6):
            assert treecode_lag_exponent(cfg, 2, r, lag) >= treecode_lag_bound(cfg, 2, r, lag) - 1e-12


def test_treecode_lag_bound_can_fail_between_integer_rates():
    # on the first 2x2 segment the bound needs Delta(r) <= d1(r) / 6
    cfg = AntennaConfig(2, 2)
    assert treecode_lag_exponent(cfg, 2, 0.7, 5) < treecode_lag_bound(cfg, 2, 0.7, 5)


def test_treecode_lag_exponent_values():
    assert treecode_lag_exponent(SISO, 2, 0.5, 0) == pytest.approx(1.0)
    # lag 1: L = 3, s = 1.5 + 0.125
    assert treecode_lag_exponent(SISO, 2, 0.5, 1) == pytest.approx(3 - 1.625)


def test_r_grid_and_curve_table():
    assert len(r_grid(SISO, 0.05)) == 21
    table = curve_table(SISO, 2, 0.05)
    assert len(table) == 21
    row = table[np.isclose(table["r"], 0.5)].iloc[0]
    assert row["d_T"] == pytest.approx(1.0)
    assert row["prop1"] == pytest.approx(0.75)
    assert row["simple_envelope"] == pytest.approx(1.5)

    mimo = curve_table(AntennaConfig(2, 2), 2, 0.25)
    row = mimo[np.isclose(mimo["r"], 1.0)].iloc[0]
    assert row["d1"] == pytest.approx(1.0)
    assert mimo["prop1"].isna().all()
    with pytest.raises(DomainError):
        curve_table(SISO, 2, 0.0)


def test_breakpoints_record():
    rec = breakpoints_record(AntennaConfig(4, 2))
    assert rec["breakpoints"] == [[0.0, 8.0], [1.0, 3.0], [2.0, 0.0]]
    assert rec["convex"] is True
