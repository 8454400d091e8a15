import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cascade_qwm import perturbation as P
from cascade_qwm.errors import ParameterError

GAMMA, GAMMA_P = 2.0, 4.0


def recursion(drives, alpha, max_order=2, adiabatic=True, delta_omega=0.01, **kw):
    p = P.drives_to_params(drives, GAMMA, GAMMA_P, alpha, delta_omega, **kw)
    return P.floquet_recursion(p, max_order=max_order, adiabatic=adiabatic)


def test_drive_validation():
    with pytest.raises(ParameterError):
        P.DimensionlessDrives(-0.1, 0.1)
    with pytest.raises(ParameterError):
        P.closed_form_emission(3, P.DimensionlessDrives(0.1, 0.1), 0.5, 0.5)
    with pytest.raises(ParameterError):
        P.floquet_recursion(P.drives_to_params(P.DimensionlessDrives(0.1, 0.1), 1, 1, 0.5, 0.1),
                            max_order=5)


def test_order_zero_is_isolated_probe():
    for E in (0.01, 0.2, 1.0):
        c = P.closed_form_emission(0, P.DimensionlessDrives(0.3, E), 0.8, 0.5)
        assert c.get(-1) == pytest.approx(2 * E / (1 + 8 * E * E))
        assert c.as_expectation().get(-1) == pytest.approx(-c.get(-1))


@pytest.mark.parametrize("order", [0, 1, 2])
def test_alpha_scaling(order):
    d = P.DimensionlessDrives(0.04, 0.03)
    for source in ("closed", "recursion"):
        if source == "closed":
            a = P.closed_form_emission(order, d, 0.25, GAMMA / GAMMA_P)
            b = P.closed_form_emission(order, d, 0.5, GAMMA / GAMMA_P)
        else:
            a = recursion(d, 0.25)[order]
            b = recursion(d, 0.5)[order]
        for k, v in a.components.items():
            if abs(v) > 1e-14:
                assert b.get(k) / v == pytest.approx(2**order, rel=1e-9)


@given(st.floats(0.005, 0.3), st.floats(0.005, 0.3))
def test_selection_rule(W, E):
    ems = recursion(P.DimensionlessDrives(W, E), 0.7, adiabatic=False)
    for em in ems:
        scale = max(abs(v) for v in em.components.values())
        allowed = set(P.ALLOWED_HARMONICS[em.order])
        for k, v in em.components.items():
            if k not in allowed:
                assert abs(v) <= 1e-10 * scale, (em.order, k)


@pytest.mark.parametrize("W,E", [(0.01, 0.01), (0.05, 0.02), (0.2, 0.3), (0.5, 0.1)])
def test_closed_forms_match_quasi_static_recursion(W, E):
    d = P.DimensionlessDrives(W, E)
    alpha = 0.8
    ems = recursion(d, alpha)
    for n in range(3):
        closed = P.closed_form_emission(n, d, alpha, GAMMA / GAMMA_P).as_expectation()
        for k in P.ALLOWED_HARMONICS[n]:
            assert ems[n].get(k) == pytest.approx(closed.get(k), rel=1e-10, abs=1e-15)


def test_printed_second_order_disagrees():
    d = P.DimensionlessDrives(0.05, 0.05)
    ems = recursion(d, 0.8)
    printed = P.closed_form_emission(2, d, 0.8, GAMMA / GAMMA_P, variant="printed")
    printed = printed.as_expectation()
    assert abs(printed.get(-1) - ems[2].get(-1)) > 0.5 * abs(ems[2].get(-1))


def test_finite_detuning_correction_is_linear():
    # the quasi-static limit is approached as O(dw): halving dw halves the gap
    d = P.DimensionlessDrives(0.05, 0.05)
    quasi = recursion(d, 0.8, adiabatic=True)
    gaps = []
    for dw in (0.004, 0.002):
        slow = recursion(d, 0.8, adiabatic=False, delta_omega=dw)
        gaps.append(abs(slow[1].get(-3) - quasi[1].get(-3)))
    assert gaps[0] / gaps[1] == pytest.approx(2.0, rel=0.02)
    assert gaps[0] < 0.02 * abs(quasi[1].get(-3))


def test_truncation_check():
    p = P.drives_to_params(P.DimensionlessDrives(0.05, 0.05), GAMMA, GAMMA_P, 0.8, 0.01)
    with pytest.raises(ParameterError):
        P.floquet_recursion(p, max_order=2, n_harmonics=4)


def test_total_emission_sums_coherently():
    d = P.DimensionlessDrives(0.05, 0.05)
    ems = [P.closed_form_emission(n, d, 0.8, 0.5) for n in range(3)]
    tot = P.total_emission(ems, (-1, 3), up_to=2)
    assert tot[-1] == pytest.approx(ems[0].get(-1) + ems[2].get(-1))
    assert tot[3] == pytest.approx(ems[2].get(3))
    assert P.total_emission(ems, (-1,), up_to=0)[-1] == ems[0].get(-1)


def test_comparison_table_weak_drive():
    tab = P.compare_with_exact([0.02], [0.02], GAMMA, GAMMA_P, 0.8, 0.01,
                               harmonics=(-3, -1, 1), samples_per_period=128)
    assert not tab.errors
    best = [r for r in tab.rows if r.order == 2]
    for r in best:
        pert, exact = complex(r.re_pert, r.im_pert), complex(r.re_exact, r.im_exact)
        assert abs(pert - exact) < 0.05 * abs(exact)
    assert tab.to_csv().splitlines()[0] == ",".join(P.ComparisonTable.COLUMNS)
    assert len(tab.net) == 3
    assert math.isfinite(tab.net[-1]["exact"])
    assert np.isclose(best[0].concurrence_max, tab.rows[0].concurrence_max)
