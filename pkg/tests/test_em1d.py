import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import halfspace_rte, hz_halfspace_quadrature

from emupscale.em1d import (
    LayeredModel,
    LoopLoopSurvey,
    WellLogError,
    hankel_filter,
    hz_secondary,
    hz_secondary_many,
    log_to_layered_model,
    parse_well_log,
    rte,
    skin_depth,
)

LAM = np.logspace(-5, 0, 60)


def assert_close(a, b, rel):
    assert np.abs(np.asarray(a) - b).max() <= rel * np.abs(b).max()


def test_filter_shape():
    base, j0 = hankel_filter()
    assert base.size == j0.size == 201
    assert np.all(np.diff(base) > 0)


def test_rte_halfspace_closed_form():
    w = 2 * np.pi * 300
    for s in (1e-4, 1e-2, 1.0):
        np.testing.assert_allclose(rte(LAM, LayeredModel.halfspace(s), w), halfspace_rte(LAM, s, w), rtol=1e-12)


def test_rte_collapses_for_equal_layers():
    w = 2 * np.pi * 100
    two = LayeredModel([30.0], [0.02, 0.02])
    assert_close(rte(LAM, two, w), rte(LAM, LayeredModel.halfspace(0.02), w), 1e-12)


def test_rte_vanishes_without_contrast():
    # wavenumbers the filter samples at the survey geometry
    lam = hankel_filter()[0] / 8.1
    r = rte(lam, LayeredModel([10.0, 5.0], [1e-12, 1e-12, 1e-12]), 2 * np.pi * 10)
    assert np.abs(r[lam > 1e-3]).max() < 1e-8


def test_rte_stable_for_thick_conductive_layers():
    r = rte(LAM, LayeredModel([1e5], [10.0, 1e-3]), 2 * np.pi * 3e4)
    assert np.all(np.isfinite(r))


def test_insulating_earth():
    d = hz_secondary(LayeredModel.halfspace(1e-12), LoopLoopSurvey(40.0, 8.1), 300.0)
    assert d.magnitude < 1e-6


def test_paper_geometry_against_quadrature():
    survey = LoopLoopSurvey(40.0, 8.1, (300.0,))
    d = hz_secondary(LayeredModel.halfspace(0.01), survey, 300.0)
    ref = hz_halfspace_quadrature(0.01, 300.0, 40.0, 8.1)
    assert abs(d.value - ref) <= 1e-3 * abs(ref)


def test_moment_cancels():
    model = LayeredModel([20.0], [0.1, 0.01])
    a = hz_secondary_many(model, LoopLoopSurvey(40.0, 8.1, (1e3,), moment=1.0))
    b = hz_secondary_many(model, LoopLoopSurvey(40.0, 8.1, (1e3,), moment=2.0))
    np.testing.assert_allclose(a, b, rtol=1e-14)


def test_skin_depth():
    assert skin_depth(4.5e-3, 1.0) == pytest.approx(7461, rel=0.01)
    assert skin_depth(4.5e-3, 20.0) == pytest.approx(1668, rel=0.01)
    assert skin_depth(0.1, 400.0) == pytest.approx(0.5 * skin_depth(0.1, 100.0), rel=1e-14)
    with pytest.raises(ValueError):
        skin_depth(0.0, 1.0)


@given(st.lists(st.floats(1e-4, 1.0), min_size=2, max_size=6), st.floats(1.0, 50.0), st.integers(0, 4))
@settings(max_examples=30, deadline=None)
def test_splitting_a_layer_is_invisible(sigma, t, split):
    # split layer `split` into two halves of equal conductivity
    thick = [t] * (len(sigma) - 1)
    split = split % (len(sigma) - 1)
    s2 = sigma[: split + 1] + sigma[split:]
    t2 = thick[:split] + [t / 2, t / 2] + thick[split + 1 :]
    survey = LoopLoopSurvey(40.0, 8.1, (10.0, 547.0, 3e4))
    a = hz_secondary_many(LayeredModel(thick, sigma), survey)
    b = hz_secondary_many(LayeredModel(t2, s2), survey)
    assert_close(b, a, 1e-12)
    assert_close(hz_secondary_many(LayeredModel(t2, s2).merged(), survey), a, 1e-12)


def test_magnitude_monotone_in_conductivity():
    survey = LoopLoopSurvey(40.0, 8.1, (300.0,))
    mags = [abs(hz_secondary_many(LayeredModel.halfspace(s), survey)[0]) for s in np.logspace(-4, -2, 25)]
    assert np.all(np.diff(mags) > 0)


@pytest.mark.parametrize(
    "kw", [dict(height=0.0, separation=1.0), dict(height=1.0, separation=-1.0), dict(height=1.0, separation=1.0, frequencies=(0.0,))]
)
def test_survey_validation(kw):
    with pytest.raises(ValueError):
        LoopLoopSurvey(**kw)


def test_survey_round_trip():
    s = LoopLoopSurvey(40.0, 8.1, (10.0, 74.0), moment=3.0)
    assert LoopLoopSurvey.from_dict(s.to_dict()) == s
    with pytest.raises(ValueError):
        LoopLoopSurvey.from_dict({"height": 1.0})


@pytest.mark.parametrize(
    "t, s", [([1.0], [1.0]), ([], [0.0]), ([-1.0], [1.0, 1.0]), ([1.0], [1.0, np.inf])]
)
def test_layered_model_validation(t, s):
    with pytest.raises(ValueError):
        LayeredModel(t, s)


# ------------------------------------------------------------- well logs
GOOD = "depth_m,conductivity_S_per_m\n0.125,0.01\n0.375,0.02\n0.625,0.04\n"


def test_parse_well_log():
    d, s = parse_well_log("# comment\n" + GOOD)
    np.testing.assert_array_equal(d, [0.125, 0.375, 0.625])
    np.testing.assert_array_equal(s, [0.01, 0.02, 0.04])


@pytest.mark.parametrize(
    "text, line",
    [
        ("depth,sigma\n0,1\n", 1),
        (GOOD + "0.875,abc\n", 5),
        (GOOD + "0.875,-1\n", 5),
        (GOOD + "1.0,0.1\n", 5),
        (GOOD + "0.875,0.1,3\n", 5),
        ("depth_m,conductivity_S_per_m\n0.5,0.1\n0.25,0.1\n", 3),
    ],
)
def test_well_log_errors_name_the_line(text, line):
    with pytest.raises(WellLogError, match=f"line {line}"):
        parse_well_log(text)


def test_log_to_layered_model():
    model, logged = log_to_layered_model(*parse_well_log(GOOD))
    np.testing.assert_allclose(logged, [0.0, 0.75])
    np.testing.assert_allclose(model.thicknesses, [0.25, 0.25, 0.25])
    np.testing.assert_array_equal(model.conductivities, [0.01, 0.02, 0.04, 0.04])
    deep, logged = log_to_layered_model([10.0, 12.0], [0.1, 0.2])
    np.testing.assert_allclose(logged, [9.0, 13.0])
    np.testing.assert_allclose(deep.thicknesses, [9.0, 2.0, 2.0])
    np.testing.assert_array_equal(deep.conductivities, [0.1, 0.1, 0.2, 0.2])
