import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emupscale.em1d import LayeredModel, LoopLoopSurvey, hz_secondary_many, log_to_layered_model
from emupscale.synth import LogSpec, contrasted_log, lognormal_log
from emupscale.upscale1d import (
    AVERAGE_METHODS,
    CoarseLayering,
    average_upscale,
    average_values,
    data_relative_error,
    replace_layers,
    upscale_layer,
    upscale_log,
)

SURVEY = LoopLoopSurvey(40.0, 8.1, (10.0, 4053.0))


def short_log(seed, n=80):
    d, s = lognormal_log(LogSpec(n_samples=n), seed)
    model, (top, bottom) = log_to_layered_model(d, s)
    return model, CoarseLayering.uniform(top, bottom, 5.0)


def test_average_examples():
    assert average_values([1.0, 3.0], [1, 1], "arithmetic") == pytest.approx(2.0)
    assert average_values([1.0, 4.0], [1, 1], "geometric") == pytest.approx(2.0)
    assert average_values([1.0, 3.0], [1, 1], "harmonic") == pytest.approx(1.5)
    assert average_values([1.0, 3.0], [3, 1], "arithmetic") == pytest.approx(1.5)
    with pytest.raises(ValueError):
        average_values([1.0], [1.0], "median")


@given(st.lists(st.floats(1e-4, 1.0), min_size=1, max_size=20), st.integers(0, 2**31 - 1))
def test_mean_ordering(sigma, seed):
    w = np.random.default_rng(seed).uniform(0.1, 1.0, len(sigma))
    h, g, a = (average_values(sigma, w, m) for m in ("harmonic", "geometric", "arithmetic"))
    assert h <= g * (1 + 1e-12) and g <= a * (1 + 1e-12)
    assert min(sigma) * (1 - 1e-12) <= h and a <= max(sigma) * (1 + 1e-12)


def test_layering():
    lay = CoarseLayering.uniform(0.0, 80.0, 10.0)
    assert lay.n_layers == 8
    with pytest.raises(ValueError):
        CoarseLayering.uniform(0.0, 25.0, 10.0)
    with pytest.raises(ValueError):
        CoarseLayering((5.0, 5.0))
    fine = LayeredModel([1.0, 1.0, 1.0], [1, 2, 3, 4])
    idx, w = CoarseLayering((0.0, 2.0, 3.0)).fine_members(fine, 0)
    assert list(idx) == [0, 1] and list(w) == [1.0, 1.0]
    with pytest.raises(ValueError):
        CoarseLayering((0.0, 1.5)).fine_members(fine, 0)
    with pytest.raises(IndexError):
        CoarseLayering((0.0, 1.0)).fine_members(fine, 1)


def test_average_upscale_keeps_other_layers():
    fine = LayeredModel([1.0, 1.0, 1.0], [1.0, 3.0, 5.0, 7.0])
    coarse = average_upscale(fine, CoarseLayering((1.0, 3.0)), "arithmetic")
    np.testing.assert_array_equal(coarse.conductivities, [1.0, 4.0, 7.0])
    np.testing.assert_array_equal(coarse.thicknesses, [1.0, 2.0])


def test_homogeneous_layer_returns_itself():
    fine = LayeredModel([2.0, 5.0, 5.0], [0.05, 0.02, 0.02, 0.01])
    s, rep = upscale_layer(fine, CoarseLayering((2.0, 12.0)), 0, SURVEY, 100.0)
    assert s == pytest.approx(0.02, rel=1e-6)
    assert rep.misfit == pytest.approx(0.0, abs=1e-20)


def test_homogeneous_log():
    fine = LayeredModel([1.0] * 19, [0.03] * 20)
    models, reports = upscale_log(fine, CoarseLayering.uniform(0.0, 10.0, 5.0), SURVEY)
    assert len(models) == 2
    for m in models:
        assert np.all(m.conductivities == 0.03)


@pytest.mark.parametrize("seed", [0, 1])
def test_optimized_layer_beats_averages(seed):
    fine, lay = short_log(seed)
    for f in SURVEY.frequencies:
        d_fine = complex(hz_secondary_many(fine, SURVEY, [f])[0])
        for k in range(lay.n_layers):
            s, rep = upscale_layer(fine, lay, k, SURVEY, f, d_fine=d_fine)
            idx, w = lay.fine_members(fine, k)
            layer = fine.conductivities[idx]
            assert 0.1 * layer.min() <= s <= 10 * layer.max()
            for m in AVERAGE_METHODS:
                vals = [None] * lay.n_layers
                vals[k] = average_values(layer, w, m)
                d = hz_secondary_many(replace_layers(fine, lay, vals), SURVEY, [f])[0]
                assert rep.misfit <= 0.5 * abs(d - d_fine) ** 2 * (1 + 1e-9)


def test_frequencies_give_different_layers():
    d, s = contrasted_log(n_samples=80)
    fine, (top, bottom) = log_to_layered_model(d, s)
    lay = CoarseLayering.uniform(top, bottom, 10.0)
    survey = LoopLoopSurvey(40.0, 8.1, (10.0, 30000.0))
    models, _ = upscale_log(fine, lay, survey)
    a, b = (m.conductivities[: lay.n_layers] for m in models)
    assert np.max(np.abs(a - b) / a) > 1e-3


def test_layer_order_irrelevant():
    fine, lay = short_log(3, n=40)
    f = 547.0
    forward = [upscale_layer(fine, lay, k, SURVEY, f)[0] for k in range(lay.n_layers)]
    backward = [upscale_layer(fine, lay, k, SURVEY, f)[0] for k in reversed(range(lay.n_layers))]
    assert forward == backward[::-1]


def test_data_relative_error():
    rng = np.random.default_rng(0)
    a = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    b = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    assert data_relative_error(a, a) == 0.0
    assert data_relative_error([1.0, 2.0], [2.0, 4.0]) == pytest.approx(100.0)
    direct = 100 * np.sqrt(sum((abs(x) - abs(y)) ** 2 for x, y in zip(a, b))) / np.sqrt(sum(abs(x) ** 2 for x in a))
    assert data_relative_error(a, b) == pytest.approx(direct, rel=1e-13)
    with pytest.raises(ZeroDivisionError):
        data_relative_error([0.0], [1.0])
    with pytest.raises(ValueError):
        data_relative_error([1.0], [1.0, 2.0])
