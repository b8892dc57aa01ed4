import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentid.errors import NonstationaryBlock, ScaleOverflow, SpatialModel, TimeSeriesModel
from latentid.models import BlockKind, ar1, build_model, drift, ma1, qn, rw, spatial_exp, spatial_gauss, wn
from latentid.moments import (
    MomentKind,
    MomentVector,
    acvf,
    acvf_tail_index,
    acvf_via_sdf,
    block_acvf,
    haar_filter,
    sdf,
    spatial_cov,
    wv_function,
    wv_quadratic_form,
    wv_spectral,
    wv_theoretical,
)


def M(*blocks):
    return build_model(blocks)


# --- autocovariance ---------------------------------------------------------

def test_acvf_examples():
    np.testing.assert_allclose(acvf(M(ar1(0.5, 0.75)), [0.5, 0.75], 2).values, [1.0, 0.5, 0.25])
    np.testing.assert_array_equal(acvf(M(qn(2)), [2], 2).values, [4, -2, 0])
    v = acvf(M(wn(1), ar1(0.5, 0.75)), [1, 0.5, 0.75], 1).values
    np.testing.assert_allclose(v, [2.0, 0.5])
    np.testing.assert_allclose(acvf(M(ma1(0.4, 1)), [0.4, 1], 2).values, [1.16, 0.4, 0.0])


def test_acvf_lag0_first_and_kind():
    mv = acvf(M(wn(1)), [1], 3)
    assert mv.kind is MomentKind.ACVF
    np.testing.assert_array_equal(mv.abscissae, [0, 1, 2, 3])


def test_acvf_rejects_nonstationary_and_spatial():
    with pytest.raises(NonstationaryBlock):
        acvf(M(wn(1), rw(1)), [1, 1], 3)
    with pytest.raises(NonstationaryBlock):
        sdf(M(drift(0.1)), [0.1], [0.1])
    with pytest.raises(SpatialModel):
        acvf(M(spatial_exp(1, 1)), [1, 1], 3)


def test_acvf_lag0_dominates():
    m = M(wn(1), qn(0.5), ma1(-0.7, 2), ar1(-0.8, 1), ar1(0.6, 3))
    v = acvf(m, m.theta, 30).values
    assert np.all(np.abs(v) <= v[0])


# --- spectral density -------------------------------------------------------

def test_sdf_examples():
    assert sdf(M(wn(2)), [2], [0.0, 0.13, 0.5]).values == pytest.approx([2, 2, 2])
    assert sdf(M(ar1(0.5, 1)), [0.5, 1], [0.0]).values[0] == pytest.approx(4.0)
    assert sdf(M(ar1(0.5, 1)), [0.5, 1], [0.25]).values[0] == pytest.approx(0.8)


def test_sdf_rejects_out_of_band():
    with pytest.raises(ValueError):
        sdf(M(wn(1)), [1], [0.6])


@pytest.mark.parametrize("blocks", [
    [wn(1.3)], [qn(0.7)], [ma1(0.4, 1.0)], [ma1(-0.8, 2.0)], [ar1(0.5, 1.0)], [ar1(-0.9, 0.5)],
    [wn(1), qn(0.5), ma1(0.3, 1), ar1(0.9, 1)],
])
def test_acvf_sdf_round_trip(blocks):
    m = M(*blocks)
    direct = acvf(m, m.theta, 6).values
    back = acvf_via_sdf(m, m.theta, 6)
    scale = abs(direct[0])
    np.testing.assert_allclose(back, direct, rtol=1e-5, atol=1e-5 * scale)


# --- wavelet variance -------------------------------------------------------

def test_haar_filter_shape():
    h = haar_filter(2)
    np.testing.assert_array_equal(h, [0.25, 0.25, -0.25, -0.25])
    assert haar_filter(3).sum() == 0


def test_wv_examples():
    assert wv_theoretical(M(wn(1)), [1], 1).values[0] == pytest.approx(0.5)
    assert wv_theoretical(M(rw(1)), [1], 1).values[0] == pytest.approx(0.25)
    assert wv_theoretical(M(drift(1)), [1], 2).values[1] == pytest.approx(1.0)
    assert wv_theoretical(M(qn(1)), [1], 1).values[0] == pytest.approx(1.5)


def test_wv_scales_are_tau():
    mv = wv_theoretical(M(wn(1)), [1], 4)
    np.testing.assert_array_equal(mv.abscissae, [2, 4, 8, 16])
    assert mv.kind is MomentKind.WV


def test_wv_scale_overflow():
    with pytest.raises(ScaleOverflow):
        wv_theoretical(M(wn(1)), [1], 31)


def test_wv_rejects_spatial():
    with pytest.raises(SpatialModel):
        wv_theoretical(M(spatial_exp(1, 1)), [1, 1], 2)


def _rw_oracle(gamma2, j):
    # filter applied to a cumulative sum: coefficient of each increment is a tail sum of taps
    h = haar_filter(j)
    tails = np.cumsum(h[::-1])[::-1]
    return gamma2 * np.sum(tails ** 2)


def _drift_oracle(omega, j):
    h = haar_filter(j)
    return (omega * np.sum(np.arange(len(h)) * h)) ** 2


@pytest.mark.parametrize("j", range(1, 9))
def test_wv_nonstationary_oracles(j):
    assert wv_theoretical(M(rw(1.7)), [1.7], j).values[-1] == pytest.approx(_rw_oracle(1.7, j), rel=1e-12)
    assert wv_theoretical(M(drift(0.3)), [0.3], j).values[-1] == pytest.approx(_drift_oracle(0.3, j), rel=1e-12)


@pytest.mark.parametrize("blocks", [
    [wn(1.0)], [qn(1.0)], [ma1(0.4, 1.0)], [ma1(-0.7, 1.0)],
    [ar1(0.5, 1.0)], [ar1(-0.95, 1.0)], [ar1(0.99, 1.0)],
])
def test_wv_closed_form_matches_quadratic_form(blocks):
    m = M(*blocks)
    closed = wv_theoretical(m, m.theta, 8).values
    for j in range(1, 9):
        g = acvf(m, m.theta, 2 ** j).values
        assert closed[j - 1] == pytest.approx(wv_quadratic_form(g, j), rel=1e-9)


@pytest.mark.parametrize("blocks", [
    [wn(1.0)], [qn(1.0)], [ma1(0.4, 1.0)], [ma1(-0.7, 2.0)], [ar1(0.5, 1.0)], [ar1(-0.9, 1.0)],
])
def test_wv_spectral_oracle(blocks):
    m = M(*blocks)
    closed = wv_theoretical(m, m.theta, 8).values
    for j in range(1, 9):
        assert wv_spectral(m, m.theta, j) == pytest.approx(closed[j - 1], rel=1e-6)


def test_wv_spectral_wn_example():
    assert abs(wv_spectral(M(wn(1)), [1], 1) - 0.5) < 1e-8


def test_wv_monotone_large_scales():
    j = np.arange(4, 9)
    for b in (drift(0.1), rw(1.0)):
        v = wv_theoretical(M(b), b.values, 8).values[j - 1]
        assert np.all(np.diff(v) > 0)
    v = wv_theoretical(M(wn(1)), [1], 8).values[j - 1]
    assert np.all(np.diff(v) < 0)


def test_wv_vanishes_with_variance():
    vals = [wv_spectral(M(ar1(0.5, s)), [0.5, s], 2) for s in (1.0, 0.1, 0.01, 0.001)]
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-2


def test_wv_function_matches_wv_theoretical():
    m = M(wn(1), qn(0.5), drift(0.01), rw(0.1))
    f = wv_function(m, 10)
    np.testing.assert_allclose(f(m.theta), wv_theoretical(m, m.theta, 10).values, rtol=1e-14)


# --- additivity and linearity -------------------------------------------------

_ALL_TS = [wn(1.1), qn(0.4), ma1(0.3, 0.9), ar1(-0.4, 1.2), ar1(0.7, 0.6)]


def test_additivity():
    m = M(*_ALL_TS)
    f = np.linspace(0.0, 0.5, 11)
    singles = [M(b) for b in _ALL_TS]
    np.testing.assert_allclose(acvf(m, m.theta, 8).values,
                               sum(acvf(s, s.theta, 8).values for s in singles), rtol=1e-13)
    np.testing.assert_allclose(sdf(m, m.theta, f).values,
                               sum(sdf(s, s.theta, f).values for s in singles), rtol=1e-13)
    np.testing.assert_allclose(wv_theoretical(m, m.theta, 8).values,
                               sum(wv_theoretical(s, s.theta, 8).values for s in singles), rtol=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100.0), st.sampled_from([wn(1.0), qn(1.0), rw(1.0), ma1(0.3, 1.0), ar1(0.6, 1.0)]))
def test_linear_in_variance(s, block):
    base = M(block)
    theta = base.theta.copy()
    theta[-1] *= s
    np.testing.assert_allclose(wv_theoretical(base, theta, 6).values,
                               s * wv_theoretical(base, base.theta, 6).values, rtol=1e-12)
    if block.kind.is_stationary:
        np.testing.assert_allclose(acvf(base, theta, 4).values, s * acvf(base, base.theta, 4).values,
                                   rtol=1e-12, atol=1e-300)
        f = np.linspace(0, 0.5, 7)
        np.testing.assert_allclose(sdf(base, theta, f).values, s * sdf(base, base.theta, f).values, rtol=1e-12)


# --- spatial ----------------------------------------------------------------

def test_spatial_examples():
    v = spatial_cov(M(spatial_exp(1, 1)), [1, 1], [0.0, 1.0]).values
    assert v[0] == 1.0
    assert v[1] == pytest.approx(math.exp(-1), abs=1e-6)
    g = spatial_cov(M(spatial_gauss(2, 3)), [2, 3], [2.0]).values[0]
    assert g == pytest.approx(3 * math.exp(-1)) and g == pytest.approx(1.103638, abs=1e-6)


def test_spatial_rejects_time_series_and_bad_distances():
    with pytest.raises(TimeSeriesModel):
        spatial_cov(M(wn(1)), [1], [0.0])
    with pytest.raises(ValueError):
        spatial_cov(M(spatial_exp(1, 1)), [1, 1], [1.0, 0.5])


def test_spatial_single_block_nonincreasing():
    d = np.linspace(0, 5, 40)
    for b in (spatial_exp(1.5, 2), spatial_gauss(0.7, 1)):
        assert np.all(np.diff(spatial_cov(M(b), b.values, d).values) <= 0)


# --- tail index -------------------------------------------------------------

def test_tail_index_examples():
    assert acvf_tail_index(M(wn(1)), [1], 1e-3) == 0
    assert acvf_tail_index(M(qn(1)), [1], 1e-3) == 1
    assert acvf_tail_index(M(ar1(0.5, 0.75)), [0.5, 0.75], 1e-3) == 10


def test_tail_index_bound_holds():
    m = M(ma1(0.5, 1), ar1(-0.8, 1), ar1(0.6, 2))
    H = acvf_tail_index(m, m.theta, 1e-6)
    tail = np.sum(np.abs(acvf(m, m.theta, H + 2000).values[H + 1:]))
    assert tail < 1e-6


# --- serialisation ----------------------------------------------------------

def test_moment_vector_csv_round_trip():
    m = M(wn(1), ar1(0.3, 1 / 3))
    mv = acvf(m, m.theta, 5)
    text = mv.to_csv()
    assert text.startswith("kind,abscissa,value\n") and "\r" not in text
    assert MomentVector.from_csv(text) == mv


def test_block_acvf_negative_lags_symmetric():
    lags = np.array([-2, -1, 0, 1, 2])
    v = block_acvf(BlockKind.AR1, (0.5, 1.0), lags)
    np.testing.assert_allclose(v, v[::-1])
