import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rydiss import spectra
from rydiss.operators import EigenSolverError
from rydiss.spectra import NoEPError, ParamAxis, family, locate_ep, pt_breaking_threshold, sweep_spectrum

TWO_PI = 2.0 * math.pi


def _one_d(name, axis, **fixed):
    b = family(name, **fixed)
    return lambda x: b(**{axis: x})


def test_param_axis_validation():
    with pytest.raises(ValueError):
        ParamAxis("x", (1.0,))
    with pytest.raises(ValueError):
        ParamAxis("x", (0.0, 2.0, 1.0))
    assert len(ParamAxis.linspace("x", 0, 1, 5)) == 5


def test_unknown_family():
    with pytest.raises(KeyError):
        family("nope")


def test_single_atom_ep():
    ep = locate_ep(_one_d("single_atom", "w_over_gamma"), (0.0, 1.0))
    assert ep.location == pytest.approx(0.25, abs=1e-6)
    lo, hi = ep.bracket
    assert lo <= ep.location <= hi and hi - lo <= 1e-6


def test_noninteracting_pair_ep_is_single_atom_ep_times_sqrt2():
    single = locate_ep(_one_d("single_atom", "w_over_gamma"), (0.0, 1.0)).location
    pair = locate_ep(_one_d("pair_exchange", "wc_over_gamma", V_over_gamma=0.0), (0.0, 1.0)).location
    assert pair == pytest.approx(math.sqrt(2) / 4, abs=1e-4)
    assert pair == pytest.approx(math.sqrt(2) * single, abs=1e-6)


def test_ep_gap_not_larger_than_bracket_ends():
    f = _one_d("pair_exchange", "wc_over_gamma", V_over_gamma=86.0)
    ep = locate_ep(f, (0.5, 15.0))
    g = lambda x: spectra.gap_function(f, x)
    assert ep.gap_at_location <= g(ep.bracket[0]) and ep.gap_at_location <= g(ep.bracket[1])


def test_strong_exchange_moves_ep():
    ep = locate_ep(_one_d("pair_exchange", "wc_over_gamma", V_over_gamma=86.0), (0.5, 15.0))
    assert 6.3 <= ep.location <= 7.7
    assert ep.location == pytest.approx(6.576418, abs=1e-5)  # regression pin


@pytest.mark.parametrize("scale", [0.01, 0.37, 25.0])
def test_ep_invariant_under_frequency_rescaling(scale):
    ref = locate_ep(_one_d("pair_exchange", "wc_over_gamma", V_over_gamma=20.0), (0.5, 10.0))
    other = locate_ep(_one_d("pair_exchange", "wc_over_gamma", V_over_gamma=20.0, gamma=scale), (0.5, 10.0))
    assert other.location == pytest.approx(ref.location, abs=1e-9)


def test_hermitian_family_has_no_ep():
    with pytest.raises(NoEPError):
        locate_ep(lambda x: np.array([[0.0, x], [x, 1.0]]), (-1.0, 1.0))
    with pytest.raises(NoEPError):
        locate_ep(_one_d("single_atom", "w_over_gamma", gamma=0.0), (0.0, 1.0))


def test_boundary_minimum_is_not_an_ep():
    with pytest.raises(NoEPError):
        locate_ep(_one_d("single_atom", "w_over_gamma"), (1.0, 2.0))


def test_pt_threshold_agrees_with_gap_minimum():
    f = _one_d("pair_exchange", "V_over_gamma", wc_over_gamma=3.5)
    thr = pt_breaking_threshold(f, (0.0, 100.0))
    ep = locate_ep(f, (1.0, 100.0))
    assert 0 < thr < 100
    assert abs(thr - ep.location) <= 2e-6


def test_pt_threshold_absent_for_hermitian_family():
    with pytest.raises(NoEPError):
        pt_breaking_threshold(lambda x: np.array([[0.0, x], [x, 1.0]]), (0.0, 5.0))


@given(st.floats(0.0, 10.0), st.floats(0.0, 100.0), st.floats(0.01, 5.0))
def test_sum_rule(wc, v, gamma):
    h = family("pair_exchange", gamma=gamma)(wc_over_gamma=wc, V_over_gamma=v)
    lam = spectra.eig_general(h).eigenvalues
    assert lam.imag.sum() == pytest.approx(-1.5 * TWO_PI * gamma, rel=1e-10, abs=1e-10)


def test_sweep_shape_and_rows():
    grid = sweep_spectrum(family("pair_exchange"),
                          [ParamAxis.linspace("wc_over_gamma", 0, 10, 7),
                           ParamAxis.linspace("V_over_gamma", 0, 100, 5)])
    assert grid.eigenvalues.shape == (7, 5, 3)
    assert len(list(grid.rows())) == 7 * 5 * 3
    assert grid.builder_id == "pair_exchange"
    assert not np.isnan(grid.eigenvalues).any()


def test_noninteracting_branches_merge_near_ep():
    grid = sweep_spectrum(family("pair_exchange", V_over_gamma=0.0),
                          [ParamAxis.linspace("wc_over_gamma", 0, 3, 301)])
    im = grid.eigenvalues.imag
    spread = im.max(axis=1) - im.min(axis=1)
    below = np.array(grid.axes[0].values) < math.sqrt(2) / 4 - 0.02
    assert np.all(spread[~below][5:] < 1e-6)
    assert np.all(spread[below] > 1e-3)


def test_sweep_records_failures_and_continues():
    def builder(x):
        if x > 0.5:
            raise EigenSolverError("boom")
        return np.diag([x, -x])

    grid = sweep_spectrum(builder, [ParamAxis.linspace("x", 0, 1, 5)])
    assert set(grid.errors) == {(3,), (4,)}
    assert np.isnan(grid.eigenvalues[4]).all()


def test_concurrent_sweep_matches_serial():
    axes = [ParamAxis.linspace("wc_over_gamma", 0, 10, 20), ParamAxis.linspace("V_over_gamma", 0, 50, 9)]
    a = sweep_spectrum(family("pair_exchange"), axes).eigenvalues
    b = sweep_spectrum(family("pair_exchange"), axes, jobs=4).eigenvalues
    assert np.array_equal(a, b)


def _best_subset_hausdorff(small, big):
    best = np.inf
    for sub in itertools.combinations(big, len(small)):
        d = np.abs(np.asarray(small)[:, None] - np.asarray(sub)[None, :])
        best = min(best, max(d.min(axis=1).max(), d.min(axis=0).max()))
    return best


def test_reduced_decay_rates_track_full_spectrum():
    axis = [ParamAxis.linspace("wc_over_w0", 0.05, 5.0, 60)]
    fixed = dict(w_over_gamma=1.0, Vup_over_gamma=500.0, Vdown_over_gamma=250.0)
    red = sweep_spectrum(family("pair_spin_reduced", **fixed), axis).eigenvalues.imag
    full = sweep_spectrum(family("pair_spin_full", **fixed), axis).eigenvalues.imag
    worst = max(_best_subset_hausdorff(r, f) for r, f in zip(red, full))
    assert worst <= 0.05 * TWO_PI
