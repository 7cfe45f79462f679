import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annealbench.exceptions import InsufficientDataError, InvalidArgumentError, RefusalToFitError
from annealbench.scaling import (
    REFUSAL_MESSAGE,
    BoundaryFlag,
    EnvelopeCurve,
    EnvelopePoint,
    Family,
    FitStatus,
    PointFlag,
    ScalingModelSelector,
    ScalingRegressor,
    SuccessDecayRegressor,
    TTSSurface,
    detect_fake_speedup,
    evaluate_fit,
    fit_scaling_model,
    fit_success_model,
    fixed_t_curves,
    lower_envelope,
    read_envelopes,
    success_decay_table,
    t_p_curve,
    write_envelopes,
)

from conftest import FAMILY_GENERATORS, SYNTH_N, assert_envelope_dominates


def envelope_of(surface):
    env = lower_envelope(surface)
    assert_envelope_dominates(surface, env)
    return env


def interior_envelope(ns, values):
    return EnvelopeCurve({n: EnvelopePoint(float(v), 10, BoundaryFlag.INTERIOR) for n, v in zip(ns, values)})


def test_fixed_t_curves_projection():
    s = TTSSurface.from_tts([4, 8], [10, 100], [[1, 2], [3, np.nan]])
    curves = fixed_t_curves(s)
    assert [c.t for c in curves] == [10, 100]
    assert curves[0].points == {4: 1.0, 8: 3.0}
    assert curves[1].points == {4: 2.0} and curves[1].gaps == (8,)


def test_t_p_threshold():
    p = [[0.1, 0.6, 0.9], [0.0, 0.2, 0.3]]
    s = TTSSurface.from_success([10, 20], [10, 100, 1000], p)
    tp = t_p_curve(s, 0.5)
    assert tp.points == {10: 100}
    assert tp.unachieved == (20,)


def test_t_p_closed_form():
    ns = np.arange(4, 15)
    ts = 2.0 ** np.arange(0, 20)
    p = 1 - np.exp(-ts[None, :] / 2.0 ** ns[:, None])
    s = TTSSurface.from_success(ns, ts, p)
    tp = t_p_curve(s, 0.5)
    for n in ns:
        expected = min(t for t in ts if t >= math.log(2) * 2.0**n)
        assert tp.points[int(n)] == expected
    envelope_of(s)


def test_t_p_needs_two_t():
    s = TTSSurface.from_success([10], [5], [[0.5]])
    with pytest.raises(InsufficientDataError):
        t_p_curve(s, 0.5)
    with pytest.raises(InsufficientDataError):
        lower_envelope(s)


def test_envelope_crossing_curves():
    ns = np.arange(10, 161, 10)
    s = TTSSurface.from_tts(ns, [1, 2], np.column_stack([10 + ns, 50 + ns / 2]))
    env = envelope_of(s)
    for n in ns:
        pt = env.points[int(n)]
        assert pt.tts_min == min(10 + n, 50 + n / 2)
        if n < 80:
            assert pt.argmin_t == 1
        elif n > 80:
            assert pt.argmin_t == 2
    assert env.points[80].tts_min == 90


def test_envelope_single_n():
    s = TTSSurface.from_tts([12], [1, 10, 100], [[50, 20, 30]])
    env = envelope_of(s)
    assert env.points == {12: EnvelopePoint(20.0, 10, BoundaryFlag.INTERIOR)}


def test_envelope_monotone_all_at_t_min():
    ns, ts = np.arange(5, 30, 5), np.array([10.0, 100.0, 1000.0])
    s = TTSSurface.from_tts(ns, ts, ns[:, None] * ts[None, :])
    env = envelope_of(s)
    assert {p.boundary_flag for p in env.points.values()} == {BoundaryFlag.AT_T_MIN}
    assert env.interior() == {}


def test_envelope_unsolved_row():
    s = TTSSurface.from_success([8, 16], [10, 100], [[0.5, 0.9], [0.0, 0.0]])
    env = envelope_of(s)
    assert env.unsolved == (16,)
    assert list(env.points) == [8]


surfaces = st.integers(1, 6).flatmap(
    lambda nn: st.integers(2, 6).flatmap(
        lambda nt: st.lists(st.floats(0.5, 1e6), min_size=nn * nt, max_size=nn * nt).map(
            lambda v: (nn, nt, np.array(v).reshape(nn, nt)))))


@settings(max_examples=80, deadline=None)
@given(surfaces, st.randoms(use_true_random=False))
def test_envelope_invariances(data, rnd):
    nn, nt, grid = data
    ns, ts = np.arange(1, nn + 1) * 4.0, np.arange(1, nt + 1) * 10.0
    s = TTSSurface.from_tts(ns, ts, grid)
    env = envelope_of(s)
    perm = list(range(nt))
    rnd.shuffle(perm)
    s2 = TTSSurface.from_tts(ns, ts[perm], grid[:, perm])
    assert envelope_of(s2).points == env.points
    # a strictly dominated curve placed strictly inside the grid keeps the envelope
    worse = grid.max(axis=1, keepdims=True) * 2
    ts3 = np.concatenate([ts, [ts[0] + 1]])
    s3 = TTSSurface.from_tts(ns, ts3, np.hstack([grid, worse]))
    env3 = envelope_of(s3)
    assert {n: (p.tts_min, p.argmin_t) for n, p in env3.points.items()} == \
        {n: (p.tts_min, p.argmin_t) for n, p in env.points.items()}


def test_success_fit_noiseless():
    ns = np.arange(10, 61, 10)
    fit = fit_success_model(dict(zip(ns, np.exp(-((ns / 30) ** 2)))))
    assert fit.params["N0"] == pytest.approx(30, rel=1e-9)
    assert fit.quantity == "p_hat"


@settings(max_examples=30, deadline=None)
@given(c=st.floats(0.01, 100.0), n0=st.floats(5.0, 200.0))
def test_success_fit_scale_consistent(c, n0):
    ns = np.arange(10, 61, 10, dtype=float)
    p = np.exp(-((ns / n0) ** 2))
    a = SuccessDecayRegressor().fit(ns, p).n0_
    b = SuccessDecayRegressor().fit(c * ns, p).n0_
    assert b == pytest.approx(c * a, rel=1e-9)


def test_success_fit_noisy_coverage():
    ns = np.arange(10, 61, 10, dtype=float)
    rng = np.random.default_rng(6)
    covered = 0
    for _ in range(100):
        p = np.exp(-((ns / 30) ** 2)) * np.exp(rng.normal(0, 0.05, ns.size))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = fit_success_model(dict(zip(ns, p)))
        lo, hi = fit.ci95["N0"]
        covered += lo <= 30 <= hi
    assert covered >= 90


def test_success_fit_no_decay():
    fit = fit_success_model({10: 1.0, 20: 1.0, 30: 1.0})
    assert fit.params["N0"] == math.inf
    assert "no decay measurable" in fit.notes


def test_success_fit_zero_excluded():
    with pytest.warns(UserWarning, match="excluded"):
        fit = fit_success_model({10: 0.9, 20: 0.6, 30: 0.3, 40: 0.0})
    assert fit.excluded == 1 and fit.n_points == 3
    with pytest.warns(UserWarning):
        with pytest.raises(InsufficientDataError):
            fit_success_model({10: 0.9, 20: 0.6, 30: 0.0})


def test_success_decay_table():
    ns, ts = [10, 20, 30, 40], [10, 100]
    p = np.array([[np.exp(-((n / 20) ** 2)), np.exp(-((n / 25) ** 2))] for n in ns])
    table = success_decay_table(TTSSurface.from_success(ns, ts, p))
    assert table[10].params["N0"] == pytest.approx(20)
    assert table[100].params["N0"] == pytest.approx(25)


@pytest.mark.parametrize("family", list(FAMILY_GENERATORS))
def test_model_selection_noiseless(family):
    y = np.exp(FAMILY_GENERATORS[family](SYNTH_N))
    sel = ScalingModelSelector().fit(SYNTH_N, y)
    assert sel.best_.family is Family(family)
    assert sel.best_.residual_ss < 1e-12
    assert np.allclose(sel.predict(SYNTH_N), y, rtol=1e-6)


def test_exp_quadratic_recovery_and_guard():
    rng = np.random.default_rng(1)
    ns = SYNTH_N
    y = np.exp(1 + 0.002 * ns**2 + rng.normal(0, 0.05, ns.size))
    res = fit_scaling_model(interior_envelope(ns, y))
    assert res.best.family is Family.EXP_QUADRATIC
    assert res.best.params["b"] == pytest.approx(0.002, rel=0.2)
    val, status = evaluate_fit(res.best, ns[-1])
    assert status is FitStatus.INTERPOLATED
    assert val == pytest.approx(math.exp(1 + 0.002 * ns[-1] ** 2), rel=0.25)
    val, status = evaluate_fit(res.best, 2 * ns[-1])
    assert status is FitStatus.EXTRAPOLATED and math.isfinite(val)
    with pytest.raises(InvalidArgumentError):
        evaluate_fit(res.best, 0)


def test_exp_linear_selected():
    rng = np.random.default_rng(2)
    y = np.exp(2 + 0.1 * SYNTH_N + rng.normal(0, 0.05, SYNTH_N.size))
    assert fit_scaling_model(interior_envelope(SYNTH_N, y)).best.family is Family.EXP_LINEAR


def test_refusal_small_envelope():
    with pytest.raises(RefusalToFitError, match=REFUSAL_MESSAGE):
        fit_scaling_model(interior_envelope([10, 20, 30], [1, 2, 4]))


def test_refusal_counts_boundary_points():
    pts = {n: EnvelopePoint(float(n), 10, BoundaryFlag.INTERIOR) for n in (10, 20, 30)}
    pts[40] = EnvelopePoint(40.0, 1, BoundaryFlag.AT_T_MIN)
    pts[50] = EnvelopePoint(50.0, 1000, BoundaryFlag.AT_T_MAX)
    with pytest.raises(RefusalToFitError, match="2 boundary-flagged"):
        fit_scaling_model(EnvelopeCurve(pts))
    pts[60] = EnvelopePoint(60.0, 10, BoundaryFlag.INTERIOR)
    res = fit_scaling_model(EnvelopeCurve(pts))
    assert res.excluded == 2 and res.best.n_points == 4


def test_regressor_sklearn_shape():
    reg = ScalingRegressor(Family.POWER)
    assert reg.get_params() == {"family": Family.POWER, "penalty_per_param": 2.0}
    y = np.exp(1 + 3 * np.log(SYNTH_N))
    reg.fit(SYNTH_N.reshape(-1, 1), y)
    assert reg.fit_.params["b"] == pytest.approx(3)
    with pytest.raises(InvalidArgumentError):
        reg.fit(SYNTH_N, -y)


def fake_speedup_surface():
    # optimal effort t*(N) = 2^(N/4); every tested t is at least t*(N_max)
    ns = np.arange(8, 41, 4, dtype=float)
    ts = 2.0 ** (ns[-1] / 4) * np.array([1, 2, 4, 8])
    p = 1 - 0.001 ** (ts[None, :] / 2.0 ** (ns[:, None] / 4))
    return TTSSurface.from_success(ns, ts, p)


def interior_surface():
    ns = np.arange(8, 41, 4, dtype=float)
    ts = 2.0 ** np.arange(0, 16)
    tstar = 2.0 ** (ns / 4)
    grid = 2.0 ** (ns[:, None] / 5) * (ts[None, :] / tstar[:, None] + tstar[:, None] / ts[None, :])
    return TTSSurface.from_tts(ns, ts, grid)


def test_fake_speedup_positive():
    s = fake_speedup_surface()
    envelope_of(s)
    rep = detect_fake_speedup(s)
    assert rep.verdict
    assert all(PointFlag.SATURATED in rep.flags[n] for n in rep.small_n)


def test_fake_speedup_negative():
    s = interior_surface()
    env = envelope_of(s)
    assert all(p.boundary_flag is BoundaryFlag.INTERIOR for p in env.points.values())
    rep = detect_fake_speedup(s)
    assert not rep.verdict
    assert not any(rep.flags.values())


def test_suspiciously_flat():
    ns = np.arange(4, 21, 4, dtype=float)
    grid = np.column_stack([1000 + ns, 10 * 2 ** (ns / 4)])
    s = TTSSurface.from_tts(ns, [1, 10], grid)
    envelope_of(s)
    checks = {c.t: c for c in detect_fake_speedup(s).flatness}
    assert checks[1].suspiciously_flat and checks[1].ratio < 2 and checks[1].envelope_ratio >= 2
    assert checks[1].intercept == pytest.approx(1000)
    assert not checks[10].suspiciously_flat


def test_envelope_csv_roundtrip(tmp_path):
    env = lower_envelope(interior_surface())
    env = EnvelopeCurve(env.points, "SA", "SK")
    path = tmp_path / "envelope.csv"
    write_envelopes(path, [env])
    assert path.read_text().splitlines()[0] == "solver,problem_class,n,tts_min,argmin_t,boundary_flag"
    back = read_envelopes(path)
    assert back[("SA", "SK")].points == env.points


def test_surface_validation():
    with pytest.raises(InvalidArgumentError):
        TTSSurface.from_tts([1, 1], [1, 2], np.ones((2, 2)))
    with pytest.raises(InvalidArgumentError):
        TTSSurface.from_tts([0, 1], [1, 2], np.ones((2, 2)))
