"""Property-based checks of the invariants each module promises."""

import math

import numpy as np
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wavespoof import gmm, handcrafted as hc, io, metrics, signal as sig
from wavespoof import wavedeconv as wd, wavelets as wv

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
signals = st.integers(8, 300).flatmap(lambda n: arrays(np.float64, n, elements=finite))


def score_pairs(min_size=1, max_size=60):
    vals = st.lists(st.floats(-50, 50, allow_nan=False), min_size=min_size, max_size=max_size)
    return st.tuples(vals, vals)


@given(signals, st.floats(0, 0.99))
def test_preemphasis_is_invertible(x, alpha):
    y = sig.preemphasize(x, alpha)
    rec = np.empty_like(y)
    rec[0] = y[0]
    for t in range(1, y.size):
        rec[t] = y[t] + alpha * rec[t - 1]
    np.testing.assert_allclose(rec, x, atol=1e-6 * (1 + np.abs(x).max()))


@given(st.integers(400, 5000))
def test_frame_count_formula(n):
    assert sig.frame(np.zeros(n), 16000).shape[0] == (n - 400) // 160 + 1


@given(arrays(np.float64, (12, 3), elements=finite))
def test_cmvn_standardises(F):
    Z = sig.cmvn(F)
    np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-9)
    std = Z.std(axis=0)
    assert np.all((np.abs(std - 1) < 1e-9) | (std == 0))


@given(arrays(np.float64, (10, 2), elements=finite))
def test_delta_cumsum_recovers_features(F):
    np.testing.assert_allclose(np.cumsum(sig.delta(F), axis=0) + F[0], F, atol=1e-9)


@given(st.floats(0, 8000))
def test_mel_round_trip(f):
    assert math.isclose(hc.mel_to_hz(hc.hz_to_mel(f)), f, rel_tol=1e-9, abs_tol=1e-9)


@given(arrays(np.float64, st.integers(16, 200), elements=st.floats(-10, 10)), st.integers(1, 4))
def test_wpt_conserves_energy(frame, level):
    assume(frame.size >= 2 ** level and np.sum(frame ** 2) > 1e-6)
    tree = hc.wpt(frame, level=level)
    assert tree.n_leaves == 2 ** level
    energy = sum(float(np.sum(c ** 2)) for c in tree.leaf_coeffs)
    assert math.isclose(energy, float(np.sum(frame ** 2)), rel_tol=1e-8)


@given(arrays(np.float64, 64, elements=st.floats(-1, 1)), st.floats(0.1, 10))
def test_cwt_is_linear(x, a):
    np.testing.assert_allclose(wv.cwt(a * x, [1.0, 3.0]), a * wv.cwt(x, [1.0, 3.0]), atol=1e-10)


@given(arrays(np.float64, 512, elements=st.floats(-1, 1)))
def test_scattering_sign_invariance(x):
    cfg = wv.ScatteringConfig(n1=4, n2=1, avg_len=128)
    np.testing.assert_array_equal(wv.scattering(x, cfg), wv.scattering(-x, cfg))


@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=30), st.floats(0, 10),
       arrays(np.float64, 4, elements=st.floats(0.05, 512)))
def test_scale_projection_keeps_bounds(grads, gamma, s):
    for g in grads:
        s = wd.update_scales(s, np.full(4, g), gamma)
        assert np.all((s >= wd.S_MIN) & (s <= wd.S_MAX))


@given(arrays(np.float64, 40, elements=st.floats(-1, 1)), st.floats(-3, 3))
def test_wd_forward_is_linear(x, a):
    s = [0.7, 2.0, 5.0]
    np.testing.assert_allclose(wd.wd_forward(a * x, s, 15), a * wd.wd_forward(x, s, 15), atol=1e-10)


@given(score_pairs())
def test_det_sweep_is_monotone(pair):
    det = metrics.det_sweep(pair)
    assert np.all(np.diff(det.p_miss) >= 0) and np.all(np.diff(det.p_fa) <= 0)
    assert det.p_miss[0] == 0 and det.p_fa[-1] == 0


@given(score_pairs(), st.floats(0.1, 10))
def test_metrics_bounded(pair, beta):
    assert 0 <= metrics.eer(pair) <= 1
    assert 0 <= metrics.min_tdcf(pair, beta) <= max(beta, 1) / min(beta, 1)


int_lists = st.lists(st.integers(-20, 20), min_size=1, max_size=60)


@given(st.tuples(int_lists, int_lists), st.floats(0.1, 10))
def test_metrics_depend_only_on_ranks(pair, beta):
    e = metrics.eer(pair)
    c = metrics.min_tdcf(pair, beta)
    bona, spoof = (3.0 * np.asarray(v) - 7.0 for v in pair)  # exact increasing map
    assert math.isclose(metrics.eer((bona, spoof)), e, abs_tol=1e-12)
    assert math.isclose(metrics.min_tdcf((bona, spoof), beta), c, abs_tol=1e-12)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=20), st.integers(0, 2))
def test_one_hot_fusion_selects_a_system(scores, pick):
    n = len(scores)
    keys = ["bonafide" if i % 2 else "spoof" for i in range(n)]
    sets = [metrics.ScoreSet([f"u{i}" for i in range(n)], keys, np.array(scores) * (k + 1))
            for k in range(3)]
    w = np.zeros(3)
    w[pick] = 1.0
    np.testing.assert_array_equal(metrics.fuse(sets, w).scores, sets[pick].scores)


@given(arrays(np.float64, (30, 2), elements=st.floats(-5, 5)), st.integers(0, 10))
def test_llr_antisymmetry(X, seed):
    rng = np.random.default_rng(seed)
    A = gmm.GmmModel(rng.dirichlet(np.ones(2)), rng.standard_normal((2, 2)), rng.uniform(0.5, 2, (2, 2)))
    B = gmm.GmmModel(rng.dirichlet(np.ones(3)), rng.standard_normal((3, 2)), rng.uniform(0.5, 2, (3, 2)))
    assert gmm.llr_score(X, A, B) == -gmm.llr_score(X, B, A)


@given(st.integers(0, 1000))
def test_em_monotone_and_floored(seed):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(c, rng.uniform(0.2, 2), (40, 2)) for c in rng.uniform(-5, 5, 3)])
    model, trace = gmm.gmm_fit(X, 3, n_iter=25, seed=seed, tol=0, return_trace=True)
    assert np.all(np.diff(trace) >= -1e-8)
    assert np.all(model.variances >= gmm.VAR_FLOOR)
    assert abs(model.weights.sum() - 1) <= 1e-10


@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_archive_round_trip_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("arch") / "a.model"
    io.write_archive(path, "toynet", {"v": values}, {"k": "x y"})
    _, params, meta = io.read_archive(path)
    np.testing.assert_array_equal(params["v"], values)
    assert meta == {"k": "x y"}
