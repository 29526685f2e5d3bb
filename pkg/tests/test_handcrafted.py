import math

import numpy as np
import pytest
from sklearn.base import clone

import oracles
from wavespoof import handcrafted as hc
from wavespoof._validation import ValidationError


def test_mel_scale():
    assert hc.hz_to_mel(0.0) == 0.0
    assert hc.hz_to_mel(700.0) == pytest.approx(2595 * math.log10(2), abs=1e-12)
    for f in (100.0, 1000.0, 8000.0):
        assert hc.mel_to_hz(hc.hz_to_mel(f)) == pytest.approx(f, rel=1e-9)
    with pytest.raises(ValidationError):
        hc.hz_to_mel(-1.0)


def test_mel_filterbank_shape_and_peaks():
    fb = hc.mel_filterbank(20, 512, 16000)
    assert fb.weights.shape == (20, 257)
    assert np.all(np.diff(fb.bins) > 0)
    k = np.arange(257)
    for m in range(20):
        assert fb.weights[m, fb.bins[m + 1]] == 1.0
        outside = (k < fb.bins[m]) | (k > fb.bins[m + 2])
        assert not np.any(fb.weights[m, outside])


def test_mel_filterbank_rejects_crowded_bins():
    with pytest.raises(ValidationError):
        hc.mel_filterbank(120, 128, 16000)


def test_db4_filters_orthonormal():
    h, g = hc.wavelet_filters("db4")
    assert h.size == 8
    assert np.dot(h, h) == pytest.approx(1.0, abs=1e-15)
    assert np.sum(h) == pytest.approx(math.sqrt(2), abs=1e-15)
    for shift in (2, 4, 6):
        assert abs(np.dot(h[shift:], h[:-shift])) < 1e-15
    assert abs(np.dot(h, g)) < 1e-15
    with pytest.raises(ValidationError):
        hc.wavelet_filters("haar7")


def test_mfcc_dims(tone_1s):
    assert hc.mfcc(tone_1s, 16000).shape == (98, 40)
    full = hc.mfcc(tone_1s, 16000, hc.MfccConfig(dynamic_only=False, use_vad=False))
    assert full.shape == (98, 60)
    np.testing.assert_array_equal(hc.mfcc(tone_1s), hc.mfcc(tone_1s.copy()))


def test_mfcc_static_block_matches_direct_computation(tone_1s):
    cfg = hc.MfccConfig(dynamic_only=False, use_vad=False, use_cmvn=False)
    feats = hc.mfcc(tone_1s, 16000, cfg)
    x = tone_1s[:400].copy()
    x[1:] -= 0.97 * tone_1s[:399]
    x *= 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(400) / 399)
    P = oracles.dft_power(x, 512)
    fb = hc.mel_filterbank()
    logfb = np.log(fb.weights @ P + 1e-10)
    c = oracles.dct_ortho(logfb, 20)
    c[0] = np.log(P.sum() + 1e-10)
    np.testing.assert_allclose(feats[0, :20], c, atol=1e-8)
    np.testing.assert_array_equal(feats[0, 20:], 0.0)


def test_mfcc_rejects_too_many_ceps(tone_1s):
    with pytest.raises(ValidationError):
        hc.mfcc(tone_1s, 16000, hc.MfccConfig(n_ceps=30))


def test_wpt_leaves_and_energy(rng):
    frame = rng.standard_normal(400)
    tree = hc.wpt(frame, level=4)
    assert tree.n_leaves == 16
    energy = sum(float(np.sum(c ** 2)) for c in tree.leaf_coeffs)
    assert energy == pytest.approx(float(np.sum(frame ** 2)), rel=1e-8)
    for ours, ref in zip(tree.leaf_coeffs, oracles.wpt_leaves_loop(frame, 4)):
        np.testing.assert_allclose(ours, ref, atol=1e-12)


def test_wpt_constant_frame_has_no_detail_energy():
    tree = hc.wpt(np.full(256, 3.0), level=4)
    assert np.sum(tree.leaf_coeffs[0] ** 2) > 0
    for leaf in tree.leaf_coeffs[1:]:
        np.testing.assert_allclose(leaf, 0.0, atol=1e-12)


def test_wpt_leaves_are_frequency_ordered():
    n = 512
    for band in range(16):
        f = (band + 0.5) / 32.0  # centre of leaf `band` in cycles/sample
        x = np.cos(2 * np.pi * f * np.arange(n))
        e = [np.sum(c ** 2) for c in hc.wpt(x, level=4).leaf_coeffs]
        assert int(np.argmax(e)) == band


def test_band_overlap_weights_rows_sum_to_one():
    W = hc._band_overlap_weights(16, 20, 16000)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(W, oracles.mel_overlap_weights(16, 20, 16000), atol=1e-12)
    assert np.all(W.max(axis=1) > 0)


def test_pca_rank_one_and_decorrelation(rng):
    t = rng.standard_normal(200)
    X = np.column_stack([t, 2 * t + 1])
    pca = hc.pca_fit(X, 2)
    ev = pca.explained_variance
    assert ev[0] / ev.sum() > 0.99999
    Y = hc.pca_apply(hc.pca_fit(rng.standard_normal((500, 5)) @ rng.standard_normal((5, 5)), 5),
                     rng.standard_normal((500, 5)) @ np.eye(5))
    assert Y.shape == (500, 5)
    Z = rng.standard_normal((400, 4)) @ rng.standard_normal((4, 4))
    p = hc.pca_fit(Z, 4)
    C = np.cov(hc.pca_apply(p, Z).T, bias=True)
    np.testing.assert_allclose(C - np.diag(np.diag(C)), 0.0, atol=1e-8)


def test_pca_known_spectrum():
    # population covariance with eigenvalues {3, 1, 0}
    Q, _ = np.linalg.qr(np.array([[1.0, 2, 0], [0, 1, 1], [1, 0, 1]]))
    v1, v2 = Q[:, 0], Q[:, 1]
    X = np.array([math.sqrt(6) * v1, -math.sqrt(6) * v1, math.sqrt(2) * v2, -math.sqrt(2) * v2])
    pca = hc.pca_fit(X, 3)
    np.testing.assert_allclose(pca.explained_variance, [3.0, 1.0, 0.0], atol=1e-8)
    assert abs(abs(pca.projection[0] @ v1) - 1) < 1e-8


def test_pca_errors(rng):
    with pytest.raises(ValidationError):
        hc.pca_fit(rng.standard_normal((10, 3)), 4)
    pca = hc.pca_fit(rng.standard_normal((10, 3)), 2)
    with pytest.raises(ValidationError):
        hc.pca_apply(pca, np.ones((2, 4)))


def test_mwpc_pipeline(rng, tone_1s):
    X = [tone_1s, rng.standard_normal(16000) * 0.1]
    est = hc.MWPC().fit(X)
    feats = est.transform(X)
    assert feats[0].shape == (98, 12)
    np.testing.assert_allclose(feats[1], hc.pca_apply(est.pca_, oracles.mwpc_mel_loop(X[1])),
                               atol=1e-8)
    silent = est.transform([np.zeros(4000)])[0]
    assert np.all(np.isfinite(silent))


def test_mwpc_oracle_small(rng):
    x = rng.standard_normal(1200) * 0.2
    np.testing.assert_allclose(hc.mwpc_mel_energies(x), oracles.mwpc_mel_loop(x), atol=1e-8)


def test_estimators_follow_sklearn_api(tone_1s):
    m = hc.MFCC(dynamic_only=False)
    assert clone(m).get_params()["dynamic_only"] is False
    assert m.fit().n_features_out_ == 60
    assert m.fit_transform([tone_1s])[0].shape[1] == 60
    with pytest.raises(Exception):
        hc.MWPC().transform([tone_1s])
