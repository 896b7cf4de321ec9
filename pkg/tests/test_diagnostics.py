import csv
import io

import numpy as np
import pytest

from anchorsync.diagnostics import (
    build_ground_truth_decomposition,
    check_eigen_gap,
    check_norm_bounds,
    decomposition_residuals,
    measured_rates,
    report_csv,
    structured_part,
)
from anchorsync.errors import DiagnosticsUnavailableError
from anchorsync.geometry import relative
from anchorsync.synthesis import (
    INDEPENDENT,
    GroundTruth,
    generate_ground_truth,
    observations_from_motions,
    synthesize_observations,
)


def decomposition(rng, n=10, d=2, sigma1=0.4, sigma2=0.3, scale=1.0):
    gt = generate_ground_truth(n, d, scale, rng)
    obs = synthesize_observations(gt, sigma1, sigma2, rng)
    return gt, build_ground_truth_decomposition(gt, obs)


def test_noiseless_terms_vanish(rng):
    gt, dec = decomposition(rng, sigma1=0.0, sigma2=0.0)
    assert not dec.e_noise.any()
    assert np.abs(dec.delta).max() <= 1e-12
    n = gt.n
    R = dec.r_star
    expected = 2 * n * np.eye(n * 2) - 2 * R @ R.T + dec.sigma_star - dec.t_star @ dec.t_star.T / (2 * n)
    np.testing.assert_allclose(dec.h, expected, atol=1e-10)


@pytest.mark.parametrize("d", [2, 3])
def test_decomposition_identities(d, rng):
    _, dec = decomposition(rng, d=d)
    res = decomposition_residuals(dec)
    assert res["h_decomposition"] <= 1e-8
    assert res["sigma_star_identity"] <= 1e-8
    assert res["centered_blockdiag_vanishes"] <= 1e-10
    h_model = structured_part(dec) + dec.delta
    assert np.linalg.norm(dec.h - h_model) <= 1e-8 * np.linalg.norm(dec.h)


def test_h_is_shifted_omega(rng):
    _, dec = decomposition(rng)
    n, d = dec.n, dec.d
    np.testing.assert_allclose(dec.h, dec.omega - dec.sigma2**2 * (n - 1) * np.eye(n * d))
    np.testing.assert_allclose(dec.laplacian, n * np.eye(n) - np.ones((n, n)))


def test_xi_block_diagonal_psd(rng):
    _, dec = decomposition(rng, d=3)
    d = dec.d
    for i in range(dec.n):
        row = dec.xi_star[i * d : (i + 1) * d].copy()
        assert np.linalg.eigvalsh(row[:, i * d : (i + 1) * d]).min() >= -1e-12
        row[:, i * d : (i + 1) * d] = 0
        assert not row.any()


def test_norm_bounds_zero_translations(rng):
    gt = GroundTruth(generate_ground_truth(6, 3, 1.0, rng).rotations, np.zeros((6, 3)))
    dec = build_ground_truth_decomposition(gt, synthesize_observations(gt, 0.1, 0.1, rng))
    for c in check_norm_bounds(dec, gt):
        assert c.value == pytest.approx(0.0, abs=1e-14) and c.bound == 0.0 and c.satisfied


def test_norm_bounds_random_and_adversarial(rng):
    for _ in range(5):
        gt, dec = decomposition(rng, n=50, d=3)
        assert all(c.satisfied for c in check_norm_bounds(dec, gt))
    base = generate_ground_truth(20, 3, 0.1, rng)
    t = base.translations.copy()
    t[0] += 100.0
    gt = GroundTruth(base.rotations, t - t.mean(axis=0))
    dec = build_ground_truth_decomposition(gt, synthesize_observations(gt, 0.1, 0.1, rng))
    assert all(c.satisfied for c in check_norm_bounds(dec, gt))


def test_eigen_gap_noiseless(rng):
    _, dec = decomposition(rng, n=12, d=3, sigma1=0.0, sigma2=0.0)
    low, high = check_eigen_gap(dec)
    assert low.value <= 1e-8 and low.satisfied
    assert high.bound >= 2 * dec.n - 1e-8 and high.satisfied


def test_eigen_gap_identity_ground_truth():
    gt = GroundTruth(np.broadcast_to(np.eye(3), (5, 3, 3)), np.zeros((5, 3)))
    dec = build_ground_truth_decomposition(gt, synthesize_observations(gt, 0.0, 0.0, np.random.default_rng(0)))
    _, high = check_eigen_gap(dec)
    assert high.bound == pytest.approx(10.0, abs=1e-10)


def test_eigen_gap_small_delta(rng):
    for _ in range(10):
        _, dec = decomposition(rng, n=60, d=3, sigma1=0.1, sigma2=0.1)
        assert np.linalg.norm(dec.delta, 2) <= dec.n / 4
        assert all(c.satisfied for c in check_eigen_gap(dec))


def test_rates_are_logged_not_judged(rng):
    gt, dec = decomposition(rng, n=20, d=3)
    rows = measured_rates(dec, gt, 0.4)
    assert {r.quantity for r in rows} >= {"norm_E", "norm_Delta", "min_eig_Xi_minus_Upsilon"}
    assert all(r.satisfied is None for r in rows)
    psd = next(r for r in rows if r.quantity == "min_eig_Xi_minus_Upsilon")
    assert psd.value >= -1e-8


def test_report_csv(rng):
    gt, dec = decomposition(rng)
    text = report_csv(check_norm_bounds(dec, gt))
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["quantity", "value", "bound", "ratio"]
    assert len(rows) == 5
    for _, value, bound, ratio in rows[1:]:
        assert float(ratio) == pytest.approx(float(value) / float(bound))


def test_unavailable_without_noise_levels(rng):
    gt = generate_ground_truth(4, 3, 1.0, rng)
    grid = [[relative(a, b) for b in gt.motions] for a in gt.motions]
    with pytest.raises(DiagnosticsUnavailableError):
        build_ground_truth_decomposition(gt, observations_from_motions(grid))
    with pytest.raises(DiagnosticsUnavailableError):
        build_ground_truth_decomposition(gt, synthesize_observations(gt, 0.1, 0.1, rng, mirror_mode=INDEPENDENT))
