import numpy as np

from anchorsync.datamatrix import (
    build_omega,
    build_rotation_only_omega,
    build_sigma_hat,
    build_t_hat,
    load_matrix_txt,
    save_matrix_txt,
)
from anchorsync.diagnostics import build_ground_truth_decomposition
from anchorsync.geometry import random_rotation
from anchorsync.synthesis import (
    INDEPENDENT,
    GroundTruth,
    ObservationSet,
    generate_ground_truth,
    synthesize_observations,
)


def make_obs(S, s):
    return ObservationSet(np.asarray(S, float), np.asarray(s, float), 0.0, 0.0)


def test_t_hat_zero():
    n, d = 3, 2
    S = np.broadcast_to(np.eye(d), (n, n, d, d))
    assert not build_t_hat(make_obs(S, np.zeros((n, n, d)))).any()


def test_t_hat_hand_example():
    S = np.ones((2, 2, 1, 1))
    s = np.array([[[0.0], [3.0]], [[-3.0], [0.0]]])
    np.testing.assert_array_equal(build_t_hat(make_obs(S, s)), [[3.0, -3.0], [3.0, -3.0]])


def test_t_hat_equals_t_star_when_noiseless(rng):
    gt = generate_ground_truth(9, 3, 2.0, rng)
    obs = synthesize_observations(gt, 0.0, 0.0, rng)
    decomp = build_ground_truth_decomposition(gt, obs)
    np.testing.assert_allclose(build_t_hat(obs), decomp.t_star, atol=1e-12)


def test_sigma_hat_outer_products():
    S = np.broadcast_to(np.eye(2), (2, 2, 2, 2))
    s = np.zeros((2, 2, 2))
    s[0, 1] = [1.0, 0.0]
    s[1, 0] = [0.0, 2.0]
    np.testing.assert_array_equal(build_sigma_hat(make_obs(S, s)), np.diag([1.0, 0.0, 0.0, 4.0]))


def test_sigma_hat_blocks_psd(noisy_instance):
    _, obs = noisy_instance
    sig = build_sigma_hat(obs)
    d = obs.d
    for i in range(obs.n):
        block = sig[i * d : (i + 1) * d, i * d : (i + 1) * d]
        assert np.linalg.eigvalsh(block).min() >= -1e-12
        off = sig[i * d : (i + 1) * d].copy()
        off[:, i * d : (i + 1) * d] = 0
        assert not off.any()


def test_identity_ground_truth_spectrum():
    n, d = 4, 3
    gt = GroundTruth(np.broadcast_to(np.eye(d), (n, d, d)), np.zeros((n, d)))
    obs = synthesize_observations(gt, 0.0, 0.0, np.random.default_rng(0))
    omega = build_omega(obs).omega
    expected = 2 * n * np.eye(n * d) - 2 * np.kron(np.ones((n, n)), np.eye(d))
    np.testing.assert_allclose(omega, expected, atol=1e-12)
    vals = np.linalg.eigvalsh(omega)
    np.testing.assert_allclose(vals[:d], 0.0, atol=1e-10)
    np.testing.assert_allclose(vals[d:], 2 * n, atol=1e-10)


def test_null_space_and_gap(rng):
    for n, d in [(3, 2), (20, 3), (30, 2)]:
        gt = generate_ground_truth(n, d, 1.5, rng)
        omega = build_omega(synthesize_observations(gt, 0.0, 0.0, rng)).omega
        assert np.linalg.norm(omega @ gt.stacked_rotations) <= 1e-8 * n
        vals = np.linalg.eigvalsh(omega)
        assert vals[0] >= -1e-8 * np.linalg.norm(omega)
        assert vals[d] >= 2 * n - 1e-8


def test_symmetric_and_self_consistent(noisy_instance):
    _, obs = noisy_instance
    dm = build_omega(obs)
    n = obs.n
    S = obs.block_matrix()
    S_sym = (S + S.T) / 2
    rest = dm.omega - (2 * n * np.eye(n * obs.d) - 2 * S_sym) - dm.sigma_hat + dm.t_hat @ dm.t_hat.T / (2 * n)
    assert np.abs(rest).max() <= 1e-12
    assert np.abs(dm.omega - dm.omega.T).max() <= 1e-12


def test_independent_mode_symmetrized(rng):
    gt = generate_ground_truth(6, 3, 1.0, rng)
    obs = synthesize_observations(gt, 0.5, 0.5, rng, mirror_mode=INDEPENDENT)
    omega = build_omega(obs).omega
    np.testing.assert_array_equal(omega, omega.T)


def test_gauge_invariance(rng):
    gt = generate_ground_truth(8, 3, 1.0, rng)
    P = random_rotation(rng, 3)
    p = rng.standard_normal(3)
    moved = GroundTruth(gt.rotations @ P, gt.translations @ P + p)
    a = build_omega(synthesize_observations(gt, 0.0, 0.0, rng)).omega
    b = build_omega(synthesize_observations(moved, 0.0, 0.0, rng)).omega
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_rotation_only(noisy_instance):
    _, obs = noisy_instance
    S = obs.block_matrix()
    omega_r = build_rotation_only_omega(obs)
    np.testing.assert_allclose(omega_r, 2 * obs.n * np.eye(obs.n * obs.d) - S - S.T)


def test_text_dump_round_trip(tmp_path, noisy_instance):
    _, obs = noisy_instance
    omega = build_omega(obs).omega
    path = tmp_path / "omega.txt"
    save_matrix_txt(omega, path)
    assert path.read_text().splitlines()[0] == f"{omega.shape[0]} {omega.shape[1]}"
    np.testing.assert_array_equal(load_matrix_txt(path), omega)
