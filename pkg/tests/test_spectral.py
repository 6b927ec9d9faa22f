import warnings

import numpy as np
import pytest

from blockest.exceptions import EmptyBlock, ModulusTie
from blockest.model import expected_matrix, sample_assignments, sample_graph, validate_model
from blockest.spectral import (align_blocks, cluster_embedding, estimate_rank,
                               plug_in_latent_positions, rank_threshold, relabel,
                               spectral_block_estimate, top_eigenpairs, two_to_infinity_residual)


def noiseless(model, n, seed=0):
    tau = sample_assignments(model, n, seed=seed)
    return expected_matrix(model, tau), tau


class TestTopEigenpairs:
    def test_identity_tie(self):
        with pytest.warns(ModulusTie):
            emb = top_eigenpairs(np.eye(3), 1)
        np.testing.assert_allclose(emb.eigenvalues, [1.0])
        assert np.isclose(np.linalg.norm(emb.U_hat), 1.0)

    def test_noiseless_reconstruction(self, rank1_model):
        P, _ = noiseless(rank1_model, 80)
        emb = top_eigenpairs(P, 1)
        np.testing.assert_allclose(emb.low_rank(), P, atol=1e-12)
        np.testing.assert_allclose(emb.eigenvalues[0], np.linalg.eigvalsh(P)[-1], rtol=1e-12)

    @pytest.mark.parametrize("solver", ["dense", "arpack"])
    def test_residual(self, full_rank_model, solver):
        A = sample_graph(full_rank_model, 700, seed=3).A
        emb = top_eigenpairs(A, 2, solver=solver)
        resid = np.linalg.norm(A @ emb.U_hat - emb.U_hat * emb.eigenvalues)
        assert resid <= 1e-6 * np.linalg.norm(A, 2)

    def test_solvers_agree(self, full_rank_model):
        A = sample_graph(full_rank_model, 600, seed=4).A
        d = top_eigenpairs(A, 2, solver="dense")
        a = top_eigenpairs(A, 2, solver="arpack")
        np.testing.assert_allclose(a.eigenvalues, d.eigenvalues, rtol=1e-10)
        np.testing.assert_allclose(a.U_hat, d.U_hat, atol=1e-8)

    def test_ordering_and_signs(self):
        A = np.diag([1.0, -3.0, 2.0, 3.0])
        emb = top_eigenpairs(A, 4)
        np.testing.assert_allclose(emb.eigenvalues, [3, -3, 2, 1])
        for j in range(4):
            col = emb.U_hat[:, j]
            assert col[np.flatnonzero(np.abs(col) > 1e-12)[0]] > 0

    def test_d_too_large(self):
        with pytest.raises(ValueError):
            top_eigenpairs(np.eye(3), 4)


class TestEstimateRank:
    def test_empty_graph(self):
        assert estimate_rank(np.zeros((10, 10))) == 0

    def test_threshold(self):
        A = np.ones((4, 4))
        assert rank_threshold(A) == 8.0
        assert estimate_rank(A) == 0  # lambda = 4 is not above 8

    def test_rank_one_model(self, rank1_model):
        A = sample_graph(rank1_model, 1500, seed=1).A
        assert estimate_rank(A) == 1

    def test_arpack_path_matches_exact(self, full_rank_model):
        A = sample_graph(full_rank_model, 900, seed=8).A
        t = rank_threshold(A)
        assert estimate_rank(A) == int(np.sum(np.abs(np.linalg.eigvalsh(A)) > t))

    def test_erdos_renyi(self):
        m = validate_model([[0.5]], [1.0])
        d_hat = [estimate_rank(sample_graph(m, 2000, seed=s).A, check_input=False)
                 for s in range(200)]
        assert np.mean(np.equal(d_hat, 1)) >= 0.95


class TestClustering:
    def test_noiseless_perfect(self, full_rank_model):
        P, tau = noiseless(full_rank_model, 200)
        clus = cluster_embedding(top_eigenpairs(P, 2), 2, seed=0)
        assert align_blocks(clus.tau_hat, tau)[1] == 1.0
        assert clus.inertia == pytest.approx(0.0, abs=1e-20)

    def test_single_cluster(self):
        clus = cluster_embedding(np.random.default_rng(0).normal(size=(10, 2)), 1)
        np.testing.assert_array_equal(clus.tau_hat, 0)

    def test_repairs_empty_cluster(self):
        X = np.zeros((6, 1))
        with pytest.warns(Warning):
            clus = cluster_embedding(X, 2, seed=0)
        assert np.all(clus.n_hat > 0)

    def test_exact_recovery_full_rank(self, full_rank_model):
        ok = 0
        for s in range(20):
            g = sample_graph(full_rank_model, 2000, seed=s)
            clus = cluster_embedding(top_eigenpairs(g.A, 2, check_input=False), 2, seed=s)
            ok += align_blocks(clus.tau_hat, g.tau)[1] == 1.0
        assert ok >= 19

    def test_deterministic_given_seed(self, full_rank_model):
        A = sample_graph(full_rank_model, 300, seed=0).A
        emb = top_eigenpairs(A, 2)
        a = cluster_embedding(emb, 2, seed=4).tau_hat
        b = cluster_embedding(emb, 2, seed=4).tau_hat
        np.testing.assert_array_equal(a, b)


class TestSpectralBlockEstimate:
    @pytest.mark.parametrize("fixture", ["rank1_model", "full_rank_model", "rank2_model"])
    def test_noiseless_exact(self, fixture, request):
        model = request.getfixturevalue(fixture)
        P, tau = noiseless(model, 120, seed=1)
        B_hat = spectral_block_estimate(top_eigenpairs(P, model.d), tau, n_blocks=model.K)
        np.testing.assert_allclose(B_hat, model.B, atol=1e-10)

    def test_noiseless_with_rho(self):
        m = validate_model([[0.5, 0.2], [0.2, 0.4]], [0.5, 0.5], rho=0.3)
        P, tau = noiseless(m, 60)
        B_hat = spectral_block_estimate(top_eigenpairs(P, 2), tau, rho=0.3)
        np.testing.assert_allclose(B_hat, m.B, atol=1e-10)

    def test_single_block_matches_er_estimate(self):
        A = sample_graph(validate_model([[0.3]], [1.0]), 150, seed=2).A
        emb = top_eigenpairs(A, 1)
        n = A.shape[0]
        expected = emb.eigenvalues[0] * emb.U_hat[:, 0].sum() ** 2 / n**2
        B_hat = spectral_block_estimate(emb, np.zeros(n, int))
        assert B_hat[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_empty_block(self, rank1_model):
        P, _ = noiseless(rank1_model, 20)
        with pytest.raises(EmptyBlock):
            spectral_block_estimate(top_eigenpairs(P, 1), np.zeros(20, int), n_blocks=2)

    def test_entrywise_error_band(self, full_rank_model):
        # |B_hat - B| <= 5 sigma_kl / n across seeds
        from blockest.asymptotics import sigma_dense
        sd = np.sqrt(sigma_dense(full_rank_model))
        n = 2000
        for s in range(25):
            g = sample_graph(full_rank_model, n, seed=100 + s)
            B_hat = spectral_block_estimate(top_eigenpairs(g.A, 2, check_input=False), g.tau,
                                            n_blocks=2)
            assert np.all(np.abs(B_hat - full_rank_model.B) <= 5 * sd / n)

    def test_plug_in_positions_reproduce_estimate(self, rank2_model):
        g = sample_graph(rank2_model, 400, seed=9)
        emb = top_eigenpairs(g.A, 2)
        B_hat, pi_hat, nu_hat = plug_in_latent_positions(emb, g.tau, n_blocks=3)
        np.testing.assert_allclose(B_hat, spectral_block_estimate(emb, g.tau, n_blocks=3),
                                   atol=1e-12)
        np.testing.assert_allclose(pi_hat, np.bincount(g.tau, minlength=3) / 400)


class TestAlignment:
    def test_identity(self):
        tau = np.array([0, 0, 1, 1, 2])
        psi, agree = align_blocks(tau, tau)
        np.testing.assert_array_equal(psi, [0, 1, 2])
        assert agree == 1.0

    def test_swap(self):
        tau = np.array([0, 0, 1, 1])
        psi, agree = align_blocks(1 - tau, tau)
        np.testing.assert_array_equal(psi, [1, 0])
        assert agree == 1.0
        np.testing.assert_array_equal(relabel(1 - tau, psi), tau)

    def test_independent_labels(self):
        rng = np.random.default_rng(0)
        n = 200_000
        tau = (rng.random(n) < 0.3).astype(int)
        tau_hat = rng.integers(0, 2, n)
        # best permutation agreement of independent labelings is about 1/2
        # whatever pi, since the guess is uniform
        assert align_blocks(tau_hat, tau)[1] == pytest.approx(0.5, abs=0.01)

    def test_independent_labels_skewed_guess(self):
        rng = np.random.default_rng(1)
        n = 200_000
        tau = (rng.random(n) < 0.3).astype(int)
        tau_hat = (rng.random(n) < 0.3).astype(int)
        # agreement = max(0.7^2 + 0.3^2, 2 * 0.7 * 0.3)
        assert align_blocks(tau_hat, tau)[1] == pytest.approx(0.58, abs=0.01)


    def test_constant_guess(self):
        tau = (np.random.default_rng(2).random(100_000) < 0.3).astype(int)
        assert align_blocks(np.zeros_like(tau), tau)[1] == pytest.approx(0.7, abs=0.01)


class TestTwoToInfinity:
    def test_zero(self):
        U = np.linalg.qr(np.random.default_rng(0).normal(size=(30, 3)))[0]
        assert two_to_infinity_residual(U, U) == pytest.approx(0.0, abs=1e-14)

    def test_rotation_absorbed(self):
        rng = np.random.default_rng(1)
        U = np.linalg.qr(rng.normal(size=(30, 3)))[0]
        R = np.linalg.qr(rng.normal(size=(3, 3)))[0]
        assert two_to_infinity_residual(U @ R, U) < 1e-10

    def test_decreases_with_n(self, full_rank_model):
        med = []
        for n in (500, 1000, 2000):
            vals = []
            for s in range(5):
                g = sample_graph(full_rank_model, n, seed=s)
                U = top_eigenpairs(g.P, 2, check_input=False).U_hat
                vals.append(two_to_infinity_residual(top_eigenpairs(g.A, 2).U_hat, U))
            med.append(np.median(vals))
        assert med[0] > med[1] > med[2]
