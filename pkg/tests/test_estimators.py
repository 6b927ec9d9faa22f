import numpy as np
import pytest
from sklearn.base import clone

from blockest.estimators import (AdjacencySpectralEmbedding, NaiveBlockEstimator,
                                 RankConstrainedBlockEstimator, SpectralBlockEstimator)
from blockest.exceptions import NonSymmetric
from blockest.model import sample_graph
from blockest.spectral import align_blocks


class TestAdjacencySpectralEmbedding:
    def test_transform_reproduces_fit(self, full_rank_model):
        A = sample_graph(full_rank_model, 300, seed=0).A
        ase = AdjacencySpectralEmbedding(n_components=2).fit(A)
        np.testing.assert_allclose(ase.transform(A), ase.embedding_.positions(), atol=1e-10)

    def test_unscaled(self, full_rank_model):
        A = sample_graph(full_rank_model, 300, seed=0).A
        ase = AdjacencySpectralEmbedding(n_components=2, scaled=False).fit(A)
        np.testing.assert_allclose(ase.transform(A), ase.eigenvectors_, atol=1e-10)

    def test_auto_rank(self, rank1_model):
        A = sample_graph(rank1_model, 800, seed=1).A
        assert AdjacencySpectralEmbedding().fit(A).n_components_ == 1

    def test_rejects_asymmetric(self):
        A = np.zeros((3, 3))
        A[0, 1] = 1
        with pytest.raises(NonSymmetric):
            AdjacencySpectralEmbedding(1).fit(A)

    def test_get_params_clone(self):
        est = AdjacencySpectralEmbedding(n_components=3, scaled=False)
        assert clone(est).get_params() == {"n_components": 3, "scaled": False, "solver": "auto"}


class TestSpectralBlockEstimator:
    def test_known_labels_match_functional_api(self, rank2_model):
        from blockest.spectral import spectral_block_estimate, top_eigenpairs
        g = sample_graph(rank2_model, 300, seed=0)
        est = SpectralBlockEstimator(n_blocks=3, n_components=2).fit(g.A, g.tau)
        expected = spectral_block_estimate(top_eigenpairs(g.A, 2), g.tau, n_blocks=3)
        np.testing.assert_allclose(est.B_hat_, expected, atol=1e-12)
        np.testing.assert_array_equal(est.labels_, g.tau)

    def test_clusters_and_recovers(self, full_rank_model):
        g = sample_graph(full_rank_model, 1000, seed=2)
        est = SpectralBlockEstimator(n_blocks=2, n_components=2, random_state=0).fit(g.A)
        psi, agree = align_blocks(est.labels_, g.tau)
        assert agree == 1.0
        B = est.B_hat_[np.ix_(psi, psi)]
        assert np.abs(B - full_rank_model.B).max() < 0.02
        # full rank: the plug-in correction is tiny
        assert np.abs(est.B_corrected_ - est.B_hat_).max() < 1e-3

    def test_bias_correction_present(self, rank1_model):
        g = sample_graph(rank1_model, 800, seed=3)
        est = SpectralBlockEstimator(n_blocks=2, n_components=1).fit(g.A, g.tau)
        assert est.theta_hat_ is not None
        np.testing.assert_allclose(est.B_corrected_, est.B_hat_ - est.theta_hat_ / 800)
        assert np.all((est.B_hat_clamped_ >= 0) & (est.B_hat_clamped_ <= 1))

    def test_fit_predict(self, full_rank_model):
        g = sample_graph(full_rank_model, 400, seed=4)
        labels = SpectralBlockEstimator(n_blocks=2, n_components=2,
                                        random_state=1).fit_predict(g.A)
        assert labels.shape == (400,)

    def test_clone(self):
        est = SpectralBlockEstimator(n_blocks=3, regime="sparse")
        assert clone(est).get_params()["regime"] == "sparse"


class TestNaiveAndRank:
    def test_naive_requires_labels(self, full_rank_model):
        A = sample_graph(full_rank_model, 50, seed=0).A
        with pytest.raises(ValueError):
            NaiveBlockEstimator(2).fit(A, None)

    def test_naive_matches_frequencies(self, full_rank_model):
        g = sample_graph(full_rank_model, 200, seed=5)
        est = NaiveBlockEstimator(2).fit(g.A, g.tau)
        ones = g.tau == 0
        n1 = ones.sum()
        within = (g.A[np.ix_(ones, ones)].sum() + np.trace(g.A[np.ix_(ones, ones)])) / 2
        assert est.B_hat_[0, 0] == pytest.approx(within / (n1 * (n1 + 1) / 2))

    def test_rank_constrained(self, rank1_model):
        g = sample_graph(rank1_model, 1000, seed=6)
        est = RankConstrainedBlockEstimator("rank1_2block").fit(g.A, g.tau)
        assert est.result_.converged
        np.testing.assert_allclose(est.params_, [0.6, 0.3], atol=0.02)
        assert np.linalg.matrix_rank(est.B_hat_) == 1

    def test_unknown_family(self, rank1_model):
        with pytest.raises(ValueError):
            RankConstrainedBlockEstimator("rank5").fit(np.zeros((4, 4)), [0, 0, 1, 1])
