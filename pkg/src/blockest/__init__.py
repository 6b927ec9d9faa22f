"""Estimation of the block probability matrix of a stochastic block model.

Spectral (adjacency embedding), naive (per-block edge frequency) and
rank-constrained maximum likelihood estimators, their limiting bias and
variance, and a Monte Carlo harness that checks one against the other.
"""

from .asymptotics import (AsymptoticSummary, asymptotic_summary, fisher_info_2block,
                          fisher_info_3block, mse_at_model, mse_surface, naive_variance,
                          plug_in_theta, sigma_dense, sigma_sparse, theta_dense, theta_sparse)
from .estimators import (AdjacencySpectralEmbedding, NaiveBlockEstimator,
                         RankConstrainedBlockEstimator, SpectralBlockEstimator)
from .likelihood import (SufficientStats, binomial_counts, naive_mle, rank1_mle_2block,
                         rank2_mle_3block)
from .model import (GraphSample, LatentPositions, ModelSpec, latent_positions, sample_adjacency,
                    sample_assignments, sample_graph, validate_model)
from .montecarlo import (CltReport, ReplicateTable, RhoRule, clt_report, er_spectral_estimate,
                         recovery_curve, run_replicates)
from .spectral import (Embedding, align_blocks, cluster_embedding, estimate_rank,
                       spectral_block_estimate, top_eigenpairs, two_to_infinity_residual)

__all__ = [
    "AdjacencySpectralEmbedding", "AsymptoticSummary", "CltReport", "Embedding", "GraphSample",
    "LatentPositions", "ModelSpec", "NaiveBlockEstimator", "RankConstrainedBlockEstimator",
    "ReplicateTable", "RhoRule", "SpectralBlockEstimator", "SufficientStats", "align_blocks",
    "asymptotic_summary", "binomial_counts", "clt_report", "cluster_embedding",
    "er_spectral_estimate", "estimate_rank", "fisher_info_2block", "fisher_info_3block",
    "latent_positions", "mse_at_model", "mse_surface", "naive_mle", "naive_variance",
    "plug_in_theta", "rank1_mle_2block", "rank2_mle_3block", "recovery_curve", "run_replicates",
    "sample_adjacency", "sample_assignments", "sample_graph", "sigma_dense", "sigma_sparse",
    "spectral_block_estimate", "theta_dense", "theta_sparse", "top_eigenpairs",
    "two_to_infinity_residual", "validate_model",
]
