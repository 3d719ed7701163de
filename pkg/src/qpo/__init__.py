"""Discrete batched Bayesian optimization with multipoint probability of optimality (qPO)."""

from .acquisition import (
    AcquisitionResult,
    PolicyConfig,
    greedy_select,
    mc_batch_policy,
    prefilter,
    pts_select,
    qpo_conditional_batch,
    qpo_scores,
    qpo_select,
    random10k_select,
    tsrsr_select,
    ucb_select,
)
from .fingerprints import CandidatePool, CountFingerprint, load_pool, pairwise_tanimoto, tanimoto
from .gaussian import GaussianPosterior, SampleMatrix, cholesky_with_jitter, fit_gaussian, prob_max_analytic, sample_joint
from .loop import CampaignConfig, CampaignState, lookup_oracle, run_campaign, synthetic_pool
from .metrics import cumulative_regret, diversity_stats, fraction_top, top_k_average
from .surrogate import GpHyperparams, TrainingSet, fit, mll, posterior

__version__ = "0.1.0"
