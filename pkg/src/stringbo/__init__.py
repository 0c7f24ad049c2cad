"""Bayesian optimization over string spaces with string kernels."""

from .acquisition import AcquisitionContext, expected_improvement, expected_improvement_batch
from .bo import BoConfig, BoRunError, BoTrace, StepRecord, run, run_replicated
from .ga import GaConfig, maximize, random_search_maximize
from .gp import Dataset, GpModel, fit, log_marginal_likelihood
from .grammar import ARITHMETIC_GRAMMAR, Grammar, SamplerConfig, load_grammar, sample_tree
from .kernels import (
    GramMatrix,
    KernelParams,
    as_tokens,
    cross_gram,
    gram,
    ngram_feature_kernel,
    onehot_linear_kernel,
    ssk,
    ssk_normalized,
    ssk_split,
)
from .spaces import (
    Alphabet,
    CandidateSet,
    GrammarConstrained,
    LocallyConstrained,
    StringSpace,
    Unconstrained,
    load_candidate_set,
    load_codon_table,
    load_local_constraints,
    protein_space,
)

__all__ = [
    "AcquisitionContext",
    "Alphabet",
    "ARITHMETIC_GRAMMAR",
    "BoConfig",
    "BoRunError",
    "BoTrace",
    "CandidateSet",
    "Dataset",
    "GaConfig",
    "GpModel",
    "Grammar",
    "GramMatrix",
    "GrammarConstrained",
    "KernelParams",
    "LocallyConstrained",
    "SamplerConfig",
    "StepRecord",
    "StringSpace",
    "Unconstrained",
    "as_tokens",
    "cross_gram",
    "expected_improvement",
    "expected_improvement_batch",
    "fit",
    "gram",
    "load_candidate_set",
    "load_codon_table",
    "load_grammar",
    "load_local_constraints",
    "log_marginal_likelihood",
    "maximize",
    "ngram_feature_kernel",
    "onehot_linear_kernel",
    "protein_space",
    "random_search_maximize",
    "run",
    "run_replicated",
    "sample_tree",
    "ssk",
    "ssk_normalized",
    "ssk_split",
]

__version__ = "0.1.0"
