"""Permute-and-flip decoding and keyed text watermarking.

Decoders that trade perplexity against perturbation stability, exact
next-token distribution analysis, and three watermarking schemes (exponential
noise, Gumbel noise, green-red logit bias) whose detectors control the false
positive rate exactly through the Gamma null distribution of their scores.
"""

from . import analysis, decode, experiments, prf, specfun, textlab, watermark
from .analysis import (
    StabilityReport,
    TradeoffPoint,
    exact_pf_distribution,
    expected_gumbel_testscore,
    expected_pf_testscore,
    expected_utility,
    matched_tradeoff_margin,
    stability_check,
    tradeoff_curve,
)
from .decode import (
    DecoderConfig,
    RandomSource,
    baseline_select,
    gumbel_sample,
    pf_sample_permute_flip,
    pf_sample_rnm,
    pf_sample_top_p,
    softmax_probs,
    top_p_indices,
)
from .prf import PrfContext, WatermarkKey, context_at, prf_uniform
from .specfun import gamma_inv_cdf, harmonic, log_gamma, reg_gamma_p, shannon_entropy
from .textlab import FixedLogitsModel, NGramModel, perplexity, train_ngram
from .watermark import (
    DetectionReport,
    GenerationRecord,
    WatermarkScheme,
    attack_text,
    detect,
    generate,
    test_score,
)

__version__ = "0.1.0"
