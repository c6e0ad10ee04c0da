"""Experiment runners emitting CSV: closed-form sweeps, null calibration,
detection power, and edit-attack robustness at desk scale.

Every runner is deterministic under a master seed: per-trial randomness comes
from derive_seed(master, label, index), so results do not depend on execution
order or worker count.  Numeric cells are printed with 10 significant digits.
"""

from __future__ import annotations

import csv
import hashlib
import struct

import numpy as np

from . import analysis, textlab, watermark
from .decode import RandomSource, softmax_probs
from .prf import WatermarkKey
from .specfun import gamma_inv_cdf
from .watermark import WatermarkScheme

__all__ = [
    "EXPERIMENT_IDS",
    "derive_seed",
    "run_experiment",
    "write_csv",
]

EXPERIMENT_IDS = ("fig2", "fig3a", "fig3b", "type1", "power", "attacks")

_T_GRID = np.linspace(0.05, 5.0, 200)
_GAP_GRID = np.linspace(0.25, 10.0, 40)


def derive_seed(master: int, label: str, index: int) -> int:
    """Stable 64-bit stream seed for one trial of one experiment."""
    payload = struct.pack("<Q", master & (2**64 - 1)) + label.encode() + struct.pack("<Q", index)
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def write_csv(path, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(c) for c in row])


def _key_for(master: int, label: str, index: int) -> WatermarkKey:
    rng = np.random.default_rng(derive_seed(master, label, index))
    return WatermarkKey(bytes(rng.bytes(32)))


def _suboptimal_probs(gap: float, temperature: float) -> tuple[float, float]:
    u = np.array([gap, 0.0])
    return (
        float(softmax_probs(u, temperature)[1]),
        float(analysis.exact_pf_distribution(u, temperature)[1]),
    )


def run_fig2(seed: int = 0) -> tuple[list[str], list[tuple]]:
    """Suboptimal-token probability: softmax vs permute-and-flip, swept over
    temperature at gap 3 and over gap at temperature 1."""
    rows = []
    for t in _T_GRID:
        sm, pf = _suboptimal_probs(3.0, float(t))
        rows.append(("temperature", 3.0, float(t), sm, pf))
    for gap in _GAP_GRID:
        sm, pf = _suboptimal_probs(float(gap), 1.0)
        rows.append(("gap", float(gap), 1.0, sm, pf))
    header = ["sweep", "gap", "temperature", "softmax_subopt_prob", "pf_subopt_prob"]
    return header, rows


def run_fig3a(seed: int = 0) -> tuple[list[str], list[tuple]]:
    """Per-token detectability of the pf and gumbel watermarks over the same
    two sweeps as fig2."""
    rows = []

    def point(gap, t):
        u = np.array([gap, 0.0])
        pf_det = analysis.expected_pf_testscore(u, t) - 1.0
        gm_det = analysis.expected_gumbel_testscore(softmax_probs(u, t)) - 1.0
        return pf_det, gm_det

    for t in _T_GRID:
        pf_det, gm_det = point(3.0, float(t))
        rows.append(("temperature", 3.0, float(t), pf_det, gm_det))
    for gap in _GAP_GRID:
        pf_det, gm_det = point(float(gap), 1.0)
        rows.append(("gap", float(gap), 1.0, pf_det, gm_det))
    header = ["sweep", "gap", "temperature", "pf_detectability", "gumbel_detectability"]
    return header, rows


def run_fig3b(seed: int = 0, gap: float = 3.0) -> tuple[list[str], list[tuple]]:
    """Detectability vs suboptimality traced over temperature for pf, gumbel,
    and the gumbel score applied to the pf-induced distribution."""
    rows = []
    for scheme in ("pf", "gumbel", "gumbel_on_pf"):
        for pt in analysis.tradeoff_curve(gap, _T_GRID, scheme):
            rows.append((pt.scheme, gap, pt.temperature, pt.suboptimality, pt.detectability))
    header = ["scheme", "gap", "temperature", "suboptimality", "detectability"]
    return header, rows


def _null_text(rng: np.random.Generator, n: int, m: int, vocab: int = 256) -> list[int]:
    # resample until all m-token windows are distinct (collisions are rare)
    while True:
        tokens = rng.integers(0, vocab, size=n).tolist()
        windows = {tuple(tokens[i: i + m]) for i in range(n - m)}
        if len(windows) == n - m:
            return tokens


def run_type1(seed: int = 0, n_texts: int = 3000, n_keys: int = 3,
              n: int = 104, m: int = 4,
              alphas=(0.001, 0.01, 0.1, 0.5)) -> tuple[list[str], list[tuple]]:
    """Empirical false positive rate of the pf detector on key-independent
    random texts, at several target rates and keys."""
    scheme = WatermarkScheme(kind="pf", m=m)
    rows = []
    for ki in range(n_keys):
        key = _key_for(seed, "type1-key", ki)
        scores = np.empty(n_texts)
        for i in range(n_texts):
            rng = np.random.default_rng(derive_seed(seed, f"type1-text-{ki}", i))
            tokens = _null_text(rng, n, m)
            scores[i], _, _ = watermark.test_score(tokens, key, scheme)
        for alpha in alphas:
            threshold = gamma_inv_cdf(n - m, 1.0 - alpha)
            fp = int(np.sum(scores > threshold))
            rows.append((ki, float(alpha), n_texts, fp, fp / n_texts))
    header = ["key_index", "alpha", "trials", "false_positives", "empirical_fpr"]
    return header, rows


def _corpus_model_and_prompts(order: int = 3):
    corpus = textlab.bundled_corpus_text()
    model = textlab.train_ngram(corpus, order=order, smoothing=0.01, tokenizer="byte")
    tokens = model.tokenizer().tokenize(corpus)
    return model, tokens


def _watermarked_runs(model, corpus_tokens, scheme: WatermarkScheme, seed: int,
                      n_runs: int, n: int, label: str) -> list[tuple[WatermarkKey, list[int]]]:
    outs = []
    for i in range(n_runs):
        rng = np.random.default_rng(derive_seed(seed, f"{label}-prompt", i))
        start = int(rng.integers(0, len(corpus_tokens) - scheme.m - 1))
        prompt = corpus_tokens[start: start + max(scheme.m, 8)]
        key = _key_for(seed, f"{label}-key", i)
        rec = watermark.generate(model, prompt, key, scheme, n)
        outs.append((key, rec.output))
    return outs


def run_power(seed: int = 0, n_runs: int = 100, lengths=(30, 50, 100, 150, 200),
              alphas=(0.01, 0.1), m: int = 4,
              temperature: float = 1.0) -> tuple[list[str], list[tuple]]:
    """True positive rate of pf detection vs text length, on the bundled
    3-gram model.  Shorter lengths reuse prefixes of the same generations."""
    model, corpus_tokens = _corpus_model_and_prompts()
    scheme = WatermarkScheme(kind="pf", m=m, temperature=temperature)
    runs = _watermarked_runs(model, corpus_tokens, scheme, seed,
                             n_runs, max(lengths), "power")
    rows = []
    for n in lengths:
        for alpha in alphas:
            hits = 0
            for key, tokens in runs:
                report = watermark.detect(tokens[:n], key, scheme, alpha)
                hits += report.decision == "watermarked"
            rows.append((n, float(alpha), n_runs, hits / n_runs))
    header = ["n", "alpha", "trials", "tpr"]
    return header, rows


def run_attacks(seed: int = 0, n_runs: int = 100, n: int = 200,
                rates=(0.0, 0.1, 0.3), alpha: float = 0.01,
                m: int = 4) -> tuple[list[str], list[tuple]]:
    """Detection score and TPR of pf watermarks after random token deletion."""
    model, corpus_tokens = _corpus_model_and_prompts()
    scheme = WatermarkScheme(kind="pf", m=m)
    runs = _watermarked_runs(model, corpus_tokens, scheme, seed, n_runs, n, "attacks")
    rows = []
    for rate in rates:
        hits = 0
        scores = []
        for i, (key, tokens) in enumerate(runs):
            rng = RandomSource(derive_seed(seed, f"attack-{rate}", i))
            attacked = watermark.attack_text(tokens, "delete", rate, rng)
            report = watermark.detect(attacked, key, scheme, alpha)
            hits += report.decision == "watermarked"
            scores.append(report.score)
        rows.append((float(rate), n_runs, float(np.mean(scores)), hits / n_runs))
    header = ["delete_rate", "trials", "mean_score", "tpr"]
    return header, rows


_RUNNERS = {
    "fig2": run_fig2,
    "fig3a": run_fig3a,
    "fig3b": run_fig3b,
    "type1": run_type1,
    "power": run_power,
    "attacks": run_attacks,
}


def run_experiment(experiment_id: str, out_path, seed: int = 0, **kwargs) -> list[tuple]:
    """Run one experiment and write its CSV; returns the data rows."""
    if experiment_id not in _RUNNERS:
        raise ValueError(f"unknown experiment {experiment_id!r}; expected one of {EXPERIMENT_IDS}")
    header, rows = _RUNNERS[experiment_id](seed=seed, **kwargs)
    write_csv(out_path, header, rows)
    return rows
