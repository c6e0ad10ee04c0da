"""Watermarked generation and detection with exact false-positive-rate control.

Three schemes share one keyed pseudo-random function over (context, candidate):

    pf      y_t = argmax_y u_t(y)/T - ln r_t(y);      score_t = -ln r_t(y_t)
    gumbel  y_t = argmax_y u_t(y)/T - ln(-ln r_t(y)); score_t = -ln(1 - r_t(y_t))
    kgw     softmax sample at T after adding kgw_delta to the logits of the
            "green" tokens {y : r_t(y) < kgw_gamma};  score_t = 1[y_t green]

Under the null (text independent of the key, unique contexts) the pf and
gumbel scores are sums of unit exponentials, so the total is Gamma(n - m, 1)
and the detection threshold is that distribution's 1 - alpha quantile.  The
kgw green count is Binomial(n - m, kgw_gamma) and uses a one-sided z-test.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .decode import RandomSource, softmax_probs
from .prf import PrfContext, WatermarkKey, prf_uniform, prf_uniform_vector
from .specfun import gamma_inv_cdf, reg_gamma_q

__all__ = [
    "SCHEME_KINDS",
    "WatermarkScheme",
    "GenerationRecord",
    "DetectionReport",
    "generate",
    "test_score",
    "detect",
    "attack_text",
]

SCHEME_KINDS = ("pf", "gumbel", "kgw")


@dataclass(frozen=True)
class WatermarkScheme:
    """Watermark family plus its generation-time parameters.

    Detection for pf/gumbel depends only on kind and m; temperature matters
    only while generating.
    """

    kind: str
    m: int = 4
    temperature: float = 1.0
    kgw_delta: float = 2.0
    kgw_gamma: float = 0.5

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"scheme kind must be one of {SCHEME_KINDS}")
        if self.m < 1:
            raise ValueError("context width m must be >= 1")
        if not (self.temperature > 0):
            raise ValueError("temperature must be > 0")
        if not (0 < self.kgw_gamma < 1):
            raise ValueError("kgw_gamma must lie strictly between 0 and 1")


@dataclass
class GenerationRecord:
    """Watermarked generation output, with an optional per-step trace of
    (context window, chosen token, r-value) for testing."""

    prompt: list[int]
    output: list[int]
    per_step_trace: list[tuple[tuple[int, ...], int, float]] | None = None


def generate(model, prompt, key: WatermarkKey, scheme: WatermarkScheme, n: int,
             rng: RandomSource | None = None, with_trace: bool = False) -> GenerationRecord:
    """Generate n watermarked tokens from a logits source.

    `model` exposes next_logits(tokens) over a fixed vocabulary; `prompt` must
    supply at least scheme.m tokens of context.  pf and gumbel generation is
    fully deterministic in (model, prompt, key); kgw additionally samples and
    so requires `rng`.
    """
    prompt = [int(t) for t in prompt]
    if len(prompt) < scheme.m:
        raise ValueError(
            f"prompt of length {len(prompt)} cannot seed an m={scheme.m} context"
        )
    if scheme.kind == "kgw" and rng is None:
        raise ValueError("kgw generation samples from the softmax and needs an rng")
    stream = list(prompt)
    out: list[int] = []
    trace: list[tuple[tuple[int, ...], int, float]] | None = [] if with_trace else None
    r_cache: dict[tuple[int, ...], np.ndarray] = {}
    for _ in range(n):
        u = np.asarray(model.next_logits(stream), dtype=float)
        window = tuple(stream[-scheme.m:])
        r = r_cache.get(window)
        if r is None:
            r = prf_uniform_vector(key, window, u.size)
            r_cache[window] = r
        if scheme.kind == "pf":
            y = int(np.argmax(u / scheme.temperature - np.log(r)))
        elif scheme.kind == "gumbel":
            y = int(np.argmax(u / scheme.temperature - np.log(-np.log(r))))
        else:
            boosted = u + scheme.kgw_delta * (r < scheme.kgw_gamma)
            probs = softmax_probs(boosted, scheme.temperature)
            y = int(np.searchsorted(np.cumsum(probs), rng.uniform(), side="right"))
            y = min(y, u.size - 1)
        if trace is not None:
            trace.append((window, y, float(r[y])))
        stream.append(y)
        out.append(y)
    return GenerationRecord(prompt=prompt, output=out, per_step_trace=trace)


def test_score(tokens, key: WatermarkKey, scheme: WatermarkScheme,
               dedup: bool = False) -> tuple[float, int, int]:
    """Cumulative detection score over positions m+1..n of the suspect text.

    Returns (score, positions_scored, duplicate_contexts).  A duplicate is a
    repeated (context window, token) pair; by default duplicates are scored
    like any other position and merely counted, while dedup=True scores each
    unique pair once so the Gamma null calibration stays exact.
    """
    tokens = [int(t) for t in tokens]
    n = len(tokens)
    m = scheme.m
    if n <= m:
        raise ValueError(f"no scoreable positions: text length {n} <= m = {m}")
    score = 0.0
    positions = 0
    duplicates = 0
    seen: set[tuple[tuple[int, ...], int]] = set()
    for t in range(m + 1, n + 1):
        window = tuple(tokens[t - 1 - m: t - 1])
        y = tokens[t - 1]
        pair = (window, y)
        if pair in seen:
            duplicates += 1
            if dedup:
                continue
        else:
            seen.add(pair)
        r = prf_uniform(key, PrfContext(window), y)
        if scheme.kind == "pf":
            score += -math.log(r)
        elif scheme.kind == "gumbel":
            score += -math.log1p(-r)
        else:
            score += 1.0 if r < scheme.kgw_gamma else 0.0
        positions += 1
    return score, positions, duplicates


@dataclass
class DetectionReport:
    """Detection outcome; decision is "watermarked" iff score > threshold."""

    score: float
    positions_scored: int
    p_value: float
    threshold: float
    decision: str
    duplicate_contexts: int
    scheme: WatermarkScheme = field(repr=False)
    alpha: float = field(repr=False)

    def to_json(self) -> str:
        def sig12(x: float) -> float:
            return float(f"{x:.12g}")

        payload = {
            "score": sig12(self.score),
            "positions_scored": self.positions_scored,
            "p_value": sig12(self.p_value),
            "threshold": sig12(self.threshold),
            "decision": self.decision,
            "duplicate_contexts": self.duplicate_contexts,
            "scheme": self.scheme.kind,
            "m": self.scheme.m,
            "alpha": sig12(self.alpha),
        }
        return json.dumps(payload)


def detect(tokens, key: WatermarkKey, scheme: WatermarkScheme, alpha: float,
           dedup: bool = False) -> DetectionReport:
    """Score the suspect text and decide at target false positive rate alpha."""
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie strictly between 0 and 1")
    score, positions, duplicates = test_score(tokens, key, scheme, dedup=dedup)
    if scheme.kind in ("pf", "gumbel"):
        threshold = gamma_inv_cdf(positions, 1.0 - alpha)
        p_value = reg_gamma_q(positions, score)
    else:
        sd = math.sqrt(scheme.kgw_gamma * (1.0 - scheme.kgw_gamma) * positions)
        threshold = scheme.kgw_gamma * positions + ndtri(1.0 - alpha) * sd
        p_value = float(ndtr(-(score - scheme.kgw_gamma * positions) / sd))
    decision = "watermarked" if score > threshold else "not_watermarked"
    return DetectionReport(
        score=score,
        positions_scored=positions,
        p_value=float(p_value),
        threshold=float(threshold),
        decision=decision,
        duplicate_contexts=duplicates,
        scheme=scheme,
        alpha=alpha,
    )


_ATTACK_KINDS = ("delete", "substitute", "insert")


def attack_text(tokens, kind: str, rate: float, rng: RandomSource,
                vocab_size: int | None = None) -> list[int]:
    """Random edit attack: independently per position, delete the token,
    replace it by a uniform random token, or insert a uniform random token
    after it, each with probability `rate`."""
    if kind not in _ATTACK_KINDS:
        raise ValueError(f"attack kind must be one of {_ATTACK_KINDS}")
    if not (0 <= rate < 1):
        raise ValueError("rate must lie in [0, 1)")
    tokens = [int(t) for t in tokens]
    if kind in ("substitute", "insert") and vocab_size is None:
        raise ValueError(f"{kind} attack needs vocab_size to draw random tokens")
    if rate == 0 or not tokens:
        return list(tokens)
    hits = rng.uniform(size=len(tokens)) < rate
    if kind == "delete":
        return [t for t, h in zip(tokens, hits) if not h]
    if kind == "substitute":
        subs = rng.integers(0, vocab_size, size=len(tokens))
        return [int(s) if h else t for t, s, h in zip(tokens, subs, hits)]
    inserts = rng.integers(0, vocab_size, size=len(tokens))
    out: list[int] = []
    for t, ins, h in zip(tokens, inserts, hits):
        out.append(t)
        if h:
            out.append(int(ins))
    return out
