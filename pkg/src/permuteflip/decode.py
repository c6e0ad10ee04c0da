"""Sampling decoders over logit vectors.

Greedy, softmax, top-k and top-p baselines, permute-and-flip in its
shuffle-and-accept form, and the two report-noisy-max forms: exponential noise
(equivalent to permute-and-flip) and Gumbel noise (equivalent to softmax).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "METHODS",
    "RandomSource",
    "DecoderConfig",
    "softmax_probs",
    "log_softmax_probs",
    "pf_sample_permute_flip",
    "pf_sample_rnm",
    "gumbel_sample",
    "baseline_distribution",
    "baseline_select",
    "top_p_indices",
    "pf_sample_top_p",
    "sample_token",
]

METHODS = ("greedy", "softmax", "topk", "topp", "pf_permute_flip", "pf_rnm")

# Largest double strictly below 1; uniforms are clamped into [2^-65, 1 - 2^-53]
# so that log(u) and log(-log(u)) are always finite.
_MAX_OPEN = np.nextafter(1.0, 0.0)
_MIN_OPEN = 2.0 ** -65


class RandomSource:
    """Seedable stream of uniform variates in the open interval (0, 1).

    Uniforms are built from 64-bit PCG64 words as (h + 0.5) / 2^64, so exact
    0.0 and 1.0 are unreachable and replay is deterministic given the seed.
    """

    def __init__(self, seed=None):
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def uniform(self, size=None):
        h = self._gen.integers(0, 2**64, size=size, dtype=np.uint64)
        u = (np.asarray(h, dtype=np.float64) + 0.5) * 2.0**-64
        u = np.clip(u, _MIN_OPEN, _MAX_OPEN)
        return float(u) if size is None else u

    def exponential(self, size=None):
        return -np.log(self.uniform(size=size))

    def gumbel(self, size=None):
        return -np.log(-np.log(self.uniform(size=size)))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)

    def bytes(self, n: int) -> bytes:
        return self._gen.bytes(n)


@dataclass(frozen=True)
class DecoderConfig:
    """Decoder choice plus its parameters; k applies to topk, p to topp."""

    method: str
    temperature: float = 1.0
    k: int | None = None
    p: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not (self.temperature > 0):
            raise ValueError("temperature must be > 0")
        if self.method == "topk":
            if self.k is None or self.k < 1:
                raise ValueError("topk requires k >= 1")
        if self.method == "topp":
            if self.p is None or not (0 < self.p <= 1):
                raise ValueError("topp requires 0 < p <= 1")


def _check_logits(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("logits must be a nonempty 1-d vector")
    if np.any(~np.isfinite(u)):
        raise ValueError("logits must be finite")
    return u


def softmax_probs(u, temperature: float) -> np.ndarray:
    """Max-subtracted softmax of u / temperature; sums to 1 exactly."""
    u = _check_logits(u)
    if not (temperature > 0):
        raise ValueError("temperature must be > 0")
    z = np.exp((u - u.max()) / temperature)
    return z / z.sum()


def log_softmax_probs(u, temperature: float) -> np.ndarray:
    u = _check_logits(u)
    if not (temperature > 0):
        raise ValueError("temperature must be > 0")
    x = (u - u.max()) / temperature
    return x - np.log(np.exp(x).sum())


def pf_sample_permute_flip(u, temperature: float, rng: RandomSource, size=None):
    """Permute-and-flip: shuffle the vocabulary, then accept the first token
    whose Bernoulli(exp((u[y] - max u) / T)) flip comes up heads.

    The argmax token accepts with probability one, so the scan always stops.
    Returns a token id, or an array of ids when size is given.
    """
    u = _check_logits(u)
    if not (temperature > 0):
        raise ValueError("temperature must be > 0")
    accept = np.exp((u - u.max()) / temperature)
    if size is None:
        for y in rng.permutation(u.size):
            if rng.uniform() < accept[y]:
                return int(y)
        raise AssertionError("unreachable: argmax token always accepts")
    out = np.empty(size, dtype=np.int64)
    done, chunk = 0, 1 << 17
    while done < size:
        b = min(chunk, size - done)
        perm = np.argsort(rng.uniform(size=(b, u.size)), axis=1)
        heads = rng.uniform(size=(b, u.size)) < accept[perm]
        first = heads.argmax(axis=1)
        out[done:done + b] = perm[np.arange(b), first]
        done += b
    return out


def pf_sample_rnm(u, temperature: float, rng: RandomSource, size=None, noise=None):
    """Report-noisy-max form of permute-and-flip: argmax of u/T plus unit
    exponential noise, ties broken toward the lowest token id.

    `noise` bypasses the rng with a fixed noise vector (test hook).
    """
    u = _check_logits(u)
    if not (temperature > 0):
        raise ValueError("temperature must be > 0")
    base = u / temperature
    if noise is not None:
        noise = np.asarray(noise, dtype=float)
        if noise.shape != u.shape:
            raise ValueError("noise must match the logits shape")
        return int(np.argmax(base + noise))
    if size is None:
        return int(np.argmax(base + rng.exponential(size=u.size)))
    out = np.empty(size, dtype=np.int64)
    done, chunk = 0, 1 << 17
    while done < size:
        b = min(chunk, size - done)
        out[done:done + b] = np.argmax(base + rng.exponential(size=(b, u.size)), axis=1)
        done += b
    return out


def gumbel_sample(u, temperature: float, rng: RandomSource, size=None):
    """Gumbel-max sampler: argmax of u/T plus Gumbel(0,1) noise, which draws
    exactly from softmax_probs(u, T)."""
    u = _check_logits(u)
    if not (temperature > 0):
        raise ValueError("temperature must be > 0")
    base = u / temperature
    if size is None:
        return int(np.argmax(base + rng.gumbel(size=u.size)))
    out = np.empty(size, dtype=np.int64)
    done, chunk = 0, 1 << 17
    while done < size:
        b = min(chunk, size - done)
        out[done:done + b] = np.argmax(base + rng.gumbel(size=(b, u.size)), axis=1)
        done += b
    return out


def top_p_indices(u, temperature: float, p: float) -> np.ndarray:
    """Token ids of the top-p nucleus: the smallest probability-sorted prefix
    whose mass reaches p, boundary token included, in ascending id order."""
    u = _check_logits(u)
    if not (0 < p <= 1):
        raise ValueError("p must lie in (0, 1]")
    probs = softmax_probs(u, temperature)
    order = np.argsort(-probs, kind="stable")
    csum = np.cumsum(probs[order])
    cut = int(np.searchsorted(csum, p, side="left"))
    return np.sort(order[: cut + 1])


def baseline_distribution(u, cfg: DecoderConfig) -> np.ndarray:
    """Exact next-token distribution of the greedy / topk / topp baselines.

    greedy: point mass on the argmax (lowest id wins ties).
    topk:   softmax restricted to the k highest-logit tokens, renormalized.
    topp:   softmax restricted to the nucleus of top_p_indices, renormalized.
    """
    u = _check_logits(u)
    if cfg.method == "greedy":
        out = np.zeros(u.size)
        out[int(np.argmax(u))] = 1.0
        return out
    if cfg.method == "topk":
        k = min(cfg.k, u.size)
        order = np.argsort(-u, kind="stable")
        keep = order[:k]
    elif cfg.method == "topp":
        keep = top_p_indices(u, cfg.temperature, cfg.p)
    else:
        raise ValueError(f"baseline_distribution does not handle method {cfg.method!r}")
    probs = softmax_probs(u, cfg.temperature)
    out = np.zeros(u.size)
    out[keep] = probs[keep]
    return out / out.sum()


def _sample_from(dist: np.ndarray, rng: RandomSource, size=None):
    csum = np.cumsum(dist)
    draws = rng.uniform(size=size)
    idx = np.searchsorted(csum, draws * csum[-1], side="right")
    idx = np.minimum(idx, dist.size - 1)
    return int(idx) if size is None else idx.astype(np.int64)


def baseline_select(u, cfg: DecoderConfig, rng: RandomSource, size=None):
    """Sample from a greedy / topk / topp baseline decoder."""
    if cfg.method not in ("greedy", "topk", "topp"):
        raise ValueError(f"baseline_select expects greedy/topk/topp, got {cfg.method!r}")
    u = _check_logits(u)
    if cfg.method == "greedy":
        y = int(np.argmax(u))
        return y if size is None else np.full(size, y, dtype=np.int64)
    return _sample_from(baseline_distribution(u, cfg), rng, size=size)


def pf_sample_top_p(u, temperature: float, p: float, rng: RandomSource, size=None):
    """Nucleus-truncated permute-and-flip: keep the top-p token set, then run
    permute-and-flip on the kept logits as they are (no renormalization; the
    sampler only ever uses logit gaps)."""
    keep = top_p_indices(u, temperature, p)
    picked = pf_sample_rnm(np.asarray(u, dtype=float)[keep], temperature, rng, size=size)
    return int(keep[picked]) if size is None else keep[picked]


def sample_token(u, cfg: DecoderConfig, rng: RandomSource) -> int:
    """One decoding step with any configured method."""
    if cfg.method == "softmax":
        return _sample_from(softmax_probs(u, cfg.temperature), rng)
    if cfg.method == "pf_permute_flip":
        return pf_sample_permute_flip(u, cfg.temperature, rng)
    if cfg.method == "pf_rnm":
        return pf_sample_rnm(u, cfg.temperature, rng)
    return baseline_select(u, cfg, rng)
