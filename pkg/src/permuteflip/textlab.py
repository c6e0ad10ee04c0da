"""Neural-free logits sources: fixed-logit toys and a smoothed n-gram model.

The n-gram model stores raw counts for every context length below its order
and serves unnormalized log(count + k) logits, backing off stupidly to the
longest context it has seen and to uniform when none matches.  Two exactly
round-tripping tokenizers are provided: byte-level (fixed 256-id vocabulary)
and whitespace-chunk word-level (dynamic vocabulary; runs of whitespace are
tokens too, so detokenize(tokenize(s)) == s always).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .decode import DecoderConfig, RandomSource, sample_token, softmax_probs

__all__ = [
    "ByteTokenizer",
    "WhitespaceTokenizer",
    "make_tokenizer",
    "FixedLogitsModel",
    "NGramModel",
    "train_ngram",
    "next_logits",
    "perplexity",
    "generate_tokens",
    "save_model",
    "load_model",
    "bundled_corpus_text",
]

MODEL_FORMAT_VERSION = 1


class _VocabTokenizer:
    """Chunks of text mapped to dense ids over an observed vocabulary.

    The vocabulary grows while extend=True (training) and is frozen afterwards;
    tokenizing with a frozen vocabulary rejects unseen chunks.
    """

    def __init__(self, vocab=None):
        self.vocab = list(vocab) if vocab else []
        self._ids = {w: i for i, w in enumerate(self.vocab)}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def _chunks(self, text: str):
        raise NotImplementedError

    def _join(self, chunks) -> str:
        raise NotImplementedError

    def tokenize(self, text: str, extend: bool = True) -> list[int]:
        out = []
        for chunk in self._chunks(text):
            idx = self._ids.get(chunk)
            if idx is None:
                if not extend:
                    raise ValueError(f"chunk {chunk!r} not in the frozen vocabulary")
                idx = len(self.vocab)
                self.vocab.append(chunk)
                self._ids[chunk] = idx
            out.append(idx)
        return out

    def detokenize(self, tokens) -> str:
        return self._join(self.vocab[int(t)] for t in tokens)


class ByteTokenizer(_VocabTokenizer):
    """UTF-8 bytes as chunks; vocabulary entries are byte values."""

    name = "byte"

    def _chunks(self, text: str):
        return text.encode("utf-8")

    def _join(self, chunks) -> str:
        return bytes(chunks).decode("utf-8")


class WhitespaceTokenizer(_VocabTokenizer):
    """Alternating word / whitespace-run chunks, so joins are lossless."""

    name = "whitespace"
    _pattern = re.compile(r"\S+|\s+")

    def _chunks(self, text: str):
        return self._pattern.findall(text)

    def _join(self, chunks) -> str:
        return "".join(chunks)


def make_tokenizer(name: str, vocab=None):
    if name == "byte":
        return ByteTokenizer(vocab)
    if name == "whitespace":
        return WhitespaceTokenizer(vocab)
    raise ValueError(f"unknown tokenizer {name!r}; expected 'byte' or 'whitespace'")


@dataclass
class FixedLogitsModel:
    """Synthetic logits source: one vector repeated, or a per-step table keyed
    by the current stream length."""

    logits: np.ndarray
    table: dict[int, np.ndarray] | None = None

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=float)
        if self.table:
            self.table = {int(k): np.asarray(v, dtype=float) for k, v in self.table.items()}
            for v in self.table.values():
                if v.size != self.logits.size:
                    raise ValueError("all logit vectors must share one vocabulary size")

    @property
    def vocab_size(self) -> int:
        return self.logits.size

    def next_logits(self, tokens) -> np.ndarray:
        if self.table is not None:
            hit = self.table.get(len(tokens))
            if hit is not None:
                return hit
        return self.logits


@dataclass
class NGramModel:
    """Add-k smoothed count model of order 1..4 (order-1 = unigram) over the
    vocabulary of symbols observed in its training corpus."""

    order: int
    smoothing: float
    tokenizer_name: str
    vocab: list
    counts: dict[tuple[int, ...], dict[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        if not (1 <= self.order <= 4):
            raise ValueError("order must be between 1 and 4")
        if not (self.smoothing > 0):
            raise ValueError("smoothing constant must be > 0")

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def tokenizer(self):
        return make_tokenizer(self.tokenizer_name, self.vocab)

    def next_logits(self, tokens) -> np.ndarray:
        return next_logits(self, tokens)


def train_ngram(corpus: str, order: int, smoothing: float = 0.01,
                tokenizer: str = "byte") -> NGramModel:
    """Count all context windows of lengths 0..order-1 over the corpus."""
    tok = make_tokenizer(tokenizer)
    tokens = tok.tokenize(corpus)
    if not tokens:
        raise ValueError("corpus is empty after tokenization")
    model = NGramModel(
        order=order,
        smoothing=smoothing,
        tokenizer_name=tokenizer,
        vocab=list(tok.vocab),
    )
    counts = model.counts
    for i, y in enumerate(tokens):
        for width in range(min(order - 1, i) + 1):
            ctx = tuple(tokens[i - width: i])
            row = counts.get(ctx)
            if row is None:
                row = {}
                counts[ctx] = row
            row[y] = row.get(y, 0) + 1
    return model


def next_logits(model: NGramModel, context) -> np.ndarray:
    """log(count + k) over the vocabulary for the longest seen context.

    Context widths order-1 down to 1 are tried in turn (width 0, the unigram
    row, is the whole model when order == 1); if nothing matches, all counts
    are zero and the logits are the uniform log(k).
    """
    context = [int(t) for t in context]
    logits = np.full(model.vocab_size, np.log(model.smoothing))
    widths = range(min(model.order - 1, len(context)), 0, -1) if model.order > 1 else (0,)
    for width in widths:
        row = model.counts.get(tuple(context[len(context) - width:] if width else ()))
        if row:
            ids = np.fromiter(row.keys(), dtype=np.int64, count=len(row))
            vals = np.fromiter(row.values(), dtype=np.float64, count=len(row))
            logits[ids] = np.log(vals + model.smoothing)
            break
    return logits


def perplexity(model, tokens, temperature: float = 1.0) -> float:
    """exp of the mean negative log-likelihood of `tokens` under the model's
    softmax next-token distribution at the given temperature."""
    tokens = [int(t) for t in tokens]
    if not tokens:
        raise ValueError("perplexity needs at least one token")
    total = 0.0
    for t, y in enumerate(tokens):
        probs = softmax_probs(model.next_logits(tokens[:t]), temperature)
        total += np.log(probs[y])
    return float(np.exp(-total / len(tokens)))


def generate_tokens(model, prompt, n: int, cfg: DecoderConfig,
                    rng: RandomSource) -> list[int]:
    """Unwatermarked autoregressive generation with any configured decoder."""
    stream = [int(t) for t in prompt]
    out = []
    for _ in range(n):
        y = sample_token(np.asarray(model.next_logits(stream), dtype=float), cfg, rng)
        stream.append(y)
        out.append(y)
    return out


def save_model(model: NGramModel, path) -> None:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "order": model.order,
        "smoothing": model.smoothing,
        "tokenizer": model.tokenizer_name,
        "vocab": model.vocab,
        "counts": {
            ",".join(map(str, ctx)): {str(y): c for y, c in row.items()}
            for ctx, row in model.counts.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_model(path) -> NGramModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    counts = {
        tuple(int(t) for t in ctx.split(",")) if ctx else (): {
            int(y): int(c) for y, c in row.items()
        }
        for ctx, row in payload["counts"].items()
    }
    return NGramModel(
        order=payload["order"],
        smoothing=payload["smoothing"],
        tokenizer_name=payload["tokenizer"],
        vocab=payload["vocab"],
        counts=counts,
    )


def bundled_corpus_text() -> str:
    """The packaged ~1.2 MB plain-text corpus used by the desk-scale runs."""
    return resources.files("permuteflip").joinpath("data/corpus.txt").read_text("utf-8")
