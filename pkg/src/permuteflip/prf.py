"""Keyed pseudo-random function shared by the watermark schemes.

Each (secret key, m-token context window, candidate token) triple maps to a
deterministic uniform variate in the open interval (0, 1):

    payload = m as u16 LE || window token ids as u32 LE each || candidate as u32 LE
    h       = first 8 bytes of BLAKE2b(payload, key=secret, digest_size=8), read LE
    value   = (h + 0.5) / 2^64

The primitive is BLAKE2b (RFC 7693) in keyed mode with an 8-byte digest; the
construction is frozen by golden vectors in the test suite.  Key files hold a
single line of 64 lowercase hex characters.
"""

from __future__ import annotations

import hashlib
import os
import re
import secrets
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "KEY_BYTES",
    "WatermarkKey",
    "PrfContext",
    "prf_uniform",
    "prf_uniform_vector",
    "context_at",
    "load_key_file",
    "save_key_file",
]

KEY_BYTES = 32
_KEY_LINE = re.compile(r"^[0-9a-f]{64}$")


@dataclass(frozen=True)
class WatermarkKey:
    """32-byte secret with an optional human-readable label."""

    data: bytes
    key_id: str = ""

    def __post_init__(self):
        if not isinstance(self.data, bytes) or len(self.data) != KEY_BYTES:
            raise ValueError(f"watermark key must be exactly {KEY_BYTES} bytes")

    @classmethod
    def generate(cls, key_id: str = "") -> "WatermarkKey":
        return cls(secrets.token_bytes(KEY_BYTES), key_id)

    @classmethod
    def from_hex(cls, text: str, key_id: str = "") -> "WatermarkKey":
        text = text.strip()
        if not _KEY_LINE.match(text):
            raise ValueError("key must be 64 lowercase hex characters")
        return cls(bytes.fromhex(text), key_id)

    def hex(self) -> str:
        return self.data.hex()


@dataclass(frozen=True)
class PrfContext:
    """The m tokens immediately preceding the position being keyed."""

    window: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "window", tuple(int(t) for t in self.window))
        if len(self.window) == 0:
            raise ValueError("context window must be nonempty")
        if any(t < 0 or t > 0xFFFFFFFF for t in self.window):
            raise ValueError("token ids must fit in an unsigned 32-bit integer")

    @property
    def m(self) -> int:
        return len(self.window)


def _prefix(window: tuple[int, ...]) -> bytes:
    return struct.pack("<H", len(window)) + struct.pack(f"<{len(window)}I", *window)


def prf_uniform(key: WatermarkKey, ctx: PrfContext, candidate: int) -> float:
    """Deterministic uniform in (0, 1) for (key, context, candidate)."""
    payload = _prefix(ctx.window) + struct.pack("<I", int(candidate))
    digest = hashlib.blake2b(payload, digest_size=8, key=key.data).digest()
    h = int.from_bytes(digest, "little")
    return (h + 0.5) * 2.0**-64


def prf_uniform_vector(key: WatermarkKey, window, vocab_size: int) -> np.ndarray:
    """prf_uniform for every candidate id in [0, vocab_size) at once."""
    ctx = window if isinstance(window, PrfContext) else PrfContext(tuple(window))
    base = hashlib.blake2b(digest_size=8, key=key.data)
    base.update(_prefix(ctx.window))
    out = np.empty(vocab_size, dtype=np.float64)
    pack = struct.Struct("<I").pack
    for y in range(vocab_size):
        h = base.copy()
        h.update(pack(y))
        out[y] = int.from_bytes(h.digest(), "little")
    return (out + 0.5) * 2.0**-64


def context_at(tokens, t: int, m: int, prompt=()) -> PrfContext:
    """Window of the m tokens preceding 1-based position t of `tokens`.

    During generation, `tokens` is the output generated so far and `prompt`
    supplies the early context (so t = 1 is legal when the prompt has at least
    m tokens).  During detection the suspect text stands alone and scoreable
    positions start at t = m + 1.
    """
    if m < 1:
        raise ValueError("context width m must be >= 1")
    if not (1 <= t <= len(tokens) + 1):
        raise ValueError(f"position t={t} outside the token stream")
    stream = list(prompt) + list(tokens[: t - 1])
    if len(stream) < m:
        raise ValueError(
            f"position t={t} has only {len(stream)} preceding tokens; {m} required"
        )
    return PrfContext(tuple(stream[-m:]))


def save_key_file(key: WatermarkKey, path, force: bool = False) -> None:
    """Write the key as one line of 64 lowercase hex characters."""
    if os.path.exists(path) and not force:
        raise FileExistsError(f"refusing to overwrite {path} without force")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(key.hex() + "\n")


def load_key_file(path, key_id: str | None = None) -> WatermarkKey:
    """Load a key file; anything but one 64-char lowercase hex line is rejected."""
    with open(path, "r", encoding="ascii") as fh:
        text = fh.read()
    label = key_id if key_id is not None else os.path.basename(str(path))
    return WatermarkKey.from_hex(text, key_id=label)
