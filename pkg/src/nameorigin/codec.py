"""Name normalization and fixed-shape one-hot encoding.

A name is cleaned to lowercase basic Latin letters separated by single
spaces, truncated to 30 symbols, and encoded as a ``30 x 28`` one-hot
matrix: channels 0-25 are ``a``-``z``, channel 26 is whitespace and
channel 27 is padding. Padding always fills the rows after the name.
"""
from __future__ import annotations

import string
import unicodedata
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import EmptyAfterNormalization, MalformedEncoding

MAX_LEN = 30
N_CHANNELS = 28
SPACE = " "
PAD = "<pad>"

SYMBOLS: tuple[str, ...] = tuple(string.ascii_lowercase) + (SPACE, PAD)
INDEX: dict[str, int] = {s: i for i, s in enumerate(SYMBOLS)}
SPACE_CHANNEL = INDEX[SPACE]
PAD_CHANNEL = INDEX[PAD]

# letters that canonical decomposition leaves untouched
TRANSLITERATION = {
    "ß": "ss",
    "ø": "o",
    "æ": "ae",
    "œ": "oe",
    "đ": "d",
    "ł": "l",
    "þ": "th",
    "ð": "d",
    "ı": "i",
}

# characters that separate name particles
SEPARATORS = frozenset("-'‐‑‒–—’ʼ‘`´")

_LETTERS = frozenset(string.ascii_lowercase)


class Alphabet:
    """The 28 encoding channels and their index map."""

    symbols = SYMBOLS
    index = INDEX
    space = SPACE_CHANNEL
    padding = PAD_CHANNEL

    def __len__(self) -> int:
        return len(self.symbols)


def normalize(raw: str) -> str:
    """Clean ``raw`` into the normalized name form.

    Raises :class:`EmptyAfterNormalization` when no letter survives.
    """
    text = raw.lower()
    text = "".join(TRANSLITERATION.get(ch, ch) for ch in text)
    text = unicodedata.normalize("NFKD", text)
    out = []
    for ch in text:
        if unicodedata.combining(ch):
            continue
        if ch in _LETTERS:
            out.append(ch)
        elif ch.isspace() or ch in SEPARATORS:
            out.append(SPACE)
        # anything else (digits, punctuation, other scripts) is dropped
    cleaned = " ".join("".join(out).split())
    cleaned = cleaned[:MAX_LEN].rstrip(SPACE)
    if not cleaned:
        raise EmptyAfterNormalization(f"no letters left in {raw!r}")
    return cleaned


def is_normalized(text: str) -> bool:
    if not text or len(text) > MAX_LEN:
        return False
    if text != text.strip() or "  " in text:
        return False
    return all(ch in _LETTERS or ch == SPACE for ch in text)


def encode(name: str, dtype=np.uint8) -> np.ndarray:
    """One-hot encode a normalized name into a ``(30, 28)`` matrix."""
    if not is_normalized(name):
        raise ValueError(f"{name!r} is not a normalized name; call normalize() first")
    matrix = np.zeros((MAX_LEN, N_CHANNELS), dtype=dtype)
    matrix[np.arange(len(name)), [INDEX[ch] for ch in name]] = 1
    matrix[len(name):, PAD_CHANNEL] = 1
    return matrix


def encode_batch(names: Iterable[str], dtype=np.uint8) -> np.ndarray:
    names = list(names)
    out = np.zeros((len(names), MAX_LEN, N_CHANNELS), dtype=dtype)
    for i, name in enumerate(names):
        out[i] = encode(name, dtype=dtype)
    return out


def decode(encoded: np.ndarray) -> str:
    """Invert :func:`encode`.

    Raises :class:`MalformedEncoding` if a row is not one-hot, padding is
    not a suffix, or the recovered text is not a normalized name.
    """
    matrix = np.asarray(encoded)
    if matrix.shape != (MAX_LEN, N_CHANNELS):
        raise MalformedEncoding(f"expected shape {(MAX_LEN, N_CHANNELS)}, got {matrix.shape}")
    if not np.all((matrix == 0) | (matrix == 1)) or not np.all(matrix.sum(axis=1) == 1):
        raise MalformedEncoding("every row must be one-hot")
    channels = matrix.argmax(axis=1)
    is_pad = channels == PAD_CHANNEL
    length = int(np.argmax(is_pad)) if is_pad.any() else MAX_LEN
    if not is_pad[length:].all():
        raise MalformedEncoding("padding must be a suffix")
    if length == 0:
        raise EmptyAfterNormalization("all-padding matrix encodes no name")
    text = "".join(SYMBOLS[c] for c in channels[:length])
    if not is_normalized(text):
        raise MalformedEncoding(f"decoded text {text!r} is not a normalized name")
    return text


class NameEncoder(TransformerMixin, BaseEstimator):
    """Transform raw name strings into a ``(n, 30, 28)`` one-hot tensor.

    Stateless; ``fit`` exists so the encoder can sit in a pipeline.

    Parameters
    ----------
    dtype : numpy dtype, default=np.uint8
        Element type of the returned tensor.
    errors : {"raise", "skip"}, default="raise"
        Whether names that normalize to nothing raise or are dropped. With
        ``"skip"`` the indices of kept names are stored in
        ``kept_indices_`` after each call to ``transform``.
    """

    def __init__(self, dtype=np.uint8, errors="raise"):
        self.dtype = dtype
        self.errors = errors

    def fit(self, X, y=None):
        if self.errors not in ("raise", "skip"):
            raise ValueError(f"errors must be 'raise' or 'skip', got {self.errors!r}")
        return self

    def transform(self, X: Sequence[str]) -> np.ndarray:
        normalized, kept = [], []
        for i, raw in enumerate(X):
            try:
                normalized.append(normalize(str(raw)))
                kept.append(i)
            except EmptyAfterNormalization:
                if self.errors == "raise":
                    raise
        self.kept_indices_ = np.asarray(kept, dtype=np.intp)
        return encode_batch(normalized, dtype=self.dtype)

    def inverse_transform(self, X: np.ndarray) -> list[str]:
        return [decode(m) for m in np.asarray(X)]
