"""Loading, subsetting and saving of plain-text word embeddings.

The on-disk format is the single-space-separated text format used by
pretrained GloVe releases: one word per line, token first, then the
coordinates. Coordinates are held in float64 throughout; the noise
calibration downstream needs the headroom.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class EmbeddingFormatError(ValueError):
    """Raised when an embedding file violates the expected text format."""


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """An ordered vocabulary with one d-dimensional float64 vector per word.

    Immutable after construction: the vector matrix is marked read-only and
    the instance is safe to share across threads.
    """

    words: tuple[str, ...]
    vectors: np.ndarray
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-d, got shape {vectors.shape}")
        if vectors.shape[1] < 1:
            raise ValueError("embedding dimensionality must be >= 1")
        if len(self.words) != vectors.shape[0]:
            raise ValueError(
                f"{len(self.words)} words but {vectors.shape[0]} vector rows"
            )
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding coordinates must be finite")
        index = {}
        for i, w in enumerate(self.words):
            if w in index:
                raise ValueError(f"duplicate token {w!r}")
            index[w] = i
        vectors.setflags(write=False)
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "_index", index)

    @property
    def n(self) -> int:
        return len(self.words)

    @property
    def d(self) -> int:
        return int(self.vectors.shape[1])

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def index_of(self, word: str) -> int:
        return self._index[word]

    def vector(self, word: str) -> np.ndarray:
        return self.vectors[self._index[word]]


def load_embeddings(
    path: str | Path,
    limit: int | None = None,
    word_filter: set[str] | None = None,
) -> EmbeddingSet:
    """Read an embedding file, keeping the first `limit` accepted rows.

    Each line must be ``token v1 v2 ... vd`` with single-space separators and
    a consistent dimensionality. When `word_filter` is given, only listed
    tokens are kept (they still count towards `limit` only if kept). File
    order is preserved.

    Raises EmbeddingFormatError on malformed lines (naming the line number),
    duplicate tokens, or an empty result.
    """
    if limit is not None and limit <= 0:
        raise ValueError(f"limit must be positive, got {limit}")
    path = Path(path)
    words: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    dim: int | None = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) < 2:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: expected 'token v1 ... vd', got {len(parts)} fields"
                )
            token = parts[0]
            if dim is not None and len(parts) - 1 != dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: expected {dim} coordinates, got {len(parts) - 1}"
                )
            try:
                vec = np.array([float(p) for p in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}:{lineno}: {exc}") from None
            if not np.all(np.isfinite(vec)):
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: non-finite coordinate"
                )
            if token in seen:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: duplicate token {token!r}"
                )
            if dim is None:
                dim = len(parts) - 1
            seen.add(token)
            if word_filter is not None and token not in word_filter:
                continue
            words.append(token)
            rows.append(vec)
            if limit is not None and len(words) >= limit:
                break
    if not words:
        raise EmbeddingFormatError(f"{path}: no embeddings loaded")
    return EmbeddingSet(tuple(words), np.vstack(rows))


def _format_coord(value: float, precision: int) -> str:
    # precision >= 17 switches to shortest round-trip decimals (bit-faithful)
    if precision >= 17:
        return repr(float(value))
    return f"{value:.{precision}f}"


def save_embeddings(emb: EmbeddingSet, path: str | Path, precision: int = 6) -> None:
    """Write `emb` in the text format read by :func:`load_embeddings`.

    `precision` is the number of decimal places; the round trip then agrees
    to within 10**(-precision+1) per coordinate. Values of 17 or more write
    exact round-trip decimals instead.
    """
    if precision < 1:
        raise ValueError(f"precision must be >= 1, got {precision}")
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for word, row in zip(emb.words, emb.vectors):
            coords = " ".join(_format_coord(v, precision) for v in row)
            fh.write(f"{word} {coords}\n")


def subset(emb: EmbeddingSet, tokens: list[str]) -> tuple[EmbeddingSet, list[str]]:
    """Restrict `emb` to `tokens`, in request order.

    Returns the restricted set together with the list of requested tokens
    that were not present (missing tokens are reported, not fatal). The
    result may be empty.
    """
    keep: list[str] = []
    missing: list[str] = []
    for tok in tokens:
        if tok in emb:
            keep.append(tok)
        else:
            missing.append(tok)
    idx = [emb.index_of(t) for t in keep]
    vectors = emb.vectors[idx] if idx else np.empty((0, emb.d))
    return EmbeddingSet(tuple(keep), vectors), missing
