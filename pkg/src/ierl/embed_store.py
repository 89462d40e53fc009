"""Vector sources: token-embedding tables and precomputed sentence stores.

Two text formats are handled here. An embedding table starts with a header
"N d" followed by N lines "token v1 ... vd". A sentence store uses the same
header but separates the sentence text from its values with a single tab.
Leading lines starting with '#' are provenance comments and are skipped.

Tables and stores are frozen after parsing and safe to share across threads.
"""

import io
import string
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, TextIO

import numpy as np

from .errors import EncodingError, FormatError, MissingSentenceError, NormalizationError


class DuplicateKeyWarning(UserWarning):
    """A token or sentence appeared twice in an input file; first wins."""


@dataclass
class EmbeddingTable:
    """Token -> vector map with a fixed dimension (the KG-side source)."""

    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class SentenceEmbeddingStore:
    """Sentence text -> vector map with a fixed dimension (the LLM-side source)."""

    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)


def _lines(source: str | TextIO) -> list[str]:
    if isinstance(source, str):
        source = io.StringIO(source)
    raw = source.read().split("\n")
    while raw and raw[-1] == "":
        raw.pop()
    return raw


def _parse_header(lines: list[str]) -> tuple[int, int, int]:
    """Return (count, dim, index of first data line), skipping '#' comments."""
    pos = 0
    while pos < len(lines) and lines[pos].lstrip().startswith("#"):
        pos += 1
    if pos >= len(lines):
        raise FormatError("missing header")
    parts = lines[pos].split()
    if len(parts) != 2:
        raise FormatError(f"malformed header {lines[pos]!r}, expected 'N d'", line=pos + 1)
    try:
        count, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise FormatError(f"malformed header {lines[pos]!r}, expected two integers", line=pos + 1) from None
    if dim <= 0:
        raise FormatError("dimension must be positive", line=pos + 1)
    if count < 0:
        raise FormatError("entry count must be non-negative", line=pos + 1)
    return count, dim, pos + 1


def _parse_values(fields: Iterable[str], dim: int, lineno: int) -> np.ndarray:
    fields = list(fields)
    if len(fields) != dim:
        raise FormatError(f"has {len(fields)} values, expected {dim}", line=lineno)
    try:
        vec = np.array([float(f) for f in fields], dtype=np.float64)
    except ValueError:
        raise FormatError("non-numeric value", line=lineno) from None
    if not np.isfinite(vec).all():
        raise FormatError("non-finite value", line=lineno)
    vec.flags.writeable = False
    return vec


def parse_embedding_table(source: str | TextIO) -> EmbeddingTable:
    """Parse the whitespace-delimited token-vector format.

    Duplicate tokens keep their first vector and emit a DuplicateKeyWarning.
    """
    lines = _lines(source)
    count, dim, start = _parse_header(lines)
    data = lines[start:]
    if len(data) != count:
        raise FormatError(f"header declares {count} entries but file has {len(data)} data lines")
    entries: dict[str, np.ndarray] = {}
    for offset, line in enumerate(data):
        lineno = start + offset + 1
        fields = line.split()
        if not fields:
            raise FormatError("empty line", line=lineno)
        token = fields[0]
        vec = _parse_values(fields[1:], dim, lineno)
        if token in entries:
            warnings.warn(
                f"duplicate token {token!r} at line {lineno} ignored (first wins)",
                DuplicateKeyWarning,
                stacklevel=2,
            )
            continue
        entries[token] = vec
    return EmbeddingTable(dim=dim, entries=entries)


def load_sentence_store(source: str | TextIO) -> SentenceEmbeddingStore:
    """Parse the tab-separated sentence-vector format."""
    lines = _lines(source)
    count, dim, start = _parse_header(lines)
    data = lines[start:]
    if len(data) != count:
        raise FormatError(f"header declares {count} entries but file has {len(data)} data lines")
    entries: dict[str, np.ndarray] = {}
    for offset, line in enumerate(data):
        lineno = start + offset + 1
        if "\t" not in line:
            raise FormatError("missing tab separator between sentence and values", line=lineno)
        sentence, _, rest = line.partition("\t")
        if not sentence:
            raise FormatError("empty sentence", line=lineno)
        vec = _parse_values(rest.split(), dim, lineno)
        if sentence in entries:
            warnings.warn(
                f"duplicate sentence at line {lineno} ignored (first wins)",
                DuplicateKeyWarning,
                stacklevel=2,
            )
            continue
        entries[sentence] = vec
    return SentenceEmbeddingStore(dim=dim, entries=entries)


def load_embedding_table_file(path) -> EmbeddingTable:
    with open(path, encoding="utf-8") as fh:
        return parse_embedding_table(fh)


def load_sentence_store_file(path) -> SentenceEmbeddingStore:
    with open(path, encoding="utf-8") as fh:
        return load_sentence_store(fh)


def _fmt(x: float) -> str:
    # 17 significant digits (trailing zeros kept): round-trips the double exactly
    return format(float(x), "#.17g")


def serialize_embedding_table(table: EmbeddingTable) -> str:
    lines = [f"{len(table.entries)} {table.dim}"]
    for token, vec in table.entries.items():
        lines.append(token + " " + " ".join(_fmt(v) for v in vec))
    return "\n".join(lines) + "\n"


def serialize_sentence_store(store: SentenceEmbeddingStore) -> str:
    lines = [f"{len(store.entries)} {store.dim}"]
    for sentence, vec in store.entries.items():
        lines.append(sentence + "\t" + " ".join(_fmt(v) for v in vec))
    return "\n".join(lines) + "\n"


def tokenize(sentence: str) -> list[str]:
    """Lowercase, split on whitespace, strip leading/trailing punctuation."""
    tokens = []
    for raw in sentence.lower().split():
        tok = raw.strip(string.punctuation)
        if tok:
            tokens.append(tok)
    return tokens


def encode_sentence(table: EmbeddingTable, sentence: str) -> np.ndarray:
    """Mean-pool the vectors of the sentence's in-vocabulary tokens.

    Out-of-vocabulary tokens are skipped; the pooled tokens are summed in
    sorted order so any reordering of the sentence yields the identical vector.
    """
    if not sentence:
        raise EncodingError("cannot encode an empty sentence")
    known = sorted(t for t in tokenize(sentence) if t in table.entries)
    if not known:
        raise EncodingError(f"unencodable sentence (no in-vocabulary token): {sentence!r}")
    return np.mean(np.stack([table.entries[t] for t in known]), axis=0)


def unit_normalize(v: np.ndarray) -> np.ndarray:
    """v / ||v||_2; the zero vector is returned unchanged."""
    v = np.asarray(v, dtype=np.float64)
    if not np.isfinite(v).all():
        raise NormalizationError("cannot normalize a vector with non-finite elements")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return v.copy()
    return v / norm


# Optional hook: called with the two operand norms of every unit_dot, used by
# instrumented runs to assert the unit-normalization invariant end to end.
_norm_observer: Callable[[float, float], None] | None = None


def set_norm_observer(observer: Callable[[float, float], None] | None) -> None:
    global _norm_observer
    _norm_observer = observer


def unit_dot(u: np.ndarray, v: np.ndarray) -> float:
    """Dot product that enforces unit-or-zero operands (within 1e-9)."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if _norm_observer is not None:
        _norm_observer(nu, nv)
    for n in (nu, nv):
        if not (abs(n) <= 1e-9 or abs(n - 1.0) <= 1e-9):
            raise NormalizationError(f"dot-product operand has norm {n!r}, expected 0 or 1")
    return float(np.dot(u, v))


def pair_representations(
    store: SentenceEmbeddingStore, table: EmbeddingTable, instance
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Raw (t1, t2, c1, c2) for an instance; normalization happens later,
    at dot-product time."""
    reps = []
    for sentence in (instance.sentence1, instance.sentence2):
        if sentence not in store.entries:
            raise MissingSentenceError(f"sentence not in store: {sentence!r}")
        reps.append(store.entries[sentence])
    for sentence in (instance.sentence1, instance.sentence2):
        reps.append(encode_sentence(table, sentence))
    return reps[0], reps[1], reps[2], reps[3]
