"""Inference and interpretability over a trained model store.

A query pair (z, z2) is answered through the training set: each query is
mapped to its closest training sentence (by the sum of the two stream
cosines), the pair similarities s1 (LLM) and s2 (KG) are computed between
those retrieved sentences, and the pair is accepted (+1, green) when
s1 + s2 clears the dot product of the two retrieved alpha vectors. Whether
s1 or s2 dominates tells which context drove the decision (rectangle = LLM,
oval = KG).
"""

import math
from dataclasses import dataclass

import numpy as np

from .embed_store import (
    EmbeddingTable,
    SentenceEmbeddingStore,
    encode_sentence,
    unit_dot,
    unit_normalize,
)
from .errors import EncodingError, IerlError, MissingSentenceError
from .trainer import ModelStore


@dataclass
class InferenceResult:
    z: str
    z2: str
    x1: str  # model-store key of the training sentence nearest to z
    x2: str
    s1: float  # LLM-stream similarity of the retrieved pair
    s2: float  # KG-stream similarity of the retrieved pair
    displayed_similarity: float  # max(s1, s2)
    decision: int  # +1 iff s1 + s2 >= threshold
    dominant_context: str  # "LLM" iff s1 >= s2, else "KG"
    threshold: float  # dot product of the retrieved alpha vectors


def _query_vectors(
    z: str, sentence_store: SentenceEmbeddingStore, table: EmbeddingTable
) -> tuple[np.ndarray | None, np.ndarray | None]:
    t = sentence_store.entries.get(z)
    try:
        c = encode_sentence(table, z)
    except EncodingError:
        c = None
    return t, c


def nearest_training_sentence(
    z: str,
    store: ModelStore,
    sentence_store: SentenceEmbeddingStore,
    table: EmbeddingTable,
) -> str:
    """Key of the training sentence maximizing the summed stream cosines.

    A stream in which z has no vector contributes zero; exact score ties go
    to the lexicographically smaller key.
    """
    if len(store) == 0:
        raise IerlError("model store is empty")
    tz, cz = _query_vectors(z, sentence_store, table)
    if tz is None and cz is None:
        raise EncodingError(f"query unencodable in both streams: {z!r}")
    tzn = unit_normalize(tz) if tz is not None else None
    czn = unit_normalize(cz) if cz is not None else None

    best_key = None
    best_score = -math.inf
    for record in store.records:
        score = 0.0
        if tzn is not None:
            xt = sentence_store.entries.get(record.sentence)
            if xt is None:
                raise MissingSentenceError(
                    f"training sentence not in store: {record.sentence!r}")
            score += unit_dot(tzn, unit_normalize(xt))
        if czn is not None:
            score += unit_dot(czn, unit_normalize(encode_sentence(table, record.sentence)))
        if score > best_score or (score == best_score and record.key < best_key):
            best_key = record.key
            best_score = score
    return best_key


def pair_similarities(
    x1: str,
    x2: str,
    sentence_store: SentenceEmbeddingStore,
    table: EmbeddingTable,
) -> tuple[float, float]:
    """(s1, s2): unit-normalized LLM and KG dot products of two sentences."""
    vecs = []
    for sentence in (x1, x2):
        t = sentence_store.entries.get(sentence)
        if t is None:
            raise MissingSentenceError(f"sentence not in store: {sentence!r}")
        vecs.append((t, encode_sentence(table, sentence)))
    s1 = unit_dot(unit_normalize(vecs[0][0]), unit_normalize(vecs[1][0]))
    s2 = unit_dot(unit_normalize(vecs[0][1]), unit_normalize(vecs[1][1]))
    return s1, s2


def infer_pair(
    z: str,
    z2: str,
    models: ModelStore,
    sentence_store: SentenceEmbeddingStore,
    table: EmbeddingTable,
) -> InferenceResult:
    x1_key = nearest_training_sentence(z, models, sentence_store, table)
    x2_key = nearest_training_sentence(z2, models, sentence_store, table)
    r1 = models.get(x1_key)
    r2 = models.get(x2_key)
    s1, s2 = pair_similarities(r1.sentence, r2.sentence, sentence_store, table)
    threshold = float(np.dot(r1.model.alpha, r2.model.alpha))
    return InferenceResult(
        z=z,
        z2=z2,
        x1=x1_key,
        x2=x2_key,
        s1=s1,
        s2=s2,
        displayed_similarity=max(s1, s2),
        decision=1 if s1 + s2 >= threshold else -1,
        dominant_context="LLM" if s1 >= s2 else "KG",
        threshold=threshold,
    )


def interpretability_report(results: list[InferenceResult], models: ModelStore) -> dict:
    """Per-pair decision records plus corpus-level dominance/decision counts."""
    pairs = []
    llm_dominant = 0
    kg_dominant = 0
    green = 0
    pink = 0
    for r in results:
        if r.dominant_context == "LLM":
            llm_dominant += 1
        else:
            kg_dominant += 1
        if r.decision == 1:
            green += 1
        else:
            pink += 1
        pairs.append({
            "z": r.z,
            "z2": r.z2,
            "x1": r.x1,
            "x2": r.x2,
            "s1": r.s1,
            "s2": r.s2,
            "displayed_similarity": r.displayed_similarity,
            "decision": r.decision,
            "color": "green" if r.decision == 1 else "pink",
            "shape": "rectangle" if r.dominant_context == "LLM" else "oval",
            "dominant_context": r.dominant_context,
            "threshold": r.threshold,
            "alpha_x1": [float(a) for a in models.get(r.x1).model.alpha],
            "alpha_x2": [float(a) for a in models.get(r.x2).model.alpha],
        })
    return {
        "pairs": pairs,
        "llm_dominant": llm_dominant,
        "kg_dominant": kg_dominant,
        "green": green,
        "pink": pink,
    }
