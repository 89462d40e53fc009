"""Per-sentence ensemble training.

For every (instance, sentence-slot) pair the trainer gathers similar and
dissimilar context sets from both representation streams, aggregates them,
forms the 4-vector of unit-normalized dot products

    D = [t.t_sim, t.t_dis, c.c_sim, c.c_dis]

and fits the 4 ensemble weights alpha by proximal gradient descent on

    g = ||I - alpha * D||_2^2 + l1_weight * ||alpha||_1,   I = [1, -1, 1, -1].

The objective is separable per coordinate; the closed-form optimum is the
per-coordinate soft threshold, which the tests use as an independent oracle.
The shipped path is the iterative solver.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import aggregate, embed_store, kernels
from .errors import DataError, NoDissimilarContextError

TARGET_VECTOR = np.array([1.0, -1.0, 1.0, -1.0])
TARGET_VECTOR.flags.writeable = False


@dataclass(frozen=True)
class Instance:
    """A sentence pair with a +1 (similar/entailment) or -1 label."""

    sentence1: str
    sentence2: str
    label: int

    def __post_init__(self):
        if self.label not in (1, -1):
            raise DataError(f"label must be +1 or -1, got {self.label!r}")
        if not self.sentence1 or not self.sentence2:
            raise DataError("instance sentences must be non-empty")

    def sentence(self, slot: int) -> str:
        return self.sentence1 if slot == 1 else self.sentence2


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    l1_weight: float = 1.0
    tol: float = 1e-8
    max_iters: int = 10000
    seed: int = 0
    agg_mode: str = "moments"
    max_power: int = aggregate.DEFAULT_MAX_POWER
    # literal reading of the negative-label branch: slot 1 is always the
    # similar set and slot 2 always opens the dissimilar set, regardless of
    # which slot is being fitted
    literal_negative_slots: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")
        if self.l1_weight < 0:
            raise DataError("l1_weight must be non-negative")
        if self.tol <= 0:
            raise DataError("tol must be positive")
        if self.max_iters < 1:
            raise DataError("max_iters must be positive")
        if self.agg_mode not in ("mean", "moments"):
            raise DataError(f"agg_mode must be 'mean' or 'moments', got {self.agg_mode!r}")
        if self.max_power < 0:
            raise DataError("max_power must be >= 0")


@dataclass
class SentenceModel:
    """Fitted weights for one (instance, sentence) problem."""

    g: float
    alpha: np.ndarray
    steps: int
    d: np.ndarray

    def __post_init__(self):
        if self.g < 0:
            raise DataError("objective value cannot be negative")
        if self.steps < 0:
            raise DataError("step count cannot be negative")


@dataclass
class ModelRecord:
    key: str
    sentence: str
    slot: int
    instance_index: int
    model: SentenceModel


class ModelStore:
    """Sentence-keyed model dictionary; key collisions get an index suffix."""

    def __init__(self):
        self.records: list[ModelRecord] = []
        self._by_key: dict[str, ModelRecord] = {}

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ModelRecord]:
        return iter(self.records)

    def keys(self) -> list[str]:
        return [r.key for r in self.records]

    def get(self, key: str) -> ModelRecord:
        try:
            return self._by_key[key]
        except KeyError:
            raise DataError(f"no model stored under key {key!r}") from None

    def add(self, instance_index: int, slot: int, sentence: str, model: SentenceModel) -> str:
        key = sentence
        if key in self._by_key:
            key = f"{sentence}##{instance_index}"
        if key in self._by_key:
            key = f"{sentence}##{instance_index}.{slot}"
        record = ModelRecord(key, sentence, slot, instance_index, model)
        self.records.append(record)
        self._by_key[key] = record
        return key

    def to_jsonl(self) -> str:
        lines = []
        for r in self.records:
            lines.append(json.dumps({
                "sentence": r.sentence,
                "slot": r.slot,
                "alpha": [float(a) for a in r.model.alpha],
                "g": float(r.model.g),
                "steps": int(r.model.steps),
                "d": [float(x) for x in r.model.d],
            }, ensure_ascii=False))
        return "\n".join(lines) + ("\n" if lines else "")

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "ModelStore":
        store = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                model = SentenceModel(
                    g=float(rec["g"]),
                    alpha=np.array(rec["alpha"], dtype=np.float64),
                    steps=int(rec["steps"]),
                    d=np.array(rec["d"], dtype=np.float64),
                )
                sentence = rec["sentence"]
                slot = int(rec["slot"])
            except (KeyError, ValueError, TypeError) as exc:
                raise DataError(f"model store line {lineno}: {exc}") from None
            # records are written ordered by (instance, slot), two per instance
            store.add(len(store.records) // 2, slot, sentence, model)
        return store

    @classmethod
    def load(cls, path) -> "ModelStore":
        with open(path, encoding="utf-8") as fh:
            return cls.from_jsonl(fh.read())


def build_context_sets(
    stream_reps: Sequence[tuple[np.ndarray, np.ndarray]],
    labels: Sequence[int],
    i: int,
    j: int,
    literal_negative_slots: bool = False,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Similar and dissimilar context lists for instance i, slot j, one stream.

    Positive label: both of the instance's sentences are similar context and
    every sentence of every other instance is dissimilar context. Negative
    label: the fitted slot is its own similar context and the other slot joins
    the dissimilar pool (with `literal_negative_slots` the roles are pinned to
    slot 1 / slot 2 instead).
    """
    if j not in (1, 2):
        raise DataError(f"sentence slot must be 1 or 2, got {j}")
    rep = stream_reps[i]
    if labels[i] == 1:
        sim = [rep[0], rep[1]]
        dis = []
    else:
        if literal_negative_slots:
            own, other = rep[0], rep[1]
        else:
            own, other = rep[j - 1], rep[2 - j]
        sim = [own]
        dis = [other]
    for m in range(len(stream_reps)):
        if m == i:
            continue
        dis.append(stream_reps[m][0])
        dis.append(stream_reps[m][1])
    if not dis:
        raise NoDissimilarContextError(
            f"no dissimilar context for instance {i}: dataset has no other instance"
        )
    return sim, dis


def validate_d_vector(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (4,):
        raise DataError("D vector must have exactly 4 elements")
    if np.any(np.abs(d) > 1.0 + 1e-9):
        raise DataError(f"D element outside [-1, 1]: {d}")
    return d


def build_d_vector(t, c, t_sim, t_dis, c_sim, c_dis, config: TrainConfig) -> np.ndarray:
    """The four similarity dots, in fixed stream/context order.

    Under moment aggregation the query vectors are lifted with the same power
    first so they live in the aggregates' space; everything is unit-normalized
    before the dot products.
    """
    if config.agg_mode == "moments":
        t = aggregate.moment_lift(t, config.max_power)
        c = aggregate.moment_lift(c, config.max_power)
    for query, agg_vec, name in ((t, t_sim, "LLM sim"), (t, t_dis, "LLM dis"),
                                 (c, c_sim, "KG sim"), (c, c_dis, "KG dis")):
        if np.asarray(query).shape != np.asarray(agg_vec).shape:
            raise DataError(
                f"dimension mismatch between query and {name} aggregate: "
                f"{np.asarray(query).shape[0]} vs {np.asarray(agg_vec).shape[0]}"
            )
    tq = embed_store.unit_normalize(t)
    cq = embed_store.unit_normalize(c)
    d = np.array([
        embed_store.unit_dot(tq, embed_store.unit_normalize(t_sim)),
        embed_store.unit_dot(tq, embed_store.unit_normalize(t_dis)),
        embed_store.unit_dot(cq, embed_store.unit_normalize(c_sim)),
        embed_store.unit_dot(cq, embed_store.unit_normalize(c_dis)),
    ])
    return validate_d_vector(d)


def _seed_parts(*parts: int) -> tuple[int, ...]:
    return tuple(int(p) % (2 ** 64) for p in parts)


def init_alpha(seed: int, instance_index: int, slot: int) -> np.ndarray:
    """Standard-normal 4-vector from a generator keyed by (seed, i, j)."""
    rng = np.random.default_rng(_seed_parts(seed, instance_index, slot))
    return rng.standard_normal(4)


def solve_alpha(d, target, alpha0, config: TrainConfig) -> SentenceModel:
    """Minimize ||target - alpha*d||^2 + l1*||alpha||_1 from alpha0.

    One step = one gradient step on the quadratic term followed by a soft
    threshold at learning_rate*l1_weight. Stops when the objective change
    between consecutive iterations falls below tol (in magnitude, so a
    diverging run keeps going until the non-finite check fires) or max_iters
    is reached.
    """
    d = np.asarray(d, dtype=np.float64)
    if not np.isfinite(d).all():
        raise DataError("D vector must be finite")
    alpha, g, steps = kernels.prox_solve(
        d, target, alpha0,
        config.learning_rate, config.l1_weight, config.tol, config.max_iters,
    )
    return SentenceModel(g=g, alpha=alpha, steps=steps, d=d.copy())


def soft_threshold_optimum(d, target, l1_weight: float) -> np.ndarray:
    """Closed-form per-coordinate optimum; the solver's independent oracle."""
    d = np.asarray(d, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    out = np.zeros_like(d)
    for k in range(d.shape[0]):
        if d[k] == 0.0:
            continue
        prod = target[k] * d[k]
        mag = abs(prod) - l1_weight / 2.0
        if mag > 0:
            out[k] = np.sign(prod) * mag / (d[k] * d[k])
    return out


@dataclass
class TrainResult:
    store: ModelStore
    steps_per_model: list[int] = field(default_factory=list)

    @property
    def run_steps(self) -> int:
        """Run-level step count: the run has converged when all models have."""
        return max(self.steps_per_model) if self.steps_per_model else 0


def resolve_threads(explicit: int | None = None) -> int:
    """Worker count: explicit argument, else IERL_THREADS (0 or unset = auto)."""
    if explicit is None:
        env = os.environ.get("IERL_THREADS", "").strip()
        if env:
            try:
                explicit = int(env)
            except ValueError:
                raise DataError(f"IERL_THREADS must be an integer, got {env!r}") from None
        else:
            explicit = 0
    if explicit < 0:
        raise DataError("thread count cannot be negative")
    if explicit == 0:
        return min(8, os.cpu_count() or 1)
    return explicit


def train(
    dataset: Sequence[Instance],
    sentence_store: embed_store.SentenceEmbeddingStore,
    table: embed_store.EmbeddingTable,
    config: TrainConfig,
    threads: int | None = None,
) -> TrainResult:
    """Fit one model per (instance, sentence slot) and return the store.

    The (i, j) problems share no mutable state, so they may run on a thread
    pool; results are merged in (i, j) order and are identical to a
    sequential run.
    """
    instances = list(dataset)
    if not instances:
        raise DataError("empty dataset")
    t_reps = []
    c_reps = []
    labels = []
    for inst in instances:
        t1, t2, c1, c2 = embed_store.pair_representations(sentence_store, table, inst)
        t_reps.append((t1, t2))
        c_reps.append((c1, c2))
        labels.append(inst.label)

    def fit(task: tuple[int, int]) -> SentenceModel:
        i, j = task
        t_sim_list, t_dis_list = build_context_sets(
            t_reps, labels, i, j, config.literal_negative_slots)
        c_sim_list, c_dis_list = build_context_sets(
            c_reps, labels, i, j, config.literal_negative_slots)
        if config.agg_mode == "moments":
            t_sim = aggregate.agg_moments(t_sim_list, config.max_power)
            t_dis = aggregate.agg_moments(t_dis_list, config.max_power)
            c_sim = aggregate.agg_moments(c_sim_list, config.max_power)
            c_dis = aggregate.agg_moments(c_dis_list, config.max_power)
        else:
            t_sim = aggregate.agg_mean(t_sim_list)
            t_dis = aggregate.agg_mean(t_dis_list)
            c_sim = aggregate.agg_mean(c_sim_list)
            c_dis = aggregate.agg_mean(c_dis_list)
        d = build_d_vector(t_reps[i][j - 1], c_reps[i][j - 1],
                           t_sim, t_dis, c_sim, c_dis, config)
        alpha0 = init_alpha(config.seed, i, j)
        return solve_alpha(d, TARGET_VECTOR, alpha0, config)

    tasks = [(i, j) for i in range(len(instances)) for j in (1, 2)]
    workers = resolve_threads(threads)
    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            models = list(pool.map(fit, tasks))
    else:
        models = [fit(t) for t in tasks]

    store = ModelStore()
    steps = []
    for (i, j), model in zip(tasks, models):
        store.add(i, j, instances[i].sentence(j), model)
        steps.append(model.steps)
    return TrainResult(store=store, steps_per_model=steps)
