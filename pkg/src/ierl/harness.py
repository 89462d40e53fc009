"""Dataset loading, evaluation, and the experiment runners.

Datasets are local TSV files with a header naming sentence1, sentence2 and
label columns. Similarity labels "1"/"0" map to +1/-1; entailment labels
"entailment"/"contradiction" map to +1/-1 and "neutral" rows are dropped
with a counted warning. The batch-variance experiment retrains on random
80% batches and reports the spread of run-level optimization step counts.
"""

import itertools
import json
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import inference
from .embed_store import EmbeddingTable, SentenceEmbeddingStore
from .errors import DataError, FormatError, IerlError
from .trainer import Instance, ModelStore, TrainConfig, train

SIMILARITY_LABELS = {"1": 1, "0": -1}
ENTAILMENT_LABELS = {"entailment": 1, "contradiction": -1}


class DroppedRowWarning(UserWarning):
    """Rows excluded while loading a dataset (neutral label or malformed)."""


@dataclass
class TaskDataset:
    task_kind: str  # "similarity" or "entailment"
    instances: list[Instance]
    name: str = ""
    neutral_dropped: int = 0
    malformed_dropped: int = 0


def load_task_tsv(path, task_kind: str) -> TaskDataset:
    if task_kind not in ("similarity", "entailment"):
        raise DataError(f"task_kind must be 'similarity' or 'entailment', got {task_kind!r}")
    label_map = SIMILARITY_LABELS if task_kind == "similarity" else ENTAILMENT_LABELS
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("missing header row")
    header = lines[0].split("\t")
    try:
        cols = {name: header.index(name) for name in ("sentence1", "sentence2", "label")}
    except ValueError:
        missing = [n for n in ("sentence1", "sentence2", "label") if n not in header]
        raise FormatError(f"missing column(s): {', '.join(missing)}") from None

    instances = []
    neutral = 0
    malformed = 0
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) <= max(cols.values()):
            malformed += 1
            warnings.warn(f"line {lineno}: too few columns, row dropped",
                          DroppedRowWarning, stacklevel=2)
            continue
        s1 = fields[cols["sentence1"]].strip()
        s2 = fields[cols["sentence2"]].strip()
        raw = fields[cols["label"]].strip()
        if not s1 or not s2:
            malformed += 1
            warnings.warn(f"line {lineno}: empty sentence, row dropped",
                          DroppedRowWarning, stacklevel=2)
            continue
        if task_kind == "entailment" and raw == "neutral":
            neutral += 1
            warnings.warn(f"line {lineno}: neutral row excluded",
                          DroppedRowWarning, stacklevel=2)
            continue
        if raw not in label_map:
            raise FormatError(
                f"unrecognized {task_kind} label {raw!r}", line=lineno)
        instances.append(Instance(s1, s2, label_map[raw]))
    return TaskDataset(task_kind=task_kind, instances=instances, name=str(path),
                       neutral_dropped=neutral, malformed_dropped=malformed)


def load_pairs_tsv(path) -> list[tuple[str, str]]:
    """Sentence pairs for inference; the label column is optional and ignored."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln]
    if not lines:
        raise FormatError("missing header row")
    header = lines[0].split("\t")
    try:
        i1, i2 = header.index("sentence1"), header.index("sentence2")
    except ValueError:
        raise FormatError("missing column(s): sentence1/sentence2") from None
    pairs = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) <= max(i1, i2) or not fields[i1].strip() or not fields[i2].strip():
            raise FormatError("malformed pair row", line=lineno)
        pairs.append((fields[i1].strip(), fields[i2].strip()))
    return pairs


@dataclass
class EvalReport:
    task: str
    accuracy: float
    tp: int
    tn: int
    fp: int
    fn: int
    unresolved: int = 0
    config: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def evaluate(
    models: ModelStore,
    test: TaskDataset,
    sentence_store: SentenceEmbeddingStore,
    table: EmbeddingTable,
    config_echo: dict | None = None,
) -> EvalReport:
    """Accuracy of the inference rule against gold labels.

    Instances whose sentences cannot be resolved are counted and scored as
    incorrect.
    """
    if not test.instances:
        raise DataError("empty evaluation set")
    tp = tn = fp = fn = 0
    unresolved = 0
    for inst in test.instances:
        try:
            decision = inference.infer_pair(
                inst.sentence1, inst.sentence2, models, sentence_store, table).decision
        except IerlError:
            unresolved += 1
            decision = -inst.label  # scored as incorrect
        if decision == 1 and inst.label == 1:
            tp += 1
        elif decision == -1 and inst.label == -1:
            tn += 1
        elif decision == 1:
            fp += 1
        else:
            fn += 1
    total = tp + tn + fp + fn
    return EvalReport(task=test.name, accuracy=(tp + tn) / total,
                      tp=tp, tn=tn, fp=fp, fn=fn, unresolved=unresolved,
                      config=dict(config_echo or {}))


@dataclass
class BatchVarianceReport:
    num_batches: int
    batch_fraction: float
    per_batch_steps: list[int]

    @property
    def min_steps(self) -> int:
        return min(self.per_batch_steps)

    @property
    def max_steps(self) -> int:
        return max(self.per_batch_steps)


def _seed_parts(*parts: int) -> tuple[int, ...]:
    return tuple(int(p) % (2 ** 64) for p in parts)


def sample_batch(n: int, size: int, rng_seed: int, batch_index: int) -> list[int]:
    """Deterministic without-replacement draw, returned in dataset order."""
    rng = np.random.default_rng(_seed_parts(rng_seed, batch_index))
    return sorted(int(i) for i in rng.choice(n, size=size, replace=False))


def batch_variance_experiment(
    dataset: Sequence[Instance],
    config: TrainConfig,
    num_batches: int,
    rng_seed: int,
    sentence_store: SentenceEmbeddingStore,
    table: EmbeddingTable,
    batch_fraction: float = 0.8,
) -> BatchVarianceReport:
    """Retrain on random batches and collect run-level step counts.

    Each batch draws floor(batch_fraction * N) instances without replacement
    from a fresh deterministic sub-seed; the recorded step count is the run
    level one (max over the batch's models).
    """
    instances = list(dataset)
    if num_batches < 1:
        raise DataError("num_batches must be positive")
    if not 0 < batch_fraction <= 1:
        raise DataError("batch_fraction must be in (0, 1]")
    size = int(batch_fraction * len(instances))
    if size < 2:
        raise DataError(
            f"dataset too small: {batch_fraction:.0%} of {len(instances)} instances "
            f"rounds to {size}, need at least 2")
    steps = []
    for b in range(num_batches):
        idx = sample_batch(len(instances), size, rng_seed, b)
        batch = [instances[i] for i in idx]
        try:
            result = train(batch, sentence_store, table, config)
        except IerlError as exc:
            raise DataError(f"batch {b} failed: {exc}") from exc
        steps.append(result.run_steps)
    return BatchVarianceReport(num_batches=num_batches,
                               batch_fraction=batch_fraction,
                               per_batch_steps=steps)


@dataclass
class GridSpec:
    learning_rates: list[float]
    l1_weights: list[float]
    max_powers: list[int] | None = None

    def __post_init__(self):
        if not self.learning_rates or not self.l1_weights:
            raise DataError("grid lists must be non-empty")
        if self.max_powers is not None and not self.max_powers:
            raise DataError("grid lists must be non-empty")


def load_grid_spec(path) -> GridSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid grid JSON: {exc}") from None
    try:
        return GridSpec(
            learning_rates=[float(x) for x in raw["learning_rates"]],
            l1_weights=[float(x) for x in raw["l1_weights"]],
            max_powers=([int(x) for x in raw["max_powers"]]
                        if raw.get("max_powers") is not None else None),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid grid spec: {exc}") from None


@dataclass
class GridCell:
    learning_rate: float
    l1_weight: float
    max_power: int | None
    report: EvalReport | None = None
    run_steps: int = 0
    error: str | None = None


def grid_search(
    train_ds: TaskDataset,
    dev_ds: TaskDataset,
    grid: GridSpec,
    base_config: TrainConfig,
    sentence_store: SentenceEmbeddingStore,
    table: EmbeddingTable,
) -> tuple[TrainConfig, list[GridCell]]:
    """Train/evaluate every grid cell; return the dev-accuracy argmax.

    Ties break toward fewer run steps, then smaller l1 weight, then smaller
    learning rate. Failed cells are recorded and skipped; only a fully failed
    grid raises.
    """
    if base_config.agg_mode == "mean":
        if grid.max_powers is not None:
            raise DataError("max_powers grid is meaningless with agg_mode 'mean'")
        powers: list[int | None] = [None]
    else:
        powers = list(grid.max_powers) if grid.max_powers is not None else [base_config.max_power]

    cells = []
    for lr, l1, p in itertools.product(grid.learning_rates, grid.l1_weights, powers):
        cfg = replace(base_config, learning_rate=lr, l1_weight=l1,
                      **({"max_power": p} if p is not None else {}))
        cell = GridCell(learning_rate=lr, l1_weight=l1, max_power=p)
        try:
            result = train(train_ds.instances, sentence_store, table, cfg)
            cell.run_steps = result.run_steps
            cell.report = evaluate(result.store, dev_ds, sentence_store, table,
                                   config_echo={"learning_rate": lr, "l1_weight": l1,
                                                "max_power": p, "agg_mode": cfg.agg_mode})
        except IerlError as exc:
            cell.error = str(exc)
        cells.append(cell)

    completed = [c for c in cells if c.error is None]
    if not completed:
        raise DataError("all grid cells failed")
    best = max(completed, key=lambda c: (c.report.accuracy, -c.run_steps,
                                         -c.l1_weight, -c.learning_rate))
    best_config = replace(base_config, learning_rate=best.learning_rate,
                          l1_weight=best.l1_weight,
                          **({"max_power": best.max_power}
                             if best.max_power is not None else {}))
    return best_config, cells


def _round6(x: float) -> float:
    return float(format(x, ".6g"))


def _jsonable(obj):
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (np.floating, float)):
        return _round6(float(obj))
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "__dataclass_fields__"):
        out = {name: _jsonable(getattr(obj, name)) for name in obj.__dataclass_fields__}
        for prop in ("min_steps", "max_steps", "total", "run_steps"):
            if hasattr(type(obj), prop) and isinstance(getattr(type(obj), prop), property):
                out[prop] = _jsonable(getattr(obj, prop))
        return out
    return obj


def emit_report(report, path) -> None:
    """Write a report as JSON: sorted keys, LF endings, 6 significant digits."""
    text = json.dumps(_jsonable(report), sort_keys=True, indent=2, ensure_ascii=False)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")
