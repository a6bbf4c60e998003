"""Domain types, budget arithmetic, deterministic selection, checkpoints.

All types here are immutable values after construction; the loop advances by
producing new ``RoundState``/``DatasetBundle`` values rather than mutating.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "SelectionExhausted",
    "CheckpointError",
    "Origin",
    "Utterance",
    "LogicalForm",
    "Example",
    "DatasetBundle",
    "BudgetSchedule",
    "RoundState",
    "FeatureVector",
    "budget_for_round",
    "topk_select",
    "merge_training_set",
    "checkpoint_save",
    "checkpoint_load",
    "write_examples_jsonl",
    "read_examples_jsonl",
    "stable_seed",
]


def stable_seed(*parts: object) -> int:
    """Platform-independent 63-bit seed derived from the given parts.

    Used to give every randomized stage its own reproducible stream, so a
    resumed run draws exactly what the uninterrupted run would have drawn.
    """
    digest = hashlib.md5("|".join(map(str, parts)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


class SelectionExhausted(RuntimeError):
    """Raised when fewer finite-scored candidates exist than requested."""


class CheckpointError(ValueError):
    """Raised when a checkpoint file is corrupt; names the offending field."""


class Origin(str, enum.Enum):
    SOURCE = "source"
    MACHINE_TRANSLATED = "machine_translated"
    HUMAN_TRANSLATED = "human_translated"


@dataclass(frozen=True)
class Utterance:
    """A single utterance; ``tokens`` are derived from ``raw`` by
    :func:`hat.textmodel.tokenize`."""

    id: str
    language: str
    raw: str
    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValueError(f"utterance {self.id!r} has no tokens")

    @classmethod
    def from_raw(cls, id: str, language: str, raw: str) -> "Utterance":
        from .textmodel import tokenize

        return cls(id=id, language=language, raw=raw, tokens=tokenize(raw))


@dataclass(frozen=True, eq=False)
class LogicalForm:
    """A meaning representation. Equality is canonical-string equality; that
    equality is the exact-match criterion used everywhere."""

    canonical: str
    template_id: int

    def __post_init__(self) -> None:
        normalized = " ".join(self.canonical.split())
        if normalized != self.canonical:
            raise ValueError(f"canonical form not whitespace-normalized: {self.canonical!r}")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LogicalForm):
            return NotImplemented
        return self.canonical == other.canonical

    def __hash__(self) -> int:
        return hash(self.canonical)


@dataclass(frozen=True)
class Example:
    utterance: Utterance
    lf: LogicalForm
    origin: Origin


@dataclass(frozen=True)
class DatasetBundle:
    """The partitioned dataset state the selection loop works over.

    ``d_source`` and ``d_mt`` are aligned 1:1 through ``alignment`` (source
    utterance id -> machine-translation utterance id). ``d_ht`` grows by one
    batch per round; entries keep their selection order.
    """

    d_source: tuple[Example, ...]
    d_mt: tuple[Example, ...]
    d_ht: tuple[Example, ...]
    test_source: tuple[Example, ...]
    test_target: tuple[Example, ...]
    alignment: Mapping[str, str]

    def __post_init__(self) -> None:
        if len(self.d_source) != len(self.d_mt):
            raise ValueError(
                f"source/MT size mismatch: {len(self.d_source)} vs {len(self.d_mt)}"
            )
        ht_ids = [ex.utterance.id for ex in self.d_ht]
        if len(set(ht_ids)) != len(ht_ids):
            raise ValueError("duplicate ids in human-translated partition")

    def source_by_id(self) -> dict[str, Example]:
        return {ex.utterance.id: ex for ex in self.d_source}

    def mt_by_id(self) -> dict[str, Example]:
        return {ex.utterance.id: ex for ex in self.d_mt}

    def mt_for_source(self, source_id: str) -> Example:
        return self.mt_by_id()[self.alignment[source_id]]

    def with_new_ht(self, new_ht: Sequence[Example]) -> "DatasetBundle":
        return DatasetBundle(
            d_source=self.d_source,
            d_mt=self.d_mt,
            d_ht=self.d_ht + tuple(new_ht),
            test_source=self.test_source,
            test_target=self.test_target,
            alignment=self.alignment,
        )


@dataclass(frozen=True)
class BudgetSchedule:
    """Cumulative selection budget as fractions of the pool size."""

    pool_size: int
    cumulative_fractions: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.pool_size < 1:
            raise ValueError("pool_size must be positive")
        prev = 0.0
        for f in self.cumulative_fractions:
            if not (0.0 < f <= 1.0):
                raise ValueError(f"fraction {f} outside (0, 1]")
            if f <= prev:
                raise ValueError("cumulative_fractions must be strictly increasing")
            prev = f
        counts = self.cumulative_counts()
        for a, b in zip((0,) + counts, counts):
            if b - a < 1:
                raise ValueError(
                    f"schedule produces a zero-increment round (counts {counts})"
                )

    def cumulative_counts(self) -> tuple[int, ...]:
        return tuple(
            max(1, math.floor(self.pool_size * f)) for f in self.cumulative_fractions
        )

    @property
    def num_rounds(self) -> int:
        return len(self.cumulative_fractions)


def budget_for_round(schedule: BudgetSchedule, q: int) -> tuple[int, int]:
    """Return (cumulative, increment) counts for round ``q`` (1-based)."""
    if not 1 <= q <= schedule.num_rounds:
        raise IndexError(f"round {q} outside schedule of {schedule.num_rounds} rounds")
    counts = schedule.cumulative_counts()
    cumulative = counts[q - 1]
    previous = counts[q - 2] if q >= 2 else 0
    return cumulative, cumulative - previous


@dataclass(frozen=True)
class RoundState:
    """Loop bookkeeping after round ``round_index`` has completed."""

    round_index: int
    selected_ids: tuple[str, ...]
    remaining_pool: tuple[str, ...]
    metrics: Mapping[str, float]
    rng_seed: int

    def __post_init__(self) -> None:
        overlap = set(self.selected_ids) & set(self.remaining_pool)
        if overlap:
            raise ValueError(f"selected ids still in pool: {sorted(overlap)[:5]}")


@dataclass(frozen=True)
class FeatureVector:
    """A fixed-dimension real vector with its L2 norm cached."""

    values: np.ndarray
    norm: float = field(init=False)

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("feature vector must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature vector has non-finite entries")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "norm", float(np.linalg.norm(arr)))

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])


def topk_select(
    scores: Mapping[str, float], k: int, pool: Sequence[str]
) -> list[str]:
    """Pick the ``k`` highest-scoring ids from ``pool``.

    Ties break by pool insertion order; the output is independent of the
    iteration order of ``scores``. Ids scored -inf are never returned; if
    fewer than ``k`` finite-scored ids exist, raises SelectionExhausted.
    """
    if k > len(pool):
        raise SelectionExhausted(f"requested {k} from pool of {len(pool)}")
    ranked: list[tuple[float, int, str]] = []
    for position, uid in enumerate(pool):
        s = scores[uid]
        if math.isnan(s):
            raise ValueError(f"NaN score for id {uid!r}")
        if s == -math.inf:
            continue
        ranked.append((-s, position, uid))
    if len(ranked) < k:
        raise SelectionExhausted(
            f"only {len(ranked)} finite-scored candidates for k={k}"
        )
    ranked.sort()
    return [uid for _, _, uid in ranked[:k]]


def merge_training_set(bundle: DatasetBundle) -> list[Example]:
    """Concatenate source, machine-translated, and human-translated data in
    deterministic order (source, MT aligned order, HT selection order)."""
    return list(bundle.d_source) + list(bundle.d_mt) + list(bundle.d_ht)


# --- serialization ---------------------------------------------------------

_CHECKPOINT_VERSION = 1


def _utterance_to_dict(u: Utterance) -> dict:
    from .textmodel import tokenize

    d = {"id": u.id, "language": u.language, "raw": u.raw}
    if u.tokens != tokenize(u.raw):
        # tokens normally re-derive from the text; store them only when not
        d["tokens"] = list(u.tokens)
    return d


def _utterance_from_dict(d: dict) -> Utterance:
    if "tokens" in d:
        return Utterance(
            id=d["id"], language=d["language"], raw=d["raw"], tokens=tuple(d["tokens"])
        )
    return Utterance.from_raw(d["id"], d["language"], d["raw"])


def _example_to_dict(ex: Example) -> dict:
    return {
        "utterance": _utterance_to_dict(ex.utterance),
        "lf": {"canonical": ex.lf.canonical, "template_id": ex.lf.template_id},
        "origin": ex.origin.value,
    }


def _example_from_dict(d: dict) -> Example:
    return Example(
        utterance=_utterance_from_dict(d["utterance"]),
        lf=LogicalForm(d["lf"]["canonical"], d["lf"]["template_id"]),
        origin=Origin(d["origin"]),
    )


def checkpoint_save(state: RoundState, bundle: DatasetBundle, path: str) -> None:
    """Persist a round state + bundle as a versioned JSON document.

    Round trips bit-exactly: ``checkpoint_load(path)`` returns values equal
    to the inputs, including ``rng_seed`` and float metric values.
    """
    doc = {
        "schema_version": _CHECKPOINT_VERSION,
        "state": {
            "round_index": state.round_index,
            "selected_ids": list(state.selected_ids),
            "remaining_pool": list(state.remaining_pool),
            "metrics": dict(state.metrics),
            "rng_seed": state.rng_seed,
        },
        "bundle": {
            "d_source": [_example_to_dict(e) for e in bundle.d_source],
            "d_mt": [_example_to_dict(e) for e in bundle.d_mt],
            "d_ht": [_example_to_dict(e) for e in bundle.d_ht],
            "test_source": [_example_to_dict(e) for e in bundle.test_source],
            "test_target": [_example_to_dict(e) for e in bundle.test_target],
            "alignment": dict(bundle.alignment),
        },
    }
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def checkpoint_load(path: str) -> tuple[RoundState, DatasetBundle]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint document: {exc}") from exc
    if doc.get("schema_version") != _CHECKPOINT_VERSION:
        raise CheckpointError(
            f"field 'schema_version': expected {_CHECKPOINT_VERSION}, "
            f"got {doc.get('schema_version')!r}"
        )
    try:
        s = doc["state"]
        state = RoundState(
            round_index=s["round_index"],
            selected_ids=tuple(s["selected_ids"]),
            remaining_pool=tuple(s["remaining_pool"]),
            metrics=dict(s["metrics"]),
            rng_seed=s["rng_seed"],
        )
        b = doc["bundle"]
        bundle = DatasetBundle(
            d_source=tuple(_example_from_dict(e) for e in b["d_source"]),
            d_mt=tuple(_example_from_dict(e) for e in b["d_mt"]),
            d_ht=tuple(_example_from_dict(e) for e in b["d_ht"]),
            test_source=tuple(_example_from_dict(e) for e in b["test_source"]),
            test_target=tuple(_example_from_dict(e) for e in b["test_target"]),
            alignment=dict(b["alignment"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"field {exc}: corrupt checkpoint") from exc
    return state, bundle


def write_examples_jsonl(path: str, examples: Iterable[Example]) -> None:
    """One example per line: {"id","lang","text","lf","origin"}."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(
                json.dumps(
                    {
                        "id": ex.utterance.id,
                        "lang": ex.utterance.language,
                        "text": ex.utterance.raw,
                        "lf": ex.lf.canonical,
                        "origin": ex.origin.value,
                    }
                )
                + "\n"
            )


def read_examples_jsonl(
    path: str, template_ids: Mapping[str, int] | None = None
) -> list[Example]:
    """Read the JSONL dataset format.

    Template ids are not part of the line schema; pass ``template_ids``
    (canonical -> id) to preserve an existing registry, otherwise ids are
    assigned by sorted canonical order.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    if template_ids is None:
        canon = sorted({r["lf"] for r in rows})
        template_ids = {c: i for i, c in enumerate(canon)}
    out = []
    for r in rows:
        out.append(
            Example(
                utterance=Utterance.from_raw(r["id"], r["lang"], r["text"]),
                lf=LogicalForm(r["lf"], template_ids[r["lf"]]),
                origin=Origin(r["origin"]),
            )
        )
    return out
