"""Event-log ingestion, preprocessing filters, windowing, and splitting.

The pipeline is: ``ingest`` raw JSONL/CSV logs into :class:`Event` records,
``apply_filters`` to drop rare apps / sparse users / stopword chunks,
``build_vocabularies`` over the surviving stream, ``windowize`` into
:class:`WindowInstance` training examples, and ``chronological_split`` into
per-user 70/10/20 train/validation/test portions.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import Counter, OrderedDict
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

from .errors import (
    CorruptCheckpointError,
    EmptyCorpusError,
    ParseError,
    VersionMismatchError,
)

logger = logging.getLogger(__name__)

OOV_TOKEN = "<oov>"
OOV_ID = 0

BUNDLE_FORMAT = "cosem-corpus"
BUNDLE_VERSION = 1

# Fraction of malformed lines above which ingestion aborts.
MALFORMED_THRESHOLD = 0.01


@dataclass(frozen=True)
class Event:
    """One timestamped app-usage record with optional semantic chunks."""

    user_id: str
    timestamp: int
    app: str
    semantic_chunks: tuple[str, ...] = ()

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")
        if not self.app:
            raise ValueError("empty app token")


class Vocabulary:
    """Bidirectional token <-> dense integer id map."""

    def __init__(self, tokens: Sequence[str]):
        self.id_to_token: list[str] = list(tokens)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def encode(self, token: str) -> int:
        """Id of ``token``; raises ``KeyError`` for unknown tokens."""
        return self.token_to_id[token]

    def encode_or(self, token: str, default: int) -> int:
        return self.token_to_id.get(token, default)

    def decode(self, idx: int) -> str:
        return self.id_to_token[idx]

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def __repr__(self) -> str:
        return f"Vocabulary(size={self.size})"


@dataclass(frozen=True)
class WindowInstance:
    """One prediction example: current-window semantics, prior app history,
    and the set of apps actually used inside the window."""

    user_id: str
    window_start: int
    window_end: int
    semantic_ids: tuple[int, ...]
    history_ids: tuple[int, ...]
    target_ids: frozenset[int]

    def __post_init__(self):
        if self.window_start >= self.window_end:
            raise ValueError(f"window_start {self.window_start} >= window_end {self.window_end}")
        if not self.target_ids:
            raise ValueError("empty target set")


@dataclass
class SplitCorpus:
    """Per-user chronological train/validation/test instance splits plus the
    vocabularies they are encoded against."""

    train: list[WindowInstance]
    validation: list[WindowInstance]
    test: list[WindowInstance]
    app_vocab: Vocabulary
    semantic_vocab: Vocabulary


def _parse_jsonl_line(line: str) -> Event:
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    user = obj["user"]
    ts = obj["ts"]
    app = obj["app"]
    sem = obj.get("sem", [])
    if not isinstance(user, str) or not isinstance(app, str):
        raise ValueError("user and app must be strings")
    if not isinstance(ts, int) or isinstance(ts, bool):
        raise ValueError("ts must be an integer")
    if not isinstance(sem, list) or not all(isinstance(s, str) for s in sem):
        raise ValueError("sem must be a list of strings")
    return Event(user_id=user, timestamp=ts, app=app, semantic_chunks=tuple(sem))


def _parse_csv_row(row: dict) -> Event:
    if row.get("user") is None or row.get("ts") is None or row.get("app") is None:
        raise ValueError("missing required column")
    sem_field = row.get("sem") or ""
    return Event(
        user_id=row["user"],
        timestamp=int(row["ts"]),
        app=row["app"],
        semantic_chunks=tuple(sem_field.split()),
    )


def ingest(path: str | Path, format: str = "jsonl") -> list[Event]:
    """Read an event log into Events sorted by (user_id, timestamp).

    Malformed lines are counted and logged; ingestion aborts with
    :class:`ParseError` only when more than 1% of data lines are malformed.

    Raises:
        FileNotFoundError: missing input file.
        ParseError: malformed-line rate above the threshold.
        EmptyCorpusError: no valid events in the file.
    """
    path = Path(path)
    if format not in ("jsonl", "csv"):
        raise ValueError(f"unknown format {format!r}")
    if not path.exists():
        raise FileNotFoundError(str(path))

    events: list[Event] = []
    malformed = 0
    first_bad_line = 0
    total = 0

    if format == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                total += 1
                try:
                    events.append(_parse_jsonl_line(line))
                except (ValueError, KeyError):
                    malformed += 1
                    if first_bad_line == 0:
                        first_bad_line = line_no
    else:
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                total += 1
                line_no = reader.line_num
                try:
                    events.append(_parse_csv_row(row))
                except (ValueError, KeyError):
                    malformed += 1
                    if first_bad_line == 0:
                        first_bad_line = line_no

    if total > 0 and malformed / total > MALFORMED_THRESHOLD:
        raise ParseError(
            f"{malformed} of {total} lines malformed (first at line {first_bad_line})",
            line_no=first_bad_line,
            malformed=malformed,
        )
    if malformed:
        logger.warning("ingest %s: dropped %d malformed line(s), first at line %d",
                       path, malformed, first_bad_line)
    if not events:
        raise EmptyCorpusError(f"no valid events in {path}")

    events.sort(key=lambda e: (e.user_id, e.timestamp))
    return events


def apply_filters(
    events: Sequence[Event],
    min_app_count: int = 10,
    min_user_records: int = 5,
    stopwords: frozenset[str] | set[str] = frozenset(),
) -> list[Event]:
    """Drop rare apps, then sparse users, then stopword chunks, in that order.

    Each stage operates on the output of the previous one: apps used fewer
    than ``min_app_count`` times globally are removed first; users left with
    fewer than ``min_user_records`` events are removed next; finally stopword
    tokens are stripped from each surviving event's semantic chunks. Removing
    a user can push an app back under its threshold, so the app/user stages
    repeat until stable; that makes the whole operation idempotent.
    """
    if min_app_count < 0 or min_user_records < 0:
        raise ValueError("filter thresholds must be non-negative")

    kept = list(events)
    while kept:
        app_counts = Counter(e.app for e in kept)
        survivors = [e for e in kept if app_counts[e.app] >= min_app_count]
        user_counts = Counter(e.user_id for e in survivors)
        survivors = [e for e in survivors if user_counts[e.user_id] >= min_user_records]
        stable = len(survivors) == len(kept)
        kept = survivors
        if stable:
            break

    if stopwords:
        out = []
        for e in kept:
            chunks = tuple(c for c in e.semantic_chunks if c not in stopwords)
            out.append(e if chunks == e.semantic_chunks else replace(e, semantic_chunks=chunks))
        kept = out

    if not kept:
        raise EmptyCorpusError("all events removed by filters")
    return kept


def build_vocabularies(events: Sequence[Event]) -> tuple[Vocabulary, Vocabulary]:
    """App and semantic vocabularies in first-occurrence order.

    Events are ordered by (user_id, timestamp) before scanning, so the result
    is deterministic for any permutation of the same event list. The semantic
    vocabulary reserves id 0 for the out-of-vocabulary sentinel; the app
    vocabulary does not (unknown apps are an error at encode time).
    """
    if not events:
        raise EmptyCorpusError("cannot build vocabularies from zero events")
    ordered = sorted(events, key=lambda e: (e.user_id, e.timestamp))
    apps: "OrderedDict[str, None]" = OrderedDict()
    chunks: "OrderedDict[str, None]" = OrderedDict()
    for e in ordered:
        apps.setdefault(e.app, None)
        for c in e.semantic_chunks:
            chunks.setdefault(c, None)
    return Vocabulary(list(apps)), Vocabulary([OOV_TOKEN, *chunks])


def windowize(
    events: Sequence[Event],
    app_vocab: Vocabulary,
    semantic_vocab: Vocabulary,
    window_seconds: int = 3600,
    history_len: int = 8,
) -> list[WindowInstance]:
    """Tile each user's timeline into fixed windows and emit one instance per
    non-empty window.

    Windows are aligned to the user's first event. An instance's semantic ids
    are the concatenated chunks of the window's events (unknown chunks map to
    the sentinel id 0); its target is the distinct app-id set of the window;
    its history is the last ``history_len`` app ids from strictly earlier
    windows, oldest first. The user's first window has empty history.
    """
    if window_seconds <= 0:
        raise ValueError("window_seconds must be positive")
    if history_len < 1:
        raise ValueError("history_len must be >= 1")

    ordered = sorted(events, key=lambda e: (e.user_id, e.timestamp))
    by_user: "OrderedDict[str, list[Event]]" = OrderedDict()
    for e in ordered:
        by_user.setdefault(e.user_id, []).append(e)

    instances: list[WindowInstance] = []
    for user_id, user_events in by_user.items():
        t0 = user_events[0].timestamp
        buckets: "OrderedDict[int, list[Event]]" = OrderedDict()
        for e in user_events:
            buckets.setdefault((e.timestamp - t0) // window_seconds, []).append(e)

        history: list[int] = []
        for w_idx in sorted(buckets):
            bucket = buckets[w_idx]
            start = t0 + w_idx * window_seconds
            semantic_ids = tuple(
                semantic_vocab.encode_or(c, OOV_ID)
                for e in bucket
                for c in e.semantic_chunks
            )
            target_ids = frozenset(app_vocab.encode(e.app) for e in bucket)
            instances.append(
                WindowInstance(
                    user_id=user_id,
                    window_start=start,
                    window_end=start + window_seconds,
                    semantic_ids=semantic_ids,
                    history_ids=tuple(history[-history_len:]),
                    target_ids=target_ids,
                )
            )
            history.extend(app_vocab.encode(e.app) for e in bucket)
    return instances


def chronological_split(
    instances: Sequence[WindowInstance],
    app_vocab: Vocabulary,
    semantic_vocab: Vocabulary,
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
) -> SplitCorpus:
    """Per-user chronological split by the floor rule.

    For a user with ``c`` instances sorted by window start, the first
    ``floor(r_train * c)`` go to train, the next ``floor(r_val * c)`` to
    validation, and the remainder to test.
    """
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be non-negative and sum to 1, got {ratios}")

    by_user: "OrderedDict[str, list[WindowInstance]]" = OrderedDict()
    for inst in instances:
        by_user.setdefault(inst.user_id, []).append(inst)

    train: list[WindowInstance] = []
    validation: list[WindowInstance] = []
    test: list[WindowInstance] = []
    for user_insts in by_user.values():
        user_insts = sorted(user_insts, key=lambda i: i.window_start)
        c = len(user_insts)
        n_train = math.floor(ratios[0] * c + 1e-9)
        n_val = math.floor(ratios[1] * c + 1e-9)
        train.extend(user_insts[:n_train])
        validation.extend(user_insts[n_train:n_train + n_val])
        test.extend(user_insts[n_train + n_val:])

    return SplitCorpus(train=train, validation=validation, test=test,
                       app_vocab=app_vocab, semantic_vocab=semantic_vocab)


def align_instances(
    instances: Sequence[WindowInstance],
    source_app_vocab: Vocabulary,
    source_semantic_vocab: Vocabulary,
    target_app_vocab: Vocabulary,
    target_semantic_vocab: Vocabulary,
) -> tuple[list[WindowInstance], int]:
    """Re-encode instances from one vocabulary pair into another.

    Semantic chunks unknown to the target vocabulary map to the sentinel id;
    history apps unknown to it are dropped; target apps unknown to it are
    dropped from the target set. Instances whose target set becomes empty are
    skipped entirely. Returns the surviving instances and the skip count.
    """
    aligned: list[WindowInstance] = []
    skipped = 0
    for inst in instances:
        sem = tuple(
            target_semantic_vocab.encode_or(source_semantic_vocab.decode(i), OOV_ID)
            for i in inst.semantic_ids
        )
        hist = tuple(
            target_app_vocab.encode(source_app_vocab.decode(i))
            for i in inst.history_ids
            if source_app_vocab.decode(i) in target_app_vocab
        )
        targets = frozenset(
            target_app_vocab.encode(source_app_vocab.decode(i))
            for i in inst.target_ids
            if source_app_vocab.decode(i) in target_app_vocab
        )
        if not targets:
            skipped += 1
            continue
        aligned.append(replace(inst, semantic_ids=sem, history_ids=hist, target_ids=targets))
    if skipped:
        logger.info("alignment skipped %d instance(s) with fully out-of-vocabulary targets", skipped)
    return aligned, skipped


def _instance_to_row(inst: WindowInstance) -> list:
    return [
        inst.user_id,
        inst.window_start,
        inst.window_end,
        list(inst.semantic_ids),
        list(inst.history_ids),
        sorted(inst.target_ids),
    ]


def _row_to_instance(row: list) -> WindowInstance:
    user, start, end, sem, hist, targets = row
    return WindowInstance(
        user_id=user,
        window_start=start,
        window_end=end,
        semantic_ids=tuple(sem),
        history_ids=tuple(hist),
        target_ids=frozenset(targets),
    )


def save_bundle(split: SplitCorpus, path: str | Path, meta: dict | None = None) -> None:
    """Write a split corpus to a versioned JSON bundle. Deterministic bytes."""
    doc = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "meta": meta or {},
        "app_vocab": split.app_vocab.id_to_token,
        "semantic_vocab": split.semantic_vocab.id_to_token,
        "splits": {
            name: [_instance_to_row(i) for i in getattr(split, name)]
            for name in ("train", "validation", "test")
        },
    }
    Path(path).write_text(
        json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def load_bundle(path: str | Path) -> tuple[SplitCorpus, dict]:
    """Read a bundle written by :func:`save_bundle`; returns (corpus, meta)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptCheckpointError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != BUNDLE_FORMAT:
        raise CorruptCheckpointError(f"{path} is not a corpus bundle")
    if doc.get("version", 0) > BUNDLE_VERSION:
        raise VersionMismatchError(
            f"bundle version {doc['version']} newer than supported {BUNDLE_VERSION}"
        )
    try:
        split = SplitCorpus(
            train=[_row_to_instance(r) for r in doc["splits"]["train"]],
            validation=[_row_to_instance(r) for r in doc["splits"]["validation"]],
            test=[_row_to_instance(r) for r in doc["splits"]["test"]],
            app_vocab=Vocabulary(doc["app_vocab"]),
            semantic_vocab=Vocabulary(doc["semantic_vocab"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpointError(f"{path}: malformed bundle: {exc}") from exc
    return split, doc.get("meta", {})


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Stopword file: one token per line, UTF-8; blank lines ignored."""
    words = set()
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            token = line.strip()
            if token:
                words.add(token)
    return frozenset(words)


def default_stopwords() -> frozenset[str]:
    """The English function-word list shipped with the package."""
    text = resources.files("cosem").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    return frozenset(t for t in (line.strip() for line in text.splitlines()) if t)
