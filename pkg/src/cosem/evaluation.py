"""Ranked-prediction metrics (MRR@k, HR@k), the recency baseline, and reports.

A ranker is any callable mapping a :class:`~cosem.corpus.WindowInstance` to an
ordered id list (best guess first, at most k entries used). Metrics are pure
functions of those rankings and the instance target sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .corpus import WindowInstance
from .errors import AllInstancesSkippedError

Ranker = Callable[[WindowInstance], Sequence[int]]


@dataclass
class EvalReport:
    """Aggregate and per-instance ranking quality over one instance set."""

    mrr_at_k: float
    hr_at_k: float
    k: int
    instance_count: int
    per_instance: list[tuple[int, float, int]]
    skipped_oov: int = 0


def reciprocal_rank(predicted: Sequence[int], target_ids: Iterable[int], k: int) -> float:
    """1/position of the first predicted id that is in the target set.

    Positions are 1-based and only the first ``k`` predictions count; a miss
    scores 0. An empty prediction list scores 0.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    targets = set(target_ids)
    for pos, app_id in enumerate(predicted[:k], start=1):
        if app_id in targets:
            return 1.0 / pos
    return 0.0


def hit(predicted: Sequence[int], target_ids: Iterable[int], k: int) -> int:
    """1 if any of the first ``k`` predictions is in the target set, else 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    targets = set(target_ids)
    return int(any(app_id in targets for app_id in predicted[:k]))


def evaluate(
    ranker: Ranker,
    instances: Sequence[WindowInstance],
    k: int = 5,
    skipped_oov: int = 0,
) -> EvalReport:
    """Score a ranker on every instance; aggregates are plain means.

    ``skipped_oov`` passes through a count of instances already dropped
    upstream (for example, targets fully unknown to the model's vocabulary),
    so the report discloses them.

    Raises:
        AllInstancesSkippedError: the instance list is empty.
    """
    if not instances:
        raise AllInstancesSkippedError(
            f"no scorable instances ({skipped_oov} skipped)"
        )
    per_instance: list[tuple[int, float, int]] = []
    for index, inst in enumerate(instances):
        predicted = list(ranker(inst))
        rr = reciprocal_rank(predicted, inst.target_ids, k)
        h = hit(predicted, inst.target_ids, k)
        per_instance.append((index, rr, h))
    n = len(instances)
    # fsum: correctly rounded, so the aggregate is exactly permutation-invariant
    return EvalReport(
        mrr_at_k=math.fsum(rr for _, rr, _ in per_instance) / n,
        hr_at_k=sum(h for _, _, h in per_instance) / n,
        k=k,
        instance_count=n,
        per_instance=per_instance,
        skipped_oov=skipped_oov,
    )


def mru_baseline(instance: WindowInstance, k: int) -> list[int]:
    """The ``k`` most recently used distinct apps, most recent first.

    ``history_ids`` is oldest-first. Fewer than ``k`` distinct apps give a
    shorter list; no padding. Empty history gives an empty prediction.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    seen: set[int] = set()
    out: list[int] = []
    for app_id in reversed(instance.history_ids):
        if app_id not in seen:
            seen.add(app_id)
            out.append(app_id)
            if len(out) == k:
                break
    return out


def report_to_dict(report: EvalReport) -> dict:
    """JSON-ready view of a report (tuples become lists)."""
    return {
        "mrr_at_k": report.mrr_at_k,
        "hr_at_k": report.hr_at_k,
        "k": report.k,
        "instance_count": report.instance_count,
        "skipped_oov": report.skipped_oov,
        "per_instance": [[i, rr, h] for i, rr, h in report.per_instance],
    }


def format_table(rows: Sequence[tuple[str, EvalReport]]) -> str:
    """Plain-text comparison table: one row per model, M@k and H@k columns."""
    if not rows:
        raise ValueError("no rows to format")
    k = rows[0][1].k
    label_width = max(5, max(len(label) for label, _ in rows))
    header = f"{'Model'.ljust(label_width)}  {f'M@{k}':>8}  {f'H@{k}':>8}"
    lines = [header, "-" * len(header)]
    for label, report in rows:
        lines.append(
            f"{label.ljust(label_width)}  {report.mrr_at_k:>8.4f}  {report.hr_at_k:>8.4f}"
        )
    return "\n".join(lines)
