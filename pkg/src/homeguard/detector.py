"""Verdicts on target-device operations.

The combined method scores every candidate subsequence ending at the judged
operation by the belief-weighted sequence probability and accepts the
operation if any candidate clears its per-length threshold.  Two simpler
methods are provided for comparison: one thresholds the belief-weighted
operation probability, the other counts stored equivalent sequences near the
same time of day.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import timedelta
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import UsageError, ValidationError
from .ingest import EventRecord, format_timestamp
from .seqstore import (
    Items,
    SeqParams,
    TimedSequenceStore,
    candidates_ending_at,
    seconds_of_day,
)

if TYPE_CHECKING:  # pragma: no cover
    from .hsmodel import OperationTable, TrainedModel

LEGITIMATE = "legitimate"
ANOMALOUS = "anomalous"


@dataclass
class Thresholds:
    """Per-length occurrence-probability thresholds: one value for single
    operations, one shared by all longer sequences (long sequences are rare,
    so they get their own scale)."""

    n_single: float = 0.0
    n_multi: float = 0.0

    def __post_init__(self) -> None:
        for name in ("n_single", "n_multi"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError("must be in [0, 1]", field=name)

    def for_length(self, length: int) -> float:
        return self.n_single if length == 1 else self.n_multi


@dataclass
class BaselineParams:
    """Parameters of the two comparison methods."""

    theta: float = 0.5
    alpha_seq: float = 900.0
    n_seq_single: float = 0.1
    n_seq_multi: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta <= 1.0:
            raise ValidationError("must be in [0, 1]", field="theta")
        if self.alpha_seq < 0:
            raise ValidationError("must be non-negative", field="alpha_seq")
        for name in ("n_seq_single", "n_seq_multi"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError("must be in [0, 1]", field=name)

    def n_seq_for_length(self, length: int) -> float:
        return self.n_seq_single if length == 1 else self.n_seq_multi


@dataclass
class Verdict:
    operation: EventRecord
    method: str
    decision: str
    delta: float
    threshold: float
    sequence: Items | None = None
    sequence_length: int | None = None
    belief: np.ndarray | None = None

    @property
    def is_anomalous(self) -> bool:
        return self.decision == ANOMALOUS

    def to_jsonl(self) -> str:
        return json.dumps(
            {
                "timestamp": format_timestamp(self.operation.timestamp),
                "device": self.operation.device,
                "action": self.operation.action,
                "method": self.method,
                "decision": self.decision,
                "delta": self.delta,
                "seq_len": self.sequence_length,
                "threshold": self.threshold,
            },
            sort_keys=True,
        )


def _window_pairs(
    preceding: Sequence[EventRecord], op: EventRecord, t_seq: float, w_max: int
) -> list[tuple[str, str]]:
    """The judged window: events within ``t_seq`` seconds leading up to the
    operation, the operation itself as final item."""
    horizon = op.timestamp - timedelta(seconds=t_seq)
    pairs = [
        event.pair
        for event in preceding
        if horizon <= event.timestamp <= op.timestamp
    ]
    pairs.append(op.pair)
    if len(pairs) > w_max:
        pairs = pairs[-w_max:]
    return pairs


def _require_target(op: EventRecord, target_device: str) -> None:
    if op.device != target_device:
        raise UsageError(
            f"operation of {op.device!r} judged, but detection target is {target_device!r}"
        )


def judge_proposed(
    model: "TrainedModel",
    belief: np.ndarray,
    preceding: Sequence[EventRecord],
    op: EventRecord,
    thresholds: Thresholds,
) -> Verdict:
    """Judge one target operation with the combined state/sequence method.

    Every candidate subsequence ending at the operation gets the occurrence
    probability ``sum_i b'(i, y) * alpha_i``; the operation is legitimate if
    any candidate reaches its per-length threshold.  The evidence reports the
    candidate with the largest margin over its threshold.
    """
    _require_target(op, model.vocabulary.detection_target)
    params = model.seq_params
    pairs = _window_pairs(preceding, op, params.t_seq, params.w_max)
    candidates = candidates_ending_at(pairs, params.l_max)

    best_margin = -np.inf
    best: tuple[float, float, Items] | None = None
    legitimate = False
    for items in candidates:
        if model.store is None:
            delta = 0.0
        else:
            # Convex combination of values in [0, 1]; clamp the float residue.
            delta = min(1.0, max(0.0, float(np.dot(model.store.vector(items), belief))))
        threshold = thresholds.for_length(len(items))
        if delta >= threshold:
            legitimate = True
        margin = delta - threshold
        if margin > best_margin:
            best_margin = margin
            best = (delta, threshold, items)

    assert best is not None  # the single-operation candidate always exists
    delta, threshold, items = best
    return Verdict(
        operation=op,
        method="proposed",
        decision=LEGITIMATE if legitimate else ANOMALOUS,
        delta=delta,
        threshold=threshold,
        sequence=items,
        sequence_length=len(items),
        belief=belief,
    )


def estimation_score(
    operations: "OperationTable", belief: np.ndarray, op: EventRecord
) -> float:
    """Belief-weighted operation probability of the judged operation."""
    return min(1.0, max(0.0, float(np.dot(belief, operations.vector(op.pair)))))


def judge_estimation_baseline(
    operations: "OperationTable",
    belief: np.ndarray,
    op: EventRecord,
    theta: float,
    target_device: str,
) -> Verdict:
    """Judge by thresholding the belief-weighted operation probability."""
    _require_target(op, target_device)
    score = estimation_score(operations, belief, op)
    return Verdict(
        operation=op,
        method="estimation",
        decision=LEGITIMATE if score > theta else ANOMALOUS,
        delta=score,
        threshold=theta,
        belief=belief,
    )


def sequence_scores(
    store: TimedSequenceStore,
    preceding: Sequence[EventRecord],
    op: EventRecord,
    alpha_seq: float,
    seq_params: SeqParams,
) -> tuple[float, float]:
    """Best match ratio among length-1 and length>=2 candidates."""
    pairs = _window_pairs(preceding, op, seq_params.t_seq, seq_params.w_max)
    tod = seconds_of_day(op.timestamp)
    best_single = 0.0
    best_multi = 0.0
    for items in candidates_ending_at(pairs, seq_params.l_max):
        ratio = store.ratio(items, tod, alpha_seq)
        if len(items) == 1:
            best_single = max(best_single, ratio)
        else:
            best_multi = max(best_multi, ratio)
    return best_single, best_multi


def judge_sequence_baseline(
    store: TimedSequenceStore,
    preceding: Sequence[EventRecord],
    op: EventRecord,
    params: BaselineParams,
    seq_params: SeqParams,
    target_device: str,
) -> Verdict:
    """Judge by counting stored equivalent sequences near the time of day.

    For each candidate subsequence ending at the operation, the stored
    occurrences of the same sequence within ``alpha_seq`` seconds of the
    operation's time of day (cyclic distance) are counted and divided by the
    total number of stored target operations.  With nothing stored the
    operation is anomalous outright.
    """
    _require_target(op, target_device)
    pairs = _window_pairs(preceding, op, seq_params.t_seq, seq_params.w_max)
    candidates = candidates_ending_at(pairs, seq_params.l_max)
    tod = seconds_of_day(op.timestamp)

    if store.target_total == 0:
        return Verdict(
            operation=op,
            method="sequence",
            decision=ANOMALOUS,
            delta=0.0,
            threshold=params.n_seq_for_length(1),
            sequence=candidates[0],
            sequence_length=1,
        )

    best_margin = -np.inf
    best: tuple[float, float, Items] | None = None
    legitimate = False
    for items in candidates:
        ratio = store.ratio(items, tod, params.alpha_seq)
        threshold = params.n_seq_for_length(len(items))
        if ratio >= threshold:
            legitimate = True
        margin = ratio - threshold
        if margin > best_margin:
            best_margin = margin
            best = (ratio, threshold, items)

    assert best is not None
    ratio, threshold, items = best
    return Verdict(
        operation=op,
        method="sequence",
        decision=LEGITIMATE if legitimate else ANOMALOUS,
        delta=ratio,
        threshold=threshold,
        sequence=items,
        sequence_length=len(items),
    )
