"""Evaluation protocol: anomaly injection, leave-one-day-out cross-validation,
detection/misdetection ratios, parameter grids, and Pareto frontiers.

Injected operations are judged counterfactually: each one sees the belief and
event window of the real stream at its instant and never contaminates the
stream, so judgments are independent of injection order.  Threshold
parameters are swept over recorded per-operation scores instead of refitting,
which makes dense threshold grids tractable without changing any outcome.
"""

from __future__ import annotations

import csv
import json
from bisect import bisect_left
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, time, timedelta
from itertools import product
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .detector import (
    ANOMALOUS,
    BaselineParams,
    Thresholds,
    estimation_score,
    judge_estimation_baseline,
    judge_proposed,
    judge_sequence_baseline,
    sequence_scores,
)
from .errors import ModelError, ValidationError
from .hsmodel import (
    ModelParams,
    TrainedModel,
    fit_operations,
    fit_transitions,
    run_filter,
    slots_by_day,
    uniform_belief,
)
from .ingest import SLOTS_PER_DAY, EventRecord, SensorFrame, TimeslotRecord, build_timeslots
from .labeling import ALPHABET, LabeledSlot, LabelingParams, label_states
from .seqstore import SeqParams, build_timed_store, store_sequences
from .vocab import Vocabulary

SECONDS_PER_DAY = 86400


@dataclass(frozen=True)
class InjectionPlan:
    """Synthetic anomalous target operations for one detection day."""

    day_index: int
    seed: int
    operations: tuple[EventRecord, ...]


def inject_anomalies(
    day_start: datetime,
    count: int = 100,
    seed: int = 0,
    day_index: int = 0,
    device: str = "cooking_stove",
    action: str = "on",
) -> InjectionPlan:
    """Uniform random operation times over the day, deterministic per seed."""
    if count < 0:
        raise ValidationError("must be non-negative", field="count")
    rng = np.random.default_rng([seed, day_index])
    seconds = sorted(int(s) for s in rng.integers(0, SECONDS_PER_DAY, size=count))
    operations = tuple(
        EventRecord(day_start + timedelta(seconds=s), device, action) for s in seconds
    )
    return InjectionPlan(day_index=day_index, seed=seed, operations=operations)


@dataclass(frozen=True)
class EvalPoint:
    """One (misdetection, detection) outcome for one parameter combination."""

    method: str
    params: tuple[tuple[str, object], ...]
    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def detection_ratio(self) -> float:
        total = self.tp + self.fn
        return self.tp / total if total else 0.0

    @property
    def misdetection_ratio(self) -> float:
        total = self.fp + self.tn
        return self.fp / total if total else 0.0

    @property
    def params_json(self) -> str:
        return json.dumps(dict(self.params), sort_keys=True)

    @property
    def sort_key(self) -> tuple[str, str]:
        return (self.method, self.params_json)


def make_params(mapping: Mapping[str, object]) -> tuple[tuple[str, object], ...]:
    return tuple(sorted(mapping.items()))


@dataclass
class EvalDataset:
    """A whole-day-aligned slot stream plus its event list."""

    slots: list[TimeslotRecord]
    vocabulary: Vocabulary = field(default_factory=Vocabulary)

    def __post_init__(self) -> None:
        if len(self.slots) % SLOTS_PER_DAY != 0:
            raise ValidationError(
                f"slot count {len(self.slots)} is not a whole number of days"
            )

    @classmethod
    def from_logs(
        cls,
        events: Sequence[EventRecord],
        frames: Sequence[SensorFrame],
        vocabulary: Vocabulary | None = None,
        day_origin: time = time(0, 0),
        default_frame: SensorFrame | None = None,
    ) -> "EvalDataset":
        slots = build_timeslots(events, frames, day_origin, default_frame)
        return cls(slots=slots, vocabulary=vocabulary or Vocabulary())

    @property
    def n_days(self) -> int:
        return len(self.slots) // SLOTS_PER_DAY

    def day_slots(self, day: int) -> list[TimeslotRecord]:
        return self.slots[day * SLOTS_PER_DAY : (day + 1) * SLOTS_PER_DAY]

    def day_events(self, day: int) -> list[EventRecord]:
        return [event for slot in self.day_slots(day) for event in slot.events]

    @property
    def events(self) -> list[EventRecord]:
        return [event for slot in self.slots for event in slot.events]


class OperationContext:
    """One operation to judge: the real window and belief at its instant."""

    def __init__(
        self,
        op: EventRecord,
        injected: bool,
        preceding: list[EventRecord],
        belief_provider: Callable[[], np.ndarray],
    ) -> None:
        self.op = op
        self.injected = injected
        self.preceding = preceding
        self._belief_provider = belief_provider
        self._belief: np.ndarray | None = None

    @property
    def belief(self) -> np.ndarray:
        if self._belief is None:
            self._belief = self._belief_provider()
        return self._belief


class Method(Protocol):  # pragma: no cover - structural type
    name: str

    def fit(self, fold: "FoldContext") -> Callable[[OperationContext], bool]:
        """Train on the fold and return a judge mapping context -> anomalous."""


class FoldContext:
    """Per-fold training artifacts, built lazily and shared across methods."""

    def __init__(
        self,
        dataset: EvalDataset,
        labeled: Sequence[LabeledSlot],
        heldout_day: int,
        labeling_params: LabelingParams,
        model_params: ModelParams,
        seq_params: SeqParams,
    ) -> None:
        self.dataset = dataset
        self.labeled = labeled
        self.heldout_day = heldout_day
        self.labeling_params = labeling_params
        self.model_params = model_params
        self.seq_params = seq_params
        self._cache: dict[str, object] = {}

    def training_labeled(self) -> list[LabeledSlot]:
        if "training_labeled" not in self._cache:
            self._cache["training_labeled"] = [
                item
                for item in self.labeled
                if (item.slot.t - 1) // SLOTS_PER_DAY != self.heldout_day
                and not item.excluded_day
            ]
        return self._cache["training_labeled"]  # type: ignore[return-value]

    def state_model(self):
        if "state_model" not in self._cache:
            kept = self.training_labeled()
            if not kept:
                raise ModelError("no usable training days in fold")
            transitions = fit_transitions(kept, self.model_params.t_z_max)
            operations = fit_operations(kept, self.dataset.vocabulary)
            self._cache["state_model"] = (transitions, operations)
        return self._cache["state_model"]

    def training_traces(self):
        if "training_traces" not in self._cache:
            transitions, operations = self.state_model()
            traces = [
                run_filter([item.slot for item in day_slots], transitions, operations)
                for _, day_slots in sorted(slots_by_day(self.training_labeled()).items())
            ]
            self._cache["training_traces"] = traces
        return self._cache["training_traces"]

    def sequence_store(self, seq_params: SeqParams | None = None):
        seq_params = seq_params or self.seq_params
        key = ("store", json.dumps(seq_params.to_payload(), sort_keys=True))
        if key not in self._cache:
            self._cache[key] = store_sequences(
                self.training_traces(),
                self.dataset.vocabulary.detection_target,
                seq_params,
                len(ALPHABET),
            )
        return self._cache[key]

    def timed_store(self):
        if "timed_store" not in self._cache:
            events = [
                event
                for day in range(self.dataset.n_days)
                if day != self.heldout_day
                for event in self.dataset.day_events(day)
            ]
            self._cache["timed_store"] = build_timed_store(
                events, self.dataset.vocabulary.detection_target, self.seq_params
            )
        return self._cache["timed_store"]

    def detection_trace(self):
        if "detection_trace" not in self._cache:
            transitions, operations = self.state_model()
            self._cache["detection_trace"] = run_filter(
                self.dataset.day_slots(self.heldout_day),
                transitions,
                operations,
                uniform_belief(len(ALPHABET)),
            )
        return self._cache["detection_trace"]

    def proposed_model(self, seq_params: SeqParams | None = None) -> TrainedModel:
        seq_params = seq_params or self.seq_params
        transitions, operations = self.state_model()
        return TrainedModel(
            vocabulary=self.dataset.vocabulary,
            states=ALPHABET,
            labeling_params=self.labeling_params,
            model_params=self.model_params,
            seq_params=seq_params,
            transitions=transitions,
            operations=operations,
            store=self.sequence_store(seq_params),
            baseline_store=None,
        )

    def judged_operations(
        self, injections_per_day: int, seed: int, injection_action: str = "on"
    ) -> list[OperationContext]:
        """Real target operations of the held-out day, then injected ones."""
        target = self.dataset.vocabulary.detection_target
        day_slots = self.dataset.day_slots(self.heldout_day)
        day_events = [event for slot in day_slots for event in slot.events]
        event_times = [event.timestamp for event in day_events]
        span = timedelta(seconds=self.seq_params.t_seq)

        contexts: list[OperationContext] = []
        global_pos = 0
        for slot_pos, slot in enumerate(day_slots):
            for event_pos, event in enumerate(slot.events):
                if event.device == target:
                    lo = bisect_left(event_times, event.timestamp - span)
                    preceding = day_events[lo:global_pos]
                    contexts.append(
                        OperationContext(
                            event,
                            injected=False,
                            preceding=preceding,
                            belief_provider=self._event_belief(slot_pos, event_pos),
                        )
                    )
                global_pos += 1

        plan = inject_anomalies(
            day_slots[0].start,
            injections_per_day,
            seed,
            day_index=self.heldout_day,
            device=target,
            action=injection_action,
        )
        for op in plan.operations:
            lo = bisect_left(event_times, op.timestamp - span)
            hi = bisect_left(event_times, op.timestamp)
            preceding = day_events[lo:hi]
            contexts.append(
                OperationContext(
                    op,
                    injected=True,
                    preceding=preceding,
                    belief_provider=self._injected_belief(op.timestamp),
                )
            )
        return contexts

    def _event_belief(self, slot_pos: int, event_pos: int) -> Callable[[], np.ndarray]:
        def provider() -> np.ndarray:
            trace = self.detection_trace()
            for step in trace.events_by_slot().get(slot_pos, ()):
                if step.event_pos == event_pos:
                    return step.pre
            raise RuntimeError("event missing from detection trace")

        return provider

    def _injected_belief(self, ts: datetime) -> Callable[[], np.ndarray]:
        return lambda: self.detection_trace().belief_before(ts)


@dataclass
class ProposedMethod:
    thresholds: Thresholds = field(default_factory=Thresholds)
    name: str = "proposed"

    def fit(self, fold: FoldContext) -> Callable[[OperationContext], bool]:
        model = fold.proposed_model()
        thresholds = self.thresholds

        def judge(ctx: OperationContext) -> bool:
            verdict = judge_proposed(model, ctx.belief, ctx.preceding, ctx.op, thresholds)
            return verdict.decision == ANOMALOUS

        return judge


@dataclass
class EstimationMethod:
    theta: float = 0.5
    name: str = "estimation"

    def fit(self, fold: FoldContext) -> Callable[[OperationContext], bool]:
        _, operations = fold.state_model()
        target = fold.dataset.vocabulary.detection_target
        theta = self.theta

        def judge(ctx: OperationContext) -> bool:
            verdict = judge_estimation_baseline(operations, ctx.belief, ctx.op, theta, target)
            return verdict.decision == ANOMALOUS

        return judge


@dataclass
class SequenceMethod:
    params: BaselineParams = field(default_factory=BaselineParams)
    name: str = "sequence"

    def fit(self, fold: FoldContext) -> Callable[[OperationContext], bool]:
        store = fold.timed_store()
        target = fold.dataset.vocabulary.detection_target
        seq_params = fold.seq_params
        params = self.params

        def judge(ctx: OperationContext) -> bool:
            verdict = judge_sequence_baseline(
                store, ctx.preceding, ctx.op, params, seq_params, target
            )
            return verdict.decision == ANOMALOUS

        return judge


def _make_folds(
    dataset: EvalDataset,
    labeling_params: LabelingParams,
    model_params: ModelParams,
    seq_params: SeqParams,
) -> list[FoldContext]:
    if dataset.n_days < 2:
        raise ModelError("cross-validation needs at least two days of data")
    labeled = label_states(
        dataset.slots, dataset.events, labeling_params, dataset.vocabulary
    )
    return [
        FoldContext(dataset, labeled, day, labeling_params, model_params, seq_params)
        for day in range(dataset.n_days)
    ]


def cross_validate(
    dataset: EvalDataset,
    methods: Sequence[Method],
    labeling_params: LabelingParams | None = None,
    model_params: ModelParams | None = None,
    seq_params: SeqParams | None = None,
    injections_per_day: int = 100,
    seed: int = 0,
) -> dict[str, EvalPoint]:
    """Aggregate per-method confusion counts over all leave-one-day-out folds.

    Real target operations are expected legitimate (anomalous verdicts are
    false positives), injected ones are expected anomalous (legitimate
    verdicts are false negatives).
    """
    labeling_params = labeling_params or LabelingParams()
    model_params = model_params or ModelParams()
    seq_params = seq_params or SeqParams()

    counts = {method.name: [0, 0, 0, 0] for method in methods}  # tp, fn, fp, tn
    for fold in _make_folds(dataset, labeling_params, model_params, seq_params):
        judges = {method.name: method.fit(fold) for method in methods}
        for ctx in fold.judged_operations(injections_per_day, seed):
            for name, judge in judges.items():
                anomalous = judge(ctx)
                bucket = counts[name]
                if ctx.injected:
                    if anomalous:
                        bucket[0] += 1
                    else:
                        bucket[1] += 1
                else:
                    if anomalous:
                        bucket[2] += 1
                    else:
                        bucket[3] += 1
    return {
        name: EvalPoint(name, make_params({}), tp=c[0], fn=c[1], fp=c[2], tn=c[3])
        for name, c in counts.items()
    }


# ---------------------------------------------------------------------------
# Grid search with post-hoc threshold sweeps


@dataclass
class ProposedGrid:
    t_x: tuple[int, ...] = (15,)
    t_y: tuple[int, ...] = (15,)
    t_c: tuple[int, ...] = (20,)
    criterion: str = "rank"
    l_values: tuple = (1,)
    n_single: tuple[float, ...] | str = "auto"
    n_multi: tuple[float, ...] | str = "auto"


@dataclass
class EstimationGrid:
    t_x: tuple[int, ...] = (15,)
    t_y: tuple[int, ...] = (15,)
    t_c: tuple[int, ...] = (20,)
    theta: tuple[float, ...] | str = "auto"


@dataclass
class SequenceGrid:
    alpha_seq: tuple[float, ...] = (0.0, 900.0, 3600.0, 10800.0, 32400.0, 43200.0)
    n_single: tuple[float, ...] | str = "auto"
    n_multi: tuple[float, ...] | str = "auto"


# Reference grids covering the full documented parameter ranges.  The per-length
# thresholds are swept over recorded scores ("auto"): every distinct achieved
# score is a candidate threshold, which reproduces the outcomes of an
# arbitrarily fine grid at a tiny fraction of the cost.
TABLE_GRID_PROPOSED = ProposedGrid(
    t_x=(15, 30, 60, 100),
    t_y=(15, 30, 60, 100),
    t_c=(10, 15, 20, 30, 45, 60),
    criterion="rank",
    l_values=(1, 2, 3, 4, 5, 6, 7, 8, 9, 10),
)
TABLE_GRID_ESTIMATION = EstimationGrid(
    t_x=(15, 30, 60, 100), t_y=(15, 30, 60, 100), t_c=(10, 15, 20, 30, 45, 60)
)
_SEQ_N_VALUES = (0.0, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 1.0)
TABLE_GRID_SEQUENCE = SequenceGrid(n_single=_SEQ_N_VALUES, n_multi=_SEQ_N_VALUES)


def _two_level_counts(
    s1: np.ndarray, s2: np.ndarray, injected: np.ndarray, n1: float, n2: float
) -> tuple[int, int, int, int]:
    anomalous = (s1 < n1) & (s2 < n2)
    tp = int(np.count_nonzero(anomalous & injected))
    fn = int(np.count_nonzero(~anomalous & injected))
    fp = int(np.count_nonzero(anomalous & ~injected))
    tn = int(np.count_nonzero(~anomalous & ~injected))
    return tp, fn, fp, tn


def _candidate_thresholds(scores: np.ndarray, cap: int = 2000) -> np.ndarray:
    values = np.unique(np.concatenate([scores, [0.0, 1.0]]))
    if len(values) > cap:
        idx = np.unique(np.linspace(0, len(values) - 1, cap).astype(int))
        values = values[idx]
    return values

def _auto_two_level_points(
    method: str,
    base_params: Mapping[str, object],
    s1: np.ndarray,
    s2: np.ndarray,
    injected: np.ndarray,
    name1: str = "n_single",
    name2: str = "n_multi",
) -> list[EvalPoint]:
    """Pareto-optimal outcomes of sweeping both thresholds over the scores."""
    c1 = _candidate_thresholds(s1)
    c2 = _candidate_thresholds(s2)
    # side="right" makes (score < candidate[a]) equivalent to (pos <= a).
    pos1 = np.searchsorted(c1, s1, side="right")
    pos2 = np.searchsorted(c2, s2, side="right")

    def cumulative(mask: np.ndarray) -> np.ndarray:
        hist = np.zeros((len(c1) + 1, len(c2) + 1), dtype=np.int64)
        np.add.at(hist, (pos1[mask], pos2[mask]), 1)
        return hist.cumsum(axis=0).cumsum(axis=1)

    inj_below = cumulative(injected)  # inj_below[a, b] = injected with s1 < c1[a], s2 < c2[b]
    real_below = cumulative(~injected)
    n_inj = int(np.count_nonzero(injected))
    n_real = int(np.count_nonzero(~injected))

    tp = inj_below[: len(c1), : len(c2)].ravel()
    fp = real_below[: len(c1), : len(c2)].ravel()
    fn = n_inj - tp
    tn = n_real - fp
    det = np.divide(tp, tp + fn, out=np.zeros(len(tp)), where=(tp + fn) > 0)
    mis = np.divide(fp, fp + tn, out=np.zeros(len(fp)), where=(fp + tn) > 0)

    keep = _frontier_indices(mis, det)
    points = []
    for flat in keep:
        a, b = divmod(flat, len(c2))
        params = dict(base_params)
        params[name1] = float(c1[a])
        params[name2] = float(c2[b])
        points.append(
            EvalPoint(method, make_params(params), int(tp[flat]), int(fn[flat]),
                      int(fp[flat]), int(tn[flat]))
        )
    points.sort(key=lambda p: p.sort_key)
    return points


def _frontier_indices(mis: np.ndarray, det: np.ndarray) -> list[int]:
    order = np.lexsort((-det, mis))
    keep: list[int] = []
    best = -1.0
    for idx in order:
        if det[idx] > best:
            keep.append(int(idx))
            best = float(det[idx])
    return keep


@dataclass
class _ScoreRecord:
    injected: bool
    estimation: float
    proposed: dict  # l value -> (s1, s2)
    sequence: dict  # alpha_seq -> (s1, s2)


def _collect_fold_scores(
    fold: FoldContext,
    need_proposed: Sequence | None,
    need_estimation: bool,
    need_sequence: Sequence[float] | None,
    seq_params_base: SeqParams,
    injections_per_day: int,
    seed: int,
) -> list[_ScoreRecord]:
    records: list[_ScoreRecord] = []
    target = fold.dataset.vocabulary.detection_target

    proposed_models: dict = {}
    if need_proposed:
        for l_value in need_proposed:
            if seq_params_base.criterion == "rank":
                sp = replace(seq_params_base, l_rank=int(l_value))
            else:
                sp = replace(seq_params_base, l_alpha=float(l_value))
            proposed_models[l_value] = fold.proposed_model(sp)
    operations = fold.state_model()[1] if (need_proposed or need_estimation) else None
    timed = fold.timed_store() if need_sequence else None

    for ctx in fold.judged_operations(injections_per_day, seed):
        proposed_scores: dict = {}
        for l_value, model in proposed_models.items():
            proposed_scores[l_value] = _best_deltas(model, ctx)
        est = estimation_score(operations, ctx.belief, ctx.op) if need_estimation else 0.0
        seq_scores: dict = {}
        if need_sequence:
            for alpha in need_sequence:
                seq_scores[alpha] = sequence_scores(
                    timed, ctx.preceding, ctx.op, alpha, seq_params_base
                )
        records.append(_ScoreRecord(ctx.injected, est, proposed_scores, seq_scores))
    return records


def _best_deltas(model: TrainedModel, ctx: OperationContext) -> tuple[float, float]:
    """Best occurrence probability among length-1 and length>=2 candidates."""
    from .detector import _window_pairs
    from .seqstore import candidates_ending_at

    params = model.seq_params
    pairs = _window_pairs(ctx.preceding, ctx.op, params.t_seq, params.w_max)
    best_single = 0.0
    best_multi = 0.0
    for items in candidates_ending_at(pairs, params.l_max):
        delta = min(1.0, float(np.dot(model.store.vector(items), ctx.belief)))
        if len(items) == 1:
            best_single = max(best_single, delta)
        else:
            best_multi = max(best_multi, delta)
    return best_single, best_multi


def _structural_labeling(base: LabelingParams, t_x: int, t_y: int, t_c: int) -> LabelingParams:
    return replace(base, t_x=t_x, t_y=t_y, t_c=t_c)


def _sweep_two_level(
    method: str,
    base_params: Mapping[str, object],
    scores: Sequence[tuple[float, float]],
    injected_flags: Sequence[bool],
    n_single: tuple[float, ...] | str,
    n_multi: tuple[float, ...] | str,
    name1: str = "n_single",
    name2: str = "n_multi",
) -> list[EvalPoint]:
    s1 = np.asarray([s[0] for s in scores])
    s2 = np.asarray([s[1] for s in scores])
    injected = np.asarray(injected_flags, dtype=bool)
    if n_single == "auto" or n_multi == "auto":
        return _auto_two_level_points(method, base_params, s1, s2, injected, name1, name2)
    points = []
    for v1, v2 in product(n_single, n_multi):
        tp, fn, fp, tn = _two_level_counts(s1, s2, injected, v1, v2)
        params = dict(base_params)
        params[name1] = float(v1)
        params[name2] = float(v2)
        points.append(EvalPoint(method, make_params(params), tp, fn, fp, tn))
    points.sort(key=lambda p: p.sort_key)
    return points


def grid_search(
    dataset: EvalDataset,
    grid: ProposedGrid | EstimationGrid | SequenceGrid,
    labeling_params: LabelingParams | None = None,
    model_params: ModelParams | None = None,
    seq_params: SeqParams | None = None,
    injections_per_day: int = 100,
    seed: int = 0,
    jobs: int = 1,
) -> list[EvalPoint]:
    """One EvalPoint per parameter combination of the grid.

    Structural parameters (labeling windows, state-selection values) retrain
    the model; threshold parameters are replayed over the recorded scores of
    each structural combination, so their sweeps are effectively free.  With
    "auto" thresholds the Pareto-optimal outcomes of a per-score sweep are
    emitted instead of a fixed list.
    """
    labeling_base = labeling_params or LabelingParams()
    model_params = model_params or ModelParams()
    seq_base = seq_params or SeqParams()
    points: list[EvalPoint] = []

    if isinstance(grid, SequenceGrid):
        folds = _make_folds(dataset, labeling_base, model_params, seq_base)
        records = _collect_records(
            folds, None, False, grid.alpha_seq, seq_base, injections_per_day, seed, jobs
        )
        injected = [r.injected for r in records]
        for alpha in grid.alpha_seq:
            scores = [r.sequence[alpha] for r in records]
            points.extend(
                _sweep_two_level(
                    "sequence",
                    {"alpha_seq": float(alpha), "t_seq": seq_base.t_seq},
                    scores,
                    injected,
                    grid.n_single,
                    grid.n_multi,
                    name1="n_seq_single",
                    name2="n_seq_multi",
                )
            )
        points.sort(key=lambda p: p.sort_key)
        return points

    for t_x, t_y, t_c in product(grid.t_x, grid.t_y, grid.t_c):
        labeling = _structural_labeling(labeling_base, t_x, t_y, t_c)
        structural = {"t_x": t_x, "t_y": t_y, "t_c": t_c}
        if isinstance(grid, EstimationGrid):
            folds = _make_folds(dataset, labeling, model_params, seq_base)
            records = _collect_records(
                folds, None, True, None, seq_base, injections_per_day, seed, jobs
            )
            points.extend(_sweep_estimation(records, structural, grid.theta))
        else:
            seq_struct = replace(seq_base, criterion=grid.criterion)
            folds = _make_folds(dataset, labeling, model_params, seq_struct)
            records = _collect_records(
                folds, grid.l_values, False, None, seq_struct, injections_per_day, seed, jobs
            )
            injected = [r.injected for r in records]
            for l_value in grid.l_values:
                scores = [r.proposed[l_value] for r in records]
                base = dict(structural)
                base["criterion"] = grid.criterion
                base["l_rank" if grid.criterion == "rank" else "l_alpha"] = l_value
                points.extend(
                    _sweep_two_level(
                        "proposed", base, scores, injected, grid.n_single, grid.n_multi
                    )
                )
    points.sort(key=lambda p: p.sort_key)
    return points


def _sweep_estimation(
    records: Sequence[_ScoreRecord],
    structural: Mapping[str, object],
    theta: tuple[float, ...] | str,
) -> list[EvalPoint]:
    scores = np.asarray([r.estimation for r in records])
    injected = np.asarray([r.injected for r in records], dtype=bool)
    inj_scores = np.sort(scores[injected])
    real_scores = np.sort(scores[~injected])
    n_inj, n_real = len(inj_scores), len(real_scores)

    def counts(th: float) -> tuple[int, int, int, int]:
        # Anomalous iff score <= theta (the legitimacy test is strict >).
        tp = int(np.searchsorted(inj_scores, th, side="right"))
        fp = int(np.searchsorted(real_scores, th, side="right"))
        return tp, n_inj - tp, fp, n_real - fp

    points = []
    if theta == "auto":
        candidates = _candidate_thresholds(scores)
        tp = np.searchsorted(inj_scores, candidates, side="right")
        fp = np.searchsorted(real_scores, candidates, side="right")
        det = np.divide(tp, n_inj, out=np.zeros(len(tp)), where=n_inj > 0)
        mis = np.divide(fp, n_real, out=np.zeros(len(fp)), where=n_real > 0)
        for idx in _frontier_indices(mis, det):
            params = dict(structural)
            params["theta"] = float(candidates[idx])
            points.append(
                EvalPoint(
                    "estimation",
                    make_params(params),
                    int(tp[idx]),
                    n_inj - int(tp[idx]),
                    int(fp[idx]),
                    n_real - int(fp[idx]),
                )
            )
    else:
        for th in theta:
            tp_, fn_, fp_, tn_ = counts(float(th))
            params = dict(structural)
            params["theta"] = float(th)
            points.append(EvalPoint("estimation", make_params(params), tp_, fn_, fp_, tn_))
    points.sort(key=lambda p: p.sort_key)
    return points


def _collect_records(
    folds: Sequence[FoldContext],
    need_proposed,
    need_estimation: bool,
    need_sequence,
    seq_params_base: SeqParams,
    injections_per_day: int,
    seed: int,
    jobs: int = 1,
) -> list[_ScoreRecord]:
    if jobs > 1:
        args = [
            (fold, need_proposed, need_estimation, need_sequence, seq_params_base,
             injections_per_day, seed)
            for fold in folds
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_collect_fold_scores_star, args))
        records: list[_ScoreRecord] = []
        for chunk in chunks:
            records.extend(chunk)
        return records
    records = []
    for fold in folds:
        records.extend(
            _collect_fold_scores(
                fold, need_proposed, need_estimation, need_sequence, seq_params_base,
                injections_per_day, seed,
            )
        )
    return records


def _collect_fold_scores_star(args) -> list[_ScoreRecord]:
    return _collect_fold_scores(*args)


def pareto_frontier(points: Sequence[EvalPoint]) -> list[EvalPoint]:
    """Keep, per misdetection level, the best detection achieved at or below it.

    Output is sorted by misdetection ratio, strictly increasing, with
    non-decreasing detection ratio; every input point is dominated by (or
    equal to) some output point.
    """
    if not points:
        return []
    ordered = sorted(
        points,
        key=lambda p: (p.misdetection_ratio, -p.detection_ratio, p.sort_key),
    )
    frontier: list[EvalPoint] = []
    best = -1.0
    for point in ordered:
        if point.detection_ratio > best:
            frontier.append(point)
            best = point.detection_ratio
    return frontier


def best_at(points: Sequence[EvalPoint], misdetection_cap: float = 0.10) -> EvalPoint | None:
    """Highest-detection point with misdetection strictly under the cap."""
    eligible = [p for p in points if p.misdetection_ratio < misdetection_cap]
    if not eligible:
        return None
    return min(
        eligible,
        key=lambda p: (-p.detection_ratio, p.misdetection_ratio, p.sort_key),
    )


RESULTS_HEADER = ("method", "params_json", "misdetection", "detection", "tp", "fn", "fp", "tn")


def write_results_csv(points: Iterable[EvalPoint], path: str | Path) -> None:
    rows = sorted(points, key=lambda p: p.sort_key)
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(RESULTS_HEADER)
        for point in rows:
            writer.writerow(
                [
                    point.method,
                    point.params_json,
                    repr(point.misdetection_ratio),
                    repr(point.detection_ratio),
                    point.tp,
                    point.fn,
                    point.fp,
                    point.tn,
                ]
            )
