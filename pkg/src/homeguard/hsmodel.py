"""State transition model, operation probabilities, and the forward filter.

Transitions are estimated per slot-of-day: the chain of end-of-slot states
contributes one (previous state, next state) pair per slot boundary, and the
estimate for slot-of-day ``k`` pools the pairs arriving at slots-of-day within
an adaptive window ``k - T_Z .. k + T_Z`` (wrapping at midnight).  ``T_Z`` is
chosen per ``k`` as the smallest halfwidth such that every state occurs at
least once inside the window, capped at ``t_z_max``.

The filter maintains a belief over the state alphabet: a matrix product and
renormalization at every slot boundary, a componentwise multiply by the
operation probabilities at every observed event.  Degenerate updates (all
probability mass annihilated) reset the belief to uniform so detection can
always proceed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, time
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ModelError, VocabularyError
from .ingest import SLOTS_PER_DAY, EventRecord, TimeslotRecord
from .labeling import ALPHABET, STATE_INDEX, HomeState, LabeledSlot, LabelingParams, parse_state_key
from .seqstore import SeqParams, SequenceStore, TimedSequenceStore, build_timed_store, store_sequences
from .vocab import Vocabulary

FORMAT_VERSION = 1


def uniform_belief(n_states: int = len(ALPHABET)) -> np.ndarray:
    return np.full(n_states, 1.0 / n_states)


@dataclass
class ModelParams:
    t_z_max: int = 720
    slot_seconds: int = 60

    def __post_init__(self) -> None:
        if not 0 <= self.t_z_max <= 720:
            raise ModelError(f"t_z_max must be in [0, 720], got {self.t_z_max}")


@dataclass
class TransitionTensor:
    """Row-stochastic transition matrices per slot-of-day.

    ``probs[k-1][i][j]`` is the probability of moving from state ``i`` to
    state ``j`` when entering slot-of-day ``k``.  Rows without any observed
    outgoing transition are all-zero.  ``t_z[k-1]`` records the realized
    window halfwidth.
    """

    probs: np.ndarray  # (1440, S, S)
    t_z: np.ndarray  # (1440,) int

    @property
    def n_states(self) -> int:
        return self.probs.shape[1]

    def matrix(self, k: int) -> np.ndarray:
        return self.probs[k - 1]


@dataclass
class OperationTable:
    """Per-state probability of observing each registered operation.

    ``probs[pair][i]`` = share of the slots carrying state ``i`` in which the
    operation occurred while that state was in force.  Operations absent from
    the training data map to an all-ones vector so that observing them leaves
    the belief untouched.
    """

    n_states: int
    probs: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)

    def vector(self, pair: tuple[str, str]) -> np.ndarray:
        vec = self.probs.get(pair)
        if vec is None:
            raise VocabularyError(f"operation {pair!r} is not registered in the model")
        return vec


@dataclass
class StateBelief:
    """Belief over the state alphabet at one instant.

    ``t`` is the slot-of-data index, ``event_index`` the number of within-slot
    event updates already applied (0 right after the slot boundary).
    """

    probs: np.ndarray
    t: int
    event_index: int = 0


def fit_transitions(
    labeled: Sequence[LabeledSlot],
    t_z_max: int = 720,
    n_states: int = len(ALPHABET),
) -> TransitionTensor:
    """Estimate the transition tensor from a labeled slot stream.

    Callers must have dropped the slots of excluded days already; gaps in the
    ``t`` sequence simply contribute no transition pairs.
    """
    if not labeled:
        raise ModelError("no labeled slots to fit transitions on")

    presence = np.zeros((SLOTS_PER_DAY, n_states), dtype=np.int64)
    pairs = np.zeros((SLOTS_PER_DAY, n_states, n_states), dtype=np.int64)
    by_t = {item.slot.t: item for item in labeled}
    for item in labeled:
        k0 = item.slot.k - 1
        i = STATE_INDEX[item.state]
        presence[k0, i] += 1
        succ = by_t.get(item.slot.t + 1)
        if succ is not None:
            # The pair is pooled by the slot-of-day it arrives at.
            pairs[succ.slot.k - 1, i, STATE_INDEX[succ.state]] += 1

    # Prefix sums over a tripled axis give O(1) circular window sums, windows
    # up to +-720 included (the antipodal slot is counted twice then, exactly
    # as a literal sum over 1441 modular indices would).
    tiled_presence = np.concatenate([presence] * 3, axis=0)
    presence_ps = np.zeros((3 * SLOTS_PER_DAY + 1, n_states), dtype=np.int64)
    np.cumsum(tiled_presence, axis=0, out=presence_ps[1:])
    tiled_pairs = np.concatenate([pairs] * 3, axis=0)
    pairs_ps = np.zeros((3 * SLOTS_PER_DAY + 1, n_states, n_states), dtype=np.int64)
    np.cumsum(tiled_pairs, axis=0, out=pairs_ps[1:])

    # The support condition ranges over states the training data realizes at
    # all: a globally absent state keeps its zero rows no matter the window,
    # and letting it veto every window would force the cap everywhere and
    # erase the time-of-day structure for the learnable states.
    learnable = presence.sum(axis=0) > 0

    def window_supported(k0: int, halfwidth: int) -> bool:
        center = k0 + SLOTS_PER_DAY
        window = presence_ps[center + halfwidth + 1] - presence_ps[center - halfwidth]
        return bool((window[learnable] > 0).all())

    t_z = np.empty(SLOTS_PER_DAY, dtype=np.int64)
    for k0 in range(SLOTS_PER_DAY):
        if not window_supported(k0, t_z_max):
            t_z[k0] = t_z_max
            continue
        lo, hi = 0, t_z_max
        while lo < hi:
            mid = (lo + hi) // 2
            if window_supported(k0, mid):
                hi = mid
            else:
                lo = mid + 1
        t_z[k0] = lo

    centers = np.arange(SLOTS_PER_DAY) + SLOTS_PER_DAY
    windows = (
        pairs_ps[centers + t_z + 1] - pairs_ps[centers - t_z]
    ).astype(np.float64)  # (1440, S, S)
    row_sums = windows.sum(axis=2, keepdims=True)
    probs = np.divide(windows, row_sums, out=np.zeros_like(windows), where=row_sums > 0)
    return TransitionTensor(probs=probs, t_z=t_z)


def fit_operations(
    labeled: Sequence[LabeledSlot],
    vocabulary: Vocabulary | None = None,
    n_states: int = len(ALPHABET),
) -> OperationTable:
    """Estimate per-state operation probabilities.

    The denominator for state ``i`` counts the slots during which ``i`` was in
    force at some instant; the numerator counts the slots in which the
    operation occurred at such an instant (several repeats within one slot
    count once, keeping every entry inside [0, 1]).
    """
    vocabulary = vocabulary or Vocabulary()
    denom = np.zeros(n_states, dtype=np.int64)
    numer: dict[tuple[str, str], np.ndarray] = {}
    for item in labeled:
        states_here = {item.entry_state} | set(item.event_states)
        for state in states_here:
            denom[STATE_INDEX[state]] += 1
        seen: set[tuple[tuple[str, str], int]] = set()
        for event, state in zip(item.slot.events, item.event_states):
            key = (event.pair, STATE_INDEX[state])
            if key in seen:
                continue
            seen.add(key)
            counts = numer.setdefault(event.pair, np.zeros(n_states, dtype=np.int64))
            counts[STATE_INDEX[state]] += 1

    table = OperationTable(n_states=n_states)
    all_pairs = set(vocabulary.all_pairs()) | set(numer)
    for pair in sorted(all_pairs):
        counts = numer.get(pair)
        if counts is None or counts.sum() == 0:
            # Never observed in training: neutral element for the filter.
            table.probs[pair] = np.ones(n_states)
        else:
            table.probs[pair] = np.divide(
                counts.astype(np.float64),
                denom,
                out=np.zeros(n_states),
                where=denom > 0,
            )
    return table


def _normalize_or_uniform(values: np.ndarray) -> np.ndarray:
    total = values.sum()
    if total <= 0.0:
        return uniform_belief(values.shape[0])
    return values / total


def advance_slot(belief: StateBelief, k: int, transitions: TransitionTensor) -> StateBelief:
    """Move the belief across a slot boundary into slot-of-day ``k``."""
    projected = transitions.matrix(k).T @ belief.probs
    return StateBelief(_normalize_or_uniform(projected), t=belief.t + 1, event_index=0)


def observe_operation(
    belief: StateBelief, pair: tuple[str, str], operations: OperationTable
) -> StateBelief:
    """Update the belief with one observed operation."""
    vec = operations.vector(pair)
    if np.all(vec == 1.0):
        # Unseen operation: exact no-op, belief bitwise unchanged.
        return StateBelief(belief.probs, t=belief.t, event_index=belief.event_index + 1)
    return StateBelief(
        _normalize_or_uniform(vec * belief.probs),
        t=belief.t,
        event_index=belief.event_index + 1,
    )


@dataclass
class EventStep:
    slot_pos: int
    event_pos: int
    event: EventRecord
    pre: np.ndarray
    post: np.ndarray


@dataclass
class FilterTrace:
    """Belief trajectory over a slot stream.

    ``entry[p]`` is the belief right after entering slot ``p`` (for the first
    slot this is the initial belief itself: the stream starts there, no
    transition is applied).  ``events`` holds the pre/post beliefs around
    every within-slot update, realizing the instants "just before" and "just
    after" each observation.
    """

    slots: Sequence[TimeslotRecord]
    initial: np.ndarray
    entry: np.ndarray
    events: list[EventStep]
    _by_slot: dict[int, list[EventStep]] | None = None

    def snapshots(self) -> list[StateBelief]:
        if not len(self.slots):
            return [StateBelief(self.initial, t=0, event_index=0)]
        result: list[StateBelief] = []
        steps = self.events_by_slot()
        for pos, slot in enumerate(self.slots):
            result.append(StateBelief(self.entry[pos], t=slot.t, event_index=0))
            for step in steps.get(pos, ()):
                result.append(StateBelief(step.pre, t=slot.t, event_index=step.event_pos))
                result.append(StateBelief(step.post, t=slot.t, event_index=step.event_pos + 1))
        return result

    def events_by_slot(self) -> dict[int, list[EventStep]]:
        if self._by_slot is None:
            grouped: dict[int, list[EventStep]] = {}
            for step in self.events:
                grouped.setdefault(step.slot_pos, []).append(step)
            self._by_slot = grouped
        return self._by_slot

    def belief_before(self, ts: datetime) -> np.ndarray:
        """Belief after all updates strictly earlier than ``ts``.

        The transition into the slot containing ``ts`` counts as applied.
        """
        if not len(self.slots):
            return self.initial
        offset = int((ts - self.slots[0].start).total_seconds() // 60)
        if not 0 <= offset < len(self.slots):
            raise ValueError(f"timestamp {ts} outside the filtered stream")
        probs = self.entry[offset]
        for step in self.events_by_slot().get(offset, ()):
            if step.event.timestamp < ts:
                probs = step.post
            else:
                break
        return probs


def run_filter(
    slots: Sequence[TimeslotRecord],
    transitions: TransitionTensor,
    operations: OperationTable,
    initial: np.ndarray | None = None,
) -> FilterTrace:
    """Run the forward filter over a contiguous slot stream."""
    n_states = transitions.n_states
    init = uniform_belief(n_states) if initial is None else _normalize_or_uniform(np.asarray(initial, dtype=np.float64))
    if not slots:
        return FilterTrace(slots=slots, initial=init, entry=np.zeros((0, n_states)), events=[])

    entry = np.empty((len(slots), n_states))
    events: list[EventStep] = []
    belief = StateBelief(init, t=slots[0].t, event_index=0)
    for pos, slot in enumerate(slots):
        if pos > 0:
            belief = advance_slot(belief, slot.k, transitions)
        entry[pos] = belief.probs
        for event_pos, event in enumerate(slot.events):
            pre = belief.probs
            belief = observe_operation(belief, event.pair, operations)
            events.append(EventStep(pos, event_pos, event, pre, belief.probs))
    return FilterTrace(slots=slots, initial=init, entry=entry, events=events)


@dataclass
class TrainedModel:
    """Everything detection needs, serializable as one JSON document."""

    vocabulary: Vocabulary
    states: tuple[HomeState, ...]
    labeling_params: LabelingParams
    model_params: ModelParams
    seq_params: SeqParams
    transitions: TransitionTensor
    operations: OperationTable
    store: SequenceStore | None = None
    baseline_store: TimedSequenceStore | None = None

    def to_payload(self) -> dict:
        sparse_a: dict[str, dict[str, list[float]]] = {}
        for k0 in range(self.transitions.probs.shape[0]):
            rows: dict[str, list[float]] = {}
            for i in range(self.transitions.n_states):
                row = self.transitions.probs[k0, i]
                if row.any():
                    rows[str(i)] = [float(x) for x in row]
            if rows:
                sparse_a[str(k0 + 1)] = rows
        return {
            "format_version": FORMAT_VERSION,
            "vocabulary": self.vocabulary.to_payload(),
            "states": [s.key for s in self.states],
            "labeling_params": _labeling_params_payload(self.labeling_params),
            "model_params": {
                "t_z_max": self.model_params.t_z_max,
                "slot_seconds": self.model_params.slot_seconds,
            },
            "seq_params": self.seq_params.to_payload(),
            "t_z": [int(x) for x in self.transitions.t_z],
            "a": sparse_a,
            "b": {
                f"{device}:{action}": [float(x) for x in vec]
                for (device, action), vec in sorted(self.operations.probs.items())
            },
            "store": self.store.to_payload() if self.store is not None else None,
            "baseline_store": (
                self.baseline_store.to_payload() if self.baseline_store is not None else None
            ),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_payload(), sort_keys=True, separators=(",", ":"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_payload(cls, payload: dict) -> "TrainedModel":
        if payload.get("format_version") != FORMAT_VERSION:
            raise ModelError(
                f"unsupported model format_version {payload.get('format_version')!r}"
            )
        states = tuple(parse_state_key(key) for key in payload["states"])
        n_states = len(states)
        t_z = np.asarray(payload["t_z"], dtype=np.int64)
        probs = np.zeros((SLOTS_PER_DAY, n_states, n_states))
        for k_text, rows in payload["a"].items():
            for i_text, row in rows.items():
                probs[int(k_text) - 1, int(i_text)] = row
        operations = OperationTable(n_states=n_states)
        for pair_text, vec in payload["b"].items():
            device, _, action = pair_text.partition(":")
            operations.probs[(device, action)] = np.asarray(vec, dtype=np.float64)
        store_payload = payload.get("store")
        baseline_payload = payload.get("baseline_store")
        return cls(
            vocabulary=Vocabulary.from_payload(payload["vocabulary"]),
            states=states,
            labeling_params=_labeling_params_from_payload(payload["labeling_params"]),
            model_params=ModelParams(**payload["model_params"]),
            seq_params=SeqParams.from_payload(payload["seq_params"]),
            transitions=TransitionTensor(probs=probs, t_z=t_z),
            operations=operations,
            store=SequenceStore.from_payload(store_payload) if store_payload else None,
            baseline_store=(
                TimedSequenceStore.from_payload(baseline_payload) if baseline_payload else None
            ),
        )

    @classmethod
    def load(cls, path: str | Path) -> "TrainedModel":
        return cls.from_payload(json.loads(Path(path).read_text()))


def _labeling_params_payload(params: LabelingParams) -> dict:
    return {
        "t_x": params.t_x,
        "t_y": params.t_y,
        "t_c": params.t_c,
        "night_window": [params.night_window[0].strftime("%H:%M"),
                         params.night_window[1].strftime("%H:%M")],
        "night_split": params.night_split.strftime("%H:%M"),
        "noise_threshold": params.noise_threshold,
        "co2_threshold": params.co2_threshold,
        "sleep_gap_merge": params.sleep_gap_merge,
        "use_gap_merge": params.use_gap_merge,
        "presleep_hours": params.presleep_hours,
        "postsleep_hours": params.postsleep_hours,
        "initial_occupants": params.initial_occupants,
    }


def _parse_hhmm(text: str) -> time:
    hours, _, minutes = text.partition(":")
    return time(int(hours), int(minutes))


def _labeling_params_from_payload(payload: dict) -> LabelingParams:
    data = dict(payload)
    data["night_window"] = tuple(_parse_hhmm(x) for x in data["night_window"])
    data["night_split"] = _parse_hhmm(data["night_split"])
    return LabelingParams(**data)


def slots_by_day(labeled: Sequence[LabeledSlot]) -> dict[int, list[LabeledSlot]]:
    grouped: dict[int, list[LabeledSlot]] = {}
    for item in labeled:
        grouped.setdefault((item.slot.t - 1) // SLOTS_PER_DAY, []).append(item)
    return grouped


def train_model(
    slots: Sequence[TimeslotRecord],
    events: Sequence[EventRecord],
    vocabulary: Vocabulary | None = None,
    labeling_params: LabelingParams | None = None,
    model_params: ModelParams | None = None,
    seq_params: SeqParams | None = None,
) -> TrainedModel:
    """Label, fit, filter, and store: the full training pipeline."""
    from .labeling import label_states

    vocabulary = vocabulary or Vocabulary()
    labeling_params = labeling_params or LabelingParams()
    model_params = model_params or ModelParams()
    seq_params = seq_params or SeqParams()

    labeled = label_states(slots, events, labeling_params, vocabulary)
    kept = [item for item in labeled if not item.excluded_day]
    if not kept:
        raise ModelError("no usable training days after exclusions")
    transitions = fit_transitions(kept, model_params.t_z_max)
    operations = fit_operations(kept, vocabulary)

    traces = [
        run_filter([item.slot for item in day_slots], transitions, operations)
        for _, day_slots in sorted(slots_by_day(kept).items())
    ]
    store = store_sequences(traces, vocabulary.detection_target, seq_params, len(ALPHABET))
    baseline_store = build_timed_store(
        [event for item in labeled for event in item.slot.events],
        vocabulary.detection_target,
        seq_params,
    )
    return TrainedModel(
        vocabulary=vocabulary,
        states=ALPHABET,
        labeling_params=labeling_params,
        model_params=model_params,
        seq_params=seq_params,
        transitions=transitions,
        operations=operations,
        store=store,
        baseline_store=baseline_store,
    )
