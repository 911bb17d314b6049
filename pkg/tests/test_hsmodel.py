"""Transition/operation fitting and the forward filter, checked against
independent brute-force recursions."""

from datetime import timedelta

import numpy as np
import pytest

from homeguard.errors import ModelError, VocabularyError
from homeguard.hsmodel import (
    ModelParams,
    OperationTable,
    StateBelief,
    TrainedModel,
    TransitionTensor,
    advance_slot,
    fit_operations,
    fit_transitions,
    observe_operation,
    run_filter,
    train_model,
    uniform_belief,
)
from homeguard.labeling import ALPHABET, STATE_INDEX, LabeledSlot, LabelingParams, parse_state_key
from homeguard.seqstore import SeqParams
from homeguard.vocab import Vocabulary

from conftest import BASE, ev, make_slots

S = len(ALPHABET)


def labeled_stream(state_keys, start=BASE, t0=1, k0=1, events=None, event_states=None):
    """LabeledSlot stream with the given per-slot (final) states."""
    events = events or {}
    event_states = event_states or {}
    slots = make_slots(len(state_keys), start=start, t0=t0, k0=k0, events=events)
    out = []
    for pos, key in enumerate(state_keys):
        state = parse_state_key(key)
        ev_states = tuple(
            parse_state_key(k) for k in event_states.get(pos, [key] * len(slots[pos].events))
        )
        out.append(
            LabeledSlot(
                slot=slots[pos],
                state=state,
                entry_state=state,
                event_states=ev_states,
                excluded_day=False,
            )
        )
    return out


def day_of_states(key: str) -> list[str]:
    return [key] * 1440


class TestFitTransitions:
    def test_single_state_chain_is_identity(self):
        labeled = labeled_stream(day_of_states("active:none") * 2)
        tensor = fit_transitions(labeled, t_z_max=0)
        i = STATE_INDEX[parse_state_key("active:none")]
        for k in (1, 700, 1440):
            assert tensor.matrix(k)[i, i] == pytest.approx(1.0)

    def test_pair_count_oracle_with_zero_window(self):
        rng = np.random.default_rng(7)
        keys = [state.key for state in ALPHABET]
        state_keys = [keys[rng.integers(0, S)] for _ in range(3 * 1440)]
        labeled = labeled_stream(state_keys)
        tensor = fit_transitions(labeled, t_z_max=0)

        # Independent tally of adjacent (previous state, next state) pairs,
        # bucketed by the slot-of-day the pair arrives at.
        counts = np.zeros((1440, S, S))
        for prev, nxt in zip(labeled, labeled[1:]):
            counts[nxt.slot.k - 1, STATE_INDEX[prev.state], STATE_INDEX[nxt.state]] += 1
        sums = counts.sum(axis=2, keepdims=True)
        expected = np.divide(counts, sums, out=np.zeros_like(counts), where=sums > 0)
        assert np.allclose(tensor.probs, expected, atol=1e-12)

    def test_absent_state_yields_zero_row(self):
        labeled = labeled_stream(day_of_states("active:none"))
        tensor = fit_transitions(labeled, t_z_max=720)
        missing = STATE_INDEX[parse_state_key("sleep:none")]
        assert not tensor.probs[:, missing, :].any()

    def test_midnight_transition_captured(self):
        labeled = labeled_stream(day_of_states("active:none") + day_of_states("sleep:none"))
        tensor = fit_transitions(labeled, t_z_max=0)
        a_idx = STATE_INDEX[parse_state_key("active:none")]
        s_idx = STATE_INDEX[parse_state_key("sleep:none")]
        assert tensor.matrix(1)[a_idx, s_idx] == pytest.approx(1.0)
        assert tensor.matrix(2)[a_idx, a_idx] == pytest.approx(1.0)
        assert tensor.matrix(2)[s_idx, s_idx] == pytest.approx(1.0)

    def test_window_minimality(self):
        # One state appears only at slot-of-day 500; every other state is
        # everywhere.  The window at slot 511 must reach back exactly 11.
        keys = [state.key for state in ALPHABET]
        rare = keys[0]
        day = [keys[1 + (pos % (S - 1))] for pos in range(1440)]
        day[499] = rare  # k = 500
        labeled = labeled_stream(day * 2)
        tensor = fit_transitions(labeled, t_z_max=720)
        assert tensor.t_z[510] == 11  # k = 511
        # The rare state sits at k=500, but planting it there displaced one
        # cycling state whose nearest occurrences are 9 slots away.
        assert tensor.t_z[499] == 9

        presence = np.zeros((1440, S))
        for item in labeled:
            presence[item.slot.k - 1, STATE_INDEX[item.state]] += 1
        for k0 in range(0, 1440, 97):
            tz = int(tensor.t_z[k0])
            window = [(k0 + offset) % 1440 for offset in range(-tz, tz + 1)]
            assert (presence[window].sum(axis=0) > 0).all()
            if tz > 0:
                smaller = [(k0 + offset) % 1440 for offset in range(-(tz - 1), tz)]
                assert not (presence[smaller].sum(axis=0) > 0).all()

    def test_unsatisfiable_support_caps_at_max(self):
        # A state that occurs in training but only at one slot of the day:
        # windows far away can never reach it within the cap.
        day = day_of_states("active:none")
        day[499] = "sleep:none"
        tensor = fit_transitions(labeled_stream(day), t_z_max=30)
        assert tensor.t_z[100] == 30  # k=101 cannot see slot 500
        assert tensor.t_z[499] == 1  # slot 500 itself lacks the common state

    def test_absent_states_do_not_force_the_cap(self):
        # Only one state present at every slot: support holds with no window.
        labeled = labeled_stream(day_of_states("active:none"))
        tensor = fit_transitions(labeled, t_z_max=30)
        assert (tensor.t_z == 0).all()

    def test_rows_are_stochastic_or_zero(self):
        rng = np.random.default_rng(3)
        keys = [state.key for state in ALPHABET[:4]]
        state_keys = [keys[rng.integers(0, 4)] for _ in range(2 * 1440)]
        tensor = fit_transitions(labeled_stream(state_keys), t_z_max=5)
        sums = tensor.probs.sum(axis=2)
        nonzero = sums > 0
        assert np.allclose(sums[nonzero], 1.0, atol=1e-9)

    def test_empty_training_data_errors(self):
        with pytest.raises(ModelError):
            fit_transitions([], t_z_max=0)


class TestFitOperations:
    def test_hand_count(self, vocab):
        labeled = labeled_stream(
            ["active:none"] * 4,
            events={0: [ev(0.5, "tv", "on")]},
        )
        table = fit_operations(labeled, vocab)
        i = STATE_INDEX[parse_state_key("active:none")]
        assert table.vector(("tv", "on"))[i] == pytest.approx(0.25)

    def test_unseen_operation_is_all_ones(self, vocab):
        labeled = labeled_stream(["active:none"] * 3)
        table = fit_operations(labeled, vocab)
        assert (table.vector(("rice_cooker", "on")) == 1.0).all()
        assert table.vector(("rice_cooker", "on")).shape == (S,)

    def test_state_with_no_slots_gets_zero(self, vocab):
        labeled = labeled_stream(["active:none"] * 2, events={0: [ev(0.5, "tv", "on")]})
        table = fit_operations(labeled, vocab)
        j = STATE_INDEX[parse_state_key("sleep:none")]
        assert table.vector(("tv", "on"))[j] == 0.0

    def test_repeat_in_same_slot_counts_once(self, vocab):
        labeled = labeled_stream(
            ["active:none"] * 2,
            events={0: [ev(0.2, "tv", "on"), ev(0.7, "tv", "on")]},
        )
        table = fit_operations(labeled, vocab)
        i = STATE_INDEX[parse_state_key("active:none")]
        assert table.vector(("tv", "on"))[i] == pytest.approx(0.5)

    def test_values_within_unit_interval(self, vocab):
        rng = np.random.default_rng(11)
        events = {}
        for pos in range(50):
            if rng.random() < 0.6:
                events[pos] = [ev(pos + 0.5, "refrigerator", "opening"), ev(pos + 0.6, "tv", "on")]
        keys = [state.key for state in ALPHABET]
        labeled = labeled_stream([keys[rng.integers(0, S)] for _ in range(50)], events=events)
        table = fit_operations(labeled, vocab)
        for vec in table.probs.values():
            assert (vec >= 0.0).all() and (vec <= 1.0).all()

    def test_unregistered_lookup_raises(self, vocab):
        table = fit_operations(labeled_stream(["active:none"]), vocab)
        with pytest.raises(VocabularyError):
            table.vector(("mystery", "zap"))


def toy_tensor(matrix_by_k: dict[int, np.ndarray], n_states: int) -> TransitionTensor:
    probs = np.zeros((1440, n_states, n_states))
    for k, matrix in matrix_by_k.items():
        probs[k - 1] = matrix
    return TransitionTensor(probs=probs, t_z=np.zeros(1440, dtype=np.int64))


class TestBeliefUpdates:
    def test_uniform_fixed_point(self):
        tensor = toy_tensor({5: np.full((2, 2), 0.5)}, 2)
        belief = StateBelief(np.array([0.5, 0.5]), t=1)
        out = advance_slot(belief, 5, tensor)
        assert np.allclose(out.probs, [0.5, 0.5])
        assert out.t == 2 and out.event_index == 0

    def test_hand_advance(self):
        a = np.array([[0.9, 0.1], [0.2, 0.8]])
        tensor = toy_tensor({1: a}, 2)
        belief = StateBelief(np.array([1.0, 0.0]), t=1)
        out = advance_slot(belief, 1, tensor)
        assert np.allclose(out.probs, [0.9, 0.1])

    def test_zero_support_resets_to_uniform(self):
        tensor = toy_tensor({}, 3)  # all-zero matrices
        belief = StateBelief(np.array([1.0, 0.0, 0.0]), t=1)
        out = advance_slot(belief, 10, tensor)
        assert np.allclose(out.probs, [1 / 3] * 3)

    def test_hand_observation(self):
        table = OperationTable(n_states=2, probs={("tv", "on"): np.array([0.8, 0.2])})
        belief = StateBelief(np.array([0.5, 0.5]), t=1)
        out = observe_operation(belief, ("tv", "on"), table)
        assert np.allclose(out.probs, [0.8, 0.2])
        assert out.event_index == 1

    def test_unseen_operation_bitwise_unchanged(self):
        table = OperationTable(n_states=3, probs={("tv", "on"): np.ones(3)})
        probs = np.array([0.2, 0.5, 0.3])
        belief = StateBelief(probs, t=1)
        out = observe_operation(belief, ("tv", "on"), table)
        assert out.probs is probs  # exact no-op, not merely close

    def test_zero_product_resets_to_uniform(self):
        table = OperationTable(n_states=2, probs={("tv", "on"): np.zeros(2)})
        belief = StateBelief(np.array([0.6, 0.4]), t=1)
        out = observe_operation(belief, ("tv", "on"), table)
        assert np.allclose(out.probs, [0.5, 0.5])


def brute_force_trace(slot_ks, slot_events, a_of_k, b_of_pair, initial):
    """Plain-Python forward recursion; returns the per-instant belief list."""
    n = len(initial)

    def normalize(values):
        total = sum(values)
        if total <= 0:
            return [1.0 / n] * n
        return [v / total for v in values]

    belief = normalize(list(initial))
    snapshots = []
    for pos, k in enumerate(slot_ks):
        if pos > 0:
            a = a_of_k(k)
            belief = normalize(
                [sum(a[j][i] * belief[j] for j in range(n)) for i in range(n)]
            )
        snapshots.append(list(belief))
        for pair in slot_events[pos]:
            snapshots.append(list(belief))  # just before the event
            b = b_of_pair(pair)
            belief = normalize([b[i] * belief[i] for i in range(n)])
            snapshots.append(list(belief))  # just after
    return snapshots


def random_filter_instance(rng):
    n_states = int(rng.integers(2, 6))
    n_slots = int(rng.integers(1, 51))
    k0 = int(rng.integers(1, 1441))
    pairs = [("dev", "a"), ("dev", "b"), ("dev", "c")]

    probs = np.zeros((1440, n_states, n_states))
    for pos in range(n_slots + 1):
        k = (k0 - 1 + pos) % 1440
        matrix = rng.random((n_states, n_states))
        for i in range(n_states):
            if rng.random() < 0.15:
                matrix[i] = 0.0  # no-support row
            else:
                matrix[i] /= matrix[i].sum()
        probs[k] = matrix
    tensor = TransitionTensor(probs=probs, t_z=np.zeros(1440, dtype=np.int64))

    table = OperationTable(n_states=n_states)
    table.probs[pairs[0]] = np.ones(n_states)  # unseen operation
    table.probs[pairs[1]] = rng.random(n_states)
    table.probs[pairs[2]] = np.zeros(n_states) if rng.random() < 0.3 else rng.random(n_states)

    events = {}
    n_events = int(rng.integers(0, 11))
    for _ in range(n_events):
        pos = int(rng.integers(0, n_slots))
        pair = pairs[int(rng.integers(0, 3))]
        events.setdefault(pos, []).append(
            ev(pos + float(rng.random()) * 0.9, pair[0], pair[1])
        )
    for bucket in events.values():
        bucket.sort(key=lambda e: e.timestamp)

    initial = rng.random(n_states) + 0.01
    slots = make_slots(n_slots, events=events, k0=k0)
    return slots, tensor, table, initial


class TestRunFilter:
    def test_empty_stream(self):
        tensor = toy_tensor({}, 2)
        trace = run_filter([], tensor, OperationTable(n_states=2), np.array([0.3, 0.7]))
        snaps = trace.snapshots()
        assert len(snaps) == 1
        assert np.allclose(snaps[0].probs, [0.3, 0.7])

    def test_one_slot_one_event_three_snapshots(self, vocab):
        table = OperationTable(n_states=2, probs={("tv", "on"): np.array([0.8, 0.2])})
        tensor = toy_tensor({1: np.eye(2)}, 2)
        slots = make_slots(1, events={0: [ev(0.5, "tv", "on")]})
        trace = run_filter(slots, tensor, table, np.array([0.5, 0.5]))
        snaps = trace.snapshots()
        assert len(snaps) == 3
        assert np.allclose(snaps[0].probs, [0.5, 0.5])  # slot entry
        assert np.allclose(snaps[1].probs, [0.5, 0.5])  # pre-event
        assert np.allclose(snaps[2].probs, [0.8, 0.2])  # post-event

    def test_first_slot_keeps_initial_belief(self):
        tensor = toy_tensor({7: np.array([[0.0, 1.0], [1.0, 0.0]])}, 2)
        slots = make_slots(1, k0=7)
        trace = run_filter(slots, tensor, OperationTable(n_states=2), np.array([0.9, 0.1]))
        assert np.allclose(trace.entry[0], [0.9, 0.1])

    def test_oracle_equivalence_randomized(self):
        rng = np.random.default_rng(42)
        for _ in range(30):
            slots, tensor, table, initial = random_filter_instance(rng)
            trace = run_filter(slots, tensor, table, initial)
            expected = brute_force_trace(
                [slot.k for slot in slots],
                [[event.pair for event in slot.events] for slot in slots],
                lambda k: tensor.probs[k - 1].tolist(),
                lambda pair: table.probs[pair].tolist(),
                initial.tolist(),
            )
            got = trace.snapshots()
            assert len(got) == len(expected)
            for snap, ref in zip(got, expected):
                assert np.max(np.abs(snap.probs - np.array(ref))) <= 1e-9

    def test_belief_before_ordering(self):
        table = OperationTable(n_states=2, probs={("tv", "on"): np.array([0.8, 0.2])})
        tensor = toy_tensor({k: np.eye(2) for k in range(1, 10)}, 2)
        slots = make_slots(3, events={1: [ev(1.5, "tv", "on")]})
        trace = run_filter(slots, tensor, table, np.array([0.5, 0.5]))
        before_event = trace.belief_before(BASE + timedelta(minutes=1, seconds=20))
        after_event = trace.belief_before(BASE + timedelta(minutes=1, seconds=40))
        assert np.allclose(before_event, [0.5, 0.5])
        assert np.allclose(after_event, [0.8, 0.2])
        # An instant equal to the event time sees only strictly earlier updates.
        at_event = trace.belief_before(BASE + timedelta(minutes=1, seconds=30))
        assert np.allclose(at_event, [0.5, 0.5])


class TestTrainedModelRoundTrip:
    def build_model(self):
        events = {
            100: [ev(100.2, "refrigerator", "opening"), ev(100.5, "cooking_stove", "on")],
            700: [ev(700.5, "tv", "on")],
        }
        slots = make_slots(1440 * 2, events={**events, 1540: [ev(1540.5, "cooking_stove", "on")]})
        flat_events = [event for slot in slots for event in slot.events]
        return train_model(
            slots,
            flat_events,
            Vocabulary(),
            LabelingParams(t_x=2, t_y=2, t_c=1),
            ModelParams(t_z_max=60),
            SeqParams(l_rank=2),
        )

    def test_json_round_trip(self):
        model = self.build_model()
        text = model.to_json()
        clone = TrainedModel.from_payload(__import__("json").loads(text))
        assert clone.to_json() == text
        assert np.allclose(clone.transitions.probs, model.transitions.probs)
        assert (clone.transitions.t_z == model.transitions.t_z).all()
        for pair, vec in model.operations.probs.items():
            assert np.allclose(clone.operations.probs[pair], vec)
        assert clone.store.to_payload() == model.store.to_payload()
        assert clone.baseline_store.to_payload() == model.baseline_store.to_payload()

    def test_retrain_is_byte_identical(self):
        first = self.build_model().to_json()
        second = self.build_model().to_json()
        assert first == second

    def test_uniform_belief_sums_to_one(self):
        assert abs(uniform_belief(10).sum() - 1.0) <= 1e-9
