"""Home-state labeling of timeslot streams.

Each slot receives a joint state pairing user activity (active / out / sleep)
with cooking-device usage (use / before / after / none).  The user-activity
channel is driven by presence bookkeeping and night-time sensor criteria with
three repair rules for logging omissions; the device-usage channel is driven
by cooking-appliance operations with configurable lead/lag/duration windows.

Labels are slot-granular except at operation instants: the slot that starts a
cooking run is split at the first cooking operation, so events carry the state
in force at their own instant (an operation flips the state at its timestamp).
"""

from __future__ import annotations

import csv
import logging
from bisect import bisect_right
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import BookkeepingError, ValidationError
from .ingest import EventRecord, TimeslotRecord, format_timestamp
from .vocab import Vocabulary

logger = logging.getLogger(__name__)


class UserActivity(str, Enum):
    ACTIVE = "active"
    OUT = "out"
    SLEEP = "sleep"


class DeviceUsage(str, Enum):
    USE = "use"
    BEFORE = "before"
    AFTER = "after"
    NONE = "none"


# Users cannot cook while out of the home or asleep.
FORBIDDEN_PAIRS = frozenset(
    {(UserActivity.OUT, DeviceUsage.USE), (UserActivity.SLEEP, DeviceUsage.USE)}
)


@dataclass(frozen=True)
class HomeState:
    u: UserActivity
    d: DeviceUsage

    def __post_init__(self) -> None:
        if (self.u, self.d) in FORBIDDEN_PAIRS:
            raise ValueError(f"state ({self.u.value}, {self.d.value}) is unconstructible")

    @property
    def key(self) -> str:
        return f"{self.u.value}:{self.d.value}"

    def __str__(self) -> str:  # pragma: no cover - debugging nicety
        return self.key


def parse_state_key(key: str) -> HomeState:
    u_text, _, d_text = key.partition(":")
    return HomeState(UserActivity(u_text), DeviceUsage(d_text))


# Canonical 10-state alphabet for the cooking scenario.
ALPHABET: tuple[HomeState, ...] = tuple(
    HomeState(u, d)
    for u in UserActivity
    for d in DeviceUsage
    if (u, d) not in FORBIDDEN_PAIRS
)
STATE_INDEX: dict[HomeState, int] = {state: i for i, state in enumerate(ALPHABET)}


@dataclass
class LabelingParams:
    """Tunable labeling rules.

    ``t_x``/``t_y`` are the lead/lag window lengths in slots around a cooking
    run, ``t_c`` extends each cooking operation forward by that many slots.
    The night window may wrap midnight; ``night_split`` separates the
    late-night correction (activity forced for ``presleep_hours`` before an
    operation) from the morning one (forced for ``postsleep_hours`` after).
    """

    t_x: int = 15
    t_y: int = 15
    t_c: int = 20
    night_window: tuple[time, time] = (time(22, 0), time(9, 59))
    night_split: time = time(5, 0)
    noise_threshold: float = 35.0
    co2_threshold: float = 1500.0
    sleep_gap_merge: int = 90
    use_gap_merge: int = 15
    presleep_hours: int = 5
    postsleep_hours: int = 4
    initial_occupants: int = 1

    def __post_init__(self) -> None:
        for name in ("t_x", "t_y", "t_c", "sleep_gap_merge", "use_gap_merge",
                     "presleep_hours", "postsleep_hours", "initial_occupants"):
            if getattr(self, name) < 0:
                raise ValidationError("must be non-negative", field=name)

    def in_night(self, tod: time) -> bool:
        start, end = self.night_window
        if start <= end:
            return start <= tod <= end
        return tod >= start or tod <= end


@dataclass
class LabeledSlot:
    """A timeslot with its state assignments.

    ``state`` is the state in force at the end of the slot (used for the
    transition chain), ``entry_state`` the one at the slot start, and
    ``event_states`` carries, per event, the state in force at that event's
    instant (the event's own effect included).
    """

    slot: TimeslotRecord
    state: HomeState
    entry_state: HomeState
    event_states: tuple[HomeState, ...]
    excluded_day: bool


@dataclass
class UserActivityLabels:
    activities: list[UserActivity]
    excluded_dates: set[date]
    change_times: list[datetime] = field(repr=False)
    change_counts: list[int] = field(repr=False)

    def count_at(self, ts: datetime) -> int:
        """Occupant count in force at ``ts`` (changes at ``ts`` included)."""
        idx = bisect_right(self.change_times, ts) - 1
        return self.change_counts[idx] if idx >= 0 else self.change_counts[0]


@dataclass
class DeviceUsageLabels:
    usages: list[DeviceUsage]
    run_start_ops: dict[int, datetime]  # slot position -> first cooking op of the run


def _calendar_day_bounds(slots: Sequence[TimeslotRecord]) -> tuple[list[int], list[int]]:
    """First and last position sharing each slot's calendar date.

    Labeling windows never cross these bounds, so labels stay decomposable by
    day and cannot leak across cross-validation folds.
    """
    n = len(slots)
    day_lo = [0] * n
    day_hi = [0] * n
    block_start = 0
    for pos in range(1, n + 1):
        if pos == n or slots[pos].start.date() != slots[block_start].start.date():
            for w in range(block_start, pos):
                day_lo[w] = block_start
                day_hi[w] = pos - 1
            block_start = pos
    return day_lo, day_hi


def label_user_activity(
    slots: Sequence[TimeslotRecord],
    events: Sequence[EventRecord],
    params: LabelingParams,
    vocabulary: Vocabulary | None = None,
) -> UserActivityLabels:
    """Assign one user activity per slot.

    out: nobody home per entry/exit bookkeeping.  sleep: night slot whose
    sensor frame shows noise below and CO2 above their thresholds, with
    short interruptions merged.  active: everything else.  Three repairs for
    logging omissions: an operation while the home is counted empty sets the
    count to one from that slot on and excludes the day from model fitting;
    an operation late at night clears sleep for the preceding hours; an
    operation in the morning clears sleep for the following hours.
    """
    vocabulary = vocabulary or Vocabulary()
    if not slots:
        return UserActivityLabels([], set(), [], [])
    start = slots[0].start
    for event in events:
        if event.timestamp < start:
            raise BookkeepingError(
                f"event at {event.timestamp} precedes dataset start {start}"
            )

    n = len(slots)
    excluded_dates: set[date] = set()

    # Occupant-count timeline: presence events move the count, a device
    # operation in an empty home repairs it to one from that instant on.
    change_times: list[datetime] = [start]
    change_counts: list[int] = [params.initial_occupants]
    count = params.initial_occupants
    device_ops: list[EventRecord] = []
    for event in sorted(events, key=lambda e: e.timestamp):
        if vocabulary.is_presence(event.device):
            if event.action == "entry":
                count += 1
            elif event.action == "exit":
                if count == 0:
                    logger.warning("exit event at %s with zero occupants", event.timestamp)
                else:
                    count -= 1
            change_times.append(event.timestamp)
            change_counts.append(count)
        elif vocabulary.is_device_operation(event.device, event.action):
            device_ops.append(event)
            if count == 0:
                count = 1
                change_times.append(event.timestamp)
                change_counts.append(count)
                excluded_dates.add(event.timestamp.date())

    labels = UserActivityLabels([], excluded_dates, change_times, change_counts)

    slot_end_offset = timedelta(seconds=59)
    out = [labels.count_at(slot.start + slot_end_offset) == 0 for slot in slots]

    sleep = [
        not out[pos]
        and params.in_night(slot.start.time())
        and slot.sensors.noise < params.noise_threshold
        and slot.sensors.co2 > params.co2_threshold
        for pos, slot in enumerate(slots)
    ]

    # Merge: two sleep slots within the gap window bridge the slots between
    # them, provided those are night slots with someone home.
    sleep_positions = [pos for pos, flag in enumerate(sleep) if flag]
    for a, b in zip(sleep_positions, sleep_positions[1:]):
        if b - a <= params.sleep_gap_merge:
            for pos in range(a + 1, b):
                if not out[pos] and params.in_night(slots[pos].start.time()):
                    sleep[pos] = True

    # Operation corrections, slot-granular and clipped to the operation's
    # calendar day.
    day_lo, day_hi = _calendar_day_bounds(slots)
    _, night_end = params.night_window
    for op in device_ops:
        tod = op.timestamp.time()
        if not params.in_night(tod):
            continue
        pos = int((op.timestamp - start).total_seconds() // 60)
        if params.night_split <= tod <= night_end:
            hi = min(day_hi[pos], pos + params.postsleep_hours * 60)
            window = range(pos, hi + 1)
        else:
            lo = max(day_lo[pos], pos - params.presleep_hours * 60)
            window = range(lo, pos + 1)
        for w in window:
            sleep[w] = False

    for pos in range(n):
        if out[pos]:
            labels.activities.append(UserActivity.OUT)
        elif sleep[pos]:
            labels.activities.append(UserActivity.SLEEP)
        else:
            labels.activities.append(UserActivity.ACTIVE)
    return labels


def label_device_usage(
    slots: Sequence[TimeslotRecord],
    events: Sequence[EventRecord],
    params: LabelingParams,
    vocabulary: Vocabulary | None = None,
) -> DeviceUsageLabels:
    """Assign one device-usage label per slot.

    A cooking-appliance operation marks its slot and the following ``t_c``
    slots as use; use runs within ``use_gap_merge`` minutes of each other are
    merged; each maximal run then gets ``t_x`` slots of before and ``t_y``
    slots of after, with precedence use > before > after and all windows
    clipped at day boundaries.
    """
    vocabulary = vocabulary or Vocabulary()
    n = len(slots)
    usages = [DeviceUsage.NONE] * n
    use = [False] * n
    day_lo, day_hi = _calendar_day_bounds(slots)

    # First cooking operation per slot, if any.
    first_op: dict[int, datetime] = {}
    for pos, slot in enumerate(slots):
        for event in slot.events:
            if vocabulary.is_cooking(event.device):
                first_op[pos] = event.timestamp
                break

    for pos in first_op:
        for w in range(pos, min(pos + params.t_c, day_hi[pos]) + 1):
            use[w] = True

    marked = [pos for pos, flag in enumerate(use) if flag]
    for a, b in zip(marked, marked[1:]):
        if b - a <= params.use_gap_merge and day_lo[a] == day_lo[b]:
            for pos in range(a + 1, b):
                use[pos] = True

    # Maximal runs.
    runs: list[tuple[int, int]] = []
    pos = 0
    while pos < n:
        if use[pos]:
            end = pos
            while end + 1 < n and use[end + 1]:
                end += 1
            runs.append((pos, end))
            pos = end + 1
        else:
            pos += 1

    for pos in range(n):
        if use[pos]:
            usages[pos] = DeviceUsage.USE
    for run_start, _ in runs:
        for w in range(max(day_lo[run_start], run_start - params.t_x), run_start):
            if usages[w] == DeviceUsage.NONE:
                usages[w] = DeviceUsage.BEFORE
    for _, run_end in runs:
        for w in range(run_end + 1, min(run_end + params.t_y, day_hi[run_end]) + 1):
            if usages[w] == DeviceUsage.NONE:
                usages[w] = DeviceUsage.AFTER

    run_start_ops = {rs: first_op[rs] for rs, _ in runs if rs in first_op}
    return DeviceUsageLabels(usages, run_start_ops)


def _combine(u: UserActivity, d: DeviceUsage) -> HomeState:
    # Forbidden-pair repair: usage evidence wins, the user must be active.
    if d == DeviceUsage.USE and u in (UserActivity.OUT, UserActivity.SLEEP):
        u = UserActivity.ACTIVE
    return HomeState(u, d)


def label_states(
    slots: Sequence[TimeslotRecord],
    events: Sequence[EventRecord],
    params: LabelingParams,
    vocabulary: Vocabulary | None = None,
) -> list[LabeledSlot]:
    """Joint per-slot labeling with intra-slot refinement at run starts."""
    vocabulary = vocabulary or Vocabulary()
    ua = label_user_activity(slots, events, params, vocabulary)
    du = label_device_usage(slots, events, params, vocabulary)
    pre_run_label = DeviceUsage.BEFORE if params.t_x >= 1 else DeviceUsage.NONE

    labeled: list[LabeledSlot] = []
    for pos, slot in enumerate(slots):
        u_final = ua.activities[pos]
        d_final = du.usages[pos]
        run_op = du.run_start_ops.get(pos)

        def instant_u(ts: datetime) -> UserActivity:
            if ua.count_at(ts) == 0:
                return UserActivity.OUT
            return u_final if u_final != UserActivity.OUT else UserActivity.ACTIVE

        d_entry = pre_run_label if run_op is not None and run_op > slot.start else d_final
        entry_state = _combine(instant_u(slot.start), d_entry)

        event_states = []
        for event in slot.events:
            if run_op is not None and event.timestamp < run_op:
                d_ev = pre_run_label
            else:
                d_ev = d_final
            event_states.append(_combine(instant_u(event.timestamp), d_ev))

        final_state = _combine(u_final, d_final)
        labeled.append(
            LabeledSlot(
                slot=slot,
                state=final_state,
                entry_state=entry_state,
                event_states=tuple(event_states),
                excluded_day=slot.start.date() in ua.excluded_dates,
            )
        )
    return labeled


def export_labels(labeled: Iterable[LabeledSlot], path: str | Path) -> None:
    """Write the slot-level label stream as ``t,k,date,u,d,excluded``."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "k", "date", "u", "d", "excluded"])
        for item in labeled:
            writer.writerow(
                [
                    item.slot.t,
                    item.slot.k,
                    format_timestamp(item.slot.start),
                    item.state.u.value,
                    item.state.d.value,
                    int(item.excluded_day),
                ]
            )


def export_event_labels(labeled: Iterable[LabeledSlot], path: str | Path) -> None:
    """Write the per-event label view as ``t,k,timestamp,device,action,u,d``."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "k", "timestamp", "device", "action", "u", "d"])
        for item in labeled:
            for event, state in zip(item.slot.events, item.event_states):
                writer.writerow(
                    [
                        item.slot.t,
                        item.slot.k,
                        format_timestamp(event.timestamp),
                        event.device,
                        event.action,
                        state.u.value,
                        state.d.value,
                    ]
                )
