"""Shared fixtures: tiny slot streams and a golden labeled-log fixture."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, time, timedelta

import pytest

from homeguard.ingest import EventRecord, SensorFrame, TimeslotRecord, build_timeslots
from homeguard.labeling import LabelingParams
from homeguard.vocab import Vocabulary

BASE = datetime(2021, 3, 1, 0, 0, 0)

CALM = dict(temperature=21.0, humidity=50.0, atmosphere=1010.0, co2=600.0, noise=45.0)
SLEEPY = dict(temperature=21.0, humidity=50.0, atmosphere=1010.0, co2=1800.0, noise=32.0)


def frame(ts: datetime, **overrides) -> SensorFrame:
    values = dict(CALM)
    values.update(overrides)
    return SensorFrame(timestamp=ts, **values)


def make_slots(
    n: int,
    start: datetime = BASE,
    events: dict[int, list[EventRecord]] | None = None,
    sensors: dict[int, SensorFrame] | None = None,
    t0: int = 1,
    k0: int = 1,
) -> list[TimeslotRecord]:
    """Hand-built contiguous slot stream for unit tests."""
    events = events or {}
    sensors = sensors or {}
    slots = []
    for pos in range(n):
        slot_start = start + timedelta(minutes=pos)
        slots.append(
            TimeslotRecord(
                t=t0 + pos,
                k=(k0 + pos - 1) % 1440 + 1,
                start=slot_start,
                sensors=sensors.get(pos, frame(slot_start)),
                events=tuple(events.get(pos, ())),
            )
        )
    return slots


def ev(minute_offset: float, device: str, action: str, start: datetime = BASE) -> EventRecord:
    return EventRecord(start + timedelta(minutes=minute_offset), device, action)


@pytest.fixture
def vocab() -> Vocabulary:
    return Vocabulary()


@dataclass
class GoldenSample:
    """A seven-row labeled-log fragment, rebuilt as raw logs.

    The sample's slot-of-day numbering puts slot 1 at 23:59, its user rule is
    sleep when CO2 > 35 and noise < 1500, and the device windows are one slot
    on each side with no cooking-duration extension.
    """

    events: list[EventRecord]
    frames: list[SensorFrame]
    vocabulary: Vocabulary
    params: LabelingParams
    day_origin: time
    # (t, k, entry u, entry d) for boundary rows, event rows carried separately
    expected_rows: list

    def slots(self):
        return build_timeslots(self.events, self.frames, day_origin=self.day_origin)


@pytest.fixture
def golden_sample() -> GoldenSample:
    vocabulary = Vocabulary()
    vocabulary.sensor_ranges = dict(vocabulary.sensor_ranges)
    vocabulary.sensor_ranges["noise"] = (0.0, 10000.0)

    quiet = dict(temperature=20.0, humidity=50.0, atmosphere=1000.0)
    frames = [
        SensorFrame(datetime(2019, 12, 31, 23, 59, 0), co2=34.0, noise=1520.0, **quiet),
        SensorFrame(datetime(2020, 1, 4, 0, 0, 0), co2=41.0, noise=1480.0, **quiet),
    ]
    events = [
        EventRecord(datetime(2020, 1, 3, 23, 58, 20), "refrigerator", "opening"),
        EventRecord(datetime(2020, 1, 3, 23, 58, 35), "cooking_stove", "on"),
    ]
    params = LabelingParams(
        t_x=1,
        t_y=1,
        t_c=0,
        noise_threshold=1500.0,
        co2_threshold=35.0,
    )
    # Golden rows: t, k, and the (u, d) label in force at the row's instant.
    expected_rows = [
        (4318, 1438, "active", "none"),    # 23:56 slot
        (4319, 1439, "active", "before"),  # 23:57 slot
        (4320, 1440, "active", "before"),  # 23:58 slot at its start
        (4320, 1440, "active", "before"),  # refrigerator opening, 23:58:20
        (4320, 1440, "active", "use"),     # stove on, 23:58:35
        (4321, 1, "active", "after"),      # 23:59 slot
        (4322, 2, "sleep", "none"),        # 00:00 slot next day
    ]
    return GoldenSample(
        events=events,
        frames=frames,
        vocabulary=vocabulary,
        params=params,
        day_origin=time(23, 59),
        expected_rows=expected_rows,
    )
