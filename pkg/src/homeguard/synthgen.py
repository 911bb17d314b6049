"""Seeded synthetic home datasets for end-to-end testing.

A scenario describes household rhythms (sleep/out intervals, cooking sessions
with jitter), per-activity device habits, and a simple sensor model (baseline
plus activity-dependent offsets plus Gaussian noise, clipped to the physical
ranges).  Generation is deterministic: every day draws from its own
``(seed, day)`` random stream, and outputs are byte-identical across runs.

Anomalies are never simulated here; the evaluation harness injects them.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .ingest import (
    SLOTS_PER_DAY,
    EventRecord,
    SensorFrame,
    format_timestamp,
    write_operation_log,
    write_sensor_log,
)
from .vocab import DEFAULT_SENSOR_RANGES, SENSOR_FIELDS


@dataclass(frozen=True)
class Interval:
    """Minutes of day [start, end); end before start wraps past midnight."""

    start_minute: int
    end_minute: int

    def __post_init__(self) -> None:
        for value in (self.start_minute, self.end_minute):
            if not 0 <= value < SLOTS_PER_DAY:
                raise ValidationError(f"minute {value} outside [0, 1440)")

    def contains(self, minute: int) -> bool:
        if self.start_minute <= self.end_minute:
            return self.start_minute <= minute < self.end_minute
        return minute >= self.start_minute or minute < self.end_minute


@dataclass(frozen=True)
class CookSession:
    """One cooking session: appliance on at start, off (if it has one) at end.

    ``lead_ops`` emit non-cooking events shortly before the session starts,
    giving the dataset learnable multi-event behavior sequences.
    """

    start_minute: int
    duration: int
    appliance: str = "cooking_stove"
    lead_ops: tuple[tuple[str, str, int], ...] = ()  # (device, action, seconds before)


@dataclass(frozen=True)
class DeviceHabit:
    device: str
    action: str
    activity: str = "active"
    rate_per_hour: float = 0.0


@dataclass(frozen=True)
class SensorChannel:
    base: float
    sleep_offset: float = 0.0
    out_offset: float = 0.0
    cook_offset: float = 0.0
    noise_std: float = 0.0


@dataclass
class DayTemplate:
    sleep: tuple[Interval, ...] = ()
    out: tuple[Interval, ...] = ()
    cook: tuple[CookSession, ...] = ()


def _default_sensors() -> dict[str, SensorChannel]:
    return {
        "temperature": SensorChannel(base=21.0, noise_std=0.2),
        "humidity": SensorChannel(base=50.0, noise_std=1.0),
        "atmosphere": SensorChannel(base=1010.0, noise_std=0.5),
        "co2": SensorChannel(base=650.0, sleep_offset=1100.0, out_offset=-150.0, noise_std=60.0),
        "noise": SensorChannel(base=45.0, sleep_offset=-13.0, cook_offset=8.0, noise_std=1.0),
    }


@dataclass
class Scenario:
    name: str = "scenario"
    n_users: int = 2
    n_days: int = 28
    seed: int = 0
    start_date: date = date(2021, 3, 1)  # a Monday
    weekday: DayTemplate = field(default_factory=DayTemplate)
    weekend: DayTemplate | None = None
    jitter_std_minutes: float = 0.0
    habits: tuple[DeviceHabit, ...] = ()
    sensors: dict[str, SensorChannel] = field(default_factory=_default_sensors)
    sensor_interval_minutes: int = 5

    def __post_init__(self) -> None:
        if self.n_days < 1:
            raise ValidationError("must be at least 1", field="n_days")
        if self.n_users < 1:
            raise ValidationError("must be at least 1", field="n_users")
        for template in (self.weekday, self.weekend or self.weekday):
            for interval in template.out:
                if interval.start_minute > interval.end_minute:
                    raise ValidationError(
                        "out intervals must not wrap midnight", field="out"
                    )
        for habit in self.habits:
            if habit.rate_per_hour < 0:
                raise ValidationError("must be non-negative", field="rate_per_hour")
        for name in SENSOR_FIELDS:
            if name not in self.sensors:
                raise ValidationError(f"missing sensor channel {name!r}")

    def template_for(self, day: int) -> DayTemplate:
        weekday_index = (self.start_date + timedelta(days=day)).weekday()
        if weekday_index >= 5 and self.weekend is not None:
            return self.weekend
        return self.weekday


@dataclass(frozen=True)
class TruthRow:
    t: int
    k: int
    start: datetime
    u: str
    d: str


@dataclass
class SynthResult:
    events: list[EventRecord]
    frames: list[SensorFrame]
    truth: list[TruthRow]

    def write(self, output_dir: str | Path) -> dict[str, Path]:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "operations": output_dir / "operations.csv",
            "sensors": output_dir / "sensors.csv",
            "truth": output_dir / "truth.csv",
        }
        write_operation_log(self.events, paths["operations"])
        write_sensor_log(self.frames, paths["sensors"])
        with paths["truth"].open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["t", "k", "timestamp", "u", "d"])
            for row in self.truth:
                writer.writerow([row.t, row.k, format_timestamp(row.start), row.u, row.d])
        return paths


def _jitter(rng: np.random.Generator, std: float) -> int:
    if std <= 0:
        return 0
    raw = rng.normal(0.0, std)
    return int(round(float(np.clip(raw, -3 * std, 3 * std))))


def generate(scenario: Scenario) -> SynthResult:
    """Generate one dataset: operation log, sensor log, per-slot ground truth."""
    events: list[EventRecord] = []
    frames: list[SensorFrame] = []
    truth: list[TruthRow] = []
    day0 = datetime.combine(scenario.start_date, datetime.min.time())

    for day in range(scenario.n_days):
        rng = np.random.default_rng([scenario.seed, day])
        day_start = day0 + timedelta(days=day)
        template = scenario.template_for(day)
        std = scenario.jitter_std_minutes

        sleep_ivals = [
            Interval(
                (iv.start_minute + _jitter(rng, std)) % SLOTS_PER_DAY,
                (iv.end_minute + _jitter(rng, std)) % SLOTS_PER_DAY,
            )
            for iv in template.sleep
        ]
        out_ivals = [
            Interval(
                max(0, min(SLOTS_PER_DAY - 1, iv.start_minute + _jitter(rng, std))),
                max(0, min(SLOTS_PER_DAY - 1, iv.end_minute + _jitter(rng, std))),
            )
            for iv in template.out
        ]
        sessions = [
            (
                max(0, min(SLOTS_PER_DAY - 2, cs.start_minute + _jitter(rng, std))),
                max(1, cs.duration),
                cs,
            )
            for cs in template.cook
        ]

        activity = ["active"] * SLOTS_PER_DAY
        for minute in range(SLOTS_PER_DAY):
            if any(iv.contains(minute) for iv in sleep_ivals):
                activity[minute] = "sleep"
        for minute in range(SLOTS_PER_DAY):
            if any(iv.contains(minute) for iv in out_ivals):
                activity[minute] = "out"
        cooking = [False] * SLOTS_PER_DAY
        for start, duration, _ in sessions:
            for minute in range(start, min(start + duration, SLOTS_PER_DAY)):
                cooking[minute] = True
                activity[minute] = "active"

        day_events: list[EventRecord] = []
        for iv in out_ivals:
            if iv.start_minute >= iv.end_minute:
                continue
            for user in range(scenario.n_users):
                day_events.append(
                    EventRecord(
                        day_start + timedelta(minutes=iv.start_minute, seconds=user),
                        "user_position",
                        "exit",
                        actor=f"user{user}",
                    )
                )
                day_events.append(
                    EventRecord(
                        day_start + timedelta(minutes=iv.end_minute, seconds=user),
                        "user_position",
                        "entry",
                        actor=f"user{user}",
                    )
                )
        for start, duration, session in sessions:
            start_second = start * 60 + int(rng.integers(0, 30))
            for device, action, lead in session.lead_ops:
                lead_second = max(0, start_second - lead)
                day_events.append(
                    EventRecord(
                        day_start + timedelta(seconds=lead_second), device, action
                    )
                )
            day_events.append(
                EventRecord(
                    day_start + timedelta(seconds=start_second), session.appliance, "on"
                )
            )
            if session.appliance == "cooking_stove":
                # Lands strictly after the "on" and inside the session.
                end_second = (start + duration) * 60 - 1 - int(rng.integers(0, 30))
                day_events.append(
                    EventRecord(
                        day_start + timedelta(seconds=end_second),
                        session.appliance,
                        "off",
                    )
                )
        for habit in scenario.habits:
            draws = rng.random(SLOTS_PER_DAY)
            offsets = rng.integers(0, 60, size=SLOTS_PER_DAY)
            probability = habit.rate_per_hour / 60.0
            for minute in range(SLOTS_PER_DAY):
                if activity[minute] == habit.activity and not cooking[minute] and draws[minute] < probability:
                    day_events.append(
                        EventRecord(
                            day_start + timedelta(minutes=minute, seconds=int(offsets[minute])),
                            habit.device,
                            habit.action,
                        )
                    )
        day_events.sort(key=lambda e: e.timestamp)
        events.extend(day_events)

        for minute in range(0, SLOTS_PER_DAY, scenario.sensor_interval_minutes):
            values: dict[str, float] = {}
            for name in SENSOR_FIELDS:
                channel = scenario.sensors[name]
                value = channel.base
                if activity[minute] == "sleep":
                    value += channel.sleep_offset
                elif activity[minute] == "out":
                    value += channel.out_offset
                if cooking[minute]:
                    value += channel.cook_offset
                if channel.noise_std > 0:
                    value += float(rng.normal(0.0, channel.noise_std))
                low, high = DEFAULT_SENSOR_RANGES[name]
                values[name] = round(float(np.clip(value, low, high)), 2)
            frames.append(
                SensorFrame(day_start + timedelta(minutes=minute), **values)
            )

        for minute in range(SLOTS_PER_DAY):
            truth.append(
                TruthRow(
                    t=day * SLOTS_PER_DAY + minute + 1,
                    k=minute + 1,
                    start=day_start + timedelta(minutes=minute),
                    u=activity[minute],
                    d="use" if cooking[minute] else "none",
                )
            )

    return SynthResult(events=events, frames=frames, truth=truth)


def scenario_s1(seed: int = 0, n_days: int = 28) -> Scenario:
    """Two users, regular weekday rhythm: cook around 07:30 and 19:00 with
    ten-minute jitter, sleep 23:30 to 07:00, out 09:00 to 18:00 on weekdays."""
    fridge_lead = (("refrigerator", "opening", 120),)
    weekday = DayTemplate(
        sleep=(Interval(23 * 60 + 30, 7 * 60),),
        out=(Interval(9 * 60, 18 * 60),),
        cook=(
            CookSession(7 * 60 + 30, 20, lead_ops=fridge_lead),
            CookSession(19 * 60, 25, lead_ops=fridge_lead),
        ),
    )
    weekend = DayTemplate(
        sleep=(Interval(23 * 60 + 30, 7 * 60),),
        out=(),
        cook=(
            CookSession(7 * 60 + 30, 20, lead_ops=fridge_lead),
            CookSession(19 * 60, 25, lead_ops=fridge_lead),
        ),
    )
    return Scenario(
        name="s1",
        n_users=2,
        n_days=n_days,
        seed=seed,
        weekday=weekday,
        weekend=weekend,
        jitter_std_minutes=10.0,
        habits=(
            DeviceHabit("room_light", "on", "active", 0.5),
            DeviceHabit("room_light", "off", "active", 0.5),
            DeviceHabit("tv", "on", "active", 0.3),
            DeviceHabit("tv", "off", "active", 0.3),
            DeviceHabit("refrigerator", "opening", "active", 0.8),
        ),
    )


def scenario_calibration(seed: int = 0, n_days: int = 4) -> Scenario:
    """Noise-free scenario with five-minute-aligned transitions; labeling can
    recover the activity channel exactly."""
    scenario = scenario_s1(seed=seed, n_days=n_days)
    scenario.name = "calibration"
    scenario.jitter_std_minutes = 0.0
    scenario.sensors = {
        name: SensorChannel(
            base=channel.base,
            sleep_offset=channel.sleep_offset,
            out_offset=channel.out_offset,
            cook_offset=channel.cook_offset,
            noise_std=0.0,
        )
        for name, channel in scenario.sensors.items()
    }
    return scenario


# --- scenario JSON round trip ----------------------------------------------


def scenario_to_payload(scenario: Scenario) -> dict:
    def interval(iv: Interval) -> list[int]:
        return [iv.start_minute, iv.end_minute]

    def template(tpl: DayTemplate) -> dict:
        return {
            "sleep": [interval(iv) for iv in tpl.sleep],
            "out": [interval(iv) for iv in tpl.out],
            "cook": [
                {
                    "start_minute": cs.start_minute,
                    "duration": cs.duration,
                    "appliance": cs.appliance,
                    "lead_ops": [list(op) for op in cs.lead_ops],
                }
                for cs in tpl.cook
            ],
        }

    return {
        "name": scenario.name,
        "n_users": scenario.n_users,
        "n_days": scenario.n_days,
        "seed": scenario.seed,
        "start_date": scenario.start_date.isoformat(),
        "weekday": template(scenario.weekday),
        "weekend": template(scenario.weekend) if scenario.weekend else None,
        "jitter_std_minutes": scenario.jitter_std_minutes,
        "habits": [
            [h.device, h.action, h.activity, h.rate_per_hour] for h in scenario.habits
        ],
        "sensors": {
            name: {
                "base": ch.base,
                "sleep_offset": ch.sleep_offset,
                "out_offset": ch.out_offset,
                "cook_offset": ch.cook_offset,
                "noise_std": ch.noise_std,
            }
            for name, ch in sorted(scenario.sensors.items())
        },
        "sensor_interval_minutes": scenario.sensor_interval_minutes,
    }


def scenario_from_payload(payload: dict) -> Scenario:
    def template(data: dict) -> DayTemplate:
        return DayTemplate(
            sleep=tuple(Interval(*iv) for iv in data.get("sleep", [])),
            out=tuple(Interval(*iv) for iv in data.get("out", [])),
            cook=tuple(
                CookSession(
                    start_minute=cs["start_minute"],
                    duration=cs["duration"],
                    appliance=cs.get("appliance", "cooking_stove"),
                    lead_ops=tuple(tuple(op) for op in cs.get("lead_ops", [])),
                )
                for cs in data.get("cook", [])
            ),
        )

    weekend = payload.get("weekend")
    return Scenario(
        name=payload.get("name", "scenario"),
        n_users=payload.get("n_users", 2),
        n_days=payload.get("n_days", 28),
        seed=payload.get("seed", 0),
        start_date=date.fromisoformat(payload.get("start_date", "2021-03-01")),
        weekday=template(payload["weekday"]),
        weekend=template(weekend) if weekend else None,
        jitter_std_minutes=payload.get("jitter_std_minutes", 0.0),
        habits=tuple(DeviceHabit(*h) for h in payload.get("habits", [])),
        sensors={
            name: SensorChannel(**ch) for name, ch in payload.get("sensors", {}).items()
        }
        or _default_sensors(),
        sensor_interval_minutes=payload.get("sensor_interval_minutes", 5),
    )


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_payload(json.loads(Path(path).read_text()))


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_payload(scenario), indent=2, sort_keys=True))
