"""Injection, cross-validation counts, grid search, and frontier extraction."""

from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np
import pytest

from homeguard.detector import BaselineParams, Thresholds
from homeguard.errors import ModelError
from homeguard.evaluation import (
    EstimationGrid,
    EstimationMethod,
    EvalDataset,
    EvalPoint,
    ProposedGrid,
    ProposedMethod,
    SequenceGrid,
    SequenceMethod,
    best_at,
    cross_validate,
    grid_search,
    inject_anomalies,
    make_params,
    pareto_frontier,
)
from homeguard.ingest import EventRecord, build_timeslots
from homeguard.labeling import LabelingParams
from homeguard.seqstore import SeqParams
from homeguard.vocab import Vocabulary

from conftest import frame

BASE = datetime(2021, 3, 1)


def toy_dataset(n_days=2) -> EvalDataset:
    """Tiny regular home: fridge then stove each morning, stove off later."""
    events, frames = [], []
    for day in range(n_days):
        start = BASE + timedelta(days=day)
        frames.append(frame(start))
        frames.append(frame(start + timedelta(hours=12)))
        events.extend(
            [
                EventRecord(start + timedelta(hours=7, minutes=28, seconds=5), "refrigerator", "opening"),
                EventRecord(start + timedelta(hours=7, minutes=30, seconds=10), "cooking_stove", "on"),
                EventRecord(start + timedelta(hours=7, minutes=45, seconds=40), "cooking_stove", "off"),
                EventRecord(start + timedelta(hours=20, minutes=0, seconds=0), "tv", "on"),
            ]
        )
    return EvalDataset(slots=build_timeslots(events, frames), vocabulary=Vocabulary())


@dataclass
class ScriptedMethod:
    """Judge by a fixed predicate on the operation context."""

    predicate: object
    name: str = "scripted"

    def fit(self, fold):
        return lambda ctx: self.predicate(ctx)


class TestInjectAnomalies:
    def test_zero_count(self):
        plan = inject_anomalies(BASE, count=0, seed=1)
        assert plan.operations == ()

    def test_deterministic(self):
        a = inject_anomalies(BASE, count=100, seed=7, day_index=3)
        b = inject_anomalies(BASE, count=100, seed=7, day_index=3)
        assert a.operations == b.operations

    def test_different_days_differ(self):
        a = inject_anomalies(BASE, count=100, seed=7, day_index=0)
        b = inject_anomalies(BASE, count=100, seed=7, day_index=1)
        assert a.operations != b.operations

    def test_times_inside_day_and_device(self):
        plan = inject_anomalies(BASE, count=500, seed=3)
        for op in plan.operations:
            assert BASE <= op.timestamp < BASE + timedelta(days=1)
            assert op.device == "cooking_stove" and op.action == "on"

    def test_uniformity_ks(self):
        n = 100_000
        plan = inject_anomalies(BASE, count=n, seed=11)
        seconds = np.sort(
            np.array([(op.timestamp - BASE).total_seconds() for op in plan.operations])
        )
        u = seconds / 86400.0
        grid = np.arange(1, n + 1) / n
        d_stat = max(np.max(grid - u), np.max(u - (grid - 1.0 / n)))
        critical = 1.63 / np.sqrt(n)  # 1% significance level
        assert d_stat < critical


class TestCrossValidate:
    def test_flag_everything(self):
        dataset = toy_dataset(n_days=2)
        method = ScriptedMethod(lambda ctx: True, name="flag_all")
        results = cross_validate(dataset, [method], injections_per_day=100, seed=0)
        point = results["flag_all"]
        assert point.tp + point.fn == 200
        assert point.detection_ratio == 1.0
        assert point.misdetection_ratio == 1.0
        assert point.fp == 2 * dataset.n_days  # stove on + off per day

    def test_perfect_oracle_method(self):
        dataset = toy_dataset(n_days=2)
        method = ScriptedMethod(lambda ctx: ctx.injected, name="oracle")
        results = cross_validate(dataset, [method], injections_per_day=50, seed=0)
        point = results["oracle"]
        assert (point.tp, point.fn, point.fp) == (100, 0, 0)
        assert point.misdetection_ratio == 0.0

    def test_scripted_counts_match_hand_tally(self):
        dataset = toy_dataset(n_days=2)
        predicate = lambda ctx: ctx.op.timestamp.minute % 2 == 0
        method = ScriptedMethod(predicate, name="parity")
        results = cross_validate(dataset, [method], injections_per_day=100, seed=5)
        point = results["parity"]

        expected_tp = 0
        for day in range(2):
            plan = inject_anomalies(
                BASE + timedelta(days=day), count=100, seed=5, day_index=day
            )
            expected_tp += sum(1 for op in plan.operations if op.timestamp.minute % 2 == 0)
        real_minutes = [30, 45] * 2  # stove on/off per day
        expected_fp = sum(1 for m in real_minutes if m % 2 == 0)
        assert point.tp == expected_tp
        assert point.fn == 200 - expected_tp
        assert point.fp == expected_fp
        assert point.tn == 4 - expected_fp
        assert point.detection_ratio == pytest.approx(expected_tp / 200)
        assert point.misdetection_ratio == pytest.approx(expected_fp / 4)

    def test_single_day_rejected(self):
        dataset = toy_dataset(n_days=1)
        with pytest.raises(ModelError):
            cross_validate(dataset, [ScriptedMethod(lambda ctx: True)])

    def test_builtin_methods_run(self):
        dataset = toy_dataset(n_days=3)
        methods = [
            ProposedMethod(Thresholds(n_single=0.01, n_multi=0.01)),
            EstimationMethod(theta=0.001),
            SequenceMethod(BaselineParams(alpha_seq=3600.0, n_seq_single=0.2, n_seq_multi=0.2)),
        ]
        results = cross_validate(
            dataset, methods,
            labeling_params=LabelingParams(t_x=3, t_y=3, t_c=2),
            seq_params=SeqParams(l_rank=2),
            injections_per_day=20, seed=1,
        )
        for name in ("proposed", "estimation", "sequence"):
            point = results[name]
            assert point.tp + point.fn == 60
            assert point.fp + point.tn == 6
            # The toy home is extremely regular; anything sane detects most
            # random-time injections.
            assert point.detection_ratio > 0.5


class TestGridSearch:
    def test_single_combination_single_point(self):
        dataset = toy_dataset(n_days=2)
        grid = SequenceGrid(alpha_seq=(900.0,), n_single=(0.1,), n_multi=(0.1,))
        points = grid_search(dataset, grid, injections_per_day=10, seed=2)
        assert len(points) == 1

    def test_cardinality_is_product_of_lists(self):
        dataset = toy_dataset(n_days=2)
        grid = ProposedGrid(
            t_x=(2, 3), t_y=(2,), t_c=(1,),
            criterion="rank", l_values=(1, 2),
            n_single=(0.05, 0.2), n_multi=(0.1,),
        )
        points = grid_search(dataset, grid, injections_per_day=5, seed=3)
        assert len(points) == 2 * 1 * 1 * 2 * 2 * 1

    def test_order_free(self):
        dataset = toy_dataset(n_days=2)
        forward = grid_search(
            dataset,
            SequenceGrid(alpha_seq=(900.0, 3600.0), n_single=(0.1, 0.3), n_multi=(0.1,)),
            injections_per_day=10, seed=4,
        )
        backward = grid_search(
            dataset,
            SequenceGrid(alpha_seq=(3600.0, 900.0), n_single=(0.3, 0.1), n_multi=(0.1,)),
            injections_per_day=10, seed=4,
        )
        assert sorted(p.sort_key for p in forward) == sorted(p.sort_key for p in backward)
        assert {(p.params_json, p.tp, p.fp) for p in forward} == {
            (p.params_json, p.tp, p.fp) for p in backward
        }

    def test_grid_point_matches_cross_validate(self):
        dataset = toy_dataset(n_days=2)
        labeling = LabelingParams(t_x=2, t_y=2, t_c=1)
        seq = SeqParams(criterion="rank", l_rank=1)

        grid_points = grid_search(
            dataset,
            ProposedGrid(t_x=(2,), t_y=(2,), t_c=(1,), criterion="rank",
                         l_values=(1,), n_single=(0.05,), n_multi=(0.05,)),
            labeling_params=labeling, seq_params=seq,
            injections_per_day=30, seed=9,
        )
        cv = cross_validate(
            dataset, [ProposedMethod(Thresholds(0.05, 0.05))],
            labeling_params=labeling, seq_params=seq,
            injections_per_day=30, seed=9,
        )["proposed"]
        point = grid_points[0]
        assert (point.tp, point.fn, point.fp, point.tn) == (cv.tp, cv.fn, cv.fp, cv.tn)

    def test_estimation_grid_matches_cross_validate(self):
        dataset = toy_dataset(n_days=2)
        labeling = LabelingParams(t_x=2, t_y=2, t_c=1)
        grid_points = grid_search(
            dataset,
            EstimationGrid(t_x=(2,), t_y=(2,), t_c=(1,), theta=(0.001,)),
            labeling_params=labeling, injections_per_day=30, seed=9,
        )
        cv = cross_validate(
            dataset, [EstimationMethod(theta=0.001)],
            labeling_params=labeling, injections_per_day=30, seed=9,
        )["estimation"]
        point = grid_points[0]
        assert (point.tp, point.fn, point.fp, point.tn) == (cv.tp, cv.fn, cv.fp, cv.tn)

    def test_sequence_grid_matches_cross_validate(self):
        dataset = toy_dataset(n_days=2)
        grid_points = grid_search(
            dataset,
            SequenceGrid(alpha_seq=(3600.0,), n_single=(0.2,), n_multi=(0.2,)),
            injections_per_day=30, seed=9,
        )
        cv = cross_validate(
            dataset,
            [SequenceMethod(BaselineParams(alpha_seq=3600.0, n_seq_single=0.2, n_seq_multi=0.2))],
            injections_per_day=30, seed=9,
        )["sequence"]
        point = grid_points[0]
        assert (point.tp, point.fn, point.fp, point.tn) == (cv.tp, cv.fn, cv.fp, cv.tn)

    def test_auto_thresholds_yield_frontier_points(self):
        dataset = toy_dataset(n_days=2)
        points = grid_search(
            dataset,
            SequenceGrid(alpha_seq=(900.0,), n_single="auto", n_multi="auto"),
            injections_per_day=50, seed=6,
        )
        assert points
        mis = [p.misdetection_ratio for p in points]
        det = [p.detection_ratio for p in points]
        assert any(d > 0.5 for d in det)
        for p in points:
            assert 0.0 <= p.misdetection_ratio <= 1.0
            assert p.tp + p.fn == 100


def pt(mis: float, det: float, tag: str = "x") -> EvalPoint:
    tp = round(det * 100)
    fp = round(mis * 1000)
    return EvalPoint("m", make_params({"tag": tag}), tp=tp, fn=100 - tp, fp=fp, tn=1000 - fp)


class TestParetoFrontier:
    def test_single_point(self):
        point = pt(0.1, 0.5)
        assert pareto_frontier([point]) == [point]

    def test_documented_example(self):
        points = [pt(0.05, 0.6, "a"), pt(0.08, 0.5, "b"), pt(0.10, 0.9, "c")]
        frontier = pareto_frontier(points)
        assert [(p.misdetection_ratio, p.detection_ratio) for p in frontier] == [
            (0.05, 0.6),
            (0.10, 0.9),
        ]

    def test_identical_points_collapse(self):
        points = [pt(0.2, 0.4, t) for t in "abc"]
        assert len(pareto_frontier(points)) == 1

    def test_properties_against_quadratic_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            n = int(rng.integers(1, 40))
            points = [
                pt(float(rng.integers(0, 50)) / 50.0, float(rng.integers(0, 20)) / 20.0, str(i))
                for i, n_ in zip(range(n), range(n))
            ]
            frontier = pareto_frontier(points)
            mis = [p.misdetection_ratio for p in frontier]
            det = [p.detection_ratio for p in frontier]
            assert mis == sorted(mis) and len(set(mis)) == len(mis)
            assert det == sorted(det)
            for p in points:
                assert any(
                    q.misdetection_ratio <= p.misdetection_ratio
                    and q.detection_ratio >= p.detection_ratio
                    for q in frontier
                )
            for q in frontier:
                assert not any(
                    p.misdetection_ratio <= q.misdetection_ratio
                    and p.detection_ratio > q.detection_ratio
                    for p in points
                )

    def test_empty(self):
        assert pareto_frontier([]) == []


class TestBestAt:
    def frontier(self):
        return [pt(0.05, 0.6, "a"), pt(0.08, 0.5, "b"), pt(0.10, 0.9, "c")]

    def test_documented_cap(self):
        point = best_at(self.frontier(), 0.10)
        assert (point.misdetection_ratio, point.detection_ratio) == (0.05, 0.6)

    def test_loose_cap_gives_global_max(self):
        point = best_at(self.frontier(), 1.1)
        assert point.detection_ratio == 0.9

    def test_cap_is_strict(self):
        # A point exactly at the cap is excluded.
        assert best_at([pt(0.10, 0.9)], 0.10) is None

    def test_empty_absence(self):
        assert best_at([], 0.10) is None
