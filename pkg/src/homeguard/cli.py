"""Command-line entry point: label | train | detect | evaluate | synth."""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from datetime import time
from pathlib import Path

from .detector import (
    BaselineParams,
    Thresholds,
    judge_estimation_baseline,
    judge_proposed,
    judge_sequence_baseline,
)
from .errors import HomeguardError, UsageError
from .evaluation import (
    EstimationGrid,
    EvalDataset,
    ProposedGrid,
    SequenceGrid,
    best_at,
    grid_search,
    pareto_frontier,
    write_results_csv,
)
from .hsmodel import ModelParams, TrainedModel, run_filter, train_model
from .ingest import build_timeslots, parse_operation_log, parse_sensor_log
from .labeling import LabelingParams, export_event_labels, export_labels, label_states
from .seqstore import SeqParams
from .synthgen import generate, load_scenario, scenario_calibration, scenario_s1
from .vocab import Vocabulary


def _parse_time(text: str) -> time:
    hours, _, minutes = text.partition(":")
    return time(int(hours), int(minutes))


def _parse_values(text: str, cast):
    if text == "auto":
        return "auto"
    return tuple(cast(part) for part in text.split(",") if part)


def _load_config(args) -> dict:
    if getattr(args, "config", None):
        return json.loads(Path(args.config).read_text())
    return {}


def _merge_params(cls, section: dict, overrides: dict):
    data = dict(section)
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    if cls is LabelingParams:
        if "night_window" in data and isinstance(data["night_window"], (list, tuple)):
            data["night_window"] = tuple(
                _parse_time(x) if isinstance(x, str) else x for x in data["night_window"]
            )
        if "night_split" in data and isinstance(data["night_split"], str):
            data["night_split"] = _parse_time(data["night_split"])
    return cls(**data)


def _labeling_params(args, config: dict) -> LabelingParams:
    overrides = {
        "t_x": getattr(args, "t_x", None),
        "t_y": getattr(args, "t_y", None),
        "t_c": getattr(args, "t_c", None),
        "noise_threshold": getattr(args, "noise_threshold", None),
        "co2_threshold": getattr(args, "co2_threshold", None),
        "initial_occupants": getattr(args, "initial_occupants", None),
    }
    if getattr(args, "night_window", None):
        start, _, end = args.night_window.partition("-")
        overrides["night_window"] = (_parse_time(start), _parse_time(end))
    return _merge_params(LabelingParams, config.get("labeling", {}), overrides)


def _seq_params(args, config: dict) -> SeqParams:
    overrides = {
        "t_seq": getattr(args, "t_seq", None),
        "criterion": getattr(args, "criterion", None),
        "l_rank": getattr(args, "l_rank", None),
        "l_alpha": getattr(args, "l_alpha", None),
    }
    return _merge_params(SeqParams, config.get("seq", {}), overrides)


def _model_params(args, config: dict) -> ModelParams:
    overrides = {"t_z_max": getattr(args, "t_z_max", None)}
    return _merge_params(ModelParams, config.get("model", {}), overrides)


def _vocabulary(args) -> Vocabulary:
    if getattr(args, "vocabulary", None):
        return Vocabulary.load(args.vocabulary)
    return Vocabulary()


def _load_stream(args, vocabulary: Vocabulary, on_unknown: str = "error"):
    events = parse_operation_log(args.operations, vocabulary, on_unknown=on_unknown)
    frames = parse_sensor_log(args.sensors, ranges=vocabulary.sensor_ranges or None)
    return build_timeslots(events, frames, day_origin=_parse_time(args.day_origin))


def cmd_label(args) -> int:
    config = _load_config(args)
    vocabulary = _vocabulary(args)
    params = _labeling_params(args, config)
    slots = _load_stream(args, vocabulary)
    events = [event for slot in slots for event in slot.events]
    labeled = label_states(slots, events, params, vocabulary)
    if args.export:
        export_labels(labeled, args.export)
    if args.events_csv:
        export_event_labels(labeled, args.events_csv)
    if not args.export and not args.events_csv:
        histogram = Counter(item.state.key for item in labeled)
        excluded = len({(item.slot.t - 1) // 1440 for item in labeled if item.excluded_day})
        print(f"slots={len(labeled)} days={len(labeled) // 1440} excluded_days={excluded}")
        for key, count in sorted(histogram.items()):
            print(f"{key} {count}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    vocabulary = _vocabulary(args)
    labeling = _labeling_params(args, config)
    model_params = _model_params(args, config)
    seq_params = _seq_params(args, config)
    slots = _load_stream(args, vocabulary)
    events = [event for slot in slots for event in slot.events]
    if not events:
        raise UsageError("training requires a non-empty operation log")
    model = train_model(slots, events, vocabulary, labeling, model_params, seq_params)
    model.save(args.output)
    print(f"model written to {args.output}")
    return 0


def cmd_detect(args) -> int:
    config = _load_config(args).get("detector", {})
    model = TrainedModel.load(args.model)
    vocabulary = model.vocabulary
    events = parse_operation_log(args.operations, vocabulary, on_unknown="skip")
    frames = parse_sensor_log(args.sensors, ranges=vocabulary.sensor_ranges or None)
    slots = build_timeslots(events, frames, day_origin=_parse_time(args.day_origin))
    trace = run_filter(slots, model.transitions, model.operations)

    def setting(name):
        value = getattr(args, name)
        return config.get(name, value) if value is None else value

    thresholds = Thresholds(
        n_single=setting("n_single") or 0.0, n_multi=setting("n_multi") or 0.0
    )
    baseline = BaselineParams(
        theta=setting("theta") if setting("theta") is not None else 0.5,
        alpha_seq=setting("alpha_seq") if setting("alpha_seq") is not None else 900.0,
        n_seq_single=setting("n_seq_single") if setting("n_seq_single") is not None else 0.1,
        n_seq_multi=setting("n_seq_multi") if setting("n_seq_multi") is not None else 0.1,
    )
    target = vocabulary.detection_target
    all_steps = trace.events
    lines: list[str] = []
    for idx, step in enumerate(all_steps):
        if step.event.device != target:
            continue
        horizon = step.event.timestamp
        preceding = [
            s.event
            for s in all_steps[:idx]
            if (horizon - s.event.timestamp).total_seconds() <= model.seq_params.t_seq
        ]
        if args.method == "proposed":
            verdict = judge_proposed(model, step.pre, preceding, step.event, thresholds)
        elif args.method == "estimation":
            verdict = judge_estimation_baseline(
                model.operations, step.pre, step.event, baseline.theta, target
            )
        else:
            verdict = judge_sequence_baseline(
                model.baseline_store, preceding, step.event, baseline,
                model.seq_params, target,
            )
        lines.append(verdict.to_jsonl())

    output = "\n".join(lines) + ("\n" if lines else "")
    if args.output:
        Path(args.output).write_text(output)
    else:
        sys.stdout.write(output)
    return 0


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    vocabulary = _vocabulary(args)
    labeling = _labeling_params(args, config)
    model_params = _model_params(args, config)
    seq_params = _seq_params(args, config)
    events = parse_operation_log(args.operations, vocabulary)
    frames = parse_sensor_log(args.sensors, ranges=vocabulary.sensor_ranges or None)
    dataset = EvalDataset.from_logs(
        events, frames, vocabulary, day_origin=_parse_time(args.day_origin)
    )

    methods = (
        ("proposed", "estimation", "sequence")
        if args.methods == "all"
        else tuple(args.methods.split(","))
    )
    output_dir = Path(args.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    for method in methods:
        if method == "proposed":
            grid = ProposedGrid(
                t_x=_parse_values(args.t_x_values, int),
                t_y=_parse_values(args.t_y_values, int),
                t_c=_parse_values(args.t_c_values, int),
                criterion=args.criterion,
                l_values=_parse_values(args.l_values, float if args.criterion == "alpha" else int),
                n_single=_parse_values(args.n_single_values, float),
                n_multi=_parse_values(args.n_multi_values, float),
            )
        elif method == "estimation":
            grid = EstimationGrid(
                t_x=_parse_values(args.t_x_values, int),
                t_y=_parse_values(args.t_y_values, int),
                t_c=_parse_values(args.t_c_values, int),
                theta=_parse_values(args.theta_values, float),
            )
        elif method == "sequence":
            grid = SequenceGrid(
                alpha_seq=_parse_values(args.alpha_seq_values, float),
                n_single=_parse_values(args.n_seq_single_values, float),
                n_multi=_parse_values(args.n_seq_multi_values, float),
            )
        else:
            raise UsageError(f"unknown method {method!r}")
        points = grid_search(
            dataset,
            grid,
            labeling_params=labeling,
            model_params=model_params,
            seq_params=seq_params,
            injections_per_day=args.injections,
            seed=args.seed,
            jobs=args.jobs,
        )
        frontier = pareto_frontier(points)
        write_results_csv(points, output_dir / f"results_{method}.csv")
        write_results_csv(frontier, output_dir / f"frontier_{method}.csv")
        if args.best_at is not None:
            point = best_at(frontier, args.best_at)
            if point is None:
                print(f"{method}: no point under misdetection {args.best_at}")
            else:
                print(
                    f"{method}: detection={point.detection_ratio:.4f} "
                    f"misdetection={point.misdetection_ratio:.4f} params={point.params_json}"
                )
    return 0


def cmd_synth(args) -> int:
    config = _load_config(args)
    if args.scenario == "s1":
        scenario = scenario_s1(seed=args.seed)
    elif args.scenario == "calibration":
        scenario = scenario_calibration(seed=args.seed)
    else:
        scenario = load_scenario(args.scenario)
        if args.seed is not None:
            scenario.seed = args.seed
    days = args.days or config.get("days")
    if days:
        scenario.n_days = days
    result = generate(scenario)
    paths = result.write(args.output_dir)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


def _add_io_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--operations", required=True, help="operation log CSV")
    parser.add_argument("--sensors", required=True, help="sensor log CSV")
    parser.add_argument("--vocabulary", help="vocabulary JSON file")
    parser.add_argument("--day-origin", default="00:00", help="time of day where slot 1 starts")
    parser.add_argument("--config", help="JSON file with parameter sections")


def _add_labeling_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--t-x", type=int, dest="t_x")
    parser.add_argument("--t-y", type=int, dest="t_y")
    parser.add_argument("--t-c", type=int, dest="t_c")
    parser.add_argument("--noise-threshold", type=float, dest="noise_threshold")
    parser.add_argument("--co2-threshold", type=float, dest="co2_threshold")
    parser.add_argument("--night-window", dest="night_window", help="HH:MM-HH:MM")
    parser.add_argument("--initial-occupants", type=int, dest="initial_occupants")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homeguard",
        description="Smart-home device operation anomaly detection",
    )
    sub = parser.add_subparsers(dest="command")

    p_label = sub.add_parser("label", help="label a log stream with home states")
    _add_io_arguments(p_label)
    _add_labeling_arguments(p_label)
    p_label.add_argument("--export", help="write slot labels CSV here")
    p_label.add_argument("--events-csv", dest="events_csv", help="write per-event labels CSV here")
    p_label.set_defaults(func=cmd_label)

    p_train = sub.add_parser("train", help="train a detection model")
    _add_io_arguments(p_train)
    _add_labeling_arguments(p_train)
    p_train.add_argument("--output", required=True, help="model JSON path")
    p_train.add_argument("--t-z-max", type=int, dest="t_z_max")
    p_train.add_argument("--t-seq", type=float, dest="t_seq")
    p_train.add_argument("--criterion", choices=("rank", "alpha"))
    p_train.add_argument("--l-rank", type=int, dest="l_rank")
    p_train.add_argument("--l-alpha", type=float, dest="l_alpha")
    p_train.set_defaults(func=cmd_train)

    p_detect = sub.add_parser("detect", help="judge target operations in a stream")
    p_detect.add_argument("--model", required=True)
    p_detect.add_argument("--operations", required=True)
    p_detect.add_argument("--sensors", required=True)
    p_detect.add_argument("--day-origin", default="00:00")
    p_detect.add_argument("--config", help="JSON file with a 'detector' section")
    p_detect.add_argument("--seed", type=int, help="accepted for interface parity")
    p_detect.add_argument("--method", choices=("proposed", "estimation", "sequence"),
                          default="proposed")
    p_detect.add_argument("--output", help="verdicts JSONL path (default: stdout)")
    p_detect.add_argument("--n-single", type=float, dest="n_single")
    p_detect.add_argument("--n-multi", type=float, dest="n_multi")
    p_detect.add_argument("--theta", type=float)
    p_detect.add_argument("--alpha-seq", type=float, dest="alpha_seq")
    p_detect.add_argument("--n-seq-single", type=float, dest="n_seq_single")
    p_detect.add_argument("--n-seq-multi", type=float, dest="n_seq_multi")
    p_detect.set_defaults(func=cmd_detect)

    p_eval = sub.add_parser("evaluate", help="cross-validated grid evaluation")
    _add_io_arguments(p_eval)
    _add_labeling_arguments(p_eval)
    p_eval.add_argument("--output-dir", required=True, dest="output_dir")
    p_eval.add_argument("--methods", default="all",
                        help="'all' or comma list of proposed,estimation,sequence")
    p_eval.add_argument("--injections", type=int, default=100)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--jobs", type=int, default=1)
    p_eval.add_argument("--best-at", type=float, dest="best_at")
    p_eval.add_argument("--t-x-values", default="15", dest="t_x_values")
    p_eval.add_argument("--t-y-values", default="15", dest="t_y_values")
    p_eval.add_argument("--t-c-values", default="20", dest="t_c_values")
    p_eval.add_argument("--criterion", choices=("rank", "alpha"), default="rank")
    p_eval.add_argument("--l-values", default="1", dest="l_values")
    p_eval.add_argument("--n-single-values", default="auto", dest="n_single_values")
    p_eval.add_argument("--n-multi-values", default="auto", dest="n_multi_values")
    p_eval.add_argument("--theta-values", default="auto", dest="theta_values")
    p_eval.add_argument("--alpha-seq-values", default="0,900,3600,10800,32400,43200",
                        dest="alpha_seq_values")
    p_eval.add_argument("--n-seq-single-values", default="auto", dest="n_seq_single_values")
    p_eval.add_argument("--n-seq-multi-values", default="auto", dest="n_seq_multi_values")
    p_eval.add_argument("--t-seq", type=float, dest="t_seq")
    p_eval.set_defaults(func=cmd_evaluate)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--scenario", default="s1",
                         help="'s1', 'calibration', or a scenario JSON path")
    p_synth.add_argument("--output-dir", required=True, dest="output_dir")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--days", type=int)
    p_synth.add_argument("--config", help="JSON file; 'days' key honored")
    p_synth.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except HomeguardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal invariant violations
        print(f"internal: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
