"""Command-line front end for dataset generation, placement, and export.

Four subcommands cover the pipeline: ``generate`` simulates fault sweeps
into a delimited dataset or a PMUD tensor, ``place`` runs the sensor
search on a dataset and writes a report, ``curve`` emits the score-versus-
count table behind the placement decision, and ``export-cnn`` restricts a
tensor to a placement and splits it 70-15-15 for classifier training.

All randomness flows from ``--seed``; every output embeds that seed plus a
content hash of its inputs, so re-running a command reproduces its files
byte for byte.  Exit codes: 0 success, 2 configuration error, 3 simulation
failure, 4 scoring failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import io as pio
from .faultsim import (
    FAULT_TYPES,
    FaultType,
    ScenarioConfig,
    SimulationError,
    generate_cnn_dataset,
    generate_placement_dataset,
)
from .feeder import FeederError, candidate_buses, load_feeder
from .features import FeatureLayout, build_feature_matrix
from .placement import PlacementConfig, ScorerKind, ScoringError, forward_select, fsnr
from .svm import CvConfig, SvmConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3
EXIT_SCORING = 4

_SCORERS = {
    "svm_cv": ScorerKind.SVM_CV,
    "correlation": ScorerKind.CORRELATION_DIVERSITY,
    "admittance": ScorerKind.ADMITTANCE_SPECTRAL,
}

_DATA_DIR = Path(__file__).resolve().parent / "data"


def _resolve_feeder(name: str) -> Path:
    path = Path(name)
    if path.is_file():
        return path
    bundled = _DATA_DIR / name
    if bundled.is_file():
        return bundled
    raise FeederError(f"feeder file not found: {name}")


def _parse_hours(text: str) -> tuple[int, ...]:
    try:
        hours = tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"hours must be integers: {text!r}") from None
    if not hours:
        raise argparse.ArgumentTypeError("at least one hour required")
    return hours


def _parse_types(text: str) -> tuple[FaultType, ...]:
    kinds = []
    for part in text.split(","):
        name = part.strip()
        if not name:
            continue
        try:
            kinds.append(FaultType[name])
        except KeyError:
            known = ",".join(t.name for t in FAULT_TYPES)
            raise argparse.ArgumentTypeError(
                f"unknown fault type {name!r} (known: {known})"
            ) from None
    if not kinds:
        raise argparse.ArgumentTypeError("at least one fault type required")
    return tuple(kinds)


def _parse_float_pair(text: str) -> tuple[float, float]:
    parts = [p for p in text.split(",") if p.strip() != ""]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected lo,hi pair: {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers: {text!r}") from None
    return (lo, hi)


def _parse_float_set(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(p) for p in text.split(",") if p.strip() != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("at least one value required")
    return values


def _census_line(names) -> str:
    counts = Counter(names)
    return " ".join(f"{kind.name}={counts[kind.name]}" for kind in FAULT_TYPES if counts[kind.name])


def cmd_generate(args: argparse.Namespace) -> int:
    feeder_path = _resolve_feeder(args.feeder)
    model = load_feeder(feeder_path)
    feeder_sha = pio.sha256_of_file(feeder_path)
    if args.mode == "placement":
        config = ScenarioConfig(
            mode="placement",
            hours=args.hours,
            rf_ohm=args.rf,
            rg_ohm=args.rg,
            seed=args.seed,
            types=args.types,
        )
        records = generate_placement_dataset(model, config)
        fm = build_feature_matrix(records, candidate_buses(model))
        output = Path(args.output or "dataset.csv")
        pio.write_placement_csv(
            output,
            records,
            fm,
            {
                "dataset": "placement",
                "feeder": feeder_path.name,
                "feeder_sha256": feeder_sha,
                "seed": args.seed,
                "hours": ",".join(str(h) for h in args.hours),
                "fault_types": ",".join(t.name for t in args.types),
                "rf_ohm": args.rf,
                "rg_ohm": args.rg,
            },
        )
        n_lines = len(model.lines)
        print(
            f"wrote {output}: {len(records)} rows "
            f"({n_lines} lines x {len(args.types)} types x {len(args.hours)} hours)"
        )
        print(f"label census: {_census_line(r.spec.kind.name for r in records)}")
        return EXIT_OK

    config = ScenarioConfig(
        mode="cnn",
        hours=args.hours,
        rf_ohm=args.rf_range,
        rg_ohm=args.rg_choices,
        samples=args.samples,
        seed=args.seed,
        noise_sigma=args.noise,
        types=args.types,
    )
    dataset = generate_cnn_dataset(model, config)
    output = Path(args.output or "dataset.pmud")
    tensor = pio.PmudFile(
        x=dataset.x,
        loc_index=dataset.loc_index,
        type_index=dataset.type_index,
        n_loc=len(dataset.line_ids),
    )
    pio.write_pmud(output, tensor)
    pio.write_pmud_meta(
        output,
        {
            "dataset": "cnn",
            "feeder": feeder_path.name,
            "feeder_sha256": feeder_sha,
            "seed": args.seed,
            "samples": dataset.x.shape[0],
            "noise_sigma": dataset.noise_sigma,
            "hours": list(args.hours),
            "rf_range_ohm": list(args.rf_range),
            "rg_choices_ohm": list(args.rg_choices),
            "buses": list(dataset.buses),
            "line_ids": list(dataset.line_ids),
            "fault_types": [t.name for t in FAULT_TYPES],
        },
    )
    type_names = (FAULT_TYPES[k].name for k in dataset.type_index)
    print(
        f"wrote {output}: {dataset.x.shape[0]} samples, "
        f"{dataset.x.shape[1]} timesteps, width {dataset.x.shape[2]}"
    )
    print(f"label census: {_census_line(type_names)}")
    return EXIT_OK


def _placement_config(args: argparse.Namespace) -> PlacementConfig:
    return PlacementConfig(
        budget=args.budget,
        scorer=_SCORERS[args.scorer],
        svm=SvmConfig(
            c=args.c,
            gamma=args.gamma,
            tol=args.tol,
            max_passes=args.max_passes,
            seed=args.seed,
        ),
        cv=CvConfig(folds=args.folds, seed=args.seed),
        target=args.target,
        refine=args.refine,
        radius=args.radius,
        epsilon=args.epsilon,
        seed=args.seed,
    )


def _config_dict(args: argparse.Namespace) -> dict:
    return {
        "seed": args.seed,
        "scorer": args.scorer,
        "budget": args.budget,
        "target": args.target,
        "refine": bool(args.refine),
        "radius": args.radius,
        "epsilon": args.epsilon,
        "svm": {
            "c": args.c,
            "gamma": args.gamma,
            "tol": args.tol,
            "max_passes": args.max_passes,
        },
        "cv": {"folds": args.folds, "stratified": True},
    }


def _run_search(args: argparse.Namespace):
    feeder_path = _resolve_feeder(args.feeder)
    model = load_feeder(feeder_path)
    fm, _meta = pio.read_placement_csv(args.dataset)
    expected = tuple(candidate_buses(model))
    if fm.layout.buses != expected:
        raise pio.DatasetFormatError(
            f"dataset buses do not match feeder {feeder_path.name}"
        )
    config = _placement_config(args)
    search = fsnr if args.refine else forward_select
    result = search(fm, model, config)
    fingerprint = pio.sha256_of_file(args.dataset)
    return result, fingerprint


def cmd_place(args: argparse.Namespace) -> int:
    result, fingerprint = _run_search(args)
    output = Path(args.output or "report.json")
    report = pio.result_to_dict(result, args.scorer, _config_dict(args), fingerprint)
    pio.write_report_json(output, report)
    made = [str(output)]
    if args.figure:
        from . import plots

        figure = output.with_suffix(".png")
        plots.save_trajectory_figure(figure, result, args.scorer)
        made.append(str(figure))
    print(f"selected: {' '.join(result.selected)}")
    print(f"recommended count: {result.recommended_count}")
    print(f"wrote {', '.join(made)}")
    return EXIT_OK


def cmd_curve(args: argparse.Namespace) -> int:
    result, fingerprint = _run_search(args)
    output = Path(args.output or "curve.csv")
    pio.write_curve_csv(
        output,
        result,
        {
            "scorer": args.scorer,
            "seed": args.seed,
            "dataset_sha256": fingerprint,
        },
    )
    made = [str(output)]
    if args.figure:
        from . import plots

        figure = output.with_suffix(".png")
        plots.save_curve_figure(figure, result, args.scorer)
        made.append(str(figure))
    best = max(result.trajectory)
    print(f"recommended count: {result.recommended_count} (best score {best:.4f})")
    print(f"wrote {', '.join(made)}")
    return EXIT_OK


def cmd_export_cnn(args: argparse.Namespace) -> int:
    tensor = pio.read_pmud(args.dataset)
    try:
        meta = pio.read_pmud_meta(args.dataset)
    except FileNotFoundError:
        raise pio.DatasetFormatError(
            f"{args.dataset}: missing sidecar metadata (bus layout unknown)"
        ) from None
    report = pio.read_report_json(args.report)
    buses = meta.get("buses")
    if not buses:
        raise pio.DatasetFormatError(f"{args.dataset}: sidecar lacks bus layout")
    layout = FeatureLayout.for_buses(buses)
    selected = report["selected"]
    missing = sorted(set(selected) - set(buses))
    if missing:
        raise pio.DatasetFormatError(
            f"placement references buses missing from the dataset: {' '.join(missing)}"
        )
    ordered, cols = layout.columns(selected)
    x = np.ascontiguousarray(tensor.x[:, :, cols])

    out_dir = Path(args.output_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = pio.stratified_split_indices(tensor.type_index, seed=args.seed)
    names = ("train", "val", "test")
    dataset_sha = pio.sha256_of_file(args.dataset)
    report_sha = pio.sha256_of_file(args.report)
    counts = []
    for name, idx in zip(names, splits):
        path = out_dir / f"{name}.pmud"
        part = pio.PmudFile(
            x=x[idx],
            loc_index=tensor.loc_index[idx],
            type_index=tensor.type_index[idx],
            n_loc=tensor.n_loc,
        )
        pio.write_pmud(path, part)
        pio.write_pmud_meta(
            path,
            {
                "split": name,
                "seed": args.seed,
                "source_dataset": str(args.dataset),
                "source_dataset_sha256": dataset_sha,
                "source_report_sha256": report_sha,
                "buses": list(ordered),
                "line_ids": meta.get("line_ids"),
                "fault_types": [t.name for t in FAULT_TYPES],
                "noise_sigma": meta.get("noise_sigma"),
            },
        )
        counts.append(f"{name}={idx.size}")
    print(
        f"wrote {', '.join(names)} to {out_dir}: {' '.join(counts)}, "
        f"width {x.shape[2]} ({len(ordered)} buses)"
    )
    return EXIT_OK


def _add_search_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", required=True, help="placement dataset CSV")
    parser.add_argument("--feeder", required=True, help="feeder file (path or bundled name)")
    parser.add_argument("--scorer", choices=sorted(_SCORERS), default="svm_cv")
    parser.add_argument("--budget", type=int, default=5, help="PMU budget including the substation")
    parser.add_argument("--target", choices=("line", "kind"), default="line")
    parser.add_argument("--refine", dest="refine", action="store_true",
                        help="enable neighborhood refinement (default)")
    parser.add_argument("--no-refine", dest="refine", action="store_false")
    parser.add_argument("--radius", type=int, default=2, help="refinement neighborhood radius")
    parser.add_argument("--epsilon", type=float, default=0.0025,
                        help="plateau tolerance for the recommended count")
    parser.add_argument("--c", type=float, default=1500.0, help="SVM soft-margin penalty")
    parser.add_argument("--gamma", type=float, default=8000.0,
                        help="RBF width for unit-norm feature columns")
    parser.add_argument("--tol", type=float, default=5e-3, help="SMO KKT stopping tolerance")
    parser.add_argument("--max-passes", type=int, default=60)
    parser.add_argument("--folds", type=int, default=4, help="cross-validation folds")
    parser.add_argument("--no-figure", dest="figure", action="store_false",
                        help="skip the rendered figure next to the output file")
    parser.add_argument("--output", help="output file path")
    parser.set_defaults(refine=True, figure=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmuplace",
        description="PMU placement toolkit: fault simulation, scoring, selection, export.",
    )
    parser.add_argument("--config", help="JSON file of flag defaults (flags still override)")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="simulate faults into a dataset file")
    gen.add_argument("--feeder", required=True, help="feeder file (path or bundled name)")
    gen.add_argument("--mode", choices=("placement", "cnn"), default="placement")
    gen.add_argument("--hours", type=_parse_hours,
                     default=tuple(range(0, 24, 2)),
                     help="comma-separated hours of day (default every two hours)")
    gen.add_argument("--types", type=_parse_types, default=FAULT_TYPES,
                     help="comma-separated fault types (default all eleven)")
    gen.add_argument("--rf", type=float, default=0.001,
                     help="fault resistance in ohms (placement mode)")
    gen.add_argument("--rg", type=float, default=1.0,
                     help="ground resistance in ohms (placement mode)")
    gen.add_argument("--rf-range", type=_parse_float_pair, default=(0.01, 10.0),
                     help="uniform fault-resistance range lo,hi (cnn mode)")
    gen.add_argument("--rg-choices", type=_parse_float_set, default=(1.0, 5.0, 10.0, 20.0),
                     help="ground-resistance choice set (cnn mode)")
    gen.add_argument("--samples", type=int, default=1000, help="sample count (cnn mode)")
    gen.add_argument("--noise", type=float, default=0.0,
                     help="relative measurement noise sigma (cnn mode)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--output", help="output file (default dataset.csv / dataset.pmud)")
    gen.set_defaults(func=cmd_generate)

    place = sub.add_parser("place", help="search for a PMU bus set on a dataset")
    _add_search_flags(place)
    place.add_argument("--seed", type=int, default=0)
    place.set_defaults(func=cmd_place)

    curve = sub.add_parser("curve", help="emit the score-versus-count table")
    _add_search_flags(curve)
    curve.add_argument("--seed", type=int, default=0)
    curve.set_defaults(func=cmd_curve, budget=8, output=None)

    export = sub.add_parser("export-cnn", help="split a tensor restricted to a placement")
    export.add_argument("--dataset", required=True, help="cnn-mode PMUD tensor")
    export.add_argument("--report", required=True, help="placement report JSON")
    export.add_argument("--output-dir", help="directory for train/val/test files")
    export.add_argument("--seed", type=int, default=0)
    export.set_defaults(func=cmd_export_cnn)

    parser.command_parsers = dict(sub.choices)
    return parser


_CONFIG_SECTIONS = {"scenario", "placement"}
_CONFIG_KEYS = {
    "feeder", "seed", "output", "output_dir", "dataset", "report",
    "mode", "hours", "types", "rf", "rg", "rf_range", "rg_choices",
    "samples", "noise", "scorer", "budget", "target", "refine", "radius",
    "epsilon", "c", "gamma", "tol", "max_passes", "folds", "figure",
}

_CONFIG_CONVERTERS = {
    "hours": _parse_hours,
    "types": _parse_types,
    "rf_range": _parse_float_pair,
    "rg_choices": _parse_float_set,
}


def _load_config_defaults(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="ascii"))
    except FileNotFoundError:
        raise FeederError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise pio.DatasetFormatError(f"{path}: not valid JSON ({exc})") from None
    flat: dict = {}
    for key, value in raw.items():
        if key in _CONFIG_SECTIONS:
            if not isinstance(value, dict):
                raise pio.DatasetFormatError(f"{path}: section {key!r} must be an object")
            flat.update(value)
        else:
            flat[key] = value
    defaults = {}
    for key, value in flat.items():
        if key not in _CONFIG_KEYS:
            raise pio.DatasetFormatError(f"{path}: unknown config key {key!r}")
        converter = _CONFIG_CONVERTERS.get(key)
        if converter is not None:
            if isinstance(value, str):
                value = converter(value)
            elif isinstance(value, (list, tuple)):
                value = converter(",".join(str(v) for v in value))
            else:
                raise pio.DatasetFormatError(f"{path}: bad value for {key!r}")
        defaults[key] = value
    return defaults


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        # a config file only adjusts defaults, so peel --config off first;
        # each subcommand parses into its own namespace, so the defaults must
        # land on the subparsers, and a value supplied by the config also
        # satisfies an otherwise required flag
        if "--config" in argv:
            at = argv.index("--config")
            if at + 1 >= len(argv):
                parser.error("--config needs a file path")
            defaults = _load_config_defaults(argv[at + 1])
            del argv[at : at + 2]
            for command in parser.command_parsers.values():
                command.set_defaults(**defaults)
                for action in command._actions:
                    if action.required and action.dest in defaults:
                        action.required = False
        args = parser.parse_args(argv)
        return args.func(args)
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except ScoringError as exc:
        print(f"scoring error: {exc}", file=sys.stderr)
        return EXIT_SCORING
    except (FeederError, pio.DatasetFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
