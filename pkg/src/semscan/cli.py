"""Command-line surface: simulate, fit-background, detect, evaluate.

Every run writes a manifest JSON with the fully resolved configuration so
outputs are reproducible from (inputs, manifest).  Flags can be preloaded
from a key=value config file (one pair per line, '#' comments); explicit
flags win over the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluate as ev
from .corpus import LocationRegistry, day_index, ingest, read_jsonl
from .gibbs import load_checkpoint, save_checkpoint
from .semantic import ScanConfig, fit_background
from .simulate import (
    GeneratorConfig,
    generate_labeled_corpus,
    make_benchmark,
    random_registry,
    read_scenario,
    write_scenario,
)
from .spatial import RegionPrior

log = logging.getLogger(__name__)


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    with open(path) as handle:
        for line_no, raw in enumerate(handle, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key=value, got {raw.strip()!r}")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    # Pre-scan for --config, load the file as new defaults on the active
    # subcommand's parser, and let explicit flags override on the final parse.
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    subparsers = next(
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    )
    target = parser
    for arg in argv:
        if arg in subparsers.choices:
            target = subparsers.choices[arg]
            break
    values = _read_config_file(known.config)
    valid = {action.dest: action for action in target._actions}
    unknown = sorted(set(values) - set(valid))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    typed = {}
    for key, raw in values.items():
        action = valid[key]
        typed[key] = action.type(raw) if callable(action.type) else raw
    target.set_defaults(**typed)


def _write_manifest(path: Path, command: str, settings: dict) -> None:
    payload = {"command": command, "settings": settings}
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=str)
        handle.write("\n")


def _add_detection_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--background-topics", type=int, default=25)
    parser.add_argument("--foreground-topics", type=int, default=25)
    parser.add_argument("--background-sweeps", type=int, default=500)
    parser.add_argument("--foreground-sweeps", type=int, default=200)
    parser.add_argument("--fold-in-sweeps", type=int, default=20)
    parser.add_argument("--alpha", type=float, default=0.5)
    parser.add_argument("--beta-background", type=float, default=0.01)
    parser.add_argument("--beta-foreground", type=float, default=0.01)
    parser.add_argument("--sparsity", type=float, default=0.5, help="prior inclusion probability")
    parser.add_argument("--max-scan-size", type=int, default=0,
                        help="largest scanned neighborhood (0 = half the registry)")
    parser.add_argument("--max-iterations", type=int, default=10)
    parser.add_argument("--location-threshold", type=float, default=0.5)
    parser.add_argument("--window", type=int, default=3, help="moving window length in days")
    parser.add_argument("--baseline-floor", type=float, default=0.5)


def _detection_config(args) -> ev.DetectionConfig:
    sizes = None
    if args.max_scan_size:
        sizes = tuple(range(1, args.max_scan_size + 1))
    return ev.DetectionConfig(
        t_background=args.background_topics,
        t_foreground=args.foreground_topics,
        background_sweeps=args.background_sweeps,
        foreground_sweeps=args.foreground_sweeps,
        fold_in_sweeps=args.fold_in_sweeps,
        alpha=args.alpha,
        beta_background=args.beta_background,
        beta_foreground=args.beta_foreground,
        prior=RegionPrior(sparsity=args.sparsity, sizes=sizes),
        max_iterations=args.max_iterations,
        location_threshold=args.location_threshold,
        window_days=args.window,
        baseline_floor=args.baseline_floor,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semscan",
        description="Spatially compact emerging-topic detection in text streams",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sim = sub.add_parser("simulate", help="generate leave-one-label-out outbreak scenarios")
    sim.add_argument("--config", help="key=value defaults file")
    sim.add_argument("--out", required=True, help="output directory for scenario bundles")
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--registry", help="location CSV; omit to synthesise one")
    sim.add_argument("--corpus", help="labeled corpus JSONL; omit to synthesise one")
    sim.add_argument("--split", help="ISO date starting the foreground period (with --corpus)")
    sim.add_argument("--locations", type=int, default=50, help="synthetic registry size")
    sim.add_argument("--labels", type=int, default=10)
    sim.add_argument("--outbreaks-per-label", type=int, default=10)
    sim.add_argument("--topics", type=int, default=10)
    sim.add_argument("--vocab", type=int, default=200)
    sim.add_argument("--docs-per-day", type=int, default=20)
    sim.add_argument("--background-days", type=int, default=60)
    sim.add_argument("--foreground-days", type=int, default=120)
    sim.add_argument("--mean-tokens", type=float, default=8.0)
    sim.add_argument("--label-vocab", type=int, default=8)
    sim.add_argument("--labeled-fraction", type=float, default=0.35)
    sim.add_argument("--label-mix", type=float, default=0.75)
    sim.add_argument("--start-date", default="2003-01-01")
    sim.add_argument("--duration", type=int, default=30)
    sim.add_argument("--daily-growth", type=int, default=3)
    sim.add_argument("--size-min", type=int, default=5)
    sim.add_argument("--size-max", type=int, default=15)
    sim.add_argument("--injection-mode", choices=("uniform", "severity"), default="uniform")

    fit = sub.add_parser("fit-background", help="fit and checkpoint background topics")
    fit.add_argument("--config", help="key=value defaults file")
    fit.add_argument("--corpus", required=True)
    fit.add_argument("--registry", required=True)
    fit.add_argument("--split", required=True, help="ISO date starting the foreground period")
    fit.add_argument("--out", required=True, help="checkpoint path (.npz)")
    fit.add_argument("--topics", type=int, default=25)
    fit.add_argument("--foreground-topics", type=int, default=25)
    fit.add_argument("--sweeps", type=int, default=500)
    fit.add_argument("--alpha", type=float, default=0.5)
    fit.add_argument("--beta-background", type=float, default=0.01)
    fit.add_argument("--beta-foreground", type=float, default=0.01)
    fit.add_argument("--seed", type=int, default=0)

    det = sub.add_parser("detect", help="run moving-window detection on scenario bundles")
    det.add_argument("--config", help="key=value defaults file")
    det.add_argument("--bundle", required=True, help="scenario directory, or a directory of them")
    det.add_argument("--registry", required=True)
    det.add_argument(
        "--method", required=True, help=f"one of: {', '.join(ev.METHODS)}"
    )
    det.add_argument("--seed", type=int, required=True)
    det.add_argument("--out", required=True, help="output directory for detection CSVs")
    det.add_argument("--days", help="ISO date range first:last (default: all foreground days)")
    det.add_argument("--checkpoint", help="pre-fitted background model (.npz)")
    det.add_argument("--threads", type=int, default=1, help="parallel scenarios")
    _add_detection_flags(det)

    eva = sub.add_parser("evaluate", help="aggregate detections into metric and power CSVs")
    eva.add_argument("--config", help="key=value defaults file")
    eva.add_argument("--bundle", required=True, help="directory of scenario bundles")
    eva.add_argument("--detections", required=True, help="directory written by detect")
    eva.add_argument("--out", required=True)
    eva.add_argument("--null-detections", help="detections on outbreak-free data, for power curves")
    eva.add_argument("--window", type=int, default=3)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        handler = {
            "simulate": _cmd_simulate,
            "fit-background": _cmd_fit_background,
            "detect": _cmd_detect,
            "evaluate": _cmd_evaluate,
        }[args.subcommand]
        return handler(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _load_registry(path: str) -> LocationRegistry:
    if not Path(path).exists():
        raise FileNotFoundError(f"registry not found: {path}")
    return LocationRegistry.from_csv(path)


def _cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0]))

    if args.registry:
        registry = _load_registry(args.registry)
    else:
        registry = random_registry(args.locations, rng)
        registry.to_csv(out / "registry.csv")

    if args.corpus:
        if not args.split:
            raise ValueError("--split is required with --corpus")
        corpus = ingest(read_jsonl(args.corpus), registry, args.split)
        split_day = day_index(args.split)
    else:
        config = GeneratorConfig(
            n_topics=args.topics,
            vocab_size=args.vocab,
            docs_per_day=args.docs_per_day,
            start_day=args.start_date,
            n_background_days=args.background_days,
            n_foreground_days=args.foreground_days,
            mean_tokens=args.mean_tokens,
            seed=args.seed,
        )
        corpus = generate_labeled_corpus(
            config,
            registry,
            n_labels=args.labels,
            label_vocab=args.label_vocab,
            labeled_fraction=args.labeled_fraction,
            label_mix=args.label_mix,
            rng=rng,
        )
        split_day = config.split_day

    scenarios = make_benchmark(
        corpus,
        registry,
        n_labels=args.labels,
        outbreaks_per_label=args.outbreaks_per_label,
        seed=args.seed,
        size_range=(args.size_min, args.size_max),
        duration=args.duration,
        daily_growth=args.daily_growth,
        mode=args.injection_mode,
    )
    for scenario in scenarios:
        write_scenario(out / scenario.name, scenario, split_day)
    _write_manifest(
        out / "manifest.json",
        "simulate",
        {k: v for k, v in vars(args).items() if k != "subcommand"},
    )
    print(f"wrote {len(scenarios)} scenario bundles to {out}")
    return 0


def _cmd_fit_background(args) -> int:
    registry = _load_registry(args.registry)
    corpus = ingest(read_jsonl(args.corpus), registry, args.split)
    scan = ScanConfig(
        t_background=args.topics,
        t_foreground=args.foreground_topics,
        variant="emerging" if args.foreground_topics else "static",
        background_sweeps=args.sweeps,
        alpha=args.alpha,
        beta_background=args.beta_background,
        beta_foreground=args.beta_foreground,
        seed=args.seed,
    )
    model, _ = fit_background(corpus, scan)
    save_checkpoint(model, args.out, corpus.vocabulary)
    _write_manifest(
        Path(args.out).with_suffix(".manifest.json"),
        "fit-background",
        {k: v for k, v in vars(args).items() if k != "subcommand"},
    )
    print(f"checkpoint with {model.t_background} background topics written to {args.out}")
    return 0


def _scenario_dirs(bundle: Path) -> list[Path]:
    if (bundle / "corpus.jsonl").exists():
        return [bundle]
    dirs = sorted(p for p in bundle.iterdir() if (p / "corpus.jsonl").exists())
    if not dirs:
        raise FileNotFoundError(f"no scenario bundles under {bundle}")
    return dirs


def _detect_one(scenario_dir, registry_path, method, seed, out_dir, days_arg, config, checkpoint):
    registry = _load_registry(registry_path)
    corpus, _, manifest = read_scenario(scenario_dir, registry)
    if days_arg:
        first, last = (day_index(part) for part in days_arg.split(":", 1))
    else:
        stamps = [d.timestamp for d in corpus.foreground]
        first, last = min(stamps), max(stamps)
    model = None
    if checkpoint:
        model = load_checkpoint(checkpoint)
        if model.vocab_hash and model.vocab_hash != corpus.vocabulary.content_hash():
            raise ValueError("checkpoint vocabulary does not match the corpus")
    outputs = ev.run_windows(
        method, corpus, registry, range(first, last + 1), config, seed, background_model=model
    )
    scenario_out = Path(out_dir) / manifest["name"]
    scenario_out.mkdir(parents=True, exist_ok=True)
    ev.write_detections_csv(scenario_out / f"{method}.csv", outputs)
    return manifest["name"], len(outputs)


def _cmd_detect(args) -> int:
    if args.method not in ev.METHODS:
        raise ValueError(f"unknown method {args.method!r}; valid methods: {', '.join(ev.METHODS)}")
    bundle = Path(args.bundle)
    if not bundle.exists():
        raise FileNotFoundError(f"bundle not found: {bundle}")
    _load_registry(args.registry)
    config = _detection_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    jobs = [
        (sd, args.registry, args.method, args.seed, out, args.days, config, args.checkpoint)
        for sd in _scenario_dirs(bundle)
    ]
    if args.threads > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(_detect_one_star, jobs))
    else:
        results = [_detect_one_star(job) for job in jobs]

    _write_manifest(
        out / f"manifest-{args.method}.json",
        "detect",
        {k: v for k, v in vars(args).items() if k != "subcommand"},
    )
    for name, n_days in results:
        print(f"{name}: {n_days} window-days scored with {args.method}")
    return 0


def _detect_one_star(job):
    return _detect_one(*job)


def _cmd_evaluate(args) -> int:
    bundle = Path(args.bundle)
    detections_root = Path(args.detections)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    metric_rows = []
    outbreak_scores: dict[str, list[np.ndarray]] = {}
    for scenario_dir in _scenario_dirs(bundle):
        with open(scenario_dir / "truth.json") as handle:
            from .simulate import OutbreakGroundTruth

            truth = OutbreakGroundTruth.from_json(json.load(handle))
        detections_dir = detections_root / scenario_dir.name
        if not detections_dir.exists():
            log.warning("no detections for scenario %s; skipping", scenario_dir.name)
            continue
        for csv_path in sorted(detections_dir.glob("*.csv")):
            method = csv_path.stem
            outputs = ev.read_detections_csv(csv_path)
            metric_rows.extend(ev.scenario_metric_rows(truth, outputs, method, args.window))
            in_outbreak = [
                o.score
                for o in outputs
                if not o.skipped and 1 <= o.day - truth.start_day + 1 <= truth.duration
            ]
            if in_outbreak:
                outbreak_scores.setdefault(method, []).append(np.array(in_outbreak))

    metric_rows.sort(key=lambda r: (r["method"], r["day"]))
    ev.write_metrics_csv(out / "metrics.csv", metric_rows)
    written = ["metrics.csv"]

    if args.null_detections:
        null_root = Path(args.null_detections)
        points_by_method = {}
        for method, scores in sorted(outbreak_scores.items()):
            null_scores = []
            for csv_path in sorted(null_root.rglob(f"{method}.csv")):
                null_scores.extend(
                    o.score for o in ev.read_detections_csv(csv_path) if not o.skipped
                )
            if not null_scores:
                log.warning("no null detections for method %s; skipping power curve", method)
                continue
            points_by_method[method] = ev.power_curves(null_scores, scores)
        ev.write_power_csv(out / "power_curves.csv", points_by_method)
        written.append("power_curves.csv")

    _write_manifest(
        out / "manifest-evaluate.json",
        "evaluate",
        {k: v for k, v in vars(args).items() if k != "subcommand"},
    )
    print(f"wrote {', '.join(written)} to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
