"""Command-line surface: every subcommand parses arguments, loads inputs, and
delegates to the library; no numeric logic lives here.

Exit codes: 0 success, 1 contract violation, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _lazy_imports():
    # Deferred so the thread-count pinning in relate.__init__ runs first.
    global np, data, models, attacks, detection, pipeline, scenarios, similarity, RunConfig
    import numpy as np

    from . import attacks, data, detection, models, pipeline, scenarios, similarity
    from .config import RunConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relate",
        description="Attack detection, attack-group classification, and "
                    "similarity-driven model selection for time series.",
    )
    parser.add_argument("--config", help="JSON manifest of defaults; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="root random seed (default 0)")
        p.add_argument("--epsilon", type=float, default=None, help="attack strength (default 0.1)")
        p.add_argument("--threshold", type=float, default=None,
                       help="case-routing threshold T (default 0.13)")
        p.add_argument("--percentile", type=float, default=None,
                       help="detector calibration percentile (default 99)")
        p.add_argument("--metric", choices=["cosine", "dtw", "wasserstein"], default=None,
                       help="similarity metric (default cosine)")
        p.add_argument("--jobs", type=int, default=None,
                       help="worker parallelism cap (default 1; >1 rarely pays off at this scale)")

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--length", type=int, default=64)
    p.add_argument("--per-class", type=int, default=40)
    p.add_argument("--amplitude", type=float, default=0.22)
    p.add_argument("--base-freq", type=int, default=4)
    p.add_argument("--freq-step", type=int, default=2)
    p.add_argument("--name", default=None)

    p = sub.add_parser("attack", help="attack a dataset's val/test splits")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--kind", required=True, choices=list(attacks_kinds()))
    p.add_argument("--arch", default="mlp", help="surrogate architecture to attack against")
    p.add_argument("--splits", default="val,test")

    p = sub.add_parser("pbd-build", help="build the performance benchmark database")
    common(p)
    p.add_argument("--datasets", required=True, help="comma-separated dataset directories")
    p.add_argument("--out", required=True)
    p.add_argument("--full-grid", action="store_true",
                   help="tune over the full hyperparameter grid (slower)")

    p = sub.add_parser("detect", help="run attack detection on a dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("classify-attack", help="predict the attack group of a dataset's val split")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--pbd", required=True)

    p = sub.add_parser("select", help="similarity-driven dataset choice and top-3 (no retraining)")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--pbd", required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("run", help="full arrival pipeline incl. top-3 transfer and baselines")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--pbd", required=True)
    p.add_argument("--out", required=True, help="selection result JSON; timing goes to <out>.timing.json")
    p.add_argument("--condition", default="clean",
                   help="ground-truth arrival condition for evaluation: "
                        "'clean', 'full:<kind>', or 'partial:<k1|clean>,...x5'")

    p = sub.add_parser("eval-baselines", help="oracle / random / worst on a dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--pbd", required=True)
    p.add_argument("--condition", default="clean")

    p = sub.add_parser("report", help="print the benchmark database as a table")
    common(p)
    p.add_argument("--pbd", required=True)
    return parser


def attacks_kinds():
    return ("fgsm", "bim", "mim", "auto_pgd", "deepfool", "elastic_net", "boundary")


def _merge_config(args) -> "RunConfig":
    manifest = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                manifest = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise IOError(f"{args.config}: {exc}") from exc
    fields = ("seed", "epsilon", "threshold", "percentile", "metric", "jobs")
    defaults = {"seed": 0, "epsilon": 0.1, "threshold": 0.13, "percentile": 99.0,
                "metric": "cosine", "jobs": 1}
    merged = {}
    for name in fields:
        flag = getattr(args, name, None)
        merged[name] = flag if flag is not None else manifest.get(name, defaults[name])
    return RunConfig(**merged)


def _parse_condition(text: str, config) -> "pipeline.IncomingCondition":
    if text == "clean":
        return pipeline.IncomingCondition("clean")
    if text.startswith("full:"):
        kind = text.split(":", 1)[1]
        return pipeline.IncomingCondition("full", attack=attacks.AttackSpec(kind, epsilon=config.epsilon))
    if text.startswith("partial:"):
        parts = text.split(":", 1)[1].split(",")
        pattern = tuple(
            None if p in ("clean", "-") else attacks.AttackSpec(p, epsilon=config.epsilon)
            for p in parts
        )
        return pipeline.IncomingCondition("partial", pattern=pattern)
    raise ValueError(f"cannot parse condition '{text}'")


def _experiment_from_args(args, config):
    """Arrival experiment for a dataset directory that is already in its
    as-arrived (possibly attacked) form; clean_test falls back to the stored
    test split when the condition is clean."""
    dataset = data.read_dataset(args.data, seed=config.seed)
    condition = _parse_condition(args.condition, config)
    clean_dir = os.path.join(args.data, "clean")
    if condition.kind != "clean" and os.path.isdir(clean_dir):
        clean_test = data.read_dataset(clean_dir, seed=config.seed).samples_test
    else:
        clean_test = list(dataset.samples_test)
    return pipeline.IncomingExperiment(dataset=dataset, condition=condition, clean_test=clean_test)


def cmd_synth(args, config):
    spec = data.SyntheticSpec(
        classes=args.classes, channels=args.channels, length=args.length,
        samples_per_class=args.per_class, seed=config.seed, amplitude=args.amplitude,
        base_freq=args.base_freq, freq_step=args.freq_step,
        name=args.name or os.path.basename(os.path.normpath(args.out)),
    )
    dataset = data.generate_synthetic_dataset(spec)
    data.write_dataset(dataset, args.out)
    print(f"wrote {args.out}: K={spec.classes} C={spec.channels} L={spec.length} "
          f"train/val/test = {len(dataset.samples_train)}/{len(dataset.samples_val)}/{len(dataset.samples_test)}")
    return 0


def cmd_attack(args, config):
    dataset = data.read_dataset(args.data, seed=config.seed)
    spec = attacks.AttackSpec(args.kind, epsilon=config.epsilon)
    surrogate = models.train(models.ModelSpec(args.arch, {"lr": 0.1, "width": 32}),
                             dataset, config.seed)
    splits = [s.strip() for s in args.splits.split(",") if s.strip()]
    new = {"train": dataset.samples_train, "val": dataset.samples_val, "test": dataset.samples_test}
    for split in splits:
        if split not in new:
            raise ValueError(f"unknown split '{split}'")
        attacked, _ = attacks.attack_dataset(surrogate, new[split], spec,
                                             seed=config.seed)
        new[split] = attacked
    out = dataset.replace_splits(train=new["train"], val=new["val"], test=new["test"])
    data.write_dataset(out, args.out)
    # Keep the clean original alongside so later evaluation has ground truth.
    data.write_dataset(dataset, os.path.join(args.out, "clean"))
    sidecar = {
        "attack": args.kind, "epsilon": config.epsilon, "seed": config.seed,
        "source": os.path.abspath(args.data), "surrogate": surrogate.model_id,
        "splits": splits,
    }
    with open(os.path.join(args.out, "attack.json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")
    print(f"wrote {args.out} ({args.kind} eps={config.epsilon:g} on {','.join(splits)})")
    return 0


def cmd_pbd_build(args, config):
    paths = [p.strip() for p in args.datasets.split(",") if p.strip()]
    datasets, dataset_paths = {}, {}
    for path in paths:
        ds = data.read_dataset(path, seed=config.seed)
        datasets[ds.name] = ds
        dataset_paths[ds.name] = os.path.relpath(path, os.path.dirname(os.path.abspath(args.out)))
    grids = None
    if not args.full_grid:
        grids = {a: [models.ModelSpec(a, {"lr": 0.1, "width": 16})] for a in models.ARCHITECTURES}
    pbd = pipeline.build_pbd(datasets, seed=config.seed, epsilon=config.epsilon,
                             percentile=config.percentile, grids=grids,
                             jobs=config.effective_jobs, dataset_paths=dataset_paths)
    pipeline.save_pbd(pbd, args.out)
    print(f"wrote {args.out}: {len(pbd.datasets)} datasets, {len(pbd.records)} records")
    return 0


def cmd_detect(args, config):
    dataset = data.read_dataset(args.data, seed=config.seed)
    fourier = detection.fit_detector("fourier", dataset.samples_train, config.percentile)
    wavelet = detection.fit_detector("wavelet", dataset.samples_train, config.percentile)
    report = detection.detect(fourier, wavelet, dataset.samples_val, config.threshold)
    rec = report.to_record()
    lines = [
        f"fourier_rate {rec['fourier_rate']:.4f}",
        f"wavelet_rate {rec['wavelet_rate']:.4f}",
        f"fused_rate   {rec['fused_rate']:.4f}",
        f"case         {rec['case']}",
    ]
    if rec["intensity"] is not None:
        lines.append(f"intensity    {rec['intensity']}")
    if rec["segment_verdicts"] is not None:
        lines.append("segments     " + ",".join(rec["segment_verdicts"]))
    print("\n".join(lines))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(rec, fh, indent=1)
            fh.write("\n")
    return 0


def cmd_classify_attack(args, config):
    dataset = data.read_dataset(args.data, seed=config.seed)
    pbd = pipeline.load_pbd(args.pbd)
    from .group_classifier import predict_group

    # The training split serves as the clean calibration reference.
    group, confidence = predict_group(pbd.group_classifier, dataset.samples_val,
                                      dataset.samples_train)
    print(f"group      {group}")
    print(f"confidence {confidence:.4f}")
    return 0


def cmd_select(args, config):
    exp = _experiment_from_args_select(args, config)
    pbd = pipeline.load_pbd(args.pbd)
    result = pipeline.run_pipeline(exp, pbd, config, evaluate=False)
    rec = result.to_record()
    print(f"case    {rec['case']}")
    print(f"chosen  {rec['chosen_dataset']}  (score {rec['similarity_score']:.4f})")
    print("top3    " + ", ".join(rec["top3"]))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(rec, fh, indent=1, sort_keys=True)
            fh.write("\n")
    return 0


def _experiment_from_args_select(args, config):
    dataset = data.read_dataset(args.data, seed=config.seed)
    return pipeline.IncomingExperiment(
        dataset=dataset,
        condition=pipeline.IncomingCondition("clean"),
        clean_test=list(dataset.samples_test),
    )


def cmd_run(args, config):
    exp = _experiment_from_args(args, config)
    pbd = pipeline.load_pbd(args.pbd)
    result = pipeline.run_pipeline(exp, pbd, config)
    rec = result.to_record()
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(rec, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(args.out + ".timing.json", "w", encoding="utf-8") as fh:
        json.dump(result.overhead_record(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(render_result(rec))
    print(f"wrote {args.out} (+ .timing.json)")
    return 0


def cmd_eval_baselines(args, config):
    exp = _experiment_from_args(args, config)
    pbd = pipeline.load_pbd(args.pbd)
    result = pipeline.evaluate_baselines_only(exp, pbd, config)
    name = "accuracy" if exp.condition.kind == "clean" else "asr"
    print(f"metric      {name}")
    for key in ("oracle", "random_mean", "worst"):
        print(f"{key:11s} {result[key]:.4f}")
    for mid, v in result["per_model"].items():
        print(f"  {mid:28s} {v:.4f}")
    return 0


def cmd_report(args, config):
    pbd = pipeline.load_pbd(args.pbd)
    print(render_pbd_table(pbd))
    return 0


def render_result(rec: dict) -> str:
    rows = [
        ("case", rec["case"]),
        ("chosen dataset", rec["chosen_dataset"]),
        ("top-3", ", ".join(rec["top3"])),
        ("winner", rec["winner"]),
        (f"winner {rec['metric_name']}", f"{rec['winner_metric']:.4f}"),
        ("oracle", f"{rec['baselines']['oracle']:.4f}"),
        ("random mean", f"{rec['baselines']['random_mean']:.4f}"),
        ("worst", f"{rec['baselines']['worst']:.4f}"),
    ]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def render_pbd_table(pbd) -> str:
    header = f"{'dataset':<12} {'model':<28} {'condition':<12} {'acc':>6} {'f1':>6} {'asr':>6}"
    lines = [header, "-" * len(header)]
    for r in sorted(pbd.records, key=lambda r: (r.dataset, r.model_id, r.condition)):
        lines.append(f"{r.dataset:<12} {r.model_id:<28} {r.condition:<12} "
                     f"{r.accuracy:>6.3f} {r.f1:>6.3f} {r.asr:>6.3f}")
    return "\n".join(lines)


COMMANDS = {
    "synth": cmd_synth,
    "attack": cmd_attack,
    "pbd-build": cmd_pbd_build,
    "detect": cmd_detect,
    "classify-attack": cmd_classify_attack,
    "select": cmd_select,
    "run": cmd_run,
    "eval-baselines": cmd_eval_baselines,
    "report": cmd_report,
}


def main(argv=None) -> int:
    _lazy_imports()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _merge_config(args)
        return COMMANDS[args.command](args, config)
    except (OSError, data.DatasetFormatError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
