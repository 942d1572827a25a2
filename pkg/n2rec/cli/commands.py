"""Command-line surface: preprocess, synth, train, evaluate, experiment, gradcheck"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from ..config.settings import MODEL_KINDS, JointConfig, PreprocessConfig, SettingsManager, as_dict
from ..core.errors import N2RecError
from ..core.evaluation import DEFAULT_KS, evaluate, format_record, format_table
from ..core.experiment import format_uplift, run_ab
from ..core.gradcheck import check_gru_gradients, check_jtll_gradients
from ..core.ingest import dataset_stats, load_canonical, load_mapping, parse_raw, preprocess, save_canonical, split
from ..core.joint import format_epoch_log, joint_train, write_epoch_log
from ..core.logger import get_logger, setup_logging
from ..core.snapshot import load_snapshot, save_snapshot
from ..core.synth import SynthConfig, generate, run_uplift

logger = get_logger('cli')


def _on_off(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("on", "true", "1", "yes"):
        return True
    if lowered in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got '{value}'")


def _k_list(value: str) -> List[int]:
    try:
        ks = [int(k) for k in value.split(",") if k.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{value}'")
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("cutoffs must be positive")
    return ks


def _seed_list(value: str) -> List[int]:
    try:
        seeds = [int(s) for s in value.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{value}'")
    if not seeds:
        raise argparse.ArgumentTypeError("need at least one seed")
    return seeds


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    """JointConfig flags; None means 'not given' so file and defaults apply"""
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--model", choices=MODEL_KINDS)
    p.add_argument("--dim", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--base-lr", dest="base_lr", type=float)
    p.add_argument("--jtll-lr", dest="jtll_lr", type=float)
    p.add_argument("--batch", dest="batch_size", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--negatives", type=int)
    p.add_argument("--tuple-multiplicity", dest="tuple_multiplicity", action="store_const", const=True)
    p.add_argument("--fixed-negatives", dest="fixed_negatives", action="store_const", const=True)


def _add_synth_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--users", dest="num_users", type=int, default=SynthConfig.num_users)
    p.add_argument("--pois", dest="num_pois", type=int, default=SynthConfig.num_pois)
    p.add_argument("--groups", dest="num_groups", type=int, default=SynthConfig.num_groups)
    p.add_argument("--epsilon", type=float, default=SynthConfig.epsilon)
    p.add_argument("--min-length", dest="min_length", type=int, default=SynthConfig.min_length)
    p.add_argument("--max-length", dest="max_length", type=int, default=SynthConfig.max_length)
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=PreprocessConfig.train_fraction)


def _synth_config(args: argparse.Namespace, seed: int) -> SynthConfig:
    return SynthConfig(
        num_users=args.num_users,
        num_pois=args.num_pois,
        num_groups=args.num_groups,
        epsilon=args.epsilon,
        min_length=args.min_length,
        max_length=args.max_length,
        seed=seed,
    )


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per operation"""
    parser = argparse.ArgumentParser(
        prog="n2rec",
        description="n2rec - Next New POI recommendation with joint triplet loss learning"
    )
    parser.add_argument("--debug", action="store_true", help="Enable debug mode with verbose logging")
    sub = parser.add_subparsers(dest="command", required=True)

    pre = sub.add_parser("preprocess", help="Filter and split a raw check-in dump")
    pre.add_argument("--in", dest="input", required=True, help="Raw check-in file")
    pre.add_argument("--mapping", required=True, help="Column mapping file or preset (gowalla, foursquare_nyc, foursquare_global)")
    pre.add_argument("--poi-table", dest="poi_table", help="Venue file with coordinates, for mappings that join one")
    pre.add_argument("--out", required=True, help="Canonical dataset output")
    pre.add_argument("--config", help="key=value config file")
    pre.add_argument("--min-visits", dest="min_visits", type=int)
    pre.add_argument("--max-visits", dest="max_visits", type=int)
    pre.add_argument("--min-users-per-poi", dest="min_users_per_poi", type=int)
    pre.add_argument("--train-fraction", dest="train_fraction", type=float)

    syn = sub.add_parser("synth", help="Generate a synthetic grouped dataset")
    syn.add_argument("--out", required=True, help="Canonical dataset output")
    _add_synth_flags(syn)
    syn.add_argument("--seed", type=int, default=SynthConfig.seed)

    tr = sub.add_parser("train", help="Jointly train a base model with JTLL")
    tr.add_argument("--in", dest="input", required=True, help="Canonical dataset")
    tr.add_argument("--out", required=True, help="Model snapshot output")
    tr.add_argument("--log", help="Epoch log TSV output (stdout when omitted)")
    _add_training_flags(tr)
    tr.add_argument("--jtll", dest="jtll_enabled", type=_on_off, metavar="{on,off}")
    tr.add_argument("--seed", type=int)

    ev = sub.add_parser("evaluate", help="Compute N2-Acc@K and N2-MRR")
    ev.add_argument("--in", dest="input", required=True, help="Canonical dataset")
    ev.add_argument("--snapshot", required=True, help="Model snapshot")
    ev.add_argument("--k-list", dest="k_list", type=_k_list, default=list(DEFAULT_KS))
    ev.add_argument("--name", help="Dataset label for the report record (default: file stem)")

    ex = sub.add_parser("experiment", help="Multi-seed A/B of a base model with and without JTLL")
    ex.add_argument("--in", dest="input", help="Canonical dataset (default: a synthetic dataset per seed)")
    ex.add_argument("--seeds", type=_seed_list, default=[0, 1, 2, 3, 4], help="Comma-separated seeds")
    ex.add_argument("--k-list", dest="k_list", type=_k_list, default=list(DEFAULT_KS))
    ex.add_argument("--compare-k", dest="compare_k", type=int, default=5, help="Cutoff of the compared N2-Acc@K")
    _add_training_flags(ex)
    _add_synth_flags(ex)

    gc = sub.add_parser("gradcheck", help="Finite-difference checks of analytic gradients")
    gc.add_argument("--seed", type=int, default=7)
    gc.add_argument("--instances", type=int, default=100)

    return parser


def cmd_preprocess(args: argparse.Namespace) -> int:
    config = SettingsManager(args.config).resolve(vars(args), PreprocessConfig)
    logger.info(f"Resolved config: {as_dict(config)}")

    mapping = load_mapping(args.mapping)
    if args.poi_table:
        mapping = replace(mapping, poi_table=args.poi_table)
    parsed = parse_raw(Path(args.input), mapping)
    dataset = preprocess(parsed.records, config.min_visits, config.max_visits, config.min_users_per_poi)
    dataset = split(dataset, config.train_fraction)
    save_canonical(dataset, Path(args.out))

    stats = dataset_stats(dataset)
    print(stats.summary())
    print(f"skipped={parsed.skipped} train_visits={stats.train_visits} test_visits={stats.test_visits} "
          f"sparsity={stats.sparsity:.6f}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    config = _synth_config(args, args.seed)
    logger.info(f"Resolved config: {as_dict(config)} train_fraction={args.train_fraction}")

    dataset = split(generate(config), args.train_fraction)
    save_canonical(dataset, Path(args.out))
    stats = dataset_stats(dataset)
    print(stats.summary())
    print(f"sparsity={stats.sparsity:.6f}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = SettingsManager(args.config).resolve(vars(args), JointConfig)
    logger.info(f"Resolved config: {as_dict(config)}")

    dataset = load_canonical(Path(args.input))
    if not dataset.is_split:
        raise N2RecError(f"{args.input} has no train/test split")

    result = joint_train(dataset, config)
    save_snapshot(Path(args.out), result.model, result.params, {
        "jtll": "on" if config.jtll_enabled else "off",
        "seed": str(config.seed),
        "epochs": str(config.epochs),
    })
    if args.log:
        write_epoch_log(result.log, Path(args.log))
    else:
        sys.stdout.write(format_epoch_log(result.log))
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    logger.info(f"Resolved config: dataset={args.input} snapshot={args.snapshot} k_list={args.k_list}")
    dataset = load_canonical(Path(args.input))
    model, params, meta = load_snapshot(Path(args.snapshot))
    params.validate(dataset.num_users, dataset.num_pois)

    report = evaluate(model, params, dataset, ks=args.k_list)
    print(format_table(report))
    print(format_record(
        report,
        dataset=args.name or Path(args.input).stem,
        model=model.kind,
        jtll=meta.get("jtll", "off") == "on",
        seed=int(meta.get("seed", 0)),
    ))
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    config = SettingsManager(args.config).resolve(vars(args), JointConfig)
    logger.info(f"Resolved config: {as_dict(config)} seeds={args.seeds} compare_k={args.compare_k}")

    if args.input:
        dataset = load_canonical(Path(args.input))
        if not dataset.is_split:
            raise N2RecError(f"{args.input} has no train/test split")
        result = run_ab(lambda seed: dataset, config, args.seeds, ks=args.k_list, k=args.compare_k)
    else:
        synth = _synth_config(args, args.seeds[0])
        result = run_uplift(synth, config, args.seeds, train_fraction=args.train_fraction,
                            k=args.compare_k, ks=args.k_list)
    print(format_uplift(result, config.model))
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    logger.info(f"Resolved config: seed={args.seed} instances={args.instances}")
    rng = np.random.default_rng(args.seed)
    results = [check_jtll_gradients(rng, args.instances), check_gru_gradients(rng)]
    for result in results:
        print(f"{result.name}\tmax_rel_err={result.max_rel_err:.3e}\ttolerance={result.tolerance:.0e}\t"
              f"{'ok' if result.passed else 'FAIL'}")
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {
    "preprocess": cmd_preprocess,
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
    "gradcheck": cmd_gradcheck,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments and dispatch to a subcommand

    Args:
        argv: Arguments without the program name (sys.argv[1:] when None)

    Returns:
        Exit code: 0 success, 1 runtime error, 2 usage error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(debug=args.debug)
    try:
        return COMMANDS[args.command](args)
    except (N2RecError, OSError, ValueError) as e:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1
