import argparse
import json
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

from app.config.settings import settings
from app.engine.alignnet import map_embeddings
from app.engine.numerics import RngStream, make_rng
from app.model import (
    ConfigError,
    ConseConfig,
    ConsistencyReport,
    ErrorCode,
    ErrorContract,
    EszslConfig,
    HubSet,
    ParseError,
    RunConfig,
    SynthConfig,
    TrainConfig,
    VaweError,
    VisualSignatureTable,
)
from app.service import dataio
from app.service.miner import mine_triplets
from app.service.neighborhood import detect_hubs, visual_signatures
from app.service.pipeline_service import (
    PipelineService,
    WorkdirLayout,
    consistency_rows,
    write_synthetic,
)
from app.service.trainer import AlignTrainer, initial_structures
from app.service.zsl_service import run_zsl
from app.utils.logger import logger


SYNTH_FIELDS = (
    "num_classes", "images_per_class", "visual_dim", "semantic_dim",
    "noise_sigma", "discrepancy_rho", "num_unseen",
)
TRAIN_FIELDS = (
    "k1", "k2", "alpha", "lam", "out_dim", "hidden", "lr", "momentum", "batch_size",
    "max_epochs", "patience", "min_delta", "norm_eps", "recompute_ns_per_epoch", "hub_correction",
)


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors follow the single-line error contract."""

    def error(self, message: str):
        _emit_error(ErrorContract.usage(message))
        raise SystemExit(ErrorContract.exit_code(ErrorCode.USAGE_ERROR))


# ========== Helper Functions ==========

def _emit_error(payload: dict):
    print(json.dumps(payload, separators=(",", ":"), default=str), file=sys.stderr)


def _emit_json(payload: dict | str):
    """Reports go to stdout; logs never do."""
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=2)
    sys.stdout.write(text + "\n")


def _given(args: argparse.Namespace, fields: Sequence[str], rename: Optional[dict] = None) -> dict:
    """Config fields whose flags were set on the command line."""
    rename = rename or {}
    values = {}
    for field in fields:
        value = getattr(args, rename.get(field, field), None)
        if value is not None:
            values[field] = tuple(value) if isinstance(value, list) else value
    return values


def _synth_config(args: argparse.Namespace) -> SynthConfig:
    return SynthConfig(seed=args.seed, **_given(args, SYNTH_FIELDS))


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(seed=args.seed, **_given(args, TRAIN_FIELDS))


def _eszsl_config(args: argparse.Namespace) -> EszslConfig:
    return EszslConfig(**_given(args, ("gamma", "lam", "encoding"), {"lam": "eszsl_lam"}))


def _conse_config(args: argparse.Namespace) -> ConseConfig:
    return ConseConfig(**_given(args, ("t_top", "temperature")))


def _band(values: Optional[list[float]]) -> Optional[tuple[float, float]]:
    if values is None:
        return None
    lo, hi = values
    if not 0 <= lo < hi:
        raise ConfigError(f"target consistency band must satisfy 0 <= lo < hi, got {lo}, {hi}")
    return lo, hi


def _load_signatures(args: argparse.Namespace, class_order: Optional[Sequence[str]] = None) -> VisualSignatureTable:
    """Signatures from --signatures, or class means of --features."""
    if args.signatures:
        table = dataio.load_signatures(args.signatures)
        return table.subset(class_order) if class_order is not None else table
    features = dataio.load_features(args.features)
    return visual_signatures(features, class_order if class_order is not None else features.classes())


# ========== Flags ==========

def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=settings.SEED, help="Seed of every random stream")
    common.add_argument("--verbose", action="store_true", help="Stream progress rows to stderr")
    return common


def _add_synth_flags(p: argparse.ArgumentParser):
    p.add_argument("--num-classes", type=int)
    p.add_argument("--images-per-class", type=int)
    p.add_argument("--visual-dim", type=int)
    p.add_argument("--semantic-dim", type=int)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--discrepancy-rho", type=float)
    p.add_argument("--num-unseen", type=int)
    p.add_argument(
        "--target-consistency", type=float, nargs=2, metavar=("LO", "HI"),
        help="Calibrate discrepancy-rho so raw consistency lands in [LO, HI]"
    )
    p.add_argument("--consistency-k", type=int, default=settings.K1)


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--k1", type=int)
    p.add_argument("--k2", type=int)
    p.add_argument("--alpha", type=float, help="Triplet margin")
    p.add_argument("--lam", "--lambda", dest="lam", type=float, help="Weight decay")
    p.add_argument("--out-dim", type=int)
    p.add_argument("--hidden", type=int, nargs=2, metavar=("H1", "H2"))
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--min-delta", type=float)
    p.add_argument("--norm-eps", type=float)
    p.add_argument("--recompute-ns-per-epoch", action="store_true", default=None)
    p.add_argument(
        "--no-hub-correction", dest="hub_correction", action="store_false", default=None,
        help="Mine with an empty hub set every epoch"
    )


def _add_zsl_flags(p: argparse.ArgumentParser):
    p.add_argument("--gamma", type=float, help="ESZSL feature-side regularizer")
    p.add_argument("--eszsl-lam", type=float, help="ESZSL embedding-side regularizer")
    p.add_argument("--encoding", choices=("pm1", "binary"), help="ESZSL label encoding")
    p.add_argument("--t-top", type=int, help="ConSE: seen classes combined per image")
    p.add_argument("--temperature", type=float, help="ConSE softmax temperature")


def _add_data_flags(p: argparse.ArgumentParser, required: bool = True):
    p.add_argument("--embeddings", required=required)
    p.add_argument("--features", required=required)
    p.add_argument("--split", required=required)


# ========== Commands ==========

def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _synth_config(args)
    band = _band(args.target_consistency)
    rho = dataio.calibrate_rho(cfg, args.consistency_k, band) if band else None

    out_dir = Path(args.out_dir)
    data = write_synthetic(cfg, out_dir, rho)
    layout = WorkdirLayout(out_dir)
    _emit_json({
        "schema_version": settings.REPORT_SCHEMA_VERSION,
        "config": cfg.model_dump(mode="json"),
        "discrepancy_rho": data.rho,
        "files": {
            "features": str(layout.features),
            "embeddings": str(layout.embeddings),
            "signatures": str(layout.signatures),
            "split": str(layout.split),
        },
    })
    return 0


def cmd_consistency(args: argparse.Namespace) -> int:
    signatures = _load_signatures(args)
    sources = [(path, dataio.load_embeddings(path)) for path in args.embeddings]
    rows = consistency_rows(sources, signatures, args.k)
    report = ConsistencyReport(num_classes=signatures.num_classes, rows=rows)
    _emit_json(report.model_dump_json(indent=2))
    return 0


def cmd_mine(args: argparse.Namespace) -> int:
    """Dump the triplets of one mining pass as "a p n" lines."""
    embeddings = dataio.load_embeddings(args.embeddings)
    order = embeddings.class_names
    if args.split:
        order, _ = dataio.load_split(args.split).ordered(order)
    semantic = embeddings.subset(order)
    signatures = _load_signatures(args, order)

    cfg = TrainConfig(seed=args.seed, **_given(args, ("k1", "k2", "norm_eps"))).resolved(
        semantic.num_classes, semantic.dim
    )
    nv_k1, nv_k2, ns_k1, ns_k2 = initial_structures(semantic, signatures, cfg.k1, cfg.k2)

    hubs = HubSet.empty(epoch=1)
    if args.checkpoint:
        params, _ = dataio.load_checkpoint(args.checkpoint)
        hubs = detect_hubs(map_embeddings(params, semantic, cfg.norm_eps), cfg.k1, epoch=1)

    batch = mine_triplets(nv_k1, nv_k2, ns_k1, ns_k2, hubs, make_rng(cfg.seed, RngStream.MINING), epoch=1)
    if args.names:
        lines = [f"{order[a]} {order[p]} {order[n]}" for a, p, n in batch.as_tuples()]
    else:
        lines = [f"{a} {p} {n}" for a, p, n in batch.as_tuples()]
    text = "".join(line + "\n" for line in lines)

    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    logger.info(f"Mined {len(batch)} triplets over {len(order)} classes ({len(hubs.members)} hubs)")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    embeddings = dataio.load_embeddings(args.embeddings)
    features = dataio.load_features(args.features)
    seen, _ = dataio.load_split(args.split).ordered(embeddings.class_names)

    trainer = AlignTrainer(_train_config(args))
    params, report = trainer.train(embeddings.subset(seen), visual_signatures(features, seen))

    layout = WorkdirLayout(Path(args.out_dir))
    layout.root.mkdir(parents=True, exist_ok=True)
    dataio.save_checkpoint(params, report.config, layout.checkpoint)
    dataio.save_checkpoint(trainer.last_params, report.config, layout.checkpoint_last)
    layout.train_report.write_text(report.to_jsonl(), encoding="utf-8")

    _emit_json({"schema_version": settings.REPORT_SCHEMA_VERSION, **report.summary()})
    return 0


def cmd_map(args: argparse.Namespace) -> int:
    params, cfg = dataio.load_checkpoint(args.checkpoint)
    mapped = map_embeddings(params, dataio.load_embeddings(args.embeddings), cfg.norm_eps)
    dataio.save_embeddings(mapped, args.out)
    _emit_json({"num_classes": mapped.num_classes, "dim": mapped.dim, "out": str(args.out)})
    return 0


def cmd_zsl_eval(args: argparse.Namespace) -> int:
    report = run_zsl(
        args.method,
        dataio.load_embeddings(args.embeddings),
        dataio.load_features(args.features),
        dataio.load_split(args.split),
        _eszsl_config(args),
        _conse_config(args),
    )
    _emit_json(report.model_dump_json(indent=2))
    return 0


def _replayed_config(path: str) -> RunConfig:
    """RunConfig embedded in an earlier pipeline report."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except UnicodeDecodeError:
        raise ParseError("report is not valid UTF-8", path=path) from None
    except json.JSONDecodeError as e:
        raise ParseError(f"report is not valid JSON: {e.msg}", path=path, line=e.lineno) from None
    if not isinstance(data, dict) or "run_config" not in data:
        raise ParseError("report has no run_config", path=path)
    return RunConfig.parse(data["run_config"])


def cmd_pipeline(args: argparse.Namespace) -> int:
    if args.replay:
        cfg = _replayed_config(args.replay)
    else:
        from_files = args.embeddings is not None or args.features is not None or args.split is not None
        cfg = RunConfig(
            seed=args.seed,
            workdir=args.workdir,
            embeddings=args.embeddings,
            features=args.features,
            split=args.split,
            synth=None if from_files else _synth_config(args),
            target_consistency=None if from_files else _band(args.target_consistency),
            consistency_k=args.consistency_k,
            methods=tuple(args.methods),
            train=_train_config(args),
            eszsl=_eszsl_config(args),
            conse=_conse_config(args),
        )

    report = PipelineService(cfg).run()
    _emit_json(report.model_dump_json(indent=2))
    return 0


# ========== Parser ==========

def build_parser() -> CliParser:
    common = _common_flags()
    parser = CliParser(prog="vawe", description=settings.APP_NAME)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="Generate a synthetic dataset")
    _add_synth_flags(p)
    p.add_argument("--out-dir", default=settings.WORKDIR)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("consistency", parents=[common], help="Visual/semantic neighborhood overlap")
    p.add_argument("--embeddings", nargs="+", required=True, help="One or more embedding files")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--signatures")
    source.add_argument("--features")
    p.add_argument("--k", type=int, nargs="+", default=[settings.K1])
    p.set_defaults(handler=cmd_consistency)

    p = sub.add_parser("mine", parents=[common], help="Print one epoch of mined triplets")
    p.add_argument("--embeddings", required=True)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--signatures")
    source.add_argument("--features")
    p.add_argument("--split", help="Restrict to the seen classes of this split")
    p.add_argument("--k1", type=int)
    p.add_argument("--k2", type=int)
    p.add_argument("--norm-eps", type=float)
    p.add_argument("--checkpoint", help="Remove hubs of this network's mapped space")
    p.add_argument("--names", action="store_true", help="Print class names instead of indices")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_mine)

    p = sub.add_parser("train", parents=[common], help="Train the mapping network on seen classes")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--out-dir", default=settings.WORKDIR)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("map", parents=[common], help="Map embeddings through a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_map)

    p = sub.add_parser("zsl-eval", parents=[common], help="Fit on seen classes, evaluate on unseen")
    p.add_argument("--method", choices=("eszsl", "conse"), required=True)
    _add_data_flags(p)
    _add_zsl_flags(p)
    p.set_defaults(handler=cmd_zsl_eval)

    p = sub.add_parser("pipeline", parents=[common], help="Run every stage and compare raw vs VAWE")
    _add_data_flags(p, required=False)
    _add_synth_flags(p)
    _add_train_flags(p)
    _add_zsl_flags(p)
    p.add_argument("--workdir", default=settings.WORKDIR)
    p.add_argument("--methods", nargs="+", choices=("eszsl", "conse"), default=["eszsl", "conse"])
    p.add_argument("--replay", metavar="REPORT", help="Re-run the config embedded in a pipeline report")
    p.set_defaults(handler=cmd_pipeline)

    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse, dispatch, and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    logger.set_verbose(args.verbose)
    handler: Callable[[argparse.Namespace], int] = args.handler

    try:
        return handler(args)
    except VaweError as e:
        logger.debug(f"{args.command} failed: {e.code.value}: {e.message}")
        _emit_error(ErrorContract.from_exception(e))
        return ErrorContract.exit_code(e.code)
    except OSError as e:
        _emit_error(ErrorContract.io_error(e))
        return ErrorContract.exit_code(ErrorCode.IO_ERROR)
