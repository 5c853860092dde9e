"""
Command line entry point.

Every subcommand resolves its options from built-in defaults, ROTCLOUD_*
settings, an optional ``--config`` JSON file and explicit flags (in rising
precedence), echoes the result to ``config.resolved.json`` in its output
directory and then runs one pipeline stage.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Type

from loguru import logger
from pydantic import BaseModel, ValidationError

from . import __version__, dirset
from .config import (
    ENV_FALLBACKS,
    DirsOptions,
    EvalRotationOptions,
    ExtractOptions,
    GenDataOptions,
    IngestOptions,
    KeypointOptions,
    KeypointSweepOptions,
    PCKOptions,
    PlotOptions,
    PretrainOptions,
    Settings,
    SVMConfig,
    SVMOptions,
    SweepOptions,
    get_settings,
)
from .downstream import (
    FeatureMatrix,
    concat_features,
    extract_dataset_features,
    label_efficiency_sweep,
    model_label_efficiency_sweep,
    train_svm,
)
from .encoder import EncoderModel
from .errors import RotcloudError, UsageError
from .keypoint import DEFAULT_THRESHOLDS, evaluate_pck, finetune_keypoints, keypoint_label_sweep, sweep_frame
from .log import setup_logging
from .pcdata import ShapeVariation, generate_dataset, ingest, load_split
from .plotting import PlotKind, plot_curves
from .pretrain import evaluate_pretext, train_pretext
from .schemas import Split, TrainingLog
from .utils import load_json, save_json, write_csv

PROG = "rotcloud"
RESOLVED_CONFIG = "config.resolved.json"
LOG_LEVELS = ["TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"]
ALL_CATEGORIES = "all"

# Namespace entries that are not command options
_PARSER_ONLY = {"command", "config", "log_level"}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.format_usage().rstrip()}\n{self.prog}: error: {message}")


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


# ---------------------------------------------------------------------------
# Argument groups shared by several subcommands
# ---------------------------------------------------------------------------


def _add_fit_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, help="Training epochs")
    p.add_argument("--batch-size", type=int, help="Samples per gradient step")
    p.add_argument("--lr", dest="learning_rate", type=float, help="Learning rate")
    p.add_argument("--optimizer", choices=["sgd", "adam"])
    p.add_argument("--seed", type=int, help="Seed (falls back to ROTCLOUD_SEED)")
    p.add_argument("--holdout", dest="holdout_fraction", type=float, help="Held-out fraction of the training split")
    p.add_argument("--widths", type=_int_list, help="Per-point layer widths, e.g. 64,128,256")
    p.add_argument("--head-hidden", type=int, help="Hidden width of the head")


def _add_points(p: argparse.ArgumentParser) -> None:
    p.add_argument("--points", type=int, help="Points sampled from mesh entries")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _args_gen_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="Output dataset directory")
    p.add_argument("--categories", type=int, help="Number of shape categories (1-8)")
    p.add_argument("--train", type=int, help="Training clouds per category")
    p.add_argument("--test", type=int, help="Test clouds per category")
    p.add_argument("--points", type=int, help="Points per cloud")
    p.add_argument("--seed", type=int)
    p.add_argument("--stretch", type=float, help="Largest per-axis stretch, as a fraction (0 disables)")
    p.add_argument("--occlusion", type=float, help="Largest fraction cut from one side (0 disables)")


def _run_gen_data(opts: GenDataOptions) -> None:
    train, test = generate_dataset(
        opts.out,
        opts.categories,
        opts.train,
        opts.test,
        opts.points,
        opts.seed,
        opts.threads,
        ShapeVariation(stretch=opts.stretch, occlusion=opts.occlusion),
    )
    print(f"train={len(train.entries)} test={len(test.entries)}")


def _args_ingest(p: argparse.ArgumentParser) -> None:
    p.add_argument("--root", help="Mesh tree laid out as ROOT/<category>/{train,test}/*.off|*.obj")
    p.add_argument("--out", help="Output dataset directory")
    p.add_argument("--points", type=int, help="Points sampled per mesh")
    p.add_argument("--seed", type=int)


def _run_ingest(opts: IngestOptions) -> None:
    train, test = ingest(opts.root, opts.out, opts.points, opts.seed, opts.threads)
    print(f"train={len(train.entries)} test={len(test.entries)} categories={len(train.categories or [])}")


def _log_path(out: str, log: Optional[str]) -> Path:
    if log:
        return Path(log)
    out = Path(out)
    return out.with_name(f"{out.stem}.log.csv")


def _report_final(log: TrainingLog) -> None:
    if log.records:
        print(f"{log.metric_name}={log.records[-1].metric:.6f}")


def _args_pretrain(p: argparse.ArgumentParser) -> None:
    p.add_argument("--task", choices=["classify", "axisangle", "sixd"])
    p.add_argument("--k", type=int, help="Number of rotation classes for --task classify")
    p.add_argument("--up-axis", help="Canonical up axis, e.g. y or -z (falls back to ROTCLOUD_UP_AXIS)")
    p.add_argument("--jitter", type=float, help="Gaussian point jitter applied before rotating")
    p.add_argument("--data", help="Dataset directory (the train split is used)")
    p.add_argument("--out", help="Output weights file")
    p.add_argument("--log", help="Training log CSV (default: <out stem>.log.csv)")
    _add_fit_args(p)
    _add_points(p)


def _run_pretrain(opts: PretrainOptions) -> None:
    dataset = load_split(opts.data, Split.TRAIN, opts.threads, opts.points)
    model, log = train_pretext(dataset, opts)
    model.save(opts.out)
    log.to_csv(_log_path(opts.out, opts.log))
    logger.info(f"Saved {opts.task.value} model to {opts.out}")
    _report_final(log)


def _args_eval_rotation(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="Pretext weights file")
    p.add_argument("--data", help="Dataset directory")
    p.add_argument("--split", choices=["train", "test"])
    p.add_argument("--seed", type=int, help="Seed of the evaluation rotations")
    p.add_argument("--all-directions", action="store_true", help="Score every cloud under all K rotations")
    p.add_argument("--out-dir", help="Where config.resolved.json is written")
    _add_points(p)


def _run_eval_rotation(opts: EvalRotationOptions) -> None:
    model = EncoderModel.load(opts.model)
    dataset = load_split(opts.data, opts.split, opts.threads, opts.points)
    name, value = evaluate_pretext(model, dataset.clouds, opts.seed, opts.all_directions, opts.threads)
    print(f"{name}={value:.6f}")


def _args_dirs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, help="Number of directions")
    p.add_argument("--out", help="Output CSV (index,x,y,z)")


def _run_dirs(opts: DirsOptions) -> None:
    ds = dirset.build_direction_set(opts.k)
    dirset.save_csv(ds, opts.out)
    print(f"k={ds.k} scheme={ds.scheme.value} min_angle={dirset.min_pairwise_angle(ds.dirs):.6f}")


def _args_extract(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="Weights file")
    p.add_argument("--data", help="Dataset directory")
    p.add_argument("--split", choices=["train", "test"])
    p.add_argument("--out", help="Output feature CSV (label,f0,f1,...)")
    _add_points(p)


def _run_extract(opts: ExtractOptions) -> None:
    model = EncoderModel.load(opts.model)
    dataset = load_split(opts.data, opts.split, opts.threads, opts.points)
    features = extract_dataset_features(model, dataset, opts.threads, source=Path(opts.model).stem)
    features.save_csv(opts.out)
    print(f"rows={len(features)} dim={features.dim}")


def _add_svm_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, help="L2 regularization strength")
    p.add_argument("--iters", type=int, help="Gradient descent iterations")


def _args_svm(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train", help="Training feature CSV")
    p.add_argument("--test", help="Test feature CSV")
    p.add_argument("--train2", help="Second training CSV, concatenated column-wise")
    p.add_argument("--test2", help="Second test CSV, concatenated column-wise")
    p.add_argument("--out-dir", help="Where config.resolved.json is written")
    _add_svm_args(p)


def _run_svm(opts: SVMOptions) -> None:
    train = FeatureMatrix.load_csv(opts.train)
    test = FeatureMatrix.load_csv(opts.test)
    if opts.train2 is not None:
        train = concat_features(train, FeatureMatrix.load_csv(opts.train2))
        test = concat_features(test, FeatureMatrix.load_csv(opts.test2))
    svm = train_svm(train, lam=opts.lam, iters=opts.iters)
    print(f"accuracy={svm.accuracy(test):.6f}")


def _args_sweep(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train", help="Training feature CSV")
    p.add_argument("--test", help="Test feature CSV")
    p.add_argument("--model", help="Weights file (alternative to feature CSVs)")
    p.add_argument("--data", help="Dataset directory used with --model")
    p.add_argument("--fractions", type=_float_list, help="Comma-separated training fractions in (0, 1]")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="Output CSV (fraction,accuracy)")
    _add_svm_args(p)
    _add_points(p)


def _run_sweep(opts: SweepOptions) -> None:
    svm = SVMConfig(lam=opts.lam, iters=opts.iters)
    if opts.train is not None:
        frame = label_efficiency_sweep(
            FeatureMatrix.load_csv(opts.train), FeatureMatrix.load_csv(opts.test), opts.fractions, opts.seed, svm
        )
    else:
        model = EncoderModel.load(opts.model)
        train = load_split(opts.data, Split.TRAIN, opts.threads, opts.points)
        test = load_split(opts.data, Split.TEST, opts.threads, opts.points)
        frame = model_label_efficiency_sweep(model, train, test, opts.fractions, opts.seed, svm, opts.threads)
    write_csv(frame, opts.out)
    for row in frame.itertuples(index=False):
        print(f"fraction={row.fraction:g} accuracy={row.accuracy:.6f}")


def _args_keypoints(p: argparse.ArgumentParser) -> None:
    p.add_argument("--init", help="Pretrained weights whose backbone is fine-tuned (omit for random init)")
    p.add_argument("--data", help="Dataset directory with keypoint sidecars")
    p.add_argument("--category", help="Category to train on, or 'all'")
    p.add_argument("--out", help="Output weights file")
    p.add_argument("--log", help="Training log CSV (default: <out stem>.log.csv)")
    _add_fit_args(p)
    _add_points(p)


def _keypoint_config(opts):
    if opts.category == ALL_CATEGORIES:
        return opts.model_copy(update={"category": None})
    return opts


def _load_init(path: Optional[str]) -> Optional[EncoderModel]:
    return EncoderModel.load(path) if path else None


def _run_keypoints(opts: KeypointOptions) -> None:
    dataset = load_split(opts.data, Split.TRAIN, opts.threads, opts.points)
    model, log = finetune_keypoints(_load_init(opts.init), dataset, _keypoint_config(opts))
    model.save(opts.out)
    log.to_csv(_log_path(opts.out, opts.log))
    _report_final(log)


def _args_pck(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="Keypoint weights file")
    p.add_argument("--data", help="Dataset directory with keypoint sidecars")
    p.add_argument("--split", choices=["train", "test"])
    p.add_argument("--snap", action="store_true", help="Snap predictions to the nearest cloud point")
    p.add_argument("--category", help="Category to score, or 'all' (default: the model's category)")
    p.add_argument("--thresholds", type=_float_list, help="Comma-separated ascending thresholds")
    p.add_argument("--out", help="Output CSV (threshold,value)")
    _add_points(p)


def _run_pck(opts: PCKOptions) -> None:
    model = EncoderModel.load(opts.model)
    dataset = load_split(opts.data, opts.split, opts.threads, opts.points)
    category = opts.category if opts.category is not None else model.metadata.get("category")
    if category == ALL_CATEGORIES:
        category = None
    thresholds = opts.thresholds if opts.thresholds is not None else DEFAULT_THRESHOLDS
    curve = evaluate_pck(model, dataset, thresholds, opts.snap, category, opts.threads)
    curve.save_csv(opts.out)
    print(f"mean_pck={float(curve.values.mean()):.6f}")


def _args_kp_sweep(p: argparse.ArgumentParser) -> None:
    p.add_argument("--init", help="Pretrained weights (omit for random init)")
    p.add_argument("--data", help="Dataset directory with keypoint sidecars")
    p.add_argument("--category", help="Category to train on, or 'all'")
    p.add_argument("--fractions", type=_float_list, help="Comma-separated training fractions in (0, 1]")
    p.add_argument("--snap", action="store_true")
    p.add_argument("--out", help="Combined output CSV (fraction,threshold,value)")
    _add_fit_args(p)
    _add_points(p)


def _run_kp_sweep(opts: KeypointSweepOptions) -> None:
    config = _keypoint_config(opts)
    train = load_split(opts.data, Split.TRAIN, opts.threads, opts.points)
    test = load_split(opts.data, Split.TEST, opts.threads, opts.points)
    curves = keypoint_label_sweep(_load_init(opts.init), train, test, opts.fractions, config, snap=opts.snap)
    out = Path(opts.out)
    write_csv(sweep_frame(curves), out)
    for fraction, curve in curves.items():
        curve.save_csv(out.with_name(f"{out.stem}.f{fraction:g}.csv"))
        print(f"fraction={fraction:g} mean_pck={float(curve.values.mean()):.6f}")


def _args_plot(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=[k.value for k in PlotKind])
    p.add_argument("--inputs", nargs="+", help="Curve CSVs, one series each")
    p.add_argument("--out", help="Output SVG")
    p.add_argument("--title")


def _run_plot(opts: PlotOptions) -> None:
    print(plot_curves(opts.inputs, PlotKind(opts.kind), opts.out, opts.title))


class Command(NamedTuple):
    options: Type[BaseModel]
    add_arguments: Callable[[argparse.ArgumentParser], None]
    run: Callable[[BaseModel], None]
    output_dir: Callable[[BaseModel], Path]
    help: str


def _out_dir(opts) -> Path:
    return Path(opts.out)


def _out_parent(opts) -> Path:
    return Path(opts.out).parent


def _explicit_dir(opts) -> Path:
    return Path(opts.out_dir)


COMMANDS: Dict[str, Command] = {
    "gen-data": Command(GenDataOptions, _args_gen_data, _run_gen_data, _out_dir, "Generate the synthetic shape dataset"),
    "ingest": Command(IngestOptions, _args_ingest, _run_ingest, _out_dir, "Convert a mesh tree into a dataset"),
    "pretrain": Command(PretrainOptions, _args_pretrain, _run_pretrain, _out_parent, "Train a rotation pretext model"),
    "eval-rotation": Command(
        EvalRotationOptions, _args_eval_rotation, _run_eval_rotation, _explicit_dir, "Score a pretext model"
    ),
    "dirs": Command(DirsOptions, _args_dirs, _run_dirs, _out_parent, "Write a direction set as CSV"),
    "extract": Command(ExtractOptions, _args_extract, _run_extract, _out_parent, "Extract frozen global features"),
    "svm": Command(SVMOptions, _args_svm, _run_svm, _explicit_dir, "Fit and score a linear SVM on features"),
    "sweep": Command(SweepOptions, _args_sweep, _run_sweep, _out_parent, "Label-efficiency sweep of the SVM"),
    "keypoints": Command(KeypointOptions, _args_keypoints, _run_keypoints, _out_parent, "Fine-tune a keypoint head"),
    "pck": Command(PCKOptions, _args_pck, _run_pck, _out_parent, "PCK curve of a keypoint model"),
    "kp-sweep": Command(
        KeypointSweepOptions, _args_kp_sweep, _run_kp_sweep, _out_parent, "Keypoint PCK across training fractions"
    ),
    "plot": Command(PlotOptions, _args_plot, _run_plot, _out_parent, "Render curve CSVs as an SVG plot"),
}


def build_parser(settings: Optional[Settings] = None) -> Dict[str, argparse.ArgumentParser]:
    """The top-level parser under key "" and one parser per subcommand."""
    settings = settings or get_settings()
    parser = _Parser(prog=PROG, description="Rotation-prediction pretraining for point clouds")
    parser.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    parser.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS, default=settings.LOG_LEVEL.upper())
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    parsers = {"": parser}
    for name, command in COMMANDS.items():
        p = sub.add_parser(name, help=command.help, description=command.help, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file of option values; flags take precedence")
        p.add_argument("--threads", type=int, help="Worker threads (falls back to ROTCLOUD_THREADS)")
        command.add_arguments(p)
        parsers[name] = p
    return parsers


def _validation_message(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        where = ".".join(str(part) for part in err["loc"])
        parts.append(f"{where}: {err['msg']}" if where else err["msg"])
    return "; ".join(parts)


def resolve_options(name: str, args: argparse.Namespace, settings: Settings) -> BaseModel:
    """Merge defaults, settings, the config file and explicit flags into a validated options model."""
    command = COMMANDS[name]
    fields = command.options.model_fields
    values = {}
    for field, env_name in ENV_FALLBACKS.items():
        if field in fields and env_name in settings.model_fields_set:
            values[field] = getattr(settings, env_name)

    config_path = getattr(args, "config", None)
    if config_path:
        from_file = load_json(config_path)
        if not isinstance(from_file, dict):
            raise UsageError(f"{config_path}: config file must hold a JSON object")
        file_command = from_file.pop("command", name)
        if file_command != name:
            raise UsageError(f"{config_path}: config was written for {file_command!r}, not {name!r}")
        values.update(from_file)

    values.update({k: v for k, v in vars(args).items() if k not in _PARSER_ONLY})
    try:
        return command.options(**values)
    except ValidationError as e:
        raise UsageError(f"invalid options for {name}: {_validation_message(e)}")


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        settings = get_settings()
    except ValidationError as e:
        print(f"{PROG}: error: invalid ROTCLOUD_* environment: {_validation_message(e)}", file=sys.stderr)
        return 1

    parsers = build_parser(settings)
    args = None
    try:
        args = parsers[""].parse_args(argv)
        setup_logging(args.log_level)
        options = resolve_options(args.command, args, settings)
        command = COMMANDS[args.command]
        save_json({"command": args.command, **options.model_dump(mode="json")}, command.output_dir(options) / RESOLVED_CONFIG)
        logger.debug(f"{args.command} options: {options.model_dump(mode='json')}")
        command.run(options)
    except UsageError as e:
        message = str(e)
        if args is not None and "usage:" not in message:
            message = f"{parsers[args.command].format_usage().rstrip()}\n{PROG} {args.command}: error: {message}"
        print(message, file=sys.stderr)
        return 1
    except SystemExit as e:
        # --help and --version
        return e.code if isinstance(e.code, int) else 0
    except (RotcloudError, OSError, ValueError) as e:
        logger.opt(exception=e).debug("command failed")
        print(f"{PROG}: error: {e}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(dispatch())
