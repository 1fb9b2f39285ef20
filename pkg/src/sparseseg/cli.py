"""Command-line entry point: ``sparseseg {generate,train,eval,segment,compare-loss}``.

Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import checkpoint
from .pointcloud import CoarseLabel, DataError, FineLabel, read_dataset, write_dataset
from .segnet import ModelParams, NetConfig, predict
from .synthdata import GenConfig, generate_dataset
from .training import NumericalError, TrainConfig, compare_loss_curves, evaluate, train

log = logging.getLogger("sparseseg")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one width")
    return values


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    d = NetConfig()
    g = p.add_argument_group("network")
    g.add_argument("--point-dims", type=_int_list, default=d.point_feat_dims, help="point MLP widths (default 64,64,128)")
    g.add_argument("--global-dim", type=int, default=d.global_dim, help="global signature size (default 128)")
    g.add_argument("--hidden", type=int, default=d.lstm_hidden, help="LSTM hidden size (default 64)")
    g.add_argument("--head-dims", type=_int_list, default=d.head_dims, help="shared head widths (default 128,64)")
    g.add_argument("--global-rounds", type=int, default=d.global_rounds, help="pool-and-concat rounds (default 2)")


def _add_train_flags(p: argparse.ArgumentParser, epochs: int) -> None:
    d = TrainConfig()
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=epochs)
    g.add_argument("--lr", type=float, default=d.learning_rate)
    g.add_argument("--seed", type=int, default=d.seed)
    g.add_argument("--lambda-graph", type=float, default=d.lambda_graph)
    g.add_argument("--lambda-coarse", type=float, default=d.lambda_coarse)
    g.add_argument("--graph-a", type=float, default=d.graph_a, help="base of the graph loss exponent (default 1.1)")
    g.add_argument(
        "--graph-norm",
        choices=("per-point", "none"),
        default="per-point" if d.graph_per_point else "none",
        help="divide cut weights by the point count before the exponent",
    )
    g.add_argument("--optimizer", choices=("adam", "sgd"), default=d.optimizer)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparseseg", description="Human part segmentation on sparse point-cloud sequences.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    g = GenConfig()
    p = sub.add_parser("generate", help="write a synthetic walking dataset as CSV")
    p.add_argument("--frames", type=int, default=g.n_frames)
    p.add_argument("--subjects", type=int, default=1)
    p.add_argument("--points", type=int, default=g.points_per_frame)
    p.add_argument("--seed", type=int, default=g.seed)
    p.add_argument("--noise", type=float, default=g.noise_sigma, help="noise sigma in meters")
    p.add_argument("--dropout", type=float, default=g.part_dropout_prob, help="per-part dropout rate")
    p.add_argument("--gait-period", type=float, default=g.gait_period_frames, help="frames per gait cycle")
    p.add_argument("--out", required=True)
    p.add_argument("--dump-config", action="store_true", help="print the resolved configuration as JSON and exit")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history", help="optional per-epoch CSV (epoch,loss,train_acc)")
    _add_train_flags(p, TrainConfig().epochs)
    _add_model_flags(p)
    p.add_argument("--dump-config", action="store_true", help="print the resolved configuration as JSON and exit")

    p = sub.add_parser("eval", help="score a checkpoint on a labelled dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--json", action="store_true", help="emit the report as JSON")

    p = sub.add_parser("segment", help="write per-point predictions")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("compare-loss", help="train with and without the graph loss and plot accuracy curves")
    p.add_argument("--data", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--threshold", type=float, default=90.0, help="accuracy used to compare convergence speed")
    _add_train_flags(p, TrainConfig().epochs)
    _add_model_flags(p)
    p.add_argument("--dump-config", action="store_true", help="print the resolved configuration as JSON and exit")
    return parser


def _configs(args) -> tuple[NetConfig, TrainConfig]:
    try:
        net = NetConfig(
            point_feat_dims=args.point_dims,
            global_dim=args.global_dim,
            lstm_hidden=args.hidden,
            head_dims=args.head_dims,
            global_rounds=args.global_rounds,
        )
        cfg = TrainConfig(
            epochs=args.epochs,
            learning_rate=args.lr,
            seed=args.seed,
            lambda_coarse=args.lambda_coarse,
            lambda_graph=args.lambda_graph,
            graph_a=args.graph_a,
            graph_per_point=args.graph_norm == "per-point",
            optimizer=args.optimizer,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return net, cfg


def _dump(obj: dict) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _progress(every: int = 10):
    def report(epoch, loss, acc):
        if epoch == 1 or epoch % every == 0:
            log.info("epoch %4d  loss %.5f  train acc %6.2f", epoch, loss, acc)

    return report


def cmd_generate(args) -> int:
    try:
        cfg = GenConfig(
            n_frames=args.frames,
            points_per_frame=args.points,
            gait_period_frames=args.gait_period,
            noise_sigma=args.noise,
            part_dropout_prob=args.dropout,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.subjects < 1:
        raise UsageError("--subjects must be >= 1")
    if args.dump_config:
        _dump({"generate": {**cfg.__dict__, "n_subjects": args.subjects}})
        return EXIT_OK
    write_dataset(generate_dataset(cfg, args.subjects), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    net, cfg = _configs(args)
    if args.dump_config:
        _dump({"network": net.to_dict(), "training": cfg.to_dict()})
        return EXIT_OK
    data = read_dataset(args.data)
    params = ModelParams.init(net, seed=cfg.seed)
    trained, history = train(params, data, cfg, _progress())
    checkpoint.save(trained, args.out, meta={"training": cfg.to_dict()})
    if args.history:
        history.write_csv(args.history)
    log.info("final train accuracy %.2f", history.train_acc[-1])
    return EXIT_OK


def cmd_eval(args) -> int:
    params, _ = checkpoint.load(args.model)
    report = evaluate(params, read_dataset(args.data))
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(report.format_table())
    return EXIT_OK


def cmd_segment(args) -> int:
    params, _ = checkpoint.load(args.model)
    data = read_dataset(args.data)
    with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        # re-read the raw rows so the input columns are echoed untouched
        with Path(args.data).open("r", newline="", encoding="utf-8") as src:
            rows = csv.reader(src)
            header = next(rows)
            writer.writerow([*header, "pred_fine", "pred_coarse"])
            body = (r for r in rows if r)
            for seq in data:
                for fine, coarse in predict(params, seq):
                    for f, c in zip(fine.labels, coarse.labels):
                        writer.writerow([*next(body), FineLabel(int(f)).token, CoarseLabel(int(c)).token])
    return EXIT_OK


def cmd_compare_loss(args) -> int:
    net, cfg = _configs(args)
    if cfg.lambda_graph <= 0:
        raise UsageError("--lambda-graph must be positive for a comparison")
    if args.dump_config:
        _dump({"network": net.to_dict(), "training": cfg.to_dict()})
        return EXIT_OK
    data = read_dataset(args.data)
    params = ModelParams.init(net, seed=cfg.seed)
    result = compare_loss_curves(params, data, cfg, _progress())
    prefix = args.out_prefix
    result.write_csv(f"{prefix}.csv")
    result.write_svg(f"{prefix}.svg")
    summary = result.summary(args.threshold)
    Path(f"{prefix}.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(summary, indent=2))
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "segment": cmd_segment,
    "compare-loss": cmd_compare_loss,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sparseseg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, checkpoint.CheckpointError) as exc:
        print(f"sparseseg {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"sparseseg {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"sparseseg {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
