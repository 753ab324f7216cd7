"""Batch command-line interface.

Subcommands: synth-data, make-scribbles, split, train, evaluate, plot, sweep.
Exit codes: 0 success, 1 usage error, 2 runtime failure. Run directories live
under $SCRIBBLEGATE_RUNS (default "run")/<run_name>.
"""
import argparse
import csv
import os
import sys
from dataclasses import replace

import numpy as np

from . import datapipe, evaluation, scribblegen, synthdata
from .checkpoint import load_checkpoint, state_dict_from_arrays
from .config import load_config, parse_config
from .errors import ScribbleGateError
from .segmentor import Segmentor, SegmentorConfig
from .trainer import Trainer, predict_hard


class Parser(argparse.ArgumentParser):
    """argparse with the documented usage-error exit code (1, not 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write("%s: error: %s\n" % (self.prog, message))
        sys.exit(1)


def run_root():
    return os.environ.get("SCRIBBLEGATE_RUNS", "run")


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth_data(args):
    synthdata.generate_dataset(args.out, args.subjects, args.per_subject,
                               args.seed)
    print("wrote %d subjects x %d images under %s"
          % (args.subjects, args.per_subject, args.out))
    return 0


def cmd_make_scribbles(args):
    records = datapipe.load_index(args.root)
    rng = np.random.RandomState(args.seed)
    n_annotators = max(1, args.annotators)
    rows = []
    for rec in sorted(records, key=lambda r: r.image_path):
        if not rec.mask_path:
            rows.append(rec)
            continue
        labels = datapipe.load_labelmap(os.path.join(args.root, rec.mask_path))
        num_classes = int(labels.max()) + 1
        paths = []
        for a in range(n_annotators):
            scribble = scribblegen.synthesize_scribble_map(
                labels, num_classes, method=args.method, n_iter=args.iters,
                rng_seed=rng)
            rel = rec.mask_path.replace("masks", "scribbles", 1)
            if a > 0:
                stem, ext = os.path.splitext(rel)
                rel = "%s_a%d%s" % (stem, a + 1, ext)
            datapipe.save_labelmap_png(os.path.join(args.root, rel),
                                       scribble.labels)
            paths.append(rel)
        rec.scribble_paths = paths
        rows.append(rec)
    _save_index_multi(args.root, rows, n_annotators)
    print("scribbles (%s) written for %d images" % (args.method, len(rows)))
    return 0


def _save_index_multi(root, rows, n_annotators):
    header = ["subject_id", "split_hint", "image_path", "mask_path",
              "scribble_path"]
    header += ["scribble_path_%d" % (a + 1) for a in range(1, n_annotators)]
    with open(os.path.join(root, "index.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in rows:
            paths = list(r.scribble_paths) + [""] * n_annotators
            writer.writerow([r.subject_id, r.split_hint, r.image_path,
                             r.mask_path] + paths[:n_annotators])


def cmd_split(args):
    records = datapipe.load_index(args.root)
    fr = tuple(float(x) for x in args.fractions.split(","))
    split = datapipe.split_from_hints(records, args.seed)
    if split is None:
        subjects = sorted({r.subject_id for r in records})
        split = datapipe.split_dataset(subjects, fr, args.seed)
    lines = [(subj, group) for group, members in split.groups().items()
             for subj in members]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.writer(out)
    writer.writerow(["subject_id", "group"])
    for subj, group in sorted(lines):
        writer.writerow([subj, group])
    if args.out:
        out.close()
    return 0


def _load_config_or_usage(parser, path, overrides):
    if not os.path.exists(path):
        parser.error("config file not found: %s" % path)
    cfg = load_config(path)
    for item in overrides or []:
        cfg = parse_config(item, base=cfg)
    return cfg


def cmd_train(args, parser):
    cfg = _load_config_or_usage(parser, args.config, args.set)
    run_dir = os.path.join(run_root(), cfg.run_name)
    trainer = Trainer(cfg)
    trainer.run_training(run_dir)
    print("run %s: best validation dice %.4f after %d epochs"
          % (cfg.run_name, trainer.best_val_metric, trainer.epoch))
    print("metrics: %s" % os.path.join(run_dir, "metrics.csv"))
    return 0


def _resolve_split(records, cfg):
    split = datapipe.split_from_hints(records, cfg.split_seed)
    if split is None:
        subjects = sorted({r.subject_id for r in records})
        split = datapipe.split_dataset(
            subjects, (cfg.train_frac, cfg.val_frac, cfg.test_frac),
            cfg.split_seed)
    return split


def cmd_evaluate(args):
    ckpt = load_checkpoint(args.checkpoint)
    cfg = ckpt.config
    root = args.root or cfg.data_root
    seg = Segmentor(SegmentorConfig(cfg.depths, tuple(cfg.encoder_filters),
                                    cfg.num_classes, cfg.input_channels,
                                    cfg.use_gating, cfg.use_ads))
    seg.load_state_dict(state_dict_from_arrays(ckpt.seg_state))

    samples = datapipe.load_dataset(root, cfg.normalization, cfg.image_size)
    split = _resolve_split(datapipe.load_index(root), cfg)
    subjects = set(split.groups()[args.group])
    group = [samples[k] for k in sorted(samples)
             if samples[k].subject_id in subjects and samples[k].mask is not None]
    if not group:
        raise ScribbleGateError("no %s samples with masks under %s"
                                % (args.group, root))
    preds = predict_hard(seg, group, cfg.batch_size)
    records = [(s.id, preds[s.id],
                datapipe.mask_to_onehot(s.mask, cfg.num_classes))
               for s in group]
    report = evaluation.compute_report(records)

    os.makedirs(args.out, exist_ok=True)
    evaluation.write_report_csv(report, os.path.join(args.out, "report.csv"))
    evaluation.write_summary_csv(report, os.path.join(args.out, "summary.csv"))
    if args.metrics:
        plot_metrics(args.metrics, os.path.join(args.out, "curves.png"))
    print("multiclass dice %.4f +- %.4f over %d samples"
          % (report.aggregates["multiclass_dice_mean"],
             report.aggregates["multiclass_dice_std"], len(group)))
    return 0


def plot_metrics(metrics_csv, out_png):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(metrics_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ScribbleGateError("empty metrics log: %s" % metrics_csv)
    epochs = [int(r["epoch"]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for key in ("sup_loss", "adv_loss_g", "adv_loss_d"):
        ax1.plot(epochs, [float(r[key]) for r in rows], label=key)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend()
    ax2.plot(epochs, [float(r["val_dice"]) for r in rows], color="tab:green")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("validation dice")
    ax2.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)


def cmd_plot(args):
    plot_metrics(args.metrics, args.out)
    print("wrote %s" % args.out)
    return 0


def run_sweep(cfg, fractions, seeds, out_csv, samples=None, split=None):
    """Train once per (annotation fraction, seed); report val/test dice rows."""
    rows = []
    for fraction in sorted(fractions):
        for seed in seeds:
            name = "%s_f%s_s%d" % (cfg.run_name,
                                   ("%g" % fraction).replace(".", "p"), seed)
            run_cfg = replace(cfg, annotation_fraction=fraction,
                              seed_init=seed, seed_data=seed + 1,
                              seed_noise=seed + 2, run_name=name).validate()
            trainer = Trainer(run_cfg, samples=samples, split=split)
            trainer.run_training(os.path.join(run_root(), run_cfg.run_name))
            trainer.restore_best()
            test_dice = trainer.validate(trainer.test_samples) \
                if trainer.test_samples else float("nan")
            rows.append({"fraction": fraction, "seed": seed,
                         "val_dice": trainer.best_val_metric,
                         "test_dice": test_dice})
    if out_csv:
        with open(out_csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, ["fraction", "seed", "val_dice",
                                         "test_dice"])
            writer.writeheader()
            writer.writerows(rows)
    return rows


def cmd_sweep(args, parser):
    cfg = _load_config_or_usage(parser, args.config, args.set)
    fractions = [float(x) for x in args.fractions.split(",")]
    seeds = [int(x) for x in args.seeds.split(",")]
    out_csv = args.out or os.path.join(run_root(), "sweep.csv")
    os.makedirs(os.path.dirname(out_csv) or ".", exist_ok=True)
    rows = run_sweep(cfg, fractions, seeds, out_csv)
    for row in rows:
        print("fraction %.3g seed %d: val %.4f test %.4f"
              % (row["fraction"], row["seed"], row["val_dice"],
                 row["test_dice"]))
    print("sweep report: %s" % out_csv)
    return 0


# ---------------------------------------------------------------------------
# entry point

def build_parser():
    parser = Parser(prog="scribblegate",
                    description="Scribble-supervised segmentation toolkit")
    sub = parser.add_subparsers(dest="command", parser_class=Parser)

    p = sub.add_parser("synth-data", help="generate the synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--per-subject", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("make-scribbles", help="synthesize scribbles from masks")
    p.add_argument("--root", required=True)
    p.add_argument("--method", choices=("skeleton", "walk"), default="skeleton")
    p.add_argument("--iters", type=int, default=2500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--annotators", type=int, default=1)

    p = sub.add_parser("split", help="compute the subject split")
    p.add_argument("--root", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fractions", default="0.70,0.15,0.15")
    p.add_argument("--out", default=None)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY = VALUE",
                   help="override a config entry (repeatable)")

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a split group")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--root", default=None)
    p.add_argument("--group", choices=("validation", "test", "seg_train",
                                       "disc_train"), default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--metrics", default=None,
                   help="also plot curves.png from this metrics.csv")

    p = sub.add_parser("plot", help="plot loss/dice curves from metrics.csv")
    p.add_argument("metrics")
    p.add_argument("--out", default="curves.png")

    p = sub.add_parser("sweep", help="annotation-fraction sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--fractions", default="0.05,0.125,0.25,0.5,1.0")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out", default=None)
    p.add_argument("--set", action="append")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.error("a subcommand is required")
    try:
        if args.command == "synth-data":
            return cmd_synth_data(args)
        if args.command == "make-scribbles":
            return cmd_make_scribbles(args)
        if args.command == "split":
            return cmd_split(args)
        if args.command == "train":
            return cmd_train(args, parser)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        if args.command == "plot":
            return cmd_plot(args)
        if args.command == "sweep":
            return cmd_sweep(args, parser)
        parser.error("unknown command %r" % args.command)
    except ScribbleGateError as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 2
    except (OSError, KeyboardInterrupt) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
