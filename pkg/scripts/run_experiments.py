# run_experiments.py
"""
Trend experiments on the synthetic benchmark.

Writes one CSV per experiment into --out-dir:
  table1.csv / table1_seeds.csv   pretext accuracy versus K
  transfer.csv                    SVM accuracy of pretrained versus random-init features
  concat.csv                      SVM accuracy of concatenated features from two pretext tasks
  ktransfer.csv                   SVM accuracy of features pretrained with different K
  sweep_pretrained.csv / sweep_random.csv   label-efficiency curves
  pck_pretrained.csv / pck_random.csv       keypoint PCK curves
  regressors.csv                  geodesic error of axis-angle versus 6D regression, same budget
  kp_sweep_pretrained.csv / kp_sweep_random.csv   keypoint PCK across labelled fractions
  ce_anchor.csv                   first-batch cross-entropy against ln K
and renders the matching SVG plots.
"""
import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src"))

from rotcloud.autodiff import ops  # noqa: E402
from rotcloud.config import KeypointConfig, PretextTask, SVMConfig, TrainConfig  # noqa: E402
from rotcloud.dirset import build_direction_set, rotations_for  # noqa: E402
from rotcloud.downstream import (  # noqa: E402
    concat_features,
    extract_dataset_features,
    label_efficiency_sweep,
    train_svm,
)
from rotcloud.encoder import HeadSpec, build_model  # noqa: E402
from rotcloud.keypoint import evaluate_pck, finetune_keypoints, keypoint_label_sweep, sweep_frame  # noqa: E402
from rotcloud.log import setup_logging  # noqa: E402
from rotcloud.pcdata import ShapeVariation, generate_dataset, load_split  # noqa: E402
from rotcloud.plotting import PlotKind, plot_curves  # noqa: E402
from rotcloud.pretrain import (  # noqa: E402
    evaluate_geodesic_error,
    evaluate_rotation_accuracy,
    make_classification_sample,
    train_pretext,
)
from rotcloud.schemas import Split  # noqa: E402
from rotcloud.so3 import geodesic_baseline  # noqa: E402
from rotcloud.utils import make_rng, write_csv  # noqa: E402

SWEEP_FRACTIONS = [0.1, 0.25, 0.5, 1.0]
KP_FRACTIONS = [0.25, 1.0]


def _csv_list(cast):
    return lambda text: [cast(part) for part in text.split(",") if part.strip()]


class Experiments:
    """Caches datasets and pretrained models across the experiments of one run."""

    def __init__(self, args):
        self.args = args
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        data_dir = self.out_dir / "data"
        if not (data_dir / "train.json").exists():
            variation = ShapeVariation(stretch=args.stretch, occlusion=args.occlusion)
            generate_dataset(
                data_dir, args.categories, args.train, args.test, args.points, args.data_seed, args.threads, variation
            )
        self.train = load_split(data_dir, Split.TRAIN, args.threads)
        self.test = load_split(data_dir, Split.TEST, args.threads)
        self._models = {}
        self._logs = {}
        self._features = {}

    def train_config(self, task, k, seed):
        return TrainConfig(
            task=task,
            k=k,
            seed=seed,
            epochs=self.args.epochs,
            widths=self.args.widths,
            head_hidden=self.args.head_hidden,
            threads=self.args.threads,
        )

    def pretrained(self, task, k, seed):
        key = (task, k, seed)
        if key not in self._models:
            logger.info(f"Pretraining {task.value} K={k} seed={seed}")
            self._models[key], self._logs[key] = train_pretext(self.train, self.train_config(task, k, seed))
        return self._models[key]

    def random_init(self, seed):
        key = ("random", 0, seed)
        if key not in self._models:
            self._models[key] = build_model(HeadSpec.classify(6), self.args.widths, self.args.head_hidden, seed=seed)
        return self._models[key]

    def features(self, key, model):
        if key not in self._features:
            self._features[key] = (
                extract_dataset_features(model, self.train, self.args.threads),
                extract_dataset_features(model, self.test, self.args.threads),
            )
        return self._features[key]

    def svm_accuracy(self, train_fm, test_fm):
        svm = train_svm(train_fm, lam=self.args.svm_lambda, iters=self.args.svm_iters)
        return svm.accuracy(test_fm)

    # --- experiments ---

    def table1(self):
        rows = []
        for seed in self.args.seeds:
            for k in self.args.ks:
                model = self.pretrained(PretextTask.CLASSIFY, k, seed)
                ds = build_direction_set(k)
                accuracy = evaluate_rotation_accuracy(model, self.test.clouds, ds, seed=seed, threads=self.args.threads)
                rows.append({"seed": seed, "k": k, "accuracy": accuracy})
                logger.info(f"table1 seed={seed} K={k}: accuracy={accuracy:.4f}")
        per_seed = pd.DataFrame(rows)
        write_csv(per_seed, self.out_dir / "table1_seeds.csv")
        table = per_seed.groupby("k", as_index=False)["accuracy"].mean()
        write_csv(table, self.out_dir / "table1.csv")

        ordered = 0
        for seed, group in per_seed.groupby("seed"):
            acc = group.set_index("k")["accuracy"]
            ordered += int(all(acc.iloc[i] > acc.iloc[i + 1] for i in range(len(acc) - 1)))
        logger.info(f"table1: accuracy decreases with K for {ordered} of {len(self.args.seeds)} seeds")
        return table

    def transfer(self):
        rows = []
        for seed in self.args.seeds:
            pre = self.features(("pre", 18, seed), self.pretrained(PretextTask.CLASSIFY, 18, seed))
            rnd = self.features(("random", seed), self.random_init(seed))
            rows.append({"seed": seed, "source": "pretrained_k18", "accuracy": self.svm_accuracy(*pre)})
            rows.append({"seed": seed, "source": "random_init", "accuracy": self.svm_accuracy(*rnd)})
        frame = pd.DataFrame(rows)
        write_csv(frame, self.out_dir / "transfer.csv")
        wide = frame.pivot(index="seed", columns="source", values="accuracy")
        wins = int(((wide["pretrained_k18"] - wide["random_init"]) >= 0.05).sum())
        logger.info(f"transfer: pretrained beats random init by >= 5 points for {wins} of {len(wide)} seeds")
        return frame

    def concat(self):
        rows = []
        for seed in self.args.seeds:
            a_train, a_test = self.features(("pre", 18, seed), self.pretrained(PretextTask.CLASSIFY, 18, seed))
            b_train, b_test = self.features(("sixd", seed), self.pretrained(PretextTask.SIXD, 18, seed))
            rows.append({"seed": seed, "source": "classify_k18", "accuracy": self.svm_accuracy(a_train, a_test)})
            rows.append({"seed": seed, "source": "sixd", "accuracy": self.svm_accuracy(b_train, b_test)})
            rows.append({
                "seed": seed,
                "source": "concat",
                "accuracy": self.svm_accuracy(concat_features(a_train, b_train), concat_features(a_test, b_test)),
            })
        frame = pd.DataFrame(rows)
        write_csv(frame, self.out_dir / "concat.csv")
        return frame

    def ktransfer(self):
        rows = []
        for seed in self.args.seeds:
            for k in (6, 18, 32):
                train_fm, test_fm = self.features(("pre", k, seed), self.pretrained(PretextTask.CLASSIFY, k, seed))
                rows.append({"seed": seed, "k": k, "accuracy": self.svm_accuracy(train_fm, test_fm)})
        frame = pd.DataFrame(rows)
        write_csv(frame, self.out_dir / "ktransfer.csv")
        return frame

    def sweeps(self):
        seed = self.args.seeds[0]
        svm = SVMConfig(lam=self.args.svm_lambda, iters=self.args.svm_iters)
        pre = self.features(("pre", 18, seed), self.pretrained(PretextTask.CLASSIFY, 18, seed))
        rnd = self.features(("random", seed), self.random_init(seed))
        names = self.train.manifest.categories
        for name, (train_fm, test_fm) in (("pretrained", pre), ("random", rnd)):
            frame = label_efficiency_sweep(train_fm, test_fm, SWEEP_FRACTIONS, seed, svm, names)
            write_csv(frame, self.out_dir / f"sweep_{name}.csv")
        plot_curves(
            [self.out_dir / "sweep_pretrained.csv", self.out_dir / "sweep_random.csv"],
            PlotKind.SWEEP,
            self.out_dir / "sweep.svg",
        )

    def keypoint_config(self, seed):
        return KeypointConfig(
            epochs=self.args.kp_epochs,
            seed=seed,
            widths=self.args.widths,
            head_hidden=self.args.head_hidden,
            threads=self.args.threads,
        )

    def regressors(self):
        rows = []
        log_paths = []
        for seed in self.args.seeds:
            for task in (PretextTask.AXIS_ANGLE, PretextTask.SIXD):
                model = self.pretrained(task, 18, seed)
                error = evaluate_geodesic_error(model, self.test.clouds, seed=seed, threads=self.args.threads)
                rows.append({"seed": seed, "task": task.value, "geodesic_error": error})
                logger.info(f"regressors seed={seed} {task.value}: geodesic error {error:.4f} rad")
                if seed == self.args.seeds[0]:
                    log_paths.append(self._logs[(task, 18, seed)].to_csv(self.out_dir / f"regress_{task.value}.log.csv"))
        frame = pd.DataFrame(rows)
        baseline = geodesic_baseline(make_rng(self.args.seeds[0], 5))
        frame["baseline"] = baseline
        write_csv(frame, self.out_dir / "regressors.csv")

        wide = frame.pivot(index="seed", columns="task", values="geodesic_error")
        wins = int((wide[PretextTask.SIXD.value] < wide[PretextTask.AXIS_ANGLE.value]).sum())
        logger.info(f"regressors: 6D beats axis-angle for {wins} of {len(wide)} seeds (untrained baseline {baseline:.4f} rad)")
        plot_curves(log_paths, PlotKind.LOG, self.out_dir / "regressors_loss.svg")
        return frame

    def kp_sweep(self):
        seed = self.args.seeds[0]
        config = self.keypoint_config(seed)
        sources = (("pretrained", self.pretrained(PretextTask.CLASSIFY, 18, seed)), ("random", None))
        curves = {}
        paths = []
        for name, init in sources:
            curves[name] = keypoint_label_sweep(init, self.train, self.test, self.args.kp_fractions, config)
            write_csv(sweep_frame(curves[name]), self.out_dir / f"kp_sweep_{name}.csv")
            for fraction, curve in curves[name].items():
                paths.append(curve.save_csv(self.out_dir / f"pck_{name}_f{fraction:g}.csv"))
        for fraction in self.args.kp_fractions:
            pre, rnd = curves["pretrained"][float(fraction)], curves["random"][float(fraction)]
            share = float(np.mean(pre.values >= rnd.values))
            logger.info(f"kp_sweep fraction {fraction:g}: pretrained PCK >= random at {share:.0%} of thresholds")
        plot_curves(paths, PlotKind.PCK, self.out_dir / "kp_sweep.svg")
        return curves

    def keypoints(self):
        seed = self.args.seeds[0]
        config = self.keypoint_config(seed)
        sources = (("pretrained", self.pretrained(PretextTask.CLASSIFY, 18, seed)), ("random", None))
        curves = {}
        for name, init in sources:
            model, _ = finetune_keypoints(init, self.train, config)
            curves[name] = evaluate_pck(model, self.test, category=config.category, threads=self.args.threads)
            curves[name].save_csv(self.out_dir / f"pck_{name}.csv")
        share = float(np.mean(curves["pretrained"].values >= curves["random"].values))
        logger.info(f"keypoints: pretrained PCK >= random at {share:.0%} of thresholds")
        plot_curves(
            [self.out_dir / "pck_pretrained.csv", self.out_dir / "pck_random.csv"],
            PlotKind.PCK,
            self.out_dir / "pck.svg",
        )

    def ce_anchor(self):
        rows = []
        for k in (6, 18, 32):
            model = build_model(HeadSpec.classify(k), self.args.widths, self.args.head_hidden, seed=self.args.seeds[0])
            ds = build_direction_set(k)
            rotations = rotations_for(ds)
            rng = make_rng(self.args.seeds[0], k)
            batch = [make_classification_sample(pc, ds, rng, rotations=rotations) for pc in self.train.clouds[:32]]
            points = np.stack([cloud.points for cloud, _ in batch])
            _, logits = model.forward_batch(points)
            loss = ops.softmax_cross_entropy(logits, [label for _, label in batch]).item()
            rows.append({"k": k, "loss": loss, "ln_k": math.log(k), "relative_gap": abs(loss - math.log(k)) / math.log(k)})
        frame = pd.DataFrame(rows)
        write_csv(frame, self.out_dir / "ce_anchor.csv")
        return frame


EXPERIMENTS = ["ce_anchor", "table1", "transfer", "concat", "ktransfer", "sweeps", "regressors", "keypoints", "kp_sweep"]


def main():
    parser = argparse.ArgumentParser(description="rotcloud trend experiments")
    parser.add_argument("--out-dir", default="runs/experiments")
    parser.add_argument("--only", type=_csv_list(str), default=EXPERIMENTS, help=f"Subset of {','.join(EXPERIMENTS)}")
    parser.add_argument("--seeds", type=_csv_list(int), default=[0, 1, 2])
    parser.add_argument("--ks", type=_csv_list(int), default=[6, 18, 32, 100])
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--kp-epochs", type=int, default=60)
    parser.add_argument("--kp-fractions", type=_csv_list(float), default=KP_FRACTIONS)
    parser.add_argument("--widths", type=_csv_list(int), default=[64, 128, 256])
    parser.add_argument("--head-hidden", type=int, default=128)
    parser.add_argument("--categories", type=int, default=8)
    parser.add_argument("--train", type=int, default=200, help="Training clouds per category")
    parser.add_argument("--test", type=int, default=50, help="Test clouds per category")
    parser.add_argument("--points", type=int, default=1024)
    parser.add_argument("--data-seed", type=int, default=0)
    parser.add_argument("--stretch", type=float, default=0.2, help="Per-axis stretch of generated shapes")
    parser.add_argument("--occlusion", type=float, default=0.25, help="Largest one-sided cut of generated shapes")
    parser.add_argument("--svm-lambda", type=float, default=1e-3)
    parser.add_argument("--svm-iters", type=int, default=2000)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--log-level", default="INFO")
    args = parser.parse_args()

    unknown = [name for name in args.only if name not in EXPERIMENTS]
    if unknown:
        parser.error(f"unknown experiments: {', '.join(unknown)}")

    setup_logging(args.log_level)
    runner = Experiments(args)
    for name in EXPERIMENTS:
        if name in args.only:
            logger.info(f"Running experiment {name}")
            getattr(runner, name)()
    if "table1" in args.only:
        plot_curves([runner.out_dir / "table1.csv"], PlotKind.TABLE1, runner.out_dir / "table1.svg")
    logger.info(f"Results written to {runner.out_dir}")


if __name__ == "__main__":
    main()
