#!/usr/bin/env python3
"""Desk-scale decryptor grid: four patterns x configurable round counts.

Trains one decryptor per (pattern, rounds) cell and emits a CSV in the same
layout as the evaluation tables (pattern, rounds, loss, r2, mse,
classifier_accuracy).  With a classifier checkpoint supplied, predicted
validation images are scored through it as well.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from permattack import attacks, datasets, evaluate, nn
from permattack.cli import PATTERN_DEFAULTS, _parse_params


def run_cell(corpus, pattern, rounds, args, classifier):
    spec = _parse_params(pattern, None)
    train = datasets.IdxImages(corpus.train.dims, corpus.train.pixels[:args.train_count])
    val = datasets.IdxImages(corpus.test.dims, corpus.test.pixels[:args.val_count])
    pc = datasets.build_pbox_corpus(train, val, spec, rounds)
    data = attacks.image_pairs_to_traindata(
        pc.train_cipher, pc.train_plain, pc.val_cipher, pc.val_plain, pc.dims)
    ckpt = Path(args.out) / f"{pattern}_{rounds}.ndl"
    config = attacks.TrainConfig(learning_rate=args.lr, batch_size=args.batch,
                                 epochs=args.epochs, seed=args.seed,
                                 checkpoint_path=str(ckpt))
    report, _ = attacks.train(attacks.build_decryptor(), data, config)
    last = report.epochs[-1]
    acc = float("nan")
    if classifier:
        predicted = attacks.predict_images(ckpt, pc.val_cipher)
        table = evaluate.classify_predictions(classifier, predicted,
                                              corpus.test_labels[:args.val_count])
        acc = table.overall_accuracy
    print(f"{pattern:>10} rounds={rounds:>2}  loss={last.val_loss:.6f} "
          f"r2={last.r2:.4f} mse={last.mse:.6f} cls={acc:.4f}")
    return evaluate.EvalRow(pattern, rounds, last.val_loss, last.r2, last.mse, acc)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rounds", type=int, nargs="+", default=[1, 8, 16])
    parser.add_argument("--patterns", nargs="+", default=sorted(PATTERN_DEFAULTS))
    parser.add_argument("--train-count", type=int, default=2000)
    parser.add_argument("--val-count", type=int, default=500)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--lr", type=float, default=0.002)
    parser.add_argument("--batch", type=int, default=128)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--classifier", help="measurement classifier checkpoint")
    parser.add_argument("--out", default="trend_out")
    args = parser.parse_args()

    Path(args.out).mkdir(parents=True, exist_ok=True)
    corpus = datasets.load_image_corpus("mnist")
    args.train_count = min(args.train_count, corpus.train.count)
    args.val_count = min(args.val_count, corpus.test.count)
    print(f"source: {corpus.source}, {args.train_count} train / {args.val_count} val images")
    rows = []
    for rounds in args.rounds:
        for pattern in args.patterns:
            rows.append(run_cell(corpus, pattern, rounds, args, args.classifier))
    evaluate.write_eval_csv(Path(args.out) / "trend.csv", rows)
    print(f"wrote {Path(args.out) / 'trend.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
