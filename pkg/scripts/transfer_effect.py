#!/usr/bin/env python3
"""Zero-epoch transfer demonstration.

Trains a decryptor on one corpus, then evaluates the raw transferred weights
(no training) on a second corpus encrypted with the same keys, against
freshly initialised baselines.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from permattack import attacks, datasets, nn
from permattack.cli import _parse_params


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pattern", default="cml")
    parser.add_argument("--rounds", type=int, default=1)
    parser.add_argument("--train-count", type=int, default=2000)
    parser.add_argument("--val-count", type=int, default=500)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--lr", type=float, default=0.002)
    parser.add_argument("--batch", type=int, default=128)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--out", default="transfer_out")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    spec = _parse_params(args.pattern, None)
    source = datasets.load_image_corpus("mnist")
    target = datasets.load_image_corpus("fashion")
    n_train = min(args.train_count, source.train.count, target.train.count)
    n_val = min(args.val_count, source.test.count, target.test.count)

    def corpus_of(c):
        train = datasets.IdxImages(c.train.dims, c.train.pixels[:n_train])
        val = datasets.IdxImages(c.test.dims, c.test.pixels[:n_val])
        return datasets.build_pbox_corpus(train, val, spec, args.rounds)

    src = corpus_of(source)
    ckpt = out / "source.ndl"
    data = attacks.image_pairs_to_traindata(
        src.train_cipher, src.train_plain, src.val_cipher, src.val_plain, src.dims)
    config = attacks.TrainConfig(learning_rate=args.lr, batch_size=args.batch,
                                 epochs=args.epochs, seed=args.seed,
                                 checkpoint_path=str(ckpt))
    report, _ = attacks.train(attacks.build_decryptor(), data, config)
    print(f"source model: val r2={report.epochs[-1].r2:.4f}")

    tgt = corpus_of(target)
    tdata = attacks.image_pairs_to_traindata(
        tgt.train_cipher, tgt.train_plain, tgt.val_cipher, tgt.val_plain, tgt.dims)
    zero = attacks.TrainConfig(learning_rate=args.lr, batch_size=args.batch, epochs=0,
                               seed=args.seed)
    transferred, _ = attacks.transfer_train(ckpt, tdata, zero)
    t_mse = transferred.epochs[-1].mse
    print(f"zero-epoch transfer on target corpus: mse={t_mse:.6f} "
          f"r2={transferred.epochs[-1].r2:.4f}")
    for seed in range(3):
        params = nn.init_params(attacks.build_decryptor(), seed=100 + seed)
        pred, _ = nn.forward(attacks.build_decryptor(), params, tdata.x_val, mode="eval")
        x_mse = nn.loss_mse(pred, tdata.y_val)
        print(f"fresh xavier baseline (seed {100 + seed}): mse={x_mse:.6f} "
              f"({x_mse / t_mse:.0f}x the transfer error)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
