"""Command-line entry point wiring the workbench into reproducible runs.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric divergence.  All randomness flows from ``--seed``; with
``--strict`` an omitted seed is an error, otherwise it is derived from the
clock (and printed, so the run can still be repeated).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import attacks, datasets, evaluate, ga, lwc, metrics, nn, pbox
from .config_schema import RUN_CONFIG_SCHEMA
from .errors import (DataFormatError, DegenerateOrbitError, DivergenceError,
                     InvalidParameterError, PermattackError)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

PATTERN_DEFAULTS = {
    "logistic": {"r0": 0.448, "lam": 3.988},
    "lorenz": {"a0": 6.293, "b0": -6.749, "c0": 2.886},
    # The Gray-code shifts must satisfy beta + 1 < index bit width (10 bits
    # for 28x28), so the defaults keep beta2 in range; deltas are reduced to
    # the index width at generation time.
    "gcbpm": {"beta1": 1, "beta2": 8, "delta1": 29493, "delta2": 23749},
    "cml": {"x1": 0.31457, "y2": 0.6532, "eps": 0.94},
}

_PATTERN_TYPES = {
    "logistic": pbox.Logistic,
    "lorenz": pbox.Lorenz,
    "gcbpm": pbox.Gcbpm,
    "cml": pbox.Cml,
}


class UsageError(Exception):
    pass


def _parse_params(pattern: str, raw: str | None) -> pbox.PatternSpec:
    values = dict(PATTERN_DEFAULTS[pattern])
    if raw:
        for item in raw.split(","):
            if "=" not in item:
                raise UsageError(f"--params entries must be key=value, got {item!r}")
            key, val = item.split("=", 1)
            key = key.strip()
            if key not in values:
                raise UsageError(f"unknown parameter {key!r} for pattern {pattern!r}")
            values[key] = type(values[key])(float(val)) if isinstance(values[key], float) else int(val)
    return _PATTERN_TYPES[pattern](**values)


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    if getattr(args, "strict", False):
        raise UsageError("--strict requires an explicit --seed")
    seed = time.time_ns() & 0xFFFFFFFF
    print(f"note: no --seed given; using time-derived seed {seed}")
    return seed


def _write_resolved_config(out_dir: Path, doc: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "resolved_config.json", "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)


# --- subcommands ----------------------------------------------------------------------

def cmd_gen_pbox(args) -> int:
    spec = _parse_params(args.pattern, args.params)
    dims = pbox.Dims(args.rows, args.cols)
    schedule = []
    state = None
    for _ in range(args.rounds):
        key, state = pbox.gen_pbox(spec, dims, state)
        schedule.append(key)
    pbox.save_schedule(args.out, schedule)
    for i, key in enumerate(schedule, 1):
        counts = np.bincount(key.table, minlength=dims.cells)
        assert counts.max() == 1
        print(f"round {i}: bijective table over {dims.cells} cells")
    print(f"wrote {len(schedule)} round key(s) to {args.out}")
    return EXIT_OK


def cmd_encrypt(args) -> int:
    images = datasets.read_idx(args.infile)
    spec = _parse_params(args.pattern, args.params)
    schedule = []
    state = None
    for _ in range(args.rounds):
        key, state = pbox.gen_pbox(spec, images.dims, state)
        schedule.append(key)
    cipher = datasets.encrypt_pixel_matrix(images.pixels, schedule)
    datasets.write_idx(datasets.IdxImages(images.dims, cipher), args.out)
    if args.keys_out:
        pbox.save_schedule(args.keys_out, schedule)
    print(f"encrypted {images.count} images over {args.rounds} round(s)")
    return EXIT_OK


def cmd_decrypt(args) -> int:
    images = datasets.read_idx(args.infile)
    schedule = pbox.load_schedule(args.keys)
    if schedule[0].dims != images.dims:
        raise DataFormatError(
            f"key dims {schedule[0].dims} do not match image dims {images.dims}"
        )
    plain = datasets.decrypt_pixel_matrix(images.pixels, schedule)
    datasets.write_idx(datasets.IdxImages(images.dims, plain), args.out)
    print(f"decrypted {images.count} images with {len(schedule)} round key(s)")
    return EXIT_OK


def cmd_make_lwc(args) -> int:
    seed = _resolve_seed(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.cipher == "katan32":
        corpus = datasets.build_katan_corpus(args.train, args.val, seed=seed)
    else:
        corpus = datasets.build_simon_corpus(args.train, args.val, args.test, seed=seed)
    for name, split in corpus.splits.items():
        datasets.write_lwc1(out / f"{name}.lwc1", corpus.cipher, split)
    with open(out / "manifest.json", "w") as f:
        f.write(corpus.manifest.to_json())
    _write_resolved_config(out, {"command": "make-lwc", "cipher": args.cipher, "seed": seed,
                                 "counts": corpus.manifest.counts})
    print(f"{args.cipher}: " + ", ".join(f"{k}={v.inputs.shape[0]}" for k, v in corpus.splits.items()))
    print(f"digest {corpus.manifest.digest}")
    if args.audit:
        good = datasets.audit_lwc_records(corpus, "train", args.audit, seed=seed + 1)
        print(f"audit: {good}/{args.audit} records re-encrypt consistently")
        if good != args.audit:
            raise DataFormatError("corpus failed re-encryption audit")
    return EXIT_OK


def _load_run_config(args) -> dict:
    doc = {}
    if args.config:
        import jsonschema

        with open(args.config) as f:
            doc = json.load(f)
        try:
            jsonschema.validate(doc, RUN_CONFIG_SCHEMA)
        except jsonschema.ValidationError as e:
            raise UsageError(f"config file invalid: {e.message}")
    return doc


def _train_config_from(args, doc: dict, seed: int, ckpt_path: str, loss: str) -> attacks.TrainConfig:
    sub = doc.get("train", {})
    return attacks.TrainConfig(
        learning_rate=args.lr if args.lr is not None else sub.get("learning_rate", 0.002),
        batch_size=args.batch if args.batch is not None else sub.get("batch_size", 128),
        epochs=args.epochs if args.epochs is not None else sub.get("epochs", 100),
        seed=seed,
        optimizer=args.optimizer or sub.get("optimizer", "adam"),
        init=args.init or sub.get("init", "xavier_uniform"),
        loss=loss,
        checkpoint_path=ckpt_path,
        lr_decay=sub.get("lr_decay"),
        shuffle=sub.get("shuffle", True),
    )


def _prepare_task_data(task: str, args, doc: dict, seed: int):
    corpus_name = args.corpus or doc.get("corpus", "mnist")
    data_dir = args.data_dir or doc.get("data_dir")
    if task in ("decryptor", "classifier"):
        corpus = datasets.load_image_corpus(corpus_name, data_dir=data_dir)
        print(f"image corpus: {corpus_name} (source: {corpus.source}, "
              f"{corpus.train.count} train / {corpus.test.count} test)")
    if task == "decryptor":
        pattern = args.pattern or doc.get("pattern", {}).get("pattern", "cml")
        if args.params:
            spec = _parse_params(pattern, args.params)
        elif "pattern" in doc:
            fields = {k: v for k, v in doc["pattern"].items() if k != "pattern"}
            spec = _PATTERN_TYPES[pattern](**{**PATTERN_DEFAULTS[pattern], **fields})
        else:
            spec = _parse_params(pattern, None)
        rounds = args.rounds if args.rounds is not None else doc.get("rounds", 1)
        n_train = args.train_count or doc.get("train_count") or corpus.train.count
        n_val = args.val_count or doc.get("val_count") or corpus.test.count
        train_imgs = datasets.IdxImages(corpus.train.dims, corpus.train.pixels[:n_train])
        val_imgs = datasets.IdxImages(corpus.test.dims, corpus.test.pixels[:n_val])
        pc = datasets.build_pbox_corpus(train_imgs, val_imgs, spec, rounds)
        data = attacks.image_pairs_to_traindata(
            pc.train_cipher, pc.train_plain, pc.val_cipher, pc.val_plain, pc.dims)
        model = attacks.build_decryptor()
        print(f"decryptor: {nn.param_count(model)} trainable parameters")
        meta = {"pattern": datasets._spec_to_dict(spec), "rounds": rounds,
                "corpus_digest": pc.manifest.digest}
        return model, data, "mse", meta
    if task == "classifier":
        data = attacks.TrainData(
            corpus.train.pixels.astype(np.float64).reshape(-1, 28, 28, 1) / 255.0,
            corpus.train_labels.astype(np.int64),
            corpus.test.pixels.astype(np.float64).reshape(-1, 28, 28, 1) / 255.0,
            corpus.test_labels.astype(np.int64),
        )
        return evaluate.build_measurement_classifier(), data, "sparse_cce", {}
    if task == "katan":
        n_train = args.train_count or doc.get("train_count", 200_000)
        n_val = args.val_count or doc.get("val_count", 20_000)
        corpus = datasets.build_katan_corpus(n_train, n_val, seed=seed)
        data = attacks.katan_split_to_traindata(corpus.splits["train"], corpus.splits["val"])
        model = attacks.build_katan_model()
        print(f"katan model: {nn.param_count(model)} trainable parameters")
        return model, data, "mse", {"corpus_digest": corpus.manifest.digest}
    n_train = args.train_count or doc.get("train_count", 200_000)
    n_val = args.val_count or doc.get("val_count", 20_000)
    corpus = datasets.build_simon_corpus(n_train, n_val, max(1, n_val // 5), seed=seed)
    data = attacks.simon_split_to_traindata(corpus.splits["train"], corpus.splits["val"])
    model = attacks.build_simon_model()
    print(f"simon model: {nn.param_count(model)} trainable parameters")
    return model, data, "mse", {"corpus_digest": corpus.manifest.digest}


def cmd_train(args) -> int:
    doc = _load_run_config(args)
    task = args.task or doc.get("task")
    if task is None:
        raise UsageError("--task (or a config file with one) is required")
    seed = args.seed if args.seed is not None else doc.get("seed")
    args.seed = seed
    seed = _resolve_seed(args)
    out = Path(args.out or doc.get("out_dir", "run"))
    out.mkdir(parents=True, exist_ok=True)
    model, data, loss, meta = _prepare_task_data(task, args, doc, seed)
    ckpt = str(out / "checkpoint.ndl")
    config = _train_config_from(args, doc, seed, ckpt, loss)
    report, _ = attacks.train(model, data, config)
    with open(out / "report.json", "w") as f:
        f.write(report.to_json())
    _write_resolved_config(out, {"command": "train", "task": task, "seed": seed,
                                 "train": config.as_dict(), **meta})
    best = report.epochs[report.best_epoch - 1] if report.best_epoch else report.epochs[-1]
    print(f"best epoch {report.best_epoch}: val_loss={report.best_val_loss:.6g} "
          f"r2={best.r2:.4f}" + (f" acc={best.accuracy:.4f}" if best.accuracy is not None else ""))
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def cmd_transfer(args) -> int:
    doc = _load_run_config(args)
    task = args.task or doc.get("task")
    if task is None:
        raise UsageError("--task (or a config file with one) is required")
    seed = args.seed if args.seed is not None else doc.get("seed")
    args.seed = seed
    seed = _resolve_seed(args)
    out = Path(args.out or doc.get("out_dir", "transfer"))
    out.mkdir(parents=True, exist_ok=True)
    model, data, loss, meta = _prepare_task_data(task, args, doc, seed)
    ckpt = str(out / "checkpoint.ndl")
    config = _train_config_from(args, doc, seed, ckpt, loss)
    if args.epochs is None and "train" not in doc:
        config.epochs = 0  # default: zero-epoch transfer evaluation
    report, _ = attacks.transfer_train(args.checkpoint, data, config, expect_model=model)
    with open(out / "report.json", "w") as f:
        f.write(report.to_json())
    _write_resolved_config(out, {"command": "transfer", "task": task, "seed": seed,
                                 "source_checkpoint": args.checkpoint,
                                 "train": config.as_dict(), **meta})
    last = report.epochs[-1]
    print(f"transfer val_loss={last.val_loss:.6g} r2={last.r2:.4f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.task == "decryptor":
        cipher = datasets.read_idx(args.infile)
        predicted = attacks.predict_images(args.checkpoint, cipher.pixels)
        datasets.write_idx(datasets.IdxImages(cipher.dims, predicted), out / "predicted.idx")
        if args.plain:
            plain = datasets.read_idx(args.plain)
            attacks.write_triptychs(out / "triptych.pgm", cipher.pixels, predicted,
                                    plain.pixels, cipher.dims)
            suite = metrics.metric_suite(predicted.astype(np.float64), plain.pixels.astype(np.float64))
            with open(out / "metrics.json", "w") as f:
                json.dump(suite.as_dict(), f, indent=2)
            print(f"r2={suite.r2:.4f} mse={suite.mse:.4f}")
        print(f"wrote {len(predicted)} predictions to {out}")
        return EXIT_OK
    cipher_name, split = datasets.read_lwc1(args.infile)
    width = 32 if cipher_name == "katan32" else 64
    bits = attacks.predict_bits(args.checkpoint, split.inputs.astype(np.float64),
                                target_width=width)
    acc = float(np.mean(bits == split.targets))
    np.save(out / "predicted_bits.npy", bits)
    with open(out / "metrics.json", "w") as f:
        json.dump({"bit_accuracy": acc, "records": int(len(bits))}, f, indent=2)
    print(f"bit accuracy {acc:.4f} over {len(bits)} records")
    return EXIT_OK


def cmd_eval(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    predicted = datasets.read_idx(args.predicted)
    labels = datasets.read_idx_labels(args.labels)
    table = evaluate.classify_predictions(args.classifier, predicted.pixels, labels)
    loss = r2 = mse = float("nan")
    if args.report:
        with open(args.report) as f:
            rep = json.load(f)
        best = rep["epochs"][rep["best_epoch"] - 1] if rep.get("best_epoch") else rep["epochs"][-1]
        loss, r2, mse = best["val_loss"], best["r2"], best["mse"]
    row = evaluate.EvalRow(args.pattern, args.rounds, loss, r2, mse, table.overall_accuracy)
    evaluate.write_eval_csv(out / "eval.csv", [row])
    evaluate.write_eval_json(out / "eval.json", [row], extra={"per_class": table.per_class_accuracy})
    print(f"classifier accuracy on predictions: {table.overall_accuracy:.4f}")
    return EXIT_OK


def cmd_ga(args) -> int:
    seed = _resolve_seed(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dims = pbox.Dims(args.rows, args.cols)
    if args.template:
        template = datasets.read_idx(args.template).pixels[args.template_index]
        if template.size != dims.cells:
            raise DataFormatError(f"template size {template.size} != {dims.cells} cells")
    else:
        # Distinct-valued synthetic template keeps the oracle unambiguous.
        template = (np.arange(dims.cells, dtype=np.int64) % 256).astype(np.uint8)
    spec = _parse_params(args.pattern, args.params)
    key, _ = pbox.gen_pbox(spec, dims)
    cipher = pbox.apply_pbox(pbox.GrayImage(dims, template), key).pixels
    oracle = ga.TemplateOracle(template, min_run=args.min_run)
    config = ga.GaConfig(args.population, args.generations, args.mutation, args.elitism, seed)
    result = ga.run_ga(cipher, dims, oracle, config)
    ga.write_convergence_csv(out / "convergence.csv", result.log)
    pbox.save_schedule(out / "best_key.pbx1", [result.best.as_pbox()])
    _write_resolved_config(out, {"command": "ga", "seed": seed, "rows": args.rows,
                                 "cols": args.cols, "pattern": datasets._spec_to_dict(spec),
                                 "population": args.population, "generations": args.generations,
                                 "mutation": args.mutation, "min_run": args.min_run})
    status = "recovered" if result.converged else "best-effort"
    print(f"{status}: fitness {ga.fitness(result.best):.4f} after {len(result.log)} generation(s)")
    report = ga.search_space_reduction(dims, [(1, int(np.count_nonzero(result.best.state)))])
    print(f"residual search space: 10^{report.log10_factorial:.2f} candidate keys")
    return EXIT_OK


# --- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="permattack",
        description="Permutation-cipher and lightweight-cipher attack workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--strict", action="store_true",
                       help="fail instead of deriving a seed from the clock")

    p = sub.add_parser("gen-pbox", help="generate a P-box key schedule")
    p.add_argument("--pattern", choices=sorted(PATTERN_DEFAULTS), required=True)
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--params", help="comma-separated key=value pattern parameters")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_pbox)

    p = sub.add_parser("encrypt", help="encrypt an IDX image file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--pattern", choices=sorted(PATTERN_DEFAULTS), required=True)
    p.add_argument("--params")
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--keys-out")
    p.set_defaults(fn=cmd_encrypt)

    p = sub.add_parser("decrypt", help="decrypt an IDX image file with a PBX1 schedule")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--keys", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_decrypt)

    p = sub.add_parser("make-lwc", help="build KATAN/SIMON attack corpora")
    p.add_argument("--cipher", choices=["katan32", "simon32"], required=True)
    p.add_argument("--train", type=int, default=None)
    p.add_argument("--val", type=int, default=None)
    p.add_argument("--test", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--audit", type=int, default=0,
                   help="re-encrypt this many records with the scalar ciphers")
    add_seed(p)
    p.set_defaults(fn=cmd_make_lwc)

    def add_train_flags(p):
        p.add_argument("--task", choices=["decryptor", "katan", "simon", "classifier"])
        p.add_argument("--config", help="run-config JSON file (see docs for the schema)")
        p.add_argument("--corpus", choices=["mnist", "fashion"])
        p.add_argument("--data-dir")
        p.add_argument("--pattern", choices=sorted(PATTERN_DEFAULTS))
        p.add_argument("--params")
        p.add_argument("--rounds", type=int)
        p.add_argument("--train-count", type=int)
        p.add_argument("--val-count", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch", type=int)
        p.add_argument("--optimizer", choices=["adam", "sgd"])
        p.add_argument("--init", choices=["xavier_uniform", "xavier_normalized"])
        p.add_argument("--out")
        add_seed(p)

    p = sub.add_parser("train", help="train an attack model")
    add_train_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("transfer", help="initialise from a checkpoint, then train or evaluate")
    add_train_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=cmd_transfer)

    p = sub.add_parser("predict", help="run a trained model over a corpus file")
    p.add_argument("--task", choices=["decryptor", "katan", "simon"], required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="infile", required=True, help="IDX (decryptor) or LWC1 file")
    p.add_argument("--plain", help="IDX of true plaintexts for triptych export")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("eval", help="score predicted images with the measurement classifier")
    p.add_argument("--classifier", required=True, help="classifier checkpoint")
    p.add_argument("--predicted", required=True, help="IDX of predicted images")
    p.add_argument("--labels", required=True, help="IDX label file")
    p.add_argument("--pattern", default="unknown")
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--report", help="training report.json to pull loss/r2/mse from")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ga", help="genetic-algorithm key search against a template oracle")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--pattern", choices=sorted(PATTERN_DEFAULTS), default="logistic")
    p.add_argument("--params")
    p.add_argument("--template", help="IDX file supplying the reference image")
    p.add_argument("--template-index", type=int, default=0)
    p.add_argument("--population", type=int, default=50)
    p.add_argument("--generations", type=int, default=200)
    p.add_argument("--mutation", type=float, default=0.01)
    p.add_argument("--elitism", type=int, default=2)
    p.add_argument("--min-run", type=int, default=4)
    p.add_argument("--out", required=True)
    add_seed(p)
    p.set_defaults(fn=cmd_ga)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_USAGE
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidParameterError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataFormatError, DegenerateOrbitError, PermattackError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
