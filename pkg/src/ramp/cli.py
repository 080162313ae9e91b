"""``ramp`` command line: gen-synthetic, train, build-datastore, predict, evaluate.

Settings resolve as command-line flags, then a JSON ``--config`` file, then defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import datastore as ds
from .dataio import SampleFormatError, SyntheticConfig, gen_synthetic, parse_samples, write_samples
from .decoder import BinScheme, Decoder, Stage1Config, train_stage1
from .fusion import FusingNets, Stage2Config, predict_batch, read_predictions, train_stage2, write_predictions
from .metrics import evaluate

log = logging.getLogger("ramp")


class CliError(Exception):
    pass


@dataclass
class RunConfig:
    K: int = 60
    alpha: float = 1.0
    bin_width: float = 0.25
    score_min: float = 1.0
    score_max: float = 5.0
    seed: int = 0
    stage1: dict = field(default_factory=dict)
    stage2: dict = field(default_factory=dict)

    @classmethod
    def resolve(cls, args) -> "RunConfig":
        cfg = cls()
        if getattr(args, "config", None):
            try:
                doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
            except OSError as exc:
                raise CliError(f"cannot read config {args.config}: {exc.strerror}") from None
            except json.JSONDecodeError as exc:
                raise CliError(f"config {args.config} is not valid JSON: {exc.msg}") from None
            known = {f.name for f in fields(cls)}
            unknown = set(doc) - known
            if unknown:
                raise CliError(f"unknown config keys: {sorted(unknown)}")
            for k, v in doc.items():
                setattr(cfg, k, v)
        for flag, name in (("k", "K"), ("alpha", "alpha"), ("bin_width", "bin_width"), ("seed", "seed")):
            value = getattr(args, flag, None)
            if value is not None:
                setattr(cfg, name, value)
        for flag, key in (
            ("epochs", "max_epochs"),
            ("lr", "learning_rate"),
            ("batch_size", "batch_size"),
            ("accum_steps", "accum_steps"),
            ("patience", "patience"),
        ):
            value = getattr(args, flag, None)
            if value is not None:
                cfg.stage1[key] = value
                cfg.stage2[key] = value
        if cfg.K < 1:
            raise CliError("K must be at least 1")
        return cfg

    @property
    def scheme(self) -> BinScheme:
        return BinScheme(self.score_min, self.score_max, self.bin_width)

    def stage1_config(self) -> Stage1Config:
        return Stage1Config(**{"alpha": self.alpha, "seed": self.seed, **self.stage1})

    def stage2_config(self) -> Stage2Config:
        return Stage2Config(**{"K": self.K, "seed": self.seed, **self.stage2})


def _load_samples(path, require_score=True, scheme: BinScheme | None = None):
    if path is None:
        raise CliError("missing sample file argument")
    if not Path(path).is_file():
        raise CliError(f"sample file not found: {path}")
    rng = (scheme.score_min, scheme.score_max) if scheme else (1.0, 5.0)
    return parse_samples(path, rng, require_score=require_score)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_float(text):
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return value


def cmd_gen_synthetic(args) -> int:
    shift = None if args.emb_shift is None else [args.emb_shift] * args.dim
    cfg = SyntheticConfig(
        dim=args.dim,
        n_systems=args.systems,
        utterances_per_system=args.per_system,
        noise_sigma=args.noise,
        seed=args.seed,
        embedding_shift=shift,
        score_shift=args.score_shift,
        system_prefix=args.prefix,
    )
    sset = gen_synthetic(cfg)
    write_samples(sset, args.out)
    print(f"wrote {len(sset)} samples from {cfg.n_systems} systems (dim {cfg.dim}) to {args.out}", file=sys.stderr)
    return 0


def _artifact_paths(args):
    out = Path(args.out or ".")
    return (
        Path(args.decoder) if args.decoder else out / "decoder.json",
        Path(args.fusing) if args.fusing else out / "fusing.json",
        Path(args.datastore) if args.datastore else out / "datastore.bin",
    )


def cmd_train(args) -> int:
    cfg = RunConfig.resolve(args)
    scheme = cfg.scheme
    train = _load_samples(args.train, scheme=scheme)
    dev = _load_samples(args.dev, scheme=scheme)
    dec_path, fus_path, store_path = _artifact_paths(args)
    for p in (dec_path, fus_path, store_path):
        p.parent.mkdir(parents=True, exist_ok=True)

    decoder, info1 = train_stage1(train, dev, cfg.stage1_config(), scheme)
    print(f"stage 1: {info1['epochs']} epochs, best dev loss {info1['best_dev_loss']:.6f}", file=sys.stderr)
    decoder.save(dec_path)

    store = ds.build(train)
    ds.save(store, store_path)

    nets, info2 = train_stage2(train, dev, decoder, store, cfg.stage2_config())
    print(f"stage 2: {info2['epochs']} epochs, best dev MSE {info2['best_dev_mse']:.6f}", file=sys.stderr)
    nets.save(fus_path)
    print(f"wrote {dec_path}, {fus_path}, {store_path}", file=sys.stderr)
    return 0


def cmd_build_datastore(args) -> int:
    sset = _load_samples(args.train)
    store = ds.build(sset)
    ds.save(store, args.out)
    print(f"wrote datastore with {len(store)} entries (dim {store.dim}) to {args.out}", file=sys.stderr)
    return 0


def _read_artifact(loader, path, what):
    if path is None:
        raise CliError(f"--{what} is required")
    if not Path(path).is_file():
        raise CliError(f"{what} file not found: {path}")
    return loader(path)


def cmd_predict(args) -> int:
    nets = _read_artifact(FusingNets.load, args.fusing, "fusing")
    store = _read_artifact(ds.load, args.datastore, "datastore")
    decoder = None if args.np_only else _read_artifact(Decoder.load, args.decoder, "decoder")
    if args.k is not None and args.k != nets.K:
        raise CliError(f"--k {args.k} does not match the fusing checkpoint (K={nets.K})")
    test = _load_samples(args.test, require_score=False)
    if test.dim != store.dim:
        raise CliError(f"sample dim {test.dim} != datastore dim {store.dim}")
    if decoder is not None and decoder.in_dim != store.dim:
        raise CliError(f"decoder input dim {decoder.in_dim} != datastore dim {store.dim}")
    preds = predict_batch(test, decoder, nets, store, np_only=args.np_only)
    if args.out:
        write_predictions(preds, args.out)
        print(f"wrote {len(preds)} predictions to {args.out}", file=sys.stderr)
    else:
        for p in preds:
            print(json.dumps(p.to_record()))
    return 0


def cmd_evaluate(args) -> int:
    if not args.predictions or not Path(args.predictions).is_file():
        raise CliError(f"predictions file not found: {args.predictions}")
    preds = read_predictions(args.predictions)
    truth = _load_samples(args.test)
    truth_ids = set(truth.ids)
    missing = sorted({p["id"] for p in preds} - truth_ids)
    if missing:
        raise CliError(f"predictions without ground truth: {', '.join(missing[:20])}")
    unscored = sorted(truth_ids - {p["id"] for p in preds})
    if unscored:
        raise CliError(f"ground-truth ids without predictions: {', '.join(unscored[:20])}")
    report = evaluate(preds, truth)
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.table())
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def _add_train_flags(p):
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--k", type=_positive_int, help="retrieval upper bound K (default 60)")
    p.add_argument("--alpha", type=_nonneg_float, help="weight of the classification loss (default 1)")
    p.add_argument("--bin-width", type=float, help="score bin width (default 0.25)")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=_positive_int, help="max epochs for both stages")
    p.add_argument("--lr", type=float, help="learning rate for both stages")
    p.add_argument("--batch-size", type=_positive_int)
    p.add_argument("--accum-steps", type=_positive_int, help="batches accumulated per update")
    p.add_argument("--patience", type=int, help="early-stopping patience in epochs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ramp", description="Retrieval-augmented score prediction")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a synthetic NDJSON sample file")
    p.add_argument("--systems", type=_positive_int, default=20)
    p.add_argument("--per-system", type=_positive_int, default=10)
    p.add_argument("--dim", type=_positive_int, default=16)
    p.add_argument("--noise", type=_nonneg_float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--emb-shift", type=float, help="offset added to every embedding coordinate")
    p.add_argument("--score-shift", type=float, default=0.0)
    p.add_argument("--prefix", default="sys", help="system id prefix")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", help="two-stage training; writes decoder, fusing nets and datastore")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out", help="output directory (default .)")
    p.add_argument("--decoder", help="decoder checkpoint path (default OUT/decoder.json)")
    p.add_argument("--fusing", help="fusing checkpoint path (default OUT/fusing.json)")
    p.add_argument("--datastore", help="datastore path (default OUT/datastore.bin)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("build-datastore", help="build a datastore from a sample file")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_datastore)

    p = sub.add_parser("predict", help="score samples with a trained pipeline")
    p.add_argument("--test", required=True)
    p.add_argument("--decoder")
    p.add_argument("--fusing", required=True)
    p.add_argument("--datastore", required=True, help="datastore to retrieve from (swap for cross-domain)")
    p.add_argument("--k", type=_positive_int)
    p.add_argument("--np-only", action="store_true", help="non-parametric path only")
    p.add_argument("--out", help="prediction NDJSON (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="utterance- and system-level metrics")
    p.add_argument("--predictions", required=True)
    p.add_argument("--test", required=True, help="ground-truth sample file")
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, SampleFormatError, ds.DatastoreFormatError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"ramp: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
