"""Command-line entry point: ``hatealign <command> ...``.

Exit codes: 0 success, 2 config/input validation, 3 numeric failure,
4 undefined metric, 5 gradient-check failure.
"""

import argparse
import os
import sys

from . import __version__
from .config import describe_defaults, load_config
from .data import count_table, generate_corpus, load_manifest, write_manifest
from .errors import (
    CheckpointError,
    HateAlignError,
    ManifestParseError,
    NonFiniteError,
    StructuralError,
    UndefinedMetricError,
    ValidationError,
)
from .evalkit import ProtocolSpec, metrics_report, run_protocol, score_dataset
from .gradcheck import COMPONENTS, TOLERANCE, run_gradchecks
from .report import write_eval_report, write_protocol_report
from .trainer import finetune, init_bundle, load_checkpoint, pretrain, save_checkpoint

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_METRIC, EXIT_GRADCHECK = 0, 2, 3, 4, 5


class InputError(HateAlignError):
    pass


def _load_data(path):
    if not os.path.exists(path):
        raise InputError(f"manifest not found: {path}")
    records = load_manifest(path)
    if not records:
        raise InputError(f"manifest {path} is empty")
    return records


def _train_split(records):
    train = [r for r in records if r.split == "train"]
    if not train:
        raise InputError("manifest has no train-split records")
    return train


def _print_counts(records):
    header = f"{'Language':<10}{'Hate':>14}{'Non-Hate':>14}{'Total':>8}"
    print(header)
    print(f"{'':<10}{'Train':>7}{'Test':>7}{'Train':>7}{'Test':>7}")
    cells = {}
    for r in records:
        c = cells.setdefault(r.language, {"1train": 0, "1test": 0, "0train": 0, "0test": 0})
        c[f"{r.label}{r.split}"] += 1
    for lang in count_table(records):
        c = cells[lang]
        total = sum(c.values())
        print(f"{lang:<10}{c['1train']:>7}{c['1test']:>7}{c['0train']:>7}{c['0test']:>7}{total:>8}")
    print(f"Total : {len(records)}")


def cmd_gen_data(args):
    cfg = load_config(args.config)
    records = generate_corpus(cfg.data)
    write_manifest(records, args.out)
    _print_counts(records)
    return EXIT_OK


def cmd_pretrain(args):
    cfg = load_config(args.config)
    train = _train_split(_load_data(args.data))
    r0 = train[0]
    bundle = init_bundle(len(r0.audio_features), len(r0.text_features), cfg.train,
                         renormalize_fused=cfg.downstream.renormalize_fused)
    print(f"pretrain: {len(train)} records, temperature {cfg.contrastive.temperature}, "
          f"lr {cfg.train.learning_rate}, seed {cfg.train.seed}")
    bundle, trace = pretrain(bundle, train, cfg.train, cfg.contrastive, log=print)
    save_checkpoint(bundle, args.out)
    print(f"wrote {args.out} (fingerprint {bundle.fingerprint()})")
    return EXIT_OK


def cmd_finetune(args):
    cfg = load_config(args.config)
    train = _train_split(_load_data(args.data))
    bundle = load_checkpoint(args.init)
    r0 = train[0]
    expected = {
        "audio": cfg.train.encoder_config(len(r0.audio_features)),
        "text": cfg.train.encoder_config(len(r0.text_features)),
        "classifier": cfg.train.head_config(),
    }
    for name, want in expected.items():
        have = bundle.group(name).config
        if have.layer_dims != want.layer_dims or have.activation != want.activation:
            raise InputError(f"--init checkpoint {name} layers {have.layer_dims} ({have.activation}) "
                             f"do not match config {want.layer_dims} ({want.activation})")
    d = cfg.downstream
    print(f"finetune: alpha {d.alpha}, margin {d.margin}, triplet_mode {d.triplet_mode}, "
          f"lr {cfg.train.learning_rate}, seed {cfg.train.seed}")
    print(f"loaded {args.init} (fingerprint {bundle.fingerprint()})")
    bundle, traces = finetune(bundle, train, cfg.train, d, log=print)
    save_checkpoint(bundle, args.out)
    print(f"wrote {args.out} (fingerprint {bundle.fingerprint()})")
    return EXIT_OK


def cmd_eval(args):
    bundle = load_checkpoint(args.checkpoint)
    records = [r for r in _load_data(args.data) if r.split == "test"]
    if not records:
        raise InputError("manifest has no test-split records")
    scored = score_dataset(bundle, records, args.ablation)
    n_pos = int(scored.labels.sum())
    if n_pos == 0 or n_pos == len(records):
        raise UndefinedMetricError(
            f"evaluation set has only one class ({n_pos} hate of {len(records)}); EER and AUC are undefined"
        )
    report = metrics_report(scored.scores, scored.labels, scored.languages)
    langs = ",".join(sorted(set(scored.languages.tolist())))
    written = write_eval_report(args.out, report, scored, args.ablation, eval_set=langs)
    print(f"acc {report.acc:.4f}  eer {report.eer:.4f}  f1 {report.f1:.4f}  auc {report.auc:.4f}")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_protocol(args):
    cfg = load_config(args.config)
    corpus = _load_data(args.data)
    proto = cfg.protocol
    results = []
    for mode in proto.modes:
        print(f"== {mode}")
        spec = ProtocolSpec(mode, proto.ablations[0], proto.sets)
        res = run_protocol(corpus, spec, cfg.train, cfg.downstream, cfg.contrastive,
                           proto.cross_eval, ablations=proto.ablations)
        for ab, rep in res.reports.items():
            print(f"   {ab:<11} acc {rep.acc:.4f}  eer {rep.eer:.4f}")
        results.append(res)
    meta = {"seed": cfg.seed, "train_seed": cfg.train.seed, "learning_rate": cfg.train.learning_rate,
            "alpha": cfg.downstream.alpha, "temperature": cfg.contrastive.temperature,
            "cross_eval": proto.cross_eval, "set_a": list(proto.set_a), "set_b": list(proto.set_b)}
    for path in write_protocol_report(args.out, results, proto.model_name, proto.figures, meta):
        print(f"wrote {path}")
    return EXIT_OK


def cmd_gradcheck(args):
    errors = run_gradchecks(seed=args.seed, n_seeds=args.n_seeds, corrupt=args.corrupt)
    width = max(len(n) for n in errors)
    print(f"{'component':<{width}}  max rel err  status")
    failed = False
    for name, err in errors.items():
        ok = err < TOLERANCE
        failed |= not ok
        print(f"{name:<{width}}  {err:11.3e}  {'PASS' if ok else 'FAIL'}")
    if args.out:
        from .plotting import gradcheck_figure
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        gradcheck_figure(errors, TOLERANCE, args.out)
        print(f"wrote {args.out}")
    return EXIT_GRADCHECK if failed else EXIT_OK


def build_parser():
    config_help = "config keys and defaults:\n" + describe_defaults()
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="hatealign", description=__doc__, formatter_class=fmt,
                                     epilog=config_help)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic manifest", formatter_class=fmt, epilog=config_help)
    p.add_argument("--config", help="run config JSON (defaults if omitted)")
    p.add_argument("--out", required=True, help="manifest path (JSON lines)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain", help="stage 1: contrastive alignment", formatter_class=fmt,
                       epilog=config_help)
    p.add_argument("--config")
    p.add_argument("--data", required=True, help="manifest; the train split is used")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="stage 2: triplet + BCE", formatter_class=fmt, epilog=config_help)
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--init", required=True, help="checkpoint from pretrain")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="score the test split and write reports")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--ablation", choices=("multimodal", "text_only", "audio_only"), default="multimodal")
    p.add_argument("--out", required=True, help="report JSON path; CSV and ROC figure are written beside it")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("protocol", help="run the in-set / cross-set matrix", formatter_class=fmt,
                       epilog=config_help)
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-seeds", type=int, default=10, help=argparse.SUPPRESS)
    p.add_argument("--out", help="optional PNG of the error table")
    p.add_argument("--corrupt", choices=COMPONENTS, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UndefinedMetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_METRIC
    except NonFiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, ManifestParseError, CheckpointError, StructuralError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
