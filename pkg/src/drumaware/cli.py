"""
Command line interface.

::

    drumaware synth --out corpus/ --pieces 200 --drumless 0.3 --seed 7
    drumaware train --variant da2 --corpus corpus/ --out models/da2 --runs 5 --seed 42
    drumaware track --model models/da2/run0 --head fuser --audio x.wav
    drumaware eval --est est/ --ref corpus/ --out report.tsv
    drumaware stats --base b0/ b1/ --other d0/ d1/ --ref corpus/ --out stats.tsv
    drumaware profile --act est/ --ref corpus/ --out profile
    drumaware tune-hmm --model models/da2/run0 --corpus val/

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

"""

import argparse
import logging
import os
import sys

from . import pipeline
from .errors import ConfigError, DataError, InvalidInputError, NumericError
from .hmm import Decoder
from .synth import SynthConfig, generate_dataset, read_manifest

log = logging.getLogger("drumaware")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; usage errors map to 1 here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def cmd_synth(args):
    cfg = SynthConfig(pieces=args.pieces, duration_s=args.duration,
                      drumless_fraction=args.drumless, seed=args.seed,
                      tempo_range_bpm=(args.min_bpm, args.max_bpm))
    print(generate_dataset(cfg, args.out))


def run_config_from_args(args):
    config = pipeline.RunConfig.load(args.config) if args.config else pipeline.RunConfig()
    feature = {}
    hmm = {}
    if args.transition_lambda is not None:
        hmm["transition_lambda"] = args.transition_lambda
    if args.observation_lambda is not None:
        hmm["observation_lambda"] = args.observation_lambda
    return config.with_overrides(
        variant=args.variant, corpus=args.corpus, val_corpus=args.val_corpus,
        out=args.out, runs=args.runs, seed=args.seed, epochs=args.epochs, lr=args.lr,
        tracker_hidden=args.tracker_hidden, separator_hidden=args.separator_hidden,
        fuser_hidden=args.fuser_hidden, feature=feature or None, hmm=hmm or None)


def cmd_train(args):
    config = run_config_from_args(args)
    if config.corpus is None or config.out is None:
        raise UsageError("train needs --corpus and --out (or a config file providing them)")
    os.makedirs(config.out, exist_ok=True)
    config.save(os.path.join(config.out, pipeline.RUN_CONFIG))
    for d in pipeline.train(config):
        print(d)


def cmd_track(args):
    model = pipeline.Model.load(args.model)
    pipeline.check_head(model, args.head)
    decoder = Decoder(model.hmm)
    files = pipeline.mixture_files(args.audio)
    if not files:
        raise DataError("no audio files to track")
    for path in files:
        beats = pipeline.track_file(model, path, args.head, args.out,
                                    args.dump_activations, decoder)
        log.info("%s: %d beats", path, len(beats))


def cmd_eval(args):
    report = pipeline.evaluate_dirs(args.est, args.ref)
    report.to_tsv(args.out)
    mean = report.mean()
    print("\t".join(f"{k}={v:.4f}" for k, v in mean.items()))


def cmd_stats(args):
    base = [pipeline.evaluate_dirs(d, args.ref) for d in args.base]
    other = [pipeline.evaluate_dirs(d, args.ref) for d in args.other]
    manifest = None
    path = args.manifest or os.path.join(args.ref, "manifest.tsv")
    if os.path.exists(path):
        manifest = read_manifest(path)
    rows = pipeline.significance(base, other, manifest)
    pipeline.write_significance(rows, args.out)
    for r in rows:
        print(f"{r['set']}\t{r['metric']}\tp={r['p']:.4f}")


def cmd_profile(args):
    profs = pipeline.profiles(args.act, args.ref, args.radius, args.heads)
    pipeline.write_profiles(profs, args.out + ".tsv", None if args.no_figure else args.out + ".svg")
    print(args.out + ".tsv")


def cmd_tune_hmm(args):
    model = pipeline.Model.load(args.model)
    items = pipeline.load_corpus(args.corpus, model.feature,
                                 require_stems=pipeline.E.uses_external_stems(model.params.variant))
    best, table = pipeline.tune_decoder(model, items, args.transition_lambdas,
                                        args.observation_lambdas, args.head)
    lines = ["transition_lambda\tobservation_lambda\tbeat_f1"]
    lines += [f"{tl:g}\t{ol:g}\t{f:.6f}" for tl, ol, f in table]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    sys.stdout.write(text)
    print(f"best\t{best.transition_lambda:g}\t{best.observation_lambda:g}")


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")


def build_parser():
    p = _Parser(prog="drumaware", description=__doc__.split("\n\n")[1].strip(),
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--pieces", type=int, default=10)
    s.add_argument("--duration", type=float, default=10.0)
    s.add_argument("--drumless", type=float, default=0.3)
    s.add_argument("--min-bpm", type=float, default=70.0)
    s.add_argument("--max-bpm", type=float, default=180.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train one or more models")
    s.add_argument("--config", help="JSON run config; flags override its values")
    s.add_argument("--variant", choices=pipeline.E.VARIANTS)
    s.add_argument("--corpus")
    s.add_argument("--val-corpus")
    s.add_argument("--out")
    s.add_argument("--runs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--tracker-hidden", type=_int_list)
    s.add_argument("--separator-hidden", type=_int_list)
    s.add_argument("--fuser-hidden", type=_int_list)
    s.add_argument("--transition-lambda", type=float)
    s.add_argument("--observation-lambda", type=float)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("track", help="decode beats and downbeats")
    s.add_argument("--model", required=True)
    s.add_argument("--head", default="fuser", choices=pipeline.E.HEADS)
    s.add_argument("--audio", required=True, nargs="+", help="wav files or directories")
    s.add_argument("--out", help="output directory (default: next to the audio)")
    s.add_argument("--dump-activations", action="store_true")
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("eval", help="score beat files against annotations")
    s.add_argument("--est", required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("stats", help="paired one-tailed t-tests between two systems")
    s.add_argument("--base", required=True, nargs="+", help="estimate dirs, one per run")
    s.add_argument("--other", required=True, nargs="+", help="estimate dirs, one per run")
    s.add_argument("--ref", required=True)
    s.add_argument("--manifest", help="corpus manifest with drum-less flags")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("profile", help="averaged activation profiles around events")
    s.add_argument("--act", required=True, help="directory of dumped activations")
    s.add_argument("--ref", required=True)
    s.add_argument("--out", required=True, help="output prefix for .tsv and .svg")
    s.add_argument("--radius", type=int, default=10)
    s.add_argument("--heads", nargs="+")
    s.add_argument("--no-figure", action="store_true")
    s.set_defaults(func=cmd_profile)

    s = sub.add_parser("tune-hmm", help="grid search of decoder lambdas")
    s.add_argument("--model", required=True)
    s.add_argument("--corpus", required=True, help="validation corpus")
    s.add_argument("--head", default="fuser", choices=pipeline.E.HEADS)
    s.add_argument("--transition-lambdas", type=_float_list, default=[10, 30, 100, 300])
    s.add_argument("--observation-lambdas", type=_float_list, default=[4, 8, 16, 32])
    s.add_argument("--out")
    s.set_defaults(func=cmd_tune_hmm)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("no command given")
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, InvalidInputError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
