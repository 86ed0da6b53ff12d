"""``riq`` command line: segment, train, classify, evaluate, index, query, synth.

Exit codes: 0 success, 1 usage error, 2 runtime or data error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .errors import RiqError, UnknownKeyword
from .imaging import save_pgm
from .mlnn import MlafParams, TrainConfig, evaluate, load_model, save_model, train
from .pipeline import (
    analyze_image,
    build_index,
    classify_image,
    list_images,
    load_labeled_regions,
    read_manifest,
)
from .retrieval import fingerprint, load_index, query, save_index
from .segmentation import SegmentationParams, region_label_map
from .synth import SynthCounts, generate_dataset

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("riq")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed_default():
    env = os.environ.get("RIQ_SEED")
    if env is None or env == "":
        return 0
    return env  # argparse runs string defaults through _u64, so a bad value is a usage error


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return v


def _common(p):
    p.add_argument("--seed", type=_u64, default=_seed_default(),
                   help="RNG seed (u64; falls back to $RIQ_SEED, then 0)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")


def _jobs(p):
    p.add_argument("--jobs", type=int, default=1, help="images processed concurrently (default 1)")


def _seg_flags(p):
    d = SegmentationParams()
    g = p.add_argument_group("segmentation")
    g.add_argument("--radius", type=float, default=d.radius,
                   help=f"mean-shift window radius in cone-embedded HSV units (default {d.radius})")
    g.add_argument("--min-region", type=float, default=d.min_region_fraction,
                   help=f"minimum region area as a fraction t of the image (default {d.min_region_fraction})")
    g.add_argument("--min-color-count", type=int, default=d.min_color_count,
                   help=f"pixels needed for a significant colour (default {d.min_color_count})")
    g.add_argument("--windows", type=int, default=d.n_windows,
                   help=f"random initial search windows (default {d.n_windows})")
    g.add_argument("--max-iters", type=int, default=d.max_iters,
                   help=f"mean-shift iterations per window (default {d.max_iters})")
    g.add_argument("--conv-eps", type=float, default=d.conv_eps,
                   help=f"shift length that counts as converged (default {d.conv_eps})")


def _train_flags(p):
    m, t = MlafParams(), TrainConfig()
    g = p.add_argument_group("classifier")
    g.add_argument("--beta", type=float, default=m.beta, help=f"sigmoid steepness (default {m.beta})")
    g.add_argument("--c", type=float, default=m.c,
                   help=f"window width of each activation level (default {m.c})")
    g.add_argument("--hidden", type=int, default=t.hidden, help=f"hidden units (default {t.hidden})")
    g.add_argument("--lr", type=float, default=t.learning_rate, help=f"learning rate (default {t.learning_rate})")
    g.add_argument("--epochs", type=int, default=t.epochs, help=f"full-batch epochs (default {t.epochs})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="riq", description="Region-based image classification and keyword retrieval.")
    parser.add_argument("--version", action="version", version=f"riq {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("segment", help="segment one image and list its significant regions")
    p.add_argument("image")
    p.add_argument("--labels-out", metavar="PGM", help="write a region-index map as 8-bit PGM (255 = pruned)")
    _seg_flags(p)
    _common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", help="train a model from a labelled-region manifest")
    p.add_argument("manifest", help="lines of '<image path>\\t<region index>\\t<category>'")
    p.add_argument("-o", "--output", required=True, metavar="MODEL")
    _seg_flags(p)
    _train_flags(p)
    _jobs(p)
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="classify every significant region of an image")
    p.add_argument("image")
    p.add_argument("-m", "--model", required=True)
    _seg_flags(p)
    _common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="per-category precision on a labelled-region manifest")
    p.add_argument("manifest")
    p.add_argument("-m", "--model", required=True)
    _seg_flags(p)
    _jobs(p)
    _common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("index", help="classify every image under a directory and write a keyword index")
    p.add_argument("directory")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("-o", "--output", required=True, metavar="INDEX")
    _seg_flags(p)
    _jobs(p)
    _common(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="list indexed images containing the given keywords")
    p.add_argument("index")
    p.add_argument("keywords", nargs="+", metavar="KEYWORD")
    p.add_argument("--or", dest="any_of", action="store_true", help="match any keyword instead of all")
    p.add_argument("-m", "--model", help="warn if the index was built with a different model")
    _seg_flags(p)
    _common(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("synth", help="generate the seeded synthetic dataset and manifests")
    p.add_argument("output", help="output directory")
    d = SynthCounts()
    p.add_argument("--train", type=int, default=d.train, help=f"training region instances (default {d.train})")
    p.add_argument("--test", type=int, default=d.test, help=f"test region instances (default {d.test})")
    p.add_argument("--scenes", type=int, default=d.scenes, help=f"two-surface scenes (default {d.scenes})")
    p.add_argument("--size", type=int, default=256, help="image side in pixels (default 256)")
    _common(p)
    p.set_defaults(func=cmd_synth)
    return parser


def _seg_params(args) -> SegmentationParams:
    try:
        return SegmentationParams(radius=args.radius, min_color_count=args.min_color_count,
                                  min_region_fraction=args.min_region, n_windows=args.windows,
                                  max_iters=args.max_iters, conv_eps=args.conv_eps,
                                  rng_seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _check_jobs(args):
    if getattr(args, "jobs", 1) < 1:
        raise UsageError("--jobs must be >= 1")


# -- commands ------------------------------------------------------------------

def cmd_segment(args) -> int:
    seg = _seg_params(args)
    an = analyze_image(args.image, seg)
    for i, r in enumerate(an.regions):
        t, l, b, rt = r.bbox
        print(f"{i}\tlabel={r.label}\tarea={r.area}\tbbox={t},{l},{b},{rt}")
    if args.labels_out:
        save_pgm(region_label_map(an.regions, an.shape), args.labels_out)
    return EXIT_OK


def cmd_train(args) -> int:
    seg = _seg_params(args)
    _check_jobs(args)
    try:
        cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs, hidden=args.hidden, rng_seed=args.seed)
        params = MlafParams(beta=args.beta, c=args.c)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    entries = read_manifest(args.manifest)
    data = load_labeled_regions(entries, seg, jobs=args.jobs)
    model = train(data, cfg, params)
    save_model(model, args.output)
    acc = evaluate(model, data).accuracy
    print(f"regions {len(data)}")
    print(f"final loss {model.loss_trace[-1]:.6g}")
    print(f"training accuracy {100 * acc:.1f}%")
    return EXIT_OK


def cmd_classify(args) -> int:
    seg = _seg_params(args)
    model = load_model(args.model)
    regions, cats, outs = classify_image(args.image, model, seg)
    for i, (c, o) in enumerate(zip(cats, outs)):
        print(f"{i}\t{model.categories[c - 1]}\t{o:.6f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    seg = _seg_params(args)
    _check_jobs(args)
    model = load_model(args.model)
    data = load_labeled_regions(read_manifest(args.manifest, model.categories), seg, jobs=args.jobs)
    ev = evaluate(model, data)
    print(ev.report())
    print(f"accuracy {100 * ev.accuracy:.1f}%")
    print("confusion (rows true, cols predicted): " + "; ".join(
        f"{name} " + " ".join(str(v) for v in row) for name, row in zip(ev.categories, ev.confusion)))
    return EXIT_OK


def cmd_index(args) -> int:
    seg = _seg_params(args)
    _check_jobs(args)
    if not os.path.isdir(args.directory):
        raise RiqError(f"not a directory: {args.directory}")
    model = load_model(args.model)
    paths = list_images(args.directory)
    index, failures = build_index(paths, model, seg, args.directory, jobs=args.jobs)
    save_index(index, args.output)
    for f in failures:
        print(f"failed\t{f.image_id}\t{f.error}", file=sys.stderr)
    print(f"indexed {len(index)} images, {len(failures)} failed")
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_query(args) -> int:
    index = load_index(args.index)
    expected = None
    if args.model:
        seg = _seg_params(args)
        with open(args.model, "rb") as fh:
            expected = fingerprint(fh.read(), seg.describe())
    try:
        hits = query(index, args.keywords, any_of=args.any_of, expected_fingerprint=expected)
    except UnknownKeyword as exc:
        print(f"riq: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for h in hits:
        print(h)
    return EXIT_OK


def cmd_synth(args) -> int:
    if min(args.train, args.test, args.scenes) < 0 or args.size < 16:
        raise UsageError("counts must be >= 0 and --size >= 16")
    generate_dataset(args.output, seed=args.seed,
                     counts=SynthCounts(args.train, args.test, args.scenes), size=args.size)
    print(f"wrote {args.train} train, {args.test} test, {args.scenes} scene images to {args.output}")
    return EXIT_OK


def main(argv=None) -> int:
    import warnings

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("always")
    np.seterr(over="ignore")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"riq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RiqError, OSError) as exc:
        print(f"riq: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
