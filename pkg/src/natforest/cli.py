"""Command-line front end: ``natforest <subcommand> ...``.

Every subcommand accepts ``--config FILE`` holding ``key = value`` lines;
keys are flag names (dashes or underscores) and flags given on the command
line win. Exit codes: 0 success, 1 usage error, 2 bad input data, 3 partial
completion.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional, Sequence

from . import __version__

log = logging.getLogger("natforest")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def read_config(path) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{ln}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) in (None, [], "")]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"{args.command}: missing required {flags}")


def _u64(text) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _when(text) -> datetime:
    from .ingest import parse_time
    try:
        return parse_time(text if "T" in text else text + "T00:00:00Z")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


# -- subcommands ----------------------------------------------------------------

def cmd_acquire(args) -> int:
    from .acquire import (AcquireStats, AcquisitionError, RateBudget, SearchQuery,
                          acquire, acquire_users)
    from .ingest import ArchiveWriter, write_users
    _need(args, "out", "endpoint", "start_time", "end_time")
    if bool(args.country) == bool(args.users):
        raise UsageError("acquire: give exactly one of --country or --users")
    budget = RateBudget(args.max_requests, args.window)
    token = os.environ.get(args.token_env) if args.token_env else None
    headers = {"authorization": f"Bearer {token}"} if token else None
    stats = AcquireStats()
    retry = dict(max_retries=args.retries, backoff=args.backoff)
    with ArchiveWriter(args.out, append=args.append) as sink:
        try:
            if args.country:
                q = SearchQuery(args.start_time, args.end_time, country_code=args.country,
                                lang=args.lang, max_results=args.max_results)
                acquire(q, args.endpoint, budget, sink, stats=stats, headers=headers, **retry)
            else:
                names = [ln.strip() for ln in Path(args.users).read_text(encoding="utf-8").splitlines()
                         if ln.strip()]
                acquire_users(names, args.start_time, args.end_time, args.endpoint, budget, sink,
                              lang=args.lang, stats=stats, headers=headers, **retry)
        except AcquisitionError as exc:
            print(f"acquire: stopped early after {exc.count} rows: {exc}", file=sys.stderr)
            return EXIT_PARTIAL
        finally:
            if args.users_out and stats.users:
                write_users(sorted(stats.users.values(), key=lambda u: u.author_id), args.users_out)
    print(f"requests={stats.requests} pages={stats.pages} rows={stats.written} "
          f"duplicates={stats.duplicates} bad={stats.bad_records}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    from .ingest import ingest
    _need(args, "tweets", "users", "out")
    _, report = ingest(args.tweets, args.users, args.out, args.referenced)
    print(report)
    return EXIT_OK


def cmd_features(args) -> int:
    from .features import compute_features, write_features
    from .ingest import load_corpus
    _need(args, "corpus", "out")
    rows = compute_features(load_corpus(args.corpus))
    write_features(rows, args.out)
    print(f"{len(rows)} users -> {args.out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    from .features import read_features, write_features
    from .sampling import draw_sample, plan_sample
    _need(args, "input", "out")
    rows = read_features(args.input)
    n = args.n if args.n is not None else plan_sample(0.5, args.confidence, args.error).n
    if n > len(rows):
        raise DataError(f"sample of {n} requested but only {len(rows)} users")
    write_features(draw_sample(rows, n, args.seed), args.out)
    print(f"{n} of {len(rows)} users -> {args.out}")
    return EXIT_OK


def cmd_label(args) -> int:
    from .features import read_features
    from .ingest import load_corpus
    from .labeling import run_label_session
    _need(args, "sample", "corpus", "annotator")
    out = args.out or f"labels_{args.annotator}.csv"
    res = run_label_session(read_features(args.sample), load_corpus(args.corpus).tweets,
                            args.annotator, out)
    print(f"annotated={res.annotated} skipped={res.skipped} pending={len(res.pending)} -> {out}")
    return EXIT_OK


def cmd_adjudicate(args) -> int:
    from .labeling import adjudicate, read_annotations, write_adjudicated
    _need(args, "input", "out")
    groups = [read_annotations(p) for p in args.input]
    labels = adjudicate(groups)
    write_adjudicated(labels, args.out)
    ties = [r.author_id for r in labels if not r.resolved]
    print(f"{len(labels)} users, {len(ties)} unresolved -> {args.out}")
    if ties:
        print("unresolved (settle by hand): " + " ".join(map(str, ties)), file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _labeled(args):
    from .features import read_features
    from .labeling import read_labels
    return read_features(args.features), read_labels(args.labels)


def cmd_search(args) -> int:
    from .search import default_workers, labeled_matrix, run_search, write_results
    _need(args, "labels", "features")
    feats, labels = _labeled(args)
    X, y, _ = labeled_matrix(feats, labels)
    cells = None
    if args.cells:
        a, _, b = args.cells.partition(":")
        cells = range(int(a), int(b))
    workers = args.workers or default_workers()
    last = [-1]

    def progress(done, total):
        pct = 100 * done // total
        if pct != last[0]:
            last[0] = pct
            print(f"\r{done}/{total} cells ({pct}%)", end="", file=sys.stderr, flush=True)

    res = run_search(X, y, base_seed=args.seed, workers=workers, cells=cells,
                     cv=not args.no_cv, progress=None if args.quiet else progress)
    if not args.quiet:
        print(file=sys.stderr)
    rows = res.rows()
    write_results(rows, args.out)
    print(f"{len(rows)} cells, test size {res.n_test} -> {args.out}")
    return EXIT_OK


def cmd_select(args) -> int:
    from .classify_eval import ChampionSpec, train_final
    from .search import format_precision, read_results, select_model
    _need(args, "results")
    rows = select_model(read_results(args.results), args.fp_max, args.top)
    if not rows:
        print(f"no row with FP <= {args.fp_max}; rerun with a larger --fp-max", file=sys.stderr)
        return EXIT_DATA if args.model_out else EXIT_OK
    print("num\tTN\tFP\tFN\tTP\tprecision\tcriterion\tclass_weight\tcolumns")
    for r in rows:
        print(f"{r.num}\t{r.TN}\t{r.FP}\t{r.FN}\t{r.TP}\t{format_precision(r.precision)}\t{r.criterion}\t{r.class_weight}\t"
              + ",".join(r.selected_cols))
    if args.model_out:
        _need(args, "features", "labels")
        feats, labels = _labeled(args)
        spec = ChampionSpec.from_row(rows[0], args.seed)
        model = train_final(feats, labels, spec, train_split=args.train_split, split_seed=args.seed)
        model.meta.update({"results_num": spec.num, "base_seed": args.seed,
                           "trained_on": "train split" if args.train_split else "full sample"})
        model.save(args.model_out)
        print(f"champion {spec.num} ({', '.join(spec.columns)}) -> {args.model_out}")
    return EXIT_OK


def cmd_classify(args) -> int:
    from .classify_eval import classify_population, extract_class1, follower_diagnostic
    from .features import read_features, write_features
    from .forest import TrainedForest
    _need(args, "model", "features", "out")
    try:
        model = TrainedForest.load(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot load model {args.model}: {exc}") from exc
    out = classify_population(model, read_features(args.features))
    write_features(out, args.out)
    k = sum(r.pred for r in out)
    print(f"{len(out)} users, {k} classified 1 -> {args.out}")
    if args.class1_out:
        write_features(extract_class1(out), args.class1_out)
    d = follower_diagnostic(out)
    if d["n"]:
        print(f"top-decile followers (>= {d['threshold']:.0f}): {d['pred1']} of {d['n']} classified 1 "
              f"({100 * d['share1_top']:.1f}% vs {100 * d['share1_all']:.1f}% overall)")
    return EXIT_OK


def _report_rows(specs, populations):
    from .classify_eval import ReportRow
    from .labeling import read_labels
    rows = []
    for spec in specs:
        name, sep, val = spec.partition("=")
        if not sep:
            raise UsageError(f"report: expected NAME=K/N or NAME=labels.csv, got {spec!r}")
        if "/" in val and not Path(val).exists():
            k, n = (int(x) for x in val.split("/", 1))
        else:
            labels = read_labels(val)
            k, n = sum(labels.values()), len(labels)
        rows.append(ReportRow(name, populations.get(name), n, k))
    return rows


def cmd_report(args) -> int:
    from .classify_eval import build_report
    _need(args, "before", "after")
    pops = {}
    for p in args.population or []:
        name, _, val = p.partition("=")
        pops[name] = int(val)
    rep = build_report(_report_rows(args.before, pops), _report_rows(args.after, pops))
    text = rep.to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_report_sources(args) -> int:
    from .ingest import format_sources, parse_archive, report_sources
    _need(args, "tweets")
    tweets, rep = parse_archive(args.tweets)
    print(format_sources(report_sources(tweets), args.top))
    return EXIT_OK


def cmd_synth(args) -> int:
    from dataclasses import replace
    from .synth import SynthConfig, generate_corpus, no_homophily, read_config as read_synth, \
        strong_homophily, write_corpus
    _need(args, "out")
    if args.synth_config:
        cfg = read_synth(args.synth_config)
    elif args.preset == "strong":
        cfg = strong_homophily()
    elif args.preset == "none":
        cfg = no_homophily()
    else:
        cfg = SynthConfig()
    over = {k: v for k, v in (("n_users", args.n_users), ("seed", args.seed),
                              ("national_fraction", args.national_fraction)) if v is not None}
    cfg = replace(cfg, **over)
    corpus = generate_corpus(cfg)
    paths = write_corpus(corpus, args.out)
    print(f"{cfg.n_users} users, {len(corpus.tweets)} tweet rows -> {paths['tweets'].parent}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="natforest", description="Find a country's own users from interaction counts.")
    p.add_argument("--version", action="version", version=f"natforest {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--config", help="key = value file with defaults for these flags")
        sp.add_argument("--version", action="version", version=f"natforest {__version__}")
        sp.add_argument("-v", "--verbose", action="store_true")
        sp.set_defaults(func=func)
        return sp

    sp = add("acquire", cmd_acquire, "download tweets from a v2-style search endpoint")
    sp.add_argument("--out")
    sp.add_argument("--endpoint")
    sp.add_argument("--country")
    sp.add_argument("--users", help="file of usernames, one per line")
    sp.add_argument("--lang")
    sp.add_argument("--start-time", type=_when)
    sp.add_argument("--end-time", type=_when)
    sp.add_argument("--max-results", type=int, default=500)
    sp.add_argument("--max-requests", type=int, default=300)
    sp.add_argument("--window", type=float, default=900.0, help="seconds")
    sp.add_argument("--retries", type=int, default=3)
    sp.add_argument("--backoff", type=float, default=1.0, help="first retry delay, doubled each time")
    sp.add_argument("--token-env", default="NATFOREST_BEARER_TOKEN")
    sp.add_argument("--users-out", help="write profiles seen in responses here")
    sp.add_argument("--append", action="store_true")

    sp = add("ingest", cmd_ingest, "validate archives and build a corpus directory")
    sp.add_argument("--tweets")
    sp.add_argument("--users")
    sp.add_argument("--referenced", help="archive of referenced tweets used to resolve authors")
    sp.add_argument("--out")

    sp = add("features", cmd_features, "compute the per-user feature table")
    sp.add_argument("--corpus")
    sp.add_argument("--out")

    sp = add("sample", cmd_sample, "draw a uniform random sample of users")
    sp.add_argument("--in", dest="input")
    sp.add_argument("--n", type=int)
    sp.add_argument("--confidence", type=float, default=0.95)
    sp.add_argument("--error", type=float, default=0.05)
    sp.add_argument("--seed", type=_u64, default=123)
    sp.add_argument("--out")

    sp = add("label", cmd_label, "annotate sampled users in the terminal")
    sp.add_argument("--sample")
    sp.add_argument("--corpus")
    sp.add_argument("--annotator")
    sp.add_argument("--out")

    sp = add("adjudicate", cmd_adjudicate, "merge annotator files by majority vote")
    sp.add_argument("--in", dest="input", nargs="+")
    sp.add_argument("--out")

    sp = add("search", cmd_search, "evaluate every feature subset and forest setting")
    sp.add_argument("--labels")
    sp.add_argument("--features")
    sp.add_argument("--seed", type=_u64, default=123)
    sp.add_argument("--workers", type=int, default=0, help="0 = all available cores")
    sp.add_argument("--cells", help="half-open range A:B of cell numbers")
    sp.add_argument("--no-cv", action="store_true", help="skip cross-validation scores")
    sp.add_argument("--quiet", action="store_true")
    sp.add_argument("--out", default="results.csv")

    sp = add("select", cmd_select, "rank search rows; optionally train the top one")
    sp.add_argument("--results")
    sp.add_argument("--fp-max", type=int, default=1)
    sp.add_argument("--top", type=int, default=20)
    sp.add_argument("--features")
    sp.add_argument("--labels")
    sp.add_argument("--seed", type=_u64, default=123)
    sp.add_argument("--train-split", action="store_true",
                    help="train on the search's training part only")
    sp.add_argument("--model-out")

    sp = add("classify", cmd_classify, "label every user with a trained model")
    sp.add_argument("--model")
    sp.add_argument("--features")
    sp.add_argument("--out")
    sp.add_argument("--class1-out")

    sp = add("report", cmd_report, "compare national proportions before and after")
    sp.add_argument("--before", nargs="+", help="NAME=K/N or NAME=labels.csv")
    sp.add_argument("--after", nargs="+")
    sp.add_argument("--population", nargs="*", help="NAME=USERS")
    sp.add_argument("--out")

    sp = add("report-sources", cmd_report_sources, "tweet counts per client application")
    sp.add_argument("--tweets")
    sp.add_argument("--top", type=int)

    sp = add("synth", cmd_synth, "generate a synthetic corpus with known labels")
    sp.add_argument("--synth-config", help="key = value generator settings")
    sp.add_argument("--preset", choices=("default", "strong", "none"), default="default")
    sp.add_argument("--n-users", type=int)
    sp.add_argument("--national-fraction", type=float)
    sp.add_argument("--seed", type=_u64)
    sp.add_argument("--out")
    return p


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config`` when one is given."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        for a in sub._actions:  # flag spelling works too, e.g. "in" for --in
            for opt in a.option_strings:
                known.setdefault(opt.lstrip("-").replace("-", "_"), a)
        defaults = {}
        for k, v in values.items():
            if k not in known or k in ("config", "help", "version", "func"):
                raise UsageError(f"{args.config}: unknown key {k!r} for {args.command}")
            action = known[k]
            k = action.dest
            if action.nargs in ("+", "*"):
                v = v.split()
            elif isinstance(action, argparse._StoreTrueAction):
                v = v.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                try:
                    v = action.type(v)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise UsageError(f"{args.config}: bad value for {k}: {exc}") from exc
            defaults[k] = v
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
        if not getattr(args, "command", None):
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        print(parser.format_usage(), end="", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_PARTIAL
    except Exception as exc:  # data problems surface as typed errors from each stage
        if _is_data_error(exc):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        raise


def _is_data_error(exc) -> bool:
    from .features import FeatureFileError
    from .ingest import ArchiveError
    from .labeling import LabelFileError
    return isinstance(exc, (DataError, FeatureFileError, ArchiveError, LabelFileError,
                            FileNotFoundError, ValueError))


def main() -> None:
    sys.exit(run())
