"""Command-line entry point: ``phonojsd <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 computation
error (e.g. no n-grams on one side). Diagnostics go to stderr; data goes to
stdout or to ``--out`` (written atomically).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .divergence import LOG_BASES, jsd_profile
from .errors import ComputationError, DataError
from .ngram_stats import MAX_ORDER, count_ngrams, read_table, write_table
from .phonemizer import OovStats, load_lexicon, parse_phoneme_line, phonemize_lines
from .report import (
    AnalyzeParams,
    analyze_pair,
    canonical_json,
    emit_report,
    emit_scatter,
    load_annotations,
    round_float,
    scatter_points,
    write_atomic,
)
from .rng import MASK64
from .sampler import (
    SpeechManifest,
    derive_matched_unmatched,
    load_manifest,
    split_train_valid,
    subsample_sentences,
    subsample_speech_hours,
    write_manifest,
)
from .trainability import DEFAULT_BAND, builtin_profiles, classify, get_profile, load_profiles

log = logging.getLogger("phonojsd")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v <= MASK64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _order(text):
    v = int(text)
    if not 1 <= v <= MAX_ORDER:
        raise argparse.ArgumentTypeError(f"n must be in 1..{MAX_ORDER}")
    return v


def _oov(text):
    return text.replace("_", "-")


def _write(data: bytes, out=None):
    if out:
        write_atomic(data, out)
        return
    stream = getattr(sys.stdout, "buffer", None)
    if stream is not None:
        stream.write(data)
        stream.flush()
    else:
        sys.stdout.write(data.decode("utf-8"))


def _read_stdin_lines():
    return sys.stdin


def _lexicon(args, unk=False):
    lex = load_lexicon(args.lexicon, strip_stress=args.strip_stress)
    return lex.with_unk() if unk else lex


def _profiles(args):
    return load_profiles(args.profiles_file) if getattr(args, "profiles_file", None) else builtin_profiles()


def cmd_phonemize(args):
    lex = _lexicon(args, unk=args.oov == "unk")
    stats = OovStats()
    out = []
    for seq in phonemize_lines(_read_stdin_lines(), lex, args.oov.replace("-", "_"), args.sil_rate, args.seed, stats):
        out.append(" ".join(seq.labels()) + "\n")
    _write("".join(out).encode("utf-8"), args.out)
    log.info(
        "%d sentences, %d skipped (OOV), %d empty, %d OOV tokens",
        stats.sentences,
        stats.skipped,
        stats.empty,
        stats.oov_tokens,
    )


def cmd_ngrams(args):
    lex = _lexicon(args, unk=args.unk)
    inv = lex.inventory

    def seqs():
        for line_no, line in enumerate(_read_stdin_lines(), 1):
            try:
                yield parse_phoneme_line(line, inv)
            except DataError as e:
                raise DataError(f"<stdin>:{line_no}: {e}") from None

    table = count_ngrams(seqs(), args.n, args.include_sil, inventory=inv)
    write_table(table, args.out)
    log.info("wrote %s (%s)", args.out, table)


def cmd_jsd(args):
    speech = read_table(args.speech)
    text = read_table(args.text)
    prof = jsd_profile(speech, text, args.n, args.log_base, args.speech, args.text)
    if not prof.values:
        raise ComputationError("no order has n-grams on both sides")
    for n, reason in prof.omitted:
        log.warning("order %d omitted: %s", n, reason)
    _write(canonical_json(prof.to_dict()), args.out)


def cmd_analyze(args):
    params = AnalyzeParams(
        oov=args.oov.replace("-", "_"),
        strip_stress=args.strip_stress,
        include_sil=args.include_sil,
        sil_rate=args.sil_rate,
        seed=args.seed,
        log_base=args.log_base,
        profile=args.profile,
        band=args.band,
        speech_id=args.speech_id,
        text_id=args.text_id,
        profiles=_profiles(args),
    )
    get_profile(params.profile, params.profiles)
    report = analyze_pair(args.speech, args.text, args.lexicon, params)
    _write(emit_report(report, args.format), args.out)


def cmd_classify(args):
    profile = get_profile(args.profile, _profiles(args))
    verdict = classify(args.jsd4, profile, args.speech_hours, args.band)
    obj = verdict.to_json()
    obj["margin"] = round_float(verdict.margin)
    obj["jsd4"] = args.jsd4
    obj["threshold"] = profile.threshold
    _write(canonical_json(obj), args.out)


def _write_split_texts(manifest, selection, args):
    if args.manifest_out:
        chosen = set(selection.ids)
        write_manifest(SpeechManifest(r for r in manifest if r.utt_id in chosen), args.manifest_out)
    if args.matched_out or args.unmatched_out:
        matched, unmatched = derive_matched_unmatched(manifest, selection)
        if args.matched_out:
            write_atomic("".join(t + "\n" for t in matched).encode("utf-8"), args.matched_out)
        if args.unmatched_out:
            write_atomic("".join(t + "\n" for t in unmatched).encode("utf-8"), args.unmatched_out)


def cmd_subsample(args):
    if args.mode == "sentences":
        lines = [line.rstrip("\n") for line in _read_stdin_lines()]
        picked = subsample_sentences(lines, args.k, args.seed)
        _write("".join(s + "\n" for s in picked).encode("utf-8"), args.out)
        return
    manifest = load_manifest(args.manifest)
    if args.mode == "hours":
        sel = subsample_speech_hours(manifest, args.target, args.seed)
        _write_split_texts(manifest, sel, args)
        _write(canonical_json(sel.to_json()), args.out)
    else:
        train, valid = split_train_valid(manifest, args.valid_ratio, args.seed)
        _write_split_texts(manifest, train, args)
        _write(canonical_json({"train": train.to_json(), "valid": valid.to_json()}), args.out)


def cmd_scatter(args):
    notes = load_annotations(args.annotations) if args.annotations else {}
    points = []
    for path in args.reports:
        with open(path, encoding="utf-8") as f:
            rep = json.load(f)
        label = f"{rep['speech']['id']}-{rep['text']['id']}"
        per, condition = notes.get(label, (None, args.condition))
        points.extend(scatter_points(rep, per, condition or args.condition, label))
    _write(emit_scatter(points), args.out)


def build_parser():
    p = _Parser(prog="phonojsd", description="Phoneme n-gram JSD between speech transcripts and text corpora.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    lex = _Parser(add_help=False)
    lex.add_argument("--lexicon", required=True, help="CMUdict-style pronunciation lexicon")
    lex.add_argument("--strip-stress", action=argparse.BooleanOptionalAction, default=True)

    outp = _Parser(add_help=False)
    outp.add_argument("--out", help="write here instead of stdout")

    seed = _Parser(add_help=False)
    seed.add_argument("--seed", type=_u64, default=0)

    oov = _Parser(add_help=False)
    oov.add_argument("--oov", type=_oov, choices=["drop-sentence", "drop-word", "unk"], default="drop-sentence")
    oov.add_argument("--sil-rate", type=float, default=0.25)

    sp = sub.add_parser("phonemize", parents=[lex, oov, seed, outp], help="text lines on stdin -> phoneme lines")
    sp.set_defaults(func=cmd_phonemize)

    sp = sub.add_parser("ngrams", parents=[lex], help="phoneme lines on stdin -> binary count table")
    sp.add_argument("--n", type=_order, default=MAX_ORDER)
    sp.add_argument("--include-sil", action="store_true")
    sp.add_argument("--unk", action="store_true", help="inventory includes UNK (input made with --oov unk)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_ngrams)

    sp = sub.add_parser("jsd", parents=[outp], help="JSD profile between two count tables")
    sp.add_argument("--speech", required=True)
    sp.add_argument("--text", required=True)
    sp.add_argument("--n", type=_order, default=MAX_ORDER)
    sp.add_argument("--log-base", choices=LOG_BASES, default="nats")
    sp.set_defaults(func=cmd_jsd)

    sp = sub.add_parser("analyze", parents=[lex, oov, seed, outp], help="full pipeline for one speech/text pair")
    sp.add_argument("--speech", required=True, help="manifest TSV: utt_id, duration_seconds, transcript")
    sp.add_argument("--text", required=True, help="text corpus, one sentence per line")
    sp.add_argument("--profile", default="clean_speech")
    sp.add_argument("--profiles-file")
    sp.add_argument("--include-sil", action="store_true")
    sp.add_argument("--log-base", choices=LOG_BASES, default="nats")
    sp.add_argument("--band", type=float, default=DEFAULT_BAND)
    sp.add_argument("--format", choices=["json", "tsv"], default="json")
    sp.add_argument("--speech-id")
    sp.add_argument("--text-id")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("classify", parents=[outp], help="verdict for a 4-gram JSD value")
    sp.add_argument("--jsd4", type=float, required=True)
    sp.add_argument("--profile", default="clean_speech")
    sp.add_argument("--profiles-file")
    sp.add_argument("--speech-hours", type=float)
    sp.add_argument("--band", type=float, default=DEFAULT_BAND)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("subsample", help="sentence caps, hour caps and train/valid splits")
    modes = sp.add_subparsers(dest="mode", required=True, parser_class=_Parser)
    m = modes.add_parser("sentences", parents=[seed, outp], help="sentences on stdin -> k of them")
    m.add_argument("--k", type=int, required=True)
    splits = _Parser(add_help=False)
    splits.add_argument("--manifest", required=True)
    splits.add_argument("--matched-out", help="write transcripts of the selected utterances here")
    splits.add_argument("--unmatched-out", help="write transcripts of the remaining utterances here")
    splits.add_argument("--manifest-out", help="write the selected utterances here as a manifest")
    m = modes.add_parser("hours", parents=[splits, seed, outp], help="cap a manifest to a number of hours")
    m.add_argument("--target", type=float, required=True, help="hours")
    m = modes.add_parser("split", parents=[splits, seed, outp], help="seeded train/valid split")
    m.add_argument("--valid-ratio", type=float, default=0.2)
    sp.set_defaults(func=cmd_subsample)

    sp = sub.add_parser("scatter", parents=[outp], help="JSD-PER scatter CSV from report JSON files")
    sp.add_argument("--reports", nargs="+", required=True)
    sp.add_argument("--annotations", help="TSV: pair, PER, condition")
    sp.add_argument("--condition", default="")
    sp.set_defaults(func=cmd_scatter)
    return p


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        args.func(args)
    except ComputationError as e:
        print(f"phonojsd: computation error: {e}", file=sys.stderr)
        return 3
    except (DataError, OSError, json.JSONDecodeError) as e:
        print(f"phonojsd: data error: {e}", file=sys.stderr)
        return 2
    except (KeyError, ValueError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"phonojsd: error: {msg}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
