"""End-to-end pair analysis and machine-readable output.

``analyze_pair`` reads a speech manifest and a text corpus, phonemizes both
sides with the same lexicon and seed, counts n-grams, computes the JSD
profile and classifies the 4-gram value. Reports serialize to canonical JSON
(sorted keys, compact separators, floats rounded to 6 decimals) or to a
single TSV row under :data:`TSV_COLUMNS`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .divergence import JsdProfile, jsd_profile
from .errors import ComputationError, DataError, NoUsableSentencesError
from .ngram_stats import MAX_ORDER, count_ngrams
from .phonemizer import OovStats, load_lexicon, phonemize_lines
from .sampler import iter_manifest
from .trainability import DEFAULT_BAND, TrainabilityVerdict, classify, get_profile

FLOAT_DECIMALS = 6

TSV_COLUMNS = (
    "speech_id",
    "speech_hours",
    "speech_sentences",
    "text_id",
    "text_sentences",
    "oov",
    "strip_stress",
    "include_sil",
    "sil_rate",
    "seed",
    "log_base",
    "speech_skip_rate",
    "text_skip_rate",
    "jsd1",
    "jsd2",
    "jsd3",
    "jsd4",
    "verdict",
    "margin",
    "profile",
    "caveats",
    "version",
)

SCATTER_COLUMNS = ("pair", "order", "jsd", "per", "condition")


@dataclass
class AnalyzeParams:
    oov: str = "drop_sentence"
    strip_stress: bool = True
    include_sil: bool = False
    sil_rate: float = 0.25
    seed: int = 0
    log_base: str = "nats"
    profile: str = "clean_speech"
    band: float = DEFAULT_BAND
    n_max: int = MAX_ORDER
    speech_id: str | None = None
    text_id: str | None = None
    profiles: list | None = None

    def to_json(self) -> dict:
        return {
            "oov": self.oov.replace("-", "_"),
            "strip_stress": self.strip_stress,
            "include_sil": self.include_sil,
            "sil_rate": self.sil_rate,
            "seed": self.seed,
            "log_base": self.log_base,
        }


@dataclass
class PairReport:
    speech_id: str
    speech_hours: float
    speech_sentences: int
    text_id: str
    text_sentences: int
    params: AnalyzeParams
    jsd: JsdProfile
    verdict: TrainabilityVerdict
    speech_stats: OovStats = field(default_factory=OovStats)
    text_stats: OovStats = field(default_factory=OovStats)
    version: str = __version__

    def to_json(self) -> dict:
        r = round_float
        return {
            "speech": {"id": self.speech_id, "hours": r(self.speech_hours), "sentences": self.speech_sentences},
            "text": {"id": self.text_id, "sentences": self.text_sentences},
            "params": self.params.to_json(),
            "oov_stats": {
                "speech_skip_rate": r(self.speech_stats.skip_rate),
                "text_skip_rate": r(self.text_stats.skip_rate),
            },
            "jsd": {str(n): r(v) for n, v in sorted(self.jsd.values.items())},
            "verdict": {
                "label": self.verdict.verdict,
                "margin": r(self.verdict.margin),
                "profile": self.verdict.profile,
                "caveats": list(self.verdict.caveats),
            },
            "version": self.version,
        }


def round_float(x):
    # 0.0 instead of -0.0 keeps output byte-stable
    return round(float(x), FLOAT_DECIMALS) + 0.0


class _ManifestSide:
    """Streams transcripts from a manifest while tallying hours and utterances."""

    def __init__(self, path):
        self.path = path
        self.seconds = []
        self.utterances = 0
        self._seen = set()

    def __iter__(self):
        for rec in iter_manifest(self.path):
            if rec.utt_id in self._seen:
                raise DataError(f"{self.path}: duplicate utterance id {rec.utt_id!r}")
            self._seen.add(rec.utt_id)
            self.utterances += 1
            self.seconds.append(rec.duration)
            yield rec.transcript

    @property
    def hours(self):
        return math.fsum(self.seconds) / 3600.0


class _TextSide:
    def __init__(self, path):
        self.path = path
        self.sentences = 0

    def __iter__(self):
        with open(self.path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    self.sentences += 1
                    yield line


def analyze_pair(speech_manifest_path, text_corpus_path, lexicon_path, params: AnalyzeParams | None = None) -> PairReport:
    """Phonemize both corpora, count 1..4-grams, compute JSD and a verdict.

    Both sides use a silence-insertion generator seeded with ``params.seed``,
    so a text corpus identical to the manifest transcripts yields exactly
    zero divergence with or without SIL.
    """
    params = params or AnalyzeParams()
    profile = get_profile(params.profile, params.profiles)
    lexicon = load_lexicon(lexicon_path, strip_stress=params.strip_stress)
    if params.oov.replace("-", "_") == "unk":
        lexicon = lexicon.with_unk()

    def table_for(lines, stats):
        seqs = phonemize_lines(lines, lexicon, params.oov, params.sil_rate, params.seed, stats)
        return count_ngrams(seqs, params.n_max, params.include_sil, inventory=lexicon.inventory)

    speech = _ManifestSide(speech_manifest_path)
    speech_stats = OovStats()
    speech_table = table_for(speech, speech_stats)
    text = _TextSide(text_corpus_path)
    text_stats = OovStats()
    text_table = table_for(text, text_stats)

    empty = [
        f"{name} ({path}): {stats.sentences} sentences, skip rate {stats.skip_rate:.4f}"
        for name, path, stats in (("speech", speech_manifest_path, speech_stats), ("text", text_corpus_path, text_stats))
        if stats.used == 0
    ]
    if empty:
        raise NoUsableSentencesError("no usable sentences after OOV filtering: " + "; ".join(empty))

    speech_id = params.speech_id or Path(speech_manifest_path).stem
    text_id = params.text_id or Path(text_corpus_path).stem
    profile_values = jsd_profile(speech_table, text_table, params.n_max, params.log_base, speech_id, text_id)
    jsd4 = profile_values.get(MAX_ORDER)
    if jsd4 is None:
        raise ComputationError("no 4-grams observed on at least one side; cannot classify trainability")
    verdict = classify(jsd4, profile, speech.hours, params.band, params.log_base)
    return PairReport(
        speech_id,
        speech.hours,
        speech.utterances,
        text_id,
        text.sentences,
        params,
        profile_values,
        verdict,
        speech_stats,
        text_stats,
    )


def canonical_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False) + "\n").encode(
        "utf-8"
    )


def _fmt(x):
    return "" if x is None else f"{x:.{FLOAT_DECIMALS}f}"


def emit_report(report: PairReport, fmt: str = "json") -> bytes:
    if fmt == "json":
        return canonical_json(report.to_json())
    if fmt != "tsv":
        raise ValueError(f"unknown report format {fmt!r}")
    p = report.params
    row = [
        report.speech_id,
        _fmt(report.speech_hours),
        str(report.speech_sentences),
        report.text_id,
        str(report.text_sentences),
        p.oov,
        str(p.strip_stress).lower(),
        str(p.include_sil).lower(),
        repr(float(p.sil_rate)),
        str(p.seed),
        p.log_base,
        _fmt(report.speech_stats.skip_rate),
        _fmt(report.text_stats.skip_rate),
        *(_fmt(report.jsd.get(n)) for n in range(1, MAX_ORDER + 1)),
        report.verdict.verdict,
        _fmt(report.verdict.margin),
        report.verdict.profile,
        "; ".join(report.verdict.caveats),
        report.version,
    ]
    row = [c.replace("\t", " ").replace("\n", " ") for c in row]
    return ("\t".join(TSV_COLUMNS) + "\n" + "\t".join(row) + "\n").encode("utf-8")


@dataclass(frozen=True)
class ScatterPoint:
    pair: str
    order: int
    jsd: float
    per: float | None = None
    condition: str = ""

    def __post_init__(self):
        if not 1 <= self.order <= MAX_ORDER:
            raise ValueError(f"scatter order must be in 1..{MAX_ORDER}, got {self.order}")
        if self.per is not None and not (self.per >= 0 and math.isfinite(self.per)):
            raise ValueError(f"PER must be finite and >= 0, got {self.per}")


def emit_scatter(points, fmt: str = "csv") -> bytes:
    """CSV rows ``pair,order,jsd,per,condition`` sorted by (pair, order)."""
    if fmt != "csv":
        raise ValueError(f"unknown scatter format {fmt!r}")
    seen = set()
    for p in points:
        key = (p.pair, p.order)
        if key in seen:
            raise ValueError(f"duplicate scatter key {key}")
        seen.add(key)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCATTER_COLUMNS)
    for p in sorted(points, key=lambda p: (p.pair, p.order)):
        w.writerow([p.pair, p.order, f"{p.jsd:.6f}", "" if p.per is None else f"{p.per:.2f}", p.condition])
    return buf.getvalue().encode("utf-8")


def scatter_points(report_json: dict, per: float | None = None, condition: str = "", pair: str | None = None) -> list:
    """One point per JSD order in a serialized :class:`PairReport`."""
    label = pair or f"{report_json['speech']['id']}-{report_json['text']['id']}"
    return [ScatterPoint(label, int(n), float(v), per, condition) for n, v in report_json["jsd"].items()]


def load_annotations(path) -> dict:
    """Read ``pair<TAB>per<TAB>condition`` lines into ``{pair: (per, condition)}``."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if fields[0] == "pair":
                continue
            try:
                per = float(fields[1]) if len(fields) > 1 and fields[1] != "" else None
            except ValueError:
                raise DataError(f"{path}:{line_no}: bad PER value {fields[1]!r}") from None
            out[fields[0]] = (per, fields[2] if len(fields) > 2 else "")
    return out


def write_atomic(data: bytes, path) -> None:
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
