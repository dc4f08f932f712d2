"""Seeded corpus-quantity protocols: sentence caps, hour caps, train/valid splits.

All randomness comes from :class:`~phonojsd.rng.Xorshift64Star`, so every
selection is a pure function of its input and seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .errors import DataError, ParseError
from .rng import Xorshift64Star, check_seed

PROTOCOLS = ("sentence_cap", "hour_cap", "ratio_split")


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    duration: float
    transcript: str


class SpeechManifest:
    """Utterance records standing in for a speech corpus (its transcription side)."""

    def __init__(self, records: Iterable[Utterance]):
        self.records = list(records)
        self._by_id = {}
        for rec in self.records:
            if rec.utt_id in self._by_id:
                raise DataError(f"duplicate utterance id {rec.utt_id!r}")
            if not math.isfinite(rec.duration) or rec.duration < 0:
                raise DataError(f"utterance {rec.utt_id!r} has invalid duration {rec.duration!r}")
            self._by_id[rec.utt_id] = rec

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __contains__(self, utt_id):
        return utt_id in self._by_id

    def __getitem__(self, utt_id) -> Utterance:
        return self._by_id[utt_id]

    @property
    def ids(self) -> list:
        return [r.utt_id for r in self.records]

    @property
    def total_seconds(self) -> float:
        return math.fsum(r.duration for r in self.records)

    @property
    def total_hours(self) -> float:
        return self.total_seconds / 3600.0


def iter_manifest(path) -> Iterator[Utterance]:
    """Stream ``utt_id<TAB>duration_seconds<TAB>transcript`` records."""
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t", 2)
            if len(fields) != 3:
                raise ParseError("expected utt_id<TAB>duration<TAB>transcript", path, line_no)
            utt_id, dur, transcript = fields
            try:
                duration = float(dur)
            except ValueError:
                raise ParseError(f"bad duration {dur!r}", path, line_no) from None
            if not math.isfinite(duration) or duration < 0:
                raise ParseError(f"duration must be finite and non-negative, got {dur!r}", path, line_no)
            yield Utterance(utt_id, duration, transcript)


def load_manifest(path) -> SpeechManifest:
    return SpeechManifest(iter_manifest(path))


def write_manifest(manifest: SpeechManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in manifest:
            f.write(f"{r.utt_id}\t{r.duration!r}\t{r.transcript}\n")


@dataclass(frozen=True)
class Selection:
    """Chosen utterance ids, kept in manifest order."""

    ids: tuple
    seed: int
    protocol: str

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")

    def __len__(self):
        return len(self.ids)

    def __contains__(self, utt_id):
        return utt_id in self.id_set

    @property
    def id_set(self) -> frozenset:
        return frozenset(self.ids)

    def to_json(self) -> dict:
        return {"seed": self.seed, "protocol": self.protocol, "ids": list(self.ids)}

    @classmethod
    def from_json(cls, obj) -> "Selection":
        return cls(tuple(obj["ids"]), int(obj["seed"]), obj["protocol"])


def save_selection(selection: Selection, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(selection.to_json(), f, ensure_ascii=False)
        f.write("\n")


def load_selection(path) -> Selection:
    with open(path, encoding="utf-8") as f:
        return Selection.from_json(json.load(f))


def _in_manifest_order(manifest, chosen) -> tuple:
    return tuple(r.utt_id for r in manifest if r.utt_id in chosen)


def subsample_sentences(corpus: Sequence, k: int, seed: int) -> list:
    """Uniform sample of ``min(k, len(corpus))`` items without replacement, in original order.

    The sample is the first ``k`` slots of a partial Fisher-Yates shuffle
    run front to back (slot ``i`` swaps with ``i + below(n - i)``), tracked
    sparsely so the cost is O(k) draws.
    """
    check_seed(seed)
    if k < 0:
        raise ValueError("k must be >= 0")
    n = len(corpus)
    if k >= n:
        return list(corpus)
    rng = Xorshift64Star(seed)
    swapped = {}
    picked = []
    for i in range(k):
        j = i + rng.below(n - i)
        picked.append(swapped.get(j, j))
        swapped[j] = swapped.get(i, i)
    picked.sort()
    return [corpus[i] for i in picked]


def subsample_speech_hours(manifest: SpeechManifest, target_hours: float, seed: int) -> Selection:
    """Take shuffled utterances until the running duration reaches ``target_hours``.

    The utterance that crosses the target is kept, so the selected total lies
    in ``[target, target + longest utterance)`` unless the whole manifest is
    shorter than the target.
    """
    check_seed(seed)
    if not target_hours > 0:
        raise ValueError("target_hours must be positive")
    if len(manifest) == 0:
        raise DataError("cannot subsample an empty manifest")
    if not manifest.total_seconds > 0:
        raise DataError("manifest has zero total duration")
    target = target_hours * 3600.0
    order = list(range(len(manifest)))
    Xorshift64Star(seed).shuffle(order)
    chosen = set()
    total = 0.0
    for i in order:
        if total >= target:
            break
        rec = manifest.records[i]
        chosen.add(rec.utt_id)
        total += rec.duration
    return Selection(_in_manifest_order(manifest, chosen), seed, "hour_cap")


def split_train_valid(manifest: SpeechManifest, valid_ratio: float, seed: int) -> tuple:
    """Shuffle, then ``ceil((1 - valid_ratio) * N)`` utterances to train and the rest to valid."""
    check_seed(seed)
    if not 0.0 < valid_ratio < 1.0:
        raise ValueError(f"valid_ratio must be in (0, 1), got {valid_ratio}")
    if len(manifest) == 0:
        raise DataError("cannot split an empty manifest")
    ids = manifest.ids
    Xorshift64Star(seed).shuffle(ids)
    # round away float noise such as 0.7 * 10 = 7.000000000000001 before ceil
    n_train = math.ceil(round((1.0 - valid_ratio) * len(ids), 9))
    train = set(ids[:n_train])
    valid = set(ids[n_train:])
    return (
        Selection(_in_manifest_order(manifest, train), seed, "ratio_split"),
        Selection(_in_manifest_order(manifest, valid), seed, "ratio_split"),
    )


def derive_matched_unmatched(manifest: SpeechManifest, selection: Selection) -> tuple:
    """Transcripts of the selected utterances and of everything else, in manifest order."""
    chosen = selection.id_set
    missing = [u for u in selection.ids if u not in manifest]
    if missing:
        raise DataError(f"selection references {len(missing)} id(s) absent from the manifest, e.g. {missing[0]!r}")
    matched, unmatched = [], []
    for r in manifest:
        (matched if r.utt_id in chosen else unmatched).append(r.transcript)
    return matched, unmatched
