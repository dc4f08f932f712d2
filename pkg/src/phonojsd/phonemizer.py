"""Lexicon-based grapheme-to-phoneme conversion.

Text is normalized, looked up word by word in a CMUdict-style pronunciation
lexicon (primary pronunciation only), and optionally decorated with silence
tokens at word boundaries.
"""

from __future__ import annotations

import hashlib
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import DataError, ParseError
from .rng import Xorshift64Star

SIL = "SIL"
UNK = "UNK"
MAX_INVENTORY = 65535

OOV_POLICIES = ("drop_sentence", "drop_word", "unk")

_VARIANT = re.compile(r"^(.+)\((\d+)\)$")
_STRESS = re.compile(r"^(.*\D)[012]$")
_APOSTROPHES = {"'", "’"}


class PhonemeInventory:
    """Closed, ordered phoneme alphabet with dense ids.

    Labels map to ids ``0..len-1`` in the order given. ``SIL`` must appear
    exactly once. The fingerprint is a short hash of the ordered labels and is
    what count tables and distributions use to refuse cross-inventory
    comparisons.
    """

    __slots__ = ("labels", "_index", "fingerprint")

    def __init__(self, labels: Sequence[str]):
        labels = tuple(labels)
        if any(not isinstance(lab, str) or not lab for lab in labels):
            raise ValueError("phoneme labels must be non-empty strings")
        if len(set(labels)) != len(labels):
            raise ValueError("phoneme labels must be unique")
        if labels.count(SIL) != 1:
            raise ValueError(f"inventory must contain {SIL!r} exactly once")
        if len(labels) > MAX_INVENTORY:
            raise ValueError(f"inventory has {len(labels)} labels; at most {MAX_INVENTORY} supported")
        self.labels = labels
        self._index = {lab: i for i, lab in enumerate(labels)}
        self.fingerprint = hashlib.sha256("\n".join(labels).encode("utf-8")).hexdigest()[:16]

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self._index

    def __eq__(self, other):
        return isinstance(other, PhonemeInventory) and self.labels == other.labels

    def __hash__(self):
        return hash(self.labels)

    def __repr__(self):
        return f"PhonemeInventory({len(self.labels)} labels, fingerprint={self.fingerprint})"

    def id_of(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"phoneme {label!r} not in inventory") from None

    def ids_of(self, labels: Iterable[str]) -> list[int]:
        return [self.id_of(lab) for lab in labels]

    def label_of(self, idx: int) -> str:
        return self.labels[idx]

    @property
    def sil_id(self) -> int:
        return self._index[SIL]

    @property
    def unk_id(self) -> int | None:
        return self._index.get(UNK)

    def extended(self, label: str) -> "PhonemeInventory":
        if label in self._index:
            return self
        return PhonemeInventory(self.labels + (label,))


class PhonemeSequence(NamedTuple):
    """One sentence or utterance as phoneme ids.

    ``word_starts`` holds the interior positions where a new word begins; it is
    what :func:`insert_silence` uses as candidate boundaries.
    """

    ids: np.ndarray
    inventory: PhonemeInventory
    origin: str | None = None
    word_starts: tuple = ()

    def labels(self) -> list[str]:
        return [self.inventory.labels[i] for i in self.ids]

    def __len__(self):
        return len(self.ids)


@dataclass(frozen=True)
class PronunciationLexicon:
    entries: dict
    inventory: PhonemeInventory
    strip_stress: bool = True
    _primary_ids: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._primary_ids is None:
            primary = {}
            for word, prons in self.entries.items():
                if not prons:
                    raise ValueError(f"word {word!r} has no pronunciation")
                for pron in prons:
                    for lab in pron:
                        if lab not in self.inventory:
                            raise ValueError(f"word {word!r} uses phoneme {lab!r} missing from inventory")
                primary[word] = tuple(self.inventory.ids_of(prons[0]))
            object.__setattr__(self, "_primary_ids", primary)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, word):
        return word in self.entries

    def pronunciations(self, word: str) -> tuple:
        return self.entries[word]

    def primary(self, word: str) -> tuple:
        return self.entries[word][0]

    def primary_ids(self, word: str):
        return self._primary_ids.get(word)

    def with_unk(self) -> "PronunciationLexicon":
        """Same entries over an inventory that also holds ``UNK``."""
        if UNK in self.inventory:
            return self
        return PronunciationLexicon(self.entries, self.inventory.extended(UNK), self.strip_stress)


def strip_stress_marker(label: str) -> str:
    m = _STRESS.match(label)
    return m.group(1) if m else label


def _decode(raw: bytes) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return raw.decode("latin-1")


def parse_lexicon(lines: Iterable[str], strip_stress: bool = True, path=None) -> PronunciationLexicon:
    entries: dict[str, list[tuple]] = {}
    seen_labels: dict[str, None] = {}
    for line_no, line in enumerate(lines, 1):
        if line.startswith(";;;"):
            continue
        fields = line.split()
        if not fields:
            continue
        if len(fields) < 2:
            raise ParseError("expected a word followed by at least one phoneme", path, line_no)
        word = fields[0]
        m = _VARIANT.match(word)
        if m:
            word = m.group(1)
        word = word.upper()
        phones = fields[1:]
        if strip_stress:
            phones = [strip_stress_marker(p) for p in phones]
        pron = tuple(phones)
        prons = entries.setdefault(word, [])
        if pron not in prons:
            prons.append(pron)
        for p in pron:
            seen_labels.setdefault(p)
    seen_labels.pop(SIL, None)
    inventory = PhonemeInventory(list(seen_labels) + [SIL])
    return PronunciationLexicon({w: tuple(p) for w, p in entries.items()}, inventory, strip_stress)


def load_lexicon(path, strip_stress: bool = True) -> PronunciationLexicon:
    """Read a CMUdict-style lexicon file.

    Lines are ``WORD PH1 PH2 ...``; ``WORD(2)`` adds an alternative
    pronunciation to ``WORD``; lines starting with ``;;;`` are comments and
    blank lines are ignored. The file is decoded as UTF-8, falling back to
    Latin-1 if that fails.

    With ``strip_stress`` a trailing 0/1/2 is removed from every label
    (CMUdict marks stress on vowels only). The inventory lists labels in order
    of first appearance followed by ``SIL``.
    """
    with open(path, "rb") as f:
        text = _decode(f.read())
    return parse_lexicon(text.splitlines(), strip_stress=strip_stress, path=path)


def normalize_text(raw: str) -> list[str]:
    """Upper-case, drop punctuation except apostrophes inside words, split."""
    text = raw.upper()
    out = []
    n = len(text)
    for i, ch in enumerate(text):
        if not unicodedata.category(ch).startswith("P"):
            out.append(ch)
        elif ch in _APOSTROPHES and 0 < i < n - 1 and text[i - 1].isalnum() and text[i + 1].isalnum():
            out.append("'")
    return "".join(out).split()


@dataclass
class OovStats:
    """Running totals for one side of a corpus pair."""

    sentences: int = 0
    skipped: int = 0
    empty: int = 0
    tokens: int = 0
    oov_tokens: int = 0

    @property
    def used(self) -> int:
        return self.sentences - self.skipped - self.empty

    @property
    def skip_rate(self) -> float:
        return self.skipped / self.sentences if self.sentences else 0.0


def _check_policy(oov_policy):
    policy = oov_policy.replace("-", "_")
    if policy not in OOV_POLICIES:
        raise ValueError(f"unknown OOV policy {oov_policy!r}; expected one of {OOV_POLICIES}")
    return policy


def phonemize_sentence(
    tokens: Sequence[str],
    lexicon: PronunciationLexicon,
    oov_policy: str = "drop_sentence",
    stats: OovStats | None = None,
    origin: str | None = None,
) -> PhonemeSequence | None:
    """Concatenate primary pronunciations of ``tokens``.

    Returns ``None`` when the sentence is skipped under ``drop_sentence``.
    The ``unk`` policy needs a lexicon whose inventory contains ``UNK``
    (see :meth:`PronunciationLexicon.with_unk`).
    """
    policy = _check_policy(oov_policy)
    unk_id = lexicon.inventory.unk_id
    if policy == "unk" and unk_id is None:
        raise ValueError("the 'unk' OOV policy needs an inventory containing UNK; use lexicon.with_unk()")
    ids: list[int] = []
    starts = []
    oov = 0
    for tok in tokens:
        pron = lexicon.primary_ids(tok)
        if pron is None:
            oov += 1
            if policy != "unk":
                continue
            pron = (unk_id,)
        if ids:
            starts.append(len(ids))
        ids.extend(pron)
    if stats is not None:
        stats.sentences += 1
        stats.tokens += len(tokens)
        stats.oov_tokens += oov
    if oov and policy == "drop_sentence":
        if stats is not None:
            stats.skipped += 1
        return None
    return PhonemeSequence(np.array(ids, dtype=np.uint16), lexicon.inventory, origin, tuple(starts))


def insert_silence(seq: PhonemeSequence, word_boundaries: Sequence[int], rate: float, rng: Xorshift64Star) -> PhonemeSequence:
    """Surround ``seq`` with SIL and put SIL at each boundary with probability ``rate``.

    One ``rng.random()`` draw is consumed per boundary, in order, so the
    output is a pure function of the input and the generator state.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"silence rate must be in [0, 1], got {rate}")
    n = len(seq.ids)
    prev = 0
    for b in word_boundaries:
        if not prev < b < n:
            raise ValueError("word boundaries must be strictly increasing interior positions")
        prev = b
    sil = seq.inventory.sil_id
    pieces = [np.array([sil], dtype=np.uint16)]
    start = 0
    for b in word_boundaries:
        if rng.random() < rate:
            pieces.append(seq.ids[start:b])
            pieces.append(np.array([sil], dtype=np.uint16))
            start = b
    pieces.append(seq.ids[start:])
    pieces.append(np.array([sil], dtype=np.uint16))
    return PhonemeSequence(np.concatenate(pieces).astype(np.uint16, copy=False), seq.inventory, seq.origin)


def phonemize_lines(
    lines: Iterable[str],
    lexicon: PronunciationLexicon,
    oov_policy: str = "drop_sentence",
    sil_rate: float = 0.0,
    seed: int = 0,
    stats: OovStats | None = None,
) -> Iterator[PhonemeSequence]:
    """Stream sentences through normalize, lookup and silence insertion.

    Skipped and empty sentences are not yielded; both are tallied in
    ``stats``. Silence is inserted with a generator seeded by ``seed``, so two
    identical inputs give identical outputs.
    """
    if stats is None:
        stats = OovStats()
    rng = Xorshift64Star(seed)
    for line in lines:
        seq = phonemize_sentence(normalize_text(line), lexicon, oov_policy, stats)
        if seq is None:
            continue
        if len(seq.ids) == 0:
            stats.empty += 1
            continue
        yield insert_silence(seq, seq.word_starts, sil_rate, rng)


def parse_phoneme_line(line: str, inventory: PhonemeInventory) -> PhonemeSequence:
    try:
        ids = inventory.ids_of(line.split())
    except KeyError as e:
        raise DataError(str(e.args[0])) from None
    return PhonemeSequence(np.array(ids, dtype=np.uint16), inventory)
