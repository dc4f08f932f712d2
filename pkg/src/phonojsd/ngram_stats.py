"""Exact n-gram counting (orders 1..4) over phoneme streams.

An n-gram is packed into one unsigned 64-bit integer, 16 bits per phoneme id
with the first phoneme in the most significant occupied slot, so numeric
order on packed keys is lexicographic order on id tuples. A count table holds,
per order, a sorted array of distinct keys and a parallel array of counts,
which costs 16 bytes per distinct n-gram and makes merging a sorted-array
operation.

Windows never straddle two sequences and no padding symbols are added.
"""

from __future__ import annotations

import json
import math
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError, EmptyDistributionError, InventoryMismatchError
from .phonemizer import PhonemeInventory, PhonemeSequence

MAX_ORDER = 4
ID_BITS = 16
DEFAULT_CHUNK_TOKENS = 1 << 18

TABLE_MAGIC = b"PJNG"
TABLE_VERSION = 1
_HEADER = struct.Struct("<4sHHB3x16s4Q")
_ENTRY = np.dtype([("key", "<u8"), ("count", "<u8")])


def _check_order(order, name="order"):
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"{name} must be in 1..{MAX_ORDER}, got {order}")


def pack_ids(ids) -> int:
    ids = tuple(int(i) for i in ids)
    _check_order(len(ids), "n-gram length")
    key = 0
    for i in ids:
        if not 0 <= i < (1 << ID_BITS):
            raise ValueError(f"phoneme id {i} does not fit in {ID_BITS} bits")
        key = (key << ID_BITS) | i
    return key


def unpack_key(packed: int, order: int) -> tuple:
    mask = (1 << ID_BITS) - 1
    packed = int(packed)
    return tuple((packed >> (ID_BITS * (order - 1 - j))) & mask for j in range(order))


@dataclass(frozen=True, order=True)
class NGramKey:
    order: int
    packed: int

    @classmethod
    def from_ids(cls, ids) -> "NGramKey":
        ids = tuple(ids)
        return cls(len(ids), pack_ids(ids))

    @property
    def ids(self) -> tuple:
        return unpack_key(self.packed, self.order)

    def labels(self, inventory: PhonemeInventory) -> tuple:
        return tuple(inventory.labels[i] for i in self.ids)


class NGramCountTable:
    """Per-order sorted (key, count) arrays plus inventory metadata.

    Treat instances as immutable; :func:`merge` and :func:`count_ngrams`
    always build new tables.
    """

    def __init__(self, inventory: PhonemeInventory, n_max: int, include_sil: bool, keys=None, counts=None):
        _check_order(n_max, "n_max")
        self.inventory = inventory
        self.n_max = n_max
        self.include_sil = bool(include_sil)
        keys = keys or {}
        counts = counts or {}
        self.keys = {}
        self.counts = {}
        for n in range(1, n_max + 1):
            k = np.asarray(keys.get(n, np.empty(0, np.uint64)), dtype=np.uint64)
            c = np.asarray(counts.get(n, np.empty(0, np.int64)), dtype=np.int64)
            if k.shape != c.shape or k.ndim != 1:
                raise ValueError(f"order {n}: keys and counts must be 1-d arrays of equal length")
            if k.size > 1 and not np.all(k[1:] > k[:-1]):
                raise ValueError(f"order {n}: keys must be strictly increasing")
            if c.size and c.min() < 1:
                raise ValueError(f"order {n}: counts must be >= 1")
            self.keys[n] = k
            self.counts[n] = c

    @classmethod
    def empty(cls, inventory, n_max=MAX_ORDER, include_sil=False):
        return cls(inventory, n_max, include_sil)

    @property
    def fingerprint(self) -> str:
        return self.inventory.fingerprint

    def total(self, order: int) -> int:
        return int(self.counts[order].sum())

    @property
    def totals(self) -> dict:
        return {n: self.total(n) for n in range(1, self.n_max + 1)}

    def distinct(self, order: int | None = None) -> int:
        if order is None:
            return sum(k.size for k in self.keys.values())
        return int(self.keys[order].size)

    @property
    def nbytes(self) -> int:
        return sum(k.nbytes + c.nbytes for k, c in zip(self.keys.values(), self.counts.values()))

    def get(self, ids) -> int:
        ids = tuple(ids)
        keys = self.keys.get(len(ids))
        if keys is None:
            return 0
        packed = np.uint64(pack_ids(ids))
        i = int(np.searchsorted(keys, packed))
        if i < keys.size and keys[i] == packed:
            return int(self.counts[len(ids)][i])
        return 0

    def as_dict(self, order: int, labels: bool = False) -> dict:
        out = {}
        for k, c in zip(self.keys[order].tolist(), self.counts[order].tolist()):
            ids = unpack_key(k, order)
            out[tuple(self.inventory.labels[i] for i in ids) if labels else ids] = c
        return out

    def compatible_with(self, other: "NGramCountTable") -> bool:
        return self.fingerprint == other.fingerprint and self.include_sil == other.include_sil

    def __eq__(self, other):
        if not isinstance(other, NGramCountTable):
            return NotImplemented
        return (
            self.compatible_with(other)
            and self.n_max == other.n_max
            and all(
                np.array_equal(self.keys[n], other.keys[n]) and np.array_equal(self.counts[n], other.counts[n])
                for n in self.keys
            )
        )

    def __repr__(self):
        sizes = ", ".join(f"{n}:{self.distinct(n)}" for n in self.keys)
        return f"NGramCountTable(n_max={self.n_max}, include_sil={self.include_sil}, distinct={{{sizes}}})"


def _merge_sorted(ak, ac, bk, bc):
    if bk.size == 0:
        return ak, ac
    if ak.size == 0:
        return bk.copy(), bc.copy()
    idx = np.searchsorted(ak, bk)
    hit = idx < ak.size
    hit[hit] = ak[idx[hit]] == bk[hit]
    ac = ac.copy()
    ac[idx[hit]] += bc[hit]
    new = ~hit
    if new.any():
        ak = np.insert(ak, idx[new], bk[new])
        ac = np.insert(ac, idx[new], bc[new])
    else:
        ak = ak.copy()
    return ak, ac


def _merge_into(ak, ac, bk, bc):
    # Same as _merge_sorted but may update ``ac`` in place; for private accumulators.
    if bk.size == 0:
        return ak, ac
    if ak.size == 0:
        return bk, bc
    idx = np.searchsorted(ak, bk)
    hit = idx < ak.size
    hit[hit] = ak[idx[hit]] == bk[hit]
    ac[idx[hit]] += bc[hit]
    new = ~hit
    if new.any():
        ak = np.insert(ak, idx[new], bk[new])
        ac = np.insert(ac, idx[new], bc[new])
    return ak, ac


def _unique_counts(keys):
    # sorts ``keys`` in place; callers pass a temporary
    if keys.size == 0:
        return np.empty(0, np.uint64), np.empty(0, np.int64)
    keys.sort()
    edge = np.empty(keys.size, dtype=bool)
    edge[0] = True
    np.not_equal(keys[1:], keys[:-1], out=edge[1:])
    starts = np.flatnonzero(edge)
    counts = np.diff(np.append(starts, keys.size)).astype(np.int64)
    return keys[starts], counts


def _chunk_counts(flat, lengths, n_max, vocab):
    """Distinct keys and counts per order for one chunk of concatenated sequences."""
    out = {}
    total = flat.size
    if total == 0:
        return out
    hist = np.bincount(flat, minlength=vocab)
    nz = np.flatnonzero(hist)
    out[1] = (nz.astype(np.uint64), hist[nz].astype(np.int64))
    if n_max == 1:
        return out
    # tokens left in the sentence from each position, capped at n_max
    remaining = np.repeat(np.cumsum(lengths), lengths)
    remaining -= np.arange(total)
    remaining = np.minimum(remaining, n_max).astype(np.uint8)
    wide = flat.astype(np.uint64)
    cur = wide
    for n in range(2, n_max + 1):
        m = total - n + 1
        if m <= 0:
            break
        cur = (cur[:m] << np.uint64(ID_BITS)) | wide[n - 1:]
        out[n] = _unique_counts(cur[remaining[:m] >= n])
    return out


def _drop_sil(flat, lengths, sil_id):
    keep = flat != sil_id
    if keep.all():
        return flat, lengths
    nonempty = lengths > 0
    starts = np.concatenate(([0], np.cumsum(lengths)[:-1]))[nonempty]
    new_lengths = np.zeros_like(lengths)
    new_lengths[nonempty] = np.add.reduceat(keep.astype(np.int64), starts)
    return flat[keep], new_lengths


def count_arrays(
    flat, lengths, inventory: PhonemeInventory, n_max=MAX_ORDER, include_sil=False, chunk_tokens=None
) -> NGramCountTable:
    """Count n-grams in sequences given as one concatenated id array plus lengths.

    The array is processed in sentence-aligned chunks, so working memory is
    one chunk plus the distinct n-grams seen so far.
    """
    chunk_tokens = chunk_tokens or DEFAULT_CHUNK_TOKENS
    _check_order(n_max, "n_max")
    flat = np.asarray(flat, dtype=np.uint16)
    lengths = np.asarray(lengths, dtype=np.int64)
    if int(lengths.sum()) != flat.size:
        raise ValueError("sequence lengths do not add up to the number of tokens")
    if flat.size and int(flat.max()) >= len(inventory):
        raise DataError(f"phoneme id {int(flat.max())} outside inventory of size {len(inventory)}")
    acc = _Accumulator(inventory, n_max, include_sil)
    ends = np.cumsum(lengths)
    lo = 0
    while lo < lengths.size:
        # whole sentences only; a single sentence longer than a chunk stays whole
        start = int(ends[lo - 1]) if lo else 0
        hi = max(int(np.searchsorted(ends, start + chunk_tokens, side="right")), lo + 1)
        acc.add([flat[start : int(ends[hi - 1])]], lengths[lo:hi])
        lo = hi
    return acc.table()


class _Accumulator:
    def __init__(self, inventory, n_max, include_sil):
        self.inventory = inventory
        self.n_max = n_max
        self.include_sil = include_sil
        self.keys = {n: np.empty(0, np.uint64) for n in range(1, n_max + 1)}
        self.counts = {n: np.empty(0, np.int64) for n in range(1, n_max + 1)}

    def add(self, arrays, lengths):
        flat = np.concatenate(arrays) if len(arrays) > 1 else np.asarray(arrays[0])
        flat = flat.astype(np.uint16, copy=False)
        lengths = np.asarray(lengths, dtype=np.int64)
        if flat.size and int(flat.max()) >= len(self.inventory):
            raise DataError(f"phoneme id {int(flat.max())} outside inventory of size {len(self.inventory)}")
        if not self.include_sil:
            flat, lengths = _drop_sil(flat, lengths, self.inventory.sil_id)
        for n, (k, c) in _chunk_counts(flat, lengths, self.n_max, len(self.inventory)).items():
            self.keys[n], self.counts[n] = _merge_into(self.keys[n], self.counts[n], k, c)

    def table(self):
        return NGramCountTable(self.inventory, self.n_max, self.include_sil, self.keys, self.counts)


def count_ngrams(
    sequences: Iterable[PhonemeSequence],
    n_max: int = MAX_ORDER,
    include_sil: bool = False,
    inventory: PhonemeInventory | None = None,
    chunk_tokens: int = DEFAULT_CHUNK_TOKENS,
) -> NGramCountTable:
    """Count all n-grams of order 1..n_max in one pass over ``sequences``.

    Sequences are buffered into chunks of roughly ``chunk_tokens`` tokens,
    counted with vectorized sorts and folded into the running table, so
    memory is bounded by the number of distinct n-grams plus one chunk.

    With ``include_sil`` off, SIL ids are removed from every sequence before
    windows are formed. ``inventory`` is taken from the first sequence when
    not given; a sequence from a different inventory raises
    :class:`InventoryMismatchError`.
    """
    _check_order(n_max, "n_max")
    acc = None
    fingerprint = None
    bufs, lens, pending = [], [], 0
    if inventory is not None:
        acc = _Accumulator(inventory, n_max, include_sil)
        fingerprint = inventory.fingerprint
    for seq in sequences:
        inv = seq.inventory
        if acc is None:
            acc = _Accumulator(inv, n_max, include_sil)
            inventory, fingerprint = inv, inv.fingerprint
        elif inv is not inventory and inv.fingerprint != fingerprint:
            raise InventoryMismatchError(
                f"sequence {seq.origin or ''!s} uses inventory {inv.fingerprint}, expected {fingerprint}"
            )
        ids = seq.ids
        bufs.append(ids)
        lens.append(len(ids))
        pending += len(ids)
        if pending >= chunk_tokens:
            acc.add(bufs, lens)
            bufs, lens, pending = [], [], 0
    if acc is None:
        raise ValueError("cannot count an empty stream without an inventory")
    if bufs:
        acc.add(bufs, lens)
    return acc.table()


def merge(a: NGramCountTable, b: NGramCountTable) -> NGramCountTable:
    """Exact key-wise sum of two tables over the same inventory and settings."""
    if a.fingerprint != b.fingerprint:
        raise InventoryMismatchError(f"inventory fingerprints differ: {a.fingerprint} vs {b.fingerprint}")
    if a.include_sil != b.include_sil:
        raise InventoryMismatchError("cannot merge tables with different include_sil settings")
    if a.n_max != b.n_max:
        raise ValueError(f"cannot merge tables with n_max {a.n_max} and {b.n_max}")
    keys, counts = {}, {}
    for n in range(1, a.n_max + 1):
        keys[n], counts[n] = _merge_sorted(a.keys[n], a.counts[n], b.keys[n], b.counts[n])
    return NGramCountTable(a.inventory, a.n_max, a.include_sil, keys, counts)


def _count_shard(args):
    flat, lengths, inventory, n_max, include_sil = args
    return count_arrays(flat, lengths, inventory, n_max, include_sil)


def count_ngrams_sharded(
    sequences: Iterable[PhonemeSequence],
    n_max: int = MAX_ORDER,
    include_sil: bool = False,
    inventory: PhonemeInventory | None = None,
    shards: int = 4,
    workers: int | None = None,
) -> NGramCountTable:
    """Split the sequences into contiguous shards, count them in worker processes, merge.

    The result equals :func:`count_ngrams` on the same input exactly.
    ``workers=0`` counts the shards in-process.
    """
    seqs = list(sequences)
    if inventory is None:
        if not seqs:
            raise ValueError("cannot count an empty stream without an inventory")
        inventory = seqs[0].inventory
    for s in seqs:
        if s.inventory is not inventory and s.inventory.fingerprint != inventory.fingerprint:
            raise InventoryMismatchError(f"sequence uses inventory {s.inventory.fingerprint}, expected {inventory.fingerprint}")
    flat = np.concatenate([s.ids for s in seqs]) if seqs else np.empty(0, np.uint16)
    return count_arrays_sharded(flat, [len(s.ids) for s in seqs], inventory, n_max, include_sil, shards, workers)


def count_arrays_sharded(
    flat, lengths, inventory: PhonemeInventory, n_max=MAX_ORDER, include_sil=False, shards=4, workers=None
) -> NGramCountTable:
    """:func:`count_arrays` over contiguous sentence shards in worker processes, then merged."""
    flat = np.asarray(flat, dtype=np.uint16)
    lengths = np.asarray(lengths, dtype=np.int64)
    if int(lengths.sum()) != flat.size:
        raise ValueError("sequence lengths do not add up to the number of tokens")
    bounds = np.linspace(0, lengths.size, max(1, shards) + 1).astype(int)
    offsets = np.concatenate(([0], np.cumsum(lengths)))
    jobs = [
        (flat[offsets[lo] : offsets[hi]], lengths[lo:hi], inventory, n_max, include_sil)
        for lo, hi in zip(bounds[:-1], bounds[1:])
    ]
    if workers == 0:
        tables = [_count_shard(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            tables = list(pool.map(_count_shard, jobs))
    return reduce(merge, tables, NGramCountTable.empty(inventory, n_max, include_sil))


class NGramDistribution:
    """Normalized distribution over the n-grams of one order.

    ``keys`` is sorted and strictly increasing; ``probs`` are all positive.
    """

    def __init__(self, order, keys, probs, inventory: PhonemeInventory, include_sil=False):
        _check_order(order)
        self.order = order
        self.keys = np.asarray(keys, dtype=np.uint64)
        self.probs = np.asarray(probs, dtype=np.float64)
        self.inventory = inventory
        self.include_sil = include_sil
        if self.keys.shape != self.probs.shape:
            raise ValueError("keys and probabilities must have equal length")
        if self.keys.size > 1 and not np.all(self.keys[1:] > self.keys[:-1]):
            raise ValueError("keys must be strictly increasing")
        if self.probs.size and not (self.probs.min() > 0 and self.probs.max() <= 1):
            raise ValueError("probabilities must lie in (0, 1]")

    @classmethod
    def from_mapping(cls, mapping: Mapping, inventory, order=None, include_sil=False):
        """Build from ``{id tuple: weight}``; weights are normalized with an exact sum."""
        items = [(pack_ids(ids), float(w), len(tuple(ids))) for ids, w in mapping.items() if w > 0]
        if not items:
            raise EmptyDistributionError("no n-grams observed")
        orders = {o for _, _, o in items}
        if len(orders) != 1 or (order is not None and orders != {order}):
            raise ValueError("all n-grams must share one order")
        items.sort()
        total = math.fsum(w for _, w, _ in items)
        keys = np.array([k for k, _, _ in items], dtype=np.uint64)
        probs = np.array([w for _, w, _ in items], dtype=np.float64) / total
        return cls(orders.pop(), keys, probs, inventory, include_sil)

    @property
    def fingerprint(self):
        return self.inventory.fingerprint

    @property
    def support_size(self) -> int:
        return int(self.keys.size)

    @property
    def support(self) -> set:
        return {NGramKey(self.order, k) for k in self.keys.tolist()}

    def prob(self, ids) -> float:
        packed = np.uint64(pack_ids(ids))
        i = int(np.searchsorted(self.keys, packed))
        if i < self.keys.size and self.keys[i] == packed:
            return float(self.probs[i])
        return 0.0

    def as_dict(self) -> dict:
        return {unpack_key(k, self.order): p for k, p in zip(self.keys.tolist(), self.probs.tolist())}

    def __len__(self):
        return self.support_size


def to_distribution(table: NGramCountTable, order: int) -> NGramDistribution:
    _check_order(order)
    if order > table.n_max or table.counts[order].size == 0:
        raise EmptyDistributionError(f"no n-grams observed at order {order}")
    counts = table.counts[order]
    probs = counts / float(counts.sum())
    return NGramDistribution(order, table.keys[order], probs, table.inventory, table.include_sil)


def top_k(dist: NGramDistribution, k: int) -> list:
    """Most probable n-grams, ties broken by ascending packed key."""
    if k < 1:
        raise ValueError("k must be >= 1")
    order = np.lexsort((dist.keys, -dist.probs))[:k]
    return [(NGramKey(dist.order, int(dist.keys[i])), float(dist.probs[i])) for i in order]


def _sidecar_path(path):
    return os.fspath(path) + ".json"


def write_table(table: NGramCountTable, path) -> None:
    """Write the binary table and its JSON sidecar of inventory labels.

    Layout (little-endian): magic ``PJNG``, u16 version, u16 flags (bit 0 =
    include_sil), u8 n_max, 3 pad bytes, 16-byte ASCII inventory
    fingerprint, four u64 entry counts for orders 1..4, then for each order
    its ``(u64 key, u64 count)`` pairs sorted by key.
    """
    sizes = [table.distinct(n) if n <= table.n_max else 0 for n in range(1, MAX_ORDER + 1)]
    header = _HEADER.pack(
        TABLE_MAGIC, TABLE_VERSION, int(table.include_sil), table.n_max, table.fingerprint.encode("ascii"), *sizes
    )
    with open(path, "wb") as f:
        f.write(header)
        for n in range(1, table.n_max + 1):
            rec = np.empty(table.distinct(n), dtype=_ENTRY)
            rec["key"] = table.keys[n]
            rec["count"] = table.counts[n]
            f.write(rec.tobytes())
    sidecar = {
        "format_version": TABLE_VERSION,
        "fingerprint": table.fingerprint,
        "include_sil": table.include_sil,
        "n_max": table.n_max,
        "labels": list(table.inventory.labels),
    }
    with open(_sidecar_path(path), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, ensure_ascii=False, indent=1)
        f.write("\n")


def read_table(path) -> NGramCountTable:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated count table header")
    magic, version, flags, n_max, fp, *sizes = _HEADER.unpack_from(raw)
    if magic != TABLE_MAGIC:
        raise DataError(f"{path}: not a count table (bad magic)")
    if version != TABLE_VERSION:
        raise DataError(f"{path}: unsupported table version {version}")
    try:
        with open(_sidecar_path(path), encoding="utf-8") as f:
            sidecar = json.load(f)
    except FileNotFoundError:
        raise DataError(f"{path}: missing inventory sidecar {_sidecar_path(path)}") from None
    inventory = PhonemeInventory(sidecar["labels"])
    if inventory.fingerprint != fp.decode("ascii"):
        raise DataError(f"{path}: sidecar labels do not match the table fingerprint")
    expected = _HEADER.size + _ENTRY.itemsize * sum(sizes)
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    keys, counts = {}, {}
    offset = _HEADER.size
    for n in range(1, n_max + 1):
        rec = np.frombuffer(raw, dtype=_ENTRY, count=sizes[n - 1], offset=offset)
        offset += rec.nbytes
        keys[n] = rec["key"].astype(np.uint64)
        counts[n] = rec["count"].astype(np.int64)
    return NGramCountTable(inventory, n_max, bool(flags & 1), keys, counts)
