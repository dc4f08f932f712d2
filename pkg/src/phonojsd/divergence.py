"""Kullback-Leibler and Jensen-Shannon divergence between n-gram distributions.

No smoothing is applied. Sums use :func:`math.fsum`, which is exactly
rounded, so the JSD of (P, Q) and of (Q, P) are bit-identical and
``JSD(P, P)`` is exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDistributionError, InventoryMismatchError
from .ngram_stats import MAX_ORDER, NGramCountTable, NGramDistribution, to_distribution

LOG_BASES = ("nats", "bits")
LN2 = math.log(2.0)


def _scale(log_base):
    if log_base == "nats":
        return 1.0
    if log_base == "bits":
        return 1.0 / LN2
    raise ValueError(f"log_base must be one of {LOG_BASES}, got {log_base!r}")


def max_jsd(log_base="nats") -> float:
    return LN2 * _scale(log_base)


def _check_pair(p: NGramDistribution, q: NGramDistribution):
    if p.order != q.order:
        raise ValueError(f"order mismatch: {p.order} vs {q.order}")
    if p.fingerprint != q.fingerprint:
        raise InventoryMismatchError(f"inventory fingerprints differ: {p.fingerprint} vs {q.fingerprint}")
    if p.include_sil != q.include_sil:
        raise InventoryMismatchError("distributions differ in include_sil")


def kl_divergence(p: NGramDistribution, q: NGramDistribution, log_base="nats") -> float:
    """Sum of ``P(x) log(P(x)/Q(x))`` over the support of P.

    Returns ``math.inf`` when P puts mass where Q has none.
    """
    _check_pair(p, q)
    scale = _scale(log_base)
    if p.keys.size == 0:
        return 0.0
    idx = np.searchsorted(q.keys, p.keys)
    inside = idx < q.keys.size
    inside[inside] = q.keys[idx[inside]] == p.keys[inside]
    if not inside.all():
        return math.inf
    qp = q.probs[idx]
    terms = p.probs * np.log(p.probs / qp)
    # distributions are normalized, so a negative sum is rounding noise
    return max(0.0, math.fsum(terms.tolist())) * scale


def _aligned(p: NGramDistribution, q: NGramDistribution):
    """Probabilities of P and Q over their union support, in key order."""
    union = np.union1d(p.keys, q.keys)
    pa = np.zeros(union.size)
    qa = np.zeros(union.size)
    pa[np.searchsorted(union, p.keys)] = p.probs
    qa[np.searchsorted(union, q.keys)] = q.probs
    return union, pa, qa


def _half_kl_to_mixture(a, m):
    nz = a > 0
    return math.fsum((a[nz] * np.log(a[nz] / m[nz])).tolist())


def js_divergence(p: NGramDistribution, q: NGramDistribution, log_base="nats") -> float:
    """Half KLD of each side against the mixture ``(P + Q) / 2``; always finite."""
    _check_pair(p, q)
    value, _ = _jsd_with_support(p, q)
    return value * _scale(log_base)


def _jsd_with_support(p, q):
    union, pa, qa = _aligned(p, q)
    m = (pa + qa) * 0.5
    value = 0.5 * math.fsum([_half_kl_to_mixture(pa, m), _half_kl_to_mixture(qa, m)])
    # rounding can leave the result a few ulps outside [0, ln 2]
    return min(max(value, 0.0), LN2), union.size


@dataclass
class JsdProfile:
    """JSD per n-gram order for one speech/text pair."""

    values: dict
    log_base: str = "nats"
    support: dict = field(default_factory=dict)
    omitted: list = field(default_factory=list)
    speech_id: str | None = None
    text_id: str | None = None
    include_sil: bool = False

    def __getitem__(self, order):
        return self.values[order]

    def get(self, order, default=None):
        return self.values.get(order, default)

    def to_dict(self) -> dict:
        return {
            "speech": self.speech_id,
            "text": self.text_id,
            "log_base": self.log_base,
            "include_sil": self.include_sil,
            "jsd": {str(n): v for n, v in sorted(self.values.items())},
            "support": {
                str(n): {"speech": s[0], "text": s[1], "union": s[2]} for n, s in sorted(self.support.items())
            },
            "omitted": [{"order": n, "reason": r} for n, r in self.omitted],
        }


def jsd_profile(
    speech_table: NGramCountTable,
    text_table: NGramCountTable,
    n_max: int = MAX_ORDER,
    log_base: str = "nats",
    speech_id: str | None = None,
    text_id: str | None = None,
) -> JsdProfile:
    """JSD between the speech-side and text-side distributions at every order up to ``n_max``.

    An order that is empty on either side is left out of ``values`` and noted
    in ``omitted`` instead of raising.
    """
    scale = _scale(log_base)
    if speech_table.fingerprint != text_table.fingerprint:
        raise InventoryMismatchError(
            f"inventory fingerprints differ: {speech_table.fingerprint} vs {text_table.fingerprint}"
        )
    if speech_table.include_sil != text_table.include_sil:
        raise InventoryMismatchError("tables differ in include_sil")
    if not 1 <= n_max <= min(speech_table.n_max, text_table.n_max):
        raise ValueError(f"n_max {n_max} exceeds the orders counted in the tables")
    values, support, omitted = {}, {}, []
    for n in range(1, n_max + 1):
        try:
            p = to_distribution(speech_table, n)
            q = to_distribution(text_table, n)
        except EmptyDistributionError as e:
            omitted.append((n, str(e)))
            continue
        value, union = _jsd_with_support(p, q)
        values[n] = value * scale
        support[n] = (p.support_size, q.support_size, union)
    return JsdProfile(values, log_base, support, omitted, speech_id, text_id, speech_table.include_sil)
