"""Trainable / untrainable verdicts from a 4-gram JSD and a threshold profile."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

DEFAULT_BAND = 0.02
DEFAULT_PER_FAIL_CUT = 60.0
LOW_QUANTITY_HOURS = 10.0

VERDICTS = ("trainable", "borderline", "untrainable")

LOW_QUANTITY_EXCEPTION = (
    "noisy conversational speech capped at 10 hours or less failed to train with every text corpus, "
    "including exactly matched transcripts with zero divergence"
)
LOW_QUANTITY_CAVEAT = (
    "speech quantity <= 10 h on noisy speech: training was observed to fail regardless of divergence"
)


@dataclass(frozen=True)
class ThresholdProfile:
    """A 4-gram JSD boundary between observed GAN training success and failure.

    ``noisy_speech`` marks profiles calibrated on noisy conversational speech;
    only those attach the low-quantity caveat in :func:`classify`.
    ``log_base`` is the unit the threshold is expressed in.
    """

    name: str
    threshold: float
    provenance: str = ""
    known_exceptions: tuple = ()
    noisy_speech: bool = False
    log_base: str = "nats"

    def __post_init__(self):
        if not (math.isfinite(self.threshold) and self.threshold >= 0):
            raise ValueError(f"profile {self.name!r}: threshold must be a finite value >= 0")
        object.__setattr__(self, "known_exceptions", tuple(self.known_exceptions))

    def to_json(self) -> dict:
        d = asdict(self)
        d["known_exceptions"] = list(self.known_exceptions)
        return d


def builtin_profiles() -> list:
    return [
        ThresholdProfile(
            "clean_speech",
            0.27,
            "read audiobook speech and clean spontaneous lecture speech, features pre-trained on read speech; "
            "boundary read at the jump from PER about 40 to about 60",
            (LOW_QUANTITY_EXCEPTION,),
        ),
        ThresholdProfile(
            "robust_features_noisy_speech",
            0.25,
            "noisy telephone conversations, features pre-trained on mixed-domain audio that includes "
            "conversational speech",
            (LOW_QUANTITY_EXCEPTION,),
            noisy_speech=True,
        ),
        ThresholdProfile(
            "base_features_noisy_speech",
            0.0,
            "noisy telephone conversations, features pre-trained on read speech only; "
            "only exactly matched text trained",
            (LOW_QUANTITY_EXCEPTION,),
            noisy_speech=True,
        ),
    ]


def load_profiles(path) -> list:
    """Read a JSON list of ``{name, threshold, provenance, known_exceptions}`` objects."""
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, list):
        raise ValueError(f"{path}: expected a JSON list of profiles")
    out = []
    for obj in raw:
        out.append(
            ThresholdProfile(
                obj["name"],
                float(obj["threshold"]),
                obj.get("provenance", ""),
                tuple(obj.get("known_exceptions", ())),
                bool(obj.get("noisy_speech", False)),
                obj.get("log_base", "nats"),
            )
        )
    return out


def get_profile(name: str, profiles=None) -> ThresholdProfile:
    for p in profiles if profiles is not None else builtin_profiles():
        if p.name == name:
            return p
    raise KeyError(f"unknown threshold profile {name!r}")


@dataclass
class TrainabilityVerdict:
    verdict: str
    margin: float
    profile: str
    jsd4: float
    caveats: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"label": self.verdict, "margin": self.margin, "profile": self.profile, "caveats": list(self.caveats)}


def classify(
    jsd4: float,
    profile: ThresholdProfile,
    speech_hours: float | None = None,
    borderline_band: float = DEFAULT_BAND,
    log_base: str | None = None,
) -> TrainabilityVerdict:
    """Compare ``jsd4`` with the profile threshold.

    ``margin = threshold - jsd4``; trainable above ``+band``, untrainable
    below ``-band``, borderline in between (inclusive). Caveats never change
    the label.
    """
    if not (jsd4 >= 0 and math.isfinite(jsd4)):
        raise ValueError(f"jsd4 must be a finite value >= 0, got {jsd4}")
    if not borderline_band >= 0:
        raise ValueError("borderline_band must be >= 0")
    if speech_hours is not None and not speech_hours >= 0:
        raise ValueError("speech_hours must be >= 0")
    margin = profile.threshold - jsd4
    if margin > borderline_band:
        label = "trainable"
    elif margin < -borderline_band:
        label = "untrainable"
    else:
        label = "borderline"
    caveats = []
    if profile.noisy_speech and speech_hours is not None and speech_hours <= LOW_QUANTITY_HOURS:
        caveats.append(LOW_QUANTITY_CAVEAT)
    if log_base is not None and log_base != profile.log_base:
        caveats.append(f"jsd computed in {log_base} but profile {profile.name!r} is calibrated in {profile.log_base}")
    return TrainabilityVerdict(label, margin, profile.name, jsd4, caveats)


@dataclass
class Observation:
    jsd4: float
    per: float
    profile: ThresholdProfile
    speech_hours: float | None = None
    label: str = ""


@dataclass
class PairOutcome:
    observation: Observation
    verdict: TrainabilityVerdict
    observed_failure: bool
    status: str  # "agree" | "disagree" | "borderline"

    @property
    def flagged(self) -> bool:
        return bool(self.verdict.caveats)


@dataclass
class ConfusionSummary:
    outcomes: list
    per_fail_cut: float

    def _count(self, status, flagged=None):
        return sum(
            1 for o in self.outcomes if o.status == status and (flagged is None or o.flagged == flagged)
        )

    @property
    def agreements(self) -> int:
        return self._count("agree")

    @property
    def disagreements(self) -> int:
        return self._count("disagree")

    @property
    def borderline(self) -> int:
        return self._count("borderline")

    @property
    def accuracy(self) -> float:
        """Agreements plus half the borderline pairs, over all pairs."""
        return (self.agreements + 0.5 * self.borderline) / len(self.outcomes)

    @property
    def unflagged_disagreements(self) -> list:
        return [o for o in self.outcomes if o.status == "disagree" and not o.flagged]

    def table(self) -> dict:
        confusion = {}
        for o in self.outcomes:
            key = (o.verdict.verdict, "fail" if o.observed_failure else "ok")
            confusion[key] = confusion.get(key, 0) + 1
        return confusion


def evaluate_against_observations(pairs, per_fail_cut: float = DEFAULT_PER_FAIL_CUT, borderline_band: float = DEFAULT_BAND):
    """Score verdicts against observed PER.

    ``pairs`` holds :class:`Observation` objects or ``(jsd4, per, profile)``
    tuples, optionally with speech hours as a fourth item. An observation is
    a failure when ``per >= per_fail_cut``. Borderline verdicts are neither
    agreements nor disagreements.
    """
    if not 0 < per_fail_cut < 100:
        raise ValueError("per_fail_cut must be in (0, 100)")
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no observations to evaluate")
    outcomes = []
    for item in pairs:
        obs = item if isinstance(item, Observation) else Observation(*item)
        verdict = classify(obs.jsd4, obs.profile, obs.speech_hours, borderline_band)
        failed = obs.per >= per_fail_cut
        if verdict.verdict == "borderline":
            status = "borderline"
        elif (verdict.verdict == "untrainable") == failed:
            status = "agree"
        else:
            status = "disagree"
        outcomes.append(PairOutcome(obs, verdict, failed, status))
    return ConfusionSummary(outcomes, per_fail_cut)
