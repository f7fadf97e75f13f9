"""Rating statistics: Likert distributions, range fractions, KL divergence.

Scores are 7-point Likert ratings of document authenticity.  Distributions
constructed from records are exactly normalized; distributions built from
user-supplied probability vectors (e.g. rounded percentages) are kept as
given so published figures reproduce without compounding rounding.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyGroupError, RatingsParseError, SupportError, ValueOutOfRangeError

SCORES = range(1, 8)
ORIGINS = ("real", "generated")

# Tolerance for probability vectors given as rounded percentages.
_SUM_TOLERANCE = 0.05

RATINGS_HEADER = ["rater_id", "document_id", "origin", "score", "comment"]


@dataclass(frozen=True)
class RatingRecord:
    rater_id: str
    document_id: str
    origin: str
    score: int
    comment: str | None = None


@dataclass(frozen=True)
class ScoreDistribution:
    probabilities: tuple[float, float, float, float, float, float, float]

    def __post_init__(self):
        if len(self.probabilities) != 7:
            raise ValueOutOfRangeError(f"expected 7 probabilities, got {len(self.probabilities)}")
        if any(p < 0 for p in self.probabilities):
            raise ValueOutOfRangeError("probabilities must be non-negative")
        total = sum(self.probabilities)
        if abs(total - 1.0) > _SUM_TOLERANCE:
            raise ValueOutOfRangeError(f"probabilities sum to {total}, expected ~1")

    def normalized(self) -> "ScoreDistribution":
        total = sum(self.probabilities)
        return ScoreDistribution(tuple(p / total for p in self.probabilities))


def load_ratings(path: str | Path) -> list[RatingRecord]:
    """Parse a ratings CSV with header rater_id,document_id,origin,score,comment."""
    records = []
    with Path(path).open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise RatingsParseError(1, "missing header") from None
        if header != RATINGS_HEADER:
            raise RatingsParseError(1, f"expected header {','.join(RATINGS_HEADER)}")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise RatingsParseError(row_no, f"expected 5 fields, got {len(row)}")
            rater_id, document_id, origin, score_text, comment = row
            if origin not in ORIGINS:
                raise RatingsParseError(row_no, f"origin must be one of {ORIGINS}, got {origin!r}")
            try:
                score = int(score_text)
            except ValueError:
                raise RatingsParseError(row_no, f"score {score_text!r} is not an integer") from None
            if score not in SCORES:
                raise ValueOutOfRangeError(f"row {row_no}: score must lie in 1..7, got {score}")
            records.append(
                RatingRecord(
                    rater_id=rater_id,
                    document_id=document_id,
                    origin=origin,
                    score=score,
                    comment=comment or None,
                )
            )
    return records


def distribution(records: list[RatingRecord], origin: str) -> ScoreDistribution:
    """Normalized score histogram over the records of one origin."""
    counts = [0] * 7
    for record in records:
        if record.origin == origin:
            counts[record.score - 1] += 1
    total = sum(counts)
    if total == 0:
        raise EmptyGroupError(f"no records with origin {origin!r}")
    return ScoreDistribution(tuple(c / total for c in counts))


def fraction_in_range(dist: ScoreDistribution, lo: int, hi: int) -> float:
    """Probability mass on scores lo..hi inclusive."""
    if not (1 <= lo <= hi <= 7):
        raise ValueOutOfRangeError(f"need 1 <= lo <= hi <= 7, got lo={lo}, hi={hi}")
    return sum(dist.probabilities[lo - 1 : hi])


def kl_divergence(p: ScoreDistribution, q: ScoreDistribution, epsilon: float = 0.0) -> float:
    """KL(p || q) in nats with the 0*ln(0/q) = 0 convention.

    epsilon > 0 smooths both distributions (add epsilon per bin, then
    renormalize); the default is strict and raises when p has mass on a
    bin where q has none.
    """
    ps = p.probabilities
    qs = q.probabilities
    if epsilon > 0:
        ps = tuple((x + epsilon) / (sum(ps) + 7 * epsilon) for x in ps)
        qs = tuple((x + epsilon) / (sum(qs) + 7 * epsilon) for x in qs)
    total = 0.0
    for score, (pi, qi) in enumerate(zip(ps, qs), start=1):
        if pi == 0.0:
            continue
        if qi == 0.0:
            raise SupportError(f"q has no mass on score {score} but p does")
        total += pi * math.log(pi / qi)
    return total
