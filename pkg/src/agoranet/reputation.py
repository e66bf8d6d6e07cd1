"""Explainable vendor reputation from terminal-contract facts.

Events are extracted once per terminal contract and scored on five
dimensions; profiles blend the recency-weighted mean with a neutral prior,
with confidence growing in effective sample size. Every constant is a
config parameter and every profile is recomputable from its explanation
report alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from .contracts import Contract, TERMINAL_STATES, verify_chain
from .errors import ReputationError
from .identity import EntityAddress

DIMENSIONS = ("quality", "reliability", "collaboration", "efficiency", "integrity")

MS_PER_DAY = 86_400_000


@dataclass(frozen=True)
class ReputationConfig:
    half_life_ms: int = 30 * MS_PER_DAY
    prior: float = 0.5
    confidence_k: float = 5.0
    quality_base_settled: float = 0.8
    quality_base_cancelled: float = 0.5
    quality_base_disputed: float = 0.2
    efficiency_cost_weight: float = 0.5


@dataclass(frozen=True)
class ReputationEvent:
    contract_id: bytes
    subject: EntityAddress  # the seller being scored
    outcome: str  # settled | cancelled | disputed
    delivery_count: int
    rework_count: int
    rework_limit: int
    explicit_rating: Optional[int]
    cost_records_present: bool
    chain_valid: bool
    receipt_present: bool
    cards_captured: bool
    occurred_at: int

    def to_record(self) -> dict[str, Any]:
        return {
            "contract_id": self.contract_id.hex(),
            "subject": str(self.subject),
            "outcome": self.outcome,
            "delivery_count": self.delivery_count,
            "rework_count": self.rework_count,
            "rework_limit": self.rework_limit,
            "explicit_rating": self.explicit_rating,
            "cost_records_present": self.cost_records_present,
            "evidence": {
                "chain_valid": self.chain_valid,
                "receipt_present": self.receipt_present,
                "cards_captured": self.cards_captured,
            },
            "occurred_at": self.occurred_at,
        }

    @classmethod
    def from_record(cls, r: dict[str, Any]) -> "ReputationEvent":
        ev = r["evidence"]
        return cls(
            contract_id=bytes.fromhex(r["contract_id"]),
            subject=EntityAddress.parse(r["subject"]),
            outcome=r["outcome"],
            delivery_count=int(r["delivery_count"]),
            rework_count=int(r["rework_count"]),
            rework_limit=int(r["rework_limit"]),
            explicit_rating=r.get("explicit_rating"),
            cost_records_present=bool(r["cost_records_present"]),
            chain_valid=bool(ev["chain_valid"]),
            receipt_present=bool(ev["receipt_present"]),
            cards_captured=bool(ev["cards_captured"]),
            occurred_at=int(r["occurred_at"]),
        )


_OUTCOME_BY_STATE = {"SETTLED": "settled", "CANCELLED": "cancelled", "DISPUTED": "disputed"}


def extract_event(
    contract: Contract, at: int, receipt_present: bool | None = None
) -> ReputationEvent:
    """Read the facts out of a terminal contract; never touches live state."""
    if contract.state not in TERMINAL_STATES:
        raise ReputationError(
            f"contract {contract.contract_id.hex()} is in {contract.state}, not terminal"
        )
    if receipt_present is None:
        receipt_present = contract.state == "SETTLED" and contract.settlement is not None
    return ReputationEvent(
        contract_id=contract.contract_id,
        subject=contract.seller,
        outcome=_OUTCOME_BY_STATE[contract.state],
        delivery_count=len(contract.deliveries),
        rework_count=contract.rework_count,
        rework_limit=contract.rework_limit,
        explicit_rating=contract.explicit_rating,
        cost_records_present=len(contract.all_cost_records()) > 0,
        chain_valid=bool(verify_chain(contract.snapshots, contract.captured_cards.get("arbiter"))),
        receipt_present=receipt_present,
        cards_captured=len(contract.captured_cards) == 3,
        occurred_at=at,
    )


def score_event(event: ReputationEvent, config: ReputationConfig = ReputationConfig()) -> dict[str, float]:
    """Raw per-dimension scores in [0, 1] for one event."""
    if event.explicit_rating is not None:
        quality = min(max(event.explicit_rating, 1), 5) / 5.0
    elif event.outcome == "settled":
        quality = config.quality_base_settled
    elif event.outcome == "cancelled":
        quality = config.quality_base_cancelled
    else:
        quality = config.quality_base_disputed

    reliability = 1.0 if event.outcome == "settled" else 0.0

    limit = max(event.rework_limit, 1)
    collaboration = max(0.0, 1.0 - event.rework_count / limit)

    iteration = 1.0 / event.delivery_count if event.delivery_count > 0 else 0.0
    cost_part = 1.0 if event.cost_records_present else 0.0
    w = config.efficiency_cost_weight
    efficiency = (1.0 - w) * iteration + w * cost_part

    evidence = (event.chain_valid, event.receipt_present, event.cards_captured)
    integrity = sum(evidence) / 3.0

    return {
        "quality": quality,
        "reliability": reliability,
        "collaboration": collaboration,
        "efficiency": efficiency,
        "integrity": integrity,
    }


@dataclass
class DimensionScore:
    dimension: str
    value: float
    confidence: float
    contributing_events: list[str]  # contract ids, hex

    def to_record(self) -> dict[str, Any]:
        return {
            "dimension": self.dimension,
            "value": self.value,
            "confidence": self.confidence,
            "contributing_events": list(self.contributing_events),
        }


@dataclass
class ReputationProfile:
    subject: EntityAddress
    dimensions: dict[str, DimensionScore]
    overall: float
    computed_at: int

    def to_record(self) -> dict[str, Any]:
        return {
            "subject": str(self.subject),
            "dimensions": {d: s.to_record() for d, s in self.dimensions.items()},
            "overall": self.overall,
            "computed_at": self.computed_at,
        }


def _recency_weight(age_ms: int, config: ReputationConfig) -> float:
    return 2.0 ** (-age_ms / config.half_life_ms)


def aggregate_profile(
    events: list[ReputationEvent],
    now: int,
    config: ReputationConfig = ReputationConfig(),
    subject: EntityAddress | None = None,
) -> ReputationProfile:
    """Confidence- and recency-weighted five-dimension profile.

    dimension = c * weighted_mean + (1 - c) * prior, with c = n_eff / (n_eff + k)
    and n_eff the sum of recency weights. No events yields the prior at zero
    confidence.
    """
    if subject is None:
        if not events:
            raise ReputationError("subject required when there are no events")
        subject = events[0].subject
    for event in events:
        if event.subject != subject:
            raise ReputationError(
                f"event {event.contract_id.hex()} scores {event.subject}, expected {subject}"
            )

    ids = [e.contract_id.hex() for e in events]
    if not events:
        dimensions = {
            d: DimensionScore(d, config.prior, 0.0, []) for d in DIMENSIONS
        }
        overall = sum(s.value for s in dimensions.values()) / len(DIMENSIONS)
        return ReputationProfile(subject, dimensions, overall, now)

    weights = [_recency_weight(max(0, now - e.occurred_at), config) for e in events]
    scores = [score_event(e, config) for e in events]
    n_eff = sum(weights)
    confidence = n_eff / (n_eff + config.confidence_k)

    dimensions: dict[str, DimensionScore] = {}
    for d in DIMENSIONS:
        weighted = sum(w * s[d] for w, s in zip(weights, scores))
        mean = weighted / n_eff
        value = confidence * mean + (1.0 - confidence) * config.prior
        dimensions[d] = DimensionScore(d, value, confidence, list(ids))
    overall = sum(dimensions[d].value for d in DIMENSIONS) / len(DIMENSIONS)
    return ReputationProfile(subject, dimensions, overall, now)


def explain(
    profile: ReputationProfile,
    events: list[ReputationEvent],
    config: ReputationConfig = ReputationConfig(),
) -> dict[str, Any]:
    """Audit report: per-dimension raw scores, weights, and contributions.

    The report is a sufficient statistic: recompute_from_report() rebuilds
    the profile bit-for-bit from it alone.
    """
    by_id = {e.contract_id.hex(): e for e in events}
    listed = profile.dimensions[DIMENSIONS[0]].contributing_events
    missing = [i for i in listed if i not in by_id]
    if missing:
        raise ReputationError(f"events missing from explanation input: {missing}")

    ordered = [by_id[i] for i in listed]
    weights = [_recency_weight(max(0, profile.computed_at - e.occurred_at), config) for e in ordered]
    scores = [score_event(e, config) for e in ordered]
    n_eff = sum(weights)

    per_dimension: dict[str, Any] = {}
    for d in DIMENSIONS:
        rows = []
        for e, w, s in zip(ordered, weights, scores):
            rows.append(
                {
                    "contract_id": e.contract_id.hex(),
                    "raw_score": s[d],
                    "weight": w,
                    "contribution": w * s[d],
                }
            )
        per_dimension[d] = {
            "rows": rows,
            "value": profile.dimensions[d].value,
            "confidence": profile.dimensions[d].confidence,
        }
    return {
        "subject": str(profile.subject),
        "computed_at": profile.computed_at,
        "prior": config.prior,
        "confidence_k": config.confidence_k,
        "n_eff": n_eff,
        "event_count": len(ordered),
        "dimensions": per_dimension,
        "overall": profile.overall,
        "note": "prior-only profile (no events)" if not ordered else None,
    }


def recompute_from_report(report: dict[str, Any]) -> ReputationProfile:
    """Rebuild the profile using nothing but an explanation report."""
    subject = EntityAddress.parse(report["subject"])
    prior = report["prior"]
    k = report["confidence_k"]
    dimensions: dict[str, DimensionScore] = {}
    for d in DIMENSIONS:
        block = report["dimensions"][d]
        rows = block["rows"]
        if rows:
            n_eff = sum(r["weight"] for r in rows)
            confidence = n_eff / (n_eff + k)
            mean = sum(r["weight"] * r["raw_score"] for r in rows) / n_eff
            value = confidence * mean + (1.0 - confidence) * prior
        else:
            confidence = 0.0
            value = prior
        dimensions[d] = DimensionScore(d, value, confidence, [r["contract_id"] for r in rows])
    overall = sum(dimensions[d].value for d in DIMENSIONS) / len(DIMENSIONS)
    return ReputationProfile(subject, dimensions, overall, report["computed_at"])
