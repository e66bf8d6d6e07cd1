import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agoranet.canonical import canonical_encode
from agoranet.errors import ReputationError
from agoranet.identity import EntityAddress
from agoranet.reputation import (
    DIMENSIONS,
    ReputationConfig,
    ReputationEvent,
    aggregate_profile,
    explain,
    recompute_from_report,
    score_event,
)

SELLER = EntityAddress.parse("a1b2c3d4:000000f1")
CFG = ReputationConfig()


def make_event(
    outcome="settled",
    delivery_count=1,
    rework_count=0,
    rework_limit=3,
    rating=None,
    cost=True,
    chain=True,
    receipt=True,
    cards=True,
    at=0,
    contract_id=None,
):
    return ReputationEvent(
        contract_id=contract_id or bytes([at % 251 + 1] * 15 + [delivery_count % 256]),
        subject=SELLER,
        outcome=outcome,
        delivery_count=delivery_count,
        rework_count=rework_count,
        rework_limit=rework_limit,
        explicit_rating=rating,
        cost_records_present=cost,
        chain_valid=chain,
        receipt_present=receipt,
        cards_captured=cards,
        occurred_at=at,
    )


def test_clean_settled_event_scores_all_ones():
    scores = score_event(make_event(rating=5))
    assert scores == {d: 1.0 for d in DIMENSIONS}


def test_disputed_event_scores():
    # Hand arithmetic: quality 0.2 (no rating, disputed), collaboration
    # max(0, 1 - 4/3) = 0, efficiency 0.5*(1/4) + 0.5*1, integrity 2/3.
    scores = score_event(
        make_event(outcome="disputed", delivery_count=4, rework_count=4, receipt=False)
    )
    assert scores["quality"] == 0.2
    assert scores["reliability"] == 0.0
    assert scores["collaboration"] == 0.0
    assert scores["efficiency"] == 0.5 * (1 / 4) + 0.5
    assert scores["integrity"] == 2 / 3


def test_cancelled_event_base_cases():
    scores = score_event(make_event(outcome="cancelled", delivery_count=0, cost=False))
    assert scores["quality"] == 0.5
    assert scores["reliability"] == 0.0
    assert scores["efficiency"] == 0.0  # no deliveries, no cost records


def test_rating_overrides_outcome_base():
    assert score_event(make_event(outcome="disputed", rating=4))["quality"] == 0.8


def test_zero_events_profile_is_prior():
    profile = aggregate_profile([], now=1000, subject=SELLER)
    for d in DIMENSIONS:
        assert profile.dimensions[d].value == 0.5
        assert profile.dimensions[d].confidence == 0.0
    assert profile.overall == 0.5


def test_one_fresh_maximal_event_matches_closed_form():
    # Independent recomputation of the stated formula: w=1, n_eff=1,
    # c = 1/6, value = (1/6)*1 + (5/6)*0.5 = 0.58333...
    profile = aggregate_profile([make_event(rating=5, at=1000)], now=1000)
    expected = (1 / 6) * 1.0 + (5 / 6) * 0.5
    for d in DIMENSIONS:
        assert profile.dimensions[d].value == pytest.approx(expected, abs=1e-12)
    assert profile.overall == pytest.approx(expected, abs=1e-12)


def test_half_life_is_respected():
    # An event one half-life old carries weight 0.5; check against a direct sum.
    old = make_event(rating=5, at=0)
    now = CFG.half_life_ms
    profile = aggregate_profile([old], now=now)
    n_eff = 0.5
    c = n_eff / (n_eff + CFG.confidence_k)
    expected = c * 1.0 + (1 - c) * 0.5
    assert profile.dimensions["quality"].value == pytest.approx(expected, abs=1e-12)


def test_bad_event_recent_scores_no_higher_than_old():
    bad_old = [make_event(outcome="disputed", rework_count=5, cost=False, receipt=False, at=0)]
    bad_recent = [make_event(outcome="disputed", rework_count=5, cost=False, receipt=False,
                             at=90 * 86_400_000)]
    now = 90 * 86_400_000
    assert aggregate_profile(bad_recent, now).overall <= aggregate_profile(bad_old, now).overall


def test_recency_monotonicity_randomized():
    # Moving a below-prior event closer to now never raises the overall,
    # provided the event also scores at or below the profile's own level
    # (the provable form; an event above the profile's level can lift it).
    rng = random.Random(99)
    now = 200 * 86_400_000
    checked = 0
    for _ in range(400):
        events = [
            make_event(
                outcome=rng.choice(["settled", "cancelled", "disputed"]),
                delivery_count=rng.randint(0, 5),
                rework_count=rng.randint(0, 6),
                rating=rng.choice([None, 1, 2, 3]),
                cost=rng.random() < 0.5,
                chain=rng.random() < 0.5,
                receipt=rng.random() < 0.5,
                cards=rng.random() < 0.5,
                at=rng.randint(0, now),
                contract_id=rng.randbytes(16),
            )
            for _ in range(rng.randint(1, 6))
        ]
        profile = aggregate_profile(events, now)
        idx = rng.randrange(len(events))
        mean_score = sum(score_event(events[idx]).values()) / len(DIMENSIONS)
        if mean_score > min(CFG.prior, profile.overall):
            continue
        checked += 1
        moved = list(events)
        moved[idx] = ReputationEvent.from_record(
            {**events[idx].to_record(), "occurred_at": rng.randint(events[idx].occurred_at, now)}
        )
        assert aggregate_profile(moved, now).overall <= profile.overall + 1e-12
    assert checked >= 100


def test_mixed_subjects_rejected():
    other = ReputationEvent.from_record(
        {**make_event().to_record(), "subject": "a1b2c3d4:000000f2"}
    )
    with pytest.raises(ReputationError):
        aggregate_profile([make_event(), other], now=0)


def test_determinism_across_runs():
    events = [make_event(at=i * 1000, contract_id=bytes([i] * 16)) for i in range(1, 6)]
    a = aggregate_profile(events, now=10_000)
    b = aggregate_profile(list(events), now=10_000)
    assert canonical_encode(a.to_record()) == canonical_encode(b.to_record())


@settings(max_examples=200, deadline=None)
@given(
    st.lists(
        st.builds(
            make_event,
            outcome=st.sampled_from(["settled", "cancelled", "disputed"]),
            delivery_count=st.integers(0, 50),
            rework_count=st.integers(0, 50),
            rework_limit=st.integers(0, 10),
            rating=st.none() | st.integers(1, 5),
            cost=st.booleans(),
            chain=st.booleans(),
            receipt=st.booleans(),
            cards=st.booleans(),
            at=st.integers(0, 10**12),
            contract_id=st.binary(min_size=16, max_size=16),
        ),
        max_size=8,
    ),
    st.integers(0, 10**12),
)
def test_values_always_in_unit_interval(events, now):
    profile = aggregate_profile(events, now, subject=SELLER)
    for d in DIMENSIONS:
        assert 0.0 <= profile.dimensions[d].value <= 1.0
        assert 0.0 <= profile.dimensions[d].confidence <= 1.0
    assert 0.0 <= profile.overall <= 1.0


def test_reliability_converges_with_confidence():
    now = 0
    settled = [make_event(at=now, contract_id=bytes([i % 256, i // 256] + [7] * 14))
               for i in range(1000)]
    profile = aggregate_profile(settled, now)
    n_eff = 1000.0
    bound = n_eff / (n_eff + CFG.confidence_k)  # weighted mean is exactly 1
    assert abs(profile.dimensions["reliability"].value - (bound * 1.0 + (1 - bound) * 0.5)) < 0.01

    disputed = [
        ReputationEvent.from_record({**e.to_record(), "outcome": "disputed"}) for e in settled
    ]
    profile_d = aggregate_profile(disputed, now)
    assert abs(profile_d.dimensions["reliability"].value - (1 - bound) * 0.5) < 0.01


def test_explain_is_sufficient_statistic():
    events = [
        make_event(at=1_000_000, contract_id=bytes([1] * 16)),
        make_event(outcome="disputed", rework_count=4, at=5_000_000, contract_id=bytes([2] * 16)),
        make_event(outcome="cancelled", delivery_count=0, at=9_000_000, contract_id=bytes([3] * 16)),
    ]
    profile = aggregate_profile(events, now=10_000_000)
    report = explain(profile, events)
    rebuilt = recompute_from_report(report)
    assert canonical_encode(rebuilt.to_record()) == canonical_encode(profile.to_record())


def test_explain_empty_profile_notes_prior():
    profile = aggregate_profile([], now=5, subject=SELLER)
    report = explain(profile, [])
    assert report["note"] == "prior-only profile (no events)"
    rebuilt = recompute_from_report(report)
    assert canonical_encode(rebuilt.to_record()) == canonical_encode(profile.to_record())


def test_explain_missing_event_raises():
    events = [make_event(contract_id=bytes([1] * 16)), make_event(contract_id=bytes([2] * 16))]
    profile = aggregate_profile(events, now=0)
    with pytest.raises(ReputationError):
        explain(profile, events[:1])


def test_dropping_report_row_is_detected():
    events = [
        make_event(at=0, contract_id=bytes([1] * 16)),
        make_event(outcome="disputed", at=0, contract_id=bytes([2] * 16)),
    ]
    profile = aggregate_profile(events, now=1000)
    report = explain(profile, events)
    for d in DIMENSIONS:
        report["dimensions"][d]["rows"] = report["dimensions"][d]["rows"][:1]
    rebuilt = recompute_from_report(report)
    assert canonical_encode(rebuilt.to_record()) != canonical_encode(profile.to_record())
