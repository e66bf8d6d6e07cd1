"""Policy checkpoint pipeline: ordered enforcement on every inbound mail.

Each registered entity owns a pipeline instance. Evaluation is strictly in
list order and the first non-Allow outcome terminates the run; every
evaluated checkpoint leaves a DecisionRecord. Escalation parks the envelope
with the entity's designated owner and resumes after the escalating
checkpoint once approved, so earlier checkpoints are never double-counted.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .canonical import canonical_decode, canonical_encode
from .envelope import (
    APPROVAL_REQUEST,
    APPROVAL_RESPONSE,
    CONTRACT_ACCEPT,
    CONTRACT_APPROVE,
    DISCOVER,
    DISCOVERY_DOC,
    ERROR,
    INVOKE,
    PAYMENT,
    PING,
    PONG,
    Envelope,
)
from .errors import SessionError
from .identity import EntityAddress, card_fingerprint

# Reason codes shared with the wire surface.
NOT_FRIEND = "NOT_FRIEND"
CARD_CHANGED = "CARD_CHANGED"
NO_SESSION = "NO_SESSION"
SESSION_CLOSED = "SESSION_CLOSED"
NOT_PARTICIPANT = "NOT_PARTICIPANT"
RATE_LIMITED = "RATE_LIMITED"
TOO_LARGE = "TOO_LARGE"
PAYMENT_REQUIRED = "PAYMENT_REQUIRED"
BUDGET_EXCEEDED = "BUDGET_EXCEEDED"
BAD_PAYMENT = "BAD_PAYMENT"
OWNER_REJECTED = "OWNER_REJECTED"

DEFAULT_SESSION_EXEMPT = frozenset(
    {DISCOVER, DISCOVERY_DOC, PING, PONG, APPROVAL_REQUEST, APPROVAL_RESPONSE, ERROR}
)
# Runtime-generated mail that social gating must not strangle.
DEFAULT_FRIEND_EXEMPT = DEFAULT_SESSION_EXEMPT

DEFAULT_RATE_LIMIT = 60
DEFAULT_RATE_WINDOW_MS = 60_000
DEFAULT_CONTENT_LIMIT = 65_536
DEFAULT_AUTO_APPROVE_MICROUSD = 5_000_000
DEFAULT_CHARGEABLE_INTENTS = frozenset({INVOKE})


# ---------------------------------------------------------------------------
# Outcomes and records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Allow:
    kind: str = "allow"


@dataclass(frozen=True)
class Reject:
    code: str
    text: str = ""
    kind: str = "reject"


@dataclass(frozen=True)
class Escalate:
    reason: str
    # Deferred budget charge applied atomically if the owner approves.
    pending_charge: Optional[tuple[bytes, int]] = None  # (session_id, micro-USD)
    kind: str = "escalate"


Outcome = Any  # Allow | Reject | Escalate


@dataclass
class DecisionRecord:
    """One checkpoint outcome bound to the envelope it judged."""

    envelope_id: bytes
    checkpoint: str
    outcome: str  # allow | reject | escalate
    reason: Optional[str]
    at: int
    approval_id: Optional[bytes] = None
    phase: str = "evaluation"  # evaluation | resolution

    def to_record(self) -> dict[str, Any]:
        return {
            "envelope_id": self.envelope_id.hex(),
            "checkpoint": self.checkpoint,
            "outcome": self.outcome,
            "reason": self.reason,
            "at": self.at,
            "approval_id": self.approval_id.hex() if self.approval_id else None,
            "phase": self.phase,
        }

    @classmethod
    def from_record(cls, r: dict[str, Any]) -> "DecisionRecord":
        return cls(
            envelope_id=bytes.fromhex(r["envelope_id"]),
            checkpoint=r["checkpoint"],
            outcome=r["outcome"],
            reason=r.get("reason"),
            at=r["at"],
            approval_id=bytes.fromhex(r["approval_id"]) if r.get("approval_id") else None,
            phase=r.get("phase", "evaluation"),
        )


# ---------------------------------------------------------------------------
# Sessions and budgets
# ---------------------------------------------------------------------------


@dataclass
class Budget:
    spend_ceiling_microusd: int
    token_ceiling: int
    spent_microusd: int = 0
    tokens_used: int = 0

    def __post_init__(self):
        self._lock = threading.Lock()

    def charge_money_if_within(self, amount: int) -> bool:
        """Atomically add ``amount`` unless it would breach the ceiling."""
        if amount < 0:
            return False
        with self._lock:
            if self.spent_microusd + amount > self.spend_ceiling_microusd:
                return False
            self.spent_microusd += amount
            return True

    def charge_tokens_if_within(self, tokens: int) -> bool:
        if tokens < 0:
            return False
        with self._lock:
            if self.tokens_used + tokens > self.token_ceiling:
                return False
            self.tokens_used += tokens
            return True

    def to_record(self) -> dict[str, Any]:
        return {
            "spend_ceiling_microusd": self.spend_ceiling_microusd,
            "token_ceiling": self.token_ceiling,
            "spent_microusd": self.spent_microusd,
            "tokens_used": self.tokens_used,
        }

    @classmethod
    def from_record(cls, r: dict[str, Any]) -> "Budget":
        return cls(
            spend_ceiling_microusd=r["spend_ceiling_microusd"],
            token_ceiling=r["token_ceiling"],
            spent_microusd=r.get("spent_microusd", 0),
            tokens_used=r.get("tokens_used", 0),
        )


@dataclass
class SessionRecord:
    session_id: bytes
    participants: list[tuple[EntityAddress, str]]  # (address, role)
    policy_ref: Optional[str]
    budget: Optional[Budget]
    status: str  # active | closed
    created_at: int

    def has_participant(self, addr: EntityAddress) -> bool:
        return any(a == addr for a, _ in self.participants)

    def to_record(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id.hex(),
            "participants": [[str(a), role] for a, role in self.participants],
            "policy_ref": self.policy_ref,
            "budget": self.budget.to_record() if self.budget else None,
            "status": self.status,
            "created_at": self.created_at,
        }

    @classmethod
    def from_record(cls, r: dict[str, Any]) -> "SessionRecord":
        return cls(
            session_id=bytes.fromhex(r["session_id"]),
            participants=[(EntityAddress.parse(a), role) for a, role in r["participants"]],
            policy_ref=r.get("policy_ref"),
            budget=Budget.from_record(r["budget"]) if r.get("budget") else None,
            status=r["status"],
            created_at=r["created_at"],
        )


class SessionStore:
    def __init__(self):
        self._sessions: dict[bytes, SessionRecord] = {}
        self._lock = threading.Lock()

    def open(
        self,
        session_id: bytes,
        participants: list[tuple[EntityAddress, str]],
        at: int,
        policy_ref: str | None = None,
        budget: Budget | None = None,
    ) -> SessionRecord:
        record = SessionRecord(
            session_id=session_id,
            participants=list(participants),
            policy_ref=policy_ref,
            budget=budget,
            status="active",
            created_at=at,
        )
        with self._lock:
            if session_id in self._sessions:
                raise SessionError(f"session {session_id.hex()} already exists")
            self._sessions[session_id] = record
        return record

    def close(self, session_id: bytes) -> SessionRecord:
        record = self.get(session_id)
        if record is None:
            raise SessionError(f"unknown session {session_id.hex()}")
        record.status = "closed"
        return record

    def get(self, session_id: bytes) -> Optional[SessionRecord]:
        with self._lock:
            return self._sessions.get(session_id)

    def all(self) -> list[SessionRecord]:
        with self._lock:
            return list(self._sessions.values())


# ---------------------------------------------------------------------------
# Approvals and activities
# ---------------------------------------------------------------------------


@dataclass
class PendingApproval:
    approval_id: bytes
    envelope: Envelope
    requested_from: EntityAddress
    reason: str
    requested_at: int
    resume_index: int  # checkpoint index AFTER which evaluation resumes
    recipient: EntityAddress
    resolution: str = "pending"  # pending | approved | rejected
    resolved_at: Optional[int] = None
    pending_charge: Optional[tuple[bytes, int]] = None

    def to_record(self) -> dict[str, Any]:
        return {
            "approval_id": self.approval_id.hex(),
            "envelope": self.envelope.to_record(),
            "requested_from": str(self.requested_from),
            "reason": self.reason,
            "requested_at": self.requested_at,
            "resume_index": self.resume_index,
            "recipient": str(self.recipient),
            "resolution": self.resolution,
            "resolved_at": self.resolved_at,
            "pending_charge": [self.pending_charge[0].hex(), self.pending_charge[1]]
            if self.pending_charge
            else None,
        }

    @classmethod
    def from_record(cls, r: dict[str, Any]) -> "PendingApproval":
        charge = r.get("pending_charge")
        return cls(
            approval_id=bytes.fromhex(r["approval_id"]),
            envelope=Envelope.from_record(r["envelope"]),
            requested_from=EntityAddress.parse(r["requested_from"]),
            reason=r["reason"],
            requested_at=r["requested_at"],
            resume_index=r["resume_index"],
            recipient=EntityAddress.parse(r["recipient"]),
            resolution=r["resolution"],
            resolved_at=r.get("resolved_at"),
            pending_charge=(bytes.fromhex(charge[0]), charge[1]) if charge else None,
        )


_ACTIVITY_ORDER = {"started": 0, "completed": 1, "failed": 1}


@dataclass
class ActivityRecord:
    activity_id: bytes
    session_id: Optional[bytes]
    kind: str  # tool_invocation | delivery | settlement | message
    state: str = "started"
    inputs: list[bytes] = field(default_factory=list)  # envelope ids
    outputs: list[bytes] = field(default_factory=list)
    cost_ref: Optional[str] = None

    def transition(self, state: str) -> None:
        if _ACTIVITY_ORDER.get(state, -1) < _ACTIVITY_ORDER.get(self.state, 0):
            raise SessionError(f"activity cannot move {self.state} -> {state}")
        if self.state in ("completed", "failed") and state != self.state:
            raise SessionError(f"activity already terminal in {self.state}")
        self.state = state

    def to_record(self) -> dict[str, Any]:
        return {
            "activity_id": self.activity_id.hex(),
            "session_id": self.session_id.hex() if self.session_id else None,
            "kind": self.kind,
            "state": self.state,
            "inputs": [i.hex() for i in self.inputs],
            "outputs": [o.hex() for o in self.outputs],
            "cost_ref": self.cost_ref,
        }


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


class Checkpoint:
    """A named policy enforcement point; subclasses implement evaluate()."""

    name = "checkpoint"

    def evaluate(self, env: Envelope, ctx) -> Outcome:  # pragma: no cover - interface
        raise NotImplementedError


class FriendCheckpoint(Checkpoint):
    """Social-graph gating: the recipient must have pinned the sender."""

    name = "friend"

    def __init__(self, exempt_intents=DEFAULT_FRIEND_EXEMPT):
        self.exempt_intents = set(exempt_intents)

    def evaluate(self, env: Envelope, ctx) -> Outcome:
        if env.intent in self.exempt_intents:
            return Allow()
        if env.sender == env.recipient:
            return Allow()
        edge = ctx.trust_edge(env.recipient, env.sender)
        if edge is None:
            return Reject(NOT_FRIEND, f"{env.sender} is not trusted by {env.recipient}")
        sender_card = ctx.sender_card
        if sender_card is not None and card_fingerprint(sender_card) != edge.peer_card_fingerprint:
            return Reject(CARD_CHANGED, "sender card no longer matches the pinned fingerprint")
        return Allow()


class SessionCheckpoint(Checkpoint):
    name = "session"

    def __init__(self, exempt_intents=DEFAULT_SESSION_EXEMPT):
        self.exempt_intents = set(exempt_intents)

    def evaluate(self, env: Envelope, ctx) -> Outcome:
        if env.intent in self.exempt_intents:
            return Allow()
        if env.session_id is None:
            return Reject(NO_SESSION, "message carries no session reference")
        session = ctx.sessions.get(env.session_id)
        if session is None:
            return Reject(NO_SESSION, f"unknown session {env.session_id.hex()}")
        if session.status != "active":
            return Reject(SESSION_CLOSED, f"session {env.session_id.hex()} is closed")
        if not session.has_participant(env.sender):
            return Reject(NOT_PARTICIPANT, f"{env.sender} is not a session participant")
        if not session.has_participant(env.recipient):
            return Reject(NOT_PARTICIPANT, f"{env.recipient} is not a session participant")
        return Allow()


class RateLimitCheckpoint(Checkpoint):
    """Sliding window per sender; admissions inside the trailing window count."""

    name = "rate_limit"

    def __init__(self, limit: int = DEFAULT_RATE_LIMIT, window_ms: int = DEFAULT_RATE_WINDOW_MS):
        self.limit = limit
        self.window_ms = window_ms
        self.windows: dict[str, deque[int]] = {}

    def evaluate(self, env: Envelope, ctx) -> Outcome:
        now = ctx.now
        window = self.windows.setdefault(str(env.sender), deque())
        cutoff = now - self.window_ms
        while window and window[0] <= cutoff:
            window.popleft()
        if len(window) >= self.limit:
            return Reject(RATE_LIMITED, f"{len(window)} admissions in the last {self.window_ms} ms")
        window.append(now)
        return Allow()


class ContentLengthCheckpoint(Checkpoint):
    name = "content_length"

    def __init__(self, limit: int = DEFAULT_CONTENT_LIMIT):
        self.limit = limit

    def evaluate(self, env: Envelope, ctx) -> Outcome:
        size = env.payload.byte_size()
        if size > self.limit:
            return Reject(TOO_LARGE, f"payload is {size} bytes, limit {self.limit}")
        return Allow()


def _payload_json(env: Envelope, ctx) -> Any:
    try:
        return canonical_decode(ctx.plaintext_of(env))
    except Exception:
        return None


class PaymentVerifyCheckpoint(Checkpoint):
    """Chargeable invocations must carry a receipt or active-escrow proof."""

    name = "payment_verify"

    def __init__(self, chargeable_intents=DEFAULT_CHARGEABLE_INTENTS):
        self.chargeable_intents = set(chargeable_intents)

    def evaluate(self, env: Envelope, ctx) -> Outcome:
        if env.intent not in self.chargeable_intents:
            return Allow()
        body = _payload_json(env, ctx)
        proof = body.get("payment_proof") if isinstance(body, dict) else None
        if not isinstance(proof, dict):
            return Reject(PAYMENT_REQUIRED, "no payment proof attached")
        trade = ctx.trade
        if trade is None:
            return Reject(PAYMENT_REQUIRED, "no trade state available to verify against")
        kind = proof.get("kind")
        if kind == "escrow":
            try:
                contract_id = bytes.fromhex(proof["contract_id"])
            except (KeyError, ValueError):
                return Reject(PAYMENT_REQUIRED, "malformed escrow reference")
            if trade.has_active_escrow(contract_id):
                return Allow()
            return Reject(PAYMENT_REQUIRED, "escrow is not active or holds no funds")
        if kind == "receipt":
            receipt = proof.get("receipt")
            if isinstance(receipt, dict) and trade.receipt_is_valid(receipt):
                return Allow()
            return Reject(PAYMENT_REQUIRED, "receipt did not verify")
        return Reject(PAYMENT_REQUIRED, f"unknown proof kind {kind!r}")


class ContractApprovalCheckpoint(Checkpoint):
    """Contract decisions addressed to an owner-guarded party defer to the owner."""

    name = "contract_approval"

    GUARDED_INTENTS = frozenset({CONTRACT_APPROVE, CONTRACT_ACCEPT})

    def evaluate(self, env: Envelope, ctx) -> Outcome:
        if env.intent not in self.GUARDED_INTENTS:
            return Allow()
        if not ctx.recipient_contract_guarded:
            return Allow()
        return Escalate(f"{env.intent} requires the owner's decision")


class PaymentApprovalCheckpoint(Checkpoint):
    name = "payment_approval"

    def __init__(self, auto_approve_threshold: int = DEFAULT_AUTO_APPROVE_MICROUSD):
        self.auto_approve_threshold = auto_approve_threshold

    def evaluate(self, env: Envelope, ctx) -> Outcome:
        if env.intent != PAYMENT:
            return Allow()
        body = _payload_json(env, ctx)
        amount = body.get("amount_microusd") if isinstance(body, dict) else None
        if not isinstance(amount, int) or amount < 0:
            return Reject(BAD_PAYMENT, "payment carries no valid amount_microusd")
        session = ctx.sessions.get(env.session_id) if env.session_id else None
        budget = session.budget if session else None
        if budget is not None and budget.spent_microusd + amount > budget.spend_ceiling_microusd:
            return Reject(
                BUDGET_EXCEEDED,
                f"amount {amount} would push spend past ceiling "
                f"{budget.spend_ceiling_microusd}",
            )
        if amount > self.auto_approve_threshold:
            charge = (env.session_id, amount) if budget is not None else None
            return Escalate(f"payment of {amount} micro-USD exceeds auto-approve threshold",
                            pending_charge=charge)
        if budget is not None and not budget.charge_money_if_within(amount):
            return Reject(BUDGET_EXCEEDED, "budget consumed concurrently")
        return Allow()


class CallbackCheckpoint(Checkpoint):
    """Custom hook: wraps any (env, ctx) -> Outcome callable."""

    def __init__(self, name: str, fn: Callable[[Envelope, Any], Outcome]):
        self.name = name
        self.fn = fn

    def evaluate(self, env: Envelope, ctx) -> Outcome:
        return self.fn(env, ctx)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


@dataclass
class PipelineRun:
    outcome: Outcome
    records: list[DecisionRecord]
    escalated_index: Optional[int] = None


class Pipeline:
    """Ordered checkpoint list bound to an owner address for escalation."""

    def __init__(self, checkpoints: list[Checkpoint], owner: EntityAddress):
        self.checkpoints = list(checkpoints)
        self.owner = owner

    def append(self, checkpoint: Checkpoint) -> None:
        self.checkpoints.append(checkpoint)

    def run(self, env: Envelope, ctx, start: int = 0) -> PipelineRun:
        records: list[DecisionRecord] = []
        for index in range(start, len(self.checkpoints)):
            cp = self.checkpoints[index]
            outcome = cp.evaluate(env, ctx)
            records.append(
                DecisionRecord(
                    envelope_id=env.envelope_id,
                    checkpoint=cp.name,
                    outcome=outcome.kind,
                    reason=getattr(outcome, "code", None) or getattr(outcome, "reason", None),
                    at=ctx.now,
                )
            )
            if isinstance(outcome, Reject):
                return PipelineRun(outcome, records)
            if isinstance(outcome, Escalate):
                return PipelineRun(outcome, records, escalated_index=index)
        return PipelineRun(Allow(), records)


def default_pipeline(owner: EntityAddress, *, config: Optional[dict[str, Any]] = None) -> Pipeline:
    """The built-in seven-checkpoint pipeline in its documented order."""
    cfg = config or {}
    return Pipeline(
        [
            FriendCheckpoint(exempt_intents=cfg.get("friend_exempt", DEFAULT_FRIEND_EXEMPT)),
            SessionCheckpoint(exempt_intents=cfg.get("session_exempt", DEFAULT_SESSION_EXEMPT)),
            RateLimitCheckpoint(
                limit=cfg.get("rate_limit", DEFAULT_RATE_LIMIT),
                window_ms=cfg.get("rate_window_ms", DEFAULT_RATE_WINDOW_MS),
            ),
            ContentLengthCheckpoint(limit=cfg.get("content_limit", DEFAULT_CONTENT_LIMIT)),
            PaymentVerifyCheckpoint(
                chargeable_intents=cfg.get("chargeable_intents", DEFAULT_CHARGEABLE_INTENTS)
            ),
            ContractApprovalCheckpoint(),
            PaymentApprovalCheckpoint(
                auto_approve_threshold=cfg.get(
                    "auto_approve_threshold", DEFAULT_AUTO_APPROVE_MICROUSD
                )
            ),
        ],
        owner=owner,
    )


def decision_log_lines(records: list[DecisionRecord]) -> bytes:
    """Canonical-JSON-lines export, one record per line."""
    return b"\n".join(canonical_encode(r.to_record()) for r in records) + (b"\n" if records else b"")
