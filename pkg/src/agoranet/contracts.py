"""Contract lifecycle, escrow ledger, snapshot hash chain, and receipts.

State machine (arbiter-mediated; every successful transition appends an
arbiter-signed snapshot and emits an event):

    DRAFT -> PENDING -> ACTIVE -> COMPLETING -> SETTLING -> SETTLED
      |         |                     |             |
      v         v                     v             v
   CANCELLED CANCELLED            DISPUTED      DISPUTED

Draft amendments reset approvals and bump the version counter, voiding stale
approvals. Escrow funding freezes the price at activation and releases it at
settlement or dispute resolution; the ledger conserves value under every
operation. Money is integer micro-USD throughout.
"""

from __future__ import annotations

import dataclasses
import hashlib
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric import ed25519

from .canonical import canonical_encode
from .clock import Clock
from .errors import ContractError, InsufficientFundsError, LedgerError, WrongStateError
from .identity import EntityAddress, EntityCard, KeyMaterial
from .rng import IdStream

DRAFT = "DRAFT"
PENDING = "PENDING"
ACTIVE = "ACTIVE"
COMPLETING = "COMPLETING"
SETTLING = "SETTLING"
SETTLED = "SETTLED"
CANCELLED = "CANCELLED"
DISPUTED = "DISPUTED"

STATES = (DRAFT, PENDING, ACTIVE, COMPLETING, SETTLING, SETTLED, CANCELLED, DISPUTED)
TERMINAL_STATES = (SETTLED, CANCELLED, DISPUTED)

ESCROW = "escrow"
DIRECT = "direct"

DEFAULT_REWORK_LIMIT = 3

COST_DIMENSIONS = ("tokens", "compute_hours", "usd")

# The single source of truth for which operation is legal in which state.
# Everything absent is WRONG_STATE.
TRANSITION_TABLE: dict[tuple[str, str], str] = {
    (DRAFT, "amend"): DRAFT,
    (DRAFT, "approve"): DRAFT,  # may advance to PENDING when both parties agree
    (DRAFT, "cancel"): CANCELLED,
    (PENDING, "activate"): ACTIVE,
    (PENDING, "cancel"): CANCELLED,
    (ACTIVE, "complete"): COMPLETING,
    (COMPLETING, "request_rework"): ACTIVE,  # or DISPUTED past the rework limit
    (COMPLETING, "accept"): SETTLING,
    (COMPLETING, "dispute"): DISPUTED,
    (SETTLING, "settle"): SETTLED,
    (SETTLING, "dispute"): DISPUTED,
    (DISPUTED, "resolve"): DISPUTED,  # terminal; resolution sets a flag
}


@dataclass(frozen=True)
class CostRecord:
    dimension: str
    quantity: int

    def __post_init__(self):
        if self.dimension not in COST_DIMENSIONS:
            raise ContractError(f"unknown cost dimension {self.dimension!r}")
        if self.quantity < 0:
            raise ContractError("cost quantities must be non-negative")

    def to_record(self) -> dict[str, Any]:
        return {"dimension": self.dimension, "quantity": self.quantity}

    @classmethod
    def from_record(cls, r: dict[str, Any]) -> "CostRecord":
        return cls(dimension=r["dimension"], quantity=int(r["quantity"]))


@dataclass
class Delivery:
    delivery_id: bytes
    artifacts: list[bytes]
    cost_records: list[CostRecord]
    submitted_at: int
    verdict: str = "pending"  # pending | accepted | rework_requested

    def to_record(self) -> dict[str, Any]:
        return {
            "delivery_id": self.delivery_id.hex(),
            "artifacts": [a.hex() for a in self.artifacts],
            "cost_records": [c.to_record() for c in self.cost_records],
            "submitted_at": self.submitted_at,
            "verdict": self.verdict,
        }

    @classmethod
    def from_record(cls, r: dict[str, Any]) -> "Delivery":
        return cls(
            delivery_id=bytes.fromhex(r["delivery_id"]),
            artifacts=[bytes.fromhex(a) for a in r["artifacts"]],
            cost_records=[CostRecord.from_record(c) for c in r["cost_records"]],
            submitted_at=r["submitted_at"],
            verdict=r["verdict"],
        )


@dataclass(frozen=True)
class Snapshot:
    """Hash-chained, arbiter-signed record of one state transition."""

    sequence: int
    contract_id: bytes
    state: str
    intent: str
    draft_version: int
    prev_hash: bytes
    hash: bytes
    arbiter_signature: bytes

    @staticmethod
    def body_record(
        sequence: int,
        contract_id: bytes,
        state: str,
        intent: str,
        draft_version: int,
        prev_hash: bytes,
    ) -> dict[str, Any]:
        return {
            "sequence": sequence,
            "contract_id": contract_id.hex(),
            "state": state,
            "intent": intent,
            "draft_version": draft_version,
            "prev_hash": prev_hash.hex(),
        }

    @staticmethod
    def compute_hash(body: dict[str, Any]) -> bytes:
        return hashlib.sha256(canonical_encode(body)).digest()

    def to_record(self) -> dict[str, Any]:
        record = Snapshot.body_record(
            self.sequence, self.contract_id, self.state, self.intent,
            self.draft_version, self.prev_hash,
        )
        record["hash"] = self.hash.hex()
        record["arbiter_signature"] = self.arbiter_signature.hex()
        return record

    @classmethod
    def from_record(cls, r: dict[str, Any]) -> "Snapshot":
        return cls(
            sequence=int(r["sequence"]),
            contract_id=bytes.fromhex(r["contract_id"]),
            state=r["state"],
            intent=r["intent"],
            draft_version=int(r["draft_version"]),
            prev_hash=bytes.fromhex(r["prev_hash"]),
            hash=bytes.fromhex(r["hash"]),
            arbiter_signature=bytes.fromhex(r["arbiter_signature"]),
        )


@dataclass(frozen=True)
class SettlementRef:
    mode: str  # escrow | direct
    reference: str

    def to_record(self) -> dict[str, Any]:
        return {"mode": self.mode, "reference": self.reference}

    @classmethod
    def from_record(cls, r: dict[str, Any]) -> "SettlementRef":
        return cls(mode=r["mode"], reference=r["reference"])


@dataclass(frozen=True)
class Receipt:
    """Arbiter attestation of what a contract delivered and cost.

    Verifiable from the arbiter's public key and the receipt bytes alone;
    the cost digest recomputes from the cost records without any payloads.
    """

    contract_id: bytes
    final_snapshot_hash: bytes
    cost_digest: bytes
    totals: dict[str, int]
    settlement: SettlementRef
    issued_at: int
    arbiter_signature: bytes

    def _body(self) -> dict[str, Any]:
        return {
            "contract_id": self.contract_id.hex(),
            "final_snapshot_hash": self.final_snapshot_hash.hex(),
            "cost_digest": self.cost_digest.hex(),
            "totals": dict(self.totals),
            "settlement": self.settlement.to_record(),
            "issued_at": self.issued_at,
        }

    def signing_bytes(self) -> bytes:
        return canonical_encode(self._body())

    def to_record(self) -> dict[str, Any]:
        record = self._body()
        record["arbiter_signature"] = self.arbiter_signature.hex()
        return record

    @classmethod
    def from_record(cls, r: dict[str, Any]) -> "Receipt":
        return cls(
            contract_id=bytes.fromhex(r["contract_id"]),
            final_snapshot_hash=bytes.fromhex(r["final_snapshot_hash"]),
            cost_digest=bytes.fromhex(r["cost_digest"]),
            totals={k: int(v) for k, v in r["totals"].items()},
            settlement=SettlementRef.from_record(r["settlement"]),
            issued_at=int(r["issued_at"]),
            arbiter_signature=bytes.fromhex(r["arbiter_signature"]),
        )


def cost_digest(cost_records: list[CostRecord]) -> bytes:
    return hashlib.sha256(canonical_encode([c.to_record() for c in cost_records])).digest()


class EscrowLedger:
    """Micro-USD accounts with available/frozen split; value is conserved."""

    def __init__(self):
        self._accounts: dict[str, list[int]] = {}
        self._lock = threading.Lock()

    def _account(self, addr: EntityAddress) -> list[int]:
        return self._accounts.setdefault(str(addr), [0, 0])

    def deposit(self, addr: EntityAddress, amount: int) -> None:
        if amount < 0:
            raise LedgerError("deposit must be non-negative")
        with self._lock:
            self._account(addr)[0] += amount

    def freeze(self, addr: EntityAddress, amount: int) -> None:
        with self._lock:
            acct = self._account(addr)
            if acct[0] < amount:
                raise InsufficientFundsError(
                    f"{addr} has {acct[0]} available, needs {amount}"
                )
            acct[0] -= amount
            acct[1] += amount

    def release_frozen(self, source: EntityAddress, amount: int, to: EntityAddress) -> None:
        with self._lock:
            acct = self._account(source)
            if acct[1] < amount:
                raise LedgerError(f"{source} has only {acct[1]} frozen, needs {amount}")
            acct[1] -= amount
            self._account(to)[0] += amount

    def split_frozen(
        self, source: EntityAddress, amount: int,
        first: EntityAddress, first_amount: int, second: EntityAddress,
    ) -> None:
        """Release ``amount`` of frozen funds: ``first_amount`` to first, rest to second."""
        if not 0 <= first_amount <= amount:
            raise LedgerError("split amount out of range")
        with self._lock:
            acct = self._account(source)
            if acct[1] < amount:
                raise LedgerError(f"{source} has only {acct[1]} frozen, needs {amount}")
            acct[1] -= amount
            self._account(first)[0] += first_amount
            self._account(second)[0] += amount - first_amount

    def transfer_available(self, source: EntityAddress, to: EntityAddress, amount: int) -> None:
        if amount < 0:
            raise LedgerError("transfer must be non-negative")
        with self._lock:
            acct = self._account(source)
            if acct[0] < amount:
                raise InsufficientFundsError(
                    f"{source} has {acct[0]} available, needs {amount}"
                )
            acct[0] -= amount
            self._account(to)[0] += amount

    def balance(self, addr: EntityAddress) -> tuple[int, int]:
        with self._lock:
            acct = self._accounts.get(str(addr), [0, 0])
            return acct[0], acct[1]

    def total_value(self) -> int:
        with self._lock:
            return sum(a + f for a, f in self._accounts.values())

    def to_record(self) -> dict[str, Any]:
        with self._lock:
            return {addr: list(acct) for addr, acct in sorted(self._accounts.items())}

    @classmethod
    def from_record(cls, r: dict[str, Any]) -> "EscrowLedger":
        ledger = cls()
        for addr, (available, frozen) in r.items():
            ledger._accounts[addr] = [int(available), int(frozen)]
        return ledger


@dataclass
class Contract:
    contract_id: bytes
    buyer: EntityAddress
    seller: EntityAddress
    arbiter: EntityAddress
    terms: str
    price: int
    funding_mode: str
    state: str = DRAFT
    draft_version: int = 1
    approvals: set[tuple[str, int]] = field(default_factory=set)
    rework_count: int = 0
    rework_limit: int = DEFAULT_REWORK_LIMIT
    deliveries: list[Delivery] = field(default_factory=list)
    settlement: Optional[SettlementRef] = None
    captured_cards: dict[str, EntityCard] = field(default_factory=dict)
    snapshots: list[Snapshot] = field(default_factory=list)
    dispute_resolved: bool = False
    explicit_rating: Optional[int] = None
    escrow_hold: int = 0  # micro-USD currently frozen for this contract

    def party_role(self, addr: EntityAddress) -> Optional[str]:
        if addr == self.buyer:
            return "buyer"
        if addr == self.seller:
            return "seller"
        if addr == self.arbiter:
            return "arbiter"
        return None

    def pending_delivery(self) -> Optional[Delivery]:
        for d in self.deliveries:
            if d.verdict == "pending":
                return d
        return None

    def all_cost_records(self) -> list[CostRecord]:
        return [c for d in self.deliveries for c in d.cost_records]

    def to_record(self) -> dict[str, Any]:
        return {
            "contract_id": self.contract_id.hex(),
            "buyer": str(self.buyer),
            "seller": str(self.seller),
            "arbiter": str(self.arbiter),
            "terms": self.terms,
            "price": self.price,
            "funding_mode": self.funding_mode,
            "state": self.state,
            "draft_version": self.draft_version,
            "approvals": sorted([list(a) for a in self.approvals]),
            "rework_count": self.rework_count,
            "rework_limit": self.rework_limit,
            "deliveries": [d.to_record() for d in self.deliveries],
            "settlement": self.settlement.to_record() if self.settlement else None,
            "captured_cards": {k: v.to_record() for k, v in sorted(self.captured_cards.items())},
            "snapshots": [s.to_record() for s in self.snapshots],
            "dispute_resolved": self.dispute_resolved,
            "explicit_rating": self.explicit_rating,
            "escrow_hold": self.escrow_hold,
        }

    @classmethod
    def from_record(cls, r: dict[str, Any]) -> "Contract":
        return cls(
            contract_id=bytes.fromhex(r["contract_id"]),
            buyer=EntityAddress.parse(r["buyer"]),
            seller=EntityAddress.parse(r["seller"]),
            arbiter=EntityAddress.parse(r["arbiter"]),
            terms=r["terms"],
            price=int(r["price"]),
            funding_mode=r["funding_mode"],
            state=r["state"],
            draft_version=int(r["draft_version"]),
            approvals={(p, int(v)) for p, v in r["approvals"]},
            rework_count=int(r["rework_count"]),
            rework_limit=int(r["rework_limit"]),
            deliveries=[Delivery.from_record(d) for d in r["deliveries"]],
            settlement=SettlementRef.from_record(r["settlement"]) if r.get("settlement") else None,
            captured_cards={k: EntityCard.from_record(v) for k, v in r["captured_cards"].items()},
            snapshots=[Snapshot.from_record(s) for s in r["snapshots"]],
            dispute_resolved=bool(r.get("dispute_resolved", False)),
            explicit_rating=r.get("explicit_rating"),
            escrow_hold=int(r.get("escrow_hold", 0)),
        )


@dataclass(frozen=True)
class ChainCheck:
    ok: bool
    first_invalid: Optional[int] = None
    reason: Optional[str] = None

    def __bool__(self) -> bool:
        return self.ok


def verify_chain(snapshots: list[Snapshot], arbiter_card: Optional[EntityCard] = None) -> ChainCheck:
    """Check hash recomputation and chain links, then signatures if a card is given.

    Hash checks run for the whole chain before any signature verification so
    byte-level tamper detection stays cheap.
    """
    if not snapshots:
        return ChainCheck(False, None, "empty chain")
    prev_hash = bytes(32)
    for i, snap in enumerate(snapshots):
        if snap.sequence != i:
            return ChainCheck(False, i, "sequence out of order")
        if snap.prev_hash != prev_hash:
            return ChainCheck(False, i, "prev_hash does not match prior snapshot")
        body = Snapshot.body_record(
            snap.sequence, snap.contract_id, snap.state, snap.intent,
            snap.draft_version, snap.prev_hash,
        )
        if Snapshot.compute_hash(body) != snap.hash:
            return ChainCheck(False, i, "hash does not recompute")
        prev_hash = snap.hash
    if arbiter_card is not None:
        public = ed25519.Ed25519PublicKey.from_public_bytes(arbiter_card.signing_public)
        for i, snap in enumerate(snapshots):
            try:
                public.verify(snap.arbiter_signature, snap.hash)
            except InvalidSignature:
                return ChainCheck(False, i, "arbiter signature invalid")
    return ChainCheck(True)


def verify_receipt(
    receipt: Receipt,
    arbiter_card: EntityCard,
    cost_records: Optional[list[CostRecord]] = None,
) -> bool:
    """Signature check from the arbiter's key alone; cost digest recomputed
    when the cost records are provided."""
    public = ed25519.Ed25519PublicKey.from_public_bytes(arbiter_card.signing_public)
    try:
        public.verify(receipt.arbiter_signature, receipt.signing_bytes())
    except InvalidSignature:
        return False
    if cost_records is not None and cost_digest(cost_records) != receipt.cost_digest:
        return False
    return True


class TradeEngine:
    """Arbiter-side contract machinery: single-writer per contract.

    The arbiter validates every transition; each success appends a signed
    snapshot and emits an event. Ledger mutations happen before the snapshot
    append, so a refused transition leaves the ledger untouched.
    """

    def __init__(
        self,
        ledger: EscrowLedger,
        clock: Clock,
        ids: IdStream,
        arbiter_keys: Callable[[EntityAddress], Optional[KeyMaterial]],
        events: Optional[list] = None,
    ):
        self.ledger = ledger
        self.clock = clock
        self.ids = ids
        self.arbiter_keys = arbiter_keys
        self.events = events if events is not None else []
        self.contracts: dict[bytes, Contract] = {}
        self.receipts: dict[bytes, Receipt] = {}
        self._locks: dict[bytes, threading.RLock] = {}

    # -- helpers ----------------------------------------------------------

    def get(self, contract_id: bytes) -> Contract:
        contract = self.contracts.get(contract_id)
        if contract is None:
            raise ContractError(f"unknown contract {contract_id.hex()}")
        return contract

    def _lock(self, contract_id: bytes) -> threading.RLock:
        return self._locks.setdefault(contract_id, threading.RLock())

    def _require(self, contract: Contract, op: str) -> str:
        key = (contract.state, op)
        if key not in TRANSITION_TABLE:
            raise WrongStateError(f"{op} is not defined in state {contract.state}")
        return TRANSITION_TABLE[key]

    def _require_party(self, contract: Contract, addr: EntityAddress, *roles: str) -> str:
        role = contract.party_role(addr)
        if role not in roles:
            raise ContractError(
                f"{addr} acts as {role or 'stranger'}, expected {' or '.join(roles)}",
                code="WRONG_PARTY",
            )
        return role

    def _append_snapshot(self, contract: Contract, intent: str) -> Snapshot:
        sequence = len(contract.snapshots)
        prev_hash = contract.snapshots[-1].hash if contract.snapshots else bytes(32)
        body = Snapshot.body_record(
            sequence, contract.contract_id, contract.state, intent,
            contract.draft_version, prev_hash,
        )
        digest = Snapshot.compute_hash(body)
        keys = self.arbiter_keys(contract.arbiter)
        if keys is None:
            raise ContractError(f"no signing keys for arbiter {contract.arbiter}")
        snapshot = Snapshot(
            sequence=sequence,
            contract_id=contract.contract_id,
            state=contract.state,
            intent=intent,
            draft_version=contract.draft_version,
            prev_hash=prev_hash,
            hash=digest,
            arbiter_signature=keys.signing_key().sign(digest),
        )
        contract.snapshots.append(snapshot)
        self.events.append(
            {
                "kind": "contract_transition",
                "contract_id": contract.contract_id.hex(),
                "state": contract.state,
                "intent": intent,
                "sequence": sequence,
                "at": self.clock.now(),
            }
        )
        return snapshot

    # -- lifecycle operations ---------------------------------------------

    def propose(
        self,
        buyer_card: EntityCard,
        seller_card: EntityCard,
        arbiter_card: EntityCard,
        terms: str,
        price: int,
        funding_mode: str,
        rework_limit: int = DEFAULT_REWORK_LIMIT,
    ) -> Contract:
        addresses = {str(buyer_card.address), str(seller_card.address), str(arbiter_card.address)}
        if len(addresses) != 3:
            raise ContractError("buyer, seller, and arbiter must be three distinct entities",
                                code="DUPLICATE_ROLE")
        if price <= 0:
            raise ContractError("price must be positive", code="BAD_PRICE")
        if funding_mode not in (ESCROW, DIRECT):
            raise ContractError(f"unknown funding mode {funding_mode!r}")
        contract = Contract(
            contract_id=self.ids.id16(),
            buyer=buyer_card.address,
            seller=seller_card.address,
            arbiter=arbiter_card.address,
            terms=terms,
            price=price,
            funding_mode=funding_mode,
            rework_limit=rework_limit,
            captured_cards={
                "buyer": buyer_card,
                "seller": seller_card,
                "arbiter": arbiter_card,
            },
        )
        self.contracts[contract.contract_id] = contract
        self._append_snapshot(contract, "CONTRACT_PROPOSE")
        return contract

    def amend(self, contract_id: bytes, party: EntityAddress, new_terms: str) -> Contract:
        with self._lock(contract_id):
            contract = self.get(contract_id)
            self._require(contract, "amend")
            self._require_party(contract, party, "buyer", "seller")
            contract.terms = new_terms
            contract.draft_version += 1
            contract.approvals.clear()
            self._append_snapshot(contract, "CONTRACT_AMEND")
            return contract

    def approve(self, contract_id: bytes, party: EntityAddress) -> Contract:
        with self._lock(contract_id):
            contract = self.get(contract_id)
            self._require(contract, "approve")
            role = self._require_party(contract, party, "buyer", "seller")
            key = (role, contract.draft_version)
            if key in contract.approvals:
                return contract  # idempotent; no snapshot
            contract.approvals.add(key)
            both = {("buyer", contract.draft_version), ("seller", contract.draft_version)}
            if both <= contract.approvals:
                contract.state = PENDING
            self._append_snapshot(contract, "CONTRACT_APPROVE")
            return contract

    def activate(self, contract_id: bytes) -> Contract:
        with self._lock(contract_id):
            contract = self.get(contract_id)
            self._require(contract, "activate")
            if contract.funding_mode == ESCROW:
                # Raises without mutating when the buyer cannot cover the price.
                self.ledger.freeze(contract.buyer, contract.price)
                contract.escrow_hold = contract.price
            contract.state = ACTIVE
            self._append_snapshot(contract, "CONTRACT_ACTIVATE")
            return contract

    def complete(
        self,
        contract_id: bytes,
        seller: EntityAddress,
        artifacts: list[bytes] | None = None,
        cost_records: list[CostRecord] | None = None,
    ) -> Contract:
        with self._lock(contract_id):
            contract = self.get(contract_id)
            self._require(contract, "complete")
            self._require_party(contract, seller, "seller")
            if contract.pending_delivery() is not None:
                raise ContractError("a delivery is already pending", code="DELIVERY_PENDING")
            contract.deliveries.append(
                Delivery(
                    delivery_id=self.ids.id16(),
                    artifacts=list(artifacts or []),
                    cost_records=list(cost_records or []),
                    submitted_at=self.clock.now(),
                )
            )
            contract.state = COMPLETING
            self._append_snapshot(contract, "CONTRACT_COMPLETE")
            return contract

    def request_rework(self, contract_id: bytes, buyer: EntityAddress) -> Contract:
        with self._lock(contract_id):
            contract = self.get(contract_id)
            self._require(contract, "request_rework")
            self._require_party(contract, buyer, "buyer")
            delivery = contract.pending_delivery()
            if delivery is not None:
                delivery.verdict = "rework_requested"
            contract.rework_count += 1
            over_limit = contract.rework_count > contract.rework_limit
            contract.state = DISPUTED if over_limit else ACTIVE
            self._append_snapshot(contract, "CONTRACT_REWORK")
            return contract

    def accept(
        self, contract_id: bytes, buyer: EntityAddress, rating: Optional[int] = None
    ) -> Contract:
        with self._lock(contract_id):
            contract = self.get(contract_id)
            self._require(contract, "accept")
            self._require_party(contract, buyer, "buyer")
            delivery = contract.pending_delivery()
            if delivery is not None:
                delivery.verdict = "accepted"
            if rating is not None:
                if not 1 <= rating <= 5:
                    raise ContractError("rating must be 1..5")
                contract.explicit_rating = rating
            contract.state = SETTLING
            self._append_snapshot(contract, "CONTRACT_ACCEPT")
            return contract

    def settle(self, contract_id: bytes, direct_reference: Optional[str] = None) -> Receipt:
        with self._lock(contract_id):
            contract = self.get(contract_id)
            self._require(contract, "settle")
            if contract.funding_mode == ESCROW:
                self.ledger.release_frozen(contract.buyer, contract.escrow_hold, contract.seller)
                reference = f"escrow:{contract.contract_id.hex()}"
                contract.escrow_hold = 0
            else:
                if not direct_reference:
                    raise ContractError("direct settlement requires an external reference",
                                        code="MISSING_REFERENCE")
                reference = direct_reference
            contract.settlement = SettlementRef(mode=contract.funding_mode, reference=reference)
            contract.state = SETTLED
            final = self._append_snapshot(contract, "CONTRACT_SETTLE")
            receipt = self._issue_receipt(contract, final)
            return receipt

    def cancel(self, contract_id: bytes, party: EntityAddress) -> Contract:
        with self._lock(contract_id):
            contract = self.get(contract_id)
            self._require(contract, "cancel")
            self._require_party(contract, party, "buyer", "seller")
            contract.state = CANCELLED
            self._append_snapshot(contract, "CONTRACT_CANCEL")
            return contract

    def dispute(self, contract_id: bytes, party: EntityAddress) -> Contract:
        with self._lock(contract_id):
            contract = self.get(contract_id)
            self._require(contract, "dispute")
            self._require_party(contract, party, "buyer", "seller")
            contract.state = DISPUTED
            self._append_snapshot(contract, "CONTRACT_DISPUTE")
            return contract

    def resolve_dispute(
        self, contract_id: bytes, arbiter: EntityAddress, buyer_fraction: Fraction
    ) -> Contract:
        with self._lock(contract_id):
            contract = self.get(contract_id)
            self._require(contract, "resolve")
            self._require_party(contract, arbiter, "arbiter")
            if contract.dispute_resolved:
                raise WrongStateError("dispute already resolved")
            if not 0 <= buyer_fraction <= 1:
                raise ContractError("buyer fraction must lie in [0, 1]", code="BAD_FRACTION")
            if contract.escrow_hold > 0:
                # Odd splits round the buyer's share down, deterministically.
                buyer_amount = int(contract.escrow_hold * buyer_fraction)
                self.ledger.split_frozen(
                    contract.buyer, contract.escrow_hold,
                    contract.buyer, buyer_amount, contract.seller,
                )
                contract.escrow_hold = 0
            contract.dispute_resolved = True
            self._append_snapshot(contract, "CONTRACT_RESOLVE")
            return contract

    # -- verification surfaces --------------------------------------------

    def _issue_receipt(self, contract: Contract, final_snapshot: Snapshot) -> Receipt:
        records = contract.all_cost_records()
        totals = {dim: 0 for dim in COST_DIMENSIONS}
        for record in records:
            totals[record.dimension] += record.quantity
        body = Receipt(
            contract_id=contract.contract_id,
            final_snapshot_hash=final_snapshot.hash,
            cost_digest=cost_digest(records),
            totals=totals,
            settlement=contract.settlement,
            issued_at=self.clock.now(),
            arbiter_signature=b"",
        )
        keys = self.arbiter_keys(contract.arbiter)
        receipt = dataclasses.replace(
            body, arbiter_signature=keys.signing_key().sign(body.signing_bytes())
        )
        self.receipts[contract.contract_id] = receipt
        self.events.append(
            {
                "kind": "receipt_issued",
                "contract_id": contract.contract_id.hex(),
                "at": self.clock.now(),
            }
        )
        return receipt

    def has_active_escrow(self, contract_id: bytes) -> bool:
        contract = self.contracts.get(contract_id)
        return (
            contract is not None
            and contract.funding_mode == ESCROW
            and contract.escrow_hold > 0
            and contract.state in (ACTIVE, COMPLETING, SETTLING)
        )

    def receipt_is_valid(self, record: dict[str, Any]) -> bool:
        try:
            receipt = Receipt.from_record(record)
        except Exception:
            return False
        contract = self.contracts.get(receipt.contract_id)
        if contract is None:
            return False
        return verify_receipt(
            receipt, contract.captured_cards["arbiter"], contract.all_cost_records()
        )
