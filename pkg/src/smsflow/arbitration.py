"""Arbitration of parsed renewal messages.

A fully understood message goes straight to the pharmacy endpoint.  For
anything else, customer importance (from tenure and yearly purchases) and
the parser's degree of confidence feed a rule block that decides between
forwarding to the language-model stage and failing the message toward
customer support.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .fuzzy import FuzzySystem
from .messages import (
    AGENTS_TOPIC,
    STEP_LLM_REQUESTED,
    STEP_PARSED,
    RenewalProcessed,
)
from .pool import Envelope, MessagePool
from .store import (
    OutboundSmsGateway,
    PharmacyAction,
    PharmacyClient,
    RunStore,
    TERMINAL_DONE,
    TERMINAL_FAILED,
)

log = logging.getLogger(__name__)

ACTION_PROCESS_DIRECT = "processDirect"
ACTION_FORWARD = "forwardToLLM"
ACTION_FAIL = "fail"

CONTACT_SUPPORT_TEXT = (
    "We could not process your reply automatically. Please call customer support."
)


@dataclass(frozen=True)
class CustomerProfile:
    customer_id: str
    tenure_years: float
    purchases_12mo: float

    def __post_init__(self):
        if self.tenure_years < 0 or self.purchases_12mo < 0:
            raise ValueError("profile fields must be nonnegative")


@dataclass
class ArbitrationDecision:
    event_id: str
    action: str
    activations: dict[str, float] = field(default_factory=dict)
    importance: dict[str, float] = field(default_factory=dict)


def compute_importance(profile: CustomerProfile, system: FuzzySystem) -> dict[str, float]:
    """Per-label customer-importance activations from the profile numbers."""
    output = system.run(
        {"tenureYears": profile.tenure_years, "purchases12mo": profile.purchases_12mo}
    )
    return output.activations


def decide(
    msg: RenewalProcessed,
    profile: CustomerProfile,
    importance_system: FuzzySystem,
    action_system: FuzzySystem,
) -> ArbitrationDecision:
    """Pure decision: processDirect on full confidence, else run the rules.

    The action is the label with the highest aggregated activation; a tie or
    an all-zero outcome falls back to the conservative fail branch.
    """
    event_id = msg.metadata.event_id
    if msg.confidence.is_full_match():
        return ArbitrationDecision(event_id=event_id, action=ACTION_PROCESS_DIRECT)

    importance = compute_importance(profile, importance_system)
    output = action_system.infer(
        {
            "customerImportance": importance,
            "degreeOfConfidence": msg.confidence.as_degrees(),
        }
    )
    activations = output.activations
    forward = activations.get(ACTION_FORWARD, 0.0)
    fail = activations.get(ACTION_FAIL, 0.0)
    if forward > fail:
        action = ACTION_FORWARD
    else:
        action = ACTION_FAIL
    return ArbitrationDecision(
        event_id=event_id, action=action, activations=activations, importance=importance
    )


class CustomerRelationshipAgent:
    """Serves customer profiles; unknown customers get the lowest-importance
    default and a recorded data-quality warning."""

    def __init__(self, profiles: dict[str, CustomerProfile], default: CustomerProfile, store: RunStore):
        self.profiles = profiles
        self.default = default
        self.store = store

    def profile_for(self, customer_id: str, event_id: str = "") -> CustomerProfile:
        profile = self.profiles.get(customer_id)
        if profile is not None:
            return profile
        log.warning("no profile for customer %s; using lowest-importance default", customer_id)
        if event_id:
            self.store.record_step(
                event_id, STEP_PARSED, "CustomerRelationshipAgent",
                f"data-quality: missing profile for {customer_id}",
            )
        return CustomerProfile(
            customer_id=customer_id,
            tenure_years=self.default.tenure_years,
            purchases_12mo=self.default.purchases_12mo,
        )


def evaluate(
    msg: RenewalProcessed,
    profile: CustomerProfile,
    importance_system: FuzzySystem,
    action_system: FuzzySystem,
    store: RunStore,
    pool: MessagePool,
    pharmacy: PharmacyClient,
    outbound: OutboundSmsGateway,
) -> ArbitrationDecision:
    """Decide and carry out the side effects for one parsed message."""
    if msg.metadata.step_id != STEP_PARSED:
        raise ValueError(f"evaluator expects {STEP_PARSED} messages, got {msg.metadata.step_id}")
    decision = decide(msg, profile, importance_system, action_system)
    event_id = msg.metadata.event_id
    customer_id = msg.metadata.customer_id

    with store.event_lock(event_id):
        store.record_step(
            event_id, STEP_PARSED, "EvaluatorAgent", f"decision:{decision.action}",
            payload={"activations": decision.activations, "importance": decision.importance},
        )
        if decision.action == ACTION_PROCESS_DIRECT:
            applied = []
            for keyword in msg.renew:
                pharmacy.apply(PharmacyAction(event_id, customer_id, keyword, "renew"))
                applied.append(keyword)
            for keyword in msg.stop:
                pharmacy.apply(PharmacyAction(event_id, customer_id, keyword, "stop"))
                applied.append(keyword)
            store.record_step(event_id, STEP_PARSED, "EvaluatorAgent", f"pharmacy-applied:{applied}")
            store.record_step(event_id, STEP_PARSED, "EvaluatorAgent", TERMINAL_DONE, terminal=True)
        elif decision.action == ACTION_FORWARD:
            forwarded = RenewalProcessed(
                metadata=msg.metadata.at_step(STEP_LLM_REQUESTED, last_update=store.clock.now_iso()),
                renew=msg.renew,
                stop=msg.stop,
                confidence=msg.confidence,
            )
            pool.publish(AGENTS_TOPIC, forwarded.to_doc())
        else:
            outbound.send_sms(customer_id, CONTACT_SUPPORT_TEXT, "contact-support", event_id)
            store.record_step(
                event_id, STEP_PARSED, "EvaluatorAgent", TERMINAL_FAILED, terminal=True
            )
    return decision


class EvaluatorAgent:
    qualifier = "EvaluatorAgent"

    def __init__(
        self,
        relationship: CustomerRelationshipAgent,
        importance_system: FuzzySystem,
        action_system: FuzzySystem,
        store: RunStore,
        pool: MessagePool,
        pharmacy: PharmacyClient,
        outbound: OutboundSmsGateway,
    ):
        self.relationship = relationship
        self.importance_system = importance_system
        self.action_system = action_system
        self.store = store
        self.pool = pool
        self.pharmacy = pharmacy
        self.outbound = outbound

    def handle(self, envelope: Envelope) -> None:
        msg = RenewalProcessed.from_doc(envelope.payload)
        profile = self.relationship.profile_for(
            msg.metadata.customer_id, msg.metadata.event_id
        )
        evaluate(
            msg,
            profile,
            self.importance_system,
            self.action_system,
            self.store,
            self.pool,
            self.pharmacy,
            self.outbound,
        )
