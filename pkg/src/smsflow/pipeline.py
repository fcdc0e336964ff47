"""Wiring of the full pipeline: broker, stores, agents and dispatchers.

The default scheduler is a deterministic round-robin over the stage
subscriptions, which makes whole runs replayable; a free-threaded mode
exists for stress-testing the declared thread-safety of the modules.
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .arbitration import CustomerRelationshipAgent, EvaluatorAgent
from .config import PipelineConfig
from .dispatch import AgentRegistry, Dispatcher
from .experts import AvailabilityStore, RouterAgent
from .llm import FaultPlan, LlmAgent
from .messages import (
    AGENTS_TOPIC,
    INCOMING_TOPIC,
    OUTBOUND_TOPIC,
    STEP_PARSED,
    STEP_VALIDATED,
    get_path,
)
from .pool import MessagePool, MetadataFilter
from .renewal import RenewalAgent
from .store import (
    IncomingSmsGateway,
    LogicalClock,
    OutboundSmsGateway,
    PharmacyClient,
    RunStore,
)
from .validator import StopRiskAssessor, ValidatorAgent

log = logging.getLogger(__name__)


class MessageTrackingAgent:
    """Always-on recorder of every message the arbitration stage sees."""

    qualifier = "MessageTrackingAgent"

    def __init__(self, store: RunStore):
        self.store = store

    def handle(self, envelope) -> None:
        doc = envelope.payload
        event_id = get_path(doc, "metadata.eventId") or ""
        step = get_path(doc, "metadata.stepId") or ""
        self.store.record_step(event_id, step, self.qualifier, "observed", payload=doc)


class DeliverySink:
    """Stub carrier: drains the outbound topic and counts deliveries."""

    def __init__(self, pool: MessagePool):
        self.subscription = pool.subscribe(OUTBOUND_TOPIC)
        self.delivered = 0

    def drain_one(self) -> bool:
        batch = self.subscription.poll(1)
        if not batch:
            return False
        self.delivered += 1
        return True


class Scheduler:
    """Round-robin over message sources until nothing makes progress."""

    def __init__(self, sources: list):
        self.sources = sources

    def step(self) -> bool:
        progressed = False
        for source in self.sources:
            if source.drain_one():
                progressed = True
        return progressed

    def run(self, budget: int) -> bool:
        """True when quiescent within ``budget`` passes."""
        for _ in range(budget):
            if not self.step():
                return True
        return not self.step()

    def run_concurrent(self, threads: int, budget: int) -> bool:
        """Stress mode: several workers race over the sources."""
        idle = threading.Semaphore(0)
        stop = threading.Event()

        def worker():
            quiet_sweeps = 0
            for _ in range(budget):
                if stop.is_set():
                    break
                if self.step():
                    quiet_sweeps = 0
                else:
                    quiet_sweeps += 1
                    if quiet_sweeps >= 3:
                        break
            idle.release()

        pool = [threading.Thread(target=worker) for _ in range(threads)]
        for t in pool:
            t.start()
        for _ in pool:
            idle.acquire()
        stop.set()
        for t in pool:
            t.join()
        return not self.step()


@dataclass
class Pipeline:
    config: PipelineConfig
    pool: MessagePool
    store: RunStore
    gateway: IncomingSmsGateway
    outbound: OutboundSmsGateway
    pharmacy: PharmacyClient
    availability: AvailabilityStore
    scheduler: Scheduler
    delivery: DeliverySink
    parsed_sub: object
    verdict_sub: object
    ingested: list = field(default_factory=list)

    def ingest(self, phone: str, text: str):
        event = self.gateway.ingest_sms(phone, text)
        if event is not None:
            self.ingested.append(event)
        return event

    def default_budget(self) -> int:
        return 200 + 20 * max(1, len(self.ingested))

    def run_to_quiescence(self, budget: int | None = None) -> bool:
        return self.scheduler.run(budget or self.default_budget())

    def pending_events(self) -> list[str]:
        """Ingested events that never reached a terminal step."""
        return [
            e.metadata.event_id
            for e in self.ingested
            if self.store.terminal_of(e.metadata.event_id) is None
        ]


def build_pipeline(
    config: PipelineConfig,
    seed: int = 0,
    add_keyword_rate: float = 0.0,
    drop_keyword_rate: float = 0.0,
    run_dir: Path | str | None = None,
    sequential_ids: bool = True,
) -> Pipeline:
    clock = LogicalClock()
    store = RunStore(run_dir, clock=clock)
    pool = MessagePool(clock=clock)

    gateway = IncomingSmsGateway(config.auth, store, pool, sequential_ids=sequential_ids)
    outbound = OutboundSmsGateway(store, pool)
    pharmacy = PharmacyClient(store)
    availability = AvailabilityStore(config.availability)

    models = config.build_models()
    model_order = [spec.model_id for spec in config.model_specs]
    faults = FaultPlan(
        seed=seed, add_keyword_rate=add_keyword_rate, drop_keyword_rate=drop_keyword_rate
    )
    relationship = CustomerRelationshipAgent(config.profiles, config.default_profile, store)
    risk = StopRiskAssessor(
        system=config.risk_system,
        threshold=config.risk_threshold,
        by_keyword=config.medication_by_keyword,
        default=config.medication_default,
    )

    agents = {
        "RenewalAgent": RenewalAgent(config.lexicon, config.confidence_var, store, pool),
        "EvaluatorAgent": EvaluatorAgent(
            relationship, config.importance_system, config.action_system,
            store, pool, pharmacy, outbound,
        ),
        "LlmAgent": LlmAgent(models, config.lexicon, faults, store, pool),
        "ValidatorAgent": ValidatorAgent(
            models, model_order, config.lexicon, risk, store, pool, pharmacy, outbound
        ),
        "RouterAgent": RouterAgent(
            config.experts, config.documents, availability, store, outbound
        ),
        "MessageTrackingAgent": MessageTrackingAgent(store),
    }

    # Report-side subscriptions are created before any traffic exists so the
    # harness can read back every parsed document and final verdict.
    parsed_sub = pool.subscribe(
        AGENTS_TOPIC, MetadataFilter((("metadata.stepId", STEP_PARSED),))
    )
    verdict_sub = pool.subscribe(
        AGENTS_TOPIC, MetadataFilter((("metadata.stepId", STEP_VALIDATED),))
    )

    orchestration = Dispatcher(
        "OrchestrationDispatcher",
        config.orchestration_rules,
        AgentRegistry({q: agents[q] for q in agents}, always_on=()),
        pool.subscribe(INCOMING_TOPIC),
        store,
        invoke_always_on=False,
    )
    arbitration = Dispatcher(
        "ArbitrationDispatcher",
        config.arbitration_rules,
        AgentRegistry({q: agents[q] for q in agents}, always_on=config.always_on),
        pool.subscribe(AGENTS_TOPIC),
        store,
        invoke_always_on=True,
    )
    delivery = DeliverySink(pool)
    scheduler = Scheduler([orchestration, arbitration, delivery])

    return Pipeline(
        config=config,
        pool=pool,
        store=store,
        gateway=gateway,
        outbound=outbound,
        pharmacy=pharmacy,
        availability=availability,
        scheduler=scheduler,
        delivery=delivery,
        parsed_sub=parsed_sub,
        verdict_sub=verdict_sub,
    )
