"""Routing of validated complaints and requests to expert agents.

The router picks the registered expert with the best cue-term overlap and
rephrases the item; forwarding experts append to human queues, the store
expert answers from a small question/answer document set, and the
scheduling expert turns date constraints into candidate slots that only the
appointment tool may confirm (the reply can never reference a slot the tool
did not select).
"""
from __future__ import annotations

import calendar
import logging
import re
import threading
from dataclasses import dataclass, field
from datetime import date, timedelta

from .messages import STEP_VALIDATED
from .pool import Envelope
from .store import (
    OutboundSmsGateway,
    RunStore,
    TERMINAL_AWAITING,
    TERMINAL_DONE,
    TERMINAL_FAILED,
    TERMINAL_ROUTED,
)

log = logging.getLogger(__name__)

CATCH_ALL = "ComplaintDepartment"
REFERRAL_ANSWER = "We could not find that information; please contact customer support."
CALL_US_REPLY = "We could not find a matching appointment slot. Please call us to book."

_SLOT_LINE_RE = re.compile(
    r"^year:\s*(?P<year>\d{4}),\s*month:\s*(?P<month>\d{1,2}),\s*"
    r"day:\s*(?P<day>\d{1,2}),\s*hours:\s*(?P<hours>\d{1,2})$"
)
_DATE_RE = re.compile(r"\b(\d{1,2})/(\d{1,2})/(\d{4})\b")

_WEEKDAYS = {name.lower(): i for i, name in enumerate(calendar.day_name)}
_DAYPARTS = {"morning": range(9, 13), "afternoon": range(13, 18)}
_DETERMINERS = {"the", "a", "an", "my", "your", "our", "this", "that", "these", "those",
                "i", "we", "you", "it", "he", "she", "they", "do", "can", "could"}
_REQUEST_PREFIXES = (
    "i would like to ", "i want to ", "i need to ", "i just want to ",
    "can you ", "could you ", "do i need to ", "please ",
)
_SYNONYMS = {"medicine": "a medication"}


@dataclass(frozen=True)
class ExpertRegistration:
    qualifier: str
    expertise: str
    cues: tuple[str, ...]
    queue: str = ""


@dataclass(frozen=True)
class RoutingDecision:
    destination: str
    next_inputs: str

    def to_doc(self) -> dict:
        return {"destination": self.destination, "next_inputs": self.next_inputs}


def _item_tokens(text: str) -> list[str]:
    return [t for t in re.split(r"[^\w]+", text.lower()) if t]


def rephrase(item_text: str) -> str:
    """Normalize an item into a complaint or request template sentence."""
    text = re.sub(r"\s+", " ", item_text).strip(" \t.,!?;")
    tokens = set(_item_tokens(text))
    is_complaint = bool(tokens & {"bad", "complaint", "problem", "issue", "wrong", "terrible", "awful"})

    lowered = text[0].lower() + text[1:] if text else text
    for synonym, replacement in _SYNONYMS.items():
        lowered = re.sub(rf"\b{synonym}\b", replacement, lowered)

    if is_complaint:
        first = lowered.split(" ", 1)[0] if lowered else ""
        if first not in _DETERMINERS:
            lowered = "the " + lowered
        return f"I have a complaint about {lowered}."

    changed = True
    while changed:
        changed = False
        for prefix in _REQUEST_PREFIXES:
            if lowered.lower().startswith(prefix):
                lowered = lowered[len(prefix):]
                changed = True
    return f"I would like to {lowered}."


class ScriptedRouterModel:
    """Cue-overlap destination choice with template rephrasing."""

    def route(self, item_text: str, registrations: list[ExpertRegistration]) -> RoutingDecision:
        tokens = set(_item_tokens(item_text))
        scores = {reg.qualifier: len(tokens & set(c.lower() for c in reg.cues)) for reg in registrations}
        best = max(scores.values()) if scores else 0
        winners = [q for q, s in scores.items() if s == best]
        if best == 0 or len(winners) > 1:
            destination = CATCH_ALL if any(r.qualifier == CATCH_ALL for r in registrations) else winners[0]
        else:
            destination = winners[0]
        return RoutingDecision(destination=destination, next_inputs=rephrase(item_text))


def route(item_text: str, registrations: list[ExpertRegistration], model) -> RoutingDecision:
    """Pick the expert for one item; unmatched items go to the catch-all."""
    if not registrations:
        raise ValueError("at least one expert registration is required")
    decision = model.route(item_text, registrations)
    if decision.destination not in {r.qualifier for r in registrations}:
        log.warning("model chose unregistered expert %r; using catch-all", decision.destination)
        decision = RoutingDecision(destination=CATCH_ALL, next_inputs=decision.next_inputs)
    return decision


def forward_to_queue(store: RunStore, queue_name: str, event_id: str, decision: RoutingDecision) -> int:
    """Append the routed item to a human queue; returns the entry id."""
    entry_id = store.queue(queue_name).append(
        {
            "eventId": event_id,
            "destination": decision.destination,
            "next_inputs": decision.next_inputs,
            "enqueued_at": store.clock.now_iso(),
        }
    )
    store.record_step(event_id, STEP_VALIDATED, decision.destination, f"queued:{queue_name}:{entry_id}")
    return entry_id


@dataclass(frozen=True)
class StoreDocument:
    question: str
    answer: str


def answer_store_question(
    question: str, documents: list[StoreDocument], min_overlap: int = 1
) -> str:
    """Answer from the document with the best content-token overlap."""
    stop = {"what", "are", "your", "the", "of", "is", "a", "an", "do", "you", "have", "i", "my", "to"}
    q_tokens = set(_item_tokens(question)) - stop
    best_doc = None
    best_score = 0
    for doc in documents:
        score = len(q_tokens & (set(_item_tokens(doc.question)) - stop))
        if score > best_score:
            best_score = score
            best_doc = doc
    if best_doc is None or best_score < min_overlap:
        return REFERRAL_ANSWER
    return best_doc.answer


@dataclass(frozen=True)
class SlotCandidate:
    year: int
    month: int
    day: int
    hours: int

    def __post_init__(self):
        date(self.year, self.month, self.day)  # raises on an invalid calendar date
        if not 0 <= self.hours <= 23:
            raise ValueError(f"hours {self.hours} outside 0..23")

    def line(self) -> str:
        return f"year: {self.year}, month: {self.month}, day: {self.day}, hours: {self.hours}"


def parse_slot_line(line: str) -> SlotCandidate:
    m = _SLOT_LINE_RE.match(line.strip())
    if not m:
        raise ValueError(f"malformed slot line: {line!r}")
    return SlotCandidate(
        year=int(m.group("year")),
        month=int(m.group("month")),
        day=int(m.group("day")),
        hours=int(m.group("hours")),
    )


class AvailabilityStore:
    """Open appointment slots with capacities; booking decrements atomically."""

    def __init__(self, slots: dict[SlotCandidate, int] | None = None):
        self._slots: dict[SlotCandidate, int] = dict(slots or {})
        self._lock = threading.Lock()
        for slot, capacity in self._slots.items():
            if capacity < 0:
                raise ValueError(f"negative capacity for {slot}")

    def capacity(self, slot: SlotCandidate) -> int:
        with self._lock:
            return self._slots.get(slot, 0)

    def total_capacity(self) -> int:
        with self._lock:
            return sum(self._slots.values())

    def book(self, slot: SlotCandidate) -> bool:
        with self._lock:
            remaining = self._slots.get(slot, 0)
            if remaining <= 0:
                return False
            self._slots[slot] = remaining - 1
            return True


class ScriptedSchedulerModel:
    """Parses weekday/date/daypart constraints into candidate slot lines."""

    def propose(self, request_text: str, reference_date: date) -> list[str]:
        lines: list[str] = []
        for clause in re.split(r"\bor\b|;", request_text, flags=re.IGNORECASE):
            slot_date = self._clause_date(clause, reference_date)
            if slot_date is None:
                continue
            lowered = clause.lower()
            hour_ranges = [rng for part, rng in _DAYPARTS.items() if part in lowered]
            if not hour_ranges:
                hour_ranges = [range(9, 18)]
            for rng in hour_ranges:
                for hour in rng:
                    lines.append(
                        SlotCandidate(slot_date.year, slot_date.month, slot_date.day, hour).line()
                    )
        return lines

    @staticmethod
    def _clause_date(clause: str, reference_date: date) -> date | None:
        m = _DATE_RE.search(clause)
        if m:
            month, day, year = int(m.group(1)), int(m.group(2)), int(m.group(3))
            try:
                return date(year, month, day)
            except ValueError:
                return None
        for name, weekday in _WEEKDAYS.items():
            if re.search(rf"\b{name}\b", clause, re.IGNORECASE):
                ahead = (weekday - reference_date.weekday()) % 7
                return reference_date + timedelta(days=ahead or 7)
        return None


@dataclass
class ScheduleResult:
    reply: str
    booked: SlotCandidate | None
    candidates: list[SlotCandidate]
    warnings: list[str] = field(default_factory=list)


def schedule(
    request_text: str,
    availability: AvailabilityStore,
    model,
    reference_date: date,
) -> ScheduleResult:
    """Book the first proposed slot with capacity.

    The model only proposes; the appointment tool selects and books, and the
    reply is rendered from the tool's selection, never from the model text.
    """
    candidates: list[SlotCandidate] = []
    warnings: list[str] = []
    for line in model.propose(request_text, reference_date):
        try:
            candidates.append(parse_slot_line(line))
        except ValueError as exc:
            warnings.append(str(exc))
            log.warning("skipping slot candidate: %s", exc)

    for slot in candidates:
        if availability.book(slot):
            day_name = calendar.day_name[date(slot.year, slot.month, slot.day).weekday()]
            month_name = calendar.month_name[slot.month]
            ampm = "12 PM" if slot.hours == 12 else (
                f"{slot.hours} AM" if slot.hours < 12 else f"{slot.hours - 12} PM"
            )
            reply = (
                f"You can schedule your appointment for {day_name}, "
                f"{month_name} {slot.day}, {slot.year}, at {ampm}."
            )
            return ScheduleResult(reply=reply, booked=slot, candidates=candidates, warnings=warnings)
    return ScheduleResult(reply=CALL_US_REPLY, booked=None, candidates=candidates, warnings=warnings)


class RouterAgent:
    """Finalizer for validated messages: routes items and records terminals."""

    qualifier = "RouterAgent"

    def __init__(
        self,
        registrations: list[ExpertRegistration],
        documents: list[StoreDocument],
        availability: AvailabilityStore,
        store: RunStore,
        outbound: OutboundSmsGateway,
        router_model=None,
        scheduler_model=None,
    ):
        self.registrations = registrations
        self.documents = documents
        self.availability = availability
        self.store = store
        self.outbound = outbound
        self.router_model = router_model or ScriptedRouterModel()
        self.scheduler_model = scheduler_model or ScriptedSchedulerModel()
        self._by_qualifier = {r.qualifier: r for r in registrations}

    def handle(self, envelope: Envelope) -> None:
        doc = envelope.payload
        event_id = doc["metadata"]["eventId"]
        customer_id = doc["metadata"]["customerId"]
        keywords = doc["keywords"]
        extraction = doc.get("extraction")

        failed = keywords["outcome"] == "fail" or (
            extraction is not None and extraction["outcome"] == "fail"
        )
        routed = 0
        replies: dict[str, list[str]] = {}
        if not failed and extraction is not None and extraction["outcome"] == "route":
            chosen = extraction["chosen"] or {}
            for item in list(chosen.get("complaint", [])) + list(chosen.get("request", [])):
                for kind, text in self._route_item(event_id, item):
                    replies.setdefault(kind, []).append(text)
                routed += 1
        # One SMS per kind per event, whatever the item count.
        for kind, texts in replies.items():
            self.outbound.send_sms(customer_id, "\n".join(texts), kind, event_id)

        with self.store.event_lock(event_id):
            if failed:
                self.store.record_step(
                    event_id, STEP_VALIDATED, self.qualifier, TERMINAL_FAILED, terminal=True
                )
            elif keywords["outcome"] == "confirm-then-process":
                self.store.record_step(
                    event_id, STEP_VALIDATED, self.qualifier, TERMINAL_AWAITING, terminal=True
                )
            elif routed:
                self.store.record_step(
                    event_id, STEP_VALIDATED, self.qualifier, TERMINAL_ROUTED, terminal=True
                )
            else:
                self.store.record_step(
                    event_id, STEP_VALIDATED, self.qualifier, TERMINAL_DONE, terminal=True
                )

    def _route_item(self, event_id: str, item: str) -> list[tuple[str, str]]:
        """Hand one item to its expert; returns (kind, text) replies to send."""
        decision = route(item, self.registrations, self.router_model)
        self.store.record_step(
            event_id, STEP_VALIDATED, self.qualifier,
            f"routed-to:{decision.destination}", payload=decision.to_doc(),
        )
        registration = self._by_qualifier[decision.destination]
        if registration.queue:
            forward_to_queue(self.store, registration.queue, event_id, decision)
            return []
        if decision.destination == "StoreManagement":
            answer = answer_store_question(item, self.documents)
            self.store.answers.append(
                {"eventId": event_id, "question": item, "answer": answer,
                 "answered_at": self.store.clock.now_iso()}
            )
            return [("generic", answer)]
        if decision.destination == "Scheduling":
            result = schedule(
                item, self.availability, self.scheduler_model,
                reference_date=self.store.clock.now().date(),
            )
            # Every scheduling intake is logged, booked or not.
            self.store.bookings.append(
                {
                    "eventId": event_id,
                    "request": item,
                    "slot": result.booked.line() if result.booked else None,
                    "booked": result.booked is not None,
                    "booked_at": self.store.clock.now_iso(),
                }
            )
            if result.booked is not None:
                return [("booking-confirmation", result.reply)]
            return [("generic", result.reply)]
        # Unqueued expert without special handling: record as its intake.
        forward_to_queue(self.store, decision.destination.lower(), event_id, decision)
        return []
