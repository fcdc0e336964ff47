"""Wire documents exchanged on the message-pool topics.

All payloads travelling between agents are plain JSON documents (dicts).
The dataclasses here are the typed views used inside agents; ``to_doc`` /
``from_doc`` convert to and from the wire shape.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

INCOMING_TOPIC = "incoming-sms"
AGENTS_TOPIC = "agents"
OUTBOUND_TOPIC = "outbound-sms"

STEP_INGESTED = "S000"
STEP_PARSED = "S001"
STEP_LLM_REQUESTED = "S002"
STEP_LLM_EXTRACTED = "S003"
STEP_VALIDATED = "S004"


def step_id(n: int) -> str:
    """Numeric step n as its wire form, e.g. 1 -> "S001"."""
    return f"S{n:03d}"


def get_path(doc: Any, path: str) -> Any:
    """Dotted-path lookup into nested dicts; None when any hop is missing."""
    node = doc
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            return None
        node = node[part]
    return node


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def payload_digest(doc: Any) -> str:
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()[:12]


@dataclass
class Metadata:
    type: str
    event_id: str
    customer_id: str
    step_id: str
    customer_event_time: str
    last_update_time: str

    def to_doc(self) -> dict:
        return {
            "type": self.type,
            "eventId": self.event_id,
            "customerId": self.customer_id,
            "stepId": self.step_id,
            "customerEventTime": self.customer_event_time,
            "lastUpdateTime": self.last_update_time,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Metadata":
        return cls(
            type=doc["type"],
            event_id=doc["eventId"],
            customer_id=doc["customerId"],
            step_id=doc["stepId"],
            customer_event_time=doc["customerEventTime"],
            last_update_time=doc["lastUpdateTime"],
        )

    def at_step(self, step: str, last_update: str | None = None) -> "Metadata":
        return Metadata(
            type=self.type,
            event_id=self.event_id,
            customer_id=self.customer_id,
            step_id=step,
            customer_event_time=self.customer_event_time,
            last_update_time=last_update or self.last_update_time,
        )


@dataclass
class SmsEvent:
    metadata: Metadata
    body: str

    def to_doc(self) -> dict:
        return {"metadata": self.metadata.to_doc(), "body": self.body}

    @classmethod
    def from_doc(cls, doc: dict) -> "SmsEvent":
        return cls(metadata=Metadata.from_doc(doc["metadata"]), body=doc["body"])


@dataclass
class DegreeOfConfidence:
    """Three-label confidence vector; the middle label is serialized as
    "intermediate" on the wire while the engine calls it "medium"."""

    high: float
    medium: float
    low: float

    def to_doc(self) -> dict:
        return {"high": self.high, "intermediate": self.medium, "low": self.low}

    @classmethod
    def from_doc(cls, doc: dict) -> "DegreeOfConfidence":
        medium = doc["intermediate"] if "intermediate" in doc else doc["medium"]
        return cls(high=doc["high"], medium=medium, low=doc["low"])

    def as_degrees(self) -> dict[str, float]:
        return {"high": self.high, "medium": self.medium, "low": self.low}

    def is_full_match(self) -> bool:
        # Exact equality on purpose: the full-match branch of the parser agent
        # produces these literals, never a rounded float.
        return self.high == 1.0 and self.medium == 0.0 and self.low == 0.0


@dataclass
class RenewalProcessed:
    metadata: Metadata
    renew: list[str]
    stop: list[str]
    confidence: DegreeOfConfidence

    def to_doc(self) -> dict:
        return {
            "metadata": self.metadata.to_doc(),
            "renew": list(self.renew),
            "stop": list(self.stop),
            "degreeOfConfidence": self.confidence.to_doc(),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "RenewalProcessed":
        return cls(
            metadata=Metadata.from_doc(doc["metadata"]),
            renew=list(doc["renew"]),
            stop=list(doc["stop"]),
            confidence=DegreeOfConfidence.from_doc(doc["degreeOfConfidence"]),
        )


@dataclass
class LlmExtraction:
    renew: list[str] = field(default_factory=list)
    stop: list[str] = field(default_factory=list)
    complaint: list[str] = field(default_factory=list)
    request: list[str] = field(default_factory=list)
    mood: str = "neutral"
    model_id: str = ""

    def to_doc(self) -> dict:
        return {
            "renew": list(self.renew),
            "stop": list(self.stop),
            "complaint": list(self.complaint),
            "request": list(self.request),
            "mood": self.mood,
        }

    @classmethod
    def from_doc(cls, doc: dict, model_id: str = "") -> "LlmExtraction":
        return cls(
            renew=list(doc["renew"]),
            stop=list(doc["stop"]),
            complaint=list(doc["complaint"]),
            request=list(doc["request"]),
            mood=doc["mood"],
            model_id=model_id,
        )

    def keywords(self) -> list[str]:
        return list(self.renew) + list(self.stop)
