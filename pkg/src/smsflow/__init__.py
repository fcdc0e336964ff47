"""Event-driven multi-agent pipeline for pharmacy renewal SMS handling.

Customers answer renewal campaigns with short keyword codes plus free text.
A deterministic parser agent, two independent language-model extraction
agents, a fuzzy-logic arbiter, and a cross-checking validator cooperate over
a shared in-process message pool so that no fabricated keyword ever reaches
the pharmacy endpoint.
"""

__version__ = "0.1.0"
