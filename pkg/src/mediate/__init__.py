"""Mediation engine for collaborative networks.

Deduces collaborative processes from a declarative partner-network model,
binds them to concrete services through hybrid semantic matchmaking, runs
them as orchestrated workflows over a service-bus abstraction, and keeps
them adapted through an event-driven twin-model divergence loop.
"""

__version__ = "0.1.0"
