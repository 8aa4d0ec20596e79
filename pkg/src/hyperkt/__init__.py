"""Hyperbolic knowledge tracing: geometry, agents, graph encoder, tracker."""

__version__ = "0.1.0"
