"""phalanx: a deterministic many-unit strategy sandbox commanded through
behavior trees and an LLM-issued plan language, with a benchmark harness
and a session server for interactive play."""

__version__ = "0.1.0"
