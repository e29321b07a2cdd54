"""Query-augmented shared control: simulators, oracles, query heuristics and experiments."""

__version__ = "0.1.0"
