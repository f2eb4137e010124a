"""c4gen: multi-agent C4 architecture model generation and hybrid evaluation.

A system brief goes in; Context, Container and Component views come out as
analysis reports, view documents and C4-PlantUML diagrams, produced by
simulated expert dialogue and scored by deterministic checks plus an
LLM-as-a-judge layer.
"""

__version__ = "0.1.0"
