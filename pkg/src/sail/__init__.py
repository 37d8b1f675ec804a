"""Self-supervised adversarial imitation learning from state-only demonstrations."""

__version__ = "0.1.0"
