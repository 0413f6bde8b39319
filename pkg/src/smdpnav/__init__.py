"""Variable-duration (SMDP) deep-RL navigation for differential-drive robots."""

__version__ = "0.1.0"
