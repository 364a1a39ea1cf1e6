"""tinytc: hardware-aware evolutionary NAS for session-level traffic classification
on microcontroller-class budgets."""

__version__ = "0.1.0"
