"""Network fingerprints of device events from recurring TCP packet sequences."""

__version__ = "0.1.0"
