"""Header-only spam quarantine classifier and service."""
__version__ = "0.1.0"
