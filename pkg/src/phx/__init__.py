"""Resilience playbook platform: format, engine, risk triage, range, exchange."""

__version__ = "0.1.0"
