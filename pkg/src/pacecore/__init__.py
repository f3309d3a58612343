"""Artificial-currency allocation of excludable public goods: mechanisms, pacing, core audits."""

__version__ = "0.1.0"
