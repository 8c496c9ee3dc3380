"""Frozen-encoder embedding exporter for the multi-hop QA pipeline."""

__version__ = "0.1.0"
