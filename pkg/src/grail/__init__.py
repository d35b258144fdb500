"""Agentic translation of geospatial scripts and task descriptions into
contract-guarded programs for a target raster library."""

__version__ = "0.1.0"
