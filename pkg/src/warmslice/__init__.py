"""Cold, warm and in-place scaling policy lab for serverless functions."""

from warmslice.engine import run_scenario, simulate, summarize

__all__ = ["run_scenario", "simulate", "summarize"]
