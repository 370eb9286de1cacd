"""Normalized-difference statistics for repeated measurements."""

import json

from ._core import (
    ConfigError,
    Error,
    FitError,
    ParseError,
    ValidationError,
    inverse_survival,
    pair_z,
    pdf,
    run_cli,
    student_t_pdf,
    survival,
)

__all__ = [
    "ConfigError",
    "Error",
    "FitError",
    "ParseError",
    "ValidationError",
    "analyze",
    "genesis",
    "inverse_survival",
    "pair_z",
    "pdf",
    "run_cli",
    "simulate",
    "student_t_pdf",
    "survival",
]


def analyze(text, format="csv", config=None):
    """Full analysis of a dataset given as CSV or JSON text; returns the report dict."""
    from ._core import analyze_text

    return json.loads(analyze_text(text, format, json.dumps(config) if config else ""))


def genesis(n_m=3, alpha=1.0, chi2_max=None, sigma_floor=1.0):
    """Student-t fit to the unfound-error mixture."""
    from ._core import genesis_text

    return json.loads(genesis_text(n_m, alpha, chi2_max, sigma_floor))


def simulate(config, format="csv"):
    """Synthetic dataset text from a simulation config dict."""
    from ._core import simulate_text

    return simulate_text(json.dumps(config), format)
