"""Micro-randomized trial protocol engine, simulator, and dataset pipeline."""

try:
    # installed layout: the extension lives inside the package
    from ._mrtsim import (
        ConfigError,
        EstimationError,
        analyze,
        audit,
        count,
        default_scenario,
        export_rows,
        replay,
        simulate,
    )
except ImportError:
    # in-tree build layout: the extension sits on PYTHONPATH
    from _mrtsim import (
        ConfigError,
        EstimationError,
        analyze,
        audit,
        count,
        default_scenario,
        export_rows,
        replay,
        simulate,
    )

__all__ = [
    "ConfigError",
    "EstimationError",
    "analyze",
    "audit",
    "count",
    "default_scenario",
    "export_rows",
    "replay",
    "simulate",
]
