"""Python interface to the sensorless PMSM controller-observer simulation lab."""

from ._core import (
    ConfigError,
    analyze_file,
    benchmark_gains,
    gains_from_poles,
    nominal_gramian,
    parse_poles,
    simulate_file,
    simulate_json,
    trace_columns,
    w_star,
)

__all__ = [
    "ConfigError",
    "analyze_file",
    "benchmark_gains",
    "gains_from_poles",
    "nominal_gramian",
    "parse_poles",
    "simulate_file",
    "simulate_json",
    "trace_columns",
    "w_star",
]
