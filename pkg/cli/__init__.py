"""
qnet 命令行：simulate / fit-regimes / derive-control / train / estimate / evaluate / realtime / experiment
"""

from .main import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, build_parser, configure_logging, main
from .realtime import iter_afcd, iter_counts, run_realtime

__all__ = [
    "main",
    "build_parser",
    "configure_logging",
    "EXIT_OK",
    "EXIT_USAGE",
    "EXIT_DATA",
    "EXIT_NUMERIC",
    "iter_counts",
    "iter_afcd",
    "run_realtime",
]
