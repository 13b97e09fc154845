"""
Wall-clock helpers for command summaries.
"""

import time


def format_duration(seconds: float) -> str:
    """
    Format duration for human-readable display.

    Examples:
        0.25 -> "0.25s"
        90 -> "1m 30s"
        3661 -> "1h 1m 1s"
    """
    if seconds < 1:
        return f"{seconds:.2f}s"
    hours = int(seconds // 3600)
    minutes = int((seconds % 3600) // 60)
    secs = int(seconds % 60)

    parts = []
    if hours > 0:
        parts.append(f"{hours}h")
    if minutes > 0:
        parts.append(f"{minutes}m")
    if secs > 0 or not parts:
        parts.append(f"{secs}s")

    return " ".join(parts)


class Stopwatch:
    """Context manager measuring elapsed wall time."""

    def __init__(self):
        self.start = 0.0
        self.elapsed = 0.0

    def __enter__(self) -> "Stopwatch":
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.elapsed = time.perf_counter() - self.start
        return False

    def __str__(self) -> str:
        return format_duration(self.elapsed)
