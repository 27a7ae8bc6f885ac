"""
Performance monitoring utilities.

Records execution times of solver and experiment calls and takes process
memory snapshots, so long runs can be profiled from the logs alone.
"""

import logging
import threading
import time
from functools import wraps
from typing import Any, Dict, List

import psutil

logger = logging.getLogger(__name__)


class PerformanceMonitor:
    """
    Tracks execution times and memory usage.
    """

    def __init__(self, slow_threshold: float = 60.0, history: int = 100):
        self.execution_times: Dict[str, List[float]] = {}
        self.memory_snapshots: List[Dict] = []
        self.slow_threshold = slow_threshold
        self.history = history
        self._lock = threading.Lock()

    def measure_execution_time(self, operation_name: str):
        """Decorator to measure execution time of functions."""

        def decorator(func):
            @wraps(func)
            def wrapper(*args, **kwargs):
                start_time = time.perf_counter()
                try:
                    return func(*args, **kwargs)
                finally:
                    elapsed = time.perf_counter() - start_time
                    self._record_execution_time(operation_name, elapsed)

            return wrapper

        return decorator

    def _record_execution_time(self, operation_name: str, elapsed_time: float) -> None:
        """Record execution time for an operation."""
        with self._lock:
            times = self.execution_times.setdefault(operation_name, [])
            times.append(elapsed_time)
            if len(times) > self.history:
                del times[: len(times) - self.history]

        if elapsed_time > self.slow_threshold:
            logger.warning(
                f"Slow operation detected: {operation_name} took {elapsed_time:.2f}s"
            )

    def get_performance_stats(self) -> Dict[str, Dict[str, float]]:
        """Get performance statistics for all monitored operations."""
        stats = {}
        with self._lock:
            for operation, times in self.execution_times.items():
                if times:
                    stats[operation] = {
                        "count": len(times),
                        "avg_time": sum(times) / len(times),
                        "max_time": max(times),
                        "min_time": min(times),
                        "total_time": sum(times),
                    }
        return stats

    def reset(self) -> None:
        with self._lock:
            self.execution_times.clear()
            self.memory_snapshots.clear()

    def take_memory_snapshot(self, label: str = "") -> Dict[str, Any]:
        """
        Records the resident set size of this process under ``label``.

        Returns an empty dict when psutil cannot read the process.
        """
        try:
            rss_mb = psutil.Process().memory_info().rss / 1024 / 1024
        except psutil.Error as e:
            logger.warning(f"Memory snapshot '{label}' unavailable: {e}")
            return {}

        snapshot = {"label": label, "rss_mb": rss_mb, "peak_rss_mb": rss_mb}
        with self._lock:
            if self.memory_snapshots:
                snapshot["peak_rss_mb"] = max(rss_mb, self.memory_snapshots[-1]["peak_rss_mb"])
            self.memory_snapshots.append(snapshot)
            del self.memory_snapshots[: -self.history]
        logger.debug(f"Memory after {label or 'step'}: {rss_mb:.1f}MB RSS")
        return snapshot

    def log_summary(self) -> None:
        """Logs one INFO line per timed operation and the peak memory seen."""
        for operation, stats in sorted(self.get_performance_stats().items()):
            logger.info(
                f"{operation}: {stats['count']} calls, avg {stats['avg_time']:.3f}s, "
                f"total {stats['total_time']:.3f}s"
            )
        if self.memory_snapshots:
            logger.info(f"Peak memory: {self.memory_snapshots[-1]['peak_rss_mb']:.1f}MB RSS")


# Global instance
performance_monitor = PerformanceMonitor()
