"""
Call Performance Monitoring

Tracks model-call metrics for an extraction run:
- Call counts and latency per stage
- Cache-served calls
- Slow call detection

Usage:
    from src.docre.monitoring.performance_monitor import CallMonitor

    monitor = CallMonitor()
    monitor.track_call("head", duration_ms, cached=False)
    monitor.get_stage_stats()
"""
import logging
import statistics
import threading
from collections import defaultdict, deque
from typing import Any, Dict, List, Optional

from src.docre.constants import SLOW_CALL_THRESHOLD_MS, STAGES

logger = logging.getLogger(__name__)


class CallMonitor:
    """
    Per-stage model call monitoring

    Safe to share across document worker threads.
    """

    def __init__(self, slow_call_threshold_ms: float = SLOW_CALL_THRESHOLD_MS, history_size: int = 10000):
        self.slow_call_threshold = slow_call_threshold_ms
        self.history_size = history_size

        self.call_times: Dict[str, deque] = defaultdict(lambda: deque(maxlen=history_size))
        self.call_counts: Dict[str, int] = defaultdict(int)
        self.cached_calls: Dict[str, int] = defaultdict(int)
        self.slow_calls: deque = deque(maxlen=100)
        self._lock = threading.Lock()

    def track_call(self, stage: str, duration_ms: float, cached: bool = False, doc_id: Optional[str] = None):
        """
        Record one model call

        Args:
            stage: Stage value ("relation", "head", "fact")
            duration_ms: Wall-clock duration in milliseconds
            cached: Response was served from the response cache
            doc_id: Document the call belonged to
        """
        with self._lock:
            self.call_times[stage].append(duration_ms)
            self.call_counts[stage] += 1
            if cached:
                self.cached_calls[stage] += 1
            slow = duration_ms > self.slow_call_threshold
            if slow:
                self.slow_calls.append({"stage": stage, "doc_id": doc_id, "duration_ms": duration_ms})

        if slow:
            logger.warning(
                f"Slow model call: {stage}",
                extra={
                    "stage": stage,
                    "doc_id": doc_id,
                    "duration_ms": duration_ms,
                    "threshold_ms": self.slow_call_threshold,
                },
            )

    def get_stage_stats(self, stage: Optional[str] = None) -> Dict[str, Any]:
        """Latency statistics for one stage, or for every stage keyed by stage"""
        if stage is None:
            return {s: self.get_stage_stats(s) for s in STAGES}

        with self._lock:
            times = list(self.call_times[stage])
            count = self.call_counts[stage]
            cached = self.cached_calls[stage]

        if not times:
            return {"count": 0, "cached": 0, "mean_ms": 0.0, "median_ms": 0.0, "p95_ms": 0.0, "max_ms": 0.0}

        return {
            "count": count,
            "cached": cached,
            "mean_ms": round(statistics.mean(times), 2),
            "median_ms": round(statistics.median(times), 2),
            "p95_ms": round(statistics.quantiles(times, n=20)[18], 2) if len(times) > 1 else round(times[0], 2),
            "max_ms": round(max(times), 2),
        }

    def total_calls(self) -> int:
        with self._lock:
            return sum(self.call_counts.values())

    def get_slow_calls(self, limit: int = 10) -> List[Dict[str, Any]]:
        with self._lock:
            return list(self.slow_calls)[-limit:]
