import statistics
import threading
import time
from collections import deque
from typing import Dict


class TrainingMetrics:
    """Collects rolling batch timings and clip throughput for a training run."""

    def __init__(self, window: int = 200):
        self._lock = threading.Lock()
        self._durations = deque(maxlen=window)
        self._batches = 0
        self._clips = 0
        self._start = time.time()

    def record_batch(self, duration_ms: float, clips: int) -> None:
        with self._lock:
            self._batches += 1
            self._clips += clips
            self._durations.append(duration_ms)

    def snapshot(self) -> Dict[str, float]:
        with self._lock:
            durations = list(self._durations)
            elapsed = time.time() - self._start
            return {
                "avg_batch_ms": statistics.fmean(durations) if durations else 0.0,
                "p95_batch_ms": statistics.quantiles(durations, n=20)[-1] if len(durations) > 1 else sum(durations),
                "batches": self._batches,
                "clips": self._clips,
                "elapsed_s": elapsed,
                "clips_per_s": (self._clips / elapsed) if elapsed else 0.0,
            }
