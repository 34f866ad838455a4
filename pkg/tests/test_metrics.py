import threading

from action_core.metrics import TrainingMetrics


def test_snapshot_before_any_batch():
    snapshot = TrainingMetrics().snapshot()
    assert snapshot["batches"] == 0 and snapshot["clips"] == 0
    assert snapshot["avg_batch_ms"] == 0.0


def test_rolling_window_average():
    metrics = TrainingMetrics(window=2)
    for duration in (100.0, 10.0, 30.0):
        metrics.record_batch(duration, 4)
    snapshot = metrics.snapshot()
    assert snapshot["avg_batch_ms"] == 20.0
    assert snapshot["batches"] == 3 and snapshot["clips"] == 12


def test_concurrent_recording():
    metrics = TrainingMetrics()
    workers = [threading.Thread(target=lambda: [metrics.record_batch(1.0, 2) for _ in range(100)]) for _ in range(4)]
    for worker in workers:
        worker.start()
    for worker in workers:
        worker.join()
    assert metrics.snapshot()["clips"] == 800


def test_p95_tracks_slow_batches():
    metrics = TrainingMetrics()
    assert metrics.snapshot()["p95_batch_ms"] == 0
    for duration in [1.0] * 19 + [100.0]:
        metrics.record_batch(duration, 1)
    assert metrics.snapshot()["p95_batch_ms"] > 1.0
