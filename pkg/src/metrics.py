"""Prometheus metrics for PruferLab runs."""

import time
from contextlib import contextmanager
from pathlib import Path

from prometheus_client import CollectorRegistry, Counter, Histogram, write_to_textfile

REGISTRY = CollectorRegistry()

PAIRS_TOTAL = Counter(
    "pruferlab_pairs_total", "Mutation pairs decoded", ["source"], registry=REGISTRY
)
RUNS_TOTAL = Counter(
    "pruferlab_runs_total", "Completed CLI runs", ["command", "status"], registry=REGISTRY
)
RUN_SECONDS = Histogram(
    "pruferlab_run_seconds", "Wall time of a CLI run in seconds", ["command"], registry=REGISTRY
)


def record_pairs(source: str, count: int):
    """Add `count` decoded pairs for source enumerate, simulate or trace."""
    if count > 0:
        PAIRS_TOTAL.labels(source=source).inc(count)


@contextmanager
def track_run(command: str):
    """Time a run and count it as ok or error."""
    start = time.perf_counter()
    status = "ok"
    try:
        yield
    except BaseException:
        status = "error"
        raise
    finally:
        RUN_SECONDS.labels(command=command).observe(time.perf_counter() - start)
        RUNS_TOTAL.labels(command=command, status=status).inc()


def write_metrics(path: str | Path):
    """Write the registry in the Prometheus text format."""
    write_to_textfile(str(path), REGISTRY)
