# reluflow
# See LICENSE for details.

# ===================== core/batch_runner.py =====================
# Threaded batch execution of independent instances (seed sweeps, check suites)

from __future__ import annotations

import concurrent.futures
import logging
import os
import threading
from dataclasses import dataclass
from typing import Any, Callable, Iterable, List, Optional

from tqdm import tqdm

log = logging.getLogger(__name__)


def worker_count(override: Optional[int] = None) -> int:
    """--threads wins, then RELUFLOW_THREADS, then the CPU count."""
    if override:
        return max(1, int(override))
    env = os.environ.get("RELUFLOW_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring RELUFLOW_THREADS=%r (not an integer)", env)
    return os.cpu_count() or 1


@dataclass(frozen=True)
class JobOutcome:
    index: int
    value: Any = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


class BatchRunner:
    """
    Runs fn(index, item) over a batch with one worker per instance.

    Results come back in submission order regardless of completion order,
    so the artifacts of a batch do not depend on scheduling. A job that
    raises is reported as a failed outcome; the batch keeps going.
    """

    def __init__(self, label: str, threads: Optional[int] = None,
                 emit: Optional[Callable[[str], None]] = None, quiet: bool = False):
        self.label = label
        self.threads = worker_count(threads)
        self.emit = emit
        self.quiet = quiet
        self.cancel_event = threading.Event()
        self.completed = 0

    def request_cancel(self):
        self.cancel_event.set()

    def _guarded(self, fn: Callable[[int, Any], Any], index: int, item: Any) -> JobOutcome:
        if self.cancel_event.is_set():
            return JobOutcome(index, error="cancelled")
        try:
            return JobOutcome(index, fn(index, item))
        except Exception as e:
            log.exception("%s: instance %d crashed", self.label, index)
            return JobOutcome(index, error=f"{type(e).__name__}: {e}")

    def run(self, fn: Callable[[int, Any], Any], items: Iterable[Any]) -> List[JobOutcome]:
        items = list(items)
        outcomes: List[JobOutcome] = []
        if self.emit:
            self.emit(f"{self.label}: {len(items)} instance(s) on {self.threads} thread(s)")
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.threads) as executor:
            futures = [executor.submit(self._guarded, fn, k, item) for k, item in enumerate(items)]
            bar = tqdm(concurrent.futures.as_completed(futures), total=len(futures),
                       desc=self.label, disable=self.quiet, leave=False)
            try:
                for future in bar:
                    outcome = future.result()
                    outcomes.append(outcome)
                    self.completed += 1
                    if not outcome.ok:
                        log.warning("%s: instance %d failed: %s", self.label, outcome.index, outcome.error)
                    if self.cancel_event.is_set():
                        break
            except KeyboardInterrupt:
                log.warning("%s: interrupted after %d of %d instance(s)", self.label, self.completed, len(futures))
                self.request_cancel()
                raise
            finally:
                if self.cancel_event.is_set():
                    for f in futures:
                        f.cancel()
        outcomes.sort(key=lambda o: o.index)
        return outcomes
