import time

import pytest

from core.batch_runner import BatchRunner, JobOutcome, worker_count


def test_worker_count_precedence(monkeypatch):
    monkeypatch.setenv("RELUFLOW_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(5) == 5
    monkeypatch.setenv("RELUFLOW_THREADS", "many")
    assert worker_count() >= 1
    monkeypatch.delenv("RELUFLOW_THREADS")
    assert worker_count(0) >= 1


def test_results_in_submission_order():
    def slow_square(index, item):
        time.sleep(0.01 * (5 - index))
        return item * item

    lines = []
    outcomes = BatchRunner("squares", threads=4, emit=lines.append, quiet=True).run(slow_square, range(5))
    assert [o.index for o in outcomes] == list(range(5))
    assert [o.value for o in outcomes] == [0, 1, 4, 9, 16]
    assert lines == ["squares: 5 instance(s) on 4 thread(s)"]


def test_failures_are_captured():
    def boom(index, item):
        if index == 1:
            raise ValueError("bad instance")
        return index

    outcomes = BatchRunner("mixed", threads=2, quiet=True).run(boom, [None] * 3)
    assert [o.ok for o in outcomes] == [True, False, True]
    assert outcomes[1].error == "ValueError: bad instance"


def test_cancelled_runner_skips_jobs():
    runner = BatchRunner("cancel", threads=1, quiet=True)
    runner.request_cancel()
    outcomes = runner.run(lambda i, x: x, [1, 2, 3])
    assert outcomes and all(o.error == "cancelled" for o in outcomes)


def test_interrupt_cancels_the_batch():
    def job(index, item):
        if index == 0:
            raise KeyboardInterrupt
        return index

    runner = BatchRunner("interrupt", threads=1, quiet=True)
    with pytest.raises(KeyboardInterrupt):
        runner.run(job, range(5))
    assert runner.cancel_event.is_set()


def test_outcome_ok():
    assert JobOutcome(0, 1).ok
    assert not JobOutcome(0, error="x").ok
