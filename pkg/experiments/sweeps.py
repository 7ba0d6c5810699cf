import logging
import queue
import threading

log = logging.getLogger(__name__)

WORKER_POLL_TIMEOUT = 0.1  # seconds
JOIN_TIMEOUT = 2.0


class SweepRunner:
    """
    Runs independent jobs (one resolution or time step each) on background
    worker threads. Each job owns its state; results come back in
    submission order.
    """

    def __init__(self, workers=1):
        if workers < 1:
            raise ValueError(f"need at least one worker, got {workers}")
        self.workers = workers
        self.job_queue = queue.Queue()
        self.completed = queue.Queue()
        self.should_stop = False
        self.threads = []
        self.thread_lock = threading.Lock()
        self.stats = {"submitted": 0, "finished": 0, "failed": 0}

    def start(self):
        """Start the background worker threads"""
        for k in range(self.workers):
            thread = threading.Thread(target=self._worker, name=f"sweep-{k}", daemon=True)
            thread.start()
            self.threads.append(thread)

    def _worker(self):
        while not self.should_stop:
            try:
                index, label, func, args = self.job_queue.get(timeout=WORKER_POLL_TIMEOUT)
            except queue.Empty:
                continue
            try:
                log.info("Sweep job %s started", label)
                result = func(*args)
                self.completed.put((index, label, result, None))
                with self.thread_lock:
                    self.stats["finished"] += 1
            except Exception as exc:
                self.completed.put((index, label, None, exc))
                with self.thread_lock:
                    self.stats["failed"] += 1
            finally:
                self.job_queue.task_done()

    def submit(self, label, func, *args):
        with self.thread_lock:
            index = self.stats["submitted"]
            self.stats["submitted"] += 1
        self.job_queue.put((index, label, func, args))
        return index

    def cleanup(self):
        """Stop and join the worker threads"""
        self.should_stop = True
        for thread in self.threads:
            if thread.is_alive():
                thread.join(timeout=JOIN_TIMEOUT)
        self.threads.clear()

    def run(self, jobs):
        """
        jobs: iterable of (label, func, args). Returns results in
        submission order; the first failure is re-raised after all jobs
        have finished.
        """
        jobs = list(jobs)
        if self.workers == 1 or len(jobs) <= 1:
            return [func(*args) for _, func, args in jobs]

        self.start()
        try:
            for label, func, args in jobs:
                self.submit(label, func, *args)
            results = [None] * len(jobs)
            failures = []
            for _ in range(len(jobs)):
                index, label, result, error = self.completed.get()
                if error is not None:
                    log.error("Sweep job %s failed: %s", label, error)
                    failures.append((index, error))
                else:
                    log.info("Sweep job %s finished", label)
                results[index] = result
        finally:
            self.cleanup()
        if failures:
            raise min(failures, key=lambda f: f[0])[1]
        log.debug("Sweep stats: %s", self.stats)
        return results


def run_sweep(jobs, workers=1):
    return SweepRunner(workers).run(jobs)
