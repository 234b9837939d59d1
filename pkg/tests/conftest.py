import os
import sys
import threading
import uuid

import _posixshmem
import pytest

from cosim.bridge import open_follower
from cosim.bridge.segment import os_name
from cosim.engine import Stepper

HERE = os.path.dirname(__file__)
sys.path.insert(0, HERE)


@pytest.fixture
def chan_name():
    name = f"test.{os.getpid()}.{uuid.uuid4().hex[:10]}"
    yield name
    # segments of SIGKILLed peers are never unlinked by their owner
    try:
        _posixshmem.shm_unlink(os_name(name))
    except FileNotFoundError:
        pass


class ThreadFollower:
    """Serves a follower model from a background thread (same semantics as
    ``run_follower``, without the process spawn)."""

    def __init__(self, name, model, dt, timeout=2000):
        self.name, self.model, self.dt, self.timeout = name, model, dt, timeout
        self.error = None
        self.served = None
        self.thread = threading.Thread(target=self._run, daemon=True)

    def _run(self):
        stepper = Stepper(self.model)
        state = self.model.initial_state()

        def handler(step, t, inputs):
            nonlocal state
            out, state = stepper.step(state, inputs, t, self.dt)
            return out

        try:
            ch = open_follower(self.name, self.timeout)
            try:
                self.served = ch.follower_serve(handler)
            finally:
                ch.close()
        except Exception as exc:  # reported to the test
            self.error = exc

    def start(self):
        self.thread.start()
        return self

    def join(self):
        self.thread.join(10)
        assert not self.thread.is_alive()
