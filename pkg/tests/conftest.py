import pytest

from ipble.engine import ScenarioConfig, Simulator, TrafficConfig

VERDICTS: list = []


def quiet_sim(mode="adv", topology="star", nodes=3, duration_s=5.0, strict=True, **kw):
    """A scenario with no producers; tests inject traffic by hand."""
    cfg = ScenarioConfig(mode=mode, topology=topology, nodes=nodes, producers=0, duration_s=duration_s,
                         traffic=TrafficConfig(ack_timeout_s=1.0), **kw)
    sim = Simulator(cfg, strict=strict)
    for mac in sim.macs:
        mac.net = Recorder(sim)
    return sim


def drain(sim, until=None):
    """Process events up to ``until`` (default: end of run) without finalizing."""
    end = sim.end if until is None else until
    q = sim.queue
    while q and q.peek_time() <= end:
        t, _, fn, args = q.pop()
        sim.now = t
        fn(*args)
    sim.now = max(sim.now, end)


class Recorder:
    """Stands in for a node's IP layer and remembers what the MAC handed up."""

    def __init__(self, sim):
        self.sim = sim
        self.got = []

    def on_link_receive(self, data, src):
        self.got.append((self.sim.now, data, src))


@pytest.fixture
def verdicts():
    return VERDICTS


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
