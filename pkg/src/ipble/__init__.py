"""IPv6 over BLE extended advertising: a deterministic discrete-event simulator."""
from .engine import InvalidConfig, NoiseSpec, ScenarioConfig, Simulator, TrafficConfig, run, sweep
from .metrics import MetricsLog, pdr, percentile, rtt_cdf, summary

__version__ = "0.1.0"

__all__ = [
    "InvalidConfig", "MetricsLog", "NoiseSpec", "ScenarioConfig", "Simulator", "TrafficConfig",
    "pdr", "percentile", "rtt_cdf", "run", "summary", "sweep",
]
