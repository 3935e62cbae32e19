"""Analytical model and simulator for a relay-assisted mm-wave cell.

Saturated users send packets to an access point over millimeter-wave
links, optionally via a full-duplex decode-and-forward relay with an
infinite FIFO. The package computes per-slot success probabilities
under a 3GPP-style urban-microcell channel, closes the relay queue
analytically, assembles throughput and delay (including beam-alignment
overhead), and cross-checks everything against a slot-level simulator
and an exhaustive small-system enumerator.
"""

from .channel import (
    InterferenceScenario,
    Link,
    Scheme,
    SuccessTable,
    beam_gain,
    build_success_table,
    channel_fingerprint,
    gain_success_prob,
    link_budgets,
    path_loss,
    sample_sinr,
    success_probability,
)
from .config import ConfigError, SceneConfig
from .metrics import (
    DelayBreakdown,
    PerfReport,
    ThroughputComponents,
    aggregate_throughput,
    alignment_durations,
    evaluate,
    packet_delay,
    packet_delay_variable_alignment,
    relay_delay,
    throughput_components,
)
from .oracle import SlotOutcomeLaw, enumerate_slot_outcomes, kernel_from_laws
from .queueing import (
    QueueReport,
    StrategyMix,
    TransitionKernel,
    actual_tx_prob,
    arrival_rates,
    avg_queue_size,
    batch_arrival_pmf,
    prob_empty,
    queue_report,
    repeat_probability,
    service_rate,
    stability,
    stationary_numeric,
    transition_kernel,
)
from .sim import SimResult, SimTrace, run_simulation

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "SceneConfig",
    "Link",
    "Scheme",
    "InterferenceScenario",
    "SuccessTable",
    "beam_gain",
    "gain_success_prob",
    "link_budgets",
    "path_loss",
    "sample_sinr",
    "build_success_table",
    "success_probability",
    "channel_fingerprint",
    "StrategyMix",
    "TransitionKernel",
    "QueueReport",
    "repeat_probability",
    "actual_tx_prob",
    "batch_arrival_pmf",
    "arrival_rates",
    "service_rate",
    "stability",
    "transition_kernel",
    "prob_empty",
    "avg_queue_size",
    "stationary_numeric",
    "queue_report",
    "SlotOutcomeLaw",
    "enumerate_slot_outcomes",
    "kernel_from_laws",
    "ThroughputComponents",
    "DelayBreakdown",
    "PerfReport",
    "throughput_components",
    "aggregate_throughput",
    "relay_delay",
    "packet_delay",
    "packet_delay_variable_alignment",
    "alignment_durations",
    "evaluate",
    "SimResult",
    "SimTrace",
    "run_simulation",
    "__version__",
]
