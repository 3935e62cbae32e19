"""Throughput and delay of the relay-assisted cell.

Both metrics condition on a tagged user's transmission and average over
the strategy configuration of the remaining N-1 users, then combine the
relay-silent and relay-transmitting variants of every success
probability with the stationary weight q_r*P(Q != 0) from the queue
analysis.

Delay follows a renewal argument per strategy: a packet at the head of
the user's queue waits 1/q_u slots per attempt, realigns whenever the
freshly drawn strategy differs from the previous one, and rides the
relay FIFO when admitted there. The closed form and the per-strategy
recursion system are algebraically equivalent; ``packet_delay``
evaluates both and refuses to return if they disagree, which turns any
future regression in either route into a loud failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import Link, Scheme, SuccessTable
from .config import SceneConfig
from .queueing import (
    QueueReport,
    StrategyMix,
    _configurations,
    actual_tx_prob,
    queue_report,
)

REGIME_STABLE = "stable"
REGIME_UNSTABLE = "unstable"
REGIME_NEAR_INSTABILITY = "near_instability"

# Relative drift |lambda1 - mu_r|/mu_r below which analytical results are
# flagged: simulation cannot converge there in reasonable time.
_NEAR_INSTABILITY_BAND = 1e-2


@dataclass(frozen=True)
class ThroughputComponents:
    """Per-user conditional success probabilities, relay-state mixed.

    Each value conditions on the tagged user transmitting with the given
    scheme and target; ud/ur name the receiver (AP / relay), f/b the
    scheme. t_ur_b is an admission probability (decoded by the relay,
    missed by the AP).
    """

    t_ud_f: float
    t_ur_f: float
    t_ud_b: float
    t_ur_b: float

    def per_user(self, mix: StrategyMix) -> float:
        """Probability a random attempt eventually delivers (stable queue)."""
        p_fm, p_fr, p_b = mix.strategy_probs()
        return (
            p_fm * self.t_ud_f
            + p_fr * self.t_ur_f
            + p_b * (self.t_ud_b + self.t_ur_b)
        )

    def relay_flow(self, mix: StrategyMix) -> float:
        """Per-attempt probability of entering the relay FIFO."""
        _, p_fr, p_b = mix.strategy_probs()
        return p_fr * self.t_ur_f + p_b * self.t_ur_b


@dataclass(frozen=True)
class DelayBreakdown:
    ue_tx: float       # slots spent winning the uplink draw, incl. retries
    relay_tx: float    # relay downlink service, weighted by relay-path share
    queueing: float    # relay FIFO wait, weighted by relay-path share
    alignment: float   # beam alignment overhead

    @property
    def total(self) -> float:
        return self.ue_tx + self.relay_tx + self.queueing + self.alignment


@dataclass(frozen=True)
class PerfReport:
    t_aggregate: float
    t_ud_f: float
    t_ud_b: float
    t_ur_f: float
    t_ur_b: float
    t_u: float
    d_total: float
    d_breakdown: DelayBreakdown
    regime: str


def _components_at(table: SuccessTable, mix: StrategyMix, n_ues: int,
                   relay_active: bool) -> ThroughputComponents:
    """Components under a fixed relay activity state."""
    buckets: dict[str, list[float]] = {k: [] for k in ("udf", "urf", "udb", "urb")}
    for m, i, j, w in _configurations(n_ues - 1, mix):
        n_fm, n_fr, n_b = i - j, j, m - i
        buckets["udf"].append(
            w * table.lookup(Link.UE_TO_AP, Scheme.FD, n_fm, n_b, relay_active)
        )
        buckets["urf"].append(
            w * table.lookup(Link.UE_TO_RELAY, Scheme.FD, n_fr, n_b, relay_active)
        )
        hit_ap = table.lookup(Link.UE_TO_AP, Scheme.BR, n_fm, n_b, relay_active)
        hit_relay = table.lookup(Link.UE_TO_RELAY, Scheme.BR, n_fr, n_b, relay_active)
        buckets["udb"].append(w * hit_ap)
        buckets["urb"].append(w * hit_relay * (1.0 - hit_ap))
    return ThroughputComponents(
        t_ud_f=math.fsum(buckets["udf"]),
        t_ur_f=math.fsum(buckets["urf"]),
        t_ud_b=math.fsum(buckets["udb"]),
        t_ur_b=math.fsum(buckets["urb"]),
    )


def throughput_components(table: SuccessTable, mix: StrategyMix, n_ues: int,
                          p_nonempty: float) -> ThroughputComponents:
    """Stationary per-user components, mixed by the relay activity weight.

    The relay transmits in a fraction q_r*p_nonempty of slots; every
    component (including the relay-directed one, whose relay-active
    variant only differs when self-interference leaks, beta > 0) is the
    corresponding convex mix of its two conditional values.
    """
    if n_ues < 1:
        raise ValueError("need at least one user")
    omega = mix.q_r * p_nonempty
    off = _components_at(table, mix, n_ues, relay_active=False)
    if omega == 0.0:
        return off
    on = _components_at(table, mix, n_ues, relay_active=True)
    mixv = lambda a, b: (1.0 - omega) * a + omega * b
    return ThroughputComponents(
        t_ud_f=mixv(off.t_ud_f, on.t_ud_f),
        t_ur_f=mixv(off.t_ur_f, on.t_ur_f),
        t_ud_b=mixv(off.t_ud_b, on.t_ud_b),
        t_ur_b=mixv(off.t_ur_b, on.t_ur_b),
    )


def aggregate_throughput(components: ThroughputComponents, mix: StrategyMix,
                         n_ues: int, queue: QueueReport) -> float:
    """Network throughput in packets per slot.

    Stable queue: every admitted packet eventually leaves, so the
    aggregate is N*q_tx times the per-attempt delivery probability.
    Unstable queue: the relay drains at its service rate mu_r while
    direct deliveries continue; relay-directed traffic beyond mu_r
    accumulates and never counts.
    """
    q_tx = actual_tx_prob(mix)
    p_fm, _, p_b = mix.strategy_probs()
    if queue.stable:
        return n_ues * q_tx * components.per_user(mix)
    direct = p_fm * components.t_ud_f + p_b * components.t_ud_b
    return n_ues * q_tx * direct + queue.mu_r


def relay_delay(queue: QueueReport) -> float:
    """Mean slots from relay admission to downlink delivery (inf if unstable)."""
    return queue.d_rel


def _strategy_tables(components: ThroughputComponents,
                     mix: StrategyMix) -> tuple[tuple[float, ...], tuple[float, ...], tuple[float, ...]]:
    """(P_i, T_i, relay-leg share) per strategy, order (fm, fr, b)."""
    probs = mix.strategy_probs()
    deliver = (
        components.t_ud_f,
        components.t_ur_f,
        components.t_ud_b + components.t_ur_b,
    )
    relay_share = (0.0, components.t_ur_f, components.t_ur_b)
    return probs, deliver, relay_share


def delay_recursion_solution(components: ThroughputComponents, mix: StrategyMix,
                             queue: QueueReport, d_a_f: float | None = None,
                             d_a_b: float | None = None) -> float:
    """Mean delay via the per-strategy linear system (the slow route).

    Solves for the three conditional delays D_i (delay given the first
    attempt uses strategy i, initial alignment excluded) and averages
    them with the alignment cost of a strategy switch in front. Used as
    the cross-check for the closed form.
    """
    if d_a_f is None:
        d_a_f = mix.d_a
    if d_a_b is None:
        d_a_b = mix.d_a
    align = (d_a_f, d_a_f, d_a_b)
    probs, deliver, relay_share = _strategy_tables(components, mix)
    t_u = components.per_user(mix)
    if mix.q_u == 0.0 or t_u == 0.0 or not queue.stable:
        return math.inf

    active = [k for k in range(3) if probs[k] > 0.0]
    dim = len(active)
    a = np.zeros((dim, dim))
    rhs = np.zeros(dim)
    for row, i in enumerate(active):
        fail = 1.0 - deliver[i]
        relay_leg = relay_share[i] * queue.d_rel if relay_share[i] > 0.0 else 0.0
        switch_cost = math.fsum(
            probs[k] * align[k] for k in active if k != i
        )
        rhs[row] = 1.0 / mix.q_u + relay_leg + fail * switch_cost
        for col, k in enumerate(active):
            a[row, col] = (1.0 if i == k else 0.0) - fail * probs[k]
    d_i = np.linalg.solve(a, rhs)
    return math.fsum(
        probs[i] * (d_i[row] + (1.0 - probs[i]) * align[i])
        for row, i in enumerate(active)
    )


def _delay_closed_form(components: ThroughputComponents, mix: StrategyMix,
                       queue: QueueReport, d_a_f: float,
                       d_a_b: float) -> tuple[float, DelayBreakdown]:
    probs, deliver, _ = _strategy_tables(components, mix)
    t_u = components.per_user(mix)
    phi = components.relay_flow(mix)
    if mix.q_u == 0.0 or t_u == 0.0:
        inf = math.inf
        return inf, DelayBreakdown(ue_tx=inf, relay_tx=inf, queueing=inf, alignment=inf)

    # Per-strategy alignment coefficients; their sum over equal d_a is
    # the single constant of the uniform-alignment delay formula.
    coeff = [
        probs[k] + probs[k] ** 2 * (deliver[k] - t_u - 1.0) for k in range(3)
    ]
    align_num = d_a_f * (coeff[0] + coeff[1]) + d_a_b * coeff[2]

    relay_num = queue.d_rel * phi if phi > 0.0 else 0.0
    queueing_num = queue.d_q * phi if phi > 0.0 else 0.0
    service_num = relay_num - queueing_num

    denom = mix.q_u * t_u
    d_total = (1.0 + mix.q_u * relay_num + mix.q_u * align_num) / denom
    breakdown = DelayBreakdown(
        ue_tx=1.0 / denom,
        relay_tx=service_num / t_u,
        queueing=queueing_num / t_u,
        alignment=align_num / t_u,
    )
    return d_total, breakdown


def packet_delay(components: ThroughputComponents, mix: StrategyMix,
                 queue: QueueReport) -> tuple[float, DelayBreakdown]:
    """Mean packet delay in slots and its additive decomposition.

    Evaluates the closed form and the recursion system and requires them
    to agree; a mismatch means one of the two routes was edited
    inconsistently and is raised rather than silently returned.
    """
    if not queue.stable:
        inf = math.inf
        return inf, DelayBreakdown(ue_tx=inf, relay_tx=inf, queueing=inf, alignment=inf)
    d_total, breakdown = _delay_closed_form(components, mix, queue, mix.d_a, mix.d_a)
    if math.isfinite(d_total):
        d_ref = delay_recursion_solution(components, mix, queue)
        if not math.isclose(d_total, d_ref, rel_tol=1e-9, abs_tol=1e-9):
            raise ArithmeticError(
                f"delay closed form ({d_total}) and recursion ({d_ref}) disagree"
            )
    return d_total, breakdown


def packet_delay_variable_alignment(components: ThroughputComponents,
                                    mix: StrategyMix, queue: QueueReport,
                                    d_a_f: float, d_a_b: float) -> float:
    """Mean delay when directed and broadcast alignments differ in length.

    Reduces exactly to ``packet_delay`` when the two durations coincide.
    """
    if d_a_f < 0.0 or d_a_b < 0.0:
        raise ValueError("alignment durations must be non-negative")
    if not queue.stable:
        return math.inf
    d_total, _ = _delay_closed_form(components, mix, queue, d_a_f, d_a_b)
    return d_total


def alignment_durations(theta_bw_f: float, theta_bw_b: float, theta_bw_ap: float,
                        m_pilots: int, l_dirs: int) -> tuple[float, float]:
    """Alignment durations (slots) of the directed and broadcast procedures.

    A sweep tests every (user beam, receiver beam) pair, L directions
    per pilot and M pilots per slot. The user always sweeps its fine
    transmit grid of ceil(2*pi/theta_bw_f) beams; the broadcast
    procedure additionally sweeps the relay's receive grid, which equals
    the AP's. theta_bw_b is accepted for signature symmetry but does not
    set a grid size: the wide broadcast lobe is what the user transmits
    with afterwards, not what it scans with.
    """
    if min(theta_bw_f, theta_bw_b, theta_bw_ap) <= 0.0:
        raise ValueError("beamwidths must be positive")
    if m_pilots < 1 or l_dirs < 1:
        raise ValueError("pilot and direction counts must be positive")
    n_ue = math.ceil(2.0 * math.pi / theta_bw_f)
    n_ap = math.ceil(2.0 * math.pi / theta_bw_ap)
    d_a_f = n_ue * n_ap / (l_dirs * m_pilots)
    return d_a_f, d_a_f * n_ap


def classify_regime(queue: QueueReport) -> str:
    if queue.mu_r > 0.0 and abs(queue.lambda1 - queue.mu_r) / queue.mu_r < _NEAR_INSTABILITY_BAND:
        return REGIME_NEAR_INSTABILITY
    return REGIME_STABLE if queue.stable else REGIME_UNSTABLE


def evaluate(cfg: SceneConfig, table: SuccessTable) -> tuple[QueueReport, PerfReport]:
    """Full analytical evaluation of one scenario."""
    mix = StrategyMix.from_config(cfg)
    queue = queue_report(table, mix, cfg.n_ues)
    p_nonempty = (1.0 - queue.p_empty) if queue.stable else 1.0
    components = throughput_components(table, mix, cfg.n_ues, p_nonempty)
    t_aggregate = aggregate_throughput(components, mix, cfg.n_ues, queue)
    d_total, breakdown = packet_delay(components, mix, queue)
    report = PerfReport(
        t_aggregate=t_aggregate,
        t_ud_f=components.t_ud_f,
        t_ud_b=components.t_ud_b,
        t_ur_f=components.t_ur_f,
        t_ur_b=components.t_ur_b,
        t_u=components.per_user(mix),
        d_total=d_total,
        d_breakdown=breakdown,
        regime=classify_regime(queue),
    )
    return queue, report
