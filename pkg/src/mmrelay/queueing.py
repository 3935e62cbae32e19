"""Relay queue analysis: access probabilities, arrival/service law, DTMC.

The relay keeps one infinite FIFO fed by two kinds of admissions per
slot: relay-directed transmissions that succeed at the relay, and
broadcast transmissions that the relay decodes but the AP misses. Both
depend on how many users transmit concurrently and on whether the relay
itself is transmitting, so every quantity here is an expectation over
the full strategy configuration of the cell: m of N users transmit, i of
those directed, j of the directed aimed at the relay, with trinomial
weights built from the strategy mix.

Alignment lowers the effective per-slot transmit probability below the
intent probability q_u: a user that switches strategy spends d_a slots
realigning before it can send. ``actual_tx_prob`` gives the long-run
attempt frequency of that renewal process.

The queue itself is a discrete-time Markov chain on the queue size with
batch arrivals (up to N per slot) and single departures. Closed forms
for the emptiness probability and the mean size come from the chain's
generating function; ``stationary_numeric`` solves the same chain by
direct truncation and is the oracle the closed forms are tested against.

All probability accumulations over strategy configurations use
compensated summation (math.fsum): the trinomial weights span many
orders of magnitude and naive addition loses the small terms that the
10^-12 self-consistency checks need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import Link, Scheme, SuccessTable
from .config import SceneConfig


@dataclass(frozen=True)
class StrategyMix:
    """Access-policy knobs of one cell.

    q_u is the per-slot intent probability of a ready user; q_uf splits
    attempts into directed (q_uf) vs broadcast; q_ur splits directed
    attempts into relay-directed (q_ur) vs AP-directed; q_r is the
    relay's transmit probability when backlogged; d_a the alignment
    duration in slots (real-valued here, the simulator ceils it).
    """

    q_u: float
    q_uf: float
    q_ur: float
    q_r: float = 1.0
    d_a: float = 0.0

    def __post_init__(self):
        for name in ("q_u", "q_uf", "q_ur", "q_r"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.d_a < 0.0:
            raise ValueError("d_a must be non-negative")

    @classmethod
    def from_config(cls, cfg: SceneConfig) -> "StrategyMix":
        return cls(q_u=cfg.q_u, q_uf=cfg.q_uf, q_ur=cfg.q_ur, q_r=cfg.q_r, d_a=cfg.d_a)

    @property
    def q_ub(self) -> float:
        return 1.0 - self.q_uf

    @property
    def q_um(self) -> float:
        return 1.0 - self.q_ur

    def strategy_probs(self) -> tuple[float, float, float]:
        """P(AP-directed), P(relay-directed), P(broadcast), given an attempt."""
        return (self.q_uf * self.q_um, self.q_uf * self.q_ur, self.q_ub)


def repeat_probability(mix: StrategyMix) -> float:
    """Probability that two independent strategy draws coincide.

    This is the chance that an attempt needs no realignment because the
    freshly drawn strategy equals the previous one.
    """
    p_fm, p_fr, p_b = mix.strategy_probs()
    return p_fm * p_fm + p_fr * p_fr + p_b * p_b


def actual_tx_prob(mix: StrategyMix) -> float:
    """Long-run per-slot transmission frequency of one user.

    Each attempt is preceded by a d_a-slot alignment with probability
    1 - repeat_probability(mix), which stretches the renewal cycle from
    1/q_u to 1/q_u + d_a*(1 - rho) slots per attempt.
    """
    rho = repeat_probability(mix)
    return mix.q_u / (1.0 + mix.d_a * mix.q_u * (1.0 - rho))


# ---------------------------------------------------------------------------
# strategy configurations


def _binom_pmf(n: int, p: float) -> np.ndarray:
    k = np.arange(n + 1)
    comb = np.array([math.comb(n, i) for i in range(n + 1)], dtype=float)
    return comb * np.power(p, k) * np.power(1.0 - p, n - k)


def _configurations(n_ues: int, mix: StrategyMix):
    """Yield (m, i, j, weight): m transmitters, i directed, j relay-directed.

    Weights are the trinomial expansion of independent per-user draws
    with the effective transmit probability of ``actual_tx_prob``.
    """
    q_tx = actual_tx_prob(mix)
    for m in range(n_ues + 1):
        w_m = math.comb(n_ues, m) * q_tx**m * (1.0 - q_tx) ** (n_ues - m)
        if w_m == 0.0:
            continue
        for i in range(m + 1):
            w_i = math.comb(m, i) * mix.q_uf**i * mix.q_ub ** (m - i)
            if w_i == 0.0:
                continue
            for j in range(i + 1):
                w_j = math.comb(i, j) * mix.q_ur**j * mix.q_um ** (i - j)
                w = w_m * w_i * w_j
                if w != 0.0:
                    yield m, i, j, w


def _config_arrival_pmf(table: SuccessTable, n_ues: int, m: int, i: int, j: int,
                        relay_active: bool) -> np.ndarray:
    """Arrival PMF given a fixed configuration: j relay-directed, m-i broadcast.

    Relay-directed admissions see the other j-1 relay beams plus the m-i
    broadcasts as interference at the relay. A broadcast is admitted only
    if the relay decodes it while the AP does not; at the relay it
    competes with j relay beams and the other m-i-1 broadcasts, at the AP
    with i-j AP beams and the same broadcasts.
    """
    pmf = np.ones(1)
    if j > 0:
        p_fr = table.lookup(Link.UE_TO_RELAY, Scheme.FD, j - 1, m - i, relay_active)
        pmf = np.convolve(pmf, _binom_pmf(j, p_fr))
    if m - i > 0:
        p_at_relay = table.lookup(Link.UE_TO_RELAY, Scheme.BR, j, m - i - 1, relay_active)
        p_at_ap = table.lookup(Link.UE_TO_AP, Scheme.BR, i - j, m - i - 1, relay_active)
        pmf = np.convolve(pmf, _binom_pmf(m - i, p_at_relay * (1.0 - p_at_ap)))
    out = np.zeros(n_ues + 1)
    out[: pmf.size] = pmf
    return out


def batch_arrival_pmf(table: SuccessTable, mix: StrategyMix, n_ues: int,
                      relay_active: bool) -> np.ndarray:
    """PMF of the number of packets admitted to the relay in one slot.

    ``relay_active`` selects the success probabilities seen while the
    relay transmits (self-interference at the relay, an extra interferer
    at the AP). The caller mixes the two variants by q_r where needed.
    """
    buckets: list[list[float]] = [[] for _ in range(n_ues + 1)]
    for m, i, j, w in _configurations(n_ues, mix):
        pmf = _config_arrival_pmf(table, n_ues, m, i, j, relay_active)
        for k in range(n_ues + 1):
            if pmf[k] != 0.0:
                buckets[k].append(w * pmf[k])
    return np.array([math.fsum(b) for b in buckets])


def arrival_rates(table: SuccessTable, mix: StrategyMix,
                  n_ues: int) -> tuple[float, float, float]:
    """(lambda0, a_r, lambda1): mean admissions per slot.

    lambda0 applies while the relay is silent, a_r while it transmits;
    lambda1 = (1-q_r)*lambda0 + q_r*a_r is the rate seen from a
    backlogged queue.
    """
    r_off = batch_arrival_pmf(table, mix, n_ues, relay_active=False)
    r_on = batch_arrival_pmf(table, mix, n_ues, relay_active=True)
    lambda0 = math.fsum(k * r_off[k] for k in range(1, n_ues + 1))
    a_r = math.fsum(k * r_on[k] for k in range(1, n_ues + 1))
    lambda1 = (1.0 - mix.q_r) * lambda0 + mix.q_r * a_r
    return lambda0, a_r, lambda1


def service_rate(table: SuccessTable, mix: StrategyMix, n_ues: int) -> tuple[float, float]:
    """(b_r, mu_r): relay downlink success probability and service rate.

    b_r conditions on the relay transmitting; its packet competes at the
    AP with the AP-directed beams and all broadcasts of that slot.
    mu_r = q_r * b_r folds in the transmit decision.
    """
    terms = [
        w * table.lookup(Link.RELAY_TO_AP, Scheme.FD, i - j, m - i, False)
        for m, i, j, w in _configurations(n_ues, mix)
    ]
    b_r = math.fsum(terms)
    return b_r, mix.q_r * b_r


def stability(lambda0: float, a_r: float,
              b_r: float) -> tuple[float, Callable[[float], bool]]:
    """Minimum stabilizing q_r and the stability predicate.

    The queue is stable iff its busy-state drift is negative:
    q_r*b_r > (1-q_r)*lambda0 + q_r*a_r, i.e. q_r > q_rmin with
    q_rmin = lambda0 / (lambda0 + b_r - a_r). Returns inf (unstable for
    every q_r) when the denominator is not positive, and 0 with an
    always-true predicate when lambda0 = 0 (the queue can never grow
    from empty).
    """
    if lambda0 == 0.0:
        return 0.0, lambda q_r: True
    denom = lambda0 + b_r - a_r
    if denom <= 0.0:
        return math.inf, lambda q_r: False
    q_rmin = lambda0 / denom
    return q_rmin, lambda q_r: q_r > q_rmin


# ---------------------------------------------------------------------------
# the queue-size Markov chain


@dataclass(frozen=True)
class TransitionKernel:
    """One-step law of the queue size.

    ``p0[k]`` is the probability of k arrivals from an empty queue
    (k = 0..n). ``p1[k+1]`` is the probability of a net change of k from
    a non-empty queue (k = -1..n); index 0 holds the downward step.
    """

    p0: np.ndarray
    p1: np.ndarray
    n: int

    @property
    def p_down(self) -> float:
        return float(self.p1[0])

    def busy_drift(self) -> float:
        """Mean queue change per slot while backlogged (= lambda1 - mu_r)."""
        return math.fsum(k * self.p1[k + 1] for k in range(-1, self.n + 1))

    def row_sums(self) -> tuple[float, float]:
        return math.fsum(self.p0.tolist()), math.fsum(self.p1.tolist())


def transition_kernel(table: SuccessTable, mix: StrategyMix, n_ues: int) -> TransitionKernel:
    """Assemble the queue chain from per-configuration joint laws.

    Departure and arrivals within one slot share the strategy
    configuration, so the joint term E[success ∧ k arrivals] cannot be
    factored into b_r * r_k; it is accumulated configuration by
    configuration.
    """
    r_off = batch_arrival_pmf(table, mix, n_ues, relay_active=False)

    dep_buckets: list[list[float]] = [[] for _ in range(n_ues + 1)]
    stay_buckets: list[list[float]] = [[] for _ in range(n_ues + 1)]
    for m, i, j, w in _configurations(n_ues, mix):
        s = table.lookup(Link.RELAY_TO_AP, Scheme.FD, i - j, m - i, False)
        pmf = _config_arrival_pmf(table, n_ues, m, i, j, relay_active=True)
        for k in range(n_ues + 1):
            if pmf[k] != 0.0:
                dep_buckets[k].append(w * s * pmf[k])
                stay_buckets[k].append(w * (1.0 - s) * pmf[k])
    dep_arr = np.array([math.fsum(b) for b in dep_buckets])    # success ∧ k arrivals
    stay_arr = np.array([math.fsum(b) for b in stay_buckets])  # failure ∧ k arrivals

    q_r = mix.q_r
    p1 = np.zeros(n_ues + 2)
    p1[0] = q_r * dep_arr[0]
    for k in range(1, n_ues + 1):
        down_next = dep_arr[k + 1] if k + 1 <= n_ues else 0.0
        p1[k + 1] = (1.0 - q_r) * r_off[k] + q_r * (stay_arr[k] + down_next)
    closure = 1.0 - math.fsum([p1[0], *p1[2:].tolist()])
    if closure < -1e-12:
        raise ArithmeticError(
            f"transition kernel closure went negative ({closure}); "
            "arrival/service laws are inconsistent"
        )
    p1[1] = max(closure, 0.0)
    return TransitionKernel(p0=r_off, p1=p1, n=n_ues)


def prob_empty(kernel: TransitionKernel, lambda0: float) -> float | None:
    """Stationary probability of an empty queue, None if unstable.

    delta = p_down - E[upward drift] is the mean drain per busy slot;
    the chain spends idle and busy periods in ratio delta : lambda0.
    """
    if lambda0 == 0.0:
        return 1.0
    delta = -kernel.busy_drift()
    if delta <= 0.0:
        return None
    return delta / (delta + lambda0)


def avg_queue_size(kernel: TransitionKernel, lambda0: float) -> float | None:
    """Stationary mean queue size, None if unstable.

    Derived from the chain's generating function; the second factorial
    moments of both kernel rows enter.
    """
    if lambda0 == 0.0:
        return 0.0
    delta = -kernel.busy_drift()
    if delta <= 0.0:
        return None
    a2 = math.fsum(k * (k - 1) * kernel.p0[k] for k in range(2, kernel.n + 1))
    b2 = math.fsum(k * (k + 1) * kernel.p1[k + 1] for k in range(1, kernel.n + 1))
    return (2.0 * delta * lambda0 + delta * a2 + lambda0 * b2) / (
        2.0 * delta * (lambda0 + delta)
    )


def stationary_numeric(kernel: TransitionKernel, tail_tol: float = 1e-10,
                       max_states: int = 2_000_000) -> np.ndarray:
    """Stationary distribution by truncated forward substitution.

    The balance equations are lower Hessenberg (single downward step),
    so the unnormalized masses follow from a forward recursion seeded at
    the empty state. States are appended until the estimated geometric
    tail mass drops below ``tail_tol`` of the accumulated mass.
    """
    p_down = kernel.p_down
    if p_down <= 0.0:
        raise ValueError("kernel has no downward transition; chain is not positive recurrent")

    def p0(k: int) -> float:
        return float(kernel.p0[k]) if k <= kernel.n else 0.0

    def p1(k: int) -> float:
        return float(kernel.p1[k + 1]) if k <= kernel.n else 0.0

    s = [1.0]
    total = 1.0   # running (uncompensated) mass, only steers the stopping rule
    i = 0
    while True:
        head = s[i] - p0(i) * s[0]
        inner = math.fsum(p1(i - j) * s[j] for j in range(max(1, i - kernel.n), i + 1))
        nxt = (head - inner) / p_down
        s.append(max(nxt, 0.0))
        total += s[i + 1]
        i += 1
        if i > kernel.n + 2 and s[i] > 0.0 and s[i - 1] > 0.0:
            ratio = s[i] / s[i - 1]
            if ratio < 1.0:
                tail = s[i] * ratio / (1.0 - ratio)
                if tail < tail_tol * total:
                    break
        if s[i] == s[i - 1] and s[i] <= tail_tol * total:
            # A float fixed point this far below the tolerance is roundoff
            # debris (e.g. chains whose true support is finite), not mass.
            break
        if i >= max_states:
            raise RuntimeError(
                f"stationary distribution did not converge within {max_states} states; "
                "the chain is unstable or too close to its stability boundary"
            )
    arr = np.array(s)
    return arr / math.fsum(s)


# ---------------------------------------------------------------------------
# assembled report


@dataclass(frozen=True)
class QueueReport:
    """Everything the delay/throughput layer needs to know about the queue.

    Unstable configurations carry zero emptiness probability and
    infinite q_bar/d_q/d_rel markers instead of numbers that would be
    meaningless.
    """

    lambda0: float    # admissions per slot, relay silent
    lambda1: float    # admissions per slot, queue backlogged
    lambda_r: float   # stationary admission rate
    a_r: float        # admissions per slot, relay transmitting
    b_r: float        # downlink success probability given a transmission
    mu_r: float       # departures per slot while backlogged
    q_rmin: float     # smallest stabilizing relay transmit probability
    stable: bool
    p_empty: float
    q_bar: float
    d_q: float        # mean FIFO wait, slots
    d_rel: float      # d_q + mean relay service time, slots


def queue_report(table: SuccessTable, mix: StrategyMix, n_ues: int) -> QueueReport:
    lambda0, a_r, lambda1 = arrival_rates(table, mix, n_ues)
    b_r, mu_r = service_rate(table, mix, n_ues)
    q_rmin, is_stable = stability(lambda0, a_r, b_r)
    stable = is_stable(mix.q_r)

    if not stable:
        return QueueReport(
            lambda0=lambda0, lambda1=lambda1, lambda_r=lambda1, a_r=a_r, b_r=b_r,
            mu_r=mu_r, q_rmin=q_rmin, stable=False, p_empty=0.0,
            q_bar=math.inf, d_q=math.inf, d_rel=math.inf,
        )

    kernel = transition_kernel(table, mix, n_ues)
    p_empty = prob_empty(kernel, lambda0)
    q_bar = avg_queue_size(kernel, lambda0)
    if p_empty is None or q_bar is None:
        # The strict q_r > q_rmin test passed but the drift is not
        # numerically negative: boundary case, report as unstable.
        return QueueReport(
            lambda0=lambda0, lambda1=lambda1, lambda_r=lambda1, a_r=a_r, b_r=b_r,
            mu_r=mu_r, q_rmin=q_rmin, stable=False, p_empty=0.0,
            q_bar=math.inf, d_q=math.inf, d_rel=math.inf,
        )

    lambda_r = p_empty * lambda0 + (1.0 - p_empty) * lambda1
    d_q = q_bar / lambda_r if q_bar > 0.0 else 0.0
    d_rel = d_q + (1.0 / mu_r if mu_r > 0.0 else math.inf)
    return QueueReport(
        lambda0=lambda0, lambda1=lambda1, lambda_r=lambda_r, a_r=a_r, b_r=b_r,
        mu_r=mu_r, q_rmin=q_rmin, stable=True, p_empty=p_empty,
        q_bar=q_bar, d_q=d_q, d_rel=d_rel,
    )
