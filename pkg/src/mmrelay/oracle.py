"""Brute-force slot law for small cells.

Everything in `queueing` compresses the per-slot event space with
binomial identities. This module walks that space outright: every
assignment of the N users to {silent, AP-directed, relay-directed,
broadcast}, every admission outcome (folded in one user at a time, no
binomial shortcuts), and the relay's own transmission and success. The
result is the exact joint law of (admissions, relay departure) plus the
expected per-class delivery counts, against which the analytical sums
are tested entry by entry.

Exhaustive enumeration costs 4^N assignments, so this is gated to small
N; it exists for certification, not for production evaluation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel import Link, Scheme, SuccessTable
from .queueing import StrategyMix, TransitionKernel, actual_tx_prob

_MAX_UES = 6

_SILENT, _FM, _FR, _B = range(4)


@dataclass(frozen=True)
class SlotOutcomeLaw:
    """Exact one-slot law under a fixed queue conditioning.

    ``joint[k, d]`` is P(k packets admitted to the relay and d ∈ {0,1}
    downlink departures). The per-class means count expected packets:
    deliveries are decodes at the AP, admissions are packets entering
    the relay FIFO.
    """

    n: int
    queue_nonempty: bool
    joint: np.ndarray
    fm_deliveries: float
    br_deliveries: float
    fr_admissions: float
    br_admissions: float

    @property
    def arrivals(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    @property
    def departure_prob(self) -> float:
        return float(math.fsum(self.joint[:, 1].tolist()))

    @property
    def mean_arrivals(self) -> float:
        return math.fsum(k * p for k, p in enumerate(self.arrivals))

    @property
    def ap_deliveries(self) -> float:
        return self.fm_deliveries + self.br_deliveries


def _forced_law(table: SuccessTable, mix: StrategyMix, n_ues: int,
                relay_tx: bool) -> SlotOutcomeLaw:
    """Law conditioned on the relay definitely transmitting (or not)."""
    q_tx = actual_tx_prob(mix)
    p_fm, p_fr, p_b = mix.strategy_probs()
    state_prob = (1.0 - q_tx, q_tx * p_fm, q_tx * p_fr, q_tx * p_b)

    joint_terms: list[list[list[float]]] = [
        [[] for _ in range(2)] for _ in range(n_ues + 1)
    ]
    fm_del: list[float] = []
    br_del: list[float] = []
    fr_adm: list[float] = []
    br_adm: list[float] = []

    for assignment in itertools.product(range(4), repeat=n_ues):
        prob = 1.0
        for st in assignment:
            prob *= state_prob[st]
        if prob == 0.0:
            continue
        n_fm = assignment.count(_FM)
        n_fr = assignment.count(_FR)
        n_b = assignment.count(_B)

        # Admission probability of each transmitting user, then the
        # admission-count PMF folded one user at a time.
        p_adm_fr = p_adm_b = 0.0
        if n_fr:
            p_adm_fr = table.lookup(Link.UE_TO_RELAY, Scheme.FD, n_fr - 1, n_b, relay_tx)
        if n_b:
            at_relay = table.lookup(Link.UE_TO_RELAY, Scheme.BR, n_fr, n_b - 1, relay_tx)
            at_ap = table.lookup(Link.UE_TO_AP, Scheme.BR, n_fm, n_b - 1, relay_tx)
            p_adm_b = at_relay * (1.0 - at_ap)

        pmf = [1.0]
        for st in assignment:
            if st == _FR:
                p = p_adm_fr
            elif st == _B:
                p = p_adm_b
            else:
                continue
            pmf = [
                (pmf[k] if k < len(pmf) else 0.0) * (1.0 - p)
                + (pmf[k - 1] * p if k >= 1 else 0.0)
                for k in range(len(pmf) + 1)
            ]

        s = table.lookup(Link.RELAY_TO_AP, Scheme.FD, n_fm, n_b, False) if relay_tx else 0.0
        for k, pk in enumerate(pmf):
            if pk == 0.0:
                continue
            joint_terms[k][0].append(prob * pk * (1.0 - s))
            if s:
                joint_terms[k][1].append(prob * pk * s)

        if n_fm:
            p_hit = table.lookup(Link.UE_TO_AP, Scheme.FD, n_fm - 1, n_b, relay_tx)
            fm_del.append(prob * n_fm * p_hit)
        if n_b:
            br_del.append(prob * n_b * table.lookup(Link.UE_TO_AP, Scheme.BR, n_fm, n_b - 1, relay_tx))
            br_adm.append(prob * n_b * p_adm_b)
        if n_fr:
            fr_adm.append(prob * n_fr * p_adm_fr)

    joint = np.array(
        [[math.fsum(joint_terms[k][d]) for d in range(2)] for k in range(n_ues + 1)]
    )
    return SlotOutcomeLaw(
        n=n_ues,
        queue_nonempty=relay_tx,
        joint=joint,
        fm_deliveries=math.fsum(fm_del),
        br_deliveries=math.fsum(br_del),
        fr_admissions=math.fsum(fr_adm),
        br_admissions=math.fsum(br_adm),
    )


def enumerate_slot_outcomes(table: SuccessTable, mix: StrategyMix, n_ues: int,
                            queue_nonempty: bool) -> SlotOutcomeLaw:
    """Exact joint law of (admissions, departure) for one slot.

    With an empty queue the relay stays silent. With a backlog it
    transmits with probability q_r, which switches every user's success
    probabilities to their relay-active variants and enables a
    departure; the returned law is the q_r-mixture of the two branches.
    """
    if n_ues > _MAX_UES:
        raise ValueError(f"exhaustive enumeration is limited to {_MAX_UES} users, got {n_ues}")
    silent = _forced_law(table, mix, n_ues, relay_tx=False)
    if not queue_nonempty:
        return silent
    active = _forced_law(table, mix, n_ues, relay_tx=True)
    q_r = mix.q_r
    return SlotOutcomeLaw(
        n=n_ues,
        queue_nonempty=True,
        joint=(1.0 - q_r) * silent.joint + q_r * active.joint,
        fm_deliveries=(1.0 - q_r) * silent.fm_deliveries + q_r * active.fm_deliveries,
        br_deliveries=(1.0 - q_r) * silent.br_deliveries + q_r * active.br_deliveries,
        fr_admissions=(1.0 - q_r) * silent.fr_admissions + q_r * active.fr_admissions,
        br_admissions=(1.0 - q_r) * silent.br_admissions + q_r * active.br_admissions,
    )


def kernel_from_laws(empty: SlotOutcomeLaw, nonempty: SlotOutcomeLaw) -> TransitionKernel:
    """Queue-size transition kernel implied by the two enumerated laws.

    From a non-empty queue the size change is (admissions - departure),
    so the probability of change k pools (k arrivals, no departure) with
    (k+1 arrivals, departure).
    """
    n = empty.n
    p0 = empty.arrivals
    p1 = np.zeros(n + 2)
    p1[0] = nonempty.joint[0, 1]
    for k in range(0, n + 1):
        up = nonempty.joint[k, 0]
        down_next = nonempty.joint[k + 1, 1] if k + 1 <= n else 0.0
        p1[k + 1] = up + down_next
    return TransitionKernel(p0=p0, p1=p1, n=n)
