"""Slot-level Monte-Carlo simulator of the relay-assisted cell.

One run walks the full per-slot protocol: saturated users draw transmit
intents and strategies, realign for ``ceil(d_a)`` slots whenever the
drawn strategy differs from the previous attempt's, the relay serves
its FIFO head with probability q_r, and every concurrent transmission
is tested for success at its receiver(s).

Two channel modes share the state machine:

* ``table``: each (transmission, receiver) succeeds by an independent
  Bernoulli draw from the precomputed success table, conditioned on the
  realized interference scenario. This matches the independence
  structure the analytical model assumes and is the validation target.
* ``physical``: LOS states, shadowing and pointing errors are drawn
  per link per slot and the SINR test is evaluated outright. This
  preserves the cross-receiver correlations the table mode integrates
  out (one broadcast's shadowing is shared by every victim).

The hot loop is compiled with numba; a run is strictly sequential and
bit-reproducible for a given seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .channel import (
    SHADOW_SIGMA_LOS_DB,
    SHADOW_SIGMA_NLOS_DB,
    Link,
    SuccessTable,
    beam_gain,
    gain_success_prob,
    link_budgets,
)
from .config import SceneConfig
from .metrics import DelayBreakdown
from .queueing import StrategyMix

_FIFO_CAP = 8_000_000
_TRACE_CAP = 100_000


@dataclass(frozen=True)
class SimTrace:
    """Per-slot snapshot of the first ``len(queue_size)`` slots."""

    queue_size: np.ndarray       # relay backlog at slot start
    align_remaining: np.ndarray  # (slots, n_ues) alignment slots left
    strategy: np.ndarray         # (slots, n_ues) current/pending strategy code


@dataclass(frozen=True)
class SimResult:
    """Empirical counterparts of the analytical outputs.

    Delay statistics cover packets whose service started after warm-up;
    rate statistics count events in post-warm-up slots; q_tx and the
    conservation counters span the whole run.
    """

    t_empirical: float            # deliveries per slot (direct + relay)
    d_empirical: float            # mean packet delay, slots
    d_breakdown: DelayBreakdown
    p_empty_empirical: float
    q_bar_empirical: float
    lambda_empirical: float       # relay admissions per slot
    mu_empirical: float           # relay deliveries per backlogged slot
    q_tx_empirical: float         # attempt slots per user-slot
    relay_sojourn_empirical: float  # mean slots from admission to delivery
    admissions: int
    relay_deliveries: int
    final_queue_size: int
    delivered: int
    qsize_trajectory: np.ndarray = field(compare=False)  # sampled ~512 times
    slots: int = 0
    seed: int = 0
    mode: str = "table"
    trace: SimTrace | None = field(default=None, compare=False)


@njit(cache=True)
def _run_core(n, slots, warmup, seed, q_u, p_fm, p_fr, p_b, q_r, d_a,
              physical, table_arr, p_t_lin, p_n_lin, gamma_lin, alpha, beta,
              link_pl, g2_f, g2_b, keep2_f, keep2_b, sigma_e_on,
              fifo_cap, traj_stride, trace_len):
    np.random.seed(seed)

    # per-user state
    last_strat = np.zeros(n, dtype=np.int8)    # 1 fm, 2 fr, 3 b
    pending = np.zeros(n, dtype=np.int8)
    align_left = np.zeros(n, dtype=np.int64)
    head_since = np.zeros(n, dtype=np.int64)
    align_acc = np.zeros(n, dtype=np.int64)
    tx_strat = np.zeros(n, dtype=np.int8)

    # the previous attempt's strategy is part of the stationary state;
    # start from its marginal law instead of an arbitrary fixed value
    for u in range(n):
        r = np.random.random()
        if r < p_fm:
            last_strat[u] = 1
        elif r < p_fm + p_fr:
            last_strat[u] = 2
        else:
            last_strat[u] = 3

    # relay FIFO ring
    fifo_admit = np.empty(fifo_cap, dtype=np.int64)
    fifo_ue_elapsed = np.empty(fifo_cap, dtype=np.int64)
    fifo_align = np.empty(fifo_cap, dtype=np.int64)
    fifo_head = 0
    fifo_size = 0
    head_reach = 0   # slot at which the current FIFO head became servable

    # accumulators
    delivered_total = 0
    deliveries_counted = 0        # deliveries in post-warm-up slots
    delay_sum = 0.0
    delay_count = 0
    part_ue = 0.0
    part_align = 0.0
    part_queue = 0.0
    part_rtx = 0.0
    admissions_total = 0
    admissions_counted = 0
    relay_deliv_total = 0
    relay_deliv_counted = 0
    backlog_samples = 0
    empty_samples = 0
    qbar_sum = 0.0
    q_samples = 0
    tx_slots = 0
    sojourn_sum = 0.0
    sojourn_count = 0
    error = 0

    n_traj = slots // traj_stride + 1
    traj = np.zeros(n_traj, dtype=np.int64)
    trace_q = np.zeros(trace_len, dtype=np.int64)
    trace_align = np.zeros((trace_len, n), dtype=np.int64)
    trace_strat = np.zeros((trace_len, n), dtype=np.int64)

    pow_ap = np.zeros(n)
    pow_rel = np.zeros(n)
    ln10_over10 = math.log(10.0) / 10.0

    for t in range(slots):
        if t % traj_stride == 0:
            traj[t // traj_stride] = fifo_size
        if t >= warmup:
            q_samples += 1
            qbar_sum += fifo_size
            if fifo_size == 0:
                empty_samples += 1
            else:
                backlog_samples += 1

        # --- decisions -------------------------------------------------
        relay_tx = False
        if fifo_size > 0:
            relay_tx = np.random.random() < q_r

        n_fm = 0
        n_fr = 0
        n_b = 0
        for u in range(n):
            tx_strat[u] = 0
            if align_left[u] > 0:
                align_left[u] -= 1
                align_acc[u] += 1
                continue
            if pending[u] != 0:
                tx_strat[u] = pending[u]
                last_strat[u] = pending[u]
                pending[u] = 0
            elif np.random.random() < q_u:
                r = np.random.random()
                if r < p_fm:
                    s = 1
                elif r < p_fm + p_fr:
                    s = 2
                else:
                    s = 3
                if s == last_strat[u]:
                    tx_strat[u] = s
                elif d_a == 0:
                    tx_strat[u] = s
                    last_strat[u] = s
                else:
                    pending[u] = s
                    align_left[u] = d_a - 1
                    align_acc[u] += 1
                    continue
            if tx_strat[u] == 1:
                n_fm += 1
            elif tx_strat[u] == 2:
                n_fr += 1
            elif tx_strat[u] == 3:
                n_b += 1
            if tx_strat[u] != 0:
                tx_slots += 1

        if t < trace_len:
            trace_q[t] = fifo_size
            for u in range(n):
                trace_align[t, u] = align_left[u]
                trace_strat[t, u] = pending[u] if pending[u] != 0 else last_strat[u]

        # --- evaluation --------------------------------------------------
        act = 1 if relay_tx else 0

        relay_success = False
        relay_pow = 0.0
        sum_ap = 0.0
        sum_rel = 0.0
        if physical:
            for u in range(n):
                pow_ap[u] = 0.0
                pow_rel[u] = 0.0
            if relay_tx:
                z = np.random.normal()
                keep = 1.0
                if sigma_e_on:
                    keep = 1.0 if np.random.random() < keep2_f else 0.0
                relay_pow = p_t_lin * g2_f * keep * math.exp(
                    -ln10_over10 * (link_pl[2, 0] + link_pl[2, 2] * z)
                )
            for u in range(n):
                s = tx_strat[u]
                if s == 0:
                    continue
                if s == 1 or s == 3:
                    g2 = g2_f if s == 1 else g2_b
                    keep2 = keep2_f if s == 1 else keep2_b
                    los = np.random.random() < link_pl[0, 4]
                    z = np.random.normal()
                    keep = 1.0
                    if sigma_e_on:
                        keep = 1.0 if np.random.random() < keep2 else 0.0
                    pl = link_pl[0, 0] if los else link_pl[0, 1]
                    sg = link_pl[0, 2] if los else link_pl[0, 3]
                    pow_ap[u] = p_t_lin * g2 * keep * math.exp(-ln10_over10 * (pl + sg * z))
                if s == 2 or s == 3:
                    g2 = g2_f if s == 2 else g2_b
                    keep2 = keep2_f if s == 2 else keep2_b
                    los = np.random.random() < link_pl[1, 4]
                    z = np.random.normal()
                    keep = 1.0
                    if sigma_e_on:
                        keep = 1.0 if np.random.random() < keep2 else 0.0
                    pl = link_pl[1, 0] if los else link_pl[1, 1]
                    sg = link_pl[1, 2] if los else link_pl[1, 3]
                    pow_rel[u] = p_t_lin * g2 * keep * math.exp(-ln10_over10 * (pl + sg * z))

            for u in range(n):
                sum_ap += pow_ap[u]
                sum_rel += pow_rel[u]
            if relay_tx:
                denom = p_n_lin + alpha * sum_ap
                relay_success = relay_pow >= gamma_lin * denom
        else:
            if relay_tx:
                p = table_arr[2, 0, n_fm, n_b, 0]
                if np.isnan(p):
                    error = 2
                    break
                relay_success = np.random.random() < p

        # relay departure first: it serves the head as of the slot start
        if relay_tx and relay_success:
            slot_admitted = fifo_admit[fifo_head]
            ue_elapsed = fifo_ue_elapsed[fifo_head]
            ue_align = fifo_align[fifo_head]
            fifo_head = (fifo_head + 1) % fifo_cap
            fifo_size -= 1
            relay_deliv_total += 1
            delivered_total += 1
            if t >= warmup:
                deliveries_counted += 1
                relay_deliv_counted += 1
            started = slot_admitted - ue_elapsed + 1
            if started >= warmup:
                delay = ue_elapsed + (t - slot_admitted)
                delay_sum += delay
                delay_count += 1
                part_align += ue_align
                part_ue += ue_elapsed - ue_align
                part_queue += head_reach - slot_admitted - 1
                part_rtx += t - head_reach + 1
            if slot_admitted >= warmup:
                sojourn_sum += t - slot_admitted
                sojourn_count += 1
            if fifo_size > 0:
                head_reach = t + 1

        self_int = beta * p_t_lin if relay_tx else 0.0
        rel_at_ap = relay_pow if relay_tx else 0.0
        for u in range(n):
            s = tx_strat[u]
            if s == 0:
                continue
            direct = False
            admit = False
            if physical:
                if s == 1:
                    denom = p_n_lin + alpha * (sum_ap - pow_ap[u] + rel_at_ap)
                    direct = pow_ap[u] >= gamma_lin * denom
                elif s == 2:
                    denom = p_n_lin + alpha * (sum_rel - pow_rel[u]) + self_int
                    admit = pow_rel[u] >= gamma_lin * denom
                else:
                    denom = p_n_lin + alpha * (sum_ap - pow_ap[u] + rel_at_ap)
                    direct = pow_ap[u] >= gamma_lin * denom
                    denom = p_n_lin + alpha * (sum_rel - pow_rel[u]) + self_int
                    hit_relay = pow_rel[u] >= gamma_lin * denom
                    admit = hit_relay and not direct
            else:
                if s == 1:
                    p = table_arr[0, 0, n_fm - 1, n_b, act]
                    if np.isnan(p):
                        error = 2
                        break
                    direct = np.random.random() < p
                elif s == 2:
                    p = table_arr[1, 0, n_fr - 1, n_b, act]
                    if np.isnan(p):
                        error = 2
                        break
                    admit = np.random.random() < p
                else:
                    p_ap = table_arr[0, 1, n_fm, n_b - 1, act]
                    p_rel = table_arr[1, 1, n_fr, n_b - 1, act]
                    if np.isnan(p_ap) or np.isnan(p_rel):
                        error = 2
                        break
                    direct = np.random.random() < p_ap
                    hit_relay = np.random.random() < p_rel
                    admit = hit_relay and not direct

            if direct:
                delivered_total += 1
                if t >= warmup:
                    deliveries_counted += 1
                if head_since[u] >= warmup:
                    delay = t - head_since[u] + 1
                    delay_sum += delay
                    delay_count += 1
                    part_align += align_acc[u]
                    part_ue += delay - align_acc[u]
                head_since[u] = t + 1
                align_acc[u] = 0
            elif admit:
                if fifo_size >= fifo_cap:
                    error = 1
                    break
                tail = (fifo_head + fifo_size) % fifo_cap
                fifo_admit[tail] = t
                fifo_ue_elapsed[tail] = t - head_since[u] + 1
                fifo_align[tail] = align_acc[u]
                if fifo_size == 0:
                    head_reach = t + 1
                fifo_size += 1
                admissions_total += 1
                if t >= warmup:
                    admissions_counted += 1
                head_since[u] = t + 1
                align_acc[u] = 0

        if error != 0:
            break

    return (error, delivered_total, deliveries_counted, delay_sum, delay_count,
            part_ue, part_align, part_queue, part_rtx,
            admissions_total, admissions_counted,
            relay_deliv_total, relay_deliv_counted,
            backlog_samples, empty_samples, qbar_sum, q_samples,
            tx_slots, sojourn_sum, sojourn_count, fifo_size,
            traj, trace_q, trace_align, trace_strat)


def _physical_params(cfg: SceneConfig):
    budgets = link_budgets(cfg)
    order = (Link.UE_TO_AP, Link.UE_TO_RELAY, Link.RELAY_TO_AP)
    link_pl = np.zeros((3, 5))
    for row, link in enumerate(order):
        b = budgets[link]
        link_pl[row] = (b.pl_los_db, b.pl_nlos_db,
                        SHADOW_SIGMA_LOS_DB, SHADOW_SIGMA_NLOS_DB, b.p_los)
    sigma_e = math.radians(cfg.sigma_e_deg)
    return (
        link_pl,
        beam_gain(cfg.theta_bw_f) ** 2,
        beam_gain(cfg.theta_bw_b) ** 2,
        gain_success_prob(cfg.theta_bw_f, sigma_e) ** 2,
        gain_success_prob(cfg.theta_bw_b, sigma_e) ** 2,
        sigma_e > 0.0,
    )


def run_simulation(cfg: SceneConfig, table: SuccessTable | None, slots: int,
                   seed: int = 0, mode: str = "table",
                   trace: bool = False) -> SimResult:
    """Simulate ``slots`` timeslots and return the empirical metrics.

    ``mode="table"`` draws successes from ``table``; ``mode="physical"``
    re-samples the channel per slot and ignores the table entirely.
    Deterministic for a fixed (cfg, slots, seed, mode).
    """
    if slots < 1:
        raise ValueError("slots must be >= 1")
    if mode not in ("table", "physical"):
        raise ValueError(f"unknown simulation mode: {mode!r}")
    physical = mode == "physical"
    if not physical:
        if table is None:
            raise ValueError("table mode needs a success table")
        if table.n_ues != cfg.n_ues:
            raise ValueError(
                f"table was built for n_ues={table.n_ues}, scenario has {cfg.n_ues}"
            )
        table_arr = table.as_array()
    else:
        table_arr = np.zeros((3, 2, 1, 1, 2))

    mix = StrategyMix.from_config(cfg)
    p_fm, p_fr, p_b = mix.strategy_probs()
    link_pl, g2_f, g2_b, keep2_f, keep2_b, sigma_e_on = _physical_params(cfg)

    warmup = slots // 10
    traj_stride = max(1, slots // 512)
    core_seed = int(np.random.SeedSequence([seed]).generate_state(1)[0])
    fifo_cap = int(min(cfg.n_ues * slots + 1, _FIFO_CAP))
    trace_len = min(slots, _TRACE_CAP) if trace else 0

    out = _run_core(
        cfg.n_ues, slots, warmup, core_seed,
        cfg.q_u, p_fm, p_fr, p_b, cfg.q_r, int(math.ceil(cfg.d_a)),
        physical, table_arr,
        10.0 ** (cfg.p_t_dbm / 10.0), 10.0 ** (cfg.p_n_dbm / 10.0),
        10.0 ** (cfg.gamma_db / 10.0), cfg.alpha, cfg.beta,
        link_pl, g2_f, g2_b, keep2_f, keep2_b, sigma_e_on,
        fifo_cap, traj_stride, trace_len,
    )
    (error, delivered_total, deliveries_counted, delay_sum, delay_count,
     part_ue, part_align, part_queue, part_rtx,
     admissions_total, admissions_counted,
     relay_deliv_total, relay_deliv_counted,
     backlog_samples, empty_samples, qbar_sum, q_samples,
     tx_slots, sojourn_sum, sojourn_count, final_qsize,
     traj, trace_q, trace_align, trace_strat) = out

    if error == 1:
        raise RuntimeError(
            "relay FIFO exceeded its capacity; the configuration is deeply "
            "unstable for this horizon"
        )
    if error == 2:
        raise RuntimeError("simulation hit a scenario missing from the success table")

    measured = slots - warmup
    dc = max(delay_count, 1)
    result = SimResult(
        t_empirical=deliveries_counted / measured,
        d_empirical=delay_sum / dc if delay_count else 0.0,
        d_breakdown=DelayBreakdown(
            ue_tx=part_ue / dc, relay_tx=part_rtx / dc,
            queueing=part_queue / dc, alignment=part_align / dc,
        ),
        p_empty_empirical=empty_samples / max(q_samples, 1),
        q_bar_empirical=qbar_sum / max(q_samples, 1),
        lambda_empirical=admissions_counted / measured,
        mu_empirical=relay_deliv_counted / max(backlog_samples, 1),
        q_tx_empirical=tx_slots / (cfg.n_ues * slots),
        relay_sojourn_empirical=sojourn_sum / max(sojourn_count, 1),
        admissions=int(admissions_total),
        relay_deliveries=int(relay_deliv_total),
        final_queue_size=int(final_qsize),
        delivered=int(delivered_total),
        qsize_trajectory=traj,
        slots=slots,
        seed=seed,
        mode=mode,
        trace=SimTrace(trace_q, trace_align, trace_strat) if trace else None,
    )
    return result
