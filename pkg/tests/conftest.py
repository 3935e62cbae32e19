"""Shared fixtures: synthetic success tables and cached channel builds."""

from __future__ import annotations

import pytest

from mmrelay.channel import LINK_INDEX, SCHEME_INDEX, SuccessTable, build_success_table
from mmrelay.config import SceneConfig
from mmrelay.channel import channel_fingerprint

_REAL_TABLES: dict[str, SuccessTable] = {}


def make_synthetic_table(n_ues: int, strength: float = 0.85,
                         decay: float = 0.88) -> SuccessTable:
    """A plausible table: per-link/scheme base rate, geometric crowd penalty."""

    def prob(sc):
        li = LINK_INDEX[sc.link]
        si = SCHEME_INDEX[sc.scheme]
        crowd = (sc.n_fd_interferers + 2 * sc.n_br_interferers
                 + (1 if sc.relay_active else 0))
        base = strength * (0.9 if si else 1.0) * (1.05 if li == 2 else 1.0)
        return min(1.0, base) * decay ** crowd

    return SuccessTable.from_probability_fn(n_ues, prob)


@pytest.fixture
def synthetic_table():
    return make_synthetic_table


@pytest.fixture(scope="session")
def real_table():
    """Session-memoized estimator runs keyed by the channel fingerprint."""

    def build(cfg: SceneConfig, seed: int = 0) -> SuccessTable:
        key = channel_fingerprint(cfg) + f":{seed}"
        if key not in _REAL_TABLES:
            _REAL_TABLES[key] = build_success_table(cfg, seed=seed)
        return _REAL_TABLES[key]

    return build
