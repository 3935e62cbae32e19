"""Scenario configuration for the relay-assisted mm-wave access network.

A scenario is one cell: N saturated user terminals, a single full-duplex
decode-and-forward relay with an infinite FIFO, and one mm-wave access
point. Users sit (statistically) at distance ``d_ud`` from the AP and
``d_ur`` from the relay, with ``theta_rd`` the angular separation of the
two paths as seen from a user. All angles are radians, distances metres,
powers dBm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace


class ConfigError(ValueError):
    """A scenario parameter is out of range.

    ``field_name`` identifies the offending parameter so callers (the CLI
    in particular) can point at the exact key that failed.
    """

    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class SceneConfig:
    # Topology
    n_ues: int = 10           # number of saturated users
    d_ud: float = 50.0        # user to AP ground distance, m
    d_ur: float = 30.0        # user to relay ground distance, m
    theta_rd: float = math.pi / 3   # AP-user-relay separation angle, rad, in (0, pi]

    # Antennas
    theta_bw_f: float = math.radians(5.0)   # beamwidth of a directed (FD) transmission
    theta_bw_b: float | None = None         # broadcast beamwidth; defaults to theta_rd

    # Radio
    fc_ghz: float = 30.0
    h_ap: float = 10.0
    h_ue: float = 1.5
    p_t_dbm: float = 24.0
    p_n_dbm: float = -80.0
    gamma_db: float = 10.0    # SINR decoding threshold
    alpha: float = 0.1        # residual fraction of interfering power after cancellation
    beta: float = 0.0         # residual self-interference fraction at the relay
    sigma_e_deg: float = 0.0  # beam pointing error std dev, degrees (0 = perfect)

    # Access policy
    q_u: float = 0.1          # per-slot transmit intent probability of a user
    q_uf: float = 0.5         # P(directed | transmitting); 1 - q_uf broadcasts
    q_ur: float = 0.5         # P(aim at relay | directed)
    q_r: float = 1.0          # relay transmit probability when backlogged
    d_a: float = 0.0          # beam alignment duration in slots (real; simulator ceils)

    # Numerics
    n_shadow_samples: int = 100_000   # Monte-Carlo draws per interference assignment

    def __post_init__(self):
        if self.theta_bw_b is None:
            object.__setattr__(self, "theta_bw_b", self.theta_rd)
        self._validate()

    def _validate(self):
        if not isinstance(self.n_ues, int) or self.n_ues < 1:
            raise ConfigError("n_ues", "must be an integer >= 1")
        if not isinstance(self.n_shadow_samples, int) or self.n_shadow_samples < 1:
            raise ConfigError("n_shadow_samples", "must be an integer >= 1")
        for name in ("d_ud", "d_ur", "fc_ghz"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be positive")
        if not 0.0 < self.theta_rd <= math.pi:
            raise ConfigError("theta_rd", "must lie in (0, pi]")
        for name in ("theta_bw_f", "theta_bw_b"):
            if not 0.0 < getattr(self, name) <= 2.0 * math.pi:
                raise ConfigError(name, "must lie in (0, 2*pi]")
        if self.theta_bw_f > self.theta_bw_b:
            raise ConfigError("theta_bw_f", "cannot exceed the broadcast beamwidth theta_bw_b")
        if not self.h_ue > 0:
            raise ConfigError("h_ue", "must be positive")
        if self.h_ap < self.h_ue:
            raise ConfigError("h_ap", "must be at least h_ue")
        for name in ("q_u", "q_uf", "q_ur", "q_r", "alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(name, "must lie in [0, 1]")
        if self.sigma_e_deg < 0:
            raise ConfigError("sigma_e_deg", "must be non-negative")
        if self.d_a < 0:
            raise ConfigError("d_a", "must be non-negative")
        for name in ("p_t_dbm", "p_n_dbm", "gamma_db"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(name, "must be finite")

    def with_updates(self, **updates) -> "SceneConfig":
        """Return a copy with the given fields replaced (and re-validated).

        The coupled default survives updates: if ``theta_bw_b`` currently
        tracks ``theta_rd`` and only the latter changes, the broadcast
        beamwidth follows it to the new value.
        """
        bad = set(updates) - {f.name for f in fields(self)}
        if bad:
            raise ConfigError(sorted(bad)[0], "unknown parameter")
        if ("theta_rd" in updates and "theta_bw_b" not in updates
                and self.theta_bw_b == self.theta_rd):
            updates["theta_bw_b"] = None
        return replace(self, **updates)
