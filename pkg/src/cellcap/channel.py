"""Path loss, fading distributions, and single-slot SINR evaluation.

The path-loss law is the non-amplifying min{1, d^-alpha}; the amplifying
d^-alpha variant exists only to reproduce the density-independent one-shot
connection probability that the clamped law breaks.

Every fading model here is a gamma distribution:

    exp_unit          Gamma(1, 1)   unit-mean Rayleigh power gain
    stronger_scalar   Gamma(2, 1)   pdf x*exp(-x), dominates exp_unit
    chisq_2N          Gamma(N, 1)   beamforming gain of N antennas
    stronger_vector_N Gamma(2, N)   pdf x*exp(-x/N)/N^2 (the 1/N^2 makes it
                                    integrate to one)

so sampling, CDFs, and conditional tail draws all route through the
regularized incomplete gamma functions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConfigError, RequestError
from .geometry import NetworkConfig, NetworkRealization, realization_rng

__all__ = [
    "FadingModel",
    "SlotOutcome",
    "pathloss",
    "draw_fading",
    "compute_sinr",
    "one_shot_connection_prob",
]

_FADING_KINDS = ("exp_unit", "stronger_scalar", "chisq_2N", "stronger_vector_N")

# substitute for an infinite gain when the amplifying law is evaluated at d=0
AMPLIFYING_GAIN_CAP = 1e30


@dataclass(frozen=True)
class FadingModel:
    """A named power-gain distribution; ``n_ant`` only matters for the
    antenna-indexed kinds."""

    kind: str = "exp_unit"
    n_ant: int = 1

    def __post_init__(self):
        if self.kind not in _FADING_KINDS:
            raise ConfigError(f"unknown fading kind {self.kind!r}")
        if int(self.n_ant) != self.n_ant or self.n_ant < 1:
            raise ConfigError("n_ant must be an integer >= 1")

    @property
    def gamma_shape(self) -> float:
        return {"exp_unit": 1.0, "stronger_scalar": 2.0,
                "chisq_2N": float(self.n_ant), "stronger_vector_N": 2.0}[self.kind]

    @property
    def gamma_scale(self) -> float:
        return float(self.n_ant) if self.kind == "stronger_vector_N" else 1.0

    def mean(self) -> float:
        return self.gamma_shape * self.gamma_scale

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        if self.kind == "exp_unit":
            return rng.exponential(size=size)
        return rng.gamma(self.gamma_shape, self.gamma_scale, size=size)

    def cdf(self, x) -> np.ndarray:
        return special.gammainc(self.gamma_shape, np.asarray(x, dtype=float) / self.gamma_scale)

    def tail(self, x) -> np.ndarray:
        """P(h >= x)."""
        return special.gammaincc(self.gamma_shape, np.asarray(x, dtype=float) / self.gamma_scale)

    def ppf(self, u) -> np.ndarray:
        """Quantile function; monotone coupling device for matched-seed runs."""
        if self.kind == "exp_unit":
            return -np.log1p(-np.asarray(u, dtype=float))
        return self.gamma_scale * special.gammaincinv(self.gamma_shape, u)

    def tail_ppf(self, u, threshold: float) -> np.ndarray:
        """Quantiles of h conditioned on h >= threshold (exact, no rejection)."""
        q = special.gammaincc(self.gamma_shape, threshold / self.gamma_scale)
        return self.gamma_scale * special.gammainccinv(self.gamma_shape, np.asarray(u) * q)


def pathloss(d, alpha: float, amplifying: bool = False):
    """Distance gain: min{1, d^-alpha}, or the unclamped d^-alpha variant.

    The amplifying variant at d=0 returns a large finite cap (with a warning)
    instead of infinity.
    """
    if not alpha > 2.0:
        raise ConfigError("pathloss exponent must exceed 2")
    d = np.asarray(d, dtype=float)
    if np.any(d < 0.0):
        raise RequestError("distance must be nonnegative")
    with np.errstate(divide="ignore", over="ignore"):
        g = d ** (-alpha)
    if amplifying:
        if np.any(d == 0.0):
            warnings.warn("amplifying path loss at zero distance capped", RuntimeWarning)
            g = np.where(d == 0.0, AMPLIFYING_GAIN_CAP, g)
        g = np.minimum(g, AMPLIFYING_GAIN_CAP)
    else:
        g = np.minimum(1.0, g)
    return float(g) if g.ndim == 0 else g


def draw_fading(model: FadingModel, rng: np.random.Generator, size=None):
    """I.i.d. draw(s) from the named fading distribution."""
    out = model.sample(rng, size=size)
    return float(out) if size is None else out


@dataclass(frozen=True)
class SlotOutcome:
    """SINR bookkeeping for one slot of the typical link.

    ``success`` means the serving BS transmitted and the SINR reached the
    decoding threshold (>=, matching the delay definition
    D = min{t : SINR(t) >= beta}).
    """

    signal_power: float
    interference: float
    sinr: float
    success: bool
    transmitted: bool


def compute_sinr(
    real: NetworkRealization,
    decisions: tuple[np.ndarray, np.ndarray],
    fading: np.ndarray,
    cfg: NetworkConfig,
    silenced=(),
) -> SlotOutcome:
    """Evaluate one slot of the typical link on an explicit deployment.

    ``decisions`` is ``(transmit, power)``, one entry per BS; ``fading`` holds
    each BS's power gain toward the typical MU.  ``silenced`` BSs are muted
    (coordination); the serving BS may not be silenced.  This is the direct,
    scalar-sum reference used to validate the batched simulator.
    """
    transmit, power = decisions
    transmit = np.asarray(transmit, dtype=bool)
    power = np.asarray(power, dtype=float)
    fading = np.asarray(fading, dtype=float)
    serving = real.serving_index
    silenced = frozenset(int(i) for i in silenced)
    if serving in silenced:
        raise RequestError("the serving BS cannot be silenced")

    alpha = cfg.pathloss_exp
    dists = np.hypot(real.bs_points[:, 0], real.bs_points[:, 1])
    gains = pathloss(dists, alpha)

    mask = transmit.copy()
    mask[serving] = False
    if silenced:
        mask[list(silenced)] = False
    interference = float(np.sum(power[mask] * fading[mask] * gains[mask]))

    transmitted = bool(transmit[serving])
    signal = power[serving] * fading[serving] * pathloss(real.typical_d0, alpha) if transmitted else 0.0
    denom = cfg.proc_gain * interference + cfg.noise
    if not transmitted:
        sinr = 0.0
    elif denom > 0.0:
        sinr = signal / denom
    else:
        sinr = math.inf if signal > 0.0 else 0.0
    success = transmitted and sinr >= cfg.sinr_threshold
    return SlotOutcome(
        signal_power=float(signal),
        interference=interference,
        sinr=float(sinr),
        success=bool(success),
        transmitted=transmitted,
    )


def one_shot_connection_prob(
    cfg: NetworkConfig,
    amplifying: bool,
    n_real: int,
    seed: int = 0,
) -> float:
    """Monte Carlo estimate of P(SINR >= beta) for a single slot.

    Every BS transmits at the average power budget (no thinning), each link
    sees unit-mean exponential fading, and the typical MU connects to its
    nearest BS.  With the amplifying law and zero noise this probability is
    density-free; the clamped law breaks that.
    """
    if n_real < 1:
        raise RequestError("n_real must be >= 1")
    rng = realization_rng(seed, 0)
    r = cfg.window_radius
    m = cfg.avg_power
    beta = cfg.sinr_threshold
    successes = 0
    for _ in range(n_real):
        n_bs = int(rng.poisson(cfg.window_mean_points))
        while n_bs == 0:
            n_bs = int(rng.poisson(cfg.window_mean_points))
        radius = r * np.sqrt(rng.random(n_bs))
        h = rng.exponential(size=n_bs)
        gains = pathloss(radius, cfg.pathloss_exp, amplifying=amplifying)
        s = int(np.argmin(radius))
        signal = m * h[s] * gains[s]
        interference = float(np.sum(m * h * gains)) - m * h[s] * gains[s]
        if signal >= beta * (cfg.proc_gain * interference + cfg.noise):
            successes += 1
    return successes / n_real
