"""Poisson-point-process deployments on a disc window and nearest-BS association.

Basestations and mobile users (MUs) are sampled as independent homogeneous
PPPs.  The window is a disc whose radius is chosen so the expected BS count
equals ``window_mean_points``; the MU whose delay is measured (the "typical"
MU) sits at the disc center, which keeps it maximally far from the window
edge.  The edge bias of the finite window decays like exp(-lambda*pi*r^2/2),
so enlarging ``window_mean_points`` shrinks it exponentially.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, RequestError

__all__ = [
    "NetworkConfig",
    "NetworkRealization",
    "realization_rng",
    "sample_realization",
    "nearest_dist_cdf",
    "kth_nearest_pdf",
    "voronoi_neighbors",
]


@dataclass(frozen=True)
class NetworkConfig:
    """Physical parameters of one network scenario.

    bs_density / mu_density are points per m^2.  ``proc_gain`` scales the
    interference term of the SINR (1.0 means no suppression).  ``avg_power``
    is the per-BS average power budget that every transmission strategy must
    respect.  ``window_mean_points`` sets the expected BS count in the disc
    window and therefore the window radius.
    """

    bs_density: float
    mu_density: float
    pathloss_exp: float = 3.0
    sinr_threshold: float = 1.0
    proc_gain: float = 1.0
    noise: float = 1.0
    avg_power: float = 1.0
    antennas: int = 1
    window_mean_points: float = 200.0

    def __post_init__(self):
        if not self.bs_density > 0.0:
            raise ConfigError("bs_density must be positive")
        if self.mu_density < 0.0:
            raise ConfigError("mu_density must be nonnegative")
        if not self.pathloss_exp > 2.0:
            raise ConfigError("pathloss_exp must exceed 2")
        if not 0.0 < self.proc_gain <= 1.0:
            raise ConfigError("proc_gain must lie in (0, 1]")
        if self.noise < 0.0:
            raise ConfigError("noise must be nonnegative")
        if not self.avg_power > 0.0:
            raise ConfigError("avg_power must be positive")
        if self.sinr_threshold <= 0.0:
            raise ConfigError("sinr_threshold must be positive")
        if int(self.antennas) != self.antennas or self.antennas < 1:
            raise ConfigError("antennas must be an integer >= 1")
        if self.window_mean_points < 1.0:
            raise ConfigError("window_mean_points must be >= 1")

    @property
    def window_radius(self) -> float:
        """Disc radius giving the requested expected BS count."""
        return math.sqrt(self.window_mean_points / (self.bs_density * math.pi))


@dataclass
class NetworkRealization:
    """One sampled deployment, with the typical MU at the origin.

    ``mu_points[0]`` is the typical MU; ``association[i]`` is the index of
    the BS serving MU ``i`` (minimum distance, ties broken by lowest BS
    index).  ``typical_dk`` holds every BS-to-origin distance in increasing
    order, so ``typical_dk[k-1]`` is the k-th nearest BS distance.
    """

    bs_points: np.ndarray        # (n_bs, 2)
    mu_points: np.ndarray        # (n_mu, 2), row 0 = origin
    association: np.ndarray      # (n_mu,) int
    typical_d0: float
    typical_dk: np.ndarray       # (n_bs,) sorted distances to origin
    n0: int
    window_radius: float
    resample_count: int = 0

    @property
    def serving_index(self) -> int:
        return int(self.association[0])

    @property
    def n_bs(self) -> int:
        return self.bs_points.shape[0]

    def mu_counts(self) -> np.ndarray:
        """Number of associated MUs per BS (typical MU included)."""
        return np.bincount(self.association, minlength=self.n_bs)


def realization_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based stream for realization ``index`` of a run seeded by ``seed``.

    Streams for distinct indices are independent, and each is reproduced
    exactly whether realizations run serially or in parallel.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def _uniform_disc(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


def _associate(mu_points: np.ndarray, bs_points: np.ndarray) -> np.ndarray:
    # argmin over squared distances; argmin takes the first (lowest) index
    # on exact ties, which pins down the association deterministically.
    d2 = (
        np.sum(mu_points**2, axis=1)[:, None]
        - 2.0 * mu_points @ bs_points.T
        + np.sum(bs_points**2, axis=1)[None, :]
    )
    return np.argmin(d2, axis=1)


def sample_realization(cfg: NetworkConfig, seed: int, index: int = 0) -> NetworkRealization:
    """Sample one deployment; deterministic given (cfg, seed, index).

    BS count is Poisson with mean ``cfg.window_mean_points``; an all-empty
    draw is resampled (the number of retries is recorded).  BS and MU
    positions are uniform on the disc, and the typical MU is inserted at the
    origin without disturbing the rest of the MU process.
    """
    rng = seed if isinstance(seed, np.random.Generator) else realization_rng(seed, index)
    r = cfg.window_radius

    resamples = 0
    n_bs = int(rng.poisson(cfg.window_mean_points))
    while n_bs == 0:
        resamples += 1
        n_bs = int(rng.poisson(cfg.window_mean_points))
    bs_points = _uniform_disc(rng, n_bs, r)

    n_mu = int(rng.poisson(cfg.mu_density * math.pi * r * r))
    mu_points = np.vstack((np.zeros((1, 2)), _uniform_disc(rng, n_mu, r)))

    association = _associate(mu_points, bs_points)
    dists = np.hypot(bs_points[:, 0], bs_points[:, 1])
    order = np.sort(dists)
    serving = association[0]
    n0 = int(np.count_nonzero(association == serving))

    return NetworkRealization(
        bs_points=bs_points,
        mu_points=mu_points,
        association=association,
        typical_d0=float(dists[serving]),
        typical_dk=order,
        n0=n0,
        window_radius=r,
        resample_count=resamples,
    )


def nearest_dist_cdf(lam: float, y) -> float:
    """CDF of the nearest-BS distance: P(d0 <= y) = 1 - exp(-lambda*pi*y^2)."""
    if lam <= 0.0:
        raise ConfigError("density must be positive")
    y = np.asarray(y, dtype=float)
    if np.any(y < 0.0):
        raise RequestError("distance must be nonnegative")
    out = -np.expm1(-lam * np.pi * y * y)
    return float(out) if out.ndim == 0 else out

def kth_nearest_pdf(lam: float, k: int, y) -> float:
    """PDF of the k-th nearest BS distance.

    f_k(y) = 2 (lambda*pi)^k y^(2k-1) exp(-lambda*pi*y^2) / (k-1)!
    """
    if lam <= 0.0:
        raise ConfigError("density must be positive")
    if int(k) != k or k < 1:
        raise RequestError("k must be an integer >= 1")
    y = np.asarray(y, dtype=float)
    if np.any(y < 0.0):
        raise RequestError("distance must be nonnegative")
    a = lam * np.pi
    # evaluate in log space so large k / large y do not overflow
    logy = np.log(y, where=y > 0, out=np.full_like(y, -np.inf))
    log_pdf = math.log(2.0) + k * math.log(a) + (2 * k - 1) * logy - a * y * y - math.lgamma(k)
    out = np.where(y > 0, np.exp(log_pdf), 0.0)
    return float(out) if out.ndim == 0 else out


def voronoi_neighbors(real: NetworkRealization, k: int) -> list[int]:
    """Indices of the k BSs nearest the origin, by distance then index."""
    if int(k) != k or k < 0:
        raise RequestError("k must be a nonnegative integer")
    if k > real.n_bs:
        raise RequestError(f"requested {k} neighbors but realization has {real.n_bs} BSs")
    d = np.hypot(real.bs_points[:, 0], real.bs_points[:, 1])
    idx = np.lexsort((np.arange(real.n_bs), d))
    return [int(i) for i in idx[:k]]
