"""Time-slotted ARQ Monte Carlo: delay of the typical MU across deployments.

The quantity measured is D = min{t : SINR(t) >= beta} for the MU at the
origin, censored at ``max_slots``.  Given a deployment, the per-slot inputs
(interferer MU choices, transmit decisions, fading) are i.i.d. across slots,
and a slot in which the serving BS stays silent can never succeed, so the
engine draws the geometric gap to the next serving attempt and simulates
interference only in attempt slots.  This is exact in distribution and makes
large censoring horizons cheap when the serving BS transmits rarely.

Draw order within a realization is fixed and never depends on the silencing
set or the antenna count, so matched-seed runs of different coordination or
antenna settings are coupled slot-by-slot (used by the monotonicity checks).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .channel import FadingModel, pathloss
from .errors import ConfigError, RequestError
from .geometry import (
    NetworkConfig,
    NetworkRealization,
    realization_rng,
    sample_realization,
)
from .strategies import (
    CsitThreshold,
    DistanceAloha,
    Strategy,
    mu_distance_menus,
    prepare_interferers,
    serving_kernel,
)

__all__ = [
    "SimScenario",
    "DelayStats",
    "simulate_delay",
    "simulate_enhanced_lb_network",
    "simulate_multiantenna",
    "simulate_fixed_deployment",
    "finite_r_capacity",
    "slot_interference_samples",
]

_FIRST_BLOCK = 16
_MAX_BLOCK = 4096
_MIN_ATTEMPT_PROB = 1e-12   # below this a horizon of <= 1e9 slots censors surely


@dataclass(frozen=True)
class SimScenario:
    """One simulation setup: deployment parameters, strategy, and horizon.

    ``coordination_k`` mutes the k nearest non-serving BSs (the serving BS is
    never muted).  ``enhanced_mode`` applies the delay-reducing relaxations
    used by the interference-regime lower bound: unit path gain on the
    typical link, no noise, unit own-link gain for every interferer (their
    decisions then depend on own fading only).
    """

    cfg: NetworkConfig
    strategy: Strategy
    coordination_k: int = 0
    enhanced_mode: bool = False
    max_slots: int = 10_000
    n_realizations: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if int(self.max_slots) != self.max_slots or self.max_slots < 1:
            raise ConfigError("max_slots must be an integer >= 1")
        if int(self.n_realizations) != self.n_realizations or self.n_realizations < 1:
            raise ConfigError("n_realizations must be an integer >= 1")
        if int(self.coordination_k) != self.coordination_k or self.coordination_k < 0:
            raise ConfigError("coordination_k must be a nonnegative integer")
        if self.coordination_k >= self.cfg.window_mean_points:
            raise ConfigError("coordination_k must stay below the window BS count")
        m = getattr(self.strategy, "avg_power", None)
        if m is not None and not math.isclose(m, self.cfg.avg_power, rel_tol=1e-12):
            raise ConfigError("strategy avg_power disagrees with the network config")
        if isinstance(self.strategy, CsitThreshold) and self.strategy.target is not None:
            expect = self.cfg.proc_gain * self.cfg.sinr_threshold
            if not math.isclose(self.strategy.target, expect, rel_tol=1e-12):
                raise ConfigError("csit target disagrees with proc_gain*sinr_threshold")
        if self.enhanced_mode and isinstance(self.strategy, DistanceAloha):
            raise ConfigError("enhanced_mode is undefined for raw-distance rules")


@dataclass
class DelayStats:
    """Censored delay statistics over one batch of realizations.

    ``survival[t-1]`` estimates P(D > t) for t = 1..tmax; the last entry is
    the censored fraction.  ``mean_censored`` is the mean of min(D, tmax),
    never an extrapolation.  Capacity figures are the plug-in estimates
    1/E{D} (per BS), lambda/E{D} (network), 1/(n0*E{D}) (per MU).
    """

    n: int
    censored_count: int
    mean_censored: float
    survival: np.ndarray
    ci_halfwidth: float
    capacity_per_bs: float
    capacity_network: float
    capacity_per_mu: float
    eta_measured: float
    mean_n0: float
    tmax: int

    def survival_at(self, t: int) -> float:
        """P(D > t) for an integer 1 <= t <= tmax."""
        if int(t) != t or not 1 <= t <= self.tmax:
            raise RequestError("t must be an integer in [1, tmax]")
        return float(self.survival[int(t) - 1])

    def mean_censored_at(self, horizon: int) -> float:
        """Mean of min(D, horizon) for any horizon <= tmax."""
        if int(horizon) != horizon or not 1 <= horizon <= self.tmax:
            raise RequestError("horizon must be an integer in [1, tmax]")
        return float(1.0 + np.sum(self.survival[: int(horizon) - 1]))


def finite_r_capacity(stats: DelayStats, r_cap: int, lam: float) -> float:
    """Throughput under a retransmission cap: lambda * P(D <= R) / E{min(D, R)}."""
    if int(r_cap) != r_cap or r_cap < 1:
        raise RequestError("retransmission cap must be an integer >= 1")
    if r_cap > stats.tmax:
        raise RequestError("retransmission cap exceeds the simulated horizon")
    p_s = 1.0 - stats.survival_at(r_cap)
    return lam * p_s / stats.mean_censored_at(r_cap)


# --------------------------------------------------------------------------
# engine


class _DeploymentRun:
    """Per-realization state: kept/silenced interferers, kernels, menus."""

    def __init__(self, real: NetworkRealization, scn: SimScenario):
        cfg = scn.cfg
        self.real = real
        self.beta = cfg.sinr_threshold
        self.gamma = cfg.proc_gain
        self.noise = 0.0 if scn.enhanced_mode else cfg.noise
        target = cfg.proc_gain * cfg.sinr_threshold
        net_fading = (
            FadingModel("chisq_2N", cfg.antennas) if cfg.antennas > 1 else FadingModel("exp_unit")
        )

        serving = real.serving_index
        dists = np.hypot(real.bs_points[:, 0], real.bs_points[:, 1])
        counts = real.mu_counts()

        # candidates: active non-serving BSs; the silencing set is the k
        # nearest non-serving BSs by distance (ties by index), applied as a
        # mask so draws are identical across coordination settings
        cand = np.flatnonzero((np.arange(real.n_bs) != serving) & (counts > 0))
        order = np.lexsort((np.arange(real.n_bs), dists))
        k_eff = min(scn.coordination_k, real.n_bs - 1)
        silenced = set(int(i) for i in order[1 : 1 + k_eff])
        self.keep = np.array([int(z) not in silenced for z in cand], dtype=bool)
        self.n_keep = int(np.count_nonzero(self.keep))
        self.cand = cand
        self.ell_cross = pathloss(dists[cand], cfg.pathloss_exp)

        flat, offsets, menu_counts = mu_distance_menus(real)
        if scn.enhanced_mode:
            menu_ell = np.ones_like(flat)
        else:
            menu_ell = pathloss(flat, cfg.pathloss_exp)
        self.kernel = prepare_interferers(scn.strategy, flat, menu_ell, target, net_fading)
        self.menu_off = offsets[cand]
        self.menu_cnt = menu_counts[cand]

        ell_d0 = 1.0 if scn.enhanced_mode else pathloss(real.typical_d0, cfg.pathloss_exp)
        self.serving = serving_kernel(scn.strategy, real.typical_d0, ell_d0, target, net_fading)

    def interference_block(self, n_slots: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
        """Interference seen in ``n_slots`` i.i.d. slots; also returns the
        number of transmissions among kept interferers (for eta)."""
        n_cand = self.cand.size
        shape = (n_cand, n_slots)
        if n_cand == 0:
            return np.zeros(n_slots), 0
        if self.kernel.needs_menu:
            u = rng.random(shape)
            idx = self.menu_off[:, None] + (u * self.menu_cnt[:, None]).astype(np.int64)
        else:
            idx = None
        transmit, power = self.kernel.decide(idx, shape, rng)
        h = rng.exponential(size=shape)
        contrib = np.where(transmit & self.keep[:, None], power, 0.0) * h * self.ell_cross[:, None]
        tx = int(np.count_nonzero(transmit[self.keep]))
        return contrib.sum(axis=0), tx


def _run_delay(run: _DeploymentRun, max_slots: int, rng: np.random.Generator):
    """One ARQ delay on a prepared deployment.

    Returns (recorded_delay, censored, tx_count, op_count): recorded delay is
    min(D, max_slots); eta counters cover every simulated attempt slot.
    """
    p_att = run.serving.attempt_prob
    tx_total = 0
    op_total = 0
    if p_att < _MIN_ATTEMPT_PROB:
        return max_slots, True, 0, 0
    base = 0
    block = _FIRST_BLOCK
    beta, gamma, noise = run.beta, run.gamma, run.noise
    while True:
        gaps = rng.geometric(p_att, block)
        cum = base + np.cumsum(gaps)
        u0 = rng.random(block)
        interf, tx = run.interference_block(block, rng)
        tx_total += tx
        op_total += run.n_keep * block
        signal = run.serving.signal_from_uniforms(u0)
        success = signal >= beta * (gamma * interf + noise)
        hits = np.flatnonzero(success)
        if hits.size:
            delay = int(cum[hits[0]])
            if delay <= max_slots:
                return delay, False, tx_total, op_total
            return max_slots, True, tx_total, op_total
        if int(cum[-1]) >= max_slots:
            return max_slots, True, tx_total, op_total
        base = int(cum[-1])
        block = min(block * 2, _MAX_BLOCK)


def _aggregate(scn: SimScenario, delays, censored, n0s, tx, ops) -> DelayStats:
    delays = np.asarray(delays, dtype=np.int64)
    censored = np.asarray(censored, dtype=bool)
    n = delays.size
    tmax = int(scn.max_slots)

    hist = np.bincount(delays[~censored], minlength=tmax + 1)
    below = np.cumsum(hist[1:])            # count of uncensored D <= t, t = 1..tmax
    survival = (n - below) / n

    total = int(delays.sum())
    total_sq = int((delays.astype(object) ** 2).sum()) if tmax > 3_000_000 else int(np.sum(delays * delays))
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * (n / max(n - 1, 1))
    ci = 1.96 * math.sqrt(var / n)

    mean_n0 = float(np.sum(n0s)) / n
    eta = (tx / ops) if ops > 0 else float("nan")
    lam = scn.cfg.bs_density
    return DelayStats(
        n=n,
        censored_count=int(np.count_nonzero(censored)),
        mean_censored=mean,
        survival=survival,
        ci_halfwidth=ci,
        capacity_per_bs=1.0 / mean,
        capacity_network=lam / mean,
        capacity_per_mu=1.0 / (mean_n0 * mean),
        eta_measured=eta,
        mean_n0=mean_n0,
        tmax=tmax,
    )


def simulate_delay(scn: SimScenario) -> DelayStats:
    """Monte Carlo of the typical-MU ARQ delay over fresh deployments.

    Realization ``i`` consumes only its own counter-based stream
    (seed, i), so results are bitwise reproducible regardless of execution
    order.
    """
    delays = np.empty(scn.n_realizations, dtype=np.int64)
    cens = np.empty(scn.n_realizations, dtype=bool)
    n0s = np.empty(scn.n_realizations, dtype=np.int64)
    tx_total = 0
    op_total = 0
    for i in range(scn.n_realizations):
        rng = realization_rng(scn.seed, i)
        real = sample_realization(scn.cfg, rng)
        run = _DeploymentRun(real, scn)
        d, c, tx, ops = _run_delay(run, scn.max_slots, rng)
        delays[i], cens[i], n0s[i] = d, c, real.n0
        tx_total += tx
        op_total += ops
    return _aggregate(scn, delays, cens, n0s, tx_total, op_total)


def simulate_fixed_deployment(scn: SimScenario, real: NetworkRealization) -> DelayStats:
    """Like ``simulate_delay`` but every delay run reuses one deployment.

    Conditioned on the deployment the per-slot success events are i.i.d., so
    the delay here is exactly geometric; tests use this as the oracle
    fixture.
    """
    run_proto = _DeploymentRun(real, scn)
    delays = np.empty(scn.n_realizations, dtype=np.int64)
    cens = np.empty(scn.n_realizations, dtype=bool)
    tx_total = 0
    op_total = 0
    for i in range(scn.n_realizations):
        rng = realization_rng(scn.seed, i)
        d, c, tx, ops = _run_delay(run_proto, scn.max_slots, rng)
        delays[i], cens[i] = d, c
        tx_total += tx
        op_total += ops
    n0s = np.full(scn.n_realizations, real.n0, dtype=np.int64)
    return _aggregate(scn, delays, cens, n0s, tx_total, op_total)


def simulate_enhanced_lb_network(scn: SimScenario) -> DelayStats:
    """Delay of the relaxed network used to sandwich the interference-regime
    lower bound; requires ``enhanced_mode`` on the scenario."""
    if not scn.enhanced_mode:
        raise ConfigError("scenario must set enhanced_mode")
    return simulate_delay(scn)


def simulate_multiantenna(scn: SimScenario, n_ant: int) -> DelayStats:
    """Delay with an N-antenna beamforming serving link.

    Only the serving-link gain changes (to the 2N-degree chi-square family
    with mean N); interferer links keep unit-mean exponential fading.
    ``n_ant=1`` coincides in distribution with ``simulate_delay``.
    """
    if int(n_ant) != n_ant or n_ant < 1:
        raise ConfigError("n_ant must be an integer >= 1")
    new_cfg = dataclasses.replace(scn.cfg, antennas=int(n_ant))
    return simulate_delay(dataclasses.replace(scn, cfg=new_cfg))


def slot_interference_samples(
    real: NetworkRealization,
    scn: SimScenario,
    n_slots: int,
    seed: int = 0,
    fixed_assignment: dict[int, float] | None = None,
) -> np.ndarray:
    """I.i.d. per-slot interference at the typical MU on a fixed deployment.

    With ``fixed_assignment`` (BS index -> served-MU distance) the MU choice
    is frozen and only decisions and fading are redrawn, which is the
    conditioning used by the per-BS Laplace product identity.  Draws do not
    depend on ``coordination_k``, so matched seeds give slot-by-slot
    comparable samples across silencing levels.
    """
    if fixed_assignment is not None:
        real = _frozen_assignment_realization(real, fixed_assignment)
    run = _DeploymentRun(real, scn)
    rng = realization_rng(seed, 0)
    out = np.empty(n_slots)
    done = 0
    while done < n_slots:
        block = min(8192, n_slots - done)
        interf, _ = run.interference_block(block, rng)
        out[done : done + block] = interf
        done += block
    return out


def _frozen_assignment_realization(
    real: NetworkRealization, assignment: dict[int, float]
) -> NetworkRealization:
    """Rebuild a deployment whose every interferer serves one pinned MU."""
    serving = real.serving_index
    mu_pts = [np.zeros(2)]
    assoc = [serving]
    for z, dist in sorted(assignment.items()):
        if z == serving:
            raise RequestError("the serving BS takes no interferer assignment")
        mu_pts.append(real.bs_points[z] + np.array([dist, 0.0]))
        assoc.append(z)
    return NetworkRealization(
        bs_points=real.bs_points,
        mu_points=np.vstack(mu_pts),
        association=np.asarray(assoc, dtype=np.int64),
        typical_d0=real.typical_d0,
        typical_dk=real.typical_dk,
        n0=1,
        window_radius=real.window_radius,
    )
