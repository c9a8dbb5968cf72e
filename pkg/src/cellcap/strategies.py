"""Per-slot transmission rules: (transmit probability, power) for each BS.

Every variant respects the average power budget M: ALOHA variants keep
p*P <= M, the distance-inverting power control keeps p*P = M exactly, and
the fading-threshold rule spends exactly M through its power integral.
``tau_floor`` is the constant tau >= 1 bounding p*P from below by M/tau.

The scalar ``decide`` is the contract surface; the ``_Prepared*`` kernels
are the batched equivalents the slot engine uses (one realization at a
time, arrays of shape (n_bs, n_slots)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import special

from .channel import FadingModel, pathloss
from .errors import ConfigError, RequestError
from .geometry import NetworkRealization

__all__ = [
    "PureAloha",
    "DistanceAloha",
    "PowerControl",
    "CsitThreshold",
    "Strategy",
    "ThresholdPolicy",
    "decide",
    "solve_threshold",
    "success_prob_threshold",
    "interferer_assignment",
]

_POWER_TOL = 1e-9


@dataclass(frozen=True)
class ThresholdPolicy:
    """Channel-inverting rule: transmit iff h >= delta, with power
    target / (ell_d * h), so the received signal is exactly ``target``."""

    delta: float
    target: float
    fading: FadingModel

    def transmit_prob(self) -> float:
        return float(self.fading.tail(self.delta))


def _inv_exp1(y):
    """Solve E1(delta) = y for delta > 0, elementwise.

    Log-space bisection to bracket, then Newton (d/d(delta) ln E1 =
    -exp(-delta)/(delta*E1)).  Accurate to ~1e-14 relative over the full
    double range; y above E1(1e-300) clamps to ~0.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0.0):
        raise RequestError("exponential-integral inverse needs a positive target")
    lo = np.full(y.shape, math.log(1e-300))
    hi = np.full(y.shape, math.log(700.0))
    for _ in range(20):
        mid = 0.5 * (lo + hi)
        too_big = special.exp1(np.exp(mid)) > y
        lo = np.where(too_big, mid, lo)
        hi = np.where(too_big, hi, mid)
    d = np.exp(0.5 * (lo + hi))
    for _ in range(8):
        e1 = np.maximum(special.exp1(d), 1e-308)
        step = (np.log(e1) - np.log(y)) * d * np.exp(d) * e1
        d = np.clip(d + step, 1e-300, 700.0)
    return d if d.ndim else float(d)


def solve_threshold(
    m: float,
    beta: float,
    gamma: float,
    ell_d: float,
    fading: FadingModel,
):
    """Fading cutoff delta making the inverting rule spend exactly M.

    The budget equation is (gamma*beta/ell_d) * J(delta) = M with
    J(delta) = E{ 1[h >= delta] / h }.  For a Gamma(shape k, scale s) gain,
    J(delta) = Q_{k-1}(delta/s) / (s*(k-1)) for k > 1, and E1(delta) for
    k = 1.  Returns 0.0 when even delta = 0 stays within budget (the
    zero-outage regime); noise-limited callers should fold the noise level
    into ``beta`` beforehand.
    """
    if m <= 0.0 or beta <= 0.0 or gamma <= 0.0:
        raise ConfigError("m, beta, gamma must be positive")
    ell = np.asarray(ell_d, dtype=float)
    if np.any(ell <= 0.0):
        raise ConfigError("ell_d must be positive")
    target = m * ell / (gamma * beta)

    shape, scale = fading.gamma_shape, fading.gamma_scale
    if shape == 1.0:
        out = _inv_exp1(target)
    else:
        j0 = 1.0 / (scale * (shape - 1.0))
        t = np.minimum(target / j0, 1.0)
        out = np.where(t >= 1.0, 0.0, scale * special.gammainccinv(shape - 1.0, t))
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


def success_prob_threshold(delta: float, fading: FadingModel) -> float:
    """P(h >= delta): the per-attempt success probability of the inverting
    rule when nothing but own fading can cause an outage."""
    if delta < 0.0:
        raise RequestError("delta must be nonnegative")
    return float(fading.tail(delta))


# --------------------------------------------------------------------------
# strategy variants


@dataclass(frozen=True)
class PureAloha:
    """Transmit with fixed probability p and fixed power P, blind to distance."""

    p: float
    power: float
    avg_power: float = 1.0
    tau_floor: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ConfigError("aloha transmit probability must lie in (0, 1]")
        if self.power <= 0.0 or self.avg_power <= 0.0:
            raise ConfigError("powers must be positive")
        if self.tau_floor < 1.0:
            raise ConfigError("tau_floor must be >= 1")
        pp = self.p * self.power
        if pp > self.avg_power * (1.0 + _POWER_TOL):
            raise ConfigError("p*P exceeds the average power budget")
        if pp < self.avg_power / self.tau_floor * (1.0 - _POWER_TOL):
            raise ConfigError("p*P falls below avg_power/tau_floor")


@dataclass(frozen=True)
class DistanceAloha:
    """ALOHA whose probability and power may depend on the serving distance.

    ``p_fn`` and ``power_fn`` must accept numpy arrays.  The budget
    p(d)*P(d) <= M is checked at every evaluation.
    """

    p_fn: Callable
    power_fn: Callable
    avg_power: float = 1.0
    tau_floor: float = 1.0

    def params_at(self, d):
        p = np.asarray(self.p_fn(np.asarray(d, dtype=float)), dtype=float)
        pw = np.asarray(self.power_fn(np.asarray(d, dtype=float)), dtype=float)
        if np.any(p <= 0.0) or np.any(p > 1.0) or np.any(pw <= 0.0):
            raise ConfigError("distance_aloha produced an invalid (p, P) pair")
        if np.any(p * pw > self.avg_power * (1.0 + _POWER_TOL)):
            raise ConfigError("distance_aloha violates the average power budget")
        return p, pw


@dataclass(frozen=True)
class PowerControl:
    """Invert the path loss: P = c/ell(d) with c = M/(1-eps), p = M/P.

    p*P = M identically, and p = (1-eps)*ell(d) <= 1-eps since ell <= 1.
    """

    eps: float
    avg_power: float = 1.0
    tau_floor: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ConfigError("eps must lie in (0, 1)")
        if self.avg_power <= 0.0:
            raise ConfigError("avg_power must be positive")

    @property
    def boost(self) -> float:
        """The constant c = M/(1-eps)."""
        return self.avg_power / (1.0 - self.eps)

    def params_at_ell(self, ell):
        ell = np.asarray(ell, dtype=float)
        power = self.boost / ell
        return self.avg_power / power, power


@dataclass(frozen=True)
class CsitThreshold:
    """Waterfill-style rule: transmit iff own-link fading h >= delta, with
    power target/(ell(d)*h).

    ``delta=None`` solves the budget equation per link; ``fading=None``
    uses the network's own-link fading; ``target=None`` takes gamma*beta
    from the scenario.
    """

    delta: Optional[float] = None
    target: Optional[float] = None
    fading: Optional[FadingModel] = None
    avg_power: float = 1.0
    tau_floor: float = 1.0

    def __post_init__(self):
        if self.delta is not None and self.delta < 0.0:
            raise ConfigError("delta must be nonnegative")
        if self.target is not None and self.target <= 0.0:
            raise ConfigError("target must be positive")
        if self.avg_power <= 0.0:
            raise ConfigError("avg_power must be positive")

    def policy_for(self, ell_d: float, target: float, fading: FadingModel) -> ThresholdPolicy:
        if self.delta is not None:
            delta = self.delta
        else:
            delta = solve_threshold(self.avg_power, target, 1.0, ell_d, fading)
        return ThresholdPolicy(delta=float(delta), target=target, fading=fading)


Strategy = Union[PureAloha, DistanceAloha, PowerControl, CsitThreshold]


def decide(
    strategy: Strategy,
    d: float,
    h: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    alpha: Optional[float] = None,
    target: Optional[float] = None,
) -> tuple[bool, float]:
    """One slot's (transmit, power) decision for a BS serving a MU at distance d.

    ``alpha`` is needed by the variants that evaluate the path gain;
    ``h`` (own-link fading) is required for CsitThreshold and ignored
    otherwise; ``target`` overrides the csit received-power target
    (default: the strategy's, which normally comes from gamma*beta).
    """
    if isinstance(strategy, PureAloha):
        if rng is None:
            raise RequestError("rng required")
        return bool(rng.random() < strategy.p), strategy.power
    if isinstance(strategy, DistanceAloha):
        if rng is None:
            raise RequestError("rng required")
        p, pw = strategy.params_at(d)
        return bool(rng.random() < float(p)), float(pw)
    if isinstance(strategy, PowerControl):
        if alpha is None:
            raise RequestError("power_control decisions need the path-loss exponent")
        if rng is None:
            raise RequestError("rng required")
        p, pw = strategy.params_at_ell(pathloss(d, alpha))
        return bool(rng.random() < float(p)), float(pw)
    if isinstance(strategy, CsitThreshold):
        if h is None:
            raise RequestError("csit_threshold decisions need the own-link fading gain")
        if alpha is None:
            raise RequestError("csit_threshold decisions need the path-loss exponent")
        tgt = target if target is not None else strategy.target
        if tgt is None:
            raise RequestError("csit_threshold decisions need a received-power target")
        fading = strategy.fading if strategy.fading is not None else FadingModel("exp_unit")
        ell = pathloss(d, alpha)
        policy = strategy.policy_for(ell, tgt, fading)
        if h >= policy.delta:
            return True, policy.target / (ell * h)
        return False, 0.0
    raise ConfigError(f"unknown strategy {strategy!r}")


def interferer_assignment(
    real: NetworkRealization,
    rng: np.random.Generator,
) -> dict[int, float]:
    """Draw, for one slot, which own MU each non-serving BS transmits to.

    Models the round-robin phase offsets across cells: every active
    non-serving BS picks one of its associated MUs uniformly.  Returns
    BS index -> distance to the chosen MU; BSs with no MU are absent.
    """
    flat, offsets, counts = mu_distance_menus(real)
    out: dict[int, float] = {}
    serving = real.serving_index
    for z in range(real.n_bs):
        if z == serving or counts[z] == 0:
            continue
        j = int(rng.integers(counts[z]))
        out[z] = float(flat[offsets[z] + j])
    return out


def mu_distance_menus(real: NetworkRealization):
    """Per-BS table of distances to the MUs it serves.

    Returns (flat, offsets, counts): the menu of BS z is
    flat[offsets[z] : offsets[z] + counts[z]], ordered by MU index.
    """
    order = np.argsort(real.association, kind="stable")
    mu_sorted = real.mu_points[order]
    bs_of = real.association[order]
    flat = np.hypot(
        mu_sorted[:, 0] - real.bs_points[bs_of, 0],
        mu_sorted[:, 1] - real.bs_points[bs_of, 1],
    )
    counts = np.bincount(real.association, minlength=real.n_bs)
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return flat, offsets, counts


# --------------------------------------------------------------------------
# batched kernels (one realization; arrays are (n_bs, n_slots))


class _PreparedAloha:
    needs_menu = False

    def __init__(self, p: float, power: float):
        self.p = p
        self.power = power

    def decide(self, idx, shape, rng):
        transmit = rng.random(shape) < self.p
        return transmit, np.full(shape, self.power)


class _PreparedTable:
    """Fixed (p, P) per (BS, MU) pair, indexed by the slot's MU choice."""

    needs_menu = True

    def __init__(self, p_tab: np.ndarray, power_tab: np.ndarray):
        self.p_tab = p_tab
        self.power_tab = power_tab

    def decide(self, idx, shape, rng):
        transmit = rng.random(shape) < self.p_tab[idx]
        return transmit, self.power_tab[idx]


class _PreparedCsit:
    """Threshold-on-own-fading rule; power inverts the (ell, h) product."""

    needs_menu = True

    def __init__(self, delta_tab: np.ndarray, coeff_tab: np.ndarray, fading: FadingModel):
        self.delta_tab = delta_tab
        self.coeff_tab = coeff_tab  # target / ell per pair
        self.fading = fading

    def decide(self, idx, shape, rng):
        h = self.fading.sample(rng, size=shape)
        transmit = h >= self.delta_tab[idx]
        with np.errstate(divide="ignore"):
            power = np.where(transmit, self.coeff_tab[idx] / np.maximum(h, 1e-300), 0.0)
        return transmit, power


def prepare_interferers(
    strategy: Strategy,
    menu_d: np.ndarray,
    menu_ell: np.ndarray,
    target: float,
    own_fading: FadingModel,
):
    """Build the batched decision kernel for one realization's interferers."""
    if isinstance(strategy, PureAloha):
        return _PreparedAloha(strategy.p, strategy.power)
    if isinstance(strategy, DistanceAloha):
        p, pw = strategy.params_at(menu_d)
        return _PreparedTable(p, pw)
    if isinstance(strategy, PowerControl):
        p, pw = strategy.params_at_ell(menu_ell)
        return _PreparedTable(p, pw)
    if isinstance(strategy, CsitThreshold):
        fading = strategy.fading if strategy.fading is not None else own_fading
        tgt = strategy.target if strategy.target is not None else target
        if strategy.delta is not None:
            delta_tab = np.full(menu_ell.shape, float(strategy.delta))
        else:
            delta_tab = np.asarray(
                solve_threshold(strategy.avg_power, tgt, 1.0, menu_ell, fading)
            )
        return _PreparedCsit(delta_tab, tgt / menu_ell, fading)
    raise ConfigError(f"unknown strategy {strategy!r}")


class ServingKernel:
    """Attempt probability plus the signal each attempt slot would deliver.

    ``signal_from_uniforms`` maps i.i.d. uniforms to received signal power;
    using the quantile map keeps matched-seed runs coupled monotonically
    across fading models.
    """

    def __init__(self, attempt_prob: float, signal_fn):
        self.attempt_prob = float(attempt_prob)
        self.signal_fn = signal_fn

    def signal_from_uniforms(self, u: np.ndarray) -> np.ndarray:
        return self.signal_fn(u)


def serving_kernel(
    strategy: Strategy,
    d0: float,
    ell_d0: float,
    target: float,
    fading: FadingModel,
) -> ServingKernel:
    """Kernel for the serving link (own-link gain ``ell_d0``, fading model
    ``fading``; enhanced runs pass ell_d0 = 1)."""
    if isinstance(strategy, PureAloha):
        coeff = strategy.power * ell_d0
        return ServingKernel(strategy.p, lambda u: coeff * fading.ppf(u))
    if isinstance(strategy, DistanceAloha):
        p, pw = strategy.params_at(d0)
        coeff = float(pw) * ell_d0
        return ServingKernel(float(p), lambda u: coeff * fading.ppf(u))
    if isinstance(strategy, PowerControl):
        p, pw = strategy.params_at_ell(ell_d0)
        coeff = float(pw) * ell_d0
        return ServingKernel(float(p), lambda u: coeff * fading.ppf(u))
    if isinstance(strategy, CsitThreshold):
        own = strategy.fading if strategy.fading is not None else fading
        tgt = strategy.target if strategy.target is not None else target
        policy = strategy.policy_for(ell_d0, tgt, own)
        # power exactly inverts (ell, h): the received signal is the target
        return ServingKernel(policy.transmit_prob(), lambda u: np.full(np.shape(u), tgt))
    raise ConfigError(f"unknown strategy {strategy!r}")
