"""Density sweeps, figure presets, and machine-readable output.

A sweep config is a flat ``key = value`` file (``#`` starts a comment).
Every run echoes its normalized configuration, and each output row embeds
the full configuration plus tool version and seed, so any row can be re-run
bitwise.  Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import __version__
from .arq_sim import DelayStats, SimScenario, simulate_delay
from .bounds import BoundParams, evaluate_curve
from .errors import ConfigError, RequestError
from .geometry import NetworkConfig
from .strategies import CsitThreshold, PowerControl, PureAloha, Strategy

__all__ = [
    "SweepSpec",
    "PRESETS",
    "COLUMNS",
    "parse_flat_config",
    "validate_config",
    "emit_reference_curve",
    "run_sweep",
    "main",
    "console_main",
]

BOUND_KINDS = ("lb_lowdensity", "lb_highdensity", "lb_csir", "ub_powercontrol", "lb_coordination")
REFERENCE_KINDS = ("poly", "exp")
STRATEGY_NAMES = ("pure_aloha", "power_control", "csit_threshold")

# frozen output column order (see README)
COLUMNS = [
    "lam",
    "mean_delay_censored",
    "ci_halfwidth",
    "survival_at_tmax",
    "censored_count",
    "n_realizations",
    "tmax",
    "eta_measured",
    "mean_n0",
    "capacity_per_bs",
    "capacity_network",
    "capacity_per_mu",
    "lb_lowdensity",
    "lb_highdensity",
    "lb_csir",
    "ub_powercontrol",
    "lb_coordination",
    "ref_poly",
    "ref_exp",
    "strategy",
    "aloha_p",
    "epsilon",
    "csit_delta",
    "tau_floor",
    "coordination_k",
    "enhanced_mode",
    "antennas",
    "pathloss_exp",
    "sinr_threshold",
    "proc_gain",
    "noise",
    "avg_power",
    "mu_over_bs",
    "window_mean_points",
    "bound_delta",
    "seed",
    "tool_version",
]

_DEFAULTS: dict[str, str] = {
    "strategy": "power_control",
    "bs_density_grid": "",
    "mu_over_bs": "10",
    "pathloss_exp": "3",
    "sinr_threshold": "1",
    "proc_gain": "1",
    "noise": "1",
    "avg_power": "1",
    "antennas": "1",
    "window_mean_points": "200",
    "aloha_p": "0.25",
    "epsilon": "0.5",
    "csit_delta": "auto",
    "tau_floor": "1",
    "coordination_k": "0",
    "enhanced_mode": "false",
    "tmax": "10000",
    "realizations": "10000",
    "seed": "",
    "bounds": "",
    "reference": "",
    "bound_delta": "0",
    "threads": "1",
}

# fig3 extends the horizon so the low-density heavy tail is essentially
# uncensored (the mean delay there reaches ~3e4 slots); fig4 extends it one
# decade so the bound sandwich can be asserted where survival < 1e-3.
PRESETS: dict[str, dict[str, str]] = {
    "fig3": {
        "strategy": "power_control",
        "bs_density_grid": "0.001, 0.003, 0.01, 0.03, 0.1",
        "epsilon": "0.5",
        "tmax": "1000000",
        "realizations": "10000",
        "bounds": "lb_lowdensity",
        "reference": "poly",
    },
    "fig4": {
        "strategy": "power_control",
        "bs_density_grid": "0.5, 1, 2, 3, 4",
        "epsilon": "0.5",
        "tmax": "100000",
        "realizations": "10000",
        "bounds": "lb_highdensity, ub_powercontrol",
        "reference": "exp",
    },
    "fig5": {
        "strategy": "pure_aloha",
        "aloha_p": "0.25",
        "bs_density_grid": "1, 2, 3",
        "coordination_k": "7",
        "tmax": "10000",
        "realizations": "10000",
    },
    "fig6": {
        "strategy": "pure_aloha",
        "aloha_p": "0.25",
        "bs_density_grid": "1, 2, 3",
        "coordination_k": "7",
        "antennas": "4",
        "tmax": "10000",
        "realizations": "10000",
    },
}


@dataclass(frozen=True)
class SweepSpec:
    """A validated sweep: scenario template, density grid, and outputs."""

    grid: tuple[float, ...]
    strategy_name: str
    aloha_p: float
    epsilon: float
    csit_delta: Optional[float]   # None = auto
    tau_floor: float
    mu_over_bs: float
    pathloss_exp: float
    sinr_threshold: float
    proc_gain: float
    noise: float
    avg_power: float
    antennas: int
    window_mean_points: float
    coordination_k: int
    enhanced_mode: bool
    tmax: int
    realizations: int
    seed: int
    bounds: tuple[str, ...]
    reference: tuple[str, ...]
    bound_delta: float
    threads: int
    normalized: dict[str, str] = dataclasses.field(default_factory=dict, compare=False)

    def strategy(self) -> Strategy:
        if self.strategy_name == "pure_aloha":
            return PureAloha(
                p=self.aloha_p,
                power=self.avg_power / self.aloha_p,
                avg_power=self.avg_power,
                tau_floor=self.tau_floor,
            )
        if self.strategy_name == "power_control":
            return PowerControl(
                eps=self.epsilon, avg_power=self.avg_power, tau_floor=self.tau_floor
            )
        return CsitThreshold(
            delta=self.csit_delta, avg_power=self.avg_power, tau_floor=self.tau_floor
        )

    def scenario_at(self, lam: float) -> SimScenario:
        cfg = NetworkConfig(
            bs_density=lam,
            mu_density=self.mu_over_bs * lam,
            pathloss_exp=self.pathloss_exp,
            sinr_threshold=self.sinr_threshold,
            proc_gain=self.proc_gain,
            noise=self.noise,
            avg_power=self.avg_power,
            antennas=self.antennas,
            window_mean_points=self.window_mean_points,
        )
        return SimScenario(
            cfg=cfg,
            strategy=self.strategy(),
            coordination_k=self.coordination_k,
            enhanced_mode=self.enhanced_mode,
            max_slots=self.tmax,
            n_realizations=self.realizations,
            seed=self.seed,
        )


def parse_flat_config(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` comments; duplicates rejected."""
    out: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {ln}: empty key")
        if key in out:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        out[key] = value
    return out


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_list(s: str) -> list[str]:
    return [part.strip() for part in s.split(",") if part.strip()]


def validate_config(raw: dict[str, str], overrides: dict[str, str] | None = None) -> SweepSpec:
    """Check every key, fill defaults, and return the normalized sweep spec.

    All violations are reported together, each naming its key.
    """
    errors: list[str] = []
    merged = dict(_DEFAULTS)
    for src in (raw, overrides or {}):
        for key, value in src.items():
            if key not in _DEFAULTS:
                errors.append(f"{key}: unknown key")
            else:
                merged[key] = value
    if errors:
        raise ConfigError("; ".join(errors))

    def grab(key, conv, check=None, message=None):
        try:
            value = conv(merged[key])
        except (ValueError, TypeError):
            errors.append(f"{key}: cannot parse {merged[key]!r}")
            return None
        if check is not None and not check(value):
            errors.append(f"{key}: {message}")
            return None
        return value

    strategy_name = grab("strategy", str, lambda s: s in STRATEGY_NAMES,
                         f"must be one of {', '.join(STRATEGY_NAMES)}")
    grid_raw = grab("bs_density_grid", _parse_list, lambda v: len(v) > 0, "grid must be nonempty")
    grid: tuple[float, ...] = ()
    if grid_raw:
        try:
            grid = tuple(float(g) for g in grid_raw)
            if any(g <= 0.0 for g in grid):
                errors.append("bs_density_grid: densities must be positive")
            elif any(b <= a for a, b in zip(grid, grid[1:])):
                errors.append("bs_density_grid: grid must be strictly increasing")
        except ValueError:
            errors.append("bs_density_grid: cannot parse as numbers")

    mu_over_bs = grab("mu_over_bs", float, lambda v: v >= 0.0, "must be nonnegative")
    alpha = grab("pathloss_exp", float, lambda v: v > 2.0, "must exceed 2")
    beta = grab("sinr_threshold", float, lambda v: v > 0.0, "must be positive")
    gamma = grab("proc_gain", float, lambda v: 0.0 < v <= 1.0, "must lie in (0, 1]")
    noise = grab("noise", float, lambda v: v >= 0.0, "must be nonnegative")
    avg_power = grab("avg_power", float, lambda v: v > 0.0, "must be positive")
    antennas = grab("antennas", int, lambda v: v >= 1, "must be an integer >= 1")
    wmp = grab("window_mean_points", float, lambda v: v >= 1.0, "must be >= 1")
    aloha_p = grab("aloha_p", float, lambda v: 0.0 < v <= 1.0, "must lie in (0, 1]")
    epsilon = grab("epsilon", float, lambda v: 0.0 < v < 1.0, "must lie in (0, 1)")
    tau_floor = grab("tau_floor", float, lambda v: v >= 1.0, "must be >= 1")
    coordination_k = grab("coordination_k", int, lambda v: v >= 0, "must be >= 0")
    tmax = grab("tmax", int, lambda v: v >= 1, "must be >= 1")
    realizations = grab("realizations", int, lambda v: v >= 1, "must be >= 1")
    bound_delta = grab("bound_delta", float, lambda v: v >= 0.0, "must be nonnegative")
    threads = grab("threads", int, lambda v: v >= 1, "must be >= 1")

    enhanced = None
    try:
        enhanced = _parse_bool(merged["enhanced_mode"])
    except ValueError:
        errors.append("enhanced_mode: must be true or false")

    csit_delta: Optional[float] = None
    if merged["csit_delta"].strip().lower() != "auto":
        try:
            csit_delta = float(merged["csit_delta"])
            if csit_delta < 0.0:
                errors.append("csit_delta: must be 'auto' or a nonnegative number")
        except ValueError:
            errors.append("csit_delta: must be 'auto' or a nonnegative number")

    bounds = tuple(_parse_list(merged["bounds"]))
    for b in bounds:
        if b not in BOUND_KINDS:
            errors.append(f"bounds: unknown bound kind {b!r}")
    reference = tuple(_parse_list(merged["reference"]))
    for ref in reference:
        if ref not in REFERENCE_KINDS:
            errors.append(f"reference: unknown reference kind {ref!r}")
    if "exp" in reference and "lb_highdensity" not in bounds:
        errors.append("reference: the exp reference fits its slope from lb_highdensity; add it to bounds")

    seed_raw = merged["seed"].strip()
    if not seed_raw:
        seed_raw = os.environ.get("CELLCAP_SEED", "0").strip()
    try:
        seed = int(seed_raw)
        if seed < 0:
            errors.append("seed: must be a nonnegative integer")
    except ValueError:
        errors.append(f"seed: cannot parse {seed_raw!r}")
        seed = 0

    # cross-key invariants
    if None not in (beta, gamma, epsilon) and strategy_name == "power_control":
        if not beta * gamma * (1.0 - epsilon) < 1.0:
            errors.append(
                "epsilon: power-control needs beta*gamma*(1-epsilon) < 1 "
                f"(got {beta * gamma * (1.0 - epsilon):g})"
            )
    if None not in (coordination_k, wmp) and coordination_k and coordination_k >= (wmp or 0):
        errors.append("coordination_k: must stay below window_mean_points")
    if enhanced and strategy_name == "pure_aloha" and noise == 0.0:
        pass  # legal; the enhanced network simply has no noise either way

    if errors:
        raise ConfigError("; ".join(errors))

    normalized = dict(merged)
    normalized["seed"] = str(seed)
    spec = SweepSpec(
        grid=grid,
        strategy_name=strategy_name,
        aloha_p=aloha_p,
        epsilon=epsilon,
        csit_delta=csit_delta,
        tau_floor=tau_floor,
        mu_over_bs=mu_over_bs,
        pathloss_exp=alpha,
        sinr_threshold=beta,
        proc_gain=gamma,
        noise=noise,
        avg_power=avg_power,
        antennas=antennas,
        window_mean_points=wmp,
        coordination_k=coordination_k,
        enhanced_mode=enhanced,
        tmax=tmax,
        realizations=realizations,
        seed=seed,
        bounds=bounds,
        reference=reference,
        bound_delta=bound_delta,
        threads=threads,
        normalized=normalized,
    )
    # surface strategy/scenario invariant violations now, against the first grid point
    spec.scenario_at(spec.grid[0])
    return spec


def emit_reference_curve(kind: str, grid, anchor: tuple[float, float],
                         alpha: float | None = None, slope: float | None = None) -> np.ndarray:
    """Reference curve through ``anchor``: y0*(lam/lam0)^(-alpha/2) for
    ``poly``, y0*exp(slope*(lam-lam0)) for ``exp``; the anchor must be a
    grid point."""
    grid = np.asarray(grid, dtype=float)
    lam0, y0 = anchor
    if not np.any(np.isclose(grid, lam0, rtol=1e-12, atol=0.0)):
        raise RequestError(f"anchor density {lam0!r} is not on the grid")
    if kind == "poly":
        if alpha is None:
            raise RequestError("poly reference needs the path-loss exponent")
        return y0 * (grid / lam0) ** (-alpha / 2.0)
    if kind == "exp":
        if slope is None:
            raise RequestError("exp reference needs a slope")
        return y0 * np.exp(slope * (grid - lam0))
    raise RequestError(f"unknown reference kind {kind!r}")


def _sweep_point(args: tuple[SweepSpec, int]) -> tuple[int, DelayStats]:
    spec, i = args
    scn = spec.scenario_at(spec.grid[i])
    return i, simulate_delay(scn)


def _bound_values(spec: SweepSpec, lam: float, stats: DelayStats) -> dict[str, float]:
    out: dict[str, float] = {}
    if not spec.bounds:
        return out
    eta = stats.eta_measured
    if math.isnan(eta):
        return out  # no interferer slots observed; bounds would be ill-posed
    params = BoundParams(
        lam=lam,
        alpha=spec.pathloss_exp,
        beta=spec.sinr_threshold,
        gamma=spec.proc_gain,
        noise=spec.noise,
        avg_power=spec.avg_power,
        tau=spec.tau_floor,
        eps=spec.epsilon,
        eta=min(eta, 1.0),
        delta=spec.bound_delta,
    )
    for kind in spec.bounds:
        curve = evaluate_curve(kind, [lam], params, k=max(spec.coordination_k, 0) + 1)
        out[kind] = float(curve.values[0])
    return out


def run_sweep(spec: SweepSpec, out_path: str, fmt: str = "csv") -> list[dict]:
    """Simulate every grid point, co-evaluate bounds, and write one file.

    Rows appear in grid order; re-running an identical spec yields a
    byte-identical file regardless of ``threads``.
    """
    if fmt not in ("csv", "json"):
        raise ConfigError("format must be csv or json")

    points: list[Optional[DelayStats]] = [None] * len(spec.grid)
    if spec.threads > 1 and len(spec.grid) > 1:
        with ProcessPoolExecutor(max_workers=spec.threads) as pool:
            for i, stats in pool.map(_sweep_point, [(spec, i) for i in range(len(spec.grid))]):
                points[i] = stats
    else:
        for i in range(len(spec.grid)):
            points[i] = _sweep_point((spec, i))[1]

    bound_cols: list[dict[str, float]] = [
        _bound_values(spec, lam, stats) for lam, stats in zip(spec.grid, points)
    ]

    refs: dict[str, np.ndarray] = {}
    anchor = (spec.grid[0], points[0].mean_censored)
    if "poly" in spec.reference:
        refs["poly"] = emit_reference_curve("poly", spec.grid, anchor, alpha=spec.pathloss_exp)
    if "exp" in spec.reference:
        lb_vals = np.array([bc["lb_highdensity"] for bc in bound_cols])
        slope = float(np.polyfit(np.asarray(spec.grid), np.log(lb_vals), 1)[0])
        refs["exp"] = emit_reference_curve("exp", spec.grid, anchor, slope=slope)

    rows = []
    for i, (lam, stats) in enumerate(zip(spec.grid, points)):
        row = {
            "lam": lam,
            "mean_delay_censored": stats.mean_censored,
            "ci_halfwidth": stats.ci_halfwidth,
            "survival_at_tmax": stats.survival_at(stats.tmax),
            "censored_count": stats.censored_count,
            "n_realizations": stats.n,
            "tmax": stats.tmax,
            "eta_measured": stats.eta_measured,
            "mean_n0": stats.mean_n0,
            "capacity_per_bs": stats.capacity_per_bs,
            "capacity_network": stats.capacity_network,
            "capacity_per_mu": stats.capacity_per_mu,
        }
        for kind in BOUND_KINDS:
            row[kind] = bound_cols[i].get(kind, "")
        row["ref_poly"] = float(refs["poly"][i]) if "poly" in refs else ""
        row["ref_exp"] = float(refs["exp"][i]) if "exp" in refs else ""
        row.update(
            {
                "strategy": spec.strategy_name,
                "aloha_p": spec.aloha_p,
                "epsilon": spec.epsilon,
                "csit_delta": "auto" if spec.csit_delta is None else spec.csit_delta,
                "tau_floor": spec.tau_floor,
                "coordination_k": spec.coordination_k,
                "enhanced_mode": spec.enhanced_mode,
                "antennas": spec.antennas,
                "pathloss_exp": spec.pathloss_exp,
                "sinr_threshold": spec.sinr_threshold,
                "proc_gain": spec.proc_gain,
                "noise": spec.noise,
                "avg_power": spec.avg_power,
                "mu_over_bs": spec.mu_over_bs,
                "window_mean_points": spec.window_mean_points,
                "bound_delta": spec.bound_delta,
                "seed": spec.seed,
                "tool_version": __version__,
            }
        )
        rows.append(row)

    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow([row[c] for c in COLUMNS])
        payload = buf.getvalue()
    else:
        doc = {
            "tool": "cellcap",
            "version": __version__,
            "seed": spec.seed,
            "config": spec.normalized,
            "columns": COLUMNS,
            "rows": rows,
        }
        payload = json.dumps(doc, indent=2) + "\n"

    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(payload)
    return rows


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="cellcap",
        description="Density sweeps of ARQ delay, capacity, and analytic bounds "
        "for PPP cellular networks.",
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", metavar="PATH", help="flat key=value sweep config")
    source.add_argument("--preset", choices=sorted(PRESETS), help="built-in figure preset")
    parser.add_argument("--out", metavar="PATH", required=True, help="output file")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--seed", type=int, default=None, help="overrides config / CELLCAP_SEED")
    parser.add_argument("--realizations", type=int, default=None)
    parser.add_argument("--tmax", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        if args.config is not None:
            try:
                with open(args.config, "r", encoding="utf-8") as fh:
                    raw = parse_flat_config(fh.read())
            except OSError as exc:
                print(f"cellcap: cannot read config: {exc}", file=sys.stderr)
                return 3
        else:
            raw = dict(PRESETS[args.preset])

        overrides: dict[str, str] = {}
        if args.seed is not None:
            overrides["seed"] = str(args.seed)
        if args.realizations is not None:
            overrides["realizations"] = str(args.realizations)
        if args.tmax is not None:
            overrides["tmax"] = str(args.tmax)
        if args.threads is not None:
            overrides["threads"] = str(args.threads)

        spec = validate_config(raw, overrides)
        for key in sorted(spec.normalized):
            print(f"{key} = {spec.normalized[key]}")
        run_sweep(spec, args.out, args.format)
    except ConfigError as exc:
        print(f"cellcap: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cellcap: I/O error: {exc}", file=sys.stderr)
        return 3
    return 0


def console_main() -> None:
    sys.exit(main())
