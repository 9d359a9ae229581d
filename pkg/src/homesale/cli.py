"""Command-line entry point.

Subcommands: owt, sweep, evolve, expected-price, payoff-path, validate.
Every command reads one flat key=value scenario file (all keys have
defaults matching the reference parameter tables), takes --seed/--out
overrides, and writes plot-ready CSV.  Output files embed the config
hash and seed in a leading comment line so runs can be traced.

Exit codes: 0 success, 1 validation failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import market_sim, oracle, path_payoff
from .closed_form import (MarketParams, SellerPolicy, expected_utility,
                          listed_payoff, listed_payoff_exact, thinned_payoff)
from .owt import SweepAxis, SweepSpec, optimal_waiting_time, sweep_owt
from .stochastic import CirParams, DemandParams, simulate_cir, substream

__all__ = ["ScenarioConfig", "load_config", "main"]


@dataclass(frozen=True)
class ScenarioConfig:
    """Flat scenario description; defaults are the reference tables.

    The waiting-time analysis block and the simulation block each carry
    their own withdrawal intensity and impatience (the sim_ prefix keeps
    the two apart).
    """

    # waiting-time analysis block
    arrival_intensity: float = 5.0
    withdrawal_intensity: float = 5.0
    interest_rate: float = 0.1
    reservation_price: float = 140.0
    list_price: float = 180.0
    waiting_averseness: float = 0.1
    p_min: float = 100.0
    p_max: float = 200.0
    # simulation block
    sim_withdrawal_intensity: float = 10.0
    occupation_min: float = 4.0
    occupation_max: float = 6.0
    crisis_mean: float = 10.0
    initial_reservation_price: float = 140.0
    initial_list_price: float = 200.0
    sim_waiting_averseness: float = 0.8
    interest_rate_threshold: float = 0.06
    k1: float = 0.5
    k2: float = 1000.0
    theta: float = 0.1
    sigma: float = 0.08
    kappa: float = 0.25
    r0: float = 0.09
    # artifact knobs
    zeta: float = 1.0
    dt: float = 1.0 / 252.0
    horizon: float = 50.0
    t_max: float = 20.0
    tol: float = 1e-4
    seed: int = 12345
    mc_replications: int = 1_000_000
    price_replications: int = 1000
    path_replications: int = 200
    out_dir: str = "out"

    def market_params(self) -> MarketParams:
        return MarketParams(self.arrival_intensity, self.withdrawal_intensity,
                            self.interest_rate, self.p_min, self.p_max)

    def seller_policy(self) -> SellerPolicy:
        return SellerPolicy(self.reservation_price, self.list_price,
                            self.waiting_averseness, self.zeta)

    def cir_params(self) -> CirParams:
        return CirParams(self.kappa, self.theta, self.sigma, self.r0)

    def demand_params(self) -> DemandParams:
        return DemandParams(self.k1, self.k2)

    def evolution_config(self) -> market_sim.EvolutionConfig:
        return market_sim.EvolutionConfig(
            cir=self.cir_params(), demand=self.demand_params(),
            mu=self.sim_withdrawal_intensity, gamma=self.sim_waiting_averseness,
            zeta=self.zeta, p_min=self.p_min, p_max=self.p_max,
            initial_reservation=self.initial_reservation_price,
            initial_list=self.initial_list_price,
            occupation_lo=self.occupation_min, occupation_hi=self.occupation_max,
            crisis_mean=self.crisis_mean, rate_threshold=self.interest_rate_threshold,
            dt=self.dt, t_max=self.t_max, tol=self.tol)


class ConfigError(Exception):
    pass


_INT_KEYS = {"seed", "mc_replications", "price_replications", "path_replications"}
_STR_KEYS = {"out_dir"}


def load_config(path: str) -> ScenarioConfig:
    """Parse a flat key = value scenario file.

    Blank lines and #-comments are skipped; unknown keys are errors so a
    typo cannot silently change the scenario.
    """
    known = {f.name for f in fields(ScenarioConfig)}
    overrides = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key in _STR_KEYS:
                overrides[key] = value
            elif key in _INT_KEYS:
                overrides[key] = int(value)
            else:
                overrides[key] = float(value)
        except ValueError as e:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from e
    try:
        return ScenarioConfig(**overrides)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e


def config_hash(cfg: ScenarioConfig) -> str:
    """Hash of the scenario content; the output directory is not part of
    the scenario, so identical runs into different directories match."""
    canon = "\n".join(f"{f.name}={getattr(cfg, f.name)!r}"
                      for f in fields(ScenarioConfig) if f.name != "out_dir")
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.17g}"


def _write_csv(path: Path, cfg: ScenarioConfig, header: list[str],
               rows: list[tuple], extra_comment: str = None) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(f"# homesale config_hash={config_hash(cfg)} seed={cfg.seed}\n")
            if extra_comment:
                fh.write(f"# {extra_comment}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}") from e


def _t_grid(t_max: float, steps: int) -> np.ndarray:
    if steps <= 0:
        return np.array([])
    return np.linspace(t_max / steps, t_max, steps)


def cmd_owt(cfg: ScenarioConfig, args) -> int:
    """Payoff and utility curves over the waiting time, plus the maximizer."""
    m = cfg.market_params()
    policy = cfg.seller_policy()
    R, L, gamma = policy.reservation, policy.list_price, policy.gamma
    grid = _t_grid(args.t_max or cfg.t_max, args.t_steps)
    rows = []
    for T in grid:
        if args.mode == "no-list":
            payoff = thinned_payoff(T, m, R)
            payoff_exact = payoff
        else:
            payoff = listed_payoff(T, m, R, L)
            payoff_exact = listed_payoff_exact(T, m, R, L)
        rows.append((T, payoff, payoff_exact, math.exp(-gamma * T) * payoff))
    if args.mode == "no-list":
        objective = lambda T: math.exp(-gamma * T) * thinned_payoff(T, m, R)
    else:
        objective = lambda T: expected_utility(T, m, R, L, gamma)
    res = optimal_waiting_time(objective, t_max=args.t_max or cfg.t_max, tol=cfg.tol)
    flag = " boundary=1" if res.boundary else ""
    summary = f"t_star={_fmt(res.t_star)} utility={_fmt(res.utility_at_t_star)}{flag}"
    out = Path(cfg.out_dir) / "owt_curve.csv"
    _write_csv(out, cfg, ["T", "payoff", "payoff_exact", "utility"], rows,
               extra_comment=summary)
    print(f"{summary} -> {out}")
    return 0


def _parse_axis(text: str) -> SweepAxis:
    parts = text.split(":")
    if len(parts) != 4:
        raise ConfigError(f"axis spec must be NAME:MIN:MAX:STEPS, got {text!r}")
    name, lo, hi, steps = parts
    try:
        return SweepAxis(name, float(lo), float(hi), int(steps))
    except ValueError as e:
        raise ConfigError(f"bad axis spec {text!r}: {e}") from e


def cmd_sweep(cfg: ScenarioConfig, args) -> int:
    """Maximizer surface over two swept parameters."""
    policy = cfg.seller_policy()
    spec = SweepSpec(_parse_axis(args.x), _parse_axis(args.y), cfg.market_params(),
                     policy.reservation, policy.list_price, policy.gamma,
                     t_max=cfg.t_max, tol=cfg.tol)
    result = sweep_owt(spec, workers=args.workers)
    rows = [(xv, yv, result.t_star[i, j])
            for i, yv in enumerate(result.y_values)
            for j, xv in enumerate(result.x_values)]
    out = Path(cfg.out_dir) / "sweep.csv"
    _write_csv(out, cfg, [result.x_name, result.y_name, "t_star"], rows)
    print(f"{len(rows)} cells -> {out}")
    return 0


def cmd_evolve(cfg: ScenarioConfig, args) -> int:
    """Multi-owner price evolution: event CSV plus a diffable event stream."""
    horizon = cfg.horizon if args.horizon is None else args.horizon
    log = market_sim.run_evolution(cfg.evolution_config(), horizon, cfg.seed)
    rows = [(e.time, e.kind, e.price, e.rate, e.demand, e.owner, e.attempt)
            for e in log.events]
    out = Path(cfg.out_dir) / "evolution.csv"
    _write_csv(out, cfg, ["time", "event_type", "price", "rate",
                          "demand_intensity", "owner_index", "attempt_index"], rows)
    stream = Path(cfg.out_dir) / "events.txt"
    try:
        head = f"# homesale config_hash={config_hash(cfg)} seed={cfg.seed}\n"
        stream.write_text(head + "".join(line + "\n" for line in log.to_event_lines()))
    except OSError as e:
        raise ConfigError(f"cannot write {stream}: {e}") from e
    rates = Path(cfg.out_dir) / "rates.csv"
    _write_csv(rates, cfg, ["t", "r"],
               list(zip(log.path.times.tolist(), log.path.values.tolist())))
    n_sales = sum(1 for e in log.events if e.kind == "Sale")
    print(f"{len(log.events)} events, {n_sales} sales -> {out}, {stream}, {rates}")
    return 0


def _parse_times(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as e:
        raise ConfigError(f"bad times list {text!r}") from e


def cmd_expected_price(cfg: ScenarioConfig, args) -> int:
    """Mean realized sale price by posting time."""
    times = _parse_times(args.times)
    points = market_sim.expected_price_curve(
        cfg.evolution_config(), times, args.n_reps or cfg.price_replications,
        cfg.seed, workers=args.workers)
    rows = [(p.time, p.t_star, p.mean_price, p.stderr, p.n_sales, p.no_sale_fraction)
            for p in points]
    out = Path(cfg.out_dir) / "expected_price.csv"
    _write_csv(out, cfg, ["time", "t_star", "mean_price", "stderr",
                          "n_sales", "no_sale_fraction"], rows)
    print(f"{len(rows)} posting times -> {out}")
    return 0


def cmd_payoff_path(cfg: ScenarioConfig, args) -> int:
    """Conditional payoff curves along rate paths (single path or MC mean)."""
    R = cfg.initial_reservation_price
    L0 = cfg.initial_list_price
    zeta = 0.0 if args.mode == "constant" else cfg.zeta
    schedule = market_sim.list_schedule(R, L0, zeta)

    def ctx_factory(path):
        return path_payoff.PathContext(
            path=path, list_schedule=schedule,
            offers=path_payoff.UniformOffers(cfg.p_min, cfg.p_max),
            withdrawals=path_payoff.ExponentialWithdrawals(cfg.sim_withdrawal_intensity),
            reservation=R, demand=cfg.demand_params())

    grid = _t_grid(args.t_max or 2.0, args.t_steps)
    n_paths = args.n_paths or cfg.path_replications
    rows = []
    for t in grid:
        if n_paths == 1:
            path = simulate_cir(cfg.cir_params(), max(t, cfg.dt), cfg.dt,
                                substream(cfg.seed, "payoff-path", 0))
            rows.append((t, path_payoff.conditional_payoff(ctx_factory(path), t,
                                                           args.mode), 0.0))
        else:
            mean, stderr = path_payoff.expected_payoff(
                ctx_factory, cfg.cir_params(), t, n_paths, cfg.seed,
                mode=args.mode, dt=cfg.dt, workers=args.workers)
            rows.append((t, mean, stderr))
    out = Path(cfg.out_dir) / "payoff_path.csv"
    _write_csv(out, cfg, ["t", "payoff", "stderr"], rows)
    print(f"{len(rows)} horizons, mode={args.mode}, n_paths={n_paths} -> {out}")
    return 0


def cmd_validate(cfg: ScenarioConfig, args) -> int:
    """Oracle-vs-analytic comparison matrix; exit 1 when a check fails."""
    report = oracle.validate_all(tolerance_sigmas=3.0,
                                 n=args.n or cfg.mc_replications,
                                 seed=cfg.seed, workers=args.workers)
    out = Path(cfg.out_dir) / "validation.csv"
    _write_csv(out, cfg, ["check_name", "analytic", "mc_mean", "mc_stderr",
                          "z", "verdict"], report.to_csv_rows())
    print(report.format_table())
    print(f"-> {out}")
    return 0 if report.passed else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homesale",
        description="Sale-timing optimization and price-evolution simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="scenario file (key = value lines)")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--workers", type=int, default=1,
                       help="worker threads for replication-parallel steps")

    p = sub.add_parser("owt", help="waiting-time payoff/utility curves")
    common(p)
    p.add_argument("--mode", choices=["listed", "no-list"], default="listed")
    p.add_argument("--t-max", type=float, default=None)
    p.add_argument("--t-steps", type=int, default=200)
    p.set_defaults(func=cmd_owt)

    p = sub.add_parser("sweep", help="maximizer surface over two parameters")
    common(p)
    p.add_argument("--x", required=True, help="axis spec NAME:MIN:MAX:STEPS")
    p.add_argument("--y", required=True, help="axis spec NAME:MIN:MAX:STEPS")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evolve", help="multi-owner price evolution log")
    common(p)
    p.add_argument("--horizon", type=float, default=None)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("expected-price", help="mean sale price by posting time")
    common(p)
    p.add_argument("--times", required=True, help="comma-separated posting times")
    p.add_argument("--n-reps", type=int, default=None)
    p.set_defaults(func=cmd_expected_price)

    p = sub.add_parser("payoff-path", help="conditional payoff curves")
    common(p)
    p.add_argument("--mode", choices=["changing", "constant", "none"],
                   default="changing")
    p.add_argument("--t-max", type=float, default=None)
    p.add_argument("--t-steps", type=int, default=40)
    p.add_argument("--n-paths", type=int, default=None)
    p.set_defaults(func=cmd_payoff_path)

    p = sub.add_parser("validate", help="oracle comparison matrix")
    common(p)
    p.add_argument("--n", type=int, default=None, help="replications per check")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, out_dir=args.out)
        return args.func(cfg, args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
