"""Command-line pipeline: build, refine, solve, sample, train, eval and reproduce.

Exit codes: 0 success, 1 usage, 2 validation or input error, 3 an acceptance
threshold of ``reproduce`` failed.  Relative output paths are resolved against
``--out-dir``, else ``$TEAMCOORD_OUT``, else the working directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import efgdesc
from .evaluation import (exact_team_value, exploitability, heatmap, kl_to_tmecor,
                         average_reward, team_value_vs_best_response)
from .game import Game, GameError
from .games import BENCHMARKS, benchmark
from .refinement import RecallWarning, merge_team, perfect_recall_refinement, recall_report
from .rng import stream
from .sampling import FspConfig, TrajectoryBuffer, sample_fsp, sample_from_equilibrium
from .sims import SignalMediatedStrategy, SimsConfig, to_coordinated_strategy, train_sims
from .solver import CapExceeded, SolveResult, tmecor_bruteforce, tmecor_via_refinement
from .strategies import strategy_to_dict

ENV_OUT = "TEAMCOORD_OUT"
EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_THRESHOLD = 0, 1, 2, 3
EVAL_EVERY = 50
EVAL_EPISODES = 100


class StageError(Exception):
    def __init__(self, stage: str, error: BaseException):
        super().__init__(f"[{stage}] {error}")
        self.stage = stage
        self.error = error


@dataclass
class RunConfig:
    command: str
    seed: int = 0
    out_dir: str = "."
    tol: float | None = None
    params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.tol is not None and not self.tol > 0:
            raise ValueError(f"tolerance must be positive, got {self.tol}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"


# ---------------------------------------------------------------- helpers


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _stage(name: str, fn: Callable, *args, **kw):
    try:
        return fn(*args, **kw)
    except (GameError, ValueError, KeyError, OSError) as e:
        raise StageError(name, e) from e


def _out_path(cfg: RunConfig, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else Path(cfg.out_dir) / p


def _write(cfg: RunConfig, path: str, text: str) -> Path:
    p = _out_path(cfg, path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)
    return p


def _read(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"input file not found: {p}")
    return p.read_text()


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v: Any) -> Any:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return v


def _load_game(args) -> Game:
    """Benchmark name (with overrides) or a path to an efgdesc file."""
    name = getattr(args, "game", None) or getattr(args, "input", None)
    if name is None:
        raise ValueError("a game is required (--game NAME|PATH)")
    if name in BENCHMARKS:
        return benchmark(name, args.K, args.K_right, args.grid_side, args.steps)
    return efgdesc.parse_game(_read(name))


def _team(args, game: Game) -> tuple[str, ...]:
    if getattr(args, "team", None):
        team = tuple(t.strip() for t in args.team.split(",") if t.strip())
        for t in team:
            game.check_player(t)
        return team
    if not game.team:
        raise ValueError("the game declares no team; pass --team")
    return tuple(game.team)


@dataclass
class Reference:
    """Equilibrium quantities every evaluation needs."""

    value: float
    mu_star: Any
    opponent: Any
    result: SolveResult


def _reference(game: Game, team: Sequence[str], tol: float | None) -> Reference:
    try:
        res = tmecor_bruteforce(game, team, tol)
    except CapExceeded:
        res = tmecor_via_refinement(game, team, tol)
    return Reference(res.value, res.team_strategy, res.opponent_strategy, res)


def _refine(game: Game, team: Sequence[str]):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RecallWarning)
        rmap = perfect_recall_refinement(game, team)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return rmap


def _eval_row(game: Game, sms: SignalMediatedStrategy, ref: Reference, rng: np.random.Generator,
              episodes: int, kl_mode: str = "joint") -> dict:
    team = sms.team
    mean, _ = average_reward(game, sms, ref.opponent, episodes, 1, rng)
    row = {"reward": mean,
           "exploitability": exploitability(game, team, sms, ref.value),
           "kl": _kl(game, sms, ref, kl_mode)}
    return row


def _kl(game: Game, sms: SignalMediatedStrategy, ref: Reference, mode: str) -> float:
    try:
        return kl_to_tmecor(to_coordinated_strategy(sms, game), ref.mu_star, mode)
    except GameError:
        return math.nan


# ---------------------------------------------------------------- subcommands


def cmd_build(args, cfg: RunConfig) -> int:
    game = _stage("games", _load_game, args)
    text = efgdesc.dump_game(game)
    if args.out:
        _write(cfg, args.out, text)
        print(f"wrote {_out_path(cfg, args.out)} ({len(game.nodes)} nodes)")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_refine(args, cfg: RunConfig) -> int:
    game = _stage("games", _load_game, args)
    team = _stage("refinement", _team, args, game)
    merged = _stage("refinement", merge_team, game, team)
    report = _stage("refinement", recall_report, merged, "T")
    rmap = _stage("refinement", _refine, game, team)
    summary = rmap.summary()
    if args.out:
        _write(cfg, args.out, efgdesc.dump_game(rmap.refined))
    doc = {"recall": report.to_dict(), "refinement": summary}
    if args.report:
        _write(cfg, args.report, json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"method={summary['method']} splits={summary['splits']} "
          f"states {summary['original_states']} -> {summary['refined_states']}")
    return EXIT_OK


def _solve(game: Game, team: Sequence[str], method: str, tol: float | None) -> SolveResult:
    if method == "bruteforce":
        return tmecor_bruteforce(game, team, tol)
    return tmecor_via_refinement(game, team, tol)


def _solve_doc(game: Game, res: SolveResult, method: str) -> dict:
    return {"method": method, **res.summary(),
            "team_strategy": strategy_to_dict(game, res.team_strategy),
            "opponent_strategy": strategy_to_dict(game, res.opponent_strategy)}


def cmd_solve(args, cfg: RunConfig) -> int:
    game = _stage("games", _load_game, args)
    team = _stage("solver", _team, args, game)
    res = _stage("solver", _solve, game, team, args.method, cfg.tol)
    if args.out:
        _write(cfg, args.out, json.dumps(_solve_doc(game, res, args.method), indent=1, sort_keys=True) + "\n")
    print(f"value={res.value:.6f} epsilon={res.epsilon:.6g} iterations={res.iterations}")
    return EXIT_OK


def _sample(game: Game, team: Sequence[str], method: str, episodes: int, seed: int, index: int,
            tol: float | None, capacity: int) -> TrajectoryBuffer:
    rmap = _refine(game, team)
    if method == "equilibrium":
        res = tmecor_via_refinement(game, team, tol, rmap=rmap)
        return sample_from_equilibrium(rmap, res.extras["meta_strategy"], episodes, stream(seed, "sample", index),
                                       res.extras["meta_opponent"], capacity)
    buf, _ = sample_fsp(rmap, episodes, FspConfig(capacity=capacity, seed=seed), stream(seed, "sample", index))
    return buf


def cmd_sample(args, cfg: RunConfig) -> int:
    game = _stage("games", _load_game, args)
    team = _stage("sampling", _team, args, game)
    buf = _stage("sampling", _sample, game, team, args.method, args.episodes, cfg.seed, 0, cfg.tol, args.capacity)
    text = buf.to_jsonl(game)
    if args.out:
        _write(cfg, args.out, text)
        print(f"wrote {len(buf)} records to {_out_path(cfg, args.out)}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _sims_config(args, seed: int) -> SimsConfig:
    return SimsConfig(n_signals=args.signals, iterations=args.iters, seed=seed,
                      learning_rate=args.lr, batch_size=args.batch_size, restarts=args.restarts)


def _train(game: Game, buf: TrajectoryBuffer, config: SimsConfig, rng_index: int,
           ref: Reference | None, eval_rng: np.random.Generator | None, log_rows: list | None):
    def log(it: int, loss: float, beta: float, sms: SignalMediatedStrategy) -> None:
        row = {"iteration": it, "loss": loss, "beta": beta}
        if ref is not None:
            row.update(_eval_row(game, sms, ref, eval_rng, EVAL_EPISODES))
        log_rows.append(row)
    callback = log if log_rows is not None else None
    return train_sims(buf, game, config, stream(config.seed, "train", rng_index), callback, EVAL_EVERY)


LOG_HEADER = ("iteration", "loss", "beta", "reward", "exploitability", "kl")


def cmd_train(args, cfg: RunConfig) -> int:
    game = _stage("games", _load_game, args)
    team = _stage("sims", _team, args, game)
    buf = _stage("sampling", TrajectoryBuffer.from_jsonl, game, _stage("sampling", _read, args.buffer), team)
    config = _sims_config(args, cfg.seed)
    _stage("sims", config.validate)
    rows = None
    ref = None
    if args.log:
        rows = []
        ref = _stage("solver", _reference, game, team, cfg.tol)
    sms = _stage("sims", _train, game, buf, config, 0, ref, stream(cfg.seed, "eval", 0), rows)
    text = sms.to_json(game) + "\n"
    if args.out:
        _write(cfg, args.out, text)
    else:
        sys.stdout.write(text)
    if rows is not None:
        _write(cfg, args.log, _csv(LOG_HEADER, [[r.get(k, "") for k in LOG_HEADER] for r in rows]))
    print(f"trained {config.iterations} iterations, mu={np.round(sms.mu.probs, 4).tolist()}", file=sys.stderr)
    return EXIT_OK


EVAL_HEADER = ("metric", "mean", "std", "episodes", "seed")


def _heatmap_files(cfg: RunConfig, game: Game, sms: SignalMediatedStrategy, prefix: str) -> list[Path]:
    paths = []
    for player in sms.team:
        for k in range(sms.mu.n):
            hm = heatmap(game, sms, player, k, None)
            paths.append(_write(cfg, f"{prefix}heatmap_{player}_s{k}.csv", hm.to_csv()))
    return paths


def cmd_eval(args, cfg: RunConfig) -> int:
    game = _stage("games", _load_game, args)
    team = _stage("eval", _team, args, game)
    doc = _stage("eval", lambda: json.loads(_read(args.sms)))
    sms = _stage("eval", SignalMediatedStrategy.from_dict, game, doc)
    ref = _stage("solver", _reference, game, team, cfg.tol)
    rng = stream(cfg.seed, "eval", 0)
    mean, std = _stage("eval", average_reward, game, sms, ref.opponent, args.episodes, 1, rng)
    vs_br, _ = team_value_vs_best_response(game, sms)
    rows = [
        ("reward", mean, std, args.episodes, cfg.seed),
        ("reward_exact", exact_team_value(game, sms, ref.opponent), 0.0, 0, cfg.seed),
        ("reward_vs_br", vs_br, 0.0, 0, cfg.seed),
        ("exploitability", ref.value - vs_br, 0.0, 0, cfg.seed),
        ("kl", _kl(game, sms, ref, args.kl_mode), 0.0, 0, cfg.seed),
        ("tmecor_value", ref.value, 0.0, 0, cfg.seed),
    ]
    text = _csv(EVAL_HEADER, rows)
    if args.out:
        _write(cfg, args.out, text)
    else:
        sys.stdout.write(text)
    if args.heatmaps is not None:
        if game.attrs.get("kind") != "patrolling":
            raise StageError("eval", GameError("heatmaps need a patrolling game"))
        _heatmap_files(cfg, game, sms, args.heatmaps)
    return EXIT_OK


# ---------------------------------------------------------------- reproduce


@dataclass(frozen=True)
class Experiment:
    game: str
    signals: int
    fsp_episodes: int
    restarts: int = 1


EXPERIMENTS = {
    "coord2": Experiment("coord-2", 5, 60_000),
    "coord4": Experiment("coord-4", 5, 60_000),
    "coord2-imb": Experiment("coord-2-imb", 5, 60_000),
    "patrolling": Experiment("patrolling_4_3", 4, 1_000_000, restarts=3),
}


@dataclass
class SeedOutcome:
    index: int
    log: list
    final: dict
    strategy: str
    heatmaps: dict


def _seed_run(exp_name: str, seed: int, index: int, iters: int, episodes: int, restarts: int,
              lr: float, tol: float | None, source: tuple | None = None) -> SeedOutcome:
    """One training seed; ``source`` is a (meta strategy, meta opponent) pair to sample from instead of FSP."""
    exp = EXPERIMENTS[exp_name]
    game = benchmark(exp.game)
    team = tuple(game.team)
    ref = _reference(game, team, tol)
    rmap = _refine(game, team)
    sample_rng = stream(seed, "sample", index)
    if source is None:
        buf, _ = _stage("sampling", sample_fsp, rmap, episodes, FspConfig(seed=seed), sample_rng)
    else:
        buf = _stage("sampling", sample_from_equilibrium, rmap, source[0], episodes, sample_rng, source[1])
    config = SimsConfig(n_signals=exp.signals, iterations=iters, seed=seed, learning_rate=lr, restarts=restarts)
    rows: list = []
    sms = _stage("sims", _train, game, buf, config, index, ref, stream(seed, "eval", index), rows)
    vs_br, _ = team_value_vs_best_response(game, sms)
    final = {"seed_index": index,
             "reward_exact": exact_team_value(game, sms, ref.opponent),
             "reward_vs_br": vs_br,
             "exploitability": ref.value - vs_br,
             "kl": _kl(game, sms, ref, "joint"),
             "final_loss": rows[-1]["loss"] if rows else math.nan}
    maps = {}
    if game.attrs.get("kind") == "patrolling":
        for player in team:
            for k in range(sms.mu.n):
                maps[(player, k)] = heatmap(game, sms, player, k, None)
        final.update(_heatmap_check(game, sms, maps))
    return SeedOutcome(index, rows, final, sms.to_json(game) + "\n", maps)


def _heatmap_check(game: Game, sms: SignalMediatedStrategy, maps: dict, min_mass: float = 0.05) -> dict:
    """Both members' argmax cells agree on a site for every signal carrying at least ``min_mass``."""
    sites = {tuple(c) for c in game.attrs["sites"]}
    agree, covered = True, set()
    for k in range(sms.mu.n):
        if sms.mu.probs[k] < min_mass:
            continue
        cells = {maps[(p, k)].argmax_cell() for p in sms.team}
        cell = next(iter(cells))
        agree &= len(cells) == 1 and cell in sites
        covered.add(cell)
    return {"signals_agree": int(agree), "sites_covered": len(covered & sites)}


def _thresholds(exp_name: str, ref: Reference, cross: SolveResult | None, finals: list[dict],
                buffer: str = "fsp") -> list[tuple]:
    """(criterion, observed, requirement, passed) rows for one experiment."""
    n = len(finals)
    out = []
    if cross is not None:
        diff = abs(cross.value - ref.value)
        out.append(("pipeline_vs_bruteforce", diff, "<= 0.2", diff <= 0.2))
    if exp_name in ("coord2", "coord4"):
        # self-play buffers are noisier than equilibrium samples
        floor, frac = (47, 0.8) if buffer == "fsp" else (49, 0.9)
        good = sum(f["reward_exact"] >= floor for f in finals)
        need = math.ceil(frac * n)
        out.append((f"seeds_reward_ge_{floor}", good, f">= {need}", good >= need))
        expl = max(f["exploitability"] for f in finals)
        out.append(("max_exploitability", expl, "<= 5", expl <= 5))
        kl = max(f["kl"] for f in finals)
        out.append(("max_kl", kl, "<= 0.1", kl <= 0.1))
    elif exp_name == "coord2-imb":
        out.append(("tmecor_value", ref.value, "100/3 +- 0.1", abs(ref.value - 100 / 3) <= 0.1))
        expl = max(f["exploitability"] for f in finals)
        out.append(("max_exploitability", expl, "<= 5", expl <= 5))
    elif exp_name == "patrolling":
        out.append(("tmecor_value", ref.value, "-0.5 +- 0.01", abs(ref.value + 0.5) <= 0.01))
        f0 = finals[0]
        out.append(("heatmap_signals_agree", f0["signals_agree"], "== 1", f0["signals_agree"] == 1))
        out.append(("heatmap_sites_covered", f0["sites_covered"], ">= 3", f0["sites_covered"] >= 3))
        rew = float(np.mean([f["reward_vs_br"] for f in finals]))
        out.append(("mean_reward_vs_br", rew, ">= -0.55", rew >= -0.55))
    return out


EQ_RECORDS = 20_000

FINAL_HEADER = ("seed_index", "reward_exact", "reward_vs_br", "exploitability", "kl", "final_loss",
                "signals_agree", "sites_covered")


def cmd_reproduce(args, cfg: RunConfig) -> int:
    exp = EXPERIMENTS[args.experiment]
    iters = args.iters or 20_000
    episodes = args.episodes or (exp.fsp_episodes if args.buffer == "fsp" else EQ_RECORDS)
    restarts = args.restarts or exp.restarts
    game = benchmark(exp.game)
    team = tuple(game.team)
    ref = _stage("solver", _reference, game, team, cfg.tol)
    cross = None
    if ref.result.extras.get("matrix") is not None:
        cross = _stage("solver", tmecor_via_refinement, game, team, cfg.tol)
    rmap = _stage("refinement", _refine, game, team)
    source = None
    if args.buffer == "equilibrium":
        meta = (cross or ref.result).extras
        source = (meta["meta_strategy"], meta["meta_opponent"])
    job = (args.experiment, cfg.seed)
    tail = (iters, episodes, restarts, args.lr, cfg.tol, source)
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            outcomes = list(pool.map(_seed_run, *zip(*[job + (i,) + tail for i in range(args.seeds)])))
    else:
        outcomes = [_seed_run(*job, i, *tail) for i in range(args.seeds)]

    prefix = args.experiment + "/"
    _write(cfg, prefix + "config.json", RunConfig("reproduce", cfg.seed, ".", cfg.tol, {
        "experiment": args.experiment, "seeds": args.seeds, "iterations": iters, "fsp_episodes": episodes,
        "signals": exp.signals, "restarts": restarts, "learning_rate": args.lr,
        "buffer": args.buffer}).to_json())
    _write(cfg, prefix + "refinement.json", json.dumps(rmap.summary(), indent=1, sort_keys=True) + "\n")
    solve_rows = [("bruteforce" if cross is not None else "refinement", ref.value, ref.result.epsilon, ref.result.iterations)]
    if cross is not None:
        solve_rows.append(("refinement", cross.value, cross.epsilon, cross.iterations))
    _write(cfg, prefix + "solve.csv", _csv(("method", "value", "epsilon", "iterations"), solve_rows))
    _write(cfg, prefix + "tmecor.json", json.dumps(_solve_doc(game, ref.result, solve_rows[0][0]), indent=1, sort_keys=True) + "\n")
    metric_rows = [[o.index] + [r.get(k, "") for k in LOG_HEADER] for o in outcomes for r in o.log]
    _write(cfg, prefix + "metrics.csv", _csv(("seed_index",) + LOG_HEADER, metric_rows))
    finals = [o.final for o in outcomes]
    _write(cfg, prefix + "final.csv", _csv(FINAL_HEADER, [[f.get(k, "") for k in FINAL_HEADER] for f in finals]))
    summary = []
    for key in ("reward_exact", "reward_vs_br", "exploitability", "kl"):
        vals = np.array([f[key] for f in finals], dtype=float)
        summary.append((key, float(vals.mean()), float(vals.std()), EVAL_EPISODES, cfg.seed))
    _write(cfg, prefix + "summary.csv", _csv(EVAL_HEADER, summary))
    for o in outcomes:
        _write(cfg, f"{prefix}strategies/sms_seed{o.index}.json", o.strategy)
    if outcomes and outcomes[0].heatmaps:
        for (player, k), hm in outcomes[0].heatmaps.items():
            _write(cfg, f"{prefix}heatmaps/heatmap_{player}_s{k}.csv", hm.to_csv())
    checks = _thresholds(args.experiment, ref, cross, finals, args.buffer)
    _write(cfg, prefix + "acceptance.csv", _csv(("criterion", "observed", "requirement", "passed"),
                                                [(c, v, r, int(p)) for c, v, r, p in checks]))
    for c, v, r, p in checks:
        print(f"{'PASS' if p else 'FAIL'} {c}: {_fmt(v)} (required {r})")
    return EXIT_OK if all(p for *_, p in checks) else EXIT_THRESHOLD


# ---------------------------------------------------------------- parser


def _game_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--game", required=required, help=f"benchmark ({', '.join(BENCHMARKS)}) or efgdesc file")
    p.add_argument("--K", type=float, default=100.0, help="coordination payoff (left branch)")
    p.add_argument("--K-right", dest="K_right", type=float, default=None, help="coordination payoff (right branch)")
    p.add_argument("--grid-side", dest="grid_side", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--team", default=None, help="comma-separated team members (default: the game's team)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="teamcoord", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", dest="out_dir", default=None,
                        help=f"directory for relative output paths (default ${ENV_OUT} or .)")
    parser.add_argument("--tol", type=float, default=None, help="solver tolerance (default 1e-3 x payoff range)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build", help="write a benchmark game as efgdesc text")
    _game_flags(p)
    p.add_argument("--out", default=None)

    p = sub.add_parser("refine", help="perfect-recall refinement of the team meta-player")
    _game_flags(p, required=False)
    p.add_argument("--in", dest="input", default=None, help="efgdesc file (alternative to --game)")
    p.add_argument("--out", default=None, help="refined game, efgdesc")
    p.add_argument("--report", default=None, help="recall report and refinement summary, JSON")

    p = sub.add_parser("solve", help="compute a TMECor")
    _game_flags(p)
    p.add_argument("--method", choices=("bruteforce", "refinement"), default="refinement")
    p.add_argument("--out", default=None)

    p = sub.add_parser("sample", help="fill a trajectory buffer by self-play")
    _game_flags(p)
    p.add_argument("--method", choices=("fsp", "equilibrium"), default="fsp")
    p.add_argument("--episodes", type=int, default=60_000)
    p.add_argument("--capacity", type=int, default=20_000)
    p.add_argument("--out", default=None)

    p = sub.add_parser("train", help="train a signal-mediated strategy on a buffer")
    _game_flags(p)
    p.add_argument("--buffer", required=True)
    p.add_argument("--signals", type=int, default=5)
    p.add_argument("--iters", type=int, default=20_000)
    p.add_argument("--lr", type=float, default=SimsConfig.learning_rate)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=SimsConfig.batch_size)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--log", default=None, help="metrics CSV, one row every 50 iterations")

    p = sub.add_parser("eval", help="evaluate a trained strategy")
    _game_flags(p)
    p.add_argument("--sms", required=True, help="strategy JSON written by train")
    p.add_argument("--episodes", type=int, default=EVAL_EPISODES)
    p.add_argument("--kl-mode", dest="kl_mode", choices=("joint", "factored"), default="joint")
    p.add_argument("--heatmaps", default=None, help="file prefix for per-(player, signal) heatmap CSVs")
    p.add_argument("--out", default=None)

    p = sub.add_parser("reproduce", help="run a full experiment and check its thresholds")
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--iters", type=int, default=None, help="training iterations (default 20000)")
    p.add_argument("--episodes", type=int, default=None, help="self-play episodes per seed")
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--lr", type=float, default=SimsConfig.learning_rate)
    p.add_argument("--jobs", type=int, default=1, help="seeds trained in parallel")
    p.add_argument("--buffer", choices=("fsp", "equilibrium"), default="fsp",
                   help="fill the training buffer by self-play or by sampling the computed equilibrium")
    return parser


COMMANDS = {"build": cmd_build, "refine": cmd_refine, "solve": cmd_solve, "sample": cmd_sample,
            "train": cmd_train, "eval": cmd_eval, "reproduce": cmd_reproduce}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out_dir = args.out_dir or os.environ.get(ENV_OUT) or "."
    cfg = RunConfig(args.command, args.seed, out_dir, args.tol, {})
    try:
        cfg.validate()
        for name in ("episodes", "seeds", "iters", "signals", "jobs", "capacity", "restarts", "batch_size"):
            v = getattr(args, name, None)
            if v is not None and v <= 0:
                raise ValueError(f"--{name.replace('_', '-')} must be positive, got {v}")
    except ValueError as e:
        print(f"teamcoord: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, cfg)
    except StageError as e:
        print(f"teamcoord: error {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
