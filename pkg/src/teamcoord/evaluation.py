"""Team reward, exploitability, KL to the reference TMECor and patrolling heatmaps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .game import Game, GameError
from .games import final_positions
from .sims import SignalMediatedStrategy, play_episode, to_coordinated_strategy
from .solver import best_response, tmecor_bruteforce, tmecor_via_refinement, CapExceeded
from .strategies import CoordinatedStrategy, profile_reach

KL_FLOOR = 1e-12


@dataclass
class EvalReport:
    reward_mean: float
    reward_std: float
    exploitability: float
    kl: float
    seeds: int = 1
    episodes_per_eval: int = 0
    exact_reward: float = math.nan

    def as_row(self) -> dict:
        return {"reward_mean": self.reward_mean, "reward_std": self.reward_std,
                "exploitability": self.exploitability, "kl": self.kl, "seeds": self.seeds,
                "episodes": self.episodes_per_eval, "exact_reward": self.exact_reward}


@dataclass(frozen=True)
class Heatmap:
    player: str
    signal: int
    grid: np.ndarray
    episodes: int

    def argmax_cell(self) -> tuple[int, int]:
        r, c = np.unravel_index(int(np.argmax(self.grid)), self.grid.shape)
        return int(r), int(c)

    def to_csv(self) -> str:
        head = ",".join(f"c{c}" for c in range(self.grid.shape[1]))
        return head + "\n" + "\n".join(",".join(f"{v:.6f}" for v in row) for row in self.grid) + "\n"


# ---------------------------------------------------------------- values


_VALUES: dict[tuple[str, tuple[str, ...]], float] = {}


def tmecor_value(game: Game, team: Sequence[str] | None = None, tol: float | None = None) -> float:
    """Equilibrium value, cached per game fingerprint; brute force when the matrix fits."""
    team = tuple(game.team if team is None else team)
    key = (game.fingerprint, team)
    if key not in _VALUES:
        try:
            _VALUES[key] = tmecor_bruteforce(game, team, tol).value
        except CapExceeded:
            _VALUES[key] = tmecor_via_refinement(game, team, tol).value
    return _VALUES[key]


def set_tmecor_value(game: Game, team: Sequence[str], value: float) -> None:
    _VALUES[(game.fingerprint, tuple(team))] = float(value)


def exact_team_value(game: Game, team_strategy, opponent) -> float:
    """Closed-form team EV of a team strategy (coordinated, behavioral list or signal-mediated)."""
    team = tuple(getattr(team_strategy, "team", ()))
    parts = [team_strategy] if team else list(team_strategy)
    if not team:
        team = tuple(s.owner for s in parts)
    opps = [opponent] if not isinstance(opponent, (list, tuple)) else list(opponent)
    reach = profile_reach(game, parts + opps)
    return float(reach @ game.utility(team[0]))


def team_value_vs_best_response(game: Game, team_strategy) -> tuple[float, object]:
    team = tuple(getattr(team_strategy, "team", ()))
    opps = game.opponents(team)
    if len(opps) != 1:
        raise GameError(f"expected one opponent, got {opps}")
    br, v = best_response(game, opps[0], [team_strategy])
    if not game.zero_sum:
        # team payoff at the opponent's response, read off the leaves
        return exact_team_value(game, team_strategy, br), br
    return -v, br


def exploitability(game: Game, team: Sequence[str], mu_t, v_star: float | None = None) -> float:
    """v* minus the team's value when the opponent best-responds to ``mu_t``."""
    if v_star is None:
        v_star = tmecor_value(game, team)
    value, _ = team_value_vs_best_response(game, mu_t)
    return float(v_star - value)


# ---------------------------------------------------------------- KL


def kl_to_tmecor(mu: CoordinatedStrategy, mu_star: CoordinatedStrategy, mode: str = "joint") -> float:
    """KL(mu || mu_star) over joint plans; 0 log 0 = 0 and mu_star floored at 1e-12.

    ``mode="factored"`` instead sums the KL of each member's marginal plan distribution.
    """
    if tuple(mu.team) != tuple(mu_star.team):
        raise GameError(f"team mismatch: {mu.team} vs {mu_star.team}")
    if mode == "joint":
        pairs = [(p, mu_star.probs.get(k, 0.0)) for k, p in mu.probs.items()]
    elif mode == "factored":
        return float(sum(
            kl_to_tmecor(_as_joint(mu.marginal(m)), _as_joint(mu_star.marginal(m))) for m in mu.team))
    else:
        raise GameError(f"unknown KL mode {mode!r}")
    total = 0.0
    for p, q in pairs:
        if p > 0:
            total += p * math.log(p / max(q, KL_FLOOR))
    return float(total)


def _as_joint(nf) -> CoordinatedStrategy:
    return CoordinatedStrategy((nf.owner,), {(plan,): w for plan, w in nf.probs.items()})


# ---------------------------------------------------------------- Monte Carlo


def _episode(game: Game, team_strategy, opponent, rng: np.random.Generator) -> float:
    if isinstance(team_strategy, SignalMediatedStrategy):
        return play_episode(team_strategy, game, opponent, rng)[1]
    if isinstance(team_strategy, CoordinatedStrategy):
        # a coordinated strategy is a one-signal-per-joint-plan device
        from .sampling import sample_index, walk

        joints = list(team_strategy.probs)
        w = np.array([team_strategy.probs[j] for j in joints])
        plan = {}
        for q in joints[sample_index(w, rng.random())]:
            plan.update(q.as_dict())
        opps = [opponent] if not isinstance(opponent, (list, tuple)) else list(opponent)
        from .sims import _opponent_chooser

        opp = _opponent_chooser(game, opps, rng)
        team = set(team_strategy.team)

        def choose(p: str, s: int) -> int:
            if p in team:
                return plan.get(s, 0)
            return opp[p](s)

        leaf, _ = walk(game, choose, rng)
        return float(game.nodes[leaf].payoffs[game.player_index(team_strategy.team[0])])
    raise GameError(f"cannot simulate {type(team_strategy).__name__}")


def average_reward(game: Game, team_strategy, opponent, episodes: int, seeds: int = 1,
                   rng: np.random.Generator | Sequence[np.random.Generator] | None = None) -> tuple[float, float]:
    """Monte Carlo mean and standard deviation of the team reward over ``episodes x seeds`` plays."""
    if episodes <= 0:
        raise ValueError(f"episodes must be positive, got {episodes}")
    if rng is None:
        from .rng import stream

        rngs = [stream(0, "eval", i) for i in range(seeds)]
    elif isinstance(rng, np.random.Generator):
        rngs = [rng] * seeds
    else:
        rngs = list(rng)
    rewards = np.array([_episode(game, team_strategy, opponent, r) for r in rngs for _ in range(episodes)])
    return float(rewards.mean()), float(rewards.std())


def evaluate(game: Game, team_strategy, opponent, mu_star: CoordinatedStrategy, v_star: float,
             episodes: int = 100, rng: np.random.Generator | None = None, kl_mode: str = "joint") -> EvalReport:
    team = tuple(team_strategy.team)
    mean, std = average_reward(game, team_strategy, opponent, episodes, 1, rng)
    mu = to_coordinated_strategy(team_strategy, game) if isinstance(team_strategy, SignalMediatedStrategy) else team_strategy
    return EvalReport(mean, std, exploitability(game, team, team_strategy, v_star),
                      kl_to_tmecor(mu, mu_star, kl_mode), 1, episodes,
                      exact_team_value(game, team_strategy, opponent))


# ---------------------------------------------------------------- heatmaps


def _require_patrolling(game: Game) -> None:
    if game.attrs.get("kind") != "patrolling":
        raise GameError("heatmaps need a patrolling game")


def heatmap(game: Game, sms: SignalMediatedStrategy, player: str, signal: int, episodes: int | None,
            rng: np.random.Generator | None = None, opponent=None) -> Heatmap:
    """Final-cell frequencies of ``player`` with the signal forced to ``signal``.

    ``episodes=None`` gives the exact distribution instead of a sample.
    """
    _require_patrolling(game)
    side = int(game.attrs["grid_side"])
    j = sms.team.index(player)
    grid = np.zeros((side, side))
    if episodes is None:
        reach = sms.leaf_reach(game, signal=signal)
        for i, z in enumerate(game.leaves):
            cells = final_positions(game, int(z))
            if cells[2] == 0:  # the attack does not change where the defenders ended up
                r, c = cells[j]
                grid[r, c] += reach[i]
        return Heatmap(player, signal, grid / grid.sum(), 0)
    if episodes <= 0:
        raise ValueError("episodes must be positive")
    if rng is None:
        from .rng import stream

        rng = stream(0, "heatmap", signal)
    for _ in range(episodes):
        leaf, _ = play_episode(sms, game, opponent, rng, signal=signal)
        r, c = final_positions(game, leaf)[j]
        grid[r, c] += 1
    return Heatmap(player, signal, grid / episodes, episodes)
