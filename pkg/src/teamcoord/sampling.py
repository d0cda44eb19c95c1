"""Centralized self-play on the refined game and purged trajectory buffers."""

from __future__ import annotations


import json
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .game import CHANCE_NODE, TERMINAL, Game, GameError
from .refinement import RefinementMap
from .strategies import BehavioralStrategy


# ---------------------------------------------------------------- records


@dataclass(frozen=True)
class Trajectory:
    """One episode on the refined game.

    ``steps[j]`` lists (refined state, original state, action) for the j-th
    team member in the order the member acted.
    """

    members: tuple[str, ...]
    steps: tuple[tuple[tuple[int, int, int], ...], ...]
    leaf: int
    reward: float


@dataclass(frozen=True)
class SampleRecord:
    """Per-member original observations and target actions of one episode.

    ``obs[j][m]`` is member j's information state at its m-th move and
    ``targets[j][m]`` the action it took there.
    """

    obs: tuple[tuple[int, ...], ...]
    targets: tuple[tuple[int, ...], ...]
    reward: float = 0.0

    def joint_target(self) -> tuple[tuple[int, ...], ...]:
        return self.targets


class TrajectoryBuffer:
    """FIFO store of purged records with a fixed capacity."""

    def __init__(self, members: Sequence[str], capacity: int = 20_000):
        if capacity <= 0:
            raise ValueError(f"buffer capacity must be positive, got {capacity}")
        self.members = tuple(members)
        self.capacity = capacity
        self._records: deque[SampleRecord] = deque(maxlen=capacity)

    def add(self, record: SampleRecord) -> None:
        self._records.append(record)

    def extend(self, records: Iterable[SampleRecord]) -> None:
        for r in records:
            self.add(r)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __getitem__(self, i: int) -> SampleRecord:
        return self._records[i]

    @property
    def records(self) -> list[SampleRecord]:
        return list(self._records)

    def target_counts(self) -> dict[tuple, int]:
        out: dict[tuple, int] = {}
        for r in self._records:
            out[r.targets] = out.get(r.targets, 0) + 1
        return out

    # serialization uses labels so files stay readable and id-independent
    def to_jsonl(self, game: Game) -> str:
        lines = []
        for r in self._records:
            o = {m: [game.infostates[s].label for s in obs] for m, obs in zip(self.members, r.obs)}
            t = {m: [game.infostates[s].actions[a] for s, a in zip(obs, tg)]
                 for m, obs, tg in zip(self.members, r.obs, r.targets)}
            lines.append(json.dumps({"o": o, "t": t, "r": r.reward}, sort_keys=True, separators=(",", ":")))
        return "\n".join(lines) + ("\n" if lines else "")

    def save(self, game: Game, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(game))

    @classmethod
    def from_jsonl(cls, game: Game, text: str, members: Sequence[str] | None = None,
                   capacity: int | None = None) -> "TrajectoryBuffer":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        members = tuple(members or (game.team or (rows[0]["o"].keys() if rows else ())))
        buf = cls(members, capacity or max(len(rows), 1))
        for row in rows:
            obs, tgs = [], []
            for m in members:
                states = [game.state_by_label(lab) for lab in row["o"][m]]
                if any(s.player != m for s in states):
                    raise GameError(f"observation of {m!r} names a state of another player")
                obs.append(tuple(s.id for s in states))
                tgs.append(tuple(s.actions.index(a) for s, a in zip(states, row["t"][m])))
            buf.add(SampleRecord(tuple(obs), tuple(tgs), float(row.get("r", 0.0))))
        return buf

    @classmethod
    def load(cls, game: Game, path: str | Path, **kw) -> "TrajectoryBuffer":
        return cls.from_jsonl(game, Path(path).read_text(), **kw)


def purge(trajectory: Trajectory, rmap: RefinementMap) -> SampleRecord:
    """Drop what the refined observations add: keep original states and the actions."""
    obs, tgs = [], []
    for steps in trajectory.steps:
        o, t = [], []
        for refined, _, a in steps:
            if refined not in rmap.state_map:
                raise GameError(f"refined state {refined} is not in the refinement map")
            o.append(rmap.state_map[refined])
            t.append(a)
        obs.append(tuple(o))
        tgs.append(tuple(t))
    return SampleRecord(tuple(obs), tuple(tgs), trajectory.reward)


# ---------------------------------------------------------------- episode engine


class _Tree:
    """Flat arrays for fast episode walks."""

    def __init__(self, game: Game):
        self.game = game
        self.kind = [n.kind for n in game.nodes]
        self.player = [n.player for n in game.nodes]
        self.state = [n.infostate for n in game.nodes]
        self.children = [n.children for n in game.nodes]
        self.chance_cdf = [np.cumsum(n.chance_probs) if n.kind == CHANCE_NODE else None for n in game.nodes]


def _tree(game: Game) -> _Tree:
    if "tree" not in game._cache:
        game._cache["tree"] = _Tree(game)
    return game._cache["tree"]


def sample_index(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF draw; zero-probability entries are never returned."""
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    if i >= len(probs):
        i = int(np.flatnonzero(probs > 0)[-1])
    return i


Chooser = Callable[[str, int], int]


def walk(game: Game, choose: Chooser, rng: np.random.Generator) -> tuple[int, list[tuple[str, int, int]]]:
    """Play one episode; returns the leaf and every (player, state, action) decision."""
    tree = _tree(game)
    v = 0
    moves: list[tuple[str, int, int]] = []
    while tree.kind[v] != TERMINAL:
        if tree.kind[v] == CHANCE_NODE:
            cdf = tree.chance_cdf[v]
            a = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(cdf) - 1)
        else:
            p, s = tree.player[v], tree.state[v]
            a = choose(p, s)
            moves.append((p, s, a))
        v = tree.children[v][a]
    return v, moves


def _trajectory(rmap: RefinementMap, leaf: int, moves: list[tuple[str, int, int]]) -> Trajectory:
    refined = rmap.refined
    members = rmap.team
    steps: dict[str, list] = {m: [] for m in members}
    for p, s, a in moves:
        if p == rmap.player:
            m = refined.infostates[s].member
            steps[m].append((s, rmap.state_map[s], a))
    reward = float(refined.nodes[leaf].payoffs[refined.player_index(rmap.player)])
    return Trajectory(members, tuple(tuple(steps[m]) for m in members), leaf, reward)


def _behavioral_table(game: Game, strategy: BehavioralStrategy) -> dict[int, np.ndarray]:
    return {s: np.asarray(v, dtype=float) for s, v in strategy.dist.items()}


def sample_from_equilibrium(rmap: RefinementMap, pi_star: BehavioralStrategy, episodes: int,
                            rng: np.random.Generator, opponent: BehavioralStrategy | None = None,
                            capacity: int | None = None) -> TrajectoryBuffer:
    """Record purged team play of ``pi_star`` (meta-player, refined game) against ``opponent``.

    Without ``opponent`` the other players play uniformly at random.
    """
    refined = rmap.refined
    if pi_star.owner != rmap.player:
        raise GameError(f"strategy of {pi_star.owner!r} given, need the meta-player {rmap.player!r}")
    pi_star.validate(refined)
    tables = {rmap.player: _behavioral_table(refined, pi_star)}
    if opponent is not None:
        opponent.validate(refined)
        tables[opponent.owner] = _behavioral_table(refined, opponent)

    def choose(p: str, s: int) -> int:
        table = tables.get(p)
        if table is None:
            return int(rng.integers(refined.infostates[s].num_actions))
        return sample_index(table[s], rng.random())

    buf = TrajectoryBuffer(rmap.team, capacity or episodes)
    for _ in range(episodes):
        leaf, moves = walk(refined, choose, rng)
        buf.add(purge(_trajectory(rmap, leaf, moves), rmap))
    return buf


# ---------------------------------------------------------------- tabular FSP


@dataclass
class FspConfig:
    learning_rate: float = 0.1
    gamma: float = 1.0
    eta: float = 0.1  # probability of acting with the best-response policy in an episode
    eps_start: float = 0.06
    eps_end: float = 0.0
    capacity: int = 20_000
    seed: int = 0
    optimistic: bool = True  # start Q at each player's largest payoff
    averaging: str = "uniform"  # "linear" weights the greedy action of episode t by t
    count_off_path: bool = True  # False stops counting after the first exploratory move

    def validate(self) -> None:
        if self.capacity <= 0:
            raise ValueError(f"buffer capacity must be positive, got {self.capacity}")
        for name in ("eta", "eps_start", "eps_end"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.averaging not in ("uniform", "linear"):
            raise ValueError(f"averaging must be 'uniform' or 'linear', got {self.averaging!r}")


@dataclass
class FspState:
    """Q-values and average-policy counts of every player, per refined state."""

    q: dict[str, dict[int, np.ndarray]]
    counts: dict[str, dict[int, np.ndarray]]
    eta: float
    eps: float
    episodes: int = 0

    @classmethod
    def fresh(cls, game: Game, config: FspConfig) -> "FspState":
        q = {}
        for p in game.players:
            q0 = float(game.utility(p).max()) if config.optimistic and len(game.leaves) else 0.0
            q[p] = {s.id: np.full(s.num_actions, q0) for s in game.infostates_of(p)}
        c = {p: {s.id: np.zeros(s.num_actions) for s in game.infostates_of(p)} for p in game.players}
        return cls(q, c, config.eta, config.eps_start)

    def average_policy(self, game: Game, player: str) -> BehavioralStrategy:
        dist = {}
        for s, c in self.counts[player].items():
            total = c.sum()
            dist[s] = c / total if total > 0 else np.full(len(c), 1.0 / len(c))
        return BehavioralStrategy(player, dist)


def _greedy(q: np.ndarray) -> int:
    return int(np.argmax(q >= q.max() - 1e-12))


def sample_fsp(rmap: RefinementMap, episodes: int, config: FspConfig | None = None,
               rng: np.random.Generator | None = None, monitor: Callable[[int, FspState], None] | None = None,
               monitor_every: int = 0) -> tuple[TrajectoryBuffer, dict[str, BehavioralStrategy]]:
    """Tabular fictitious self-play on the refined game.

    In each episode every player independently acts from its ε-greedy Q policy
    with probability η, otherwise from its average policy.  Q-values follow
    one-step TD backups along the player's own decisions.  Greedy actions of
    best-response episodes feed the average-policy counts; team play from
    average-policy episodes is purged into the buffer.  With η = 1 no such
    episode exists, so every episode is recorded instead.
    """
    config = config or FspConfig()
    config.validate()
    refined = rmap.refined
    refined.view(rmap.player).require_perfect_recall()
    if rng is None:
        from .rng import stream

        rng = stream(config.seed, "sample")
    state = FspState.fresh(refined, config)
    buf = TrajectoryBuffer(rmap.team, config.capacity)
    players = refined.players
    alpha, gamma = config.learning_rate, config.gamma
    record_all = config.eta >= 1.0
    for ep in range(episodes):
        frac = ep / max(episodes - 1, 1)
        eps = config.eps_start + (config.eps_end - config.eps_start) * frac
        state.eps = eps
        br_mode = {p: rng.random() < config.eta for p in players}
        n_own = {p: 0 for p in players}
        first_explore = {p: math.inf for p in players}

        def choose(p: str, s: int) -> int:
            if br_mode[p]:
                q = state.q[p][s]
                n_own[p] += 1
                if rng.random() < eps:
                    first_explore[p] = min(first_explore[p], n_own[p] - 1)
                    return int(rng.integers(len(q)))
                return _greedy(q)
            c = state.counts[p][s]
            if c.sum() <= 0:
                return int(rng.integers(len(c)))
            return sample_index(c, rng.random())

        leaf, moves = walk(refined, choose, rng)
        payoffs = refined.nodes[leaf].payoffs
        weight = float(ep + 1) if config.averaging == "linear" else 1.0
        own: dict[str, list[tuple[int, int]]] = {p: [] for p in players}
        for p, s, a in moves:
            own[p].append((s, a))
        for p in players:
            seq = own[p]
            r = payoffs[refined.player_index(p)]
            q = state.q[p]
            for i, (s, a) in enumerate(seq):
                target = r if i + 1 == len(seq) else gamma * float(q[seq[i + 1][0]].max())
                if br_mode[p] and (config.count_off_path or i <= first_explore[p]):
                    state.counts[p][s][_greedy(q[s])] += weight
                q[s][a] += alpha * (target - q[s][a])
        if record_all or not br_mode[rmap.player]:
            buf.add(purge(_trajectory(rmap, leaf, moves), rmap))
        state.episodes = ep + 1
        if monitor is not None and monitor_every and (ep + 1) % monitor_every == 0:
            monitor(ep + 1, state)
    return buf, {p: state.average_policy(refined, p) for p in players}
