"""Builders for the coordination and patrolling benchmarks."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .game import Game, GameValidationError, RawNode, make_game

TEAM = ("T1", "T2")
OPPONENT = "O"

MOVES = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1), "stay": (0, 0)}


@dataclass(frozen=True)
class CoordGameSpec:
    horizon: int = 2
    payoff_left: float = 100.0
    payoff_right: float = 100.0

    def validate(self) -> None:
        if self.horizon <= 0 or self.horizon % 2:
            raise GameValidationError(f"horizon must be even and positive, got {self.horizon}")
        if not (math.isfinite(self.payoff_left) and math.isfinite(self.payoff_right)):
            raise GameValidationError("coordination payoffs must be finite")


def coordination_game(spec: CoordGameSpec = CoordGameSpec()) -> Game:
    """O picks L/R unobserved, then T1, T2, T1, ... each move blind.

    Each member has one information state per own move index; the team is paid
    K_L (K_R) iff every team action equals O's action L (R).
    """
    spec.validate()
    movers = [TEAM[i % 2] for i in range(spec.horizon)]

    def team_subtree(o: str, played: tuple[str, ...]) -> RawNode:
        i = len(played)
        if i == spec.horizon:
            win = all(a == o for a in played)
            u = (spec.payoff_left if o == "L" else spec.payoff_right) if win else 0.0
            return RawNode.terminal([u, u, 0.0 - u], label=f"z{o}{''.join(played)}")
        p = movers[i]
        return RawNode.decision(p, f"{p}.{i // 2}", [(a, team_subtree(o, played + (a,))) for a in "LR"],
                                label=f"{o}{''.join(played)}")

    root = RawNode.decision(OPPONENT, "O.0", [(o, team_subtree(o, ())) for o in "LR"], label="root")
    return make_game((*TEAM, OPPONENT), root, team=TEAM, zero_sum=True,
                     attrs={"kind": "coordination", "horizon": spec.horizon,
                            "payoff_left": spec.payoff_left, "payoff_right": spec.payoff_right})


Cell = tuple[int, int]


@dataclass(frozen=True)
class PatrollingSpec:
    grid_side: int = 3
    sites: tuple[Cell, ...] = ((0, 0), (0, 2), (2, 0), (2, 2))
    start: Cell = (1, 1)
    steps: int = 3
    rewards: tuple[float, float] = (1.0, -1.0)

    @classmethod
    def default(cls, grid_side: int = 3, steps: int = 3) -> "PatrollingSpec":
        """Corner sites and a central start on a ``grid_side`` x ``grid_side`` grid."""
        m = grid_side - 1
        return cls(grid_side, ((0, 0), (0, m), (m, 0), (m, m)), (m // 2, m // 2), steps)

    def inside(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.grid_side and 0 <= cell[1] < self.grid_side

    def validate(self) -> None:
        if self.grid_side < 1 or self.steps < 0:
            raise GameValidationError("grid side must be positive and steps non-negative")
        if not self.inside(self.start):
            raise GameValidationError(f"start {self.start} outside the {self.grid_side}x{self.grid_side} grid")
        if len(set(self.sites)) != len(self.sites) or not self.sites:
            raise GameValidationError("sites must be distinct and non-empty")
        for c in self.sites:
            if not self.inside(c):
                raise GameValidationError(f"site {c} outside the grid")
            if abs(c[0] - self.start[0]) + abs(c[1] - self.start[1]) > self.steps:
                raise GameValidationError(f"site {c} is unreachable from {self.start} in {self.steps} moves")


def legal_moves(spec: PatrollingSpec, cell: Cell) -> list[tuple[str, Cell]]:
    out = []
    for name, (dr, dc) in MOVES.items():
        nxt = (cell[0] + dr, cell[1] + dc)
        if spec.inside(nxt):
            out.append((name, nxt))
    return out


def _cells(path: tuple[Cell, ...]) -> str:
    return "-".join(f"{r}{c}" for r, c in path)


def patrolling_game(spec: PatrollingSpec = PatrollingSpec()) -> Game:
    """Two defenders move simultaneously for ``steps`` rounds, then O attacks a site.

    A defender's information state is its own position history and the round;
    moves off the grid are not available.  O sees nothing of the defenders.
    """
    spec.validate()
    success, fail = spec.rewards

    def attack(p1: tuple[Cell, ...], p2: tuple[Cell, ...]) -> RawNode:
        leaves = []
        for k, site in enumerate(spec.sites):
            u = success if p1[-1] == site and p2[-1] == site else fail
            leaves.append((f"site{k}", RawNode.terminal([u, u, 0.0 - u], label=f"z|{_cells(p1)}|{_cells(p2)}|{k}")))
        return RawNode.decision(OPPONENT, "O.attack", leaves, label=f"o|{_cells(p1)}|{_cells(p2)}")

    def t2_turn(p1: tuple[Cell, ...], p2: tuple[Cell, ...], pending: Cell) -> RawNode:
        r = len(p2) - 1
        kids = []
        for name, nxt in legal_moves(spec, p2[-1]):
            q1, q2 = p1 + (pending,), p2 + (nxt,)
            kids.append((name, t1_turn(q1, q2)))
        return RawNode.decision("T2", f"T2.{r}.{_cells(p2)}", kids, label=f"b|{_cells(p1)}|{_cells(p2)}|{pending[0]}{pending[1]}")

    def t1_turn(p1: tuple[Cell, ...], p2: tuple[Cell, ...]) -> RawNode:
        r = len(p1) - 1
        if r == spec.steps:
            return attack(p1, p2)
        kids = [(name, t2_turn(p1, p2, nxt)) for name, nxt in legal_moves(spec, p1[-1])]
        return RawNode.decision("T1", f"T1.{r}.{_cells(p1)}", kids, label=f"a|{_cells(p1)}|{_cells(p2)}")

    root = t1_turn((spec.start,), (spec.start,))
    return make_game((*TEAM, OPPONENT), root, team=TEAM, zero_sum=True, attrs={
        "kind": "patrolling", "grid_side": spec.grid_side, "sites": [list(c) for c in spec.sites],
        "start": list(spec.start), "steps": spec.steps, "rewards": list(spec.rewards)})


def final_positions(game: Game, leaf: int) -> tuple[Cell, Cell, int]:
    """(T1 cell, T2 cell, attacked site index) at a patrolling leaf."""
    if game.attrs.get("kind") != "patrolling":
        raise GameValidationError("not a patrolling game")
    _, h1, h2, k = game.nodes[leaf].label.split("|")
    last = lambda h: (int(h.split("-")[-1][0]), int(h.split("-")[-1][1]))
    return last(h1), last(h2), int(k)


BENCHMARKS = ("coord-2", "coord-4", "coord-2-imb", "patrolling_4_3")


def benchmark(name: str, K: float = 100.0, K_right: float | None = None,
              grid_side: int | None = None, steps: int | None = None) -> Game:
    if name == "coord-2":
        return coordination_game(CoordGameSpec(2, K, K if K_right is None else K_right))
    if name == "coord-4":
        return coordination_game(CoordGameSpec(4, K, K if K_right is None else K_right))
    if name == "coord-2-imb":
        return coordination_game(CoordGameSpec(2, K, K / 2 if K_right is None else K_right))
    if name == "patrolling_4_3":
        return patrolling_game(PatrollingSpec.default(grid_side or 3, 3 if steps is None else steps))
    raise GameValidationError(f"unknown benchmark {name!r}; choose from {', '.join(BENCHMARKS)}")
