"""Finite extensive-form games with chance and information states.

Nodes, information states and actions are dense integers.  Node ids follow
the preorder (depth-first) traversal of the tree, information-state ids the
order in which each state is first met during that traversal, and action ids
the position of the action in its node's action list.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

CHANCE = "chance"

DECISION = "decision"
CHANCE_NODE = "chance"
TERMINAL = "terminal"

PROB_TOL = 1e-9
CHANCE_TOL = 1e-12


class GameError(ValueError):
    """Base class for malformed games and strategies."""


class GameValidationError(GameError):
    """A game violates one of the structural invariants."""


class PerfectRecallError(GameError):
    """An operation needs a perfect-recall player and did not get one."""


@dataclass(frozen=True)
class Node:
    id: int
    kind: str
    label: str
    parent: int
    parent_action: int
    depth: int
    player: str | None = None
    infostate: int = -1
    actions: tuple[str, ...] = ()
    children: tuple[int, ...] = ()
    chance_probs: tuple[float, ...] | None = None
    payoffs: tuple[float, ...] | None = None

    @property
    def is_terminal(self) -> bool:
        return self.kind == TERMINAL


@dataclass(frozen=True)
class Infostate:
    id: int
    player: str
    label: str
    actions: tuple[str, ...]
    nodes: tuple[int, ...]
    # Owner before any team merge; equals ``player`` for ordinary games.
    member: str

    @property
    def num_actions(self) -> int:
        return len(self.actions)


@dataclass
class RawNode:
    """Mutable node used while assembling a tree."""

    kind: str
    label: str = ""
    player: str | None = None
    infostate: str | None = None
    actions: list[str] = field(default_factory=list)
    children: list["RawNode"] = field(default_factory=list)
    probs: list[float] | None = None
    payoffs: list[float] | None = None

    @classmethod
    def decision(cls, player: str, infostate: str, children: Mapping[str, "RawNode"] | Sequence[tuple[str, "RawNode"]], label: str = "") -> "RawNode":
        items = list(children.items()) if isinstance(children, Mapping) else list(children)
        return cls(DECISION, label, player, infostate, [a for a, _ in items], [c for _, c in items])

    @classmethod
    def chance(cls, outcomes: Sequence[tuple[str, float, "RawNode"]], label: str = "") -> "RawNode":
        return cls(CHANCE_NODE, label, CHANCE, None, [a for a, _, _ in outcomes],
                   [c for _, _, c in outcomes], [p for _, p, _ in outcomes])

    @classmethod
    def terminal(cls, payoffs: Sequence[float], label: str = "") -> "RawNode":
        return cls(TERMINAL, label, payoffs=list(payoffs))


class PlayerView:
    """Per-player index structures over the tree (own histories, sequences).

    A *pair* is an (information state, action) combination of the player; pairs
    are numbered contiguously state by state, so the pairs of state ``s`` are
    ``offsets[k] .. offsets[k+1]`` where ``k = local[s]``.
    """

    def __init__(self, game: "Game", player: str):
        self.player = player
        self.states: tuple[int, ...] = tuple(s.id for s in game.infostates if s.player == player)
        self.local = {s: k for k, s in enumerate(self.states)}
        counts = [game.infostates[s].num_actions for s in self.states]
        self.offsets = np.concatenate([[0], np.cumsum(counts, dtype=np.int64)]).astype(np.int64)
        self.n_pairs = int(self.offsets[-1])
        self.pair_state = np.repeat(np.array(self.states, dtype=np.int64), counts) if counts else np.zeros(0, np.int64)
        self.pair_action = (np.arange(self.n_pairs) - np.repeat(self.offsets[:-1], counts)) if counts else np.zeros(0, np.int64)

        # history[v]: pairs of this player on the path root -> v, excluding v
        history: list[tuple[int, ...]] = [()] * len(game.nodes)
        for node in game.nodes[1:]:
            parent = game.nodes[node.parent]
            h = history[parent.id]
            if parent.player == player:
                h = h + (self.pair(parent.infostate, node.parent_action),)
            history[node.id] = h
        self.history = history

        leaves = game.leaves
        width = max((len(history[z]) for z in leaves), default=0)
        mat = np.full((len(leaves), max(width, 1)), self.n_pairs, dtype=np.int64)
        for i, z in enumerate(leaves):
            h = history[z]
            mat[i, : len(h)] = h
        self.leaf_pairs = mat

        self.perfect_recall = all(
            len({frozenset(history[v]) for v in game.infostates[s].nodes}) == 1 for s in self.states
        )
        if self.perfect_recall:
            self.state_parent = np.array(
                [history[game.infostates[s].nodes[0]][-1] if history[game.infostates[s].nodes[0]] else -1 for s in self.states],
                dtype=np.int64,
            )
            self.state_level = np.array([len(history[game.infostates[s].nodes[0]]) for s in self.states], dtype=np.int64)
            self.leaf_parent = np.array([history[z][-1] if history[z] else -1 for z in leaves], dtype=np.int64)
            children: dict[int, list[int]] = {}
            for k, s in enumerate(self.states):
                children.setdefault(int(self.state_parent[k]), []).append(s)
            self.child_states = children  # parent pair (-1 = root) -> states

    def pair(self, state: int, action: int) -> int:
        return int(self.offsets[self.local[state]] + action)

    def flat_uniform(self) -> np.ndarray:
        counts = np.diff(self.offsets)
        return 1.0 / np.repeat(counts, counts).astype(float) if self.n_pairs else np.zeros(0)

    def leaf_reach_flat(self, flat: np.ndarray) -> np.ndarray:
        """Own reach of every leaf for per-pair action probabilities ``flat``."""
        ext = np.append(np.asarray(flat, dtype=float), 1.0)
        return np.prod(ext[self.leaf_pairs], axis=1)

    def require_perfect_recall(self) -> None:
        if not self.perfect_recall:
            raise PerfectRecallError(f"player {self.player!r} does not have perfect recall")


@dataclass(frozen=True, eq=False)
class Game:
    players: tuple[str, ...]
    nodes: tuple[Node, ...]
    infostates: tuple[Infostate, ...]
    team: tuple[str, ...] = ()
    zero_sum: bool = False
    attrs: Mapping[str, Any] = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def root(self) -> Node:
        return self.nodes[0]

    @property
    def leaves(self) -> np.ndarray:
        if "leaves" not in self._cache:
            self._cache["leaves"] = np.array([n.id for n in self.nodes if n.is_terminal], dtype=np.int64)
        return self._cache["leaves"]

    @property
    def leaf_index(self) -> dict[int, int]:
        if "leaf_index" not in self._cache:
            self._cache["leaf_index"] = {int(z): i for i, z in enumerate(self.leaves)}
        return self._cache["leaf_index"]

    @property
    def decision_nodes(self) -> list[Node]:
        return [n for n in self.nodes if n.kind == DECISION]

    def player_index(self, player: str) -> int:
        try:
            return self.players.index(player)
        except ValueError:
            raise GameError(f"unknown player {player!r}") from None

    def check_player(self, player: str) -> None:
        if player == CHANCE:
            raise GameError("the chance player has no strategies")
        self.player_index(player)

    def infostates_of(self, player: str) -> tuple[Infostate, ...]:
        self.player_index(player)
        return tuple(s for s in self.infostates if s.player == player)

    def opponents(self, team: Sequence[str]) -> tuple[str, ...]:
        return tuple(p for p in self.players if p not in team)

    def view(self, player: str) -> PlayerView:
        self.check_player(player)
        key = ("view", player)
        if key not in self._cache:
            self._cache[key] = PlayerView(self, player)
        return self._cache[key]

    @property
    def chance_reach(self) -> np.ndarray:
        """Probability that chance plays towards each leaf."""
        if "chance_reach" not in self._cache:
            reach = np.ones(len(self.nodes))
            for node in self.nodes[1:]:
                parent = self.nodes[node.parent]
                r = reach[parent.id]
                if parent.kind == CHANCE_NODE:
                    r = r * parent.chance_probs[node.parent_action]
                reach[node.id] = r
            self._cache["chance_reach"] = reach[self.leaves]
        return self._cache["chance_reach"]

    @property
    def payoff_matrix(self) -> np.ndarray:
        """Leaves x players array of rewards."""
        if "payoffs" not in self._cache:
            self._cache["payoffs"] = np.array([self.nodes[z].payoffs for z in self.leaves], dtype=float).reshape(
                len(self.leaves), len(self.players)
            )
        return self._cache["payoffs"]

    def utility(self, player: str) -> np.ndarray:
        return self.payoff_matrix[:, self.player_index(player)]

    @property
    def payoff_range(self) -> float:
        u = self.payoff_matrix
        return float(u.max() - u.min()) if u.size else 0.0

    def state_by_label(self, label: str) -> Infostate:
        if "labels" not in self._cache:
            self._cache["labels"] = {s.label: s for s in self.infostates}
        try:
            return self._cache["labels"][label]
        except KeyError:
            raise GameError(f"no information state labelled {label!r}") from None

    @property
    def fingerprint(self) -> str:
        if "fingerprint" not in self._cache:
            from .efgdesc import dump_game

            self._cache["fingerprint"] = hashlib.sha256(dump_game(self).encode()).hexdigest()[:16]
        return self._cache["fingerprint"]

    def path(self, node_id: int) -> list[tuple[int, int]]:
        """(node, action) pairs from the root down to ``node_id``."""
        out = []
        node = self.nodes[node_id]
        while node.parent >= 0:
            out.append((node.parent, node.parent_action))
            node = self.nodes[node.parent]
        return out[::-1]


def make_game(
    players: Sequence[str],
    root: RawNode,
    team: Sequence[str] = (),
    zero_sum: bool = False,
    attrs: Mapping[str, Any] | None = None,
    members: Mapping[str, str] | None = None,
) -> Game:
    """Number a raw tree in preorder, build information states and validate.

    ``members`` optionally maps information-state labels to the team member
    that originally owned them (used by team merges).
    """
    players = tuple(players)
    if len(set(players)) != len(players):
        raise GameValidationError("duplicate player ids")
    if CHANCE in players:
        raise GameValidationError(f"{CHANCE!r} is reserved for the chance player")
    for p in team:
        if p not in players:
            raise GameValidationError(f"team member {p!r} is not a player")

    nodes: list[Node] = []
    state_nodes: dict[str, list[int]] = {}
    state_info: dict[str, tuple[str, tuple[str, ...]]] = {}
    stack: list[tuple[RawNode, int, int, int]] = [(root, -1, -1, 0)]
    children_of: list[list[int]] = []
    seen: set[int] = set()
    while stack:
        raw, parent, action, depth = stack.pop()
        if id(raw) in seen:
            raise GameValidationError("the tree is not acyclic: a node is reachable twice")
        seen.add(id(raw))
        nid = len(nodes)
        if parent >= 0:
            children_of[parent].append(nid)
        children_of.append([])
        kind = raw.kind
        if kind not in (DECISION, CHANCE_NODE, TERMINAL):
            raise GameValidationError(f"unknown node kind {kind!r}")
        if kind == TERMINAL:
            if raw.children:
                raise GameValidationError(f"terminal node {raw.label!r} has children")
            if raw.payoffs is None or len(raw.payoffs) != len(players):
                raise GameValidationError(
                    f"terminal node {raw.label!r} needs {len(players)} payoffs, got {0 if raw.payoffs is None else len(raw.payoffs)}"
                )
            if not all(math.isfinite(float(u)) for u in raw.payoffs):
                raise GameValidationError(f"terminal node {raw.label!r} has non-finite payoffs")
            nodes.append(Node(nid, kind, raw.label, parent, action, depth, payoffs=tuple(float(u) for u in raw.payoffs)))
            continue
        if not raw.actions:
            raise GameValidationError(f"node {raw.label!r} has an empty action set")
        if len(set(raw.actions)) != len(raw.actions):
            raise GameValidationError(f"node {raw.label!r} has duplicate actions")
        if len(raw.children) != len(raw.actions):
            raise GameValidationError(f"node {raw.label!r} has {len(raw.actions)} actions but {len(raw.children)} children")
        if kind == CHANCE_NODE:
            probs = tuple(float(p) for p in (raw.probs or ()))
            if len(probs) != len(raw.actions):
                raise GameValidationError(f"chance node {raw.label!r} needs one probability per action")
            if any(p < 0 for p in probs):
                raise GameValidationError(f"chance node {raw.label!r} has a negative probability")
            total = math.fsum(probs)
            if abs(total - 1.0) > CHANCE_TOL:
                raise GameValidationError(f"chance distribution sums to {total:.12g} at node {raw.label!r}")
            nodes.append(Node(nid, kind, raw.label, parent, action, depth, player=CHANCE,
                              actions=tuple(raw.actions), chance_probs=probs))
        else:
            if raw.player not in players:
                raise GameValidationError(f"node {raw.label!r} is owned by unknown player {raw.player!r}")
            label = raw.infostate if raw.infostate is not None else f"{raw.player}:{raw.label or nid}"
            info = (raw.player, tuple(raw.actions))
            if label in state_info and state_info[label] != info:
                if state_info[label][0] != raw.player:
                    raise GameValidationError(f"information state {label!r} mixes nodes of several players")
                raise GameValidationError(f"nodes of information state {label!r} have different action sets")
            state_info[label] = info
            state_nodes.setdefault(label, []).append(nid)
            nodes.append(Node(nid, kind, raw.label, parent, action, depth, player=raw.player,
                              infostate=-1, actions=tuple(raw.actions)))
        for a in range(len(raw.children) - 1, -1, -1):
            stack.append((raw.children[a], nid, a, depth + 1))

    labels = list(state_nodes)  # insertion order == first preorder encounter
    state_id = {lab: k for k, lab in enumerate(labels)}
    members = dict(members or {})
    infostates = tuple(
        Infostate(state_id[lab], state_info[lab][0], lab, state_info[lab][1], tuple(state_nodes[lab]),
                  members.get(lab, state_info[lab][0]))
        for lab in labels
    )
    node_state = {v: s.id for s in infostates for v in s.nodes}
    out = []
    for n in nodes:
        kw: dict[str, Any] = {"children": tuple(children_of[n.id])}
        if n.kind == DECISION:
            kw["infostate"] = node_state[n.id]
        out.append(replace(n, **kw))
    game = Game(players, tuple(out), infostates, tuple(team), zero_sum, dict(attrs or {}))
    if zero_sum:
        _check_zero_sum(game)
    return game


def _check_zero_sum(game: Game) -> None:
    u = game.payoff_matrix
    if not len(u):
        return
    if game.team:
        t = [game.player_index(p) for p in game.team]
        o = [game.player_index(p) for p in game.opponents(game.team)]
        if np.any(np.abs(u[:, t] - u[:, t[:1]]) > 1e-12):
            raise GameValidationError("zero-sum game with unequal team payoffs")
        if o and np.any(np.abs(u[:, o].sum(axis=1) + u[:, t[0]]) > 1e-9):
            raise GameValidationError("opponent payoffs are not the negated team payoff")
    elif np.any(np.abs(u.sum(axis=1)) > 1e-9):
        raise GameValidationError("payoffs do not sum to zero")
