"""Team merges, recall checks and perfect-recall refinements by inflation."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .game import CHANCE, DECISION, Game, GameError, Infostate
from .strategies import ReducedPlan

META = "T"


class RecallWarning(UserWarning):
    """The team lacks symmetric observability; equivalence guarantees do not apply."""


# ---------------------------------------------------------------- merge


def merge_team(game: Game, team: Sequence[str] | None = None, name: str = META) -> Game:
    """Replace the team by one meta-player whose states are the union of the members' states.

    Node and state ids are unchanged; each state remembers its original owner
    in ``Infostate.member``.  The meta-player sits where the first member was.
    """
    team = tuple(game.team if team is None else team)
    if not team:
        raise GameError("no team to merge")
    if CHANCE in team:
        raise GameError("the chance player cannot be a team member")
    if len(set(team)) != len(team):
        raise GameError(f"duplicate team members in {team}")
    for p in team:
        game.check_player(p)
    if name in game.players and name not in team:
        raise GameError(f"meta-player name {name!r} clashes with an existing player")

    first = min(game.player_index(p) for p in team)
    keep = [i for i, p in enumerate(game.players) if p not in team or i == first]
    players = tuple(name if i == first else game.players[i] for i in keep)
    t = game.player_index(team[0])

    nodes = []
    for n in game.nodes:
        kw = {}
        if n.player in team:
            kw["player"] = name
        if n.payoffs is not None:
            u = n.payoffs
            kw["payoffs"] = tuple(u[t] if i == first else u[i] for i in keep)
        nodes.append(replace(n, **kw) if kw else n)
    states = tuple(replace(s, player=name) if s.player in team else s for s in game.infostates)
    attrs = dict(game.attrs)
    attrs["merged_team"] = list(team)
    merged = Game(players, tuple(nodes), states, (name,) if len(game.team) else (), game.zero_sum, attrs)
    return merged


# ---------------------------------------------------------------- recall


@dataclass(frozen=True)
class RecallReport:
    player: str
    perfect_recall: bool
    a_loss_recall: bool
    perfect_recall_witnesses: tuple[tuple[int, int], ...] = ()
    a_loss_witnesses: tuple[tuple[int, int], ...] = ()

    def to_dict(self) -> dict:
        return {
            "player": self.player,
            "perfect_recall": self.perfect_recall,
            "a_loss_recall": self.a_loss_recall,
            "perfect_recall_witnesses": [list(w) for w in self.perfect_recall_witnesses],
            "a_loss_witnesses": [list(w) for w in self.a_loss_witnesses],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def own_history(game: Game, player: str, node: int) -> tuple[tuple[int, int], ...]:
    """(state, action) pairs of ``player`` on the path to ``node``."""
    view = game.view(player)
    return tuple((int(view.pair_state[q]), int(view.pair_action[q])) for q in view.history[node])


def _traced_to_own_action(h1: Sequence[tuple[int, int]], h2: Sequence[tuple[int, int]]) -> bool:
    """Do the histories take different actions at some state they share?"""
    a1: dict[int, set[int]] = {}
    for s, a in h1:
        a1.setdefault(s, set()).add(a)
    for s, a in h2:
        if s in a1 and a1[s] != {a}:
            return True
    return False


def _history_groups(game: Game, player: str, state: Infostate) -> list[tuple[tuple, int]]:
    """(history, first node) for each distinct own history inside ``state``."""
    groups: dict[tuple, int] = {}
    for v in state.nodes:
        groups.setdefault(own_history(game, player, v), v)
    return list(groups.items())


def recall_report(game: Game, player: str) -> RecallReport:
    game.check_player(player)
    pr: list[tuple[int, int]] = []
    al: list[tuple[int, int]] = []
    for s in game.infostates_of(player):
        groups = _history_groups(game, player, s)
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                (h1, v), (h2, w) = groups[i], groups[j]
                pr.append((v, w))
                if not _traced_to_own_action(h1, h2):
                    al.append((v, w))
    return RecallReport(player, not pr, not al, tuple(pr), tuple(al))


# ---------------------------------------------------------------- refinement maps


@dataclass(frozen=True, eq=False)
class RefinementMap:
    """``refined`` has the same tree as ``original`` with a finer partition for ``player``.

    ``state_map`` sends every refined state id to the original state id it
    subdivides.  ``source`` is the game before the team merge, if any.
    """

    original: Game
    refined: Game
    state_map: Mapping[int, int]
    player: str
    splits: int = 0
    method: str = "identity"
    source: Game | None = None
    team: tuple[str, ...] = ()

    def preimages(self, original_state: int) -> list[int]:
        return sorted(r for r, o in self.state_map.items() if o == original_state)

    def split_states(self) -> dict[int, list[int]]:
        """Original states that were split, with their refined parts."""
        out: dict[int, list[int]] = {}
        for r, o in sorted(self.state_map.items()):
            out.setdefault(o, []).append(r)
        return {o: rs for o, rs in out.items() if len(rs) > 1}

    def lift_plan(self, plan: ReducedPlan) -> dict[int, int]:
        """Choices of a refined-game plan keyed by original state (lowest refined id wins)."""
        out: dict[int, int] = {}
        for s, a in plan.choices:
            out.setdefault(self.state_map[s], a)
        return out

    def summary(self) -> dict:
        parts = self.split_states()
        return {
            "player": self.player,
            "method": self.method,
            "splits": self.splits,
            "original_states": len(self.original.infostates_of(self.player)),
            "refined_states": len(self.refined.infostates_of(self.player)),
            "split_states": {self.original.infostates[o].label: [self.refined.infostates[r].label for r in rs]
                             for o, rs in parts.items()},
        }


def _rebuild(game: Game, player: str, node_class: Mapping[int, int], labels: Mapping[int, str]) -> tuple[Game, dict[int, int]]:
    """Game with ``player``'s nodes regrouped by ``node_class``; returns it and the refined->original map."""
    # every class key maps to one original state; order classes by first node (preorder encounter)
    members: dict[object, list[int]] = {}
    for n in game.nodes:
        if n.kind != DECISION:
            continue
        key = ("p", node_class[n.id]) if n.player == player else ("o", n.infostate)
        members.setdefault(key, []).append(n.id)
    new_states: list[Infostate] = []
    state_map: dict[int, int] = {}
    node_state: dict[int, int] = {}
    for sid, (key, nodes) in enumerate(members.items()):
        orig = game.infostates[game.nodes[nodes[0]].infostate]
        label = labels.get(key[1], orig.label) if key[0] == "p" else orig.label
        new_states.append(Infostate(sid, orig.player, label, orig.actions, tuple(nodes), orig.member))
        state_map[sid] = orig.id
        for v in nodes:
            node_state[v] = sid
    nodes = tuple(replace(n, infostate=node_state[n.id]) if n.kind == DECISION else n for n in game.nodes)
    refined = Game(game.players, nodes, tuple(new_states), game.team, game.zero_sum, dict(game.attrs))
    return refined, state_map


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def complete_inflation(game: Game, player: str) -> RefinementMap:
    """Split ``player``'s states until no immediate inflation applies.

    Two nodes of a state are separable when, at some state they both passed
    through in the current partition, the player chose different actions.
    Each pass splits every state into the connected components of the
    non-separable relation; passes repeat until the partition is stable.
    Separability only grows as states split, so the fixed point does not
    depend on the processing order.
    """
    game.check_player(player)
    # own decision nodes along each path, with the action taken there
    path_nodes: dict[int, tuple[tuple[int, int], ...]] = {}
    for n in game.nodes:
        if n.player == player and n.kind == DECISION:
            steps, cur = [], n
            while cur.parent >= 0:
                par = game.nodes[cur.parent]
                if par.player == player:
                    steps.append((par.id, cur.parent_action))
                cur = par
            path_nodes[n.id] = tuple(reversed(steps))
    cls = {v: game.nodes[v].infostate for v in path_nodes}  # current class per node, keyed by original state id
    next_id = max((s.id for s in game.infostates), default=-1) + 1
    splits = 0
    changed = True
    while changed:
        changed = False
        by_class: dict[int, list[int]] = {}
        for v in sorted(path_nodes):
            by_class.setdefault(cls[v], []).append(v)
        for c in sorted(by_class):
            nodes = by_class[c]
            sigs: dict[tuple, list[int]] = {}
            for v in nodes:
                sigs.setdefault(tuple((cls[u], a) for u, a in path_nodes[v]), []).append(v)
            keys = list(sigs)
            if len(keys) == 1:
                continue
            uf = _UnionFind(len(keys))
            for i in range(len(keys)):
                for j in range(i + 1, len(keys)):
                    if not _traced_to_own_action(keys[i], keys[j]):
                        uf.union(i, j)
            roots = sorted({uf.find(i) for i in range(len(keys))})
            if len(roots) == 1:
                continue
            changed = True
            splits += len(roots) - 1
            for r in roots[1:]:
                for i in range(len(keys)):
                    if uf.find(i) == r:
                        for v in sigs[keys[i]]:
                            cls[v] = next_id
                next_id += 1
    return _finish(game, player, cls, splits, "complete_inflation")


def _finish(game: Game, player: str, cls: Mapping[int, int], splits: int, method: str) -> RefinementMap:
    # label split parts "<state>/<k>" in order of their first node
    parts: dict[int, list[int]] = {}
    first: dict[int, int] = {}
    for v in sorted(cls):
        c = cls[v]
        if c not in first:
            first[c] = v
            parts.setdefault(game.nodes[v].infostate, []).append(c)
    labels = {}
    for orig, cs in parts.items():
        if len(cs) > 1:
            for k, c in enumerate(cs):
                labels[c] = f"{game.infostates[orig].label}/{k}"
    refined, state_map = _rebuild(game, player, cls, labels)
    return RefinementMap(game, refined, state_map, player, splits, method)


def information_sharing(game: Game, player: str) -> RefinementMap:
    """Split every state of ``player`` by the full own (state, action) history."""
    game.check_player(player)
    cls: dict[int, int] = {}
    keys: dict[tuple, int] = {}
    splits = 0
    per_state: dict[int, set] = {}
    for n in game.nodes:
        if n.player == player and n.kind == DECISION:
            key = (n.infostate, own_history(game, player, n.id))
            if key not in keys:
                keys[key] = len(keys)
                per_state.setdefault(n.infostate, set()).add(key)
            cls[n.id] = keys[key]
    splits = sum(len(v) - 1 for v in per_state.values())
    return _finish(game, player, cls, splits, "information_sharing")


def identity_map(game: Game, player: str) -> RefinementMap:
    return RefinementMap(game, game, {s.id: s.id for s in game.infostates}, player, 0, "identity")


def perfect_recall_refinement(game: Game, team: Sequence[str] | None = None) -> RefinementMap:
    """Merge the team, then refine the meta-player until it has perfect recall."""
    team = tuple(game.team if team is None else team)
    merged = merge_team(game, team)
    report = recall_report(merged, META)
    if report.perfect_recall:
        rmap = identity_map(merged, META)
    elif report.a_loss_recall:
        rmap = complete_inflation(merged, META)
    else:
        warnings.warn("the team lacks symmetric observability: refining by full information sharing",
                      RecallWarning, stacklevel=2)
        rmap = information_sharing(merged, META)
    return replace(rmap, source=game, team=team)


def is_refinement(rmap: RefinementMap) -> bool:
    """Same tree, a finer partition for the player only, and perfect recall for it."""
    g, r = rmap.original, rmap.refined
    if len(g.nodes) != len(r.nodes) or g.players != r.players:
        return False
    for a, b in zip(g.nodes, r.nodes):
        if (a.kind, a.parent, a.parent_action, a.player, a.actions, a.children, a.payoffs, a.chance_probs) != (
                b.kind, b.parent, b.parent_action, b.player, b.actions, b.children, b.payoffs, b.chance_probs):
            return False
    if set(rmap.state_map) != {s.id for s in r.infostates}:
        return False
    for v in (n for n in g.nodes if n.kind == DECISION):
        rs = r.nodes[v.id].infostate
        if rmap.state_map.get(rs) != v.infostate:
            return False  # refined state straddles two original states
        if r.infostates[rs].actions != g.infostates[v.infostate].actions:
            return False
        if v.player != rmap.player:
            # other players keep their partition
            if set(r.infostates[rs].nodes) != set(g.infostates[v.infostate].nodes):
                return False
    return recall_report(r, rmap.player).perfect_recall
