"""Behavioral, normal-form and coordinated strategies and the maps between them."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol, Sequence, Union

import numpy as np

from .game import PROB_TOL, Game, GameError, PlayerView


class StrategyError(GameError):
    """A strategy does not match its game or owner."""


@dataclass(frozen=True, eq=False)
class BehavioralStrategy:
    owner: str
    dist: Mapping[int, np.ndarray]

    def validate(self, game: Game) -> None:
        states = {s.id for s in game.infostates_of(self.owner)}
        if set(self.dist) != states:
            raise StrategyError(f"behavioral strategy of {self.owner!r} does not cover exactly its information states")
        for s, v in self.dist.items():
            v = np.asarray(v, dtype=float)
            if v.shape != (game.infostates[s].num_actions,) or np.any(v < -PROB_TOL) or abs(v.sum() - 1) > PROB_TOL:
                raise StrategyError(f"state {game.infostates[s].label!r}: {v} is not a distribution over its actions")

    def flat(self, game: Game) -> np.ndarray:
        view = game.view(self.owner)
        out = np.empty(view.n_pairs)
        for s in view.states:
            k = view.local[s]
            out[view.offsets[k]: view.offsets[k + 1]] = self.dist[s]
        return out

    @classmethod
    def from_flat(cls, game: Game, owner: str, flat: np.ndarray) -> "BehavioralStrategy":
        view = game.view(owner)
        return cls(owner, {s: np.array(flat[view.offsets[k]: view.offsets[k + 1]], dtype=float)
                           for k, s in enumerate(view.states)})

    def __getitem__(self, state: int) -> np.ndarray:
        return self.dist[state]


@dataclass(frozen=True, order=True)
class ReducedPlan:
    owner: str
    choices: tuple[tuple[int, int], ...]

    def action(self, state: int) -> int | None:
        for s, a in self.choices:
            if s == state:
                return a
        return None

    def as_dict(self) -> dict[int, int]:
        return dict(self.choices)

    def label(self, game: Game) -> str:
        return ",".join(f"{game.infostates[s].label}:{game.infostates[s].actions[a]}" for s, a in self.choices) or "-"


JointPlan = tuple[ReducedPlan, ...]


@dataclass(frozen=True, eq=False)
class NormalFormStrategy:
    owner: str
    probs: Mapping[ReducedPlan, float]

    def validate(self, game: Game) -> None:
        plans = set(enumerate_reduced_plans(game, self.owner))
        if any(p not in plans for p in self.probs):
            raise StrategyError(f"normal-form strategy of {self.owner!r} uses plans outside its plan set")
        total = math.fsum(self.probs.values())
        if any(v < -PROB_TOL for v in self.probs.values()) or abs(total - 1) > PROB_TOL:
            raise StrategyError(f"normal-form strategy of {self.owner!r} sums to {total}")


@dataclass(frozen=True, eq=False)
class CoordinatedStrategy:
    team: tuple[str, ...]
    probs: Mapping[JointPlan, float]

    @property
    def owner(self) -> tuple[str, ...]:
        return self.team

    def validate(self, game: Game) -> None:
        sets = [set(enumerate_reduced_plans(game, p)) for p in self.team]
        for joint in self.probs:
            if len(joint) != len(self.team) or any(q not in s for q, s in zip(joint, sets)):
                raise StrategyError("coordinated strategy uses an invalid joint plan")
        total = math.fsum(self.probs.values())
        if any(v < -PROB_TOL for v in self.probs.values()) or abs(total - 1) > PROB_TOL:
            raise StrategyError(f"coordinated strategy sums to {total}")

    def leaf_reach(self, game: Game) -> np.ndarray:
        reach = np.zeros(len(game.leaves))
        index = [plan_index(game, p) for p in self.team]
        mats = [plan_leaf_matrix(game, p) for p in self.team]
        for joint, w in self.probs.items():
            if w == 0.0:
                continue
            hit = np.ones(len(game.leaves), dtype=bool)
            for q, idx, m in zip(joint, index, mats):
                hit &= m[idx[q]]
            reach += w * hit
        return reach

    def marginal(self, member: str) -> NormalFormStrategy:
        j = self.team.index(member)
        out: dict[ReducedPlan, float] = {}
        for joint, w in self.probs.items():
            out[joint[j]] = out.get(joint[j], 0.0) + w
        return NormalFormStrategy(member, out)


class JointReach(Protocol):
    """Anything that assigns a joint reach probability to each leaf for a group of players."""

    team: tuple[str, ...]

    def leaf_reach(self, game: Game) -> np.ndarray: ...


Strategy = Union[BehavioralStrategy, NormalFormStrategy, CoordinatedStrategy]


def owners(strategy) -> tuple[str, ...]:
    if isinstance(strategy, (BehavioralStrategy, NormalFormStrategy)):
        return (strategy.owner,)
    return tuple(strategy.team)


# ---------------------------------------------------------------- plans


def enumerate_reduced_plans(game: Game, player: str) -> list[ReducedPlan]:
    """All reduced normal-form plans of ``player``, sorted by (state id, action id).

    A state belongs to a plan's domain iff one of its nodes has an own history
    contained in the plan.  Works for imperfect-recall players too.
    """
    game.check_player(player)
    key = ("plans", player)
    if key in game._cache:
        return game._cache[key]
    view = game.view(player)
    if view.perfect_recall:
        raw = [c for c, _ in _forest_plans(game, view, view.child_states.get(-1, []), None)]
    else:
        raw = _search_plans(game, view)
    plans = sorted((ReducedPlan(player, tuple(sorted(c))) for c in raw), key=lambda p: p.choices)
    game._cache[key] = plans
    return plans


def _forest_plans(game: Game, view: PlayerView, states: Sequence[int], flat: np.ndarray | None):
    """(choices, probability) for every joint choice over the subtrees rooted at ``states``.

    Perfect recall only.  With ``flat`` given, zero-probability branches are pruned.
    """
    combos: list[tuple[tuple, float]] = [((), 1.0)]
    for s in states:
        options: list[tuple[tuple, float]] = []
        for a in range(game.infostates[s].num_actions):
            q = view.pair(s, a)
            p = 1.0 if flat is None else float(flat[q])
            if flat is not None and p <= 0.0:
                continue
            for sub, w in _forest_plans(game, view, view.child_states.get(q, []), flat):
                options.append((((s, a),) + sub, p * w))
        combos = [(c + o, w * v) for c, w in combos for o, v in options]
    return combos


def _search_plans(game: Game, view: PlayerView) -> list[tuple]:
    domain = _domain_fn(game, view.player)
    out: list[tuple] = []

    def search(assign: dict[int, int]) -> None:
        s = next((t for t in view.states if t not in assign and domain(t, assign)), None)
        if s is None:
            out.append(tuple(assign.items()))
            return
        for a in range(game.infostates[s].num_actions):
            assign[s] = a
            search(assign)
            del assign[s]

    search({})
    return out


def plan_index(game: Game, player: str) -> dict[ReducedPlan, int]:
    key = ("plan_index", player)
    if key not in game._cache:
        game._cache[key] = {p: i for i, p in enumerate(enumerate_reduced_plans(game, player))}
    return game._cache[key]


def plan_indicator(game: Game, player: str) -> np.ndarray:
    """plans x (pairs + 1) 0/1 matrix; the extra column is always 1."""
    key = ("plan_indicator", player)
    if key not in game._cache:
        view = game.view(player)
        plans = enumerate_reduced_plans(game, player)
        ind = np.zeros((len(plans), view.n_pairs + 1), dtype=bool)
        ind[:, -1] = True
        for i, p in enumerate(plans):
            for s, a in p.choices:
                ind[i, view.pair(s, a)] = True
        game._cache[key] = ind
    return game._cache[key]


def plan_leaf_matrix(game: Game, player: str) -> np.ndarray:
    """plans x leaves boolean matrix: does the plan play towards the leaf."""
    key = ("plan_leaf", player)
    if key not in game._cache:
        view = game.view(player)
        ind = plan_indicator(game, player)
        out = np.ones((ind.shape[0], len(game.leaves)), dtype=bool)
        for col in range(view.leaf_pairs.shape[1]):
            out &= ind[:, view.leaf_pairs[:, col]]
        game._cache[key] = out
    return game._cache[key]


def plan_probabilities(game: Game, player: str, flat: np.ndarray) -> np.ndarray:
    """Probability of each reduced plan when ``player`` picks actions independently per state.

    This is the product of the per-state probabilities over the plan's own
    choices; it sums to one whenever no state repeats along a path.
    """
    view = game.view(player)
    ind = plan_indicator(game, player)[:, :-1]
    if view.n_pairs == 0:
        return np.ones(ind.shape[0])
    logs = np.where(ind, np.log(np.maximum(flat, 1e-300))[None, :], 0.0)
    zero = np.any(ind & (np.asarray(flat)[None, :] <= 0.0), axis=1)
    probs = np.exp(logs.sum(axis=1))
    probs[zero] = 0.0
    return probs


def complete_plan(game: Game, player: str, partial: Mapping[int, int]) -> ReducedPlan:
    """The reduced plan that follows ``partial`` and plays action 0 wherever it is silent."""
    view = game.view(player)
    assign: dict[int, int] = {}
    if view.perfect_recall:
        todo = list(view.child_states.get(-1, []))
        while todo:
            s = todo.pop()
            a = partial.get(s, 0)
            assign[s] = a
            todo.extend(view.child_states.get(view.pair(s, a), []))
    else:
        domain = _domain_fn(game, player)
        while True:
            s = next((t for t in view.states if t not in assign and domain(t, assign)), None)
            if s is None:
                break
            assign[s] = partial.get(s, 0)
    return ReducedPlan(player, tuple(sorted(assign.items())))


def _domain_fn(game: Game, player: str):
    view = game.view(player)
    hist = {s: {frozenset((int(view.pair_state[q]), int(view.pair_action[q])) for q in view.history[v])
                for v in game.infostates[s].nodes} for s in view.states}

    def reachable(s: int, assign: Mapping[int, int]) -> bool:
        return any(all(assign.get(t) == a for t, a in h) for h in hist[s])

    return reachable


# ---------------------------------------------------------------- reach & value


def leaf_reach(game: Game, strategy) -> np.ndarray:
    """Own reach probability of every leaf (aligned with ``game.leaves``)."""
    if isinstance(strategy, BehavioralStrategy):
        return game.view(strategy.owner).leaf_reach_flat(strategy.flat(game))
    if isinstance(strategy, NormalFormStrategy):
        idx = plan_index(game, strategy.owner)
        mat = plan_leaf_matrix(game, strategy.owner)
        w = np.zeros(mat.shape[0])
        for p, v in strategy.probs.items():
            if p not in idx:
                raise StrategyError(f"plan {p} is not a plan of {strategy.owner!r}")
            w[idx[p]] += v
        return w @ mat
    if hasattr(strategy, "leaf_reach"):
        return np.asarray(strategy.leaf_reach(game), dtype=float)
    raise StrategyError(f"unsupported strategy type {type(strategy).__name__}")


def reach_probabilities(game: Game, strategy, player: str | Sequence[str] | None = None) -> dict[int, float]:
    own = owners(strategy)
    if player is not None:
        want = (player,) if isinstance(player, str) else tuple(player)
        if want != own:
            raise StrategyError(f"strategy belongs to {own}, not {want}")
    return {int(z): float(r) for z, r in zip(game.leaves, leaf_reach(game, strategy))}


def _profile_list(profile) -> list:
    if isinstance(profile, Mapping):
        return list(profile.values())
    if isinstance(profile, (BehavioralStrategy, NormalFormStrategy, CoordinatedStrategy)):
        return [profile]
    return list(profile)


def profile_reach(game: Game, profile, exclude: Iterable[str] = ()) -> np.ndarray:
    """Chance reach times the reach of every listed strategy, per leaf."""
    exclude = set(exclude)
    reach = game.chance_reach.copy()
    for strat in _profile_list(profile):
        if set(owners(strat)) & exclude:
            continue
        reach *= leaf_reach(game, strat)
    return reach


def check_profile(game: Game, profile) -> None:
    covered: list[str] = []
    for strat in _profile_list(profile):
        covered.extend(owners(strat))
    if sorted(covered) != sorted(game.players):
        raise StrategyError(f"profile covers {covered}, game players are {list(game.players)}")


def expected_value(game: Game, profile) -> dict[str, float]:
    """Expected payoff of every player under a full profile."""
    check_profile(game, profile)
    reach = profile_reach(game, profile)
    values = reach @ game.payoff_matrix
    return {p: float(v) for p, v in zip(game.players, values)}


# ---------------------------------------------------------------- conversions


def behavioral_to_normal_form(game: Game, pi: BehavioralStrategy) -> NormalFormStrategy:
    """Realization-equivalent mixed plan: each plan weighs the product of its own choices.

    Only plans with positive probability are listed.
    """
    view = game.view(pi.owner)
    view.require_perfect_recall()
    support = _forest_plans(game, view, view.child_states.get(-1, []), pi.flat(game))
    probs: dict[ReducedPlan, float] = {}
    for c, w in support:
        if w > 0.0:
            probs[ReducedPlan(pi.owner, tuple(sorted(c)))] = w
    return NormalFormStrategy(pi.owner, probs)


def realization_plan(game: Game, strategy) -> np.ndarray:
    """Sequence-form realization weight of every own (state, action) pair (perfect recall only)."""
    owner = strategy.owner
    view = game.view(owner)
    view.require_perfect_recall()
    if isinstance(strategy, BehavioralStrategy):
        flat = strategy.flat(game)
        x = np.zeros(view.n_pairs)
        for k in np.argsort(view.state_level, kind="stable"):
            parent = view.state_parent[k]
            base = 1.0 if parent < 0 else x[parent]
            lo, hi = view.offsets[k], view.offsets[k + 1]
            x[lo:hi] = base * flat[lo:hi]
        return x
    ind = plan_indicator(game, owner)[:, :-1]
    idx = plan_index(game, owner)
    w = np.zeros(ind.shape[0])
    for p, v in strategy.probs.items():
        w[idx[p]] += v
    return w @ ind


def realization_to_behavioral(game: Game, owner: str, x: np.ndarray) -> BehavioralStrategy:
    """Behavioral strategy with realization plan ``x``; uniform where the state is unreachable."""
    view = game.view(owner)
    view.require_perfect_recall()
    flat = np.empty(view.n_pairs)
    for k in range(len(view.states)):
        lo, hi = view.offsets[k], view.offsets[k + 1]
        parent = view.state_parent[k]
        base = 1.0 if parent < 0 else x[parent]
        seg = x[lo:hi]
        total = seg.sum()
        if base > 0 and total > 0:
            flat[lo:hi] = seg / total
        else:
            flat[lo:hi] = 1.0 / (hi - lo)
    return BehavioralStrategy.from_flat(game, owner, flat)


def normal_form_to_behavioral(game: Game, mu: NormalFormStrategy) -> BehavioralStrategy:
    return realization_to_behavioral(game, mu.owner, realization_plan(game, mu))


def realization_equivalent(game: Game, a, b, tol: float = 1e-9) -> bool:
    if owners(a) != owners(b):
        raise StrategyError(f"owner mismatch: {owners(a)} vs {owners(b)}")
    return float(np.max(np.abs(leaf_reach(game, a) - leaf_reach(game, b)), initial=0.0)) <= tol


def product_strategy(game: Game, members: Sequence) -> CoordinatedStrategy:
    """Coordinated strategy of independently playing members (no correlation)."""
    per: list[list[tuple[ReducedPlan, float]]] = []
    for strat in members:
        if isinstance(strat, BehavioralStrategy):
            probs = plan_probabilities(game, strat.owner, strat.flat(game))
            items = [(p, float(w)) for p, w in zip(enumerate_reduced_plans(game, strat.owner), probs) if w > 0]
        else:
            items = [(p, float(w)) for p, w in strat.probs.items() if w > 0]
        per.append(items)
    out: dict[JointPlan, float] = {}
    for combo in itertools.product(*per):
        out[tuple(p for p, _ in combo)] = math.prod(w for _, w in combo)
    return CoordinatedStrategy(tuple(s.owner for s in members), out)


def uniform_behavioral(game: Game, player: str) -> BehavioralStrategy:
    return BehavioralStrategy.from_flat(game, player, game.view(player).flat_uniform())


def pure_behavioral(game: Game, player: str, choices: Mapping[int, int] | None = None) -> BehavioralStrategy:
    """Pure behavioral strategy; states missing from ``choices`` play action 0."""
    choices = choices or {}
    dist = {}
    for s in game.infostates_of(player):
        v = np.zeros(s.num_actions)
        v[choices.get(s.id, 0)] = 1.0
        dist[s.id] = v
    return BehavioralStrategy(player, dist)


def point_mass(owner: str, plan: ReducedPlan) -> NormalFormStrategy:
    return NormalFormStrategy(owner, {plan: 1.0})


def plan_by_labels(game: Game, player: str, choices: Mapping[str, str]) -> ReducedPlan:
    """Look up a reduced plan from {state label: action label}."""
    want = {}
    for lab, act in choices.items():
        s = game.state_by_label(lab)
        want[s.id] = s.actions.index(act)
    plan = ReducedPlan(player, tuple(sorted(want.items())))
    if plan not in plan_index(game, player):
        raise StrategyError(f"{choices} is not a reduced plan of {player!r}")
    return plan


# ---------------------------------------------------------------- serialization


def _plan_to_dict(game: Game, plan: ReducedPlan) -> dict[str, str]:
    return {game.infostates[s].label: game.infostates[s].actions[a] for s, a in plan.choices}


def strategy_to_dict(game: Game, strategy) -> dict:
    if isinstance(strategy, BehavioralStrategy):
        return {
            "type": "behavioral",
            "owner": strategy.owner,
            "dist": {
                game.infostates[s].label: {a: float(p) for a, p in zip(game.infostates[s].actions, strategy.dist[s])}
                for s in sorted(strategy.dist)
            },
        }
    if isinstance(strategy, NormalFormStrategy):
        return {
            "type": "normal_form",
            "owner": strategy.owner,
            "plans": [{"plan": _plan_to_dict(game, p), "p": float(w)} for p, w in sorted(strategy.probs.items(), key=lambda kv: kv[0].choices)],
        }
    if isinstance(strategy, CoordinatedStrategy):
        items = sorted(strategy.probs.items(), key=lambda kv: tuple(q.choices for q in kv[0]))
        return {
            "type": "coordinated",
            "team": list(strategy.team),
            "plans": [{"plans": [_plan_to_dict(game, q) for q in joint], "p": float(w)} for joint, w in items],
        }
    raise StrategyError(f"cannot serialize {type(strategy).__name__}")


def strategy_from_dict(game: Game, data: Mapping) -> Strategy:
    kind = data.get("type")
    if kind == "behavioral":
        dist = {}
        for lab, probs in data["dist"].items():
            s = game.state_by_label(lab)
            dist[s.id] = np.array([float(probs[a]) for a in s.actions])
        out = BehavioralStrategy(data["owner"], dist)
    elif kind == "normal_form":
        out = NormalFormStrategy(data["owner"], {plan_by_labels(game, data["owner"], e["plan"]): float(e["p"]) for e in data["plans"]})
    elif kind == "coordinated":
        team = tuple(data["team"])
        out = CoordinatedStrategy(team, {
            tuple(plan_by_labels(game, m, q) for m, q in zip(team, e["plans"])): float(e["p"]) for e in data["plans"]
        })
    else:
        raise StrategyError(f"unknown strategy type {kind!r}")
    out.validate(game)
    return out
