"""Best responses, fictitious play, the joint-plan matrix oracle and the refinement pipeline."""

from __future__ import annotations

import itertools
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .game import Game, GameError
from .refinement import RecallWarning, RefinementMap, perfect_recall_refinement
from .strategies import (
    BehavioralStrategy,
    CoordinatedStrategy,
    NormalFormStrategy,
    ReducedPlan,
    behavioral_to_normal_form,
    complete_plan,
    enumerate_reduced_plans,
    leaf_reach,
    owners,
    plan_leaf_matrix,
    profile_reach,
    realization_to_behavioral,
)

TIE_TOL = 1e-12
PLAN_CAP = 10**6


class CapExceeded(GameError):
    """The joint plan space is too large for the matrix oracle."""


def default_tol(game: Game) -> float:
    return 1e-3 * game.payoff_range


# ---------------------------------------------------------------- best response


class _SeqForm:
    """Level-by-level index arrays for vectorized best responses of one player."""

    def __init__(self, game: Game, player: str):
        view = game.view(player)
        view.require_perfect_recall()
        self.view = view
        n = view.n_pairs
        self.root = n  # extra slot collects values that reach no own pair
        self.leaf_slot = np.where(view.leaf_parent < 0, n, view.leaf_parent)
        self.levels = []
        counts = np.diff(view.offsets)
        for lev in sorted(set(view.state_level.tolist()), reverse=True):
            ks = np.flatnonzero(view.state_level == lev)
            idx = np.concatenate([np.arange(view.offsets[k], view.offsets[k + 1]) for k in ks])
            starts = np.concatenate([[0], np.cumsum(counts[ks])[:-1]])
            parent = np.where(view.state_parent[ks] < 0, n, view.state_parent[ks])
            local = view.pair_action[idx]
            self.levels.append((ks, idx, starts, parent, local, counts[ks]))

    def solve(self, leaf_weight: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
        """Pure best response to per-leaf weights: (choice per state, value, pair values)."""
        n = self.view.n_pairs
        val = np.bincount(self.leaf_slot, weights=leaf_weight, minlength=n + 1).astype(float)
        choice = np.zeros(len(self.view.states), dtype=np.int64)
        for ks, idx, starts, parent, local, counts in self.levels:
            seg = val[idx]
            best = np.maximum.reduceat(seg, starts)
            hit = seg >= np.repeat(best, counts) - TIE_TOL
            first = np.minimum.reduceat(np.where(hit, local, np.iinfo(np.int64).max), starts)
            choice[ks] = first
            np.add.at(val, parent, seg[starts + first])
        return choice, float(val[n]), val

    def pure_flat(self, choice: np.ndarray) -> np.ndarray:
        flat = np.zeros(self.view.n_pairs)
        flat[self.view.offsets[:-1] + choice] = 1.0
        return flat

    def realization(self, choice: np.ndarray) -> np.ndarray:
        """Realization plan (0/1 per pair) of the pure strategy ``choice``."""
        view = self.view
        x = np.zeros(view.n_pairs + 1)
        x[view.n_pairs] = 1.0
        for ks, _, _, parent, _, _ in reversed(self.levels):  # top-down
            x[view.offsets[ks] + choice[ks]] = x[parent]
        return x[:-1]


def _seqform(game: Game, player: str) -> _SeqForm:
    key = ("seqform", player)
    if key not in game._cache:
        game._cache[key] = _SeqForm(game, player)
    return game._cache[key]


def best_response(game: Game, responder: str, others) -> tuple[BehavioralStrategy, float]:
    """Pure behavioral best response of ``responder`` to the others' fixed strategies.

    ``others`` is a strategy, a list or a mapping of strategies covering every
    other non-chance player (coordinated or signal-mediated team strategies
    are fine).  Ties go to the lowest action id.
    """
    game.check_player(responder)
    seq = _seqform(game, responder)
    strategies = list(others.values()) if isinstance(others, Mapping) else (
        [others] if hasattr(others, "owner") or hasattr(others, "team") else list(others))
    covered = [p for s in strategies for p in owners(s)]
    if responder in covered:
        raise GameError(f"{responder!r} cannot be among the fixed strategies")
    if sorted(covered + [responder]) != sorted(game.players):
        raise GameError(f"fixed strategies cover {covered}; need every player but {responder!r}")
    w = profile_reach(game, strategies) * game.utility(responder)
    choice, value, _ = seq.solve(w)
    return BehavioralStrategy.from_flat(game, responder, seq.pure_flat(choice)), value


# ---------------------------------------------------------------- results


@dataclass
class SolveResult:
    team_strategy: Any
    opponent_strategy: Any
    value: float
    epsilon: float
    iterations: int
    seconds: float = 0.0
    extras: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"value": self.value, "epsilon": self.epsilon, "iterations": self.iterations}


# ---------------------------------------------------------------- fictitious play


@dataclass
class FpTrace:
    lower: list[float] = field(default_factory=list)  # running max of guaranteed team value
    upper: list[float] = field(default_factory=list)  # running min of the team's best-response value
    epsilon: list[float] = field(default_factory=list)


def solve_zero_sum(game: Game, tol: float | None = None, max_iters: int = 200_000,
                   trace: FpTrace | None = None) -> SolveResult:
    """Fictitious play with exact best responses, averaging in realization space.

    The first player of ``game.players`` is reported as the team side.  Players
    update in turn: each best-responds to the other's current average and that
    average absorbs the response with weight 1/t.  After every half-step the
    gap of the current pair of averages is known exactly from the two latest
    responses, so ``epsilon`` is the true exploitability sum at exit.
    """
    start = time.perf_counter()
    if len(game.players) != 2:
        raise GameError(f"need exactly two players, got {game.players}")
    if not game.zero_sum:
        raise GameError("fictitious play here needs a zero-sum game")
    tol = default_tol(game) if tol is None else tol
    p, q = game.players
    sp, sq = _seqform(game, p), _seqform(game, q)
    base_p = game.chance_reach * game.utility(p)  # team payoff weights
    base_q = game.chance_reach * game.utility(q)

    def reach(seq: _SeqForm, x: np.ndarray) -> np.ndarray:
        return np.append(x, 1.0)[seq.leaf_slot]

    # the averages start at the first responses, so never-played actions keep zero weight
    cp, _, _ = sp.solve(base_p * reach(sq, realization_of(game, q, sq.view.flat_uniform())))
    xp = sp.realization(cp)
    cq, vq, _ = sq.solve(base_q * reach(sp, xp))
    xq = sq.realization(cq)
    cp, vp, _ = sp.solve(base_p * reach(sq, xq))
    lower, upper = -math.inf, math.inf
    it = 1

    def record(vp: float, vq: float) -> float:
        nonlocal lower, upper
        upper = min(upper, vp)
        lower = max(lower, -vq)
        if trace is not None:
            trace.lower.append(lower)
            trace.upper.append(upper)
            trace.epsilon.append(vp + vq)
        return vp + vq

    eps = record(vp, vq)
    # alternating updates: each player answers the other's freshest average
    while eps > tol and it < max_iters:
        it += 1
        xp += (sp.realization(cp) - xp) / it
        cq, vq, _ = sq.solve(base_q * reach(sp, xp))
        eps = record(vp, vq)
        if eps <= tol:
            break
        xq += (sq.realization(cq) - xq) / it
        cp, vp, _ = sp.solve(base_p * reach(sq, xq))
        eps = record(vp, vq)
    value = float(np.sum(base_p * reach(sp, xp) * reach(sq, xq)))
    res = SolveResult(
        realization_to_behavioral(game, p, xp), realization_to_behavioral(game, q, xq),
        value, max(float(eps), 0.0), it, time.perf_counter() - start,
        {"lower": lower, "upper": upper, "realization": {p: xp.copy(), q: xq.copy()}},
    )
    return res


def realization_of(game: Game, player: str, flat: np.ndarray) -> np.ndarray:
    seq = _seqform(game, player)
    view = seq.view
    x = np.zeros(view.n_pairs + 1)
    x[view.n_pairs] = 1.0
    for ks, idx, starts, parent, local, counts in reversed(seq.levels):
        x[idx] = np.repeat(x[parent], counts) * flat[idx]
    return x[:-1]


# ---------------------------------------------------------------- matrix oracle


@dataclass(frozen=True, eq=False)
class MatrixGame:
    row_plans: tuple[tuple[ReducedPlan, ...], ...]
    col_plans: tuple[ReducedPlan, ...]
    payoff: np.ndarray

    def __post_init__(self):
        if self.payoff.shape != (len(self.row_plans), len(self.col_plans)):
            raise GameError(f"payoff shape {self.payoff.shape} does not match {len(self.row_plans)}x{len(self.col_plans)} plans")
        if not np.all(np.isfinite(self.payoff)):
            raise GameError("matrix game has non-finite entries")


def _single_opponent(game: Game, team: Sequence[str]) -> str:
    opp = game.opponents(team)
    if len(opp) != 1:
        raise GameError(f"expected one opponent, got {opp}")
    return opp[0]


def _joint_weights(mats: list[np.ndarray], w: np.ndarray) -> np.ndarray:
    """Flattened Σ_z w_z Π_j M_j[i_j, z] over joint indices (row-major)."""
    if len(mats) == 1:
        return mats[0] @ w
    if len(mats) == 2:
        return ((mats[0] * w) @ mats[1].T.astype(float)).ravel()
    head = mats[0][:, None, :] & mats[1][None, :, :]
    return _joint_weights([head.reshape(-1, head.shape[-1])] + mats[2:], w)


def joint_plan_count(game: Game, team: Sequence[str]) -> int:
    return math.prod(len(enumerate_reduced_plans(game, p)) for p in team)


def build_matrix_game(game: Game, team: Sequence[str], cap: int = PLAN_CAP) -> MatrixGame:
    team = tuple(team)
    opp = _single_opponent(game, team)
    n_rows = joint_plan_count(game, team)
    cols = enumerate_reduced_plans(game, opp)
    if n_rows * len(cols) > cap:
        raise CapExceeded(f"{n_rows} joint plans x {len(cols)} opponent plans exceeds the cap of {cap}; "
                          "use tmecor_via_refinement instead")
    mats = [plan_leaf_matrix(game, p).astype(float) for p in team]
    mo = plan_leaf_matrix(game, opp)
    base = game.chance_reach * game.utility(team[0])
    payoff = np.empty((n_rows, len(cols)))
    for c in range(len(cols)):
        payoff[:, c] = _joint_weights(mats, base * mo[c])
    rows = tuple(itertools.product(*(enumerate_reduced_plans(game, p) for p in team)))
    return MatrixGame(rows, tuple(cols), payoff)


def _dedup(a: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Representative (lowest index) of each class of identical rows/cols, and the inverse map."""
    m = a if axis == 0 else a.T
    _, first, inverse = np.unique(m, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return first[order], rank[inverse.ravel()]


def solve_matrix(a: np.ndarray, tol: float, max_iters: int = 1_000_000) -> tuple[np.ndarray, np.ndarray, float, float, int]:
    """Regret matching+ with alternating updates and linear averaging; stops at duality gap ≤ tol.

    Returns (row mix, col mix, value, gap, iterations); the row player maximizes.
    """
    rows, cols = a.shape
    rr, rc = np.zeros(rows), np.zeros(cols)
    sx, sy = np.zeros(rows), np.zeros(cols)
    x = np.full(rows, 1.0 / rows)
    y = np.full(cols, 1.0 / cols)
    gap = math.inf
    it = 0

    def normal(r: np.ndarray, n: int) -> np.ndarray:
        s = r.sum()
        return r / s if s > 0 else np.full(n, 1.0 / n)

    while it < max_iters:
        it += 1
        x = normal(rr, rows)
        u = a @ y
        rr = np.maximum(rr + u - x @ u, 0.0)
        x = normal(rr, rows)
        sx += it * x
        v = x @ a
        rc = np.maximum(rc + v @ y - v, 0.0)
        y = normal(rc, cols)
        sy += it * y
        if it % 10 == 0 or it < 10:
            ax, ay = sx / sx.sum(), sy / sy.sum()
            gap = float(np.max(a @ ay) - np.min(ax @ a))
            if gap <= tol:
                break
    ax, ay = sx / sx.sum(), sy / sy.sum()
    gap = float(np.max(a @ ay) - np.min(ax @ a))
    return ax, ay, float(ax @ a @ ay), max(gap, 0.0), it


def tmecor_bruteforce(game: Game, team: Sequence[str] | None = None, tol: float | None = None,
                      cap: int = PLAN_CAP) -> SolveResult:
    """Maximin coordinated strategy over joint reduced plans, by solving the matrix game."""
    start = time.perf_counter()
    team = tuple(game.team if team is None else team)
    tol = default_tol(game) if tol is None else tol
    mg = build_matrix_game(game, team, cap)
    rrep, _ = _dedup(mg.payoff, 0)
    crep, _ = _dedup(mg.payoff, 1)
    sub = mg.payoff[np.ix_(rrep, crep)]
    x, y, value, gap, it = solve_matrix(sub, tol)
    mu_t = CoordinatedStrategy(team, {mg.row_plans[r]: float(p) for r, p in zip(rrep, x) if p > 0})
    opp = _single_opponent(game, team)
    mu_o = NormalFormStrategy(opp, {mg.col_plans[c]: float(p) for c, p in zip(crep, y) if p > 0})
    return SolveResult(mu_t, mu_o, value, gap, it, time.perf_counter() - start,
                       {"matrix": mg, "rows": len(rrep), "cols": len(crep)})


# ---------------------------------------------------------------- refinement pipeline


def meta_to_joint(rmap: RefinementMap, plan: ReducedPlan) -> tuple[ReducedPlan, ...]:
    """Re-express a meta-player plan of the refined game as one plan per original member."""
    src = rmap.source
    lifted = rmap.lift_plan(plan)
    joint = []
    for member in rmap.team:
        partial = {s: a for s, a in lifted.items() if src.infostates[s].player == member}
        joint.append(complete_plan(src, member, partial))
    return tuple(joint)


def lift_strategy(rmap: RefinementMap, player: str, mu: NormalFormStrategy) -> NormalFormStrategy:
    """Normal-form strategy of a non-team player, moved from the refined game to the source game."""
    src = rmap.source
    out: dict[ReducedPlan, float] = {}
    for plan, w in mu.probs.items():
        q = complete_plan(src, player, rmap.lift_plan(plan))
        out[q] = out.get(q, 0.0) + w
    return NormalFormStrategy(player, out)


def tmecor_via_refinement(game: Game, team: Sequence[str] | None = None, tol: float | None = None,
                          max_iters: int = 200_000, rmap: RefinementMap | None = None) -> SolveResult:
    """Merge, inflate, solve the two-player game, then map the meta-player's plans back to joint plans."""
    start = time.perf_counter()
    team = tuple(game.team if team is None else team)
    tol = default_tol(game) if tol is None else tol
    if rmap is None:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RecallWarning)
            rmap = perfect_recall_refinement(game, team)
        for w in caught:
            warnings.warn(f"{w.message}; the coordinated strategy may not be a TMECor", RecallWarning, stacklevel=2)
    refined = rmap.refined
    fp = solve_zero_sum(refined, tol, max_iters)
    opp = _single_opponent(game, team)
    nf_t = behavioral_to_normal_form(refined, fp.team_strategy)
    mu_t: dict[tuple[ReducedPlan, ...], float] = {}
    for plan, w in nf_t.probs.items():
        joint = meta_to_joint(rmap, plan)
        mu_t[joint] = mu_t.get(joint, 0.0) + w
    mu_o = lift_strategy(rmap, opp, behavioral_to_normal_form(refined, fp.opponent_strategy))
    return SolveResult(CoordinatedStrategy(team, mu_t), mu_o, fp.value, fp.epsilon, fp.iterations,
                       time.perf_counter() - start,
                       {"refinement": rmap, "meta_strategy": fp.team_strategy, "meta_opponent": fp.opponent_strategy,
                        "lower": fp.extras["lower"], "upper": fp.extras["upper"]})


def epsilon_tmecor(game: Game, team: Sequence[str], mu_t, mu_o, cap: int = PLAN_CAP) -> float:
    """Largest gain from a unilateral deviation: the team over joint plans, or the opponent."""
    team = tuple(team)
    opp = _single_opponent(game, team)
    if joint_plan_count(game, team) * len(enumerate_reduced_plans(game, opp)) > cap:
        raise CapExceeded("joint plan space exceeds the cap; cannot scan team deviations")
    rt = leaf_reach(game, mu_t)
    ro = leaf_reach(game, mu_o)
    base = game.chance_reach * game.utility(team[0])
    value = float(np.sum(base * rt * ro))
    mats = [plan_leaf_matrix(game, p).astype(float) for p in team]
    team_best = float(np.max(_joint_weights(mats, base * ro)))
    opp_worst = float(np.min(plan_leaf_matrix(game, opp).astype(float) @ (base * rt)))
    return max(team_best - value, value - opp_worst, 0.0)
