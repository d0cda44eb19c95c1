import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teamcoord.evaluation import (EvalReport, average_reward, evaluate, exact_team_value, exploitability, heatmap,
                                  kl_to_tmecor, set_tmecor_value, team_value_vs_best_response, tmecor_value)
from teamcoord.game import GameError
from teamcoord.rng import stream
from teamcoord.sims import SignalDistribution, SignalMediatedStrategy, SignalPolicy
from teamcoord.solver import best_response, tmecor_bruteforce
from teamcoord.strategies import (BehavioralStrategy, CoordinatedStrategy, plan_by_labels, product_strategy,
                                  uniform_behavioral)


def plan(g, p, a):
    return plan_by_labels(g, p, {f"{p}.0": a})


def joint(g, a1, a2):
    return (plan(g, "T1", a1), plan(g, "T2", a2))


def coordinated(g, weights):
    return CoordinatedStrategy(("T1", "T2"), {joint(g, *k): w for k, w in weights.items()})


def corner_policy(game, member, target=(0, 0)):
    """Walk toward ``target`` and stay there."""
    dist = {}
    for s in game.infostates_of(member):
        r, c = (int(x) for x in s.label.split(".")[2].split("-")[-1])
        if r > target[0]:
            a = "up"
        elif r < target[0]:
            a = "down"
        elif c > target[1]:
            a = "left"
        elif c < target[1]:
            a = "right"
        else:
            a = "stay"
        dist[s.id] = np.eye(s.num_actions)[s.actions.index(a)]
    return BehavioralStrategy(member, dist)


def uniform_sms(game):
    pols = tuple(SignalPolicy.zeros(game, m, 1) for m in game.team)
    return SignalMediatedStrategy(SignalDistribution(np.zeros(1)), pols)


def corner_sms(game, targets):
    pols = tuple(SignalPolicy.from_behavioral(game, [corner_policy(game, m, t) for t in targets]) for m in game.team)
    return SignalMediatedStrategy(SignalDistribution(np.zeros(len(targets))), pols)


# ---------------------------------------------------------------- exploitability


def test_exploitability_examples(coord2):
    v = tmecor_value(coord2)
    assert v == pytest.approx(50.0, abs=0.1)
    star = coordinated(coord2, {("L", "L"): 0.5, ("R", "R"): 0.5})
    assert exploitability(coord2, coord2.team, star, 50.0) == pytest.approx(0.0, abs=1e-3)
    indep = product_strategy(coord2, [uniform_behavioral(coord2, "T1"), uniform_behavioral(coord2, "T2")])
    assert exploitability(coord2, coord2.team, indep, 50.0) == pytest.approx(25.0)
    assert exploitability(coord2, coord2.team, coordinated(coord2, {("L", "L"): 1.0}), 50.0) == pytest.approx(50.0)


def test_exploitability_identity(coord2):
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = rng.dirichlet(np.ones(4))
        mu = coordinated(coord2, dict(zip([("L", "L"), ("L", "R"), ("R", "L"), ("R", "R")], w)))
        value, br = team_value_vs_best_response(coord2, mu)
        assert exploitability(coord2, coord2.team, mu, 50.0) + value == 50.0
        assert value == pytest.approx(-best_response(coord2, "O", [mu])[1])


def test_tmecor_value_cache(coord2_imb):
    assert tmecor_value(coord2_imb) == pytest.approx(100 / 3, abs=0.1)
    set_tmecor_value(coord2_imb, coord2_imb.team, 33.0)
    assert tmecor_value(coord2_imb) == 33.0
    set_tmecor_value(coord2_imb, coord2_imb.team, tmecor_bruteforce(coord2_imb).value)


# ---------------------------------------------------------------- KL


def test_kl_examples(coord2, coord2_imb):
    star = coordinated(coord2, {("L", "L"): 0.5, ("R", "R"): 0.5})
    assert kl_to_tmecor(star, star) == 0.0
    uni = coordinated(coord2, {k: 0.25 for k in [("L", "L"), ("L", "R"), ("R", "L"), ("R", "R")]})
    want = 2 * 0.25 * math.log(0.25 / 0.5) + 2 * 0.25 * math.log(0.25 / 1e-12)
    assert kl_to_tmecor(uni, star) == pytest.approx(want, rel=1e-12)
    assert want == pytest.approx(12.776, abs=1e-3)
    imb = coordinated(coord2_imb, {("L", "L"): 1 / 3, ("R", "R"): 2 / 3})
    assert kl_to_tmecor(imb, imb) == 0.0
    with pytest.raises(GameError):
        kl_to_tmecor(star, CoordinatedStrategy(("T2", "T1"), {}))
    with pytest.raises(GameError):
        kl_to_tmecor(star, star, mode="bogus")


def test_kl_factored(coord2):
    star = coordinated(coord2, {("L", "L"): 0.5, ("R", "R"): 0.5})
    indep = coordinated(coord2, {k: 0.25 for k in [("L", "L"), ("L", "R"), ("R", "L"), ("R", "R")]})
    assert kl_to_tmecor(indep, star, "factored") == pytest.approx(0.0, abs=1e-12)  # marginals agree
    assert kl_to_tmecor(indep, star, "joint") > 1


weights4 = st.lists(st.floats(0, 1), min_size=4, max_size=4).filter(lambda w: sum(w) > 1e-3)


@given(weights4, weights4, st.permutations(range(4)))
@settings(max_examples=100)
def test_kl_properties(wa, wb, perm):
    from teamcoord.games import benchmark

    g = benchmark("coord-2")
    keys = [joint(g, a, b) for a in "LR" for b in "LR"]
    norm = lambda w: np.array(w) / sum(w)
    pa, pb = norm(wa), norm(wb)
    a = CoordinatedStrategy(("T1", "T2"), {k: float(p) for k, p in zip(keys, pa) if p > 0})
    b = CoordinatedStrategy(("T1", "T2"), {k: float(p) for k, p in zip(keys, pb) if p > 0})
    kl = kl_to_tmecor(a, b)
    assert kl >= -1e-12
    assert kl_to_tmecor(a, a) == pytest.approx(0.0, abs=1e-12)
    if np.max(np.abs(pa - pb)) > 1e-3:
        assert kl > 0
    relabel = {keys[i]: keys[j] for i, j in enumerate(perm)}
    ra = CoordinatedStrategy(a.team, {relabel[k]: v for k, v in a.probs.items()})
    rb = CoordinatedStrategy(b.team, {relabel[k]: v for k, v in b.probs.items()})
    assert kl_to_tmecor(ra, rb) == pytest.approx(kl, rel=1e-12, abs=1e-12)


# ---------------------------------------------------------------- rewards


def test_average_reward_examples(coord2, patrolling):
    star = coordinated(coord2, {("L", "L"): 0.5, ("R", "R"): 0.5})
    o = uniform_behavioral(coord2, "O")
    assert exact_team_value(coord2, star, o) == pytest.approx(50.0)
    indep = [uniform_behavioral(coord2, "T1"), uniform_behavioral(coord2, "T2")]
    assert exact_team_value(coord2, indep, o) == pytest.approx(25.0, abs=1e-9)
    mean, std = average_reward(coord2, star, o, 4000, rng=stream(0, "eval"))
    assert abs(mean - 50.0) <= 3 * std / math.sqrt(4000)
    res = tmecor_bruteforce(patrolling)
    v, _ = team_value_vs_best_response(patrolling, res.team_strategy)
    assert v == pytest.approx(-0.5, abs=1e-2)
    with pytest.raises(ValueError):
        average_reward(coord2, star, o, 0)


def test_monte_carlo_within_three_sigma(coord4):
    rng = np.random.default_rng(3)
    pols = []
    for m in coord4.team:
        z = SignalPolicy.zeros(coord4, m, 2)
        pols.append(SignalPolicy(m, z.states, z.n_actions, rng.normal(size=z.phi.shape)))
    sms = SignalMediatedStrategy(SignalDistribution(rng.normal(size=2)), tuple(pols))
    for a in "LR":
        o = BehavioralStrategy("O", {coord4.state_by_label("O.0").id: np.array([a == "L", a == "R"], float)})
        n = 3000
        mean, std = average_reward(coord4, sms, o, n, rng=stream(1, "eval"))
        assert abs(mean - exact_team_value(coord4, sms, o)) <= 3 * std / math.sqrt(n) + 1e-12


def test_evaluate_report(coord2):
    star = coordinated(coord2, {("L", "L"): 0.5, ("R", "R"): 0.5})
    rep = evaluate(coord2, star, uniform_behavioral(coord2, "O"), star, 50.0, 200, stream(0, "eval"))
    assert isinstance(rep, EvalReport)
    assert rep.exploitability == pytest.approx(0.0, abs=1e-9) and rep.kl == 0.0
    assert rep.exact_reward == pytest.approx(50.0) and rep.reward_std >= 0
    assert set(rep.as_row()) >= {"reward_mean", "exploitability", "kl"}


# ---------------------------------------------------------------- heatmaps


def test_heatmap_pure_corner(patrolling):
    sms = corner_sms(patrolling, [(0, 0)])
    for p in ("T1", "T2"):
        hm = heatmap(patrolling, sms, p, 0, 200, stream(0, "heatmap"))
        assert hm.grid[0, 0] == 1.0 and hm.grid.sum() == pytest.approx(1.0)
        exact = heatmap(patrolling, sms, p, 0, None)
        assert np.allclose(exact.grid, hm.grid)
        assert hm.argmax_cell() == (0, 0)


def test_heatmap_signals(patrolling):
    sites = [tuple(c) for c in patrolling.attrs["sites"]]
    sms = corner_sms(patrolling, sites)
    for k, site in enumerate(sites):
        assert heatmap(patrolling, sms, "T1", k, None).argmax_cell() == site
    assert exploitability(patrolling, patrolling.team, sms, -0.5) == pytest.approx(0.0, abs=1e-12)


def test_heatmap_uniform_spreads(patrolling):
    hm = heatmap(patrolling, uniform_sms(patrolling), "T2", 0, 2000, stream(0, "heatmap"))
    assert hm.grid.max() < 0.5
    assert hm.grid.sum() == pytest.approx(1.0, abs=1e-9)
    text = hm.to_csv()
    assert text.splitlines()[0] == "c0,c1,c2" and len(text.splitlines()) == 4


def test_heatmap_requires_patrolling(coord2):
    with pytest.raises(GameError):
        heatmap(coord2, uniform_sms(coord2), "T1", 0, 10)
