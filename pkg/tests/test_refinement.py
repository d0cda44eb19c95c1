import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings

from teamcoord.game import GameError
from teamcoord.refinement import (META, RecallWarning, complete_inflation, identity_map, information_sharing,
                                  is_refinement, merge_team, perfect_recall_refinement, recall_report)
from teamcoord.solver import meta_to_joint
from teamcoord.strategies import CoordinatedStrategy, enumerate_reduced_plans, leaf_reach, point_mass

from conftest import observer_variant
from gamegen import random_game, seeds


def test_merge_coord2(coord2):
    m = merge_team(coord2)
    assert m.players == (META, "O")
    assert m.team == (META,)
    states = list(m.infostates_of(META))
    assert len(states) == 2
    assert {s.member for s in states} == {"T1", "T2"}
    assert all(m.nodes[int(z)].payoffs == (coord2.nodes[int(z)].payoffs[0], coord2.nodes[int(z)].payoffs[2])
               for z in m.leaves)


def test_merge_coord4(coord4):
    assert len(list(merge_team(coord4).infostates_of(META))) == 4


def test_merge_errors(coord2):
    with pytest.raises(GameError):
        merge_team(coord2, ("T1", "T1"))
    with pytest.raises(GameError):
        merge_team(coord2, ("T1", "X"))
    with pytest.raises(GameError):
        merge_team(coord2, ("T1", "T2"), name="O")


def test_recall_reports(coord2, patrolling):
    r = recall_report(merge_team(coord2), META)
    assert not r.perfect_recall and r.a_loss_recall
    assert r.perfect_recall_witnesses and not r.a_loss_witnesses
    for g in (coord2, patrolling):
        assert recall_report(g, "O").perfect_recall
    obs = recall_report(merge_team(observer_variant()), META)
    assert not obs.perfect_recall and not obs.a_loss_recall
    assert obs.a_loss_witnesses
    doc = r.to_dict()
    assert doc["perfect_recall"] is False and isinstance(doc["perfect_recall_witnesses"][0], list)


def test_inflation_coord2(coord2):
    rmap = complete_inflation(merge_team(coord2), META)
    assert rmap.splits == 1
    parts = rmap.split_states()
    assert len(parts) == 1
    (orig, refined), = parts.items()
    assert rmap.original.infostates[orig].member == "T2"
    assert [rmap.refined.infostates[s].label for s in refined] == ["T2.0/0", "T2.0/1"]
    assert recall_report(rmap.refined, META).perfect_recall
    # each part collects the nodes after one own T1 action
    for k, s in enumerate(refined):
        assert {coord2.nodes[v].label[1] for v in rmap.refined.infostates[s].nodes} == {"LR"[k]}


def test_inflation_coord4(coord4_refined):
    assert len(list(coord4_refined.refined.infostates_of(META))) == 15
    assert coord4_refined.method == "complete_inflation"
    assert is_refinement(coord4_refined)


def test_hand_built_coord4_matches(coord4, coord4_refined):
    # one class per own history: label nodes by team actions so far
    merged = merge_team(coord4)
    fine = information_sharing(merged, META)
    assert is_refinement(fine)
    groups = lambda r: sorted(sorted(s.nodes) for s in r.refined.infostates_of(META))
    assert groups(fine) == groups(coord4_refined)


def test_perfect_recall_player_identity(coord2):
    rmap = complete_inflation(coord2, "O")
    assert rmap.splits == 0
    assert [s.nodes for s in rmap.refined.infostates] == [s.nodes for s in coord2.infostates]


def test_pipeline_coord2(coord2_refined):
    assert coord2_refined.method == "complete_inflation"
    assert is_refinement(coord2_refined)
    assert recall_report(coord2_refined.refined, META).perfect_recall
    s = coord2_refined.summary()
    assert s["refined_states"] == 3 and s["split_states"] == {"T2.0": ["T2.0/0", "T2.0/1"]}


def test_pipeline_patrolling(patrolling_refined):
    assert is_refinement(patrolling_refined)
    r = patrolling_refined.refined
    assert recall_report(r, META).perfect_recall
    # a defender's refined state pins down the teammate's past moves too
    for s in r.infostates_of(META):
        if s.member == "T2":
            assert len({r.nodes[v].label.split("|")[1] for v in s.nodes}) == 1


def test_identity_for_perfect_recall_team():
    g = random_game(3, players=("A", "B"), team=("A",), perfect_recall=True)
    rmap = perfect_recall_refinement(g, ("A",))
    assert rmap.method == "identity" and rmap.splits == 0


def test_fallback_warns():
    with pytest.warns(RecallWarning):
        rmap = perfect_recall_refinement(observer_variant())
    assert rmap.method == "information_sharing"
    assert is_refinement(rmap)


def test_is_refinement_negatives(coord2, coord2_refined):
    merged = coord2_refined.original
    assert not is_refinement(identity_map(merged, META))  # T still lacks perfect recall
    # relabel a refined state to a different original state
    r = coord2_refined
    bad = dict(r.state_map)
    s = next(iter(r.split_states().values()))[0]
    bad[s] = merged.state_by_label("T1.0").id
    assert not is_refinement(replace(r, state_map=bad))
    # a refined game that merges two original states
    other = complete_inflation(merge_team(coord2, ("T1", "O"), name="T"), "T")
    assert not is_refinement(replace(r, refined=other.refined))


def test_idempotence(coord2_refined, coord4_refined, patrolling_refined):
    for r in (coord2_refined, coord4_refined, patrolling_refined):
        assert complete_inflation(r.refined, META).splits == 0


def _reach_set(game, strategies):
    return {tuple(np.round(leaf_reach(game, s), 12)) for s in strategies}


def _mu_equivalent(rmap):
    src, ref = rmap.source, rmap.refined
    got = _reach_set(ref, [point_mass(META, p) for p in enumerate_reduced_plans(ref, META)])
    from itertools import product

    joints = product(*[enumerate_reduced_plans(src, m) for m in rmap.team])
    want = _reach_set(src, [CoordinatedStrategy(rmap.team, {j: 1.0}) for j in joints])
    mapped = _reach_set(src, [CoordinatedStrategy(rmap.team, {meta_to_joint(rmap, p): 1.0})
                              for p in enumerate_reduced_plans(ref, META)])
    return got == want == mapped


def test_mu_equivalence_benchmarks(coord2_refined, coord4_refined):
    assert _mu_equivalent(coord2_refined)
    assert _mu_equivalent(coord4_refined)


@given(seeds)
@settings(max_examples=60)
def test_refinement_properties(seed):
    g = random_game(seed, players=("A", "B", "C"), team=("A", "B"), max_depth=4, zero_sum=True,
                    perfect_recall=bool(seed % 2))
    merged = merge_team(g)
    a_loss = recall_report(merged, META).a_loss_recall
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RecallWarning)
        rmap = perfect_recall_refinement(g)
    assert is_refinement(rmap)
    assert recall_report(rmap.refined, META).a_loss_recall  # symmetric observability holds afterwards
    assert complete_inflation(rmap.refined, META).splits == 0
    # every original state is the disjoint union of its preimages
    for s in merged.infostates:
        nodes = [v for r in rmap.preimages(s.id) for v in rmap.refined.infostates[r].nodes]
        assert sorted(nodes) == sorted(s.nodes)
    if a_loss:
        assert rmap.method in ("identity", "complete_inflation")
        if len(enumerate_reduced_plans(rmap.refined, META)) <= 64:
            assert _mu_equivalent(rmap)
    else:
        assert rmap.method == "information_sharing"
