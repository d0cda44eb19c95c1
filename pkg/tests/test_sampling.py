import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from teamcoord.game import GameError, PerfectRecallError
from teamcoord.refinement import META, identity_map, merge_team, perfect_recall_refinement
from teamcoord.rng import stream
from teamcoord.sampling import (FspConfig, SampleRecord, Trajectory, TrajectoryBuffer, purge, sample_from_equilibrium,
                                sample_fsp, sample_index)
from teamcoord.solver import best_response, tmecor_via_refinement
from teamcoord.strategies import expected_value, pure_behavioral


def test_fifo():
    buf = TrajectoryBuffer(("A",), capacity=2)
    recs = [SampleRecord(((i,),), ((0,),)) for i in range(3)]
    buf.extend(recs)
    assert buf.records == recs[1:]
    with pytest.raises(ValueError):
        TrajectoryBuffer(("A",), capacity=0)


def test_capacity_one_keeps_newest(coord2_refined):
    small, _ = sample_fsp(coord2_refined, 500, FspConfig(capacity=1), stream(3, "sample"))
    big, _ = sample_fsp(coord2_refined, 500, FspConfig(capacity=10_000), stream(3, "sample"))
    assert len(small) == 1 and small[0] == big[len(big) - 1]


def test_purge_example(coord2, coord2_refined):
    # O plays R; T1 plays L; T2, which sees T1's L in the refined game, plays R
    r = coord2_refined.refined
    t1 = r.state_by_label("T1.0").id
    t2 = r.state_by_label("T2.0/0").id
    leaf = next(n.id for n in r.nodes if n.label == "zRLR")
    traj = Trajectory(("T1", "T2"), (((t1, coord2_refined.state_map[t1], 0),),
                                     ((t2, coord2_refined.state_map[t2], 1),)), leaf, 0.0)
    rec = purge(traj, coord2_refined)
    assert rec.obs == ((coord2.state_by_label("T1.0").id,), (coord2.state_by_label("T2.0").id,))
    assert rec.targets == ((0,), (1,))
    bad = Trajectory(("T1",), (((999, 0, 0),),), leaf, 0.0)
    with pytest.raises(GameError):
        purge(bad, coord2_refined)


def test_purge_identity(coord2):
    rmap = identity_map(merge_team(coord2), META)
    object.__setattr__(rmap, "team", ("T1", "T2"))
    traj = Trajectory(("T1", "T2"), (((0, 0, 1),), ((1, 1, 0),)), 0, 0.0)
    assert purge(traj, rmap).obs == ((0,), (1,))


def test_purge_coord4_collapses(coord4, coord4_refined):
    buf, _ = sample_fsp(coord4_refined, 2000, FspConfig(), stream(0, "sample"))
    for rec in buf:
        for member, obs in zip(("T1", "T2"), rec.obs):
            assert [coord4.infostates[s].label for s in obs] == [f"{member}.{m}" for m in range(2)]


def test_purged_records_use_original_states(patrolling, patrolling_refined):
    buf, _ = sample_fsp(patrolling_refined, 3000, FspConfig(), stream(1, "sample"))
    originals = {s.id for s in patrolling.infostates}
    for rec in buf:
        for member, obs, tg in zip(("T1", "T2"), rec.obs, rec.targets):
            for s, a in zip(obs, tg):
                assert s in originals and patrolling.infostates[s].player == member
                assert 0 <= a < patrolling.infostates[s].num_actions


def test_fsp_coord2_value(coord2_refined):
    buf, avg = sample_fsp(coord2_refined, 20_000, FspConfig(capacity=20_000), stream(0, "sample"))
    r = coord2_refined.refined
    ev = expected_value(r, [avg[META], avg["O"]])[META]
    assert ev == pytest.approx(50.0, abs=2.0)
    assert len(buf) > 0 and all(len(rec.obs) == 2 for rec in buf)


def test_fsp_forced_exploration_is_uniform(coord2_refined):
    cfg = FspConfig(eta=1.0, eps_start=1.0, eps_end=1.0)
    n = 4000
    buf, _ = sample_fsp(coord2_refined, n, cfg, stream(0, "sample"))
    assert len(buf) == n
    for j in range(2):
        k = sum(rec.targets[j][0] for rec in buf)
        assert abs(k - n / 2) <= 3 * math.sqrt(n / 4)


def test_fsp_epsilon_decreases(coord2_refined):
    r = coord2_refined.refined
    bad = 0
    for seed in range(10):
        eps = []

        def monitor(ep, state):
            t, o = state.average_policy(r, META), state.average_policy(r, "O")
            v = expected_value(r, [t, o])[META]
            eps.append(best_response(r, META, [o])[1] - v + best_response(r, "O", [t])[1] + v)

        sample_fsp(coord2_refined, 2000, FspConfig(), stream(seed, "sample"), monitor, 50)
        running = np.minimum.accumulate(eps)
        bad += not all(np.diff(running) <= 0) or running[-1] >= eps[0]
    assert bad <= 1


def test_fsp_determinism(coord2_refined):
    a, _ = sample_fsp(coord2_refined, 1000, FspConfig(), stream(7, "sample"))
    b, _ = sample_fsp(coord2_refined, 1000, FspConfig(), stream(7, "sample"))
    c, _ = sample_fsp(coord2_refined, 1000, FspConfig(), stream(8, "sample"))
    game = coord2_refined.source
    assert a.to_jsonl(game) == b.to_jsonl(game)
    assert a.to_jsonl(game) != c.to_jsonl(game)


def test_fsp_errors(coord2):
    merged = identity_map(merge_team(coord2), META)
    object.__setattr__(merged, "team", ("T1", "T2"))
    with pytest.raises(PerfectRecallError):
        sample_fsp(merged, 10)
    with pytest.raises(ValueError):
        FspConfig(capacity=0).validate()
    with pytest.raises(ValueError):
        FspConfig(eta=1.5).validate()


def _ne(rmap):
    res = tmecor_via_refinement(rmap.source, tol=0.01, rmap=rmap)
    return res.extras["meta_strategy"], res.extras["meta_opponent"]


def test_equilibrium_sampling_coord2(coord2_refined):
    pi, opp = _ne(coord2_refined)
    n = 10_000
    buf = sample_from_equilibrium(coord2_refined, pi, n, stream(0, "sample"), opp)
    counts = Counter(tuple(t[0] for t in rec.targets) for rec in buf)
    assert counts[(0, 1)] == counts[(1, 0)] == 0
    assert abs(counts[(0, 0)] - n / 2) <= 3 * math.sqrt(n / 4) + 0.01 * n


def test_equilibrium_sampling_imbalanced(coord2_imb):
    rmap = perfect_recall_refinement(coord2_imb)
    pi, opp = _ne(rmap)
    n = 10_000
    buf = sample_from_equilibrium(rmap, pi, n, stream(0, "sample"), opp)
    ll = sum(rec.targets == ((0,), (0,)) for rec in buf)
    assert abs(ll - n / 3) <= 3 * math.sqrt(n * 2 / 9) + 0.01 * n
    assert sum(rec.targets == ((1,), (1,)) for rec in buf) == n - ll


def test_equilibrium_sampling_pure(coord4_refined):
    pi = pure_behavioral(coord4_refined.refined, META, {})
    buf = sample_from_equilibrium(coord4_refined, pi, 200, stream(0, "sample"))
    assert len({(r.obs, r.targets) for r in buf}) == 1
    with pytest.raises(GameError):
        sample_from_equilibrium(coord4_refined, pure_behavioral(coord4_refined.refined, "O"), 5, stream(0, "x"))


def test_buffer_jsonl_round_trip(patrolling, patrolling_refined):
    buf, _ = sample_fsp(patrolling_refined, 500, FspConfig(capacity=100), stream(2, "sample"))
    text = buf.to_jsonl(patrolling)
    back = TrajectoryBuffer.from_jsonl(patrolling, text)
    assert back.records == buf.records and back.members == ("T1", "T2")
    assert back.to_jsonl(patrolling) == text


def test_buffer_rejects_foreign_states(coord2):
    line = '{"o":{"T1":["T2.0"],"T2":["T2.0"]},"r":0,"t":{"T1":["L"],"T2":["L"]}}'
    with pytest.raises(GameError):
        TrajectoryBuffer.from_jsonl(coord2, line)


@given(st.lists(st.floats(0, 10), min_size=1, max_size=6).filter(lambda w: sum(w) > 0), st.floats(0, 1, exclude_max=True))
def test_sample_index_support(w, u):
    w = np.array(w)
    assert w[sample_index(w, u)] > 0
