"""Finite-difference checks of the SIMS loss gradients."""

import numpy as np

from teamcoord.games import benchmark
from teamcoord.sampling import SampleRecord
from teamcoord.sims import SignalDistribution, SignalPolicy, SimsConfig, init_strategy, sims_loss

from gamegen import random_game


def instance(seed):
    """Random game, buffer and parameters for gradient checks."""
    rng = np.random.default_rng(seed)
    kind = seed % 3
    if kind == 0:
        game = benchmark("coord-4")
    else:
        game = random_game(seed, players=("A", "B", "C"), team=("A", "B"), max_depth=4, zero_sum=True)
    team = game.team if kind == 0 else ("A", "B")
    k = int(rng.integers(1, 5))
    sms = init_strategy(game, team, SimsConfig(n_signals=k, init_noise=2.0), rng)
    batch = []
    for _ in range(int(rng.integers(1, 8))):
        obs, tgs = [], []
        for m in team:
            states = list(game.infostates_of(m))
            pick = [states[i] for i in rng.choice(len(states), size=min(len(states), int(rng.integers(0, 3))), replace=False)]
            obs.append(tuple(s.id for s in pick))
            tgs.append(tuple(int(rng.integers(s.num_actions)) for s in pick))
        batch.append(SampleRecord(tuple(obs), tuple(tgs)))
    if all(not o for r in batch for o in r.obs):
        return None
    return sms, batch, float(rng.uniform(0, 2))


def _rel_err(a, b):
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8))


def check_gradients(inst, h=1e-5):
    sms, batch, beta = inst
    loss, g_theta, g_phi = sims_loss(batch, sms.mu, sms.policies, beta)
    theta = sms.mu.theta

    def f(th, phis):
        pols = [SignalPolicy(p.owner, p.states, p.n_actions, ph) for p, ph in zip(sms.policies, phis)]
        return sims_loss(batch, SignalDistribution(th), pols, beta)[0]

    phis = [p.phi for p in sms.policies]
    fd_theta = np.zeros_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        fd_theta[i] = (f(theta + e, phis) - f(theta - e, phis)) / (2 * h)
    worst = _rel_err(g_theta, fd_theta)
    for j, p in enumerate(sms.policies):
        fd = np.zeros_like(p.phi)
        for idx in np.ndindex(p.phi.shape):
            if idx[2] >= p.n_actions[idx[0]]:
                continue
            up, dn = [q.copy() for q in phis], [q.copy() for q in phis]
            up[j][idx] += h
            dn[j][idx] -= h
            fd[idx] = (f(theta, up) - f(theta, dn)) / (2 * h)
        worst = max(worst, _rel_err(g_phi[j], fd))
    return worst


def gradient_instances(n: int = 100):
    """The first ``n`` seeds that give a batch with at least one observation."""
    out, seed = [], 0
    while len(out) < n:
        inst = instance(seed)
        if inst is not None:
            out.append(inst)
        seed += 1
    return out
