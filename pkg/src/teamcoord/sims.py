"""Signal-mediated team strategies learned from trajectory buffers.

A strategy is a categorical signal distribution softmax(theta) plus, for each
team member, a table of logits phi[state, signal, action].  Before an episode
one signal is drawn; every member then plays softmax(phi[state, signal]).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .game import Game, GameError
from .sampling import SampleRecord, TrajectoryBuffer, sample_index, walk
from .strategies import (
    BehavioralStrategy,
    CoordinatedStrategy,
    NormalFormStrategy,
    enumerate_reduced_plans,
    plan_probabilities,
)

LOG_FLOOR = math.log(1e-12)
PLAN_CAP = 10**6


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    return x - m - np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))


# ---------------------------------------------------------------- types


@dataclass(frozen=True, eq=False)
class SignalDistribution:
    theta: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=float)
        if t.ndim != 1 or t.size < 1 or not np.all(np.isfinite(t)):
            raise GameError("signal parameters must be a finite non-empty vector")
        object.__setattr__(self, "theta", t)

    @property
    def n(self) -> int:
        return len(self.theta)

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.theta)

    @classmethod
    def from_probs(cls, probs: Sequence[float]) -> "SignalDistribution":
        p = np.asarray(probs, dtype=float)
        return cls(np.log(np.maximum(p, 1e-300)))


@dataclass(frozen=True, eq=False)
class SignalPolicy:
    """Logits ``phi[row, signal, action]`` for the member's states (rows follow ``states``).

    Entries beyond a state's action count are ignored.
    """

    owner: str
    states: tuple[int, ...]
    n_actions: tuple[int, ...]
    phi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 3 or phi.shape[0] != len(self.states):
            raise GameError("policy table must have shape (states, signals, actions)")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "_row", {s: i for i, s in enumerate(self.states)})

    @property
    def n_signals(self) -> int:
        return self.phi.shape[1]

    def row(self, state: int) -> int:
        try:
            return self._row[state]
        except KeyError:
            raise GameError(f"state {state} is not a state of {self.owner!r}") from None

    def dist(self, state: int, signal: int) -> np.ndarray:
        if not 0 <= signal < self.n_signals:
            raise GameError(f"signal {signal} out of range 0..{self.n_signals - 1}")
        i = self.row(state)
        return softmax(self.phi[i, signal, : self.n_actions[i]])

    def flat(self, game: Game, signal: int) -> np.ndarray:
        """Per-pair probabilities under ``signal`` in the member's view order."""
        view = game.view(self.owner)
        out = np.empty(view.n_pairs)
        for k, s in enumerate(view.states):
            out[view.offsets[k]: view.offsets[k + 1]] = self.dist(s, signal)
        return out

    def behavioral(self, game: Game, signal: int) -> BehavioralStrategy:
        return BehavioralStrategy(self.owner, {s: self.dist(s, signal) for s in self.states})

    @classmethod
    def zeros(cls, game: Game, owner: str, n_signals: int) -> "SignalPolicy":
        states = game.infostates_of(owner)
        width = max((s.num_actions for s in states), default=1)
        return cls(owner, tuple(s.id for s in states), tuple(s.num_actions for s in states),
                   np.zeros((len(states), n_signals, width)))

    @classmethod
    def from_behavioral(cls, game: Game, per_signal: Sequence[BehavioralStrategy]) -> "SignalPolicy":
        """Logits reproducing the given behavioral strategies, one per signal (zeros become -50)."""
        owner = per_signal[0].owner
        pol = cls.zeros(game, owner, len(per_signal))
        phi = pol.phi.copy()
        for k, b in enumerate(per_signal):
            for i, s in enumerate(pol.states):
                p = np.asarray(b.dist[s], dtype=float)
                phi[i, k, : len(p)] = np.where(p > 0, np.log(np.maximum(p, 1e-300)), -50.0)
        return cls(owner, pol.states, pol.n_actions, phi)


@dataclass(frozen=True, eq=False)
class SignalMediatedStrategy:
    mu: SignalDistribution
    policies: tuple[SignalPolicy, ...]

    def __post_init__(self):
        for p in self.policies:
            if p.n_signals != self.mu.n:
                raise GameError(f"policy of {p.owner!r} has {p.n_signals} signals, distribution has {self.mu.n}")

    @property
    def team(self) -> tuple[str, ...]:
        return tuple(p.owner for p in self.policies)

    @property
    def owner(self) -> tuple[str, ...]:
        return self.team

    def policy(self, member: str) -> SignalPolicy:
        for p in self.policies:
            if p.owner == member:
                return p
        raise GameError(f"no policy for {member!r}")

    def leaf_reach(self, game: Game, signal: int | None = None) -> np.ndarray:
        """Team reach of every leaf, mixed over signals (or under one forced signal)."""
        mu = self.mu.probs
        ks = range(self.mu.n) if signal is None else [signal]
        out = np.zeros(len(game.leaves))
        for k in ks:
            r = np.ones(len(game.leaves))
            for pol in self.policies:
                r *= game.view(pol.owner).leaf_reach_flat(pol.flat(game, k))
            out += (1.0 if signal is not None else mu[k]) * r
        return out

    def entropies(self) -> np.ndarray:
        """signals x (total states) entropies of the per-signal action distributions."""
        cols = []
        for pol in self.policies:
            for i, s in enumerate(pol.states):
                p = softmax(pol.phi[i, :, : pol.n_actions[i]])
                cols.append(-np.sum(np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0), axis=1))
        return np.stack(cols, axis=1) if cols else np.zeros((self.mu.n, 0))

    def to_dict(self, game: Game) -> dict:
        return {
            "type": "signal_mediated",
            "theta": self.mu.theta.tolist(),
            "mu": self.mu.probs.tolist(),
            "policies": {
                pol.owner: {
                    game.infostates[s].label: {a: pol.phi[i, :, j].tolist()
                                               for j, a in enumerate(game.infostates[s].actions)}
                    for i, s in enumerate(pol.states)
                }
                for pol in self.policies
            },
        }

    @classmethod
    def from_dict(cls, game: Game, data: Mapping) -> "SignalMediatedStrategy":
        if data.get("type") != "signal_mediated":
            raise GameError("not a signal-mediated strategy document")
        mu = SignalDistribution(np.array(data["theta"], dtype=float))
        pols = []
        for owner, table in data["policies"].items():
            pol = SignalPolicy.zeros(game, owner, mu.n)
            phi = pol.phi.copy()
            for lab, per_action in table.items():
                s = game.state_by_label(lab)
                for j, a in enumerate(s.actions):
                    phi[pol.row(s.id), :, j] = per_action[a]
            pols.append(SignalPolicy(owner, pol.states, pol.n_actions, phi))
        return cls(mu, tuple(pols))

    def to_json(self, game: Game) -> str:
        return json.dumps(self.to_dict(game), indent=1, sort_keys=True)


# ---------------------------------------------------------------- distributions


def joint_action_distribution(policies: Sequence[SignalPolicy], obs: Sequence[int], signal: int) -> np.ndarray:
    """Outer product of the members' action distributions; axis j indexes member j's action."""
    out = np.ones(())
    for pol, s in zip(policies, obs, strict=True):
        out = np.multiply.outer(out, pol.dist(s, signal))
    return out


def marginal_distribution(per_signal: Sequence[np.ndarray], mu: SignalDistribution) -> np.ndarray:
    if len(per_signal) != mu.n:
        raise GameError(f"{len(per_signal)} joint distributions for {mu.n} signals")
    p = mu.probs
    return sum(w * np.asarray(a, dtype=float) for w, a in zip(p, per_signal))


# ---------------------------------------------------------------- loss


class BatchEncoder:
    """Stack every member's table into one array and encode records as (row, action) entries."""

    def __init__(self, policies: Sequence[SignalPolicy]):
        self.members = tuple(p.owner for p in policies)
        self.offsets = np.cumsum([0] + [len(p.states) for p in policies])
        self.width = max(p.phi.shape[2] for p in policies)
        self.n_rows = int(self.offsets[-1])
        self.row_of: dict[int, int] = {}
        n_actions = []
        for j, p in enumerate(policies):
            for i, s in enumerate(p.states):
                self.row_of[s] = int(self.offsets[j]) + i
            n_actions.extend(p.n_actions)
        self.mask = np.arange(self.width)[None, :] < np.array(n_actions, dtype=np.int64)[:, None]

    def stack(self, policies: Sequence[SignalPolicy]) -> np.ndarray:
        k = policies[0].n_signals
        out = np.zeros((self.n_rows, k, self.width))
        for j, p in enumerate(policies):
            out[self.offsets[j]: self.offsets[j + 1], :, : p.phi.shape[2]] = p.phi
        return out

    def unstack(self, table: np.ndarray, policies: Sequence[SignalPolicy]) -> list[np.ndarray]:
        return [table[self.offsets[j]: self.offsets[j + 1], :, : p.phi.shape[2]] for j, p in enumerate(policies)]

    def encode(self, records: Sequence[SampleRecord]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(rows, actions, valid) arrays of shape (records, max entries)."""
        entries = []
        for r in records:
            e = []
            for obs, tg in zip(r.obs, r.targets, strict=True):
                for s, a in zip(obs, tg, strict=True):
                    if s not in self.row_of:
                        raise GameError(f"observation {s} belongs to no team policy")
                    e.append((self.row_of[s], a))
            entries.append(e)
        m = max((len(e) for e in entries), default=0)
        rows = np.zeros((len(records), max(m, 1)), dtype=np.int64)
        acts = np.zeros_like(rows)
        valid = np.zeros(rows.shape, dtype=bool)
        for b, e in enumerate(entries):
            for i, (row, a) in enumerate(e):
                rows[b, i], acts[b, i], valid[b, i] = row, a, True
        return rows, acts, valid


def _loss_core(theta: np.ndarray, table: np.ndarray, mask: np.ndarray, rows: np.ndarray, acts: np.ndarray,
               valid: np.ndarray, beta: float, want_grad: bool = True):
    """Loss and gradients on encoded entries; ``table`` is (rows, signals, width)."""
    B, M = rows.shape
    logits = np.where(mask[:, None, :], table, -np.inf)  # (R, K, A)
    logp_all = log_softmax(logits)  # -inf on masked actions
    p_all = np.exp(logp_all)
    plogp = np.where(mask[:, None, :], p_all * np.where(mask[:, None, :], logp_all, 0.0), 0.0)
    h_all = -plogp.sum(axis=2)  # (R, K)

    logmu = log_softmax(theta)
    mu = np.exp(logmu)
    vf = valid.astype(float)
    ll = logp_all[rows, :, acts]  # (B, M, K)
    ll = np.where(valid[:, :, None], ll, 0.0)
    L = ll.sum(axis=1)  # (B, K)
    z = logmu[None, :] + L
    zmax = np.max(z, axis=1, keepdims=True)
    loga = (zmax + np.log(np.sum(np.exp(z - zmax), axis=1, keepdims=True)))[:, 0]
    live = loga > LOG_FLOOR
    ce = -np.maximum(loga, LOG_FLOOR)
    h = (h_all[rows] * vf[:, :, None]).sum(axis=1)  # (B, K)
    ent = h @ mu
    loss = float(np.mean(ce + beta * ent))
    if not want_grad:
        return loss, None, None

    resp = np.where(live[:, None], np.exp(z - loga[:, None]), 0.0)  # (B, K)
    g_theta = -(resp - mu[None, :] * live[:, None]).sum(axis=0) / B
    g_theta += beta * mu * (h - (h @ mu)[:, None]).sum(axis=0) / B

    g_table = np.zeros_like(table)
    p_e = p_all[rows]  # (B, M, K, A)
    onehot = np.zeros(p_e.shape[:2] + (mask.shape[1],))
    np.put_along_axis(onehot, acts[:, :, None], 1.0, axis=2)
    ce_part = -(resp[:, None, :, None] * (onehot[:, :, None, :] - p_e))
    logp_e = np.where(mask[rows][:, :, None, :], logp_all[rows], 0.0)
    dh = -p_e * (logp_e + h_all[rows][:, :, :, None])  # dH/dlogit
    ent_part = beta * mu[None, None, :, None] * dh
    contrib = (ce_part + ent_part) * vf[:, :, None, None] / B
    np.add.at(g_table, rows, contrib)
    g_table = np.where(mask[:, None, :], g_table, 0.0)
    return loss, g_theta, g_table


def sims_loss(batch: Sequence[SampleRecord], mu: SignalDistribution, policies: Sequence[SignalPolicy],
              beta: float) -> tuple[float, np.ndarray, list[np.ndarray]]:
    """Batch-mean of -log a[t] plus beta times the signal-weighted entropy of the visited states.

    ``a`` is the joint probability of the record's whole target tuple after
    marginalizing the signal.  Returns (loss, d/d theta, [d/d phi_j]).
    """
    if not batch:
        raise GameError("empty batch")
    enc = BatchEncoder(policies)
    rows, acts, valid = enc.encode(batch)
    loss, gt, gtab = _loss_core(mu.theta, enc.stack(policies), enc.mask, rows, acts, valid, beta)
    return loss, gt, enc.unstack(gtab, policies)


# ---------------------------------------------------------------- training


@dataclass
class SimsConfig:
    n_signals: int = 5
    batch_size: int = 128
    learning_rate: float = 0.1
    beta_init: float = 0.0
    beta_end: float = 1.0
    n_sig: int = 20
    iterations: int = 20_000
    seed: int = 0
    init_noise: float = 0.01
    restarts: int = 1  # independent runs; the lowest full-buffer loss wins
    optimizer: str = "sgd"  # or "adam" (default moment decay rates)

    @classmethod
    def slow(cls, **kw) -> "SimsConfig":
        """Step size of the adaptive-optimizer setting (much slower with plain descent)."""
        return cls(learning_rate=1e-3, **kw)

    def validate(self) -> None:
        for name in ("n_signals", "batch_size", "n_sig", "iterations", "restarts"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if not (math.isfinite(self.beta_init) and math.isfinite(self.beta_end)):
            raise ValueError("beta schedule endpoints must be finite")

    def beta(self, it: int) -> float:
        """Constant for the first half of training, then linear up to ``beta_end``."""
        half = self.iterations / 2
        if it < half:
            return self.beta_init
        frac = (it - half) / max(self.iterations - 1 - half, 1)
        return self.beta_init + (self.beta_end - self.beta_init) * min(frac, 1.0)


def init_strategy(game: Game, team: Sequence[str], config: SimsConfig, rng: np.random.Generator) -> SignalMediatedStrategy:
    theta = rng.uniform(-config.init_noise, config.init_noise, config.n_signals)
    pols = []
    for m in team:
        z = SignalPolicy.zeros(game, m, config.n_signals)
        pols.append(SignalPolicy(m, z.states, z.n_actions, rng.uniform(-config.init_noise, config.init_noise, z.phi.shape)))
    return SignalMediatedStrategy(SignalDistribution(theta), tuple(pols))


Callback = Callable[[int, float, float, SignalMediatedStrategy], None]


def train_sims(buffer: TrajectoryBuffer, game: Game, config: SimsConfig | None = None,
               rng: np.random.Generator | None = None, callback: Callback | None = None,
               every: int = 50) -> SignalMediatedStrategy:
    """Mini-batch gradient descent on the buffer.

    The policy tables move every step; signal gradients are averaged over
    ``n_sig`` steps and applied once per window.  ``callback(it, loss, beta,
    strategy)`` runs every ``every`` iterations and after the last one.  With
    ``config.restarts > 1`` the runs share ``rng`` in sequence and the one with
    the lowest loss on the whole buffer (at the final β) is returned; only its
    callbacks are delivered.
    """
    config = config or SimsConfig()
    config.validate()
    if len(buffer) == 0:
        raise GameError("cannot train on an empty buffer")
    if rng is None:
        from .rng import stream

        rng = stream(config.seed, "train")
    enc = BatchEncoder([SignalPolicy.zeros(game, m, 1) for m in buffer.members])
    encoded = enc.encode(buffer.records)
    if config.restarts == 1:
        return _train_once(encoded, enc, game, buffer.members, config, rng, callback, every)[0]
    best = None
    for _ in range(config.restarts):
        events: list = []
        hook = (lambda *a: events.append(a)) if callback is not None else None
        sms, loss = _train_once(encoded, enc, game, buffer.members, config, rng, hook, every)
        if best is None or loss < best[1]:
            best = (sms, loss, events)
    for event in best[2]:
        callback(*event)
    return best[0]


class _Adam:
    def __init__(self, shape: tuple[int, ...], b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0
        self.b1, self.b2, self.eps = b1, b2, eps

    def step(self, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1 ** self.t)
        v_hat = self.v / (1 - self.b2 ** self.t)
        return m_hat / (np.sqrt(v_hat) + self.eps)


def _train_once(encoded, enc: BatchEncoder, game: Game, team: Sequence[str], config: SimsConfig,
                rng: np.random.Generator, callback: Callback | None, every: int) -> tuple[SignalMediatedStrategy, float]:
    sms = init_strategy(game, team, config, rng)
    rows_all, acts_all, valid_all = encoded
    table = enc.stack(sms.policies)
    theta = sms.mu.theta.copy()
    acc = np.zeros_like(theta)
    n = len(rows_all)
    lr = config.learning_rate
    if config.optimizer == "adam":
        adam_table, adam_theta = _Adam(table.shape), _Adam(theta.shape)
        table_step, theta_step = adam_table.step, adam_theta.step
    else:
        table_step = theta_step = lambda g: g

    def snapshot() -> SignalMediatedStrategy:
        pols = tuple(SignalPolicy(p.owner, p.states, p.n_actions, t.copy())
                     for p, t in zip(sms.policies, enc.unstack(table, sms.policies)))
        return SignalMediatedStrategy(SignalDistribution(theta.copy()), pols)

    for it in range(config.iterations):
        beta = config.beta(it)
        idx = rng.integers(n, size=config.batch_size)
        loss, g_theta, g_table = _loss_core(theta, table, enc.mask, rows_all[idx], acts_all[idx], valid_all[idx], beta)
        table -= lr * table_step(g_table)
        acc += g_theta
        if (it + 1) % config.n_sig == 0:
            theta -= lr * theta_step(acc / config.n_sig)
            acc[:] = 0.0
        if callback is not None and ((it + 1) % every == 0 or it + 1 == config.iterations):
            callback(it + 1, loss, beta, snapshot())
    final, _, _ = _loss_core(theta, table, enc.mask, rows_all, acts_all, valid_all,
                             config.beta(config.iterations - 1), want_grad=False)
    return snapshot(), float(final)


# ---------------------------------------------------------------- play and conversion


def _opponent_chooser(game: Game, opponents: Sequence, rng: np.random.Generator):
    """Per-episode action choice of non-team players from behavioral or normal-form strategies."""
    tables: dict[str, Callable[[int], int]] = {}
    for strat in opponents:
        if isinstance(strat, BehavioralStrategy):
            d = strat.dist
            tables[strat.owner] = lambda s, d=d: sample_index(np.asarray(d[s]), rng.random())
        elif isinstance(strat, NormalFormStrategy):
            plans = list(strat.probs)
            w = np.array([strat.probs[p] for p in plans])
            plan = plans[sample_index(w, rng.random())].as_dict()
            tables[strat.owner] = lambda s, plan=plan: plan.get(s, 0)
        else:
            raise GameError(f"unsupported opponent strategy {type(strat).__name__}")
    return tables


def play_episode(sms: SignalMediatedStrategy, game: Game, opponent, rng: np.random.Generator,
                 signal: int | None = None) -> tuple[int, float]:
    """Draw a signal (unless forced), then play one episode; returns (leaf, team reward)."""
    opponents = [opponent] if opponent is not None and not isinstance(opponent, (list, tuple)) else list(opponent or [])
    xi = sample_index(sms.mu.probs, rng.random()) if signal is None else signal
    pols = {p.owner: p for p in sms.policies}
    opp = _opponent_chooser(game, opponents, rng)

    def choose(p: str, s: int) -> int:
        if p in pols:
            return sample_index(pols[p].dist(s, xi), rng.random())
        if p in opp:
            return opp[p](s)
        return int(rng.integers(game.infostates[s].num_actions))

    leaf, _ = walk(game, choose, rng)
    return leaf, float(game.nodes[leaf].payoffs[game.player_index(sms.team[0])])


def to_coordinated_strategy(sms: SignalMediatedStrategy, game: Game, cap: int = PLAN_CAP,
                            min_prob: float = 0.0) -> CoordinatedStrategy:
    """Joint-plan distribution: signal-weighted products of each member's plan probabilities."""
    team = sms.team
    plans = [enumerate_reduced_plans(game, m) for m in team]
    if math.prod(len(p) for p in plans) > cap:
        raise GameError(f"{math.prod(len(p) for p in plans)} joint plans exceed the cap of {cap}")
    mu = sms.mu.probs
    total = None
    for k in range(sms.mu.n):
        joint = np.ones(())
        for pol in sms.policies:
            joint = np.multiply.outer(joint, plan_probabilities(game, pol.owner, pol.flat(game, k)))
        total = mu[k] * joint if total is None else total + mu[k] * joint
    out = {}
    for idx in zip(*np.nonzero(total > min_prob)):
        out[tuple(plans[j][i] for j, i in enumerate(idx))] = float(total[idx])
    return CoordinatedStrategy(team, out)
