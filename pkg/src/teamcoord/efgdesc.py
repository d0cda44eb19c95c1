"""Line-oriented ``efgdesc v1`` game description format.

Example::

    efgdesc v1
    players T1 T2 O
    team T1 T2
    zerosum
    node root player=O infostate=o actions=L,R
    chance c actions=x,y probs=1/2,1/2
    terminal z payoffs=100,100,-100
    terminal w payoff=0            # zero-sum shorthand: team gets v, others -v
    edge root L c
    attr grid_side=3                # JSON value, no spaces

Nodes may carry ``member=<p>`` to record the team member that owned the
state before a team merge.  Blank lines and ``#`` comments are ignored.  The root is the unique node
without an incoming edge.  Children are ordered by their parent's action list.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

from .game import CHANCE_NODE, DECISION, TERMINAL, Game, GameError, RawNode, make_game

HEADER = "efgdesc v1"


class GameParseError(GameError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def _number(text: str, line: int, col: int) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise GameParseError(f"not a number: {text!r}", line, col) from None


def _tokens(raw: str) -> list[tuple[str, int]]:
    out, i = [], 0
    while i < len(raw):
        if raw[i].isspace():
            i += 1
            continue
        j = i
        while j < len(raw) and not raw[j].isspace():
            j += 1
        out.append((raw[i:j], i + 1))
        i = j
    return out


def parse_game(text: str) -> Game:
    players: list[str] | None = None
    team: list[str] = []
    zero_sum = False
    raw_nodes: dict[str, RawNode] = {}
    where: dict[str, tuple[int, int]] = {}
    shorthand: dict[str, float] = {}
    edges: list[tuple[str, str, str, int, int]] = []
    members: dict[str, str] = {}
    attrs: dict = {}
    header_seen = False

    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        toks = _tokens(body)
        if not toks:
            continue
        if not header_seen:
            if " ".join(t for t, _ in toks) != HEADER:
                raise GameParseError(f"expected header {HEADER!r}", lineno, toks[0][1])
            header_seen = True
            continue
        kw, col = toks[0]
        args = toks[1:]
        if kw == "players":
            players = [t for t, _ in args]
            if not players:
                raise GameParseError("empty player list", lineno, col)
        elif kw == "team":
            team = [t for t, _ in args]
        elif kw == "zerosum":
            zero_sum = True
        elif kw == "attr":
            if len(args) != 1 or "=" not in args[0][0]:
                raise GameParseError("attr needs <key>=<json>", lineno, col)
            k, v = args[0][0].split("=", 1)
            try:
                attrs[k] = json.loads(v)
            except json.JSONDecodeError as exc:
                raise GameParseError(f"bad JSON in attr {k!r}: {exc.msg}", lineno, args[0][1] + len(k) + 1) from None
        elif kw in ("node", "chance", "terminal"):
            if not args:
                raise GameParseError(f"{kw} needs an id", lineno, col)
            nid, ncol = args[0]
            if nid in raw_nodes:
                raise GameParseError(f"duplicate node id {nid!r}", lineno, ncol)
            fields: dict[str, tuple[str, int]] = {}
            for tok, tcol in args[1:]:
                if "=" not in tok:
                    raise GameParseError(f"expected key=value, got {tok!r}", lineno, tcol)
                k, v = tok.split("=", 1)
                fields[k] = (v, tcol + len(k) + 1)
            raw_nodes[nid] = _make_raw(kw, nid, fields, lineno, col, shorthand)
            where[nid] = (lineno, ncol)
            if "member" in fields and raw_nodes[nid].infostate is not None:
                members[raw_nodes[nid].infostate] = fields["member"][0]
        elif kw == "edge":
            if len(args) != 3:
                raise GameParseError("edge needs <parent> <action> <child>", lineno, col)
            (p, _), (a, _), (c, _) = args
            edges.append((p, a, c, lineno, args[0][1]))
        else:
            raise GameParseError(f"unknown keyword {kw!r}", lineno, col)

    if not header_seen:
        raise GameParseError(f"missing header {HEADER!r}", 1, 1)
    if players is None:
        raise GameParseError("missing players declaration", 1, 1)
    if not raw_nodes:
        raise GameParseError("no nodes declared", 1, 1)

    has_parent: set[str] = set()
    slots: dict[str, dict[str, RawNode]] = {}
    for p, a, c, lineno, col in edges:
        for ref in (p, c):
            if ref not in raw_nodes:
                raise GameParseError(f"edge references undeclared node {ref!r}", lineno, col)
        parent = raw_nodes[p]
        if a not in parent.actions:
            raise GameParseError(f"node {p!r} has no action {a!r}", lineno, col)
        if a in slots.setdefault(p, {}):
            raise GameParseError(f"action {a!r} of node {p!r} has two children", lineno, col)
        if c in has_parent:
            raise GameParseError(f"node {c!r} has two parents", lineno, col)
        slots[p][a] = raw_nodes[c]
        has_parent.add(c)
    for nid, raw in raw_nodes.items():
        if raw.kind == TERMINAL:
            continue
        missing = [a for a in raw.actions if a not in slots.get(nid, {})]
        if missing:
            raise GameParseError(f"node {nid!r} has no edge for action {missing[0]!r}", *where[nid])
        raw.children = [slots[nid][a] for a in raw.actions]

    roots = [nid for nid in raw_nodes if nid not in has_parent]
    if len(roots) != 1:
        raise GameParseError(f"expected exactly one root, found {len(roots)}", 1, 1)

    for nid, value in shorthand.items():
        if not zero_sum or not team:
            raise GameParseError("payoff=<v> needs 'zerosum' and a team declaration", *where[nid])
        raw_nodes[nid].payoffs = [value if q in team else -value for q in players]
    return make_game(players, raw_nodes[roots[0]], team=team, zero_sum=zero_sum, attrs=attrs, members=members)


def _make_raw(kind: str, nid: str, fields: dict[str, tuple[str, int]], lineno: int, col: int,
              shorthand: dict[str, float]) -> RawNode:
    def need(key: str) -> tuple[str, int]:
        if key not in fields:
            raise GameParseError(f"{kind} {nid!r} is missing {key}=", lineno, col)
        return fields[key]

    if kind == "terminal":
        if "payoff" in fields:
            v, c = fields["payoff"]
            shorthand[nid] = _number(v, lineno, c)
            return RawNode(TERMINAL, nid, payoffs=[])
        v, c = need("payoffs")
        return RawNode(TERMINAL, nid, payoffs=[_number(x, lineno, c) for x in v.split(",")])
    actions, _ = need("actions")
    acts = actions.split(",")
    if kind == "chance":
        probs, pc = need("probs")
        return RawNode(CHANCE_NODE, nid, "chance", None, acts, [], [_number(x, lineno, pc) for x in probs.split(",")])
    player, _ = need("player")
    state = fields.get("infostate", (None, 0))[0]
    return RawNode(DECISION, nid, player, state, acts)


def load_game(path: str | Path) -> Game:
    return parse_game(Path(path).read_text())


def dump_game(game: Game) -> str:
    lines = [HEADER, "players " + " ".join(game.players)]
    if game.team:
        lines.append("team " + " ".join(game.team))
    if game.zero_sum:
        lines.append("zerosum")
    for k, v in game.attrs.items():
        lines.append(f"attr {k}=" + json.dumps(v, separators=(",", ":"), sort_keys=True))
    names = _node_names(game)
    for n in game.nodes:
        if n.kind == TERMINAL:
            lines.append(f"terminal {names[n.id]} payoffs=" + ",".join(repr(u) for u in n.payoffs))
        elif n.kind == CHANCE_NODE:
            lines.append(f"chance {names[n.id]} actions={','.join(n.actions)} probs=" + ",".join(repr(p) for p in n.chance_probs))
        else:
            s = game.infostates[n.infostate]
            member = f" member={s.member}" if s.member != s.player else ""
            lines.append(f"node {names[n.id]} player={n.player} infostate={s.label} actions={','.join(n.actions)}{member}")
    for n in game.nodes:
        for a, c in zip(n.actions, n.children):
            lines.append(f"edge {names[n.id]} {a} {names[c]}")
    return "\n".join(lines) + "\n"


def _safe(token: str) -> bool:
    return bool(token) and not any(c.isspace() or c in "#=" for c in token)


def _node_names(game: Game) -> list[str]:
    labels = [n.label for n in game.nodes]
    if all(_safe(x) for x in labels) and len(set(labels)) == len(labels):
        return labels
    return [f"n{n.id}" for n in game.nodes]


def save_game(game: Game, path: str | Path) -> None:
    Path(path).write_text(dump_game(game))
