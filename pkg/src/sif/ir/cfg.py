"""Control-flow graphs, dominators and post-dominators.

Dominator trees use the iterative algorithm of Cooper, Harvey and Kennedy;
post-dominators run the same algorithm over the reversed graph rooted at a
synthetic exit node that every returning block feeds into.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .nodes import Branch, Goto, MethodDef, Return

EXIT = "<exit>"


class CfgError(Exception):
    pass


@dataclass
class Cfg:
    blocks: list[str]
    succ: dict[str, list[str]]
    entry: str
    returns: list[str]
    branches: set[str] = field(default_factory=set)
    pred: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.pred:
            self.pred = {b: [] for b in self.blocks}
            for b in self.blocks:
                for s in self.succ[b]:
                    if b not in self.pred[s]:
                        self.pred[s].append(b)

    @classmethod
    def from_edges(cls, succ: dict[str, list[str]], entry: str, returns=(), branches=()) -> "Cfg":
        blocks = list(succ)
        return cls(blocks, {b: list(dict.fromkeys(s)) for b, s in succ.items()}, entry,
                   list(returns), set(branches))


def build_cfg(m: MethodDef) -> Cfg:
    """Edges follow terminators; a branch falls through to the next block."""
    labels = [b.label for b in m.blocks]
    succ: dict[str, list[str]] = {}
    returns, branches = [], set()
    for i, b in enumerate(m.blocks):
        t = b.terminator
        if isinstance(t, Branch):
            if i + 1 >= len(m.blocks):
                raise CfgError(f"branch in last block {b.label} has no fall-through")
            succ[b.label] = list(dict.fromkeys([labels[i + 1], t.target]))
            branches.add(b.label)
        elif isinstance(t, Goto):
            succ[b.label] = [t.target]
        elif isinstance(t, Return):
            succ[b.label] = []
            returns.append(b.label)
        else:
            raise CfgError(f"block {b.label} does not end in a terminator")
    return Cfg(labels, succ, labels[0], returns, branches)


def _postorder(succ: dict[str, list[str]], root: str) -> list[str]:
    out, seen = [], {root}
    stack = [(root, iter(succ[root]))]
    while stack:
        node, it = stack[-1]
        for s in it:
            if s not in seen:
                seen.add(s)
                stack.append((s, iter(succ[s])))
                break
        else:
            stack.pop()
            out.append(node)
    return out


def _idoms(succ: dict[str, list[str]], pred: dict[str, list[str]], root: str) -> dict[str, str]:
    rpo = list(reversed(_postorder(succ, root)))
    order = {n: i for i, n in enumerate(rpo)}
    idom = {root: root}

    def intersect(a: str, b: str) -> str:
        while a != b:
            while order[a] > order[b]:
                a = idom[a]
            while order[b] > order[a]:
                b = idom[b]
        return a

    changed = True
    while changed:
        changed = False
        for n in rpo[1:]:
            ps = [p for p in pred[n] if p in idom]
            new = ps[0]
            for p in ps[1:]:
                new = intersect(p, new)
            if idom.get(n) != new:
                idom[n] = new
                changed = True
    return idom


def reachable(cfg: Cfg) -> set[str]:
    return set(_postorder(cfg.succ, cfg.entry))


def dominators(cfg: Cfg) -> dict[str, str]:
    """Immediate dominator of every reachable block; the entry maps to itself."""
    return _idoms(cfg.succ, cfg.pred, cfg.entry)


def dominates(idom: dict[str, str], a: str, b: str) -> bool:
    while True:
        if a == b:
            return True
        parent = idom[b]
        if parent == b:
            return False
        b = parent


def dominance_frontier(cfg: Cfg, idom: dict[str, str]) -> dict[str, set[str]]:
    df: dict[str, set[str]] = {b: set() for b in idom}
    for b in idom:
        preds = [p for p in cfg.pred[b] if p in idom]
        if len(preds) < 2:
            continue
        for p in preds:
            runner = p
            while runner != idom[b]:
                df[runner].add(b)
                runner = idom[runner]
    return df


def post_dominators(cfg: Cfg) -> dict[str, str]:
    """Immediate post-dominator of every block (``EXIT`` for returning blocks).

    Raises :class:`CfgError` if some block has no path to a return.
    """
    rsucc = {b: list(cfg.pred[b]) for b in cfg.blocks}
    rsucc[EXIT] = list(cfg.returns)
    rpred = {b: list(cfg.succ[b]) for b in cfg.blocks}
    for r in cfg.returns:
        rpred[r] = rpred[r] + [EXIT]
    rpred[EXIT] = []
    ipdom = _idoms(rsucc, rpred, EXIT)
    stuck = [b for b in cfg.blocks if b not in ipdom]
    if stuck:
        raise CfgError(f"blocks cannot reach a return: {', '.join(stuck)}")
    del ipdom[EXIT]
    return ipdom


def scope_opens(cfg: Cfg, ipdom: dict[str, str], idom: dict[str, str] | None = None) -> dict[str, str | None]:
    """For every merge block, the branch block whose scope it closes.

    A merge block closes the scope of branch ``d`` when it is ``d``'s
    immediate post-dominator. The saved context of ``d`` can only be
    restored where ``d`` dominates the merge, so other candidates are
    ignored; among several, the outermost one wins.
    """
    if idom is None:
        idom = dominators(cfg)
    out: dict[str, str | None] = {}
    for b in cfg.blocks:
        if len(cfg.pred[b]) < 2:
            continue
        cands = [d for d in cfg.blocks
                 if d in cfg.branches and ipdom.get(d) == b and dominates(idom, d, b)]
        chosen = None
        for d in cands:
            if all(dominates(idom, d, o) for o in cands):
                chosen = d
        out[b] = chosen
    return out
