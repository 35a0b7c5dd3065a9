"""Text formats for cladograms.

Two formats are supported.

Newick
    ASCII text terminated by ``;`` with integer leaf labels and unlabelled
    internal nodes.  Output is rooted at the internal neighbour of leaf 1,
    giving a three-way top split, e.g. ``(1,2,(3,4));``, with siblings ordered
    by their smallest leaf label.  Input may also use a two-way top split such
    as ``((1,2),(3,4));``; the degree-2 root is then spliced out.  Branch
    lengths (``:0.5``) are accepted and ignored.
JSON
    ``{"n_leaves": N, "edges": [[a, b], ...]}``.

Internal vertex ids are not preserved by the Newick format; parsing assigns
fresh ids ``N+1, N+2, ...`` in order of appearance.
"""

from __future__ import annotations

import json
import re

from .errors import InvalidTree, ParseError
from .tree import Cladogram


def to_newick(t: Cladogram) -> str:
    n = t.n_leaves
    (top,) = t._nbrs[1]
    out = {}
    order = []
    parent = {top: 0}
    stack = [top]
    while stack:
        v = stack.pop()
        order.append(v)
        for w in t._nbrs[v]:
            if w != parent[v]:
                parent[w] = v
                stack.append(w)
    for v in reversed(order):
        if v <= n:
            out[v] = (v, str(v))
        else:
            kids = sorted(out.pop(w) for w in t._nbrs[v] if w != parent[v])
            out[v] = (kids[0][0], "(" + ",".join(s for _, s in kids) + ")")
    return out[top][1] + ";"


def to_json(t: Cladogram) -> str:
    return json.dumps({"n_leaves": t.n_leaves, "edges": [list(e) for e in t.edges]})


def serialize(t: Cladogram, fmt: str = "newick") -> str:
    """Write ``t`` as ``"newick"`` or ``"json"`` text."""
    if fmt == "newick":
        return to_newick(t)
    if fmt == "json":
        return to_json(t)
    raise ValueError(f"unknown format {fmt!r}")


_TOKEN = re.compile(r"\s*(?:(?P<p>[(),;])|(?P<num>\d+)|(?P<len>:\s*[-+0-9.eE]+))")


def _position(text: str, i: int) -> tuple[int, int]:
    line = text.count("\n", 0, i) + 1
    col = i - (text.rfind("\n", 0, i) + 1) + 1
    return line, col


def from_newick(text: str) -> Cladogram:
    """Parse Newick text into a :class:`Cladogram`.

    Raises
    ------
    ParseError
        With the 1-based line and column of the first offending character.
    """

    def fail(msg, i):
        line, col = _position(text, i)
        raise ParseError(msg, line=line, column=col)

    tokens = []
    i = 0
    while i < len(text):
        if text[i].isspace():
            i += 1
            continue
        mt = _TOKEN.match(text, i)
        if not mt or mt.end() == i:
            fail(f"unexpected character {text[i]!r}", i)
        start = mt.start("p") if mt.group("p") else mt.start("num") if mt.group("num") else mt.start("len")
        if mt.group("len") is None:
            tokens.append((mt.group("p") or int(mt.group("num")), start))
        i = mt.end()
    tokens.append((None, len(text)))

    # shift-reduce over the token stream; internal nodes get provisional
    # negative ids until the leaf count is known
    stack: list[tuple[list[int], int]] = []
    edges: list[tuple[int, int]] = []
    leaves: list[tuple[int, int]] = []
    root = None
    expect_item = True
    n_inner = 0
    k = 0
    while True:
        tok, at = tokens[k]
        k += 1
        if tok == "(":
            if not expect_item or root is not None:
                fail("unexpected '('", at)
            stack.append(([], at))
        elif isinstance(tok, int):
            if not expect_item or root is not None:
                fail("unexpected leaf label", at)
            leaves.append((tok, at))
            if not stack:
                fail("a cladogram needs at least 3 leaves", at)
            stack[-1][0].append(tok)
            expect_item = False
        elif tok == ",":
            if expect_item or not stack:
                fail("unexpected ','", at)
            expect_item = True
        elif tok == ")":
            if expect_item or not stack:
                fail("unexpected ')'", at)
            kids, opened = stack.pop()
            top = not stack
            if len(kids) not in ((2, 3) if top else (2,)):
                fail(f"internal node with {len(kids)} children", opened)
            if top and len(kids) == 2:
                edges.append((kids[0], kids[1]))
                root = 0
            else:
                n_inner += 1
                v = -n_inner
                edges.extend((v, c) for c in kids)
                if top:
                    root = v
                else:
                    stack[-1][0].append(v)
            expect_item = False
        elif tok == ";":
            if stack or root is None:
                fail("unexpected ';'", at)
            break
        else:
            fail("expected ';'", at)
    if tokens[k][0] is not None:
        fail("trailing text after ';'", tokens[k][1])

    n = len(leaves)
    seen = set()
    for v, at in leaves:
        if v in seen or not 1 <= v <= n:
            fail(f"leaf label {v} is repeated or outside 1..{n}", at)
        seen.add(v)
    if n < 3:
        fail("a cladogram needs at least 3 leaves", leaves[0][1] if leaves else 0)
    edges = [(n - a if a < 0 else a, n - b if b < 0 else b) for a, b in edges]
    try:
        return Cladogram(n, edges)
    except InvalidTree as exc:
        raise ParseError(str(exc), line=1, column=1) from exc


def from_json(text: str) -> Cladogram:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from exc
    if not isinstance(obj, dict) or "n_leaves" not in obj or "edges" not in obj:
        raise ParseError("expected an object with n_leaves and edges", line=1, column=1)
    try:
        return Cladogram(obj["n_leaves"], obj["edges"])
    except (InvalidTree, TypeError) as exc:
        raise ParseError(str(exc), line=1, column=1) from exc


def parse(text: str) -> Cladogram:
    """Parse either format; text starting with ``{`` is read as JSON."""
    if text.lstrip().startswith("{"):
        return from_json(text)
    return from_newick(text)


def load(path) -> Cladogram:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())
