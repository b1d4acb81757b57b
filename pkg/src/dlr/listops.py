"""ListOps-SubTrees: bracketed expressions where every ``]`` is tagged with its subtree value."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dlr.errors import DlrError, ParseError

OPERATORS = ("[MIN", "[MAX", "[MED", "[SM")
CLOSE = "]"
DIGITS = tuple(str(d) for d in range(10))
VOCAB = ("<pad>",) + DIGITS + OPERATORS + (CLOSE,)
TOKEN_ID = {t: i for i, t in enumerate(VOCAB)}
IGNORE = -1
MAX_ARITY = 5
MAX_DEPTH = 10
MAX_RESAMPLES = 1000


@dataclass
class ListopsSample:
    tokens: list[str]
    tags: list[int]  # digit value at each ``]``, IGNORE elsewhere

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def apply_op(op: str, args: list[int]) -> int:
    if op == "[MIN":
        return min(args)
    if op == "[MAX":
        return max(args)
    if op == "[MED":
        s = sorted(args)
        return s[(len(s) - 1) // 2]  # lower median for even arity
    if op == "[SM":
        return sum(args) % 10
    raise ValueError(f"unknown operator {op!r}")


def eval_listops_oracle(tokens) -> list[int]:
    """Evaluate every subtree with an explicit stack; returns the per-token tags."""
    if isinstance(tokens, str):
        tokens = tokens.split()
    tags = [IGNORE] * len(tokens)
    stack: list[tuple[str, list[int]]] = []
    root_done = False
    for pos, tok in enumerate(tokens):
        if root_done:
            raise ParseError("trailing tokens after expression", pos)
        if tok in OPERATORS:
            stack.append((tok, []))
        elif tok in DIGITS:
            if not stack:
                raise ParseError("digit outside any expression", pos)
            stack[-1][1].append(int(tok))
        elif tok == CLOSE:
            if not stack:
                raise ParseError("unbalanced ']'", pos)
            op, args = stack.pop()
            if not args:
                raise ParseError(f"operator {op} without arguments", pos)
            value = apply_op(op, args)
            tags[pos] = value
            if stack:
                stack[-1][1].append(value)
            else:
                root_done = True
        else:
            raise ParseError(f"unknown token {tok!r}", pos)
    if stack or not root_done:
        raise ParseError("unterminated expression", len(tokens))
    return tags


class _Node:
    __slots__ = ("op", "children", "depth")

    def __init__(self, op, depth):
        self.op = op
        self.children: list = []
        self.depth = depth


def _serialize(node, out_tokens, out_tags) -> int:
    out_tokens.append(node.op)
    out_tags.append(IGNORE)
    args = []
    for ch in node.children:
        if isinstance(ch, _Node):
            args.append(_serialize(ch, out_tokens, out_tags))
        else:
            out_tokens.append(str(ch))
            out_tags.append(IGNORE)
            args.append(ch)
    value = apply_op(node.op, args)
    out_tokens.append(CLOSE)
    out_tags.append(value)
    return value


def _grow(rng: np.random.Generator, target: int, max_len: int) -> _Node:
    """Grow a tree by repeatedly expanding a random digit leaf into an operator node.

    An expansion with arity a replaces one token by a + 2, adding a + 1 tokens.
    """
    def new_node(depth):
        node = _Node(OPERATORS[rng.integers(len(OPERATORS))], depth)
        arity = int(rng.integers(2, MAX_ARITY + 1))
        node.children = [int(d) for d in rng.integers(0, 10, arity)]
        return node, arity

    root, arity = new_node(0)
    length = arity + 2
    frontier = [root]  # nodes that still have digit children
    while length < target:
        slots = [(n, i) for n in frontier if n.depth + 1 < MAX_DEPTH
                 for i, c in enumerate(n.children) if not isinstance(c, _Node)]
        if not slots:
            break
        parent, idx = slots[rng.integers(len(slots))]
        room = max_len - length
        if room < 3:
            break
        child, arity = new_node(parent.depth + 1)
        if arity + 1 > room:
            arity = room - 1
            child.children = child.children[:arity]
        parent.children[idx] = child
        length += arity + 1
        frontier.append(child)
    return root


def gen_listops(min_len: int, max_len: int, seed: int) -> ListopsSample:
    if not 7 <= min_len <= max_len:
        raise ValueError("need 7 <= min_len <= max_len")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RESAMPLES):
        target = int(rng.integers(min_len, max_len + 1))
        tokens, tags = [], []
        _serialize(_grow(rng, target, max_len), tokens, tags)
        if min_len <= len(tokens) <= max_len:
            return ListopsSample(tokens=tokens, tags=tags)
    raise DlrError(f"could not hit length bounds [{min_len}, {max_len}] in {MAX_RESAMPLES} resamples")


def encode(samples: list[ListopsSample], length: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad to a common length; returns (token ids (B, T), tags (B, T)) with IGNORE padding."""
    T = length or max(len(s.tokens) for s in samples)
    ids = np.zeros((len(samples), T), dtype=np.int64)
    tags = np.full((len(samples), T), IGNORE, dtype=np.int64)
    for b, s in enumerate(samples):
        ids[b, : len(s.tokens)] = [TOKEN_ID[t] for t in s.tokens]
        tags[b, : len(s.tags)] = s.tags
    return ids, tags


def one_hot(ids: np.ndarray) -> np.ndarray:
    return np.eye(len(VOCAB))[ids]
