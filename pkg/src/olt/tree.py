"""Budgeted best-first look-ahead tree policy.

At each decision the tree is grown from the current state: the open leaf
with the highest score is expanded (one simulator call per action) until
``budget`` expansions have been made. The action returned is the first
action on the path to the open leaf with the largest discounted path
return.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from .mdp import ContractViolation, GenerativeModel, State


@dataclass(eq=False, slots=True)
class TreeNode:
    state: State
    action: int | None
    reward: float
    depth: int
    path_return: float
    path: tuple
    seq: int
    parent: "TreeNode | None" = None
    children: list = field(default_factory=list)
    score: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return not self.children


def feature_dimension(model: GenerativeModel) -> int:
    return 4 + model.state_dimension


def features(model: GenerativeModel, node: TreeNode) -> list[float]:
    """``[1, depth, reward, path_return, state / normalizer]``."""
    out = [1.0, float(node.depth), node.reward, node.path_return]
    out.extend(x / s for x, s in zip(node.state, model.state_normalizer))
    return out


def score(theta: Sequence[float], f: Sequence[float]) -> float:
    if len(theta) != len(f):
        raise ContractViolation(f"theta has dimension {len(theta)}, features {len(f)}")
    total = 0.0
    for w, x in zip(theta, f):
        total += w * x
    return total


class Scorer(Protocol):
    def __call__(self, model: GenerativeModel, node: TreeNode) -> float: ...


class LinearScorer:
    """``theta . features(node)``."""

    def __init__(self, theta: Iterable[float]):
        self.theta = tuple(float(w) for w in theta)
        if not all(np.isfinite(self.theta)):
            raise ContractViolation("scoring parameters must be finite")

    def __call__(self, model, node):
        return score(self.theta, features(model, node))

    def __repr__(self):
        return f"LinearScorer({list(self.theta)})"


class OptimisticScorer:
    """Path return plus the largest return any continuation could add."""

    def __call__(self, model, node):
        g = model.discount
        return node.path_return + g**node.depth * model.reward_upper_bound / (1.0 - g)

    def __repr__(self):
        return "OptimisticScorer()"


PRESETS = ("uniform", "greedy", "optimistic")


def preset_theta(kind: str, model: GenerativeModel) -> np.ndarray:
    """Weight vectors for the presets that are linear in the features."""
    theta = np.zeros(feature_dimension(model))
    if kind == "uniform":
        theta[1] = -1.0
    elif kind == "greedy":
        theta[3] = 1.0
    elif kind == "optimistic":
        raise ValueError("the optimistic scorer is not linear in the features")
    else:
        raise ValueError(f"unknown preset {kind!r}; expected one of {PRESETS}")
    return theta


def baseline_scorer(kind: str, model: GenerativeModel | None = None) -> Scorer:
    """uniform: ``-depth``; greedy: path return; optimistic: path return + bound."""
    if kind == "optimistic":
        return OptimisticScorer()
    if kind == "uniform":
        return LinearScorer((0.0, -1.0, 0.0, 0.0) + (0.0,) * _state_dim(model))
    if kind == "greedy":
        return LinearScorer((0.0, 0.0, 0.0, 1.0) + (0.0,) * _state_dim(model))
    raise ValueError(f"unknown preset {kind!r}; expected one of {PRESETS}")


def _state_dim(model):
    if model is None:
        raise ValueError("linear presets need the model to size the weight vector")
    return model.state_dimension


def as_scorer(policy, model: GenerativeModel) -> Scorer:
    """Accept a scorer, a preset name or a weight vector."""
    if isinstance(policy, str):
        return baseline_scorer(policy, model)
    if callable(policy):
        return policy
    theta = np.asarray(policy, dtype=float).ravel()
    if theta.size != feature_dimension(model):
        raise ContractViolation(
            f"theta has dimension {theta.size}, {model.name} needs {feature_dimension(model)}"
        )
    return LinearScorer(theta)


@dataclass
class Expansion:
    sequence: int
    node_seq: int
    depth: int
    score: float
    path: tuple

    def as_record(self) -> dict:
        return {
            "sequence": self.sequence,
            "node": self.node_seq,
            "depth": self.depth,
            "score": self.score,
            "path": list(self.path),
        }


@dataclass
class LookaheadTree:
    root: TreeNode
    budget: int
    action_count: int
    open: list = field(default_factory=list)
    expansion_count: int = 0
    trace: list = field(default_factory=list)
    nodes: list = field(default_factory=list)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def leaves(self) -> list[TreeNode]:
        return [entry[2] for entry in self.open]

    def trace_records(self) -> list[dict]:
        return [e.as_record() for e in self.trace]

    def write_trace_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.trace_records():
                fh.write(json.dumps(rec) + "\n")


def _linear_score(w0, w1, w2, w3, tail, depth, reward, ret, state):
    # same operation order as score(theta, features(...)), so cached scores match exactly
    total = 0.0
    total += w0 * 1.0
    total += w1 * float(depth)
    total += w2 * reward
    total += w3 * ret
    for (w, n), x in zip(tail, state):
        total += w * (x / n)
    return total


def build_tree(model: GenerativeModel, state, policy, budget: int) -> LookaheadTree:
    """Grow a tree from ``state`` with ``budget`` best-first expansions.

    ``policy`` is a weight vector, a preset name or any scorer. Scores are
    computed once per node. Equal scores pop in creation order.
    """
    if budget < 1:
        raise ContractViolation(f"budget must be >= 1, got {budget}")
    if len(state) != model.state_dimension:
        raise ContractViolation(
            f"{model.name}: state has dimension {len(state)}, expected {model.state_dimension}"
        )
    scorer = as_scorer(policy, model)
    linear = isinstance(scorer, LinearScorer)
    if linear:
        w0, w1, w2, w3 = scorer.theta[:4]
        tail = tuple(zip(scorer.theta[4:], model.state_normalizer))
    gamma = model.discount
    transition = model._step  # inputs validated once at the root

    root = TreeNode(
        state=tuple(float(x) for x in state), action=None, reward=0.0,
        depth=0, path_return=0.0, path=(), seq=0,
    )
    model.check(root.state, 0)
    root.score = scorer(model, root)
    tree = LookaheadTree(root=root, budget=budget, action_count=model.action_count)
    tree.nodes.append(root)
    heap = tree.open
    heapq.heappush(heap, (-root.score, 0, root))
    seq = 1
    actions = range(model.action_count)
    while tree.expansion_count < budget and heap:
        neg, _, node = heapq.heappop(heap)
        tree.trace.append(Expansion(tree.expansion_count, node.seq, node.depth, -neg, node.path))
        depth = node.depth + 1
        disc = gamma**node.depth
        for a in actions:
            nxt, r = transition(node.state, a)
            ret = node.path_return + disc * r
            child = TreeNode(nxt, a, r, depth, ret, node.path + (a,), seq, node)
            if linear:
                child.score = _linear_score(w0, w1, w2, w3, tail, depth, r, ret, nxt)
            else:
                child.score = scorer(model, child)
            node.children.append(child)
            tree.nodes.append(child)
            heapq.heappush(heap, (-child.score, seq, child))
            seq += 1
        tree.expansion_count += 1
    return tree


def best_leaf(tree: LookaheadTree) -> TreeNode:
    """Open leaf with maximal path return; ties go to the smallest action path."""
    best = None
    for node in tree.leaves():
        if (best is None or node.path_return > best.path_return
                or (node.path_return == best.path_return and node.path < best.path)):
            best = node
    return best


def select_action(tree: LookaheadTree) -> int:
    if tree.expansion_count < 1:
        raise ContractViolation("tree has not been expanded")
    return best_leaf(tree).path[0]


def act(model: GenerativeModel, state, policy, budget: int) -> int:
    """Closed-loop look-ahead tree policy."""
    return select_action(build_tree(model, state, policy, budget))
