"""Policy evaluation and direct policy search campaigns.

``J(theta)`` is the mean truncated discounted return of the look-ahead tree
policy over a fixed, seeded set of initial states. Every candidate sees the
same states, so comparisons between candidates are paired.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import optimizers as opt
from .mdp import ContractViolation, GenerativeModel, make_model
from .tree import act, as_scorer, feature_dimension, preset_theta

log = logging.getLogger(__name__)

HOLDOUT_SEED_OFFSET = 1_000_003


def canonical_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class EvaluationSpec:
    domain: str
    domain_params: dict = field(default_factory=dict)
    n_initial: int = 10
    seed: int = 0
    horizon: int = 50
    budget: int = 5
    holdout_seed: int | None = None
    holdout_count: int | None = None

    def __post_init__(self):
        if self.horizon < 0:
            raise ContractViolation("horizon must be >= 0")
        if self.budget < 1:
            raise ContractViolation("budget must be >= 1")
        if self.n_initial < 1:
            raise ContractViolation("n_initial must be >= 1")

    def model(self) -> GenerativeModel:
        return make_model(self.domain, **self.domain_params)

    def states(self) -> list:
        return self.model().initial_states(self.n_initial, self.seed)

    def holdout_states(self) -> list:
        seed = self.holdout_seed if self.holdout_seed is not None else self.seed + HOLDOUT_SEED_OFFSET
        return self.model().initial_states(self.holdout_count or self.n_initial, seed)

    def with_budget(self, budget: int) -> "EvaluationSpec":
        return EvaluationSpec(**{**asdict(self), "budget": budget})

    @property
    def hash(self) -> str:
        return canonical_hash(asdict(self))

    def return_bound(self) -> float:
        """Largest achievable truncated return, ``r_max (1 - g^T) / (1 - g)``."""
        m = self.model()
        g = m.discount
        return m.reward_upper_bound * (1 - g**self.horizon) / (1 - g)

    def truncation_error(self) -> float:
        m = self.model()
        g = m.discount
        return abs(m.reward_upper_bound) * g**self.horizon / (1 - g)


@dataclass
class RolloutRecord:
    initial_state: tuple
    discount: float
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)

    @property
    def discounted_return(self) -> float:
        total = 0.0
        for t, r in enumerate(self.rewards):
            total += self.discount**t * r
        return total

    def records(self) -> list[dict]:
        out, cum = [], 0.0
        for t, (s, a, r) in enumerate(zip(self.states, self.actions, self.rewards)):
            cum += self.discount**t * r
            out.append({"t": t, "state": list(s), "action": a, "reward": r, "return": cum})
        return out

    def to_jsonl(self, **extra) -> str:
        return "".join(json.dumps({**rec, **extra}) + "\n" for rec in self.records())


def rollout(model: GenerativeModel, s0, policy, budget: int, horizon: int) -> RolloutRecord:
    """Run the tree policy closed-loop for ``horizon`` steps."""
    if horizon < 0:
        raise ContractViolation("horizon must be >= 0")
    scorer = as_scorer(policy, model)
    rec = RolloutRecord(initial_state=tuple(s0), discount=model.discount)
    s = tuple(float(x) for x in s0)
    for _ in range(horizon):
        a = act(model, s, scorer, budget)
        nxt, r = model.step(s, a)
        rec.states.append(s)
        rec.actions.append(a)
        rec.rewards.append(r)
        s = nxt
    return rec


class PolicyObjective:
    """Picklable ``theta -> J(theta)`` for one evaluation spec and state set."""

    def __init__(self, spec: EvaluationSpec, states: Sequence | None = None):
        self.spec = spec
        self.model = spec.model()
        self.states = list(states) if states is not None else spec.states()

    def returns(self, policy) -> list[float]:
        return [
            rollout(self.model, s, policy, self.spec.budget, self.spec.horizon).discounted_return
            for s in self.states
        ]

    def __call__(self, policy) -> float:
        return float(np.mean(self.returns(policy)))


def objective(spec: EvaluationSpec, policy) -> float:
    return PolicyObjective(spec)(policy)


def default_space(model: GenerativeModel, bound: float = 10.0) -> opt.SearchSpace:
    return opt.SearchSpace.cube(feature_dimension(model), -bound, bound)


def preset_points(model: GenerativeModel) -> np.ndarray:
    return np.vstack([preset_theta("uniform", model), preset_theta("greedy", model)])


@dataclass
class CampaignResult:
    spec: EvaluationSpec
    run: opt.OptimizerRun
    best_theta: np.ndarray
    train_J: float
    holdout_J: float
    holdout_returns: list
    baselines: dict  # preset -> {"train": J, "holdout": J}
    overlap: bool

    def best_theta_artifact(self, config_hash: str | None = None) -> dict:
        return {
            "domain": self.spec.domain,
            "feature_dimension": int(self.best_theta.size),
            "weights": self.best_theta.tolist(),
            "spec_hash": self.spec.hash,
            "config_hash": config_hash,
        }

    def holdout_artifact(self, config_hash: str | None = None) -> dict:
        return {
            "config_hash": config_hash,
            "spec_hash": self.spec.hash,
            "train_J": self.train_J,
            "holdout_J": self.holdout_J,
            "holdout_returns": self.holdout_returns,
            "baselines": self.baselines,
            "train_holdout_overlap": self.overlap,
            "truncation_error_bound": self.spec.truncation_error(),
        }


def _write(path: Path, text: str) -> None:
    path.write_text(text)


def write_run_artifacts(out_dir, run: opt.OptimizerRun, config_hash: str | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # wall-clock stays out of trace.csv so reruns are byte-identical
    _write(out / "trace.csv", run.to_csv(include_wallclock=False))
    _write(out / "run.json", json.dumps({"config_hash": config_hash, **run.to_dict()}, indent=1))


def run_campaign(spec: EvaluationSpec, optimizer: str = "cem", config=None,
                 space: opt.SearchSpace | None = None, seed: int = 0, workers: int = 1,
                 out_dir=None, config_hash: str | None = None) -> CampaignResult:
    """Optimize the scoring weights for ``spec`` and evaluate the winner on held-out states.

    The uniform and greedy presets are injected into the optimizer's first
    batch, so the best training ``J`` is never below theirs.
    """
    model = spec.model()
    space = space or default_space(model)
    if space.dim != feature_dimension(model):
        raise ContractViolation(
            f"search space has dimension {space.dim}, {model.name} needs {feature_dimension(model)}"
        )
    train = PolicyObjective(spec)
    try:
        run = opt.maximize(optimizer, train, space, config, seed,
                           initial_points=preset_points(model), workers=workers)
    except opt.OptimizationAborted as exc:
        if out_dir is not None and exc.run is not None:
            write_run_artifacts(out_dir, exc.run, config_hash)
        raise

    holdout_states = spec.holdout_states()
    overlap = bool(set(map(tuple, train.states)) & set(map(tuple, holdout_states)))
    if overlap and model.has_continuous_initial_region:
        raise ContractViolation("training and held-out initial states overlap")
    held = PolicyObjective(spec, holdout_states)

    best = np.asarray(run.best_x, dtype=float)
    holdout_returns = held.returns(best)
    baselines = {
        kind: {"train": train(kind), "holdout": held(kind)}
        for kind in ("uniform", "greedy", "optimistic")
    }
    result = CampaignResult(
        spec=spec, run=run, best_theta=best, train_J=run.best_value,
        holdout_J=float(np.mean(holdout_returns)), holdout_returns=holdout_returns,
        baselines=baselines, overlap=overlap,
    )
    log.info("campaign %s B=%d: train J=%.6g holdout J=%.6g", spec.domain, spec.budget,
             result.train_J, result.holdout_J)
    if out_dir is not None:
        out = Path(out_dir)
        write_run_artifacts(out, run, config_hash)
        _write(out / "best_theta.json", json.dumps(result.best_theta_artifact(config_hash), indent=1))
        _write(out / "holdout.json", json.dumps(result.holdout_artifact(config_hash), indent=1))
    return result


SWEEP_COLUMNS = ("budget", "J_optimized", "J_uniform", "J_greedy", "J_optimistic", "evals", "wallclock_ms")


@dataclass
class SweepRow:
    budget: int
    J_optimized: float
    J_uniform: float
    J_greedy: float
    J_optimistic: float
    evals: int
    wallclock_ms: float


def budget_sweep(spec: EvaluationSpec, budgets: Sequence[int], optimizer: str = "cem",
                 config=None, space=None, seed: int = 0, workers: int = 1) -> list[SweepRow]:
    """One campaign per budget; all ``J`` columns are on the training states."""
    budgets = list(budgets)
    if not budgets:
        raise ContractViolation("budget list is empty")
    if any(b < 1 for b in budgets) or budgets != sorted(budgets):
        raise ContractViolation("budgets must be positive and ascending")
    rows = []
    for b in budgets:
        t0 = time.perf_counter()
        res = run_campaign(spec.with_budget(b), optimizer, config, space, seed, workers)
        rows.append(SweepRow(
            budget=b,
            J_optimized=res.train_J,
            J_uniform=res.baselines["uniform"]["train"],
            J_greedy=res.baselines["greedy"]["train"],
            J_optimistic=res.baselines["optimistic"]["train"],
            evals=res.run.evaluations,
            wallclock_ms=(time.perf_counter() - t0) * 1e3,
        ))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        d = asdict(row)
        w.writerow([repr(d[c]) if isinstance(d[c], float) else d[c] for c in SWEEP_COLUMNS])
    return buf.getvalue()

