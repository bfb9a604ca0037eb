"""Derivative-free maximizers over boxes: CEM, (1+1)-ES and GP optimization.

All optimizers maximize, clamp proposals into the box, are deterministic
given their seed, and return an :class:`OptimizerRun` with the full
evaluation history. ``initial_points`` lets a caller inject known points
(e.g. baseline presets) into the first batch.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

Objective = Callable[[np.ndarray], float]


class OptimizationAborted(RuntimeError):
    """Optimizer stopped early; ``run`` holds everything evaluated so far."""

    def __init__(self, message, run=None):
        super().__init__(message)
        self.run = run


class IllConditionedModelError(OptimizationAborted):
    pass


@dataclass(frozen=True)
class SearchSpace:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds differ in dimension")
        if not np.all(lo < hi):
            raise ValueError("need lower < upper in every dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, dim: int, low: float = -10.0, high: float = 10.0) -> "SearchSpace":
        return cls(np.full(dim, low), np.full(dim, high))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lower + rng.random((n, self.dim)) * self.width


@dataclass
class CemConfig:
    population: int = 32
    elites: int = 8
    smoothing: float = 0.7
    iterations: int = 50
    std_floor: float = 1e-6

    def __post_init__(self):
        if not 1 <= self.elites <= self.population:
            raise ValueError("need 1 <= elites <= population")
        if not 0.0 < self.smoothing <= 1.0:
            raise ValueError("smoothing must lie in (0, 1]")

    @property
    def evaluations(self) -> int:
        return self.population * self.iterations


@dataclass
class OnePlusOneConfig:
    max_evaluations: int = 2000
    initial_std: float | None = None  # default: mean box width / 4
    expand: float = 1.5
    shrink: float = 0.82

    @property
    def evaluations(self) -> int:
        return self.max_evaluations


@dataclass
class GpoConfig:
    budget: int = 50
    signal_std: float = 1.0
    length_scale: float | None = None  # default: 0.2 * ||upper - lower||
    noise_std: float = 1e-4
    xi: float = 0.01
    candidates: int = 2048
    initial_design: int | None = None  # default: 2 * dim + 2

    @property
    def evaluations(self) -> int:
        return self.budget

    def n_initial(self, dim: int) -> int:
        return self.initial_design if self.initial_design is not None else 2 * dim + 2

    def scale(self, space: SearchSpace) -> float:
        if self.length_scale is not None:
            return self.length_scale
        return 0.2 * float(np.linalg.norm(space.width))


@dataclass
class TraceRow:
    iteration: int
    best_J: float
    mean_J: float
    evals: int
    wallclock_ms: float


TRACE_COLUMNS = ("iteration", "best_J", "mean_J", "evals", "wallclock_ms")


@dataclass
class OptimizerRun:
    method: str
    best_x: np.ndarray | None = None
    best_value: float = -math.inf
    trace: list = field(default_factory=list)
    points: list = field(default_factory=list)
    values: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int = 0
    step_sizes: list = field(default_factory=list)

    @property
    def evaluations(self) -> int:
        return len(self.values)

    def record(self, xs: np.ndarray, ys: Sequence[float]) -> None:
        for x, y in zip(xs, ys):
            self.points.append(np.array(x, dtype=float))
            self.values.append(float(y))
            if y > self.best_value:
                self.best_value = float(y)
                self.best_x = np.array(x, dtype=float)

    def log(self, iteration: int, batch: Sequence[float], started: float) -> None:
        finite = [y for y in batch if math.isfinite(y)]
        self.trace.append(TraceRow(
            iteration=iteration,
            best_J=self.best_value,
            mean_J=float(np.mean(finite)) if finite else -math.inf,
            evals=self.evaluations,
            wallclock_ms=(time.perf_counter() - started) * 1e3,
        ))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "config": self.config,
            "best_x": None if self.best_x is None else self.best_x.tolist(),
            "best_value": self.best_value,
            "evaluations": self.evaluations,
            "trace": [asdict(row) for row in self.trace],
            "points": [p.tolist() for p in self.points],
            "values": self.values,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def to_csv(self, include_wallclock: bool = True) -> str:
        cols = TRACE_COLUMNS if include_wallclock else TRACE_COLUMNS[:-1]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for row in self.trace:
            d = asdict(row)
            writer.writerow([_fmt(d[c]) for c in cols])
        return buf.getvalue()


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else v


def _safe(y) -> float:
    y = float(y)
    return y if math.isfinite(y) else -math.inf


def evaluate_batch(objective: Objective, xs: np.ndarray, workers: int = 1) -> list[float]:
    """Evaluate rows of ``xs``; results are in input order for any worker count."""
    if workers > 1 and len(xs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return [_safe(y) for y in pool.map(objective, list(xs))]
    return [_safe(objective(x)) for x in xs]


def _seed_points(space, initial_points):
    if initial_points is None:
        return np.empty((0, space.dim))
    pts = np.atleast_2d(np.asarray(initial_points, dtype=float))
    if pts.size and pts.shape[1] != space.dim:
        raise ValueError("initial points do not match the search space dimension")
    return space.clip(pts)


def cem_maximize(objective: Objective, space: SearchSpace, config: CemConfig | None = None,
                 seed: int = 0, initial_points=None, workers: int = 1) -> OptimizerRun:
    """Cross-entropy method with a diagonal Gaussian and smoothed updates."""
    config = config or CemConfig()
    rng = np.random.default_rng(seed)
    run = OptimizerRun("cem", config=asdict(config), seed=seed)
    mean = space.center.copy()
    std = space.width / 4.0
    injected = _seed_points(space, initial_points)[: config.population]
    started = time.perf_counter()
    for it in range(config.iterations):
        xs = space.clip(mean + std * rng.standard_normal((config.population, space.dim)))
        if it == 0 and len(injected):
            xs[: len(injected)] = injected
        ys = evaluate_batch(objective, xs, workers)
        run.record(xs, ys)
        run.log(it, ys, started)
        if all(y == -math.inf for y in ys):
            raise OptimizationAborted(
                f"cem: every sample in iteration {it} had a non-finite objective", run)
        order = np.argsort(-np.asarray(ys), kind="stable")[: config.elites]
        elite = xs[order]
        a = config.smoothing
        mean = a * elite.mean(axis=0) + (1 - a) * mean
        std = np.maximum(a * elite.std(axis=0) + (1 - a) * std, config.std_floor)
    return run


def one_plus_one_maximize(objective: Objective, space: SearchSpace,
                          config: OnePlusOneConfig | None = None, seed: int = 0,
                          x0=None, initial_points=None) -> OptimizerRun:
    """(1+1)-ES with Gaussian mutation and the 1/5th success rule.

    The parent starts at ``x0`` (default: box centre), or at the best of
    ``initial_points`` if those are given. A child replaces the parent only
    when strictly better.
    """
    config = config or OnePlusOneConfig()
    rng = np.random.default_rng(seed)
    run = OptimizerRun("one_plus_one", config=asdict(config), seed=seed)
    started = time.perf_counter()
    sigma = config.initial_std if config.initial_std is not None else float(np.mean(space.width)) / 4.0
    if sigma <= 0:
        raise ValueError("initial_std must be positive")

    starts = _seed_points(space, initial_points)
    if x0 is not None:
        starts = np.vstack([space.clip(np.reshape(x0, (1, -1))), starts])
    if not len(starts):
        starts = space.center[None, :]
    starts = starts[: config.max_evaluations]
    ys = evaluate_batch(objective, starts)
    run.record(starts, ys)
    run.log(0, ys, started)
    k = int(np.argmax(ys))
    parent, parent_y = starts[k].copy(), ys[k]
    run.step_sizes.append(sigma)

    it = 1
    while run.evaluations < config.max_evaluations:
        child = space.clip(parent + sigma * rng.standard_normal(space.dim))
        y = _safe(objective(child))
        run.record(child[None, :], [y])
        if y > parent_y:
            parent, parent_y = child, y
            sigma *= config.expand
        else:
            sigma = max(sigma * config.shrink, np.finfo(float).tiny)
        run.step_sizes.append(sigma)
        run.log(it, [y], started)
        it += 1
    return run


def se_kernel(a: np.ndarray, b: np.ndarray, signal_std: float, length_scale: float) -> np.ndarray:
    d2 = np.sum(a**2, 1)[:, None] + np.sum(b**2, 1)[None, :] - 2.0 * a @ b.T
    return signal_std**2 * np.exp(-np.maximum(d2, 0.0) / (2.0 * length_scale**2))


def _cholesky(K: np.ndarray, noise_var: float) -> np.ndarray:
    n = K.shape[0]
    jitter = noise_var
    while True:
        try:
            return np.linalg.cholesky(K + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            if jitter >= 1e-4:
                raise IllConditionedModelError(
                    f"Cholesky failed with jitter {jitter:g} on {n} points") from None
            jitter = max(jitter * 10.0, 1e-12)
            jitter = min(jitter, 1e-4)


def gp_posterior(X, y, x_query, signal_std: float = 1.0, length_scale: float = 1.0,
                 noise_std: float = 1e-4) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and stddev of a zero-mean SE-kernel GP on standardized ``y``.

    Outputs are mapped back to the original scale of ``y``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Q = np.atleast_2d(np.asarray(x_query, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    y_mean = y.mean()
    y_std = y.std()
    if not y_std > 0:
        y_std = 1.0
    z = (y - y_mean) / y_std

    L = _cholesky(se_kernel(X, X, signal_std, length_scale), noise_std**2)
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, z))
    Ks = se_kernel(X, Q, signal_std, length_scale)
    mu = Ks.T @ alpha
    v = np.linalg.solve(L, Ks)
    var = signal_std**2 - np.sum(v**2, axis=0)
    if np.any(var < -1e-9):
        raise IllConditionedModelError(f"posterior variance {var.min():g} is negative")
    sd = np.sqrt(np.maximum(var, 0.0))
    return mu * y_std + y_mean, sd * y_std


def expected_improvement(mu, sigma, best: float, xi: float = 0.01):
    """EI for maximization; the ``sigma == 0`` branch is ``max(0, mu - best - xi)``."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    gain = mu - best - xi
    safe = np.where(sigma > 0, sigma, 1.0)
    zz = gain / safe
    ei = np.where(sigma > 0, gain * norm.cdf(zz) + sigma * norm.pdf(zz), np.maximum(gain, 0.0))
    return ei if ei.ndim else float(ei)


def gpo_maximize(objective: Objective, space: SearchSpace, config: GpoConfig | None = None,
                 seed: int = 0, initial_points=None, workers: int = 1) -> OptimizerRun:
    """GP optimization: random initial design, then one argmax-EI point per iteration."""
    config = config or GpoConfig()
    n0 = config.n_initial(space.dim)
    if config.budget < n0:
        raise ValueError(f"budget {config.budget} is below the initial design size {n0}")
    rng = np.random.default_rng(seed)
    run = OptimizerRun("gpo", config=asdict(config), seed=seed)
    ell = config.scale(space)
    started = time.perf_counter()

    xs = space.uniform(rng, n0)
    injected = _seed_points(space, initial_points)[:n0]
    xs[: len(injected)] = injected
    ys = evaluate_batch(objective, xs, workers)
    run.record(xs, ys)
    run.log(0, ys, started)

    it = 1
    while run.evaluations < config.budget:
        X = np.array(run.points)
        Y = np.array(run.values)
        ok = np.isfinite(Y)
        cand = space.uniform(rng, config.candidates)
        if ok.sum() == 0:
            nxt = cand[0]
        else:
            y_ok = Y[ok]
            scale = y_ok.std() if y_ok.std() > 0 else 1.0
            try:
                mu, sd = gp_posterior(X[ok], y_ok, cand, config.signal_std, ell, config.noise_std)
            except IllConditionedModelError as exc:
                exc.run = run
                raise
            # EI in standardized units so xi is scale free
            ei = expected_improvement((mu - y_ok.mean()) / scale, sd / scale,
                                      (y_ok.max() - y_ok.mean()) / scale, config.xi)
            nxt = cand[int(np.argmax(ei))]
        y = _safe(objective(nxt))
        run.record(nxt[None, :], [y])
        run.log(it, [y], started)
        it += 1
    return run


OPTIMIZERS = {
    "cem": (cem_maximize, CemConfig),
    "one_plus_one": (one_plus_one_maximize, OnePlusOneConfig),
    "gpo": (gpo_maximize, GpoConfig),
}


def make_config(kind: str, **params):
    try:
        return OPTIMIZERS[kind][1](**params)
    except KeyError:
        raise ValueError(f"unknown optimizer {kind!r}; expected one of {sorted(OPTIMIZERS)}") from None


def maximize(kind: str, objective: Objective, space: SearchSpace, config=None, seed: int = 0,
             initial_points=None, workers: int = 1) -> OptimizerRun:
    fn, cfg_cls = OPTIMIZERS[kind]
    config = config or cfg_cls()
    if kind == "one_plus_one":
        return fn(objective, space, config, seed, initial_points=initial_points)
    return fn(objective, space, config, seed, initial_points=initial_points, workers=workers)
