"""Deterministic generative models and the benchmark domains.

States are tuples of floats: immutable, hashable and cheap to build in the
inner loop of tree expansion. Every model is a frozen dataclass whose
``step`` is a pure function of ``(state, action)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar

import numpy as np

State = tuple


class ContractViolation(ValueError):
    """A call broke a model's input contract (bad dimension, bad action)."""


class UnsupportedDomainError(ValueError):
    """Raised when an operation needs a capability the domain lacks."""


@dataclass(frozen=True)
class GenerativeModel:
    """Base class for deterministic simulators with a discrete action set."""

    name: ClassVar[str] = "abstract"
    state_dimension: ClassVar[int] = 0
    action_count: ClassVar[int] = 1

    discount: float = 0.95

    @property
    def reward_upper_bound(self) -> float:
        raise NotImplementedError

    @property
    def state_normalizer(self) -> tuple:
        raise NotImplementedError

    @property
    def has_continuous_initial_region(self) -> bool:
        return True

    def check(self, state, action: int) -> None:
        if len(state) != self.state_dimension:
            raise ContractViolation(
                f"{self.name}: state has dimension {len(state)}, expected {self.state_dimension}"
            )
        if not (0 <= action < self.action_count) or int(action) != action:
            raise ContractViolation(
                f"{self.name}: action {action!r} outside [0, {self.action_count})"
            )

    def step(self, state, action: int) -> tuple[State, float]:
        """Return ``(next_state, reward)``; validates the inputs first."""
        self.check(state, action)
        return self._step(tuple(float(x) for x in state), int(action))

    def _step(self, state: State, action: int) -> tuple[State, float]:
        raise NotImplementedError

    def initial_states(self, count: int, seed: int) -> list[State]:
        if count < 1:
            raise ContractViolation(f"count must be >= 1, got {count}")
        return self._initial_states(count, np.random.default_rng(seed))

    def _initial_states(self, count: int, rng: np.random.Generator) -> list[State]:
        raise NotImplementedError


def _clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


@dataclass(frozen=True)
class DoubleIntegrator(GenerativeModel):
    """Point mass on a line, force u in {-1, 0, +1}, quadratic cost.

    Action index ``i`` applies force ``forces[i]``. The reward penalises the
    position reached after the move: ``r = -(p'^2 + 0.1 u^2)``.
    """

    name: ClassVar[str] = "double_integrator"
    state_dimension: ClassVar[int] = 2
    action_count: ClassVar[int] = 3
    forces: ClassVar[tuple] = (-1.0, 0.0, 1.0)

    discount: float = 0.95
    dt: float = 0.1
    bound: float = 10.0

    @property
    def reward_upper_bound(self) -> float:
        return 0.0

    @property
    def state_normalizer(self) -> tuple:
        return (self.bound, self.bound)

    def _step(self, state, action):
        p, v = state
        u = self.forces[action]
        b = self.bound
        p2 = _clamp(p + self.dt * v, -b, b)
        v2 = _clamp(v + self.dt * u, -b, b)
        return (p2, v2), -(p2 * p2 + 0.1 * u * u)

    def _initial_states(self, count, rng):
        pts = rng.uniform(-1.0, 1.0, size=(count, 2))
        return [(float(p), float(v)) for p, v in pts]


def wrap_angle(theta: float) -> float:
    """Map an angle into [-pi, pi)."""
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class PendulumSwingup(GenerativeModel):
    """Torque-limited pendulum; angle 0 is upright.

    Explicit Euler on ``theta_dd = (g/l) sin(theta) + u/(m l^2)``. The stored
    angle is wrapped to [-pi, pi) and the angular velocity clamped to
    ``[-max_speed, max_speed]``.
    """

    name: ClassVar[str] = "pendulum_swingup"
    state_dimension: ClassVar[int] = 2
    action_count: ClassVar[int] = 3
    torques: ClassVar[tuple] = (-2.0, 0.0, 2.0)

    discount: float = 0.95
    dt: float = 0.05
    gravity: float = 9.81
    mass: float = 1.0
    length: float = 1.0
    max_speed: float = 8.0

    @property
    def reward_upper_bound(self) -> float:
        return 0.0

    @property
    def state_normalizer(self) -> tuple:
        return (math.pi, self.max_speed)

    def _step(self, state, action):
        th, om = state
        u = self.torques[action]
        acc = (self.gravity / self.length) * math.sin(th) + u / (self.mass * self.length**2)
        th2 = wrap_angle(th + self.dt * om)
        om2 = _clamp(om + self.dt * acc, -self.max_speed, self.max_speed)
        return (th2, om2), -(th2 * th2 + 0.1 * om2 * om2 + 0.001 * u * u)

    def _initial_states(self, count, rng):
        return [(float(a), 0.0) for a in rng.uniform(-math.pi, math.pi, size=count)]


@dataclass(frozen=True)
class ChainWalk(GenerativeModel):
    """Finite chain of ``n_states`` cells; reward 1 on entering the last cell.

    Action 0 moves right and action 1 moves left, so that the lowest-index
    tie-break prefers the rewarding direction.
    """

    name: ClassVar[str] = "chain_walk"
    state_dimension: ClassVar[int] = 1
    action_count: ClassVar[int] = 2
    RIGHT: ClassVar[int] = 0
    LEFT: ClassVar[int] = 1

    discount: float = 0.9
    n_states: int = 5

    def __post_init__(self):
        if self.n_states < 2:
            raise ContractViolation("chain_walk needs at least 2 states")

    @property
    def reward_upper_bound(self) -> float:
        return 1.0

    @property
    def state_normalizer(self) -> tuple:
        return (float(self.n_states - 1),)

    @property
    def has_continuous_initial_region(self) -> bool:
        return False

    def check(self, state, action):
        super().check(state, action)
        s = state[0]
        if s != int(s) or not (0 <= s < self.n_states):
            raise ContractViolation(f"chain_walk: state {s!r} is not a cell index")

    def _step(self, state, action):
        i = int(state[0])
        j = min(i + 1, self.n_states - 1) if action == self.RIGHT else max(i - 1, 0)
        return (float(j),), 1.0 if j == self.n_states - 1 else 0.0

    def _initial_states(self, count, rng):
        return [(0.0,)] * count


DOMAINS: dict[str, Callable[..., GenerativeModel]] = {
    DoubleIntegrator.name: DoubleIntegrator,
    PendulumSwingup.name: PendulumSwingup,
    ChainWalk.name: ChainWalk,
}


def make_model(name: str, **params: Any) -> GenerativeModel:
    """Build a registered domain by key, with keyword overrides."""
    try:
        cls = DOMAINS[name]
    except KeyError:
        raise UnsupportedDomainError(
            f"unknown domain {name!r}; expected one of {sorted(DOMAINS)}"
        ) from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ContractViolation(f"{name}: {exc}") from None


def step(model: GenerativeModel, state, action: int) -> tuple[State, float]:
    return model.step(state, action)


def initial_states(model: GenerativeModel, count: int, seed: int) -> list[State]:
    return model.initial_states(count, seed)


@dataclass
class FiniteHorizonSolution:
    """Backward-induction result for a finite chain.

    ``values[k][s]`` is the optimal return with ``k`` steps remaining and
    ``actions[k][s]`` the optimal first action (``k >= 1``). Ties go to the
    lowest action index.
    """

    values: list = field(default_factory=list)
    actions: list = field(default_factory=list)

    def action(self, state: int, remaining: int) -> int:
        return int(self.actions[remaining][state])

    @property
    def policy(self) -> dict:
        return {
            (s, k): int(self.actions[k][s])
            for k in range(1, len(self.actions))
            for s in range(len(self.actions[k]))
        }


def value_iteration_oracle(model: GenerativeModel, horizon: int) -> FiniteHorizonSolution:
    """Exact finite-horizon optimal policy for ``chain_walk`` by backward induction."""
    if not isinstance(model, ChainWalk):
        raise UnsupportedDomainError(
            f"value_iteration_oracle needs a finite-state domain, got {model.name}"
        )
    if horizon < 0:
        raise ContractViolation("horizon must be >= 0")
    n, gamma = model.n_states, model.discount
    table = [[model.step((float(s),), a) for a in range(model.action_count)] for s in range(n)]
    values = [np.zeros(n)]
    actions = [np.full(n, -1, dtype=int)]
    for _ in range(horizon):
        prev = values[-1]
        q = np.array([[r + gamma * prev[int(nxt[0])] for nxt, r in row] for row in table])
        actions.append(np.argmax(q, axis=1))
        values.append(q.max(axis=1))
    return FiniteHorizonSolution(values=values, actions=actions)


def reachable_pairs(model: ChainWalk, horizon: int, start: int = 0) -> set:
    """All ``(state, remaining)`` pairs reachable from ``start`` under any action sequence."""
    pairs, frontier = set(), {start}
    for k in range(horizon, 0, -1):
        pairs |= {(s, k) for s in frontier}
        frontier = {int(model.step((float(s),), a)[0][0]) for s in frontier for a in range(model.action_count)}
    return pairs
