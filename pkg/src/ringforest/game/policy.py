"""Episode-wise policy optimization from bandit feedback.

Each agent keeps a distribution over its next-hop choices.  An episode plays
tau rounds from the current distribution; afterwards an importance-weighted
gradient estimate feeds one linear-maximization step over a fixed candidate
set, and the result is mixed with a fixed exploration distribution so every
choice stays observable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from ..errors import ConditioningError, ConfigError, RangeError

Vector = tuple[float, ...]
Incidence = Sequence[tuple[int, ...]]

PIVOT_EPS = 1e-12
_SUM_TOL = 1e-9


# -- dense linear algebra (small matrices only) --------------------------------


def determinant(matrix: Sequence[Sequence[float]]) -> float:
    """Gaussian elimination with partial pivoting; singular gives 0.0."""
    n = len(matrix)
    a = [list(map(float, row)) for row in matrix]
    if any(len(row) != n for row in a):
        raise ConfigError("matrix must be square")
    det = 1.0
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(a[r][col]))
        if abs(a[pivot][col]) < PIVOT_EPS:
            return 0.0
        if pivot != col:
            a[col], a[pivot] = a[pivot], a[col]
            det = -det
        det *= a[col][col]
        inv = 1.0 / a[col][col]
        for r in range(col + 1, n):
            f = a[r][col] * inv
            if f:
                for c in range(col, n):
                    a[r][c] -= f * a[col][c]
    return det


def solve(matrix: Sequence[Sequence[float]], rhs: Sequence[float]) -> list[float]:
    """Solve A x = b; a vanishing pivot raises ConditioningError."""
    n = len(matrix)
    if len(rhs) != n:
        raise ConfigError("rhs length must match the matrix")
    a = [list(map(float, row)) + [float(b)] for row, b in zip(matrix, rhs)]
    if any(len(row) != n + 1 for row in a):
        raise ConfigError("matrix must be square")
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(a[r][col]))
        if abs(a[pivot][col]) < PIVOT_EPS:
            raise ConditioningError(f"pivot {a[pivot][col]!r} below {PIVOT_EPS}")
        if pivot != col:
            a[col], a[pivot] = a[pivot], a[col]
        inv = 1.0 / a[col][col]
        for r in range(col + 1, n):
            f = a[r][col] * inv
            if f:
                for c in range(col, n + 1):
                    a[r][c] -= f * a[col][c]
    x = [0.0] * n
    for row in range(n - 1, -1, -1):
        s = a[row][n] - sum(a[row][c] * x[c] for c in range(row + 1, n))
        x[row] = s / a[row][row]
    return x


# -- candidate sets -------------------------------------------------------------


def simplex_grid(k: int, g: int) -> list[Vector]:
    """All distributions over k choices with entries in multiples of 1/g."""
    if k < 1 or g < 1:
        raise RangeError("need k >= 1 and g >= 1")
    out = []
    for bars in itertools.combinations(range(g + k - 1), k - 1):
        counts = []
        prev = -1
        for b in bars:
            counts.append(b - prev - 1)
            prev = b
        counts.append(g + k - 2 - prev)
        out.append(tuple(c / g for c in counts))
    return out


def grid_size(k: int, g: int) -> int:
    return math.comb(g + k - 1, k - 1)


def apply_floor(policy: Sequence[float], floor: float) -> Vector:
    """Raise every entry to at least ``floor`` and renormalize."""
    if floor <= 0:
        return tuple(float(p) for p in policy)
    raised = [max(float(p), floor) for p in policy]
    total = sum(raised)
    return tuple(p / total for p in raised)


def candidate_set(
    k: int,
    grid: int = 10,
    floor: float = 1e-3,
    max_candidates: int = 500,
) -> list[Vector]:
    """Floored simplex grid plus the uniform distribution.

    The resolution shrinks automatically until the candidate count fits the
    cap; resolution 1 (the k one-hot corners) is kept even when k alone
    exceeds the cap."""
    g = max(1, grid)
    while g > 1 and grid_size(k, g) > max_candidates:
        g -= 1
    points = simplex_grid(k, g) + [tuple(1.0 / k for _ in range(k))]
    out: list[Vector] = []
    seen = set()
    for p in points:
        q = apply_floor(p, floor)
        key = tuple(round(x, 12) for x in q)
        if key not in seen:
            seen.add(key)
            out.append(q)
    return out


# -- design and gradient --------------------------------------------------------


def correlation_matrix(policy: Sequence[float], incidence: Optional[Incidence] = None) -> list[list[float]]:
    """Second-moment matrix of the observation vector under ``policy``.

    Without an incidence map each choice observes only itself and the matrix
    is diag(policy); with one, choice c activates the base arms in
    incidence[c] and contributes policy[c] on their outer product."""
    k = len(policy)
    if incidence is None:
        return [
            [float(policy[i]) if i == j else 0.0 for j in range(k)]
            for i in range(k)
        ]
    if len(incidence) != k:
        raise ConfigError("incidence length must match the policy")
    dim = max((arm for arms in incidence for arm in arms), default=-1) + 1
    m = [[0.0] * dim for _ in range(dim)]
    for weight, arms in zip(policy, incidence):
        for i in arms:
            for j in arms:
                m[i][j] += float(weight)
    return m


def exploration_policy(
    candidates: Sequence[Vector],
    incidence: Optional[Incidence] = None,
    design: str = "min_det",
) -> tuple[int, Vector]:
    """Pick the candidate whose design matrix determinant is smallest
    (or largest under ``max_det``), skipping singular designs."""
    if design not in ("min_det", "max_det"):
        raise ConfigError(f"unknown design {design!r}")
    best: Optional[tuple[float, int]] = None
    for idx, cand in enumerate(candidates):
        det = determinant(correlation_matrix(cand, incidence))
        if abs(det) < PIVOT_EPS:
            continue
        if best is None:
            best = (det, idx)
        elif design == "min_det" and det < best[0]:
            best = (det, idx)
        elif design == "max_det" and det > best[0]:
            best = (det, idx)
    if best is None:
        raise ConditioningError("no candidate yields an invertible design")
    return best[1], tuple(candidates[best[1]])


@dataclass(frozen=True)
class GameConfig:
    """Episode schedule: mixture weight alpha, step size beta, episode
    length tau, and the exploration design rule."""

    alpha: float = 0.85
    beta: float = 0.5
    tau: int = 16
    design: str = "min_det"
    floor: float = 1e-3

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError("beta must lie in (0, 1]")
        if self.tau < 1:
            raise ConfigError("tau must be at least 1")
        if self.design not in ("min_det", "max_det"):
            raise ConfigError(f"unknown design {self.design!r}")
        if self.floor < 0:
            raise ConfigError("floor must be non-negative")


def theory_schedule(n_agents: int, k_choices: int) -> GameConfig:
    """Schedule with the convergence guarantee: mixture 1 - 1/(NK),
    step 1/(N sqrt(K)), episodes of K*K rounds."""
    if n_agents < 1 or k_choices < 1:
        raise RangeError("need at least one agent and one choice")
    return GameConfig(
        alpha=1.0 - 1.0 / (n_agents * k_choices),
        beta=1.0 / (n_agents * math.sqrt(k_choices)),
        tau=k_choices * k_choices,
    )


@dataclass(frozen=True)
class EpisodeUpdate:
    policy_before: Vector
    gradient: Vector  # per choice (diagonal) or per base arm (incidence)
    scores: Vector  # linear objective per candidate
    chosen: Optional[int]  # winning candidate index; None for an empty episode
    policy: Vector
    plays: int


class PolicyEngine:
    """One agent's choice distribution plus its episode update rule.

    The start distribution defaults to uniform so every choice is observable
    from the first episode; the exploration mixture itself follows the
    configured determinant rule over the candidate set."""

    def __init__(
        self,
        candidates: Sequence[Sequence[float]],
        cfg: Optional[GameConfig] = None,
        incidence: Optional[Incidence] = None,
        start: Optional[Sequence[float]] = None,
    ):
        if not candidates:
            raise ConfigError("need at least one candidate")
        self.cfg = cfg or GameConfig()
        self.candidates = [tuple(float(x) for x in c) for c in candidates]
        self.k = len(self.candidates[0])
        for cand in self.candidates:
            if len(cand) != self.k:
                raise ConfigError("candidates must share one length")
            if any(x < 0 for x in cand) or abs(sum(cand) - 1.0) > _SUM_TOL:
                raise ConfigError(f"candidate {cand} is not a distribution")
        self.incidence = (
            [tuple(sorted(set(arms))) for arms in incidence] if incidence is not None else None
        )
        if self.incidence is not None:
            if len(self.incidence) != self.k:
                raise ConfigError("incidence length must match choice count")
            if any(not arms for arms in self.incidence):
                raise ConfigError("every choice must touch at least one arm")
        self.rho_index, self.rho = exploration_policy(
            self.candidates, self.incidence, self.cfg.design
        )
        if start is None:
            start = (1.0 / self.k,) * self.k
        self.policy: Vector = tuple(float(x) for x in start)
        if len(self.policy) != self.k or abs(sum(self.policy) - 1.0) > _SUM_TOL:
            raise ConfigError("start policy is not a distribution over the choices")
        self._plays: list[tuple[int, float]] = []
        self.episodes = 0

    def select(self, rng) -> int:
        """Sample one choice from the current distribution."""
        u = rng.random()
        acc = 0.0
        for idx, p in enumerate(self.policy):
            acc += p
            if u < acc:
                return idx
        return self.k - 1

    def record(self, choice: int, reward: float) -> None:
        if not 0 <= choice < self.k:
            raise RangeError(f"choice {choice} out of range")
        if not -1e-12 <= reward <= 1.0 + 1e-12:
            raise RangeError(f"reward {reward} outside [0, 1]")
        self._plays.append((choice, min(1.0, max(0.0, reward))))

    @property
    def pending_plays(self) -> int:
        return len(self._plays)

    def end_episode(self) -> EpisodeUpdate:
        """Gradient step from the episode's plays; empty episodes are a no-op."""
        before = self.policy
        plays = self._plays
        self._plays = []
        self.episodes += 1
        if not plays:
            return EpisodeUpdate(before, (0.0,) * self.k, (), None, before, 0)
        tau = self.cfg.tau
        if self.incidence is None:
            grad = [0.0] * self.k
            for choice, reward in plays:
                if before[choice] <= 0:
                    raise ConditioningError("played a zero-probability choice")
                grad[choice] += reward / before[choice]
            gradient = tuple(g / tau for g in grad)
            scores = tuple(
                sum(c * g for c, g in zip(cand, gradient)) for cand in self.candidates
            )
        else:
            dim = max(arm for arms in self.incidence for arm in arms) + 1
            y = [0.0] * dim
            for choice, reward in plays:
                for arm in self.incidence[choice]:
                    y[arm] += reward
            y = [v / tau for v in y]
            theta = solve(correlation_matrix(before, self.incidence), y)
            gradient = tuple(theta)
            scores = tuple(
                sum(
                    weight * sum(theta[arm] for arm in self.incidence[c])
                    for c, weight in enumerate(cand)
                )
                for cand in self.candidates
            )
        chosen = max(range(len(scores)), key=lambda i: (scores[i], -i))
        target = self.candidates[chosen]
        alpha, beta = self.cfg.alpha, self.cfg.beta
        policy = tuple(
            alpha * (p + beta * (t - p)) + (1.0 - alpha) * r
            for p, t, r in zip(before, target, self.rho)
        )
        self.policy = policy
        return EpisodeUpdate(before, gradient, scores, chosen, policy, len(plays))
