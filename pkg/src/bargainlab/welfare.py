"""Welfare functions, feasible payoff sets, optima, and normalized scoring.

Five welfare kinds are supported, each scoring a payoff profile v = (V1, V2)
relative to a disagreement point d = (d1, d2):

* ``utilitarian``       V1 + V2
* ``egalitarian``       min(V1 - d1, V2 - d2), maximized over the Pareto front
* ``nash``              (V1 - d1) * (V2 - d2)
* ``kalai_smorodinsky`` negated absolute deviation of the gain ratio
                        (V1 - d1) / (V2 - d2) from the utopia-point ratio,
                        maximized over the Pareto front (negated so that every
                        kind is maximized; the best attainable value is 0)
* ``inequity_averse``   V1 + V2 - beta * (1 - gamma) / (1 - gamma * lam) * |V1 - V2|,
                        the stationary-stream form of the smoothed inequity
                        penalty: a constant reward stream (r1, r2) has smoothed
                        cumulative rewards saturating at r_i / (1 - gamma*lam),
                        and its per-step mean gap equals that of the profile's
                        per-step rewards (1 - gamma) * V_i.

The feasible set is the convex hull of the stationary pure joint-action value
profiles, which admits correlated or alternating play; optima may therefore
sit in the interior of a Pareto-front edge and are located in closed form
segment by segment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .games.base import Trajectory
from .games.matrix import MatrixGame
from .validation import check_gamma

UTILITARIAN = "utilitarian"
EGALITARIAN = "egalitarian"
NASH = "nash"
KALAI_SMORODINSKY = "kalai_smorodinsky"
INEQUITY_AVERSE = "inequity_averse"

WELFARE_KINDS = (UTILITARIAN, EGALITARIAN, NASH, KALAI_SMORODINSKY, INEQUITY_AVERSE)

SHORT_LABELS = {
    UTILITARIAN: "util",
    EGALITARIAN: "egal",
    NASH: "nash",
    KALAI_SMORODINSKY: "ks",
    INEQUITY_AVERSE: "ia",
}
_KIND_FROM_LABEL = {v: k for k, v in SHORT_LABELS.items()}
_KIND_FROM_LABEL.update({k: k for k in WELFARE_KINDS})

_TIE_TOL = 1e-9


class DegenerateBargainingProblem(ValueError):
    """No feasible point strictly dominates the disagreement point."""


@dataclass(frozen=True)
class WelfareSpec:
    """One welfare function with its parameters.

    ``beta`` (inequality penalty, >= 0) and ``lam`` (smoothing, in [0, 1])
    only matter for the inequity-averse kind.
    """

    kind: str
    d: tuple[float, float] = (0.0, 0.0)
    beta: float = 1.0
    lam: float = 0.96

    def __post_init__(self):
        if self.kind not in WELFARE_KINDS:
            raise ValueError(f"unknown welfare kind {self.kind!r}; known: {WELFARE_KINDS}")
        if not np.all(np.isfinite(self.d)):
            raise ValueError(f"disagreement point must be finite, got {self.d}")
        if self.kind == INEQUITY_AVERSE:
            if self.beta < 0:
                raise ValueError(f"beta must be >= 0, got {self.beta}")
            if not (0.0 <= self.lam <= 1.0):
                raise ValueError(f"lam must lie in [0, 1], got {self.lam}")

    @property
    def label(self) -> str:
        return SHORT_LABELS[self.kind]

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "d": [float(self.d[0]), float(self.d[1])]}
        if self.kind == INEQUITY_AVERSE:
            out["beta"] = float(self.beta)
            out["lam"] = float(self.lam)
        return out

    @staticmethod
    def from_dict(data: dict) -> "WelfareSpec":
        kind = _KIND_FROM_LABEL.get(str(data["kind"]).lower())
        if kind is None:
            raise ValueError(f"unknown welfare kind {data['kind']!r}")
        d = tuple(float(x) for x in data.get("d", (0.0, 0.0)))
        return WelfareSpec(kind=kind, d=d,
                           beta=float(data.get("beta", 1.0)),
                           lam=float(data.get("lam", 0.96)))


@dataclass(frozen=True)
class ScoredProfile:
    values: tuple[float, float]
    normalized_score: float
    best_welfare: WelfareSpec


def _convex_hull(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Counter-clockwise hull via the monotone chain, collinear points dropped."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


@dataclass
class FeasibleSet:
    """Attainable payoff profiles: the convex hull of the given vertices."""

    vertices: list[tuple[float, float]]
    gamma: Optional[float] = None

    def __post_init__(self):
        if not self.vertices:
            raise ValueError("feasible set needs at least one vertex")
        self.vertices = [(float(a), float(b)) for a, b in self.vertices]

    def hull(self) -> list[tuple[float, float]]:
        return _convex_hull(self.vertices)

    def sup(self) -> tuple[float, float]:
        arr = np.asarray(self.vertices)
        return float(arr[:, 0].max()), float(arr[:, 1].max())

    def swap_players(self) -> "FeasibleSet":
        return FeasibleSet([(b, a) for (a, b) in self.vertices], self.gamma)


def feasible_set(game: MatrixGame, gamma: Optional[float] = None) -> FeasibleSet:
    """Stationary value profiles of all pure joint actions, scaled by 1/(1-gamma)."""
    g = game.gamma if gamma is None else check_gamma(gamma)
    # Written as r / (1 - g) so that stationary-play values computed elsewhere
    # with the same expression are bit-identical to these vertices.
    vertices = [
        (float(game.payoffs[a1, a2, 0]) / (1.0 - g), float(game.payoffs[a1, a2, 1]) / (1.0 - g))
        for a1 in range(game.n_actions)
        for a2 in range(game.n_actions)
    ]
    return FeasibleSet(vertices, g)


def pareto_front(fs: FeasibleSet) -> list[tuple[float, float]]:
    """Maximal points of the hull under the componentwise order, V1 descending.

    Returns the vertices of the north-east boundary chain; the full front is
    the polyline through them.
    """
    hull = fs.hull()
    if len(hull) == 1:
        return hull
    if len(hull) == 2:
        a, b = hull
        if a[0] >= b[0] and a[1] >= b[1]:
            return [a]
        if b[0] >= a[0] and b[1] >= a[1]:
            return [b]
        return sorted(hull, key=lambda p: (-p[0], -p[1]))
    i_right = max(range(len(hull)), key=lambda i: (hull[i][0], hull[i][1]))
    i_top = max(range(len(hull)), key=lambda i: (hull[i][1], hull[i][0]))
    front = [hull[i_right]]
    i = i_right
    while i != i_top:
        i = (i + 1) % len(hull)
        front.append(hull[i])
    return front


def _ia_coefficient(spec: WelfareSpec, fs: Optional[FeasibleSet]) -> float:
    if fs is None or fs.gamma is None:
        raise ValueError("inequity-averse evaluation needs a feasible set with gamma")
    g = fs.gamma
    return spec.beta * (1.0 - g) / (1.0 - g * spec.lam)


def evaluate_welfare(spec: WelfareSpec, v: Sequence[float],
                     fs: Optional[FeasibleSet] = None) -> float:
    """Score one payoff profile under the given welfare function.

    Pareto-optimality constraints are enforced by `welfare_optimum`, not here.
    """
    v1, v2 = float(v[0]), float(v[1])
    if not (np.isfinite(v1) and np.isfinite(v2)):
        raise ValueError(f"payoff profile must be finite, got {(v1, v2)}")
    d1, d2 = spec.d
    if spec.kind == UTILITARIAN:
        return v1 + v2
    if spec.kind == EGALITARIAN:
        return min(v1 - d1, v2 - d2)
    if spec.kind == NASH:
        if v1 < d1 and v2 < d2:
            raise ValueError(
                f"nash welfare undefined below the disagreement point: v={(v1, v2)}, d={spec.d}")
        return (v1 - d1) * (v2 - d2)
    if spec.kind == KALAI_SMORODINSKY:
        if fs is None:
            raise ValueError("kalai_smorodinsky evaluation needs the feasible set")
        if v1 < d1 and v2 < d2:
            raise ValueError(
                f"kalai_smorodinsky welfare undefined below the disagreement point: "
                f"v={(v1, v2)}, d={spec.d}")
        if v2 == d2:
            raise ValueError("kalai_smorodinsky ratio undefined at V2 == d2")
        s1, s2 = fs.sup()
        if s2 == d2:
            raise DegenerateBargainingProblem("utopia gain for player 2 is zero")
        target = (s1 - d1) / (s2 - d2)
        return -abs((v1 - d1) / (v2 - d2) - target)
    # inequity averse
    c = _ia_coefficient(spec, fs)
    return (v1 + v2) - c * abs(v1 - v2)


def ia_welfare(trajectory: Trajectory, beta: float, lam: float, gamma: float) -> float:
    """Inequity-averse welfare of a recorded trajectory.

    Discounted values of both players minus ``beta`` times the per-step mean
    absolute gap between the players' smoothed cumulative rewards
    e_i[t] = gamma * lam * e_i[t-1] + r_i[t], starting from e_i[0] = 0.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"lam must lie in [0, 1], got {lam}")
    gamma = check_gamma(gamma)
    if len(trajectory) == 0:
        raise ValueError("trajectory must be non-empty")
    rewards = trajectory.rewards()
    T = len(rewards)
    disc = gamma ** np.arange(T)
    v1, v2 = disc @ rewards
    e1 = e2 = 0.0
    gap_sum = 0.0
    for r1, r2 in rewards:
        e1 = gamma * lam * e1 + r1
        e2 = gamma * lam * e2 + r2
        gap_sum += abs(e1 - e2)
    return float(v1 + v2 - beta * gap_sum / T)


# ---------------------------------------------------------------------------
# Optima over the feasible set.

def _segment_candidates(spec: WelfareSpec, p0, p1, fs: FeasibleSet) -> list[float]:
    """Parameter values t in [0, 1] where the welfare max on the segment can sit."""
    x0, y0 = p0
    x1, y1 = p1
    dx, dy = x1 - x0, y1 - y0
    d1, d2 = spec.d
    ts = [0.0, 1.0]

    def clip(t):
        if np.isfinite(t) and 0.0 < t < 1.0:
            ts.append(float(t))

    if spec.kind == EGALITARIAN:
        if dx != dy:
            clip(((y0 - d2) - (x0 - d1)) / (dx - dy))
    elif spec.kind == NASH:
        a, b = x0 - d1, y0 - d2
        if dx * dy != 0.0:
            clip(-(dx * b + dy * a) / (2.0 * dx * dy))
    elif spec.kind == KALAI_SMORODINSKY:
        s1, s2 = fs.sup()
        g1, g2 = s1 - d1, s2 - d2
        a, b = x0 - d1, y0 - d2
        denom = dx * g2 - dy * g1
        if denom != 0.0:
            clip((b * g1 - a * g2) / denom)
    elif spec.kind == INEQUITY_AVERSE:
        if dx != dy:
            clip((y0 - x0) / (dx - dy))
    return ts


def _lexicographic_better(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """True when profile `a` wins the (V1, then V2) tie-break against `b`."""
    if a[0] != b[0]:
        return a[0] > b[0]
    return a[1] > b[1]


def welfare_optimum(spec: WelfareSpec, fs: FeasibleSet) -> tuple[tuple[float, float], float]:
    """Argmax of the welfare over the feasible hull.

    The search walks the Pareto front segment by segment with closed-form
    interior candidates. This is exact for all five kinds: each is weakly
    increasing toward the north-east (within its domain), so the hull max
    lies on the front, and the egalitarian / Kalai-Smorodinsky Pareto
    constraints are satisfied by construction. Ties break toward larger V1,
    then larger V2.
    """
    front = pareto_front(fs)
    d1, d2 = spec.d
    if spec.kind in (NASH, KALAI_SMORODINSKY):
        egal = WelfareSpec(EGALITARIAN, d=spec.d)
        _, best_gain = _search_front(egal, front, fs)
        if best_gain <= 0.0:
            raise DegenerateBargainingProblem(
                f"no feasible point strictly dominates d={spec.d}")
    return _search_front(spec, front, fs)


def _search_front(spec: WelfareSpec, front, fs: FeasibleSet):
    best_point = None
    best_value = -np.inf
    segments = ([(front[0], front[0])] if len(front) == 1
                else list(zip(front[:-1], front[1:])))
    for p0, p1 in segments:
        for t in _segment_candidates(spec, p0, p1, fs):
            point = (p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1]))
            try:
                value = evaluate_welfare(spec, point, fs)
            except ValueError:
                continue
            if best_point is None or value > best_value + _TIE_TOL:
                best_point, best_value = point, value
            elif value >= best_value - _TIE_TOL and _lexicographic_better(point, best_point):
                best_point, best_value = point, max(best_value, value)
    if best_point is None:
        raise ValueError(f"no admissible point on the Pareto front for {spec.kind}")
    return best_point, float(best_value)


def normalized_score(v: Sequence[float], welfare_set: Sequence[WelfareSpec],
                     disagreement_profile: Sequence[float],
                     fs: FeasibleSet) -> ScoredProfile:
    """Best welfare gain over disagreement, normalized by the max attainable gain.

    Each member of the welfare set contributes
    (w(v) - w(d)) / (max w - w(d)); the score is the largest contribution.
    The disagreement profile scores exactly 0 and any member's optimum
    scores exactly 1.
    """
    if not welfare_set:
        raise ValueError("welfare set must be non-empty")
    d_prof = (float(disagreement_profile[0]), float(disagreement_profile[1]))
    best_score = -np.inf
    best_spec = None
    errors = []
    for spec in welfare_set:
        try:
            _, w_max = welfare_optimum(spec, fs)
            w_d = evaluate_welfare(spec, d_prof, fs)
            denom = w_max - w_d
            if denom <= _TIE_TOL:
                raise DegenerateBargainingProblem(
                    f"max of {spec.kind} does not exceed its disagreement value")
            w_v = evaluate_welfare(spec, v, fs)
        except DegenerateBargainingProblem:
            raise
        except ValueError as exc:
            errors.append(exc)
            continue
        score = (w_v - w_d) / denom
        if score > best_score:
            best_score, best_spec = score, spec
    if best_spec is None:
        raise ValueError(f"no welfare in the set could score {v}: {errors}")
    return ScoredProfile(values=(float(v[0]), float(v[1])),
                         normalized_score=float(best_score),
                         best_welfare=best_spec)


def classify_convention(v: Sequence[float], optima: dict[str, tuple[float, float]],
                        tolerance: float = 0.15) -> str:
    """Label a payoff profile by the nearest welfare optimum, if close enough.

    ``tolerance`` is relative to the norm of the nearest optimum. Profiles
    matching nothing return "unclassified"; this buckets learner runs by the
    convention they implicitly adopted.
    """
    if not optima:
        raise ValueError("need at least one optimum to classify against")
    point = np.asarray([v[0], v[1]], dtype=float)
    best_label, best_dist, best_norm = None, np.inf, 0.0
    for label, opt in optima.items():
        opt_arr = np.asarray(opt, dtype=float)
        dist = float(np.linalg.norm(point - opt_arr))
        if dist < best_dist:
            best_label, best_dist, best_norm = label, dist, float(np.linalg.norm(opt_arr))
    if best_dist <= tolerance * best_norm:
        return best_label
    return "unclassified"
