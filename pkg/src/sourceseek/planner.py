"""Hierarchical planner: local receding-horizon search and global frontier sequencing.

The local planner runs a beam-limited forward tree search over lattice moves
(4-connected plus wait), scoring each visited cell with UCB under the belief
conditioned on the cells the candidate policy has already committed to (at
their current posterior means), discounted per step and charged for travel
time. The global planner scores frontier visit orders with front-loaded
expected improvement under the remaining time budget: exhaustively for small
frontier sets, greedy construction plus 2-opt beyond. Policy selection
weighs each candidate's predicted value by its execution success probability.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import GaussianBelief, Location, Measurement, MissionClock, euclidean_distance
from .objectives import ObjectiveParams, expected_improvement, front_load, ucb
from .simulator import (
    Environment,
    Frontier,
    LocalIRM,
    extract_frontiers,
    extract_local_irm,
    move_robot,
    sample_measurement,
    travel_seconds,
)

# Move order is part of the planner contract: ties resolve to the
# lexicographically-first move sequence. Wait first, then N, S, W, E.
_MOVES = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True)
class Policy:
    """A committed waypoint sequence with its predicted value and duration."""

    kind: str  # "local" or "global"
    waypoints: tuple[Location, ...]
    predicted_reward: float
    predicted_duration: float


@dataclass(frozen=True)
class PlannerParams:
    """Search depths, caps, motion model, and policy-selection weights.

    local_horizon: lookahead depth of the local tree search, in steps.
    beam_width: partial-path cap per depth of the local search.
    robot_speed: m/s, used for all travel-time estimates.
    max_frontier_sequence: longest frontier visit order considered.
    exhaustive_frontier_limit: frontier count up to which the order search
        is exhaustive; beyond it a greedy + 2-opt search runs instead.
    p_hat_local / p_hat_global: execution success probabilities in [0, 1].
    travel_cost_weight: reward units charged per second of travel.
    surprise_sigma: replan when a measurement misses its prediction by more
        than this many predicted standard deviations.
    """

    local_horizon: int = 4
    beam_width: int = 16
    robot_speed: float = 1.0
    max_frontier_sequence: int = 6
    exhaustive_frontier_limit: int = 8
    p_hat_local: float = 0.95
    p_hat_global: float = 0.8
    travel_cost_weight: float = 0.01
    surprise_sigma: float = 2.0

    def __post_init__(self) -> None:
        if self.local_horizon < 1:
            raise ValueError(f"local_horizon must be >= 1, got {self.local_horizon}")
        if self.beam_width < 1:
            raise ValueError(f"beam_width must be >= 1, got {self.beam_width}")
        if self.robot_speed <= 0.0:
            raise ValueError(f"robot_speed must be positive, got {self.robot_speed}")
        if self.max_frontier_sequence < 1:
            raise ValueError(f"max_frontier_sequence must be >= 1, got {self.max_frontier_sequence}")
        for name in ("p_hat_local", "p_hat_global"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.travel_cost_weight < 0.0:
            raise ValueError(f"travel_cost_weight must be >= 0, got {self.travel_cost_weight}")
        if self.surprise_sigma <= 0.0:
            raise ValueError(f"surprise_sigma must be positive, got {self.surprise_sigma}")


def plan_local(
    model,
    irm: LocalIRM,
    robot: Location,
    params: PlannerParams,
    objectives: ObjectiveParams,
    remaining_seconds: float = math.inf,
) -> Policy:
    """Best lattice path of up to ``local_horizon`` steps under discounted UCB.

    Each step's cell is scored by UCB of the belief conditioned on the cells
    earlier in the candidate path (valued at their current posterior means),
    minus the travel-time cost, discounted by gamma per step. With
    ``beam_width`` at least the number of reachable partial paths the search
    is exhaustive.
    """
    robot_cell = irm.cell_of(robot)
    if not irm.contains(robot_cell):
        raise ValueError(f"robot cell {robot_cell} is not inside the local roadmap window")
    step_seconds = irm.pitch / params.robot_speed
    depth = min(params.local_horizon, int(remaining_seconds / step_seconds + 1e-9))
    if depth < 1:
        return Policy("local", (), 0.0, 0.0)

    step_cost = params.travel_cost_weight * step_seconds
    base_means: dict[tuple[int, int], float] = {}
    score_memo: dict[tuple, float] = {}

    def base_mean(cell: tuple[int, int]) -> float:
        mean = base_means.get(cell)
        if mean is None:
            mean = model.predict_local(irm.location_of(cell), ()).mean
            base_means[cell] = mean
        return mean

    def score(cell: tuple[int, int], hypo_key: tuple) -> float:
        key = (cell, hypo_key)
        value = score_memo.get(key)
        if value is None:
            hypo = [(irm.location_of(c), base_mean(c)) for c in hypo_key]
            value = ucb(model.predict_local(irm.location_of(cell), hypo), objectives.beta)
            score_memo[key] = value
        return value

    # Partial path: (cells tuple, cumulative value, sorted hypo cell key).
    beam: list[tuple[tuple, float, tuple]] = [((), 0.0, ())]
    for level in range(depth):
        discount = objectives.gamma**level
        expanded: list[tuple[tuple, float, tuple]] = []
        for cells, value, hypo_key in beam:
            at = cells[-1] if cells else robot_cell
            for dr, dc in _MOVES:
                nxt = (at[0] + dr, at[1] + dc)
                if nxt != at and not (irm.contains(nxt) and irm.is_traversable(nxt)):
                    continue
                gain = discount * (score(nxt, hypo_key) - step_cost)
                new_key = hypo_key if nxt in hypo_key else tuple(sorted(hypo_key + (nxt,)))
                expanded.append((cells + (nxt,), value + gain, new_key))
        if not expanded:
            break
        if len(expanded) > params.beam_width:
            expanded.sort(key=lambda p: -p[1])  # stable: order preserved among ties
            expanded = expanded[: params.beam_width]
        beam = expanded

    best_cells, best_value, _ = max(beam, key=lambda p: p[1])
    waypoints = tuple(irm.location_of(c) for c in best_cells)
    return Policy("local", waypoints, best_value, len(best_cells) * step_seconds)


def plan_global(
    model,
    frontiers: list[Frontier],
    clock: MissionClock,
    params: PlannerParams,
    objectives: ObjectiveParams,
) -> Policy:
    """Best frontier visit order under front-loaded expected improvement.

    Sequences are constrained to the remaining time budget; travel between
    frontiers is estimated as straight-line time (the global level ignores
    obstacles). Exhaustive search up to ``exhaustive_frontier_limit``
    frontiers, greedy + 2-opt beyond.
    """
    if not frontiers:
        return Policy("global", (), 0.0, 0.0)
    remaining = clock.remaining
    best_mu = model.best_observed_mean()
    eis = [
        expected_improvement(
            model.predict_global(f.location), best_mu, objectives.xi, objectives.standard_ei
        )
        for f in frontiers
    ]
    first_leg = [f.path_time_from_robot for f in frontiers]

    def leg(i: int, j: int) -> float:
        return euclidean_distance(frontiers[i].location, frontiers[j].location) / params.robot_speed

    def sequence_score(seq: tuple[int, ...]) -> tuple[float, float]:
        t = score = 0.0
        for pos, i in enumerate(seq):
            t += first_leg[i] if pos == 0 else leg(seq[pos - 1], i)
            score += front_load(t, objectives.lambda_front) * eis[i]
        return score, t

    if len(frontiers) <= params.exhaustive_frontier_limit:
        best_seq, best_score, best_time = (), 0.0, 0.0

        def dfs(seq: tuple[int, ...], used: set[int], t: float, score: float) -> None:
            nonlocal best_seq, best_score, best_time
            if score > best_score:
                best_seq, best_score, best_time = seq, score, t
            if len(seq) >= params.max_frontier_sequence:
                return
            for i in range(len(frontiers)):
                if i in used:
                    continue
                t_next = t + (first_leg[i] if not seq else leg(seq[-1], i))
                if t_next > remaining + 1e-9:
                    continue
                dfs(seq + (i,), used | {i}, t_next, score + front_load(t_next, objectives.lambda_front) * eis[i])

        dfs((), set(), 0.0, 0.0)
    else:
        seq: list[int] = []
        t = score = 0.0
        while len(seq) < params.max_frontier_sequence:
            best_i, best_gain, best_t = None, 0.0, t
            for i in range(len(frontiers)):
                if i in seq:
                    continue
                t_next = t + (first_leg[i] if not seq else leg(seq[-1], i))
                if t_next > remaining + 1e-9:
                    continue
                gain = front_load(t_next, objectives.lambda_front) * eis[i]
                if best_i is None or gain > best_gain:
                    best_i, best_gain, best_t = i, gain, t_next
            if best_i is None:
                break
            seq.append(best_i)
            t, score = best_t, score + best_gain
        improved = True
        while improved:
            improved = False
            for a in range(len(seq) - 1):
                for b in range(a + 1, len(seq)):
                    cand = seq[:a] + seq[a : b + 1][::-1] + seq[b + 1 :]
                    cand_score, cand_t = sequence_score(tuple(cand))
                    if cand_t <= remaining + 1e-9 and cand_score > score + 1e-12:
                        seq, score, t = cand, cand_score, cand_t
                        improved = True
        best_seq, best_score, best_time = tuple(seq), score, t

    waypoints = tuple(frontiers[i].location for i in best_seq)
    return Policy("global", waypoints, best_score, best_time)


def select_policy(local: Policy, global_: Policy, params: PlannerParams) -> Policy:
    """Pick the policy maximizing success probability times predicted value.

    Ties go to the local policy, which is cheaper to execute.
    """
    if params.p_hat_global * global_.predicted_reward > params.p_hat_local * local.predicted_reward:
        return global_
    return local


# -- mission execution --------------------------------------------------------


@dataclass
class MissionState:
    """Everything the receding-horizon execution loop carries between steps."""

    env: Environment
    model: object
    clock: MissionClock
    planner_params: PlannerParams
    objective_params: ObjectiveParams
    rng: np.random.Generator
    window_rows: int = 21
    window_cols: int = 21
    scale_lo: float = 0.0
    scale_hi: float = 1.0
    time_index: int = 0
    queue: deque = field(default_factory=deque)
    active_kind: str = ""
    irm: Optional[LocalIRM] = None
    needs_replan: bool = True

    def scale(self, value_db: float) -> float:
        span = self.scale_hi - self.scale_lo
        return (value_db - self.scale_lo) / span if span > 0 else value_db


@dataclass(frozen=True)
class StepResult:
    """Outcome of executing one waypoint."""

    waypoint: Location
    measurement: Measurement
    scaled_value: float
    elapsed_seconds: float
    replanned: bool
    policy_kind: str
    predicted: GaussianBelief
    surprised: bool


def take_initial_measurement(state: MissionState) -> Measurement:
    """Sample and fuse the reading at the start pose before any motion."""
    m = sample_measurement(state.env, state.env.robot, state.rng, state.time_index)
    state.time_index += 1
    state.model.add(Measurement(m.location, state.scale(m.value), m.time_index))
    return m


def replan_step(state: MissionState) -> Optional[StepResult]:
    """Execute one waypoint of the current policy, replanning when needed.

    Replans on policy exhaustion, when a fresh local window is due, or after
    a surprise measurement. Returns None once the time budget cannot cover
    another step.
    """
    pp = state.planner_params
    if state.clock.remaining <= 1e-9:
        return None

    replanned = False
    if state.needs_replan or not state.queue:
        replanned = True
        if state.irm is None or _window_stale(state):
            state.irm = extract_local_irm(state.env, state.env.robot, state.window_rows, state.window_cols)
            state.model.new_local_irm(state.irm, state.env.robot)
        local = plan_local(
            state.model, state.irm, state.env.robot, pp, state.objective_params,
            remaining_seconds=state.clock.remaining,
        )
        view = extract_frontiers(state.env)
        global_ = plan_global(state.model, view.frontiers, state.clock, pp, state.objective_params)
        chosen = select_policy(local, global_, pp)
        state.queue = deque(chosen.waypoints)
        state.active_kind = chosen.kind
        state.needs_replan = False
        if not state.queue:
            return None

    waypoint = state.queue.popleft()
    travel = travel_seconds(state.env, state.env.robot, waypoint)
    if travel is None:
        state.queue.clear()
        state.needs_replan = True
        raise ValueError(f"policy emitted unreachable waypoint ({waypoint.x}, {waypoint.y})")
    # A wait still consumes one step of dwell time; zero-cost steps would
    # otherwise stall the budget clock forever.
    step_seconds = state.env.pitch / pp.robot_speed
    elapsed = max(travel, step_seconds)
    if state.clock.t + elapsed > state.clock.budget_T + 1e-9:
        return None

    predicted = state.model.predict(waypoint)
    move_robot(state.env, state.env.robot, waypoint)
    state.clock.advance(elapsed)
    m = sample_measurement(state.env, waypoint, state.rng, state.time_index)
    state.time_index += 1
    scaled = state.scale(m.value)
    state.model.add(Measurement(m.location, scaled, m.time_index))

    surprised = abs(scaled - predicted.mean) > pp.surprise_sigma * predicted.std
    if surprised or not state.queue or _window_stale(state):
        state.needs_replan = True
    return StepResult(waypoint, m, scaled, elapsed, replanned, state.active_kind, predicted, surprised)


def _window_stale(state: MissionState) -> bool:
    """True when the robot has drifted far enough to warrant a new local window."""
    if state.irm is None:
        return True
    r, c = state.env.cell_of(state.env.robot)
    cr, cc = state.irm.robot_cell
    radius = max(1, min(state.window_rows, state.window_cols) // 4)
    return max(abs(r - cr), abs(c - cc)) > radius
