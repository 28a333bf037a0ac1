"""Two-level factor-graph belief over a spatial signal field.

The global graph is a chain of measurement nodes: a new node is created only
once the sensor has moved more than ``d_min`` from the previous node, and
consecutive nodes are tied by zero-mean link factors whose variance grows
with the distance traveled. The local graph is a lattice built from the
current local roadmap window; lattice links additionally absorb occupancy
uncertainty, and the nearest global nodes feed their posteriors into the
lattice as priors.

Inference conditions the local lattice on hypothetical (location, value)
pairs and caches the solved lattice per hypothetical set, so repeated
planner queries against the same plan prefix are a dictionary lookup. The
cache empties whenever a new local graph is created or a real measurement
arrives.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .core import GaussianBelief, Location, Measurement, euclidean_distance
from .factor_graph import FactorGraph, GraphSolution, LinkFactor, UnaryFactor, UnderconstrainedGraphError

if TYPE_CHECKING:
    from .simulator import LocalIRM

# Ordered (location, value) pairs of planned-but-not-taken measurements.
Hypotheticals = Sequence[tuple[Location, float]]


class QueryOutsideLocalAreaError(ValueError):
    """The query lies outside the local lattice; use infer_global instead."""


@dataclass(frozen=True)
class SignalParams:
    """Variance model and node-spacing parameters of the signal belief.

    d_min: minimum travel before a new global node is created, meters.
    epsilon: variance floor of the distance link model.
    alpha_dist: link variance per meter of separation.
    alpha_occ: link variance per unit occupancy probability.
    sigma2_meas: variance of a single real measurement.
    k_g: number of nearest global nodes attached to a new local graph.
    """

    d_min: float = 0.25
    epsilon: float = 1e-4
    alpha_dist: float = 0.1
    alpha_occ: float = 0.5
    sigma2_meas: float = 0.01
    k_g: int = 100

    def __post_init__(self) -> None:
        for name in ("d_min", "epsilon", "alpha_dist", "alpha_occ", "sigma2_meas"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be positive and finite, got {value}")
        if self.k_g < 1:
            raise ValueError(f"k_g must be >= 1, got {self.k_g}")

    def sigma2_dist(self, a: Location, b: Location) -> float:
        return self.epsilon + self.alpha_dist * euclidean_distance(a, b)

    def sigma2_occ(self, p_occ: float) -> float:
        return self.alpha_occ * p_occ


@dataclass
class GlobalNode:
    """One chain node: its graph value, its location, and how many readings it fused."""

    value: int
    location: Location
    measurement_count: int


class LocalGraph:
    """Lattice factor graph over one local roadmap window."""

    def __init__(
        self,
        graph: FactorGraph,
        locations: list[Location],
        occupancies: list[float],
        pitch: float,
    ) -> None:
        self.graph = graph
        self.locations = locations
        self.occupancies = occupancies
        self.pitch = pitch
        self._xy = np.asarray([(p.x, p.y) for p in locations])
        # Prior (unconditioned) solution; None when nothing anchors the lattice.
        self.base_solution: Optional[GraphSolution] = None

    def __len__(self) -> int:
        return len(self.locations)

    def closest_value(self, loc: Location) -> int:
        """Nearest lattice value; equidistant candidates resolve to the lowest id."""
        d2 = (self._xy[:, 0] - loc.x) ** 2 + (self._xy[:, 1] - loc.y) ** 2
        return int(np.argmin(d2))  # argmin returns the first (lowest-id) minimum

    def contains(self, loc: Location) -> bool:
        half = self.pitch / 2.0
        return bool(
            self._xy[:, 0].min() - half <= loc.x <= self._xy[:, 0].max() + half
            and self._xy[:, 1].min() - half <= loc.y <= self._xy[:, 1].max() + half
        )


class SignalBelief:
    def __init__(self, params: SignalParams) -> None:
        self.params = params
        self.graph = FactorGraph()
        self.nodes: list[GlobalNode] = []
        self._global_means: Optional[GraphSolution] = None
        self.local: Optional[LocalGraph] = None
        self._cache: dict[tuple, GraphSolution] = {}
        self._hits = 0
        self._misses = 0

    # -- global chain -----------------------------------------------------

    def add_measurement(self, m: Measurement) -> None:
        """Fuse one real measurement into the global chain.

        Creates a new node (link + unary) when the sensor moved more than
        d_min from the last node, otherwise stacks another unary on the last
        node. Always re-solves the chain and empties the inference cache.
        """
        p = self.params
        if not self.nodes:
            vid = self.graph.add_value()
            self.graph.add_unary(UnaryFactor(vid, m.value, p.sigma2_meas))
            self.nodes.append(GlobalNode(vid, m.location, 1))
        else:
            last = self.nodes[-1]
            if euclidean_distance(last.location, m.location) > p.d_min:
                vid = self.graph.add_value()
                self.graph.add_link(
                    LinkFactor(vid, last.value, p.sigma2_dist(m.location, last.location))
                )
                self.graph.add_unary(UnaryFactor(vid, m.value, p.sigma2_meas))
                self.nodes.append(GlobalNode(vid, m.location, 1))
            else:
                self.graph.add_unary(UnaryFactor(last.value, m.value, p.sigma2_meas))
                last.measurement_count += 1
        self._global_means = self.graph.solve(variance_for=())
        self._clear_cache()

    def node_means(self) -> np.ndarray:
        """Posterior mean of every global node, in node order."""
        if self._global_means is None:
            return np.zeros(0)
        means = self._global_means.means()
        return np.asarray([means[n.value] for n in self.nodes])

    # -- local lattice ------------------------------------------------------

    def create_local_graph(self, irm: "LocalIRM", robot: Location) -> LocalGraph:
        """Build the lattice graph for a new local roadmap window.

        One value per lattice cell, link factors between 4-adjacent cells
        (variance grows with distance and with both endpoints' occupancy),
        and one prior per k_g-nearest global node attached to the lattice
        value closest to that node. Replaces the current local graph and
        empties the cache.
        """
        cells = list(irm.cells())
        if not cells:
            raise ValueError("local roadmap window is empty")
        p = self.params
        graph = FactorGraph()
        index: dict[tuple[int, int], int] = {}
        locations: list[Location] = []
        occupancies: list[float] = []
        for cell in cells:
            index[cell] = graph.add_value()
            locations.append(irm.location_of(cell))
            occupancies.append(irm.p_occ_at(cell))
        for cell in cells:
            i = index[cell]
            for nbr in irm.lattice_neighbors(cell):
                j = index[nbr]
                if j <= i:
                    continue  # each adjacent pair gets exactly one link
                variance = (
                    p.sigma2_dist(locations[i], locations[j])
                    + p.sigma2_occ(occupancies[i])
                    + p.sigma2_occ(occupancies[j])
                )
                graph.add_link(LinkFactor(i, j, variance))

        local = LocalGraph(graph, locations, occupancies, irm.pitch)
        if self.nodes:
            attach = self._nearest_nodes(robot, p.k_g)
            stats = self.graph.solve(variance_for=[n.value for n in attach])
            for node in attach:
                target = local.closest_value(node.location)
                variance = stats.variance(node.value) + p.sigma2_dist(
                    locations[target], node.location
                )
                graph.add_unary(UnaryFactor(target, stats.mean(node.value), variance))
            local.base_solution = graph.solve()
        self.local = local
        self._clear_cache()
        return local

    def infer(self, query: Location, hypo: Hypotheticals = ()) -> GaussianBelief:
        """Belief at ``query`` on the local lattice, conditioned on ``hypo``.

        The solved lattice is cached per canonical hypothetical set, so the
        set's order does not matter and repeats are a dictionary lookup.
        Each hypothetical factor uses the queried value's prior variance
        from the unconditioned lattice solution.
        """
        local = self.local
        if local is None:
            raise ValueError("no local graph; call create_local_graph first")
        if not local.contains(query):
            raise QueryOutsideLocalAreaError(
                f"query ({query.x}, {query.y}) is outside the local lattice; use infer_global"
            )
        key = self._cache_key(hypo)
        cached = self._cache.get(key)
        if cached is not None:
            self._hits += 1
            return cached.belief(local.closest_value(query))
        self._misses += 1
        if local.base_solution is None:
            raise UnderconstrainedGraphError(
                "local lattice has no anchoring factors (global graph was empty)"
            )
        graph = local.graph.copy()
        for loc, value in hypo:
            target = local.closest_value(loc)
            prior_var = local.base_solution.variance(target)
            graph.add_unary(UnaryFactor(target, value, prior_var))
        solution = graph.solve()
        self._cache[key] = solution
        return solution.belief(local.closest_value(query))

    def infer_global(self, query: Location) -> GaussianBelief:
        """Belief at an off-lattice location via a temporary chain extension.

        A throwaway value is linked to the nearest global node with a
        distance-based factor and the extended chain is solved; nothing is
        persisted.
        """
        if not self.nodes:
            raise ValueError("global graph is empty")
        nearest = self._nearest_nodes(query, 1)[0]
        graph = self.graph.copy()
        temp = graph.add_value()
        graph.add_link(LinkFactor(temp, nearest.value, self.params.sigma2_dist(query, nearest.location)))
        return graph.solve(variance_for=(temp,)).belief(temp)

    # -- cache --------------------------------------------------------------

    def cache_stats(self) -> tuple[int, int]:
        return self._hits, self._misses

    def _clear_cache(self) -> None:
        self._cache.clear()
        self._hits = 0
        self._misses = 0

    @staticmethod
    def _cache_key(hypo: Hypotheticals) -> tuple:
        return tuple(sorted((loc.x, loc.y, value) for loc, value in hypo))

    # -- export ---------------------------------------------------------------

    def export_snapshot(self, path: str) -> None:
        """CSV of global node and local lattice beliefs, for plotting."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind", "x", "y", "mean", "variance", "p_occ"])
            if self.nodes:
                stats = self.graph.solve(variance_for=[n.value for n in self.nodes])
                for node in self.nodes:
                    writer.writerow(
                        [
                            "global",
                            repr(node.location.x),
                            repr(node.location.y),
                            repr(stats.mean(node.value)),
                            repr(stats.variance(node.value)),
                            "",
                        ]
                    )
            local = self.local
            if local is not None and local.base_solution is not None:
                for vid, loc in enumerate(local.locations):
                    writer.writerow(
                        [
                            "local",
                            repr(loc.x),
                            repr(loc.y),
                            repr(local.base_solution.mean(vid)),
                            repr(local.base_solution.variance(vid)),
                            repr(local.occupancies[vid]),
                        ]
                    )

    # -- internals -------------------------------------------------------------

    def _nearest_nodes(self, loc: Location, k: int) -> list[GlobalNode]:
        order = sorted(
            range(len(self.nodes)),
            key=lambda i: (euclidean_distance(self.nodes[i].location, loc), i),
        )
        return [self.nodes[i] for i in order[:k]]
