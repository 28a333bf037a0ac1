"""Scalar Gaussian factor graph with exact MAP solve and marginal variances.

Values are scalar unknowns indexed by dense integer ids. Two factor kinds are
supported: unary measurement factors N(v | z, s) and pairwise zero-mean link
factors N(v_a - v_b | 0, s). Everything is linear-Gaussian, so the MAP
estimate coincides with the posterior mean and both it and the marginal
variances come out of one sparse symmetric positive-definite solve of the
normal equations.

The information matrix A = J^T W J is accumulated incrementally as factors
are added (COO triplets), so a solve never iterates over factors in Python.
Marginal variances are columns of A^{-1}: computed for the full diagonal by
default, or only for a requested subset of values, which is much cheaper on
large graphs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import GaussianBelief

# Relative pivot floor: factorizations reporting a smaller pivot are rejected
# as numerically singular rather than silently returning garbage.
_PIVOT_FLOOR = 1e-12

# Column block size when extracting many marginal variances at once.
_VARIANCE_CHUNK = 512


class UnderconstrainedGraphError(ValueError):
    """A connected component has no unary factor, so its posterior is improper."""


class SingularSystemError(ValueError):
    """The normal equations could not be factorized to acceptable precision."""


@dataclass(frozen=True)
class UnaryFactor:
    """Gaussian measurement factor N(value | observed, variance)."""

    target: int
    observed: float
    variance: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.observed):
            raise ValueError(f"unary observed value must be finite, got {self.observed}")
        if not math.isfinite(self.variance) or self.variance <= 0.0:
            raise ValueError(f"unary variance must be positive and finite, got {self.variance}")


@dataclass(frozen=True)
class LinkFactor:
    """Zero-mean difference factor N(value_a - value_b | 0, variance)."""

    a: int
    b: int
    variance: float

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise ValueError(f"link endpoints must differ, got {self.a} twice")
        if not math.isfinite(self.variance) or self.variance <= 0.0:
            raise ValueError(f"link variance must be positive and finite, got {self.variance}")


class GraphSolution:
    """Posterior means for every value and marginal variances for the solved subset."""

    def __init__(
        self,
        means: np.ndarray,
        variances: dict[int, float],
        variance_ids: Optional[tuple[int, ...]],
        revision: int,
    ) -> None:
        self._means = means
        self._variances = variances
        self.variance_ids = variance_ids  # None means the full diagonal was solved
        self.revision = revision

    def __len__(self) -> int:
        return len(self._means)

    def mean(self, value_id: int) -> float:
        return float(self._means[value_id])

    def means(self) -> np.ndarray:
        return self._means

    def variance(self, value_id: int) -> float:
        try:
            return self._variances[value_id]
        except KeyError:
            raise KeyError(
                f"variance of value {value_id} was not requested in this solve"
            ) from None

    def belief(self, value_id: int) -> GaussianBelief:
        return GaussianBelief(self.mean(value_id), self.variance(value_id))


class FactorGraph:
    """Container of scalar values and Gaussian factors with an exact solver."""

    def __init__(self) -> None:
        self.n_values = 0
        self.unaries: list[UnaryFactor] = []
        self.links: list[LinkFactor] = []
        self.revision = 0
        # Incremental COO triplets of the information matrix and the
        # information vector contributions (index, value).
        self._rows: list[int] = []
        self._cols: list[int] = []
        self._data: list[float] = []
        self._b_idx: list[int] = []
        self._b_val: list[float] = []
        # Union-find over values; a root is "anchored" once its component
        # contains at least one unary factor.
        self._parent: list[int] = []
        self._rank: list[int] = []
        self._anchored: list[bool] = []
        self._unanchored_components = 0

    # -- construction ---------------------------------------------------

    def add_value(self) -> int:
        vid = self.n_values
        self.n_values += 1
        self.revision += 1
        self._parent.append(vid)
        self._rank.append(0)
        self._anchored.append(False)
        self._unanchored_components += 1
        return vid

    def add_unary(self, factor: UnaryFactor) -> None:
        self._check_id(factor.target)
        w = 1.0 / factor.variance
        self._rows.append(factor.target)
        self._cols.append(factor.target)
        self._data.append(w)
        self._b_idx.append(factor.target)
        self._b_val.append(w * factor.observed)
        root = self._find(factor.target)
        if not self._anchored[root]:
            self._anchored[root] = True
            self._unanchored_components -= 1
        self.unaries.append(factor)
        self.revision += 1

    def add_link(self, factor: LinkFactor) -> None:
        self._check_id(factor.a)
        self._check_id(factor.b)
        w = 1.0 / factor.variance
        self._rows.extend((factor.a, factor.b, factor.a, factor.b))
        self._cols.extend((factor.a, factor.b, factor.b, factor.a))
        self._data.extend((w, w, -w, -w))
        self._union(factor.a, factor.b)
        self.links.append(factor)
        self.revision += 1

    def copy(self) -> "FactorGraph":
        """Cheap structural copy; used for hypothetical conditioning."""
        g = FactorGraph.__new__(FactorGraph)
        g.n_values = self.n_values
        g.unaries = list(self.unaries)
        g.links = list(self.links)
        g.revision = self.revision
        g._rows = list(self._rows)
        g._cols = list(self._cols)
        g._data = list(self._data)
        g._b_idx = list(self._b_idx)
        g._b_val = list(self._b_val)
        g._parent = list(self._parent)
        g._rank = list(self._rank)
        g._anchored = list(self._anchored)
        g._unanchored_components = self._unanchored_components
        return g

    # -- solving ----------------------------------------------------------

    def solve(
        self,
        initial: Optional[GraphSolution] = None,
        variance_for: Optional[Sequence[int]] = None,
    ) -> GraphSolution:
        """Exact posterior means and marginal variances.

        ``variance_for`` restricts the variance extraction to the given value
        ids (possibly empty); by default the full diagonal of the posterior
        covariance is computed. ``initial`` is accepted as a warm-start hint
        but does not affect the (exact, direct) solve.
        """
        del initial  # direct solve; hint kept for interface compatibility
        if self.n_values == 0:
            return GraphSolution(np.zeros(0), {}, self._normalize_ids(variance_for), self.revision)
        self._check_anchored()

        a_mat = sp.coo_matrix(
            (np.asarray(self._data), (np.asarray(self._rows), np.asarray(self._cols))),
            shape=(self.n_values, self.n_values),
        ).tocsc()
        b = np.zeros(self.n_values)
        np.add.at(b, np.asarray(self._b_idx), np.asarray(self._b_val))

        try:
            lu = spla.splu(a_mat)
        except RuntimeError as exc:
            raise SingularSystemError(f"normal equations are singular: {exc}") from exc
        pivots = np.abs(lu.U.diagonal())
        if pivots.min() < _PIVOT_FLOOR * pivots.max():
            raise SingularSystemError(
                f"factorization pivot ratio {pivots.min() / pivots.max():.3e} "
                f"below {_PIVOT_FLOOR:.0e}"
            )

        means = lu.solve(b)
        if not np.all(np.isfinite(means)):
            raise SingularSystemError("solve produced non-finite means")

        requested = self._normalize_ids(variance_for)
        ids = range(self.n_values) if requested is None else requested
        variances: dict[int, float] = {}
        ids = list(ids)
        for start in range(0, len(ids), _VARIANCE_CHUNK):
            block = ids[start : start + _VARIANCE_CHUNK]
            rhs = np.zeros((self.n_values, len(block)))
            for col, vid in enumerate(block):
                rhs[vid, col] = 1.0
            cols = lu.solve(rhs)
            for col, vid in enumerate(block):
                var = float(cols[vid, col])
                if not math.isfinite(var) or var <= 0.0:
                    raise SingularSystemError(
                        f"marginal variance of value {vid} is not positive ({var})"
                    )
                variances[vid] = var
        return GraphSolution(means, variances, requested, self.revision)

    def solve_incremental(self, previous: GraphSolution) -> GraphSolution:
        """Re-solve after factor additions, reusing ``previous`` when unchanged."""
        if previous.revision == self.revision:
            return previous
        return self.solve(variance_for=previous.variance_ids)

    # -- inspection -------------------------------------------------------

    def export_text(self) -> str:
        """Plain-text edge list, one factor per line, for offline inspection."""
        lines = [f"values {self.n_values}"]
        for f in self.unaries:
            lines.append(f"unary {f.target} {f.observed!r} {f.variance!r}")
        for f in self.links:
            lines.append(f"link {f.a} {f.b} {f.variance!r}")
        return "\n".join(lines) + "\n"

    # -- internals --------------------------------------------------------

    def _check_id(self, value_id: int) -> None:
        if not 0 <= value_id < self.n_values:
            raise KeyError(f"unknown value id {value_id} (graph has {self.n_values} values)")

    def _find(self, v: int) -> int:
        parent = self._parent
        root = v
        while parent[root] != root:
            root = parent[root]
        while parent[v] != root:
            parent[v], v = root, parent[v]
        return root

    def _union(self, a: int, b: int) -> None:
        ra, rb = self._find(a), self._find(b)
        if ra == rb:
            return
        if self._rank[ra] < self._rank[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        if self._rank[ra] == self._rank[rb]:
            self._rank[ra] += 1
        merged_anchored = self._anchored[ra] or self._anchored[rb]
        # Two components became one; recount how many unanchored ones vanished.
        before = (0 if self._anchored[ra] else 1) + (0 if self._anchored[rb] else 1)
        after = 0 if merged_anchored else 1
        self._anchored[ra] = merged_anchored
        self._unanchored_components -= before - after

    def _check_anchored(self) -> None:
        if self._unanchored_components == 0:
            return
        members: dict[int, list[int]] = {}
        for vid in range(self.n_values):
            root = self._find(vid)
            if not self._anchored[root]:
                members.setdefault(root, []).append(vid)
        component = min(members.values())
        raise UnderconstrainedGraphError(
            f"{len(members)} component(s) have no unary factor; "
            f"one such component contains values {component[:20]}"
        )

    @staticmethod
    def _normalize_ids(ids: Optional[Iterable[int]]) -> Optional[tuple[int, ...]]:
        if ids is None:
            return None
        return tuple(ids)
