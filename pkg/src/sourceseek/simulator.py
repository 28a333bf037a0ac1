"""Deterministic 2-D grid world used as the stand-in test environment.

The world is an occupancy grid with a radio source; ground-truth SNR follows
a log-distance path-loss law with a per-wall attenuation term, computed by
ray-marching the source-to-query segment. The robot's pose is ground truth,
motion follows shortest traversable grid paths, and exploration state (the
visited mask) feeds frontier extraction for the global planner.

Maps load from plain text ('.' free, '#' occupied, 'S' start, 'X' source) or
from PGM grayscale (0 = occupied, 255 = free) plus a key=value sidecar file
for pitch, source, and start. Two maps ship with the package: mapA hides the
source behind occlusions, mapB leaves it in open view.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterator, Optional

import numpy as np

from .core import Location, Measurement

Cell = tuple[int, int]

# A cell is traversable when its occupancy probability is below this.
TRAVERSABLE_MAX_OCC = 0.5

# Neighbor order fixed for deterministic search: north, south, west, east.
_NEIGHBOR_STEPS = ((-1, 0), (1, 0), (0, -1), (0, 1))


class UnreachableWaypointError(ValueError):
    """No traversable path exists from the robot to the requested waypoint."""


class MapFormatError(ValueError):
    """A map file could not be parsed."""


@dataclass(frozen=True)
class Frontier:
    """One reachable boundary between explored and unexplored traversable space."""

    location: Location
    path_time_from_robot: float


@dataclass
class GlobalIRMView:
    """Snapshot of the explored region and its frontier goals."""

    visited: np.ndarray
    frontiers: list[Frontier]


class LocalIRM:
    """A rectangular occupancy window centered at the robot.

    Exposes two adjacency relations: full lattice adjacency between any
    in-window 4-neighbors (the signal model links occupied cells too, with
    inflated variance) and traversable adjacency used for robot motion.
    """

    def __init__(self, row0: int, col0: int, p_occ: np.ndarray, pitch: float, robot_cell: Cell):
        self.row0 = row0
        self.col0 = col0
        self.p_occ = p_occ
        self.pitch = pitch
        self.robot_cell = robot_cell

    @property
    def shape(self) -> tuple[int, int]:
        return self.p_occ.shape

    def cells(self) -> Iterator[Cell]:
        rows, cols = self.p_occ.shape
        for r in range(rows):
            for c in range(cols):
                yield (self.row0 + r, self.col0 + c)

    def contains(self, cell: Cell) -> bool:
        r, c = cell
        rows, cols = self.p_occ.shape
        return self.row0 <= r < self.row0 + rows and self.col0 <= c < self.col0 + cols

    def p_occ_at(self, cell: Cell) -> float:
        return float(self.p_occ[cell[0] - self.row0, cell[1] - self.col0])

    def is_traversable(self, cell: Cell) -> bool:
        return self.p_occ_at(cell) < TRAVERSABLE_MAX_OCC

    def location_of(self, cell: Cell) -> Location:
        return Location((cell[1] + 0.5) * self.pitch, (cell[0] + 0.5) * self.pitch)

    def cell_of(self, loc: Location) -> Cell:
        return (int(loc.y // self.pitch), int(loc.x // self.pitch))

    def lattice_neighbors(self, cell: Cell) -> list[Cell]:
        out = []
        for dr, dc in _NEIGHBOR_STEPS:
            nbr = (cell[0] + dr, cell[1] + dc)
            if self.contains(nbr):
                out.append(nbr)
        return out

    def traversable_neighbors(self, cell: Cell) -> list[Cell]:
        return [nbr for nbr in self.lattice_neighbors(cell) if self.is_traversable(nbr)]


@dataclass
class Environment:
    """Occupancy grid plus ground-truth signal field and exploration state."""

    p_occ: np.ndarray
    pitch: float
    source: Location
    start: Location
    p0_db: float = 60.0
    path_loss_exponent: float = 2.2
    reference_distance: float = 0.5
    wall_loss_db: float = 6.0
    noise_std: float = 0.1
    robot_speed: float = 1.0
    seed: int = 0
    name: str = ""
    robot: Location = field(init=False)
    visited: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        if self.pitch <= 0.0:
            raise ValueError(f"pitch must be positive, got {self.pitch}")
        if self.robot_speed <= 0.0:
            raise ValueError(f"robot_speed must be positive, got {self.robot_speed}")
        if not self.in_bounds(self.source):
            raise ValueError("source location is out of bounds")
        if not self.in_bounds(self.start):
            raise ValueError("start location is out of bounds")
        self.robot = self.start
        self.visited = np.zeros(self.p_occ.shape, dtype=bool)

    @property
    def rows(self) -> int:
        return self.p_occ.shape[0]

    @property
    def cols(self) -> int:
        return self.p_occ.shape[1]

    def in_bounds(self, loc: Location) -> bool:
        return 0.0 <= loc.x < self.cols * self.pitch and 0.0 <= loc.y < self.rows * self.pitch

    def cell_of(self, loc: Location) -> Cell:
        return (int(loc.y // self.pitch), int(loc.x // self.pitch))

    def location_of(self, cell: Cell) -> Location:
        return Location((cell[1] + 0.5) * self.pitch, (cell[0] + 0.5) * self.pitch)

    def is_traversable(self, cell: Cell) -> bool:
        return float(self.p_occ[cell]) < TRAVERSABLE_MAX_OCC

    def free_cells(self) -> Iterator[Cell]:
        for r in range(self.rows):
            for c in range(self.cols):
                if self.p_occ[r, c] < TRAVERSABLE_MAX_OCC:
                    yield (r, c)


# -- signal field ------------------------------------------------------------


def ground_truth_snr(env: Environment, loc: Location) -> float:
    """Noise-free SNR at ``loc``: log-distance path loss minus wall attenuation."""
    if not env.in_bounds(loc):
        raise ValueError(f"query ({loc.x}, {loc.y}) is out of bounds")
    d = math.hypot(loc.x - env.source.x, loc.y - env.source.y)
    base = env.p0_db - 10.0 * env.path_loss_exponent * math.log10(max(d, env.reference_distance))
    return base - env.wall_loss_db * _walls_crossed(env, env.source, loc)


def _walls_crossed(env: Environment, a: Location, b: Location) -> int:
    """Distinct occupied cells touched by the segment, ray-marched at half-pitch."""
    d = math.hypot(b.x - a.x, b.y - a.y)
    steps = max(1, math.ceil(d / (env.pitch / 2.0)))
    hit: set[Cell] = set()
    for i in range(steps + 1):
        t = i / steps
        x = a.x + t * (b.x - a.x)
        y = a.y + t * (b.y - a.y)
        cell = (int(y // env.pitch), int(x // env.pitch))
        if 0 <= cell[0] < env.rows and 0 <= cell[1] < env.cols:
            if env.p_occ[cell] >= TRAVERSABLE_MAX_OCC:
                hit.add(cell)
    return len(hit)


def sample_measurement(
    env: Environment, loc: Location, rng: np.random.Generator, time_index: int = 0
) -> Measurement:
    value = ground_truth_snr(env, loc)
    if env.noise_std > 0.0:
        value += float(rng.normal(0.0, env.noise_std))
    return Measurement(loc, value, time_index)


# -- exploration ---------------------------------------------------------------


def extract_local_irm(env: Environment, robot: Location, rows: int, cols: int) -> LocalIRM:
    """Window of the occupancy grid centered at the robot, clipped at world edges.

    All window cells are marked visited: the robot has observed that area.
    """
    if not env.in_bounds(robot):
        raise ValueError("robot location is out of bounds")
    r, c = env.cell_of(robot)
    r0 = max(0, r - rows // 2)
    r1 = min(env.rows, r0 + rows)
    r0 = max(0, r1 - rows)
    c0 = max(0, c - cols // 2)
    c1 = min(env.cols, c0 + cols)
    c0 = max(0, c1 - cols)
    env.visited[r0:r1, c0:c1] = True
    return LocalIRM(r0, c0, env.p_occ[r0:r1, c0:c1].copy(), env.pitch, (r, c))


def extract_frontiers(env: Environment) -> GlobalIRMView:
    """Cluster the explored/unexplored boundary and time a path to each cluster.

    A frontier cell is visited, traversable, and 4-adjacent to an unvisited
    traversable cell. Clusters are 4-connected components, represented by the
    member nearest the cluster centroid; path times run over visited
    traversable cells at the robot speed. Unreachable clusters are dropped.
    """
    if not env.visited.any():
        raise ValueError("no visited cells; explore before extracting frontiers")
    traversable = env.p_occ < TRAVERSABLE_MAX_OCC
    known = env.visited & traversable
    boundary = np.zeros_like(known)
    unknown = ~env.visited & traversable
    for dr, dc in _NEIGHBOR_STEPS:
        shifted = np.zeros_like(unknown)
        src = unknown[
            max(0, dr) : env.rows + min(0, dr), max(0, dc) : env.cols + min(0, dc)
        ]
        shifted[
            max(0, -dr) : env.rows + min(0, -dr), max(0, -dc) : env.cols + min(0, -dc)
        ] = src
        boundary |= shifted
    frontier_mask = known & boundary

    dist = _bfs_steps(env, env.cell_of(env.robot), known)
    frontiers: list[Frontier] = []
    seen = np.zeros_like(frontier_mask)
    for r in range(env.rows):
        for c in range(env.cols):
            if not frontier_mask[r, c] or seen[r, c]:
                continue
            members = _flood(frontier_mask, seen, (r, c))
            centroid = (
                sum(m[0] for m in members) / len(members),
                sum(m[1] for m in members) / len(members),
            )
            rep = min(
                members,
                key=lambda m: ((m[0] - centroid[0]) ** 2 + (m[1] - centroid[1]) ** 2, m),
            )
            steps = dist.get(rep)
            if steps is None:
                continue
            frontiers.append(
                Frontier(env.location_of(rep), steps * env.pitch / env.robot_speed)
            )
    frontiers.sort(key=lambda f: (f.location.y, f.location.x))
    return GlobalIRMView(env.visited.copy(), frontiers)


def _flood(mask: np.ndarray, seen: np.ndarray, start: Cell) -> list[Cell]:
    queue = deque([start])
    seen[start] = True
    members = []
    while queue:
        cell = queue.popleft()
        members.append(cell)
        for dr, dc in _NEIGHBOR_STEPS:
            nbr = (cell[0] + dr, cell[1] + dc)
            if 0 <= nbr[0] < mask.shape[0] and 0 <= nbr[1] < mask.shape[1]:
                if mask[nbr] and not seen[nbr]:
                    seen[nbr] = True
                    queue.append(nbr)
    return members


def _bfs_steps(env: Environment, start: Cell, allowed: np.ndarray) -> dict[Cell, int]:
    if not allowed[start]:
        return {}
    dist = {start: 0}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        for dr, dc in _NEIGHBOR_STEPS:
            nbr = (cell[0] + dr, cell[1] + dc)
            if 0 <= nbr[0] < env.rows and 0 <= nbr[1] < env.cols:
                if allowed[nbr] and nbr not in dist:
                    dist[nbr] = dist[cell] + 1
                    queue.append(nbr)
    return dist


def shortest_path_cells(env: Environment, start: Cell, goal: Cell) -> Optional[list[Cell]]:
    """BFS path over traversable cells, or None when the goal is unreachable."""
    traversable = env.p_occ < TRAVERSABLE_MAX_OCC
    if not (traversable[start] and traversable[goal]):
        return None
    if start == goal:
        return [start]
    prev: dict[Cell, Cell] = {start: start}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        for dr, dc in _NEIGHBOR_STEPS:
            nbr = (cell[0] + dr, cell[1] + dc)
            if 0 <= nbr[0] < env.rows and 0 <= nbr[1] < env.cols:
                if traversable[nbr] and nbr not in prev:
                    prev[nbr] = cell
                    if nbr == goal:
                        path = [goal]
                        while path[-1] != start:
                            path.append(prev[path[-1]])
                        path.reverse()
                        return path
                    queue.append(nbr)
    return None


def travel_seconds(env: Environment, a: Location, b: Location) -> Optional[float]:
    path = shortest_path_cells(env, env.cell_of(a), env.cell_of(b))
    if path is None:
        return None
    return (len(path) - 1) * env.pitch / env.robot_speed


def move_robot(env: Environment, robot: Location, waypoint: Location) -> tuple[Location, float]:
    """Advance along the shortest traversable path; returns (new pose, seconds)."""
    if not env.in_bounds(waypoint):
        raise UnreachableWaypointError(f"waypoint ({waypoint.x}, {waypoint.y}) is out of bounds")
    path = shortest_path_cells(env, env.cell_of(robot), env.cell_of(waypoint))
    if path is None:
        raise UnreachableWaypointError(
            f"no traversable path from ({robot.x}, {robot.y}) to ({waypoint.x}, {waypoint.y})"
        )
    for cell in path:
        env.visited[cell] = True
    env.robot = waypoint
    return waypoint, (len(path) - 1) * env.pitch / env.robot_speed


# -- map files ------------------------------------------------------------------


def parse_text_map(text: str, pitch: float = 1.0, **field_params) -> Environment:
    """Build an environment from rows of '.', '#', 'S' (start), 'X' (source)."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise MapFormatError("map has no rows")
    width = len(lines[0])
    if any(len(line) != width for line in lines):
        raise MapFormatError("map rows have unequal lengths")
    p_occ = np.zeros((len(lines), width))
    start = source = None
    for r, line in enumerate(lines):
        for c, ch in enumerate(line):
            if ch == "#":
                p_occ[r, c] = 1.0
            elif ch == "S":
                start = (r, c)
            elif ch == "X":
                source = (r, c)
            elif ch != ".":
                raise MapFormatError(f"unknown map character {ch!r} at row {r}, col {c}")
    if start is None or source is None:
        raise MapFormatError("map must contain exactly one 'S' and one 'X'")
    center = lambda cell: Location((cell[1] + 0.5) * pitch, (cell[0] + 0.5) * pitch)
    return Environment(p_occ, pitch, center(source), center(start), **field_params)


def parse_pgm_map(pgm_path: str, **field_params) -> Environment:
    """PGM grayscale occupancy (0 = occupied, 255 = free) with a .meta sidecar."""
    gray = _read_pgm(pgm_path)
    meta_path = pgm_path.rsplit(".", 1)[0] + ".meta"
    try:
        with open(meta_path) as fh:
            meta = dict(
                (k.strip(), v.strip())
                for k, v in (
                    line.split("=", 1)
                    for line in fh
                    if line.strip() and not line.lstrip().startswith("#")
                )
            )
    except FileNotFoundError:
        raise MapFormatError(f"sidecar file {meta_path} not found") from None
    try:
        pitch = float(meta["pitch"])
        source = Location(float(meta["source_x"]), float(meta["source_y"]))
        start = Location(float(meta["start_x"]), float(meta["start_y"]))
    except KeyError as exc:
        raise MapFormatError(f"sidecar missing key {exc}") from None
    return Environment(1.0 - gray / 255.0, pitch, source, start, **field_params)


def _read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        # skip whitespace and comment lines in the header
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        tok = b""
        while pos < len(data) and not data[pos : pos + 1].isspace():
            tok += data[pos : pos + 1]
            pos += 1
        tokens.append(tok)
    if len(tokens) < 4 or tokens[0] not in (b"P2", b"P5"):
        raise MapFormatError(f"{path} is not a P2/P5 PGM file")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if tokens[0] == b"P5":
        pos += 1  # single whitespace after maxval
        raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    else:
        raster = np.asarray(data[pos:].split()[: width * height], dtype=float)
    gray = raster.reshape(height, width).astype(float)
    return gray * (255.0 / maxval)


def load_map(path: str, **field_params) -> Environment:
    if path.endswith(".pgm"):
        env = parse_pgm_map(path, **field_params)
    else:
        with open(path) as fh:
            env = parse_text_map(fh.read(), **field_params)
    env.name = path
    return env


def bundled_map_names() -> list[str]:
    root = resources.files("sourceseek") / "maps"
    return sorted(p.name.rsplit(".", 1)[0] for p in root.iterdir() if p.name.endswith(".txt"))


def load_bundled_map(name: str, **field_params) -> Environment:
    root = resources.files("sourceseek") / "maps"
    candidate = root / f"{name}.txt"
    if not candidate.is_file():
        raise MapFormatError(
            f"no bundled map named {name!r}; available: {', '.join(bundled_map_names())}"
        )
    env = parse_text_map(candidate.read_text(), **field_params)
    env.name = name
    return env
