"""Episode mechanics: start/goal sampling, rewards, termination, step loop."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import sensors, world as world_mod
from .errors import EpisodeTerminatedError, MapTooSmallError
from .gridnav import (
    NAV_RESOLUTION,
    bfs_connected,
    dijkstra_distances,
    free_space_grid,
    interpolate_distance,
)
from .walkmap import WalkableMap
from .world import (
    Action,
    AgentState,
    WorldState,
    collision_check,
    on_sidewalk,
    populate_obstacles,
    step_dynamics,
)

REWARD_SUCCESS = 10.0
REWARD_TERMINATION = -10.0
REWARD_LIFE = -0.01

MAX_STEPS = 150
SUCCESS_RADIUS = 0.5
GOAL_DISTANCE_RANGE = (10.0, 15.0)
WAYPOINT_ADVANCE_RADIUS = 2.0

START_GOAL_MAX_TRIES = 200

TERMINALS = ("success", "collision", "sidewalk_violation", "timeout")

OBS_MODES = ("privileged", "realistic", "both", "none")


class RewardBreakdown(NamedTuple):
    success: float
    termination: float
    approach: float
    life: float
    total: float


def compute_reward(d_prev: float, d_curr: float, terminal: Optional[str]) -> RewardBreakdown:
    """Four-term step reward; approach is the raw drop in goal distance."""
    r_success = REWARD_SUCCESS if terminal == "success" else 0.0
    r_term = REWARD_TERMINATION if terminal in ("collision", "sidewalk_violation", "timeout") else 0.0
    r_approach = d_prev - d_curr
    r_life = REWARD_LIFE
    return RewardBreakdown(r_success, r_term, r_approach, r_life,
                           r_success + r_term + r_approach + r_life)


@dataclass
class WaypointRoute:
    waypoints: list[tuple[float, float]]
    current_index: int = 0
    advance_radius: float = WAYPOINT_ADVANCE_RADIUS

    @property
    def current(self) -> tuple[float, float]:
        return self.waypoints[self.current_index]

    @property
    def on_last(self) -> bool:
        return self.current_index == len(self.waypoints) - 1


def advance_waypoint(route: WaypointRoute, x: float, y: float) -> WaypointRoute:
    """Advance past every waypoint within the advance radius, never past the last."""
    while not route.on_last:
        wx, wy = route.current
        if math.hypot(x - wx, y - wy) <= route.advance_radius:
            route.current_index += 1
        else:
            break
    return route


@dataclass
class EpisodeConfig:
    map: WalkableMap
    seed: int = 0
    obstacle_density: float = 0.0      # per 100 m^2
    pedestrian_fraction: float = 0.0
    max_steps: int = MAX_STEPS
    success_radius: float = SUCCESS_RADIUS
    goal_distance_range: tuple[float, float] = GOAL_DISTANCE_RANGE
    footprint_radius: float = world_mod.AGENT_RADIUS
    gps_sigma: float = sensors.GPS_SIGMA_POS
    gps_latency: int = sensors.GPS_LATENCY_STEPS
    obs_mode: str = "privileged"
    render_bev: bool = True            # only meaningful for privileged modes
    geodesic_reward: bool = False      # experimental: approach term on path distance
    max_geodesic: Optional[float] = 23.0  # keep tasks winnable within max_steps
    waypoints: Optional[list[tuple[float, float]]] = None
    start: Optional[tuple[float, float, float]] = None  # (x, y, heading) override

    def __post_init__(self):
        if self.max_steps <= 0 or self.success_radius <= 0.0:
            raise ValueError("max_steps and success_radius must be positive")
        lo, hi = self.goal_distance_range
        if lo > hi:
            raise ValueError("goal_distance_range min must be <= max")
        if self.obs_mode not in OBS_MODES:
            raise ValueError(f"obs_mode must be one of {OBS_MODES}")

    def to_dict(self) -> dict:
        d = {
            "map": self.map.to_dict(),
            "seed": self.seed,
            "obstacle_density": self.obstacle_density,
            "pedestrian_fraction": self.pedestrian_fraction,
            "max_steps": self.max_steps,
            "success_radius": self.success_radius,
            "goal_distance_range": list(self.goal_distance_range),
            "footprint_radius": self.footprint_radius,
            "gps_sigma": self.gps_sigma,
            "gps_latency": self.gps_latency,
            "obs_mode": self.obs_mode,
            "render_bev": self.render_bev,
            "geodesic_reward": self.geodesic_reward,
            "max_geodesic": self.max_geodesic,
            "waypoints": self.waypoints,
            "start": list(self.start) if self.start else None,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeConfig":
        return cls(
            map=WalkableMap.from_dict(d["map"]),
            seed=int(d["seed"]),
            obstacle_density=float(d["obstacle_density"]),
            pedestrian_fraction=float(d["pedestrian_fraction"]),
            max_steps=int(d["max_steps"]),
            success_radius=float(d["success_radius"]),
            goal_distance_range=tuple(d["goal_distance_range"]),
            footprint_radius=float(d["footprint_radius"]),
            gps_sigma=float(d["gps_sigma"]),
            gps_latency=int(d["gps_latency"]),
            obs_mode=d["obs_mode"],
            render_bev=bool(d["render_bev"]),
            geodesic_reward=bool(d["geodesic_reward"]),
            max_geodesic=d.get("max_geodesic"),
            waypoints=[tuple(w) for w in d["waypoints"]] if d.get("waypoints") else None,
            start=tuple(d["start"]) if d.get("start") else None,
        )


@dataclass
class StepOutcome:
    observation: sensors.Observation
    reward: RewardBreakdown
    terminal: Optional[str]


@dataclass
class EpisodeContext:
    """Ground-truth episode description handed to policies at reset."""

    map: WalkableMap
    obstacles: list
    start: tuple[float, float, float]
    goal: tuple[float, float]
    config: EpisodeConfig


class EpisodeResult(NamedTuple):
    outcome: str
    reward_total: float
    steps: int
    trajectory: list[tuple[float, float, float]]


def is_reachable(wmap: WalkableMap, a: tuple[float, float], b: tuple[float, float],
                 obstacles=(), agent_radius: float = world_mod.AGENT_RADIUS,
                 resolution: float = NAV_RESOLUTION) -> bool:
    """Connectivity on the inflated free-space grid between the two points."""
    grid = free_space_grid(wmap, obstacles, resolution=resolution, inflate=agent_radius)
    return bfs_connected(grid, grid.cell_of(a[0], a[1]), grid.cell_of(b[0], b[1]))


def sample_start_goal(wmap: WalkableMap, rng: np.random.Generator,
                      distance_range: tuple[float, float] = GOAL_DISTANCE_RANGE,
                      max_tries: int = START_GOAL_MAX_TRIES):
    """Walkable start pose and goal point, separation within range, connected.

    Raises MapTooSmallError when no admissible pair is found within the retry
    budget.
    """
    lo, hi = distance_range
    grid = free_space_grid(wmap, (), inflate=0.0)
    for _ in range(max_tries):
        sx, sy = wmap.sample_walkable_point(rng)
        heading = float(rng.uniform(-math.pi, math.pi))
        r = float(rng.uniform(lo, hi))
        phi = float(rng.uniform(-math.pi, math.pi))
        gx = sx + r * math.cos(phi)
        gy = sy + r * math.sin(phi)
        if not wmap.is_walkable(gx, gy):
            continue
        if not (lo <= math.hypot(gx - sx, gy - sy) <= hi):
            continue  # guard against rounding at the range endpoints
        if not bfs_connected(grid, grid.cell_of(sx, sy), grid.cell_of(gx, gy)):
            continue
        return (sx, sy, heading), (gx, gy)
    raise MapTooSmallError(
        f"no start/goal pair with separation in [{lo}, {hi}] m found in {max_tries} tries"
    )


class Episode:
    """One seeded navigation episode over a walkable map."""

    def __init__(self, config: EpisodeConfig):
        self.config = config
        self.world: Optional[WorldState] = None
        self.start_pose: Optional[tuple[float, float, float]] = None
        self.initial_obstacles: list[dict] = []
        self.goal: Optional[tuple[float, float]] = None
        self.route: Optional[WaypointRoute] = None
        self.terminal: Optional[str] = None
        self._bev_history = sensors.BevHistory()
        self._gps: Optional[sensors.GpsNoiseModel] = None
        self._d_last = 0.0
        self._geodesic = None
        self.log_rows: list[dict] = []
        self._started = False

    # -- lifecycle ---------------------------------------------------------

    def reset(self) -> sensors.Observation:
        cfg = self.config
        seeds = np.random.SeedSequence(cfg.seed).spawn(3)
        sample_rng = np.random.default_rng(seeds[0])
        world_rng = np.random.default_rng(seeds[1])
        gps_rng = np.random.default_rng(seeds[2])

        if cfg.start is not None and cfg.waypoints:
            start = cfg.start
            self.route = WaypointRoute(list(cfg.waypoints))
            goal = tuple(cfg.waypoints[-1])
            obstacles = populate_obstacles(
                cfg.map, cfg.obstacle_density, sample_rng,
                pedestrian_fraction=cfg.pedestrian_fraction,
                keep_clear=[(start[0], start[1])],
            )
        else:
            self.route = None
            start, goal, obstacles = self._sample_layout(sample_rng)

        agent = AgentState(start[0], start[1], start[2], footprint_radius=cfg.footprint_radius)
        self.world = WorldState(agent=agent, obstacles=obstacles, map=cfg.map, rng=world_rng)
        self.start_pose = (agent.x, agent.y, agent.heading)
        self.initial_obstacles = [ob.to_dict() for ob in obstacles]
        self.goal = goal
        self.terminal = None
        self._bev_history.clear()
        self._gps = sensors.GpsNoiseModel(cfg.gps_sigma, cfg.gps_latency, gps_rng)
        self._geodesic = None
        if cfg.geodesic_reward:
            grid = free_space_grid(cfg.map, obstacles, inflate=cfg.footprint_radius)
            self._geodesic = (grid, dijkstra_distances(grid, grid.cell_of(goal[0], goal[1])))
        self._d_last = self._target_distance()
        self.log_rows = []
        self._started = True
        return self._render()

    def _sample_layout(self, rng: np.random.Generator):
        cfg = self.config
        for _ in range(20):
            start, goal = sample_start_goal(cfg.map, rng, cfg.goal_distance_range)
            for _ in range(10):
                obstacles = populate_obstacles(
                    cfg.map, cfg.obstacle_density, rng,
                    pedestrian_fraction=cfg.pedestrian_fraction,
                    keep_clear=[(start[0], start[1])],
                )
                if self._layout_ok(start, goal, obstacles):
                    return start, goal, obstacles
        raise MapTooSmallError("could not place obstacles while keeping the goal reachable")

    def _layout_ok(self, start, goal, obstacles) -> bool:
        """Reachable with obstacles, and the detour fits the step budget."""
        cfg = self.config
        grid = free_space_grid(cfg.map, obstacles, inflate=cfg.footprint_radius)
        dist = dijkstra_distances(grid, grid.cell_of(goal[0], goal[1]))
        cell = grid.cell_of(start[0], start[1])
        if not grid.in_bounds(*cell):
            return False
        d = dist[cell]
        if not math.isfinite(d):
            return False
        return cfg.max_geodesic is None or d <= cfg.max_geodesic

    def context(self) -> EpisodeContext:
        if not self._started:
            raise RuntimeError("reset() must run before context()")
        return EpisodeContext(map=self.config.map, obstacles=self.world.obstacles,
                              start=self.start_pose, goal=self.goal, config=self.config)

    # -- stepping ----------------------------------------------------------

    def current_target(self) -> tuple[float, float]:
        if self.route is not None:
            return self.route.current
        return self.goal

    def _target_distance(self) -> float:
        a = self.world.agent
        if self._geodesic is not None:
            grid, dist = self._geodesic
            d = interpolate_distance(grid, dist, a.x, a.y)
            if math.isfinite(d):
                return float(d)
            # off-grid or blocked: fall back to the straight-line distance
        tx, ty = self.current_target()
        return math.hypot(tx - a.x, ty - a.y)

    def step(self, action: Action) -> StepOutcome:
        if self.terminal is not None:
            raise EpisodeTerminatedError("step() on a terminated episode")
        if not self._started:
            raise RuntimeError("reset() must run before step()")
        cfg = self.config
        action = Action(action.speed, action.yaw_delta)
        d_prev = self._d_last
        step_dynamics(self.world, action)
        agent = self.world.agent
        d_curr = self._target_distance()

        goal_dist = math.hypot(self.goal[0] - agent.x, self.goal[1] - agent.y)
        at_goal = goal_dist < cfg.success_radius
        if self.route is not None:
            at_goal = at_goal and self.route.on_last
        if at_goal:
            terminal = "success"
        elif collision_check(self.world).hit:
            terminal = "collision"
        elif not on_sidewalk(self.world):
            terminal = "sidewalk_violation"
        elif self.world.step_count >= cfg.max_steps:
            terminal = "timeout"
        else:
            terminal = None

        reward = compute_reward(d_prev, d_curr, terminal)
        self.terminal = terminal
        if self.route is not None and terminal is None:
            advance_waypoint(self.route, agent.x, agent.y)
        self._d_last = self._target_distance()

        obs = self._render()
        self.log_rows.append({
            "t": self.world.step_count,
            "pose": [agent.x, agent.y, agent.heading],
            "action": [action.speed, action.yaw_delta],
            "reward": {"s": reward.success, "t": reward.termination,
                       "a": reward.approach, "l": reward.life},
            "terminal": terminal,
            "goal": list(self.current_target()),
        })
        return StepOutcome(observation=obs, reward=reward, terminal=terminal)

    # -- rendering ---------------------------------------------------------

    def _render(self) -> sensors.Observation:
        cfg = self.config
        mode = cfg.obs_mode
        priv = None
        real = None
        if mode in ("privileged", "both"):
            bev = None
            if cfg.render_bev:
                bev = sensors.render_bev(self.world, self._bev_history.frames())
                self._bev_history.push(bev[0])
            blid = sensors.raycast(self.world, sensors.PRIVILEGED_LIDAR_RAYS,
                                   sensors.PRIVILEGED_LIDAR_MAX_RANGE)
            gdd = sensors.compute_gdd(self.world.agent, self.current_target())
            a = self.world.agent
            priv = sensors.PrivilegedObs(bev=bev, lidar=blid, goal=gdd,
                                         pose=(a.x, a.y, a.heading))
        if mode in ("realistic", "both"):
            rlid = sensors.raycast(self.world, sensors.REALISTIC_LIDAR_RAYS,
                                   sensors.REALISTIC_LIDAR_MAX_RANGE)
            rgdd = sensors.compute_gdd(self.world.agent, self.current_target(), self._gps)
            real = sensors.RealisticObs(lidar=rlid, goal=rgdd)
        return sensors.Observation(privileged=priv, realistic=real)


def run_episode(episode: Episode, policy, max_steps: Optional[int] = None) -> EpisodeResult:
    """Drive one episode with a policy; returns the outcome summary.

    A policy that loses its route (NoPathError) aborts the episode, which is
    then scored as a timeout failure.
    """
    from .errors import NoPathError

    obs = episode.reset()
    trajectory = [(episode.world.agent.x, episode.world.agent.y, episode.world.agent.heading)]
    total = 0.0
    limit = max_steps if max_steps is not None else episode.config.max_steps
    outcome = "timeout"
    try:
        policy.reset(episode.context())
    except NoPathError:
        episode.terminal = "timeout"
        return EpisodeResult(outcome, total, 0, trajectory)
    for _ in range(limit):
        try:
            action = policy.act(obs)
        except NoPathError:
            episode.terminal = "timeout"
            break
        out = episode.step(action)
        obs = out.observation
        total += out.reward.total
        a = episode.world.agent
        trajectory.append((a.x, a.y, a.heading))
        if out.terminal is not None:
            outcome = out.terminal
            break
    return EpisodeResult(outcome=outcome, reward_total=total,
                         steps=episode.world.step_count, trajectory=trajectory)
