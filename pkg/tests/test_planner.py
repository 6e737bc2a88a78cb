import math

import numpy as np
import pytest

from sidewalksim.episode import Episode, run_episode
from sidewalksim.errors import NoPathError
from sidewalksim.gridnav import (
    bfs_connected,
    eroded,
    free_space_grid,
    line_of_sight,
)
from sidewalksim.planner import (
    ConstantPolicy,
    OracleTeacher,
    ScriptedPolicy,
    build_distance_field,
    frontal_clearance,
    teacher_act,
)
from sidewalksim.sensors import Observation, PrivilegedObs, raycast
from sidewalksim.walkmap import generate_synthetic_map
from sidewalksim.world import SPEED_MAX, SPEED_MIN, YAW_LIMIT, Obstacle

from tests.conftest import make_config
from tests.test_world import make_world


def privileged_obs(world, goal):
    from sidewalksim.sensors import compute_gdd

    lidar = raycast(world, 64, 9.0)
    a = world.agent
    return Observation(privileged=PrivilegedObs(
        bev=None, lidar=lidar, goal=compute_gdd(a, goal),
        pose=(a.x, a.y, a.heading)))


# -- occupancy grids -------------------------------------------------------------


def test_free_space_grid_blocks_obstacles(corridor):
    ob = Obstacle(kind="cylinder", x=10.0, y=1.5, radius=0.5)
    grid = free_space_grid(corridor, [ob], inflate=0.35)
    cell = grid.cell_of(10.0, 1.5)
    assert not grid.free[cell]
    assert grid.free[grid.cell_of(2.0, 1.5)]


def test_eroded_strips_boundary_cells(corridor):
    grid = free_space_grid(corridor, ())
    shaved = eroded(grid)
    assert shaved.free.sum() < grid.free.sum()
    assert shaved.free[shaved.cell_of(10.0, 1.5)]


def test_line_of_sight(corridor):
    ob = Obstacle(kind="cuboid", x=10.0, y=1.5, half_w=0.4, half_h=1.0)
    grid = free_space_grid(corridor, [ob], inflate=0.35)
    assert line_of_sight(grid, 2.0, 1.5, 6.0, 1.5)
    assert not line_of_sight(grid, 2.0, 1.5, 18.0, 1.5)


def test_bfs_connected_basic(corridor):
    grid = free_space_grid(corridor, ())
    assert bfs_connected(grid, grid.cell_of(1.0, 1.5), grid.cell_of(19.0, 1.5))
    wall = Obstacle(kind="cuboid", x=10.0, y=1.5, half_w=0.3, half_h=1.6)
    blocked = free_space_grid(corridor, [wall], inflate=0.35)
    assert not bfs_connected(blocked, blocked.cell_of(1.0, 1.5),
                             blocked.cell_of(19.0, 1.5))


# -- distance field ---------------------------------------------------------------


def test_field_goal_cell_is_zero(corridor):
    field = build_distance_field(corridor, (), (15.0, 1.5))
    assert field.distance_at(15.0, 1.5) == pytest.approx(0.0, abs=0.3)
    cell = field.grid.cell_of(15.0, 1.5)
    assert field.values[cell] == 0.0


def test_field_monotone_along_corridor(corridor):
    goal = (18.0, 1.5)
    field = build_distance_field(corridor, (), goal)
    xs = np.linspace(1.0, 17.0, 30)
    vals = [field.distance_at(x, 1.5) for x in xs]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    # within the diagonal-metric factor of Euclidean distance
    for x, v in zip(xs, vals):
        euclid = abs(goal[0] - x)
        assert euclid - 0.5 <= v <= euclid * math.sqrt(2.0) + 0.5


def test_field_neighbor_differences_bounded(corridor):
    field = build_distance_field(corridor, (), (18.0, 1.5), start=(2.0, 1.5))
    vals = field.values
    res = field.grid.resolution
    step = math.sqrt(2.0) * res + 1e-12
    finite = np.isfinite(vals)
    for dr, dc in ((0, 1), (1, 0), (1, 1)):
        a = vals[:vals.shape[0] - dr, :vals.shape[1] - dc]
        b = vals[dr:, dc:]
        both = finite[:vals.shape[0] - dr, :vals.shape[1] - dc] & finite[dr:, dc:]
        if both.any():
            assert np.abs(a[both] - b[both]).max() <= step


def test_field_unreachable_is_inf(corridor):
    wall = Obstacle(kind="cuboid", x=10.0, y=1.5, half_w=0.3, half_h=1.6)
    field = build_distance_field(corridor, [wall], (18.0, 1.5))
    assert math.isinf(field.distance_at(1.0, 1.5))


def test_field_goal_not_walkable_raises(corridor):
    with pytest.raises(NoPathError):
        build_distance_field(corridor, (), (10.0, 10.0))


# -- teacher steering --------------------------------------------------------------


def test_teacher_aligned_full_speed(corridor):
    goal = (18.0, 1.5)
    field = build_distance_field(corridor, (), goal, start=(4.0, 1.5))
    w = make_world(corridor, 4.0, 1.5, 0.0)
    action = teacher_act(field, privileged_obs(w, goal), (4.0, 1.5, 0.0))
    assert action.speed == pytest.approx(SPEED_MAX, abs=0.01)
    # grid cell centers put the steering target up to ~5 degrees off-axis
    assert action.yaw_delta == pytest.approx(0.0, abs=0.12)


def test_teacher_goal_behind(corridor):
    goal = (2.0, 1.5)
    field = build_distance_field(corridor, (), goal, start=(15.0, 1.5))
    w = make_world(corridor, 15.0, 1.5, 0.0)  # facing away from the goal
    action = teacher_act(field, privileged_obs(w, goal), (15.0, 1.5, 0.0))
    assert abs(action.yaw_delta) == YAW_LIMIT
    assert action.speed <= 0.0


def test_teacher_reverses_on_blocked_front(big_plane):
    goal = (30.0, 0.0)
    ob = Obstacle(kind="cylinder", x=1.0, y=0.0, radius=0.5)  # frontal ray 0.5 m
    field = build_distance_field(big_plane, [ob], goal, start=(0.0, 0.0))
    w = make_world(big_plane, 0.0, 0.0, 0.0, obstacles=[ob])
    obs = privileged_obs(w, goal)
    assert frontal_clearance(obs.privileged.lidar)[0] == pytest.approx(0.5, abs=1e-9)
    action = teacher_act(field, obs, (0.0, 0.0, 0.0))
    assert action.speed == SPEED_MIN


def test_teacher_actions_always_in_bounds(corridor_long):
    teacher = OracleTeacher()
    for seed in range(5):
        ep = Episode(make_config(corridor_long, seed=seed, obstacle_density=5.0))
        obs = ep.reset()
        teacher.reset(ep.context())
        for _ in range(60):
            a = teacher.act(obs)
            assert SPEED_MIN <= a.speed <= SPEED_MAX
            assert -YAW_LIMIT <= a.yaw_delta <= YAW_LIMIT
            out = ep.step(a)
            obs = out.observation
            if out.terminal:
                break


def test_teacher_succeeds_on_empty_map_and_distance_decreases(corridor_long):
    for seed in range(6):
        ep = Episode(make_config(corridor_long, seed=seed, obstacle_density=0.0))
        obs = ep.reset()
        teacher = OracleTeacher()
        teacher.reset(ep.context())
        dists = []
        terminal = None
        for _ in range(150):
            out = ep.step(teacher.act(obs))
            obs = out.observation
            dists.append(math.hypot(ep.goal[0] - ep.world.agent.x,
                                    ep.goal[1] - ep.world.agent.y))
            if out.terminal:
                terminal = out.terminal
                break
        assert terminal == "success"
        tail = dists[10:]
        assert all(a >= b - 1e-9 for a, b in zip(tail, tail[1:]))


def test_policy_interface_swappable(corridor_long):
    # a scripted policy runs through the exact same harness as the oracle
    for policy in (ConstantPolicy(0.1, 0.0),
                   ScriptedPolicy([(0.2, 0.0), (0.1, 0.2)]),
                   OracleTeacher()):
        ep = Episode(make_config(corridor_long, seed=2, obstacle_density=2.0))
        result = run_episode(ep, policy)
        assert result.outcome in ("success", "collision", "sidewalk_violation", "timeout")


def test_no_path_error_when_agent_sealed():
    # walkable plane but the goal region is walled off by obstacles
    m = generate_synthetic_map("corridor", 20.0, 3.0)
    wall = Obstacle(kind="cuboid", x=10.0, y=1.5, half_w=0.4, half_h=1.6)
    field = build_distance_field(m, [wall], (18.0, 1.5))
    w = make_world(m, 2.0, 1.5, 0.0, obstacles=[wall])
    with pytest.raises(NoPathError):
        teacher_act(field, privileged_obs(w, (18.0, 1.5)), (2.0, 1.5, 0.0))
