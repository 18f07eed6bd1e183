import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import example, given
from hypothesis import strategies as st

from swarmslam.explorer import (Decision, ExplorerConfig, ExplorerState, Phase, Side, axis_vector,
                                decide, directions, on_obstacle, primary_velocity, remaining,
                                secondary_velocity, set_waypoint)
from swarmslam.geometry import Pose2D
from swarmslam.scenarios import world as load_bundled
from swarmslam.sensing import (CENTER_ZONES, SensorGeometry, capture, directional_minimum,
                               reduce_capture)
from swarmslam.world import NO_HIT, TICK_DT, DroneState, NoiseModel, World, point_segment_distance, step

CFG = ExplorerConfig()


def test_config_validation():
    with pytest.raises(ValueError):
        ExplorerConfig(v_exp=0)
    with pytest.raises(ValueError):
        ExplorerConfig(max_waypoints=-1)
    assert ExplorerConfig(steering_priority="RIGHT").steering_priority is Side.RIGHT


def test_secondary_velocity_corridor():
    assert secondary_velocity(0.5, 0.5, CFG) == 0.0
    assert secondary_velocity(0.6, 0.4, CFG) == pytest.approx(0.2)  # move left, towards the centre
    assert secondary_velocity(NO_HIT, NO_HIT, CFG) == 0.0
    assert secondary_velocity(2.0, 3.0, CFG) == 0.0  # both beyond side_wall_range


def test_secondary_velocity_single_wall_holds_d_wall():
    # positive is body-left: a left wall at 0.7 m pulls the drone left
    assert secondary_velocity(0.7, NO_HIT, CFG) == pytest.approx(0.4)
    assert secondary_velocity(0.3, NO_HIT, CFG) == pytest.approx(-0.4)
    assert secondary_velocity(NO_HIT, 0.7, CFG) == pytest.approx(-0.4)
    assert secondary_velocity(NO_HIT, 0.3, CFG) == pytest.approx(0.4)


@given(st.floats(0.05, 0.999), st.sampled_from(["left", "right"]))
def test_single_wall_command_reduces_error(d, side):
    v = secondary_velocity(d, NO_HIT, CFG) if side == "left" else secondary_velocity(NO_HIT, d, CFG)
    # moving left changes the left distance by -v and the right one by +v
    d_next = d - v * 0.01 if side == "left" else d + v * 0.01
    assert abs(d_next - CFG.d_wall) <= abs(d - CFG.d_wall)


def test_primary_velocity_examples():
    assert primary_velocity(1.0, 0.8, 1 / 15, replace(CFG, v_exp=0.8)) == 0.8
    assert primary_velocity(0.375, 0.8, 1 / 15, replace(CFG, v_exp=0.8)) == pytest.approx(0.48)
    assert primary_velocity(1.0, 0.0, 1 / 15, replace(CFG, v_exp=0.8)) == pytest.approx(0.5 / 15)
    assert primary_velocity(0.0, 0.8, 1 / 15, replace(CFG, v_exp=0.8)) == pytest.approx(0.08)  # slows uncapped
    with pytest.raises(ValueError):
        primary_velocity(-0.1, 0, 0.1, CFG)


@given(st.floats(0, 3), st.floats(0, 1), st.floats(0.01, 0.2), st.sampled_from([0.2, 0.4, 0.8]))
@example(0.6875, 1.0, 0.125, 0.2)
def test_acceleration_cap(d_w, last, dt, v_exp):
    cfg = replace(CFG, v_exp=v_exp)
    v = primary_velocity(d_w, last, dt, cfg)
    assert (v - last) / dt <= cfg.a_exp + 1e-9
    # the slow-down ramp peaks at 1.1 v_exp just inside d_slow
    assert v <= 1.1 * v_exp + 1e-12


def state_at(axis=0, cfg=CFG, pose=Pose2D(0, 0, 0)):
    return set_waypoint(ExplorerState(axis, np.zeros(2), np.zeros(2)), pose, cfg)


def test_turn_choices():
    s = state_at()
    assert on_obstacle(s, 0.4, NO_HIT, NO_HIT, CFG).axis == 1   # left priority, left free
    assert on_obstacle(s, 0.4, 0.5, NO_HIT, CFG).axis == 3      # left blocked -> right
    assert on_obstacle(s, 0.4, NO_HIT, NO_HIT, replace(CFG, steering_priority=Side.RIGHT)).axis == 3
    dead = on_obstacle(s, 0.4, 0.5, 0.5, CFG)
    assert dead.phase is Phase.LANDED


def test_decide_turns_and_resets_waypoint():
    s = state_at()
    dist = [0.5, NO_HIT, NO_HIT, 0.5]  # front and right walls
    dec = decide(s, Pose2D(0, 0, 0), dist, TICK_DT, CFG)
    assert dec.event == "turn" and dec.state.axis == 1
    np.testing.assert_allclose(dec.state.next_waypoint, [0, 1])
    assert dec.velocity == (0.0, 0.0)


def test_decide_waypoint_and_landed():
    s = state_at()
    dec = decide(s, Pose2D(0.97, 0, 0), [NO_HIT] * 4, TICK_DT, CFG)
    assert dec.event == "waypoint" and dec.state.n_waypoints == 1
    dec = decide(s, Pose2D(0, 0, 0), [0.3, 0.5, NO_HIT, 0.5], TICK_DT, CFG)
    assert dec.event == "landed" and dec.state.phase is Phase.LANDED
    assert decide(dec.state, Pose2D(0, 0, 0), [NO_HIT] * 4, TICK_DT, CFG).velocity == (0.0, 0.0)


def test_decide_velocity_in_body_frame():
    s = replace(state_at(axis=1), last_velocity=0.4)
    dec = decide(s, Pose2D(0, 0, 0), [NO_HIT, NO_HIT, 0.6, 0.4], TICK_DT, CFG)
    # primary axis is body +y; its left is body -x; right wall (sensor 2) at 0.6 -> 'left' of axis 1 is sensor 2
    front, left, back, right = directions([NO_HIT, NO_HIT, 0.6, 0.4], 1)
    assert (front, left, right) == (NO_HIT, 0.6, NO_HIT)
    v_s = secondary_velocity(left, right, CFG)
    assert dec.velocity == pytest.approx((-v_s, 0.4))


def test_initial_axis_sets_first_direction():
    a = ExplorerState.start(Pose2D(0, 0, 0), replace(CFG, initial_axis=0))
    b = ExplorerState.start(Pose2D(0, 0, 0), replace(CFG, initial_axis=1))
    np.testing.assert_allclose(a.direction, [1, 0])
    np.testing.assert_allclose(b.direction, [0, 1], atol=1e-15)
    assert remaining(b, Pose2D(0, 0.25, 0)) == pytest.approx(0.75)


def fly(world, start, cfg, seconds, noise=None, seed=0):
    """Closed loop without scanning; returns true positions and the final state."""
    noise = noise or NoiseModel.noiseless()
    rng = np.random.default_rng(seed)
    geom = SensorGeometry()
    st_ = DroneState.at(start)
    ex = ExplorerState.start(start, cfg)
    track, clearance = [], []
    for _ in range(int(seconds / TICK_DT)):
        px, ok = capture(world, st_.true_pose, geom, noise, rng)
        d, v = reduce_capture(px, ok)
        dec = decide(ex, st_.est_pose, directional_minimum(d, v), TICK_DT, cfg,
                     directional_minimum(d, v, CENTER_ZONES))
        ex = dec.state
        if dec.event == "landed":
            break
        if dec.event == "waypoint":
            ex = set_waypoint(ex, st_.est_pose, cfg)
        st_ = step(replace(st_, velocity_cmd=dec.velocity), world, TICK_DT, noise, rng)
        track.append(st_.true_pose.xy)
        clearance.append(point_segment_distance(st_.true_pose.xy, world.walls).min())
    return np.array(track), np.array(clearance), ex


def test_corridor_centering_converges():
    w = World(np.array([[-1, -0.5, 200, -0.5], [-1, 0.5, 200, 0.5], [-1, -0.5, -1, 0.5]], float),
              [Pose2D(0, 0.15, 0)], (-2, -1, 201, 1))
    # closer than ~0.22 m the outer front columns graze the side wall inside the turn threshold
    track, _, _ = fly(w, Pose2D(0, 0.15, 0), replace(CFG, v_exp=0.4), 40)
    tail = np.abs(track[len(track) // 2:, 1])
    assert tail.max() < 0.02


def test_clearance_in_bundled_mazes():
    for name in ("square_maze", "ring_maze"):
        w = load_bundled(name)
        _, clearance, _ = fly(w, w.start_poses[0], replace(CFG, v_exp=0.8), 60)
        assert clearance.min() >= CFG.d_wall / 2


def loop_direction(track, center):
    rel = track - center
    ang = np.unwrap(np.arctan2(rel[:, 1], rel[:, 0]))
    return np.sign(ang[-1] - ang[0])


def test_opposite_priorities_circle_opposite_ways():
    w = load_bundled("square_maze")
    left, _, _ = fly(w, w.start_poses[0], replace(CFG, steering_priority=Side.LEFT), 40)
    right, _, _ = fly(w, w.start_poses[1], replace(CFG, steering_priority=Side.RIGHT), 40)
    c = np.array([2.0, 2.0])
    assert loop_direction(left, c) == 1          # counter-clockwise
    assert loop_direction(right, c) == -1        # clockwise


def test_dead_end_lands():
    w = load_bundled("corridor")
    _, _, ex = fly(w, w.start_poses[0], CFG, 60)
    assert ex.phase is Phase.LANDED
