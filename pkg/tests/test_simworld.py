import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from cotnav.history import AgentAction
from cotnav.occupancy import GridPose
from cotnav.raycast import traverse
from cotnav.simworld import (FormatError, apply_action, detect_target, generate_world, load_world,
                             sense)
from cotnav.value_map import ConeParams

CONE = ConeParams()

ROOM = """\
#########
#.......#
#.......#
#.......#
#S..T...#
#.......#
#.......#
#.......#
#########"""


def test_load_valid_world():
    w = load_world(ROOM)
    assert w.shape == (9, 9)
    assert w.targets == ((4, 4),)
    assert w.start.cell == (4, 1)
    assert w.to_text() == ROOM


@pytest.mark.parametrize("text", [
    "###\n#S#\n###",
    "#####\n#S.S#\n#.T.#\n#####",
    "#####\n#S.#\n#.T.#\n#####",
    "#####\n#S.x#\n#.T.#\n#####",
    "#####\n.S.T#\n#####",
])
def test_load_rejects_bad_worlds(text):
    with pytest.raises(FormatError):
        load_world(text)


def test_generate_is_deterministic():
    a, b = generate_world(7, rooms=4, size=64), generate_world(7, rooms=4, size=64)
    assert a.fingerprint() == b.fingerprint()
    assert generate_world(8).fingerprint() != a.fingerprint()


@pytest.mark.parametrize("seed", range(1, 11))
def test_generated_world_connected(seed):
    w = generate_world(seed, rooms=4, size=64)
    labels, _ = ndimage.label(~w.obstacles)
    sr, sc = w.start.cell
    assert all(labels[t] == labels[sr, sc] for t in w.targets)
    assert labels.max() == 1


def test_single_room_world():
    w = generate_world(3, rooms=1, size=32, min_separation=4)
    assert (~w.obstacles[1:-1, 1:-1]).all() or ndimage.label(~w.obstacles)[1] == 1


def test_sense_wall_two_cells_ahead():
    w = load_world("#####\n#S.##\n#..T#\n#####")
    obs = sense(w, GridPose(1.5, 1.5, 0.0), CONE, n_rays=91)
    mid = 45
    assert obs.scan.angles[mid] == 0.0
    assert obs.scan.hits[mid]
    # wall face is at x=3, 1.5 cells from the pose
    assert obs.scan.ranges[mid] == pytest.approx(1.5 * w.resolution)


def test_sense_target_behind_not_detected():
    w = load_world(ROOM)
    obs = sense(w, GridPose(6.5, 4.5, 0.0), CONE)
    assert not obs.target_detected and obs.target_cell is None
    obs = sense(w, GridPose(6.5, 4.5, math.pi), CONE)
    assert obs.target_detected and obs.target_cell == (4, 4)


def test_sense_open_corridor_misses():
    n = 60
    text = "\n".join(["#" * n, "#S" + "." * (n - 4) + "T#", "#" * n])
    w = load_world(text)
    obs = sense(w, w.start, ConeParams(max_range=40), n_rays=3)
    assert obs.scan.ranges[1] == pytest.approx(40 * w.resolution)
    assert not obs.scan.hits[1]


def test_apply_action_examples():
    w = load_world(ROOM)
    p, moved = apply_action(w, GridPose(1.5, 1.5, math.pi), AgentAction.FORWARD)
    assert not moved and p == GridPose(1.5, 1.5, math.pi)
    p, moved = apply_action(w, GridPose(3.5, 3.5, 0.0), AgentAction.TURN_LEFT)
    assert moved and p.heading == pytest.approx(math.pi / 6)
    p, moved = apply_action(w, GridPose(2.5, 4.5, 0.0), AgentAction.FORWARD)
    assert moved and (p.x, p.y) == pytest.approx((5.0, 4.5))
    p, moved = apply_action(w, GridPose(2.5, 4.5, 0.0), AgentAction.STOP)
    assert not moved and p == GridPose(2.5, 4.5, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_random_walk_stays_free_and_sensing_is_pure(seed):
    rng = np.random.default_rng(seed)
    w = generate_world(seed % 5 + 1, rooms=3, size=40)
    before = w.obstacles.copy()
    pose = w.start
    actions = list(AgentAction)
    for _ in range(40):
        obs = sense(w, pose, CONE, n_rays=15)
        if obs.target_detected:
            r, c = obs.target_cell
            ang = math.atan2(r + 0.5 - pose.y, c + 0.5 - pose.x)
            d = math.hypot(r + 0.5 - pose.y, c + 0.5 - pose.x)
            for cx, cy, _ in traverse(pose.x, pose.y, ang, d, w.width, w.height):
                if (cy, cx) == (r, c):
                    break
                assert not w.obstacles[cy, cx]
        pose, _ = apply_action(w, pose, actions[int(rng.integers(len(actions)))])
        assert w.is_free(*pose.cell)
    assert np.array_equal(before, w.obstacles)


def test_detection_exhaustive_line_of_sight():
    w = load_world("#######\n#S....#\n#.##..#\n#..T..#\n#######")
    for r in range(1, 4):
        for c in range(1, 6):
            if w.obstacles[r, c]:
                continue
            for k in range(12):
                pose = GridPose(c + 0.5, r + 0.5, k * math.pi / 6)
                cell = detect_target(w, pose, CONE)
                if cell is None:
                    continue
                ang = math.atan2(cell[0] + 0.5 - pose.y, cell[1] + 0.5 - pose.x)
                d = math.hypot(cell[0] + 0.5 - pose.y, cell[1] + 0.5 - pose.x)
                cells = [(cy, cx) for cx, cy, _ in traverse(pose.x, pose.y, ang, d, 7, 5)]
                assert not any(w.obstacles[p] for p in cells if p != cell)
