import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swarmslam.export import cloud_csv, load_scan_dump, scan_dump_csv, svg
from swarmslam.geometry import Pose2D, Transform2D
from swarmslam.grid import FREE, OCCUPIED, UNKNOWN, OccupancyGrid, load_pgm, save_pgm, to_occupancy_grid
from swarmslam.metrics import point_to_walls, rmse_map, rmse_poses
from swarmslam.mission import run_mission
from swarmslam.scenarios import mission
from swarmslam.sensing import Scan

WALL = np.array([[0.0, 0.0, 4.0, 0.0]])


def test_rmse_poses_examples():
    assert rmse_poses([(1, 2)], [(1, 2)]) == 0.0
    assert rmse_poses([(3, 4)], [(0, 0)]) == pytest.approx(5.0)
    assert rmse_poses([(1, 0), (0, 0)], [(0, 0), (0, 0)]) == pytest.approx(math.sqrt(0.5))
    # poses contribute x and y only
    assert rmse_poses([Pose2D(1, 1, 3.0)], [Pose2D(1, 1, 0.0)]) == 0.0
    with pytest.raises(ValueError):
        rmse_poses([(0, 0)], [(0, 0), (1, 1)])
    with pytest.raises(ValueError):
        rmse_poses([], [])


def test_rmse_map_examples():
    assert rmse_map([[1, 0], [3, 0]], WALL) == 0.0
    assert rmse_map([[2, 0.1]], WALL) == pytest.approx(0.1)
    assert rmse_map([[4.3, 0.4]], WALL) == pytest.approx(0.5)   # beyond the endpoint
    assert rmse_map([[-0.3, -0.4]], WALL) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        rmse_map(np.empty((0, 2)), WALL)
    with pytest.raises(ValueError):
        rmse_map([[0, 0]], np.empty((0, 4)))


def brute_point_to_walls(p, walls):
    best = math.inf
    for x0, y0, x1, y1 in walls:
        dx, dy = x1 - x0, y1 - y0
        t = ((p[0] - x0) * dx + (p[1] - y0) * dy) / (dx * dx + dy * dy)
        if 0 <= t <= 1:
            d = abs(dx * (p[1] - y0) - dy * (p[0] - x0)) / math.hypot(dx, dy)
        else:
            d = min(math.hypot(p[0] - x0, p[1] - y0), math.hypot(p[0] - x1, p[1] - y1))
        best = min(best, d)
    return best


coords = st.floats(-5, 5)


@given(st.lists(st.tuples(coords, coords, coords, coords).filter(
    lambda w: math.hypot(w[2] - w[0], w[3] - w[1]) > 1e-3), min_size=1, max_size=6),
    st.lists(st.tuples(coords, coords), min_size=1, max_size=20), st.randoms())
def test_rmse_map_oracle_and_invariances(walls, pts, rnd):
    walls = np.array(walls)
    pts = np.array(pts)
    ref = np.array([brute_point_to_walls(p, walls) for p in pts])
    np.testing.assert_allclose(point_to_walls(pts, walls), ref, atol=1e-9)
    shuffled = walls[rnd.sample(range(len(walls)), len(walls))]
    flipped = shuffled[:, [2, 3, 0, 1]]
    r = rmse_map(pts, walls)
    assert rmse_map(pts, flipped) == pytest.approx(r, abs=1e-12)


@given(st.lists(st.tuples(coords, coords, coords, coords), min_size=1, max_size=10),
       st.floats(-math.pi, math.pi), coords, coords)
def test_rmse_poses_rigid_invariance(pairs, th, tx, ty):
    est = np.array([p[:2] for p in pairs])
    gt = np.array([p[2:] for p in pairs])
    t = Transform2D(th, tx, ty)
    assert rmse_poses(t.apply(est), t.apply(gt)) == pytest.approx(rmse_poses(est, gt), abs=1e-9)


def test_grid_examples():
    g = to_occupancy_grid(np.empty((0, 2)))
    assert g.count(OCCUPIED) == 0 and g.count(FREE) == 0
    g = to_occupancy_grid(np.full((5, 2), 1.23), min_hits=3)
    assert g.count(OCCUPIED) == 1
    assert g.cells[g.cell_of(1.23, 1.23)] == OCCUPIED
    g = to_occupancy_grid(np.full((2, 2), 1.23), min_hits=3)
    assert g.count(OCCUPIED) == 0
    with pytest.raises(ValueError):
        to_occupancy_grid([[0, 0]], resolution=0)


def test_grid_free_space_carving():
    pts = np.array([[1.05, 0.05]] * 3)
    org = np.zeros((3, 2)) + 0.05
    g = to_occupancy_grid(pts, org, resolution=0.1, padding=0)
    row = g.cells[g.cell_of(0.5, 0.05)[0]]
    assert g.cells[g.cell_of(1.05, 0.05)] == OCCUPIED
    assert all(row[c] == FREE for c in range(g.cell_of(0.05, 0.05)[1], g.cell_of(1.05, 0.05)[1]))


@given(st.lists(st.tuples(st.floats(0, 3), st.floats(0, 3)), min_size=1, max_size=40),
       st.lists(st.tuples(st.floats(0, 3), st.floats(0, 3)), max_size=40))
def test_grid_occupancy_is_monotone(a, b):
    a, b = np.array(a), np.array(b).reshape(-1, 2)
    origins_a = np.full_like(a, 1.5)
    both = np.vstack([a, b])
    g1 = to_occupancy_grid(a, origins_a, min_hits=2)
    g2 = to_occupancy_grid(both, np.full_like(both, 1.5), min_hits=2)
    for r, c in zip(*np.nonzero(g1.cells == OCCUPIED)):
        x = g1.origin[0] + (c + 0.5) * g1.resolution
        y = g1.origin[1] + (r + 0.5) * g1.resolution
        assert g2.cells[g2.cell_of(x, y)] == OCCUPIED


def test_pgm_all_free_and_roundtrip(tmp_path):
    g = OccupancyGrid(0.1, (0.5, -1.0), np.full((2, 2), FREE))
    save_pgm(g, tmp_path / "f.pgm")
    raw = (tmp_path / "f.pgm").read_bytes()
    assert raw.endswith(bytes([255] * 4)) and raw.startswith(b"P5\n")
    cells = np.array([[OCCUPIED, FREE, UNKNOWN], [UNKNOWN, UNKNOWN, OCCUPIED]])
    g = OccupancyGrid(0.05, (1.25, 2.5), cells)
    save_pgm(g, tmp_path / "g.pgm")
    back = load_pgm(tmp_path / "g.pgm")
    assert back.resolution == 0.05 and back.origin == (1.25, 2.5)
    np.testing.assert_array_equal(back.cells, g.cells)


def test_pgm_write_error_names_path(tmp_path):
    with pytest.raises(OSError, match="nope"):
        save_pgm(OccupancyGrid(0.1, (0, 0), np.zeros((1, 1))), tmp_path / "nope" / "x.pgm")


def test_corridor_grid_has_two_thin_bands():
    r = run_mission(mission("mission_corridor"))
    pts, origins = r.map_points(r.graph_post)
    g = to_occupancy_grid(pts, origins)
    both = 0
    xs = np.arange(0.55, 5.0, 0.1)
    for x in xs:
        col = g.cells[:, g.cell_of(x, 0.0)[1]]
        occ_y = g.origin[1] + (np.flatnonzero(col == OCCUPIED) + 0.5) * g.resolution
        low, high = occ_y[occ_y < 0.5], occ_y[occ_y >= 0.5]
        # the wall lies on a cell boundary, so a band may take either neighbour cell
        assert len(low) <= 2 and len(high) <= 2, (x, occ_y)
        assert np.all(np.abs(low - 0.0) <= 0.15 + 1e-9) and np.all(np.abs(high - 1.0) <= 0.15 + 1e-9)
        both += bool(len(low)) and bool(len(high))
    # scans every metre leave small gaps between the side-wall patches
    assert both >= 0.8 * len(xs)


def test_svg_has_one_polyline_per_drone():
    traj = {0: np.array([[0, 0], [1, 0]]), 1: np.array([[0, 1], [1, 1], [2, 1]]), 4: np.array([[3, 3], [3, 4]])}
    doc = svg(WALL, traj, np.array([[0.5, 0.5]]))
    root = ET.fromstring(doc)
    lines = root.findall(".//{http://www.w3.org/2000/svg}polyline")
    assert len(lines) == 3
    assert {p.get("id") for p in lines} == {"drone-0", "drone-1", "drone-4"}


def test_cloud_csv_and_scan_dump_roundtrip():
    assert cloud_csv([[0.5, -1.0]]) == "x,y\n0.5,-1.0\n"
    scans = {(1, 3): Scan.from_local([[1.0, 0.25], [2.0, -0.5]], Pose2D(1, 2, 0.3), (1, 3))}
    text = scan_dump_csv(scans)
    assert text.splitlines()[0] == "pose_id,x,y"
    back = load_scan_dump(text)
    np.testing.assert_allclose(back[(1 << 24) | 3], [[1.0, 0.25], [2.0, -0.5]], atol=1e-12)
    with pytest.raises(ValueError):
        load_scan_dump("a,b\n")
