import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import line_cells
from topnav.gridmap import (
    REAL_GRID, SIM_GRID, CostGrid, GridSpec, Pose, boundary_cells, cell_centers_world,
    cell_to_world, raster_line, to_robot_frame, to_world_frame, world_to_cell, wrap_angle,
)

finite = st.floats(-50, 50, allow_nan=False)
angles = st.floats(-20, 20, allow_nan=False)
poses = st.builds(Pose, finite, finite, angles)
cells = st.tuples(st.integers(-30, 30), st.integers(-30, 30))


def test_presets_match_window_extents():
    # 1.2 m x 1.5 m at 0.15 m, robot 0.45 m from the back edge and centered laterally
    assert (SIM_GRID.width_cells, SIM_GRID.height_cells, SIM_GRID.base_cell) == (8, 10, (3, 5))
    assert SIM_GRID.shape == (10, 8)
    assert (REAL_GRID.width_cells, REAL_GRID.height_cells, REAL_GRID.base_cell) == (20, 20, (0, 10))


@pytest.mark.parametrize("kw", [
    dict(width_cells=8, height_cells=10, resolution_m=0.0, base_cell=(0, 0)),
    dict(width_cells=1, height_cells=10, resolution_m=0.1, base_cell=(0, 0)),
    dict(width_cells=8, height_cells=10, resolution_m=0.1, base_cell=(8, 0)),
])
def test_invalid_specs_rejected(kw):
    with pytest.raises(ValueError):
        GridSpec(**kw)


def test_cost_grid_rejects_bad_values():
    with pytest.raises(ValueError):
        CostGrid(SIM_GRID, np.zeros((8, 10)))
    bad = np.zeros(SIM_GRID.shape)
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        CostGrid(SIM_GRID, bad)


@given(angles)
def test_wrap_angle_range_and_equivalence(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_wrap_angle_boundary():
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)


@given(poses, st.tuples(finite, finite))
def test_frame_round_trip(pose, p):
    back = to_world_frame(to_robot_frame(p, pose), pose)
    assert np.allclose(back, p, atol=1e-9)


def test_robot_frame_axes():
    pose = Pose(1.0, 2.0, math.pi / 2)
    # a point north of a north-facing robot is straight ahead; west of it is to the left
    assert np.allclose(to_robot_frame((1.0, 3.0), pose), (1.0, 0.0))
    assert np.allclose(to_robot_frame((0.0, 2.0), pose), (0.0, 1.0))


@given(poses)
def test_cell_world_round_trip(pose):
    for cell in [(0, 0), SIM_GRID.base_cell, (7, 9), (4, 2)]:
        assert world_to_cell(cell_to_world(cell, pose, SIM_GRID), pose, SIM_GRID) == cell


def test_world_to_cell_outside_window():
    pose = Pose(0, 0, 0)
    assert world_to_cell((-1.0, 0.0), pose, SIM_GRID) is None
    assert world_to_cell((0.0, 0.0), pose, SIM_GRID) == SIM_GRID.base_cell


def test_cell_centers_world_shape_and_base():
    pose = Pose(2.0, -1.0, 0.3)
    centers = cell_centers_world(pose, SIM_GRID)
    assert centers.shape == (10, 8, 2)
    bx, by = SIM_GRID.base_cell
    assert np.allclose(centers[by, bx], (2.0, -1.0))


@given(cells, cells)
def test_raster_line_matches_exact_oracle(c0, c1):
    assert raster_line(c0, c1) == line_cells(c0, c1)


@given(cells, cells)
def test_raster_line_properties(c0, c1):
    line = raster_line(c0, c1)
    assert line[0] == c0 and line[-1] == c1
    assert len(line) == max(abs(c1[0] - c0[0]), abs(c1[1] - c0[1])) + 1
    for a, b in zip(line, line[1:]):
        assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1
    assert set(line) == set(raster_line(c1, c0))


def test_raster_line_frozen_examples():
    assert raster_line((3, 5), (7, 9)) == [(3, 5), (4, 6), (5, 7), (6, 8), (7, 9)]
    # half-way minor steps round away from the start
    assert raster_line((0, 0), (4, 1)) == [(0, 0), (1, 0), (2, 1), (3, 1), (4, 1)]
    assert raster_line((2, 2), (2, 2)) == [(2, 2)]


def test_boundary_cells_row_major_and_count():
    cells_ = boundary_cells(SIM_GRID)
    assert len(cells_) == 2 * 8 + 2 * 10 - 4
    assert cells_ == sorted(cells_, key=lambda c: c[1] * 8 + c[0])
