"""Rasterize world states into appearance + depth-analog grids.

Appearance is a 3-channel 16x16 color grid. Discs and rectangles are drawn
with per-cell coverage shading so rendered positions stay smooth under
sub-cell motion (an inverse-dynamics policy could not recover actions from
hard-quantized cells). The depth channel is 1 minus the normalized Euclidean
distance transform of the occupancy mask, capped at an 8-cell horizon, so
occupied cells read 1.0 and far-away cells fade to 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .world import (
    GRID,
    SWITCH_X,
    SWITCH_Y_HI,
    SWITCH_Y_LO,
    WorldState,
    switch_handle_pos,
)

DEPTH_HORIZON_CELLS = 8.0
GRIPPER_RADIUS = 0.035
HANDLE_RADIUS = 0.035
HANDLE_COLOR = (0.85, 0.85, 0.2)
TRACK_COLOR = (0.25, 0.25, 0.25)
ZONE_COLORS = {"box": (0.35, 0.22, 0.05), "tray": (0.05, 0.28, 0.30)}
GRIPPER_OPEN_COLOR = (0.55, 0.55, 0.55)
GRIPPER_CLOSED_COLOR = (0.95, 0.95, 0.95)

_cell = 1.0 / GRID
_centers = (np.arange(GRID) + 0.5) * _cell
_CX, _CY = np.meshgrid(_centers, _centers, indexing="xy")  # grid[row, col]; row 0 = y near 0


@dataclass(frozen=True)
class Observation:
    appearance: np.ndarray  # (3, H, W) float32 in [0,1]
    depth: np.ndarray  # (1, H, W) float32 in [0,1]

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.appearance, self.depth], axis=0)


def obs_from_stacked(grid: np.ndarray) -> Observation:
    return Observation(appearance=grid[:3].copy(), depth=grid[3:4].copy())


def _disc_coverage(cx: float, cy: float, radius: float) -> np.ndarray:
    d = np.hypot(_CX - cx, _CY - cy)
    return np.clip((radius + 0.5 * _cell - d) / _cell, 0.0, 1.0)


def _rect_coverage(x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    # Per-cell overlap fraction with the axis-aligned rectangle.
    lo_x = np.clip(x1, None, _CX + 0.5 * _cell) - np.clip(x0, _CX - 0.5 * _cell, None)
    lo_y = np.clip(y1, None, _CY + 0.5 * _cell) - np.clip(y0, _CY - 0.5 * _cell, None)
    return np.clip(lo_x / _cell, 0, 1) * np.clip(lo_y / _cell, 0, 1)


def _paint(app: np.ndarray, cov: np.ndarray, color: tuple[float, float, float]) -> None:
    for ch in range(3):
        app[ch] = app[ch] * (1.0 - cov) + color[ch] * cov


def occupancy_mask(state: WorldState) -> np.ndarray:
    """Cells covered (>= 0.5) by a dynamic entity: objects, handle, gripper."""
    cov = np.zeros((GRID, GRID))
    for oid, x, y in state.objects:
        cov = np.maximum(cov, _disc_coverage(x, y, state.layout.object_radius[oid]))
    hx, hy = switch_handle_pos(state.switch_level)
    cov = np.maximum(cov, _disc_coverage(hx, hy, HANDLE_RADIUS))
    cov = np.maximum(cov, _disc_coverage(state.gripper[0], state.gripper[1], GRIPPER_RADIUS))
    return cov >= 0.5


def depth_from_occupancy(mask: np.ndarray) -> np.ndarray:
    """1 - min(EDT, horizon)/horizon; all zeros when nothing is occupied."""
    if not mask.any():
        return np.zeros((1, *mask.shape), dtype=np.float32)
    edt = ndimage.distance_transform_edt(~mask)
    depth = 1.0 - np.minimum(edt, DEPTH_HORIZON_CELLS) / DEPTH_HORIZON_CELLS
    return depth[None].astype(np.float32)


def render(state: WorldState) -> Observation:
    app = np.zeros((3, GRID, GRID))
    for zone in state.layout.zones.values():
        _paint(app, _rect_coverage(zone.x0, zone.y0, zone.x1, zone.y1), ZONE_COLORS[zone.name])
    track_half = 0.012
    _paint(
        app,
        _rect_coverage(SWITCH_X - track_half, SWITCH_Y_LO - 0.02, SWITCH_X + track_half, SWITCH_Y_HI + 0.02),
        TRACK_COLOR,
    )
    for oid, x, y in state.objects:
        _paint(app, _disc_coverage(x, y, state.layout.object_radius[oid]), state.layout.object_color[oid])
    hx, hy = switch_handle_pos(state.switch_level)
    _paint(app, _disc_coverage(hx, hy, HANDLE_RADIUS), HANDLE_COLOR)
    color = GRIPPER_CLOSED_COLOR if state.gripper_closed else GRIPPER_OPEN_COLOR
    _paint(app, _disc_coverage(state.gripper[0], state.gripper[1], GRIPPER_RADIUS), color)
    depth = depth_from_occupancy(occupancy_mask(state))
    return Observation(appearance=np.clip(app, 0, 1).astype(np.float32), depth=depth)
