"""Raster renders: top-down map, synthetic first-person panel, trajectories."""

from __future__ import annotations

import io
import math
from pathlib import Path

import numpy as np
from PIL import Image

from .occupancy import CellState, GridPose, OccupancyGrid

EGO_WIDTH, EGO_HEIGHT = 256, 144

_TOPDOWN_COLORS = {
    CellState.UNKNOWN: (32, 32, 32),
    CellState.FREE: (255, 255, 255),
    CellState.OBSTACLE: (128, 128, 128),
}


def save_gray(img: np.ndarray, path: str | Path):
    """Write a 2-D uint8 array as binary PGM (P5)."""
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="L").save(path, format="PPM")


def save_rgb(img: np.ndarray, path: str | Path):
    """Write an HxWx3 uint8 array as binary PPM (P6)."""
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="RGB").save(path, format="PPM")


def png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    mode = "L" if img.ndim == 2 else "RGB"
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def _draw_line(img, x0, y0, x1, y1, color, scale):
    n = max(2, int(math.hypot(x1 - x0, y1 - y0) * scale * 2))
    h, w = img.shape[:2]
    for s in np.linspace(0.0, 1.0, n):
        px = int((x0 + s * (x1 - x0)) * scale)
        py = int((y0 + s * (y1 - y0)) * scale)
        if 0 <= px < w and 0 <= py < h:
            img[py, px] = color


def topdown_render(grid: OccupancyGrid, pose: GridPose, scale: int = 4) -> np.ndarray:
    """Obstacle map in gray with the agent and a heading arrow in red."""
    img = np.zeros(grid.shape + (3,), dtype=np.uint8)
    for state, color in _TOPDOWN_COLORS.items():
        img[grid.cells == state] = color
    img = img.repeat(scale, axis=0).repeat(scale, axis=1)
    red = (220, 30, 30)
    length = 6.0
    hx = pose.x + length * math.cos(pose.heading)
    hy = pose.y + length * math.sin(pose.heading)
    _draw_line(img, pose.x, pose.y, hx, hy, red, scale)
    for side in (+1, -1):
        a = pose.heading + math.pi + side * math.radians(30)
        _draw_line(img, hx, hy, hx + 2.5 * math.cos(a), hy + 2.5 * math.sin(a), red, scale)
    cx, cy = int(pose.x * scale), int(pose.y * scale)
    img[max(0, cy - 2):cy + 3, max(0, cx - 2):cx + 3] = red
    return img


def blank_image(height: int = 256, width: int = 256) -> np.ndarray:
    return np.zeros((height, width, 3), dtype=np.uint8)


def egocentric_render(angles: np.ndarray, ranges: np.ndarray, max_range: float,
                      theta_fov: float, target_bearing: float | None = None,
                      width: int = EGO_WIDTH, height: int = EGO_HEIGHT) -> np.ndarray:
    """Column-per-bearing depth panel.

    Columns run from the left edge of the view (+fov/2) to the right edge.
    Walls are drawn with height inversely proportional to distance and
    shaded darker with depth; a visible target gets a red marker.
    """
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[: height // 2] = (60, 60, 80)
    img[height // 2:] = (110, 95, 80)
    if len(angles) == 0:
        return img
    col_angles = np.linspace(theta_fov / 2, -theta_fov / 2, width)
    order = np.argsort(angles)
    depth = np.interp(col_angles, angles[order], ranges[order])
    rel = np.clip(depth / max_range, 0.0, 1.0)
    wall_h = np.clip((height * 0.1) / np.maximum(depth, 1e-3), 0, height // 2).astype(int)
    shade = (220 * (1.0 - rel) + 20).astype(np.uint8)
    mid = height // 2
    for j in range(width):
        h = wall_h[j]
        img[mid - h:mid + h, j] = shade[j]
    if target_bearing is not None:
        j = int(round((theta_fov / 2 - target_bearing) / theta_fov * (width - 1)))
        j0, j1 = max(0, j - 4), min(width, j + 5)
        img[mid + 2:mid + 14, j0:j1] = (230, 20, 20)
    return img


def trajectory_render(obstacles: np.ndarray, trajectory: list, targets: list,
                      scale: int = 4) -> np.ndarray:
    """Ground-truth layout with the path in blue, start green, targets red."""
    img = np.where(obstacles[..., None], np.uint8(90), np.uint8(245)).astype(np.uint8)
    img = np.repeat(img, 3, axis=2)
    img = img.repeat(scale, axis=0).repeat(scale, axis=1)
    for r, c in targets:
        img[r * scale:(r + 1) * scale, c * scale:(c + 1) * scale] = (220, 20, 20)
    blue = (30, 60, 220)
    for (x0, y0, _), (x1, y1, _) in zip(trajectory, trajectory[1:]):
        _draw_line(img, x0, y0, x1, y1, blue, scale)
    if trajectory:
        x, y = trajectory[0][0], trajectory[0][1]
        cx, cy = int(x * scale), int(y * scale)
        img[max(0, cy - 2):cy + 3, max(0, cx - 2):cx + 3] = (20, 170, 40)
        x, y = trajectory[-1][0], trajectory[-1][1]
        cx, cy = int(x * scale), int(y * scale)
        img[max(0, cy - 2):cy + 3, max(0, cx - 2):cx + 3] = blue
    return img
