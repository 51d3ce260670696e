"""
Raster and table artifacts: decision regions, Husimi Q spheres and output
spectra.

Rasters are Pillow images saved as binary PPM (P6).
"""

import csv
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image
from scipy.special import comb

from qudit_reupload.circuit import CircuitSpec, forward_batch, output_spectrum
from qudit_reupload.errors import UnsupportedOperationError
from qudit_reupload.learn import label_overlaps
from qudit_reupload.logger import get_logger
from qudit_reupload.qudit_core import QuditState

logger = get_logger()

MIN_HUSIMI_RESOLUTION = 16

# class label -> RGB, labels beyond 9 wrap around
PALETTE = [
    (31, 119, 180),
    (255, 127, 14),
    (44, 160, 44),
    (214, 39, 40),
    (148, 103, 189),
    (140, 86, 75),
    (227, 119, 194),
    (127, 127, 127),
    (188, 189, 34),
    (23, 190, 207),
]


def region_labels(
    spec: CircuitSpec,
    params,
    grid: int,
    inverse_assignment: Optional[Sequence[int]] = None,
    label_states: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Predicted class for every pixel of a grid x grid raster over [-1, 1]^2.

    Row 0 is x2 = +1, column 0 is x1 = -1. The argmax basis index is mapped
    back to a class label through inverse_assignment when given. With
    label_states the pixel takes the label of the closest label state.
    """
    if spec.input_dim != 2:
        raise UnsupportedOperationError(
            f"Decision regions need a two-dimensional input, got D={spec.input_dim}"
        )
    if grid < 1:
        raise ValueError(f"Grid must be positive, got {grid}")

    x1 = np.linspace(-1.0, 1.0, grid)
    x2 = np.linspace(1.0, -1.0, grid)
    rows, cols = np.meshgrid(x2, x1, indexing="ij")
    inputs = np.column_stack([cols.ravel(), rows.ravel()])
    states, _ = forward_batch(spec, params, inputs)
    if label_states is not None:
        labels = np.argmax(label_overlaps(states, label_states), axis=1)
    else:
        labels = np.argmax(np.abs(states) ** 2, axis=1)
    if inverse_assignment is not None:
        labels = np.asarray(inverse_assignment)[labels]
    return labels.reshape(grid, grid)


def render_regions(
    spec: CircuitSpec,
    params,
    grid: int,
    inverse_assignment: Optional[Sequence[int]] = None,
    label_states: Optional[np.ndarray] = None,
) -> Image.Image:
    labels = region_labels(spec, params, grid, inverse_assignment, label_states)
    palette = np.array(PALETTE, dtype=np.uint8)
    pixels = palette[labels % len(PALETTE)]
    return Image.fromarray(pixels)


def husimi_grid(resolution: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pixel-center angles of the equirectangular sphere raster.

    Returns:
        (polar angles of the resolution rows, azimuths of the 2 * resolution
        columns); polar runs 0..pi top to bottom, azimuth -pi..pi left to right
    """
    polar = np.pi * (np.arange(resolution) + 0.5) / resolution
    azimuth = -np.pi + 2 * np.pi * (np.arange(2 * resolution) + 0.5) / (2 * resolution)
    return polar, azimuth


def husimi_q(state: QuditState, resolution: int) -> np.ndarray:
    """
    |<coherent(polar, azimuth)|psi>|^2 on the sphere raster, scaled to max 1.

    Returns:
        Array of shape (resolution, 2 * resolution)
    """
    if resolution < MIN_HUSIMI_RESOLUTION:
        raise ValueError(
            f"Husimi resolution must be >= {MIN_HUSIMI_RESOLUTION}, got {resolution}"
        )
    d = state.d
    k = np.arange(d)
    polar, azimuth = husimi_grid(resolution)

    # coherent amplitudes factor into a polar part and an azimuthal phase
    magnitudes = (
        np.sqrt(comb(d - 1, k))
        * np.cos(polar[:, None] / 2) ** (d - 1 - k)
        * np.sin(polar[:, None] / 2) ** k
    )
    phases = np.exp(-1j * azimuth[:, None] * k)
    overlaps = np.einsum("pk,ak,k->pa", magnitudes, phases, state.amplitudes)
    q = np.abs(overlaps) ** 2
    return q / q.max()


def render_husimi(state: QuditState, resolution: int) -> Image.Image:
    q = husimi_q(state, resolution)
    gray = np.round(255 * q).astype(np.uint8)
    return Image.fromarray(gray).convert("RGB")


def raster_second_moments(q: np.ndarray) -> np.ndarray:
    """
    Principal variances of a sphere raster in the plane tangent to its mean
    direction, ascending.

    Each pixel is weighted by its value times its solid angle.
    """
    resolution = q.shape[0]
    polar, azimuth = husimi_grid(resolution)
    theta, phi = np.meshgrid(polar, azimuth, indexing="ij")
    points = np.stack(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)],
        axis=-1,
    ).reshape(-1, 3)
    weights = (q * np.sin(theta)).ravel()
    weights = weights / weights.sum()

    mean = weights @ points
    direction = mean / np.linalg.norm(mean)
    # any vector not parallel to the mean completes a tangent basis
    helper = np.eye(3)[np.argmin(np.abs(direction))]
    first = np.cross(direction, helper)
    first /= np.linalg.norm(first)
    second = np.cross(direction, first)

    tangent = points @ np.column_stack([first, second])
    centered = tangent - weights @ tangent
    covariance = (centered * weights[:, None]).T @ centered
    return np.linalg.eigvalsh(covariance)


def save_ppm(image: Image.Image, path: str):
    image.save(path, format="PPM")
    logger.success(f"Wrote {image.width}x{image.height} raster to {path}")


def write_spectrum_csv(path: str, rows: List[Tuple[float, float]]):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["frequency", "magnitude"])
        for frequency, magnitude in rows:
            writer.writerow([f"{frequency:.17g}", f"{magnitude:.17g}"])
    logger.success(f"Wrote {len(rows)} spectrum rows to {path}")


def spectrum(spec: CircuitSpec, params, grid: int, path: str) -> List[Tuple[float, float]]:
    rows = output_spectrum(spec, params, grid)
    write_spectrum_csv(path, rows)
    return rows
