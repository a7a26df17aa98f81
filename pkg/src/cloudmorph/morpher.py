"""Build a blended morph cloud from a completed registration.

The morph inherits the source cardinality: for every source point, the
registration's posterior supplies an expected matching position and color
on the target side, and geometry and color are blended with the same
weight. This keeps the blend well-defined even when the two clouds have
different point counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .bcpd import RegistrationState, SimilarityTransform, apply_transform
from .cloudio import PointCloud
from .errors import ShapeMismatchError

WEAK_MASS = 1e-12


@dataclass(frozen=True)
class MorphConfig:
    """Blend weight: 1.0 keeps the aligned source, 0.0 keeps the target side."""

    alpha: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


def aligned_colored_source(
    source: PointCloud, transform: SimilarityTransform, displacement
) -> PointCloud:
    """Deform and transform the source geometry while keeping its colors.

    This is exactly :func:`cloudmorph.bcpd.apply_transform`, exposed as a
    named pipeline stage so the aligned cloud can be saved or inspected
    before blending.
    """
    return apply_transform(source, transform, displacement)


def correspondence_targets(
    state: RegistrationState, target: PointCloud
) -> tuple[np.ndarray, np.ndarray]:
    """Expected matching target position and color for every source point.

    Positions come straight from the registration state; colors are the
    match-probability-weighted mean of the target colors. Source points
    with (near) zero matched mass fall back to the target vertex nearest
    their moved position, ties broken by lowest index, for both position
    and color.
    """
    posterior = state.posterior
    if posterior.shape[1] != len(target):
        raise ShapeMismatchError(
            f"posterior has {posterior.shape[1]} target columns, cloud has {len(target)}"
        )
    mass = state.source_mass
    weak = mass < WEAK_MASS
    safe = np.where(weak, 1.0, mass)
    coords = state.matched_targets.copy()
    colors = (posterior @ target.colors) / safe[:, None]
    if np.any(weak):
        d2 = cdist(state.moved_source[weak], target.vertices, "sqeuclidean")
        nearest = d2.argmin(axis=1)
        coords[weak] = target.vertices[nearest]
        colors[weak] = target.colors[nearest]
    return coords, colors


def morph(
    pst1: PointCloud,
    corr_coords: np.ndarray,
    corr_colors: np.ndarray,
    config: MorphConfig,
    target_id: str = "",
) -> PointCloud:
    """Convex-blend the aligned source with its correspondence targets.

    vertex = alpha * aligned + (1 - alpha) * correspondence, and likewise
    for colors, which are clamped to [0, 1] as a safety net against
    floating-point drift. The output id is "morph_<src>_<tgt>_<alpha>".
    """
    coords = np.asarray(corr_coords, dtype=np.float64)
    colors = np.asarray(corr_colors, dtype=np.float64)
    if coords.shape != pst1.vertices.shape:
        raise ShapeMismatchError(
            f"correspondence coords shape {coords.shape} != vertices {pst1.vertices.shape}"
        )
    if colors.shape != pst1.colors.shape:
        raise ShapeMismatchError(
            f"correspondence colors shape {colors.shape} != colors {pst1.colors.shape}"
        )
    a = config.alpha
    verts = a * pst1.vertices + (1.0 - a) * coords
    cols = np.clip(a * pst1.colors + (1.0 - a) * colors, 0.0, 1.0)
    return PointCloud(verts, cols, f"morph_{pst1.id}_{target_id}_{a:g}")
