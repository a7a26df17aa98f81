"""Bayesian coherent point drift for colored 3D point clouds.

The source cloud is treated as a Gaussian mixture whose centroids are the
source points pushed through a kernel-smoothed displacement field and a
similarity transform. Fitting alternates three closed-form updates until
the residual variance stalls:

1. posterior match probabilities between moved source and target points,
2. the displacement field (regularized by the source Gram matrix),
3. the scale/rotation/translation via a weighted Procrustes fit, followed
   by a refresh of the residual variance.

Registration runs in normalized coordinates (both clouds centered and
scaled to unit RMS radius) so the hyperparameters are independent of the
physical units; results carry the normalization records needed to map back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

from .cloudio import NormalizationRecord, PointCloud, denormalize, normalize
from .errors import (
    DegenerateGeometryError,
    NumericalUnderflowError,
    ShapeMismatchError,
)
from .kernel import GramMatrix, build_gram, solve_spd

SIGMA2_FLOOR = 1e-8
MASS_EPS = 1e-12


@dataclass(frozen=True)
class SimilarityTransform:
    """Uniform scale, proper rotation, and translation: p -> s * R @ p + t."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = np.array(self.rotation, dtype=np.float64, copy=True)
        t = np.array(self.translation, dtype=np.float64, copy=True).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-8:
            raise ValueError("rotation must be orthogonal within 1e-8")
        if abs(float(np.linalg.det(r)) - 1.0) > 1e-8:
            raise ValueError("rotation must be proper (det +1)")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(1.0, np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map an (N, 3) array of points through the transform."""
        return self.scale * (np.asarray(points, dtype=np.float64) @ self.rotation.T) + self.translation


@dataclass(frozen=True)
class RegistrationParams:
    """Hyperparameters of the registration loop.

    beta: Gaussian kernel bandwidth, in normalized coordinates.
    lam: displacement regularization weight; larger means stiffer.
    omega: outlier probability in [0, 1).
    gamma: scales the initial residual variance.
    kappa: mixing-weight concentration; math.inf keeps weights uniform.
    tol: stop once the relative change of the residual variance drops below
        this (0 disables convergence, inf stops after one iteration).
    max_iters: iteration cap.
    use_sigma_correction: include the posterior-covariance term in the
        mixture densities and the variance update.
    """

    beta: float = 0.3
    lam: float = 50.0
    omega: float = 0.05
    gamma: float = 1.0
    kappa: float = math.inf
    tol: float = 1e-5
    max_iters: int = 300
    use_sigma_correction: bool = False

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if not 0.0 <= self.omega < 1.0:
            raise ValueError("omega must lie in [0, 1)")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass(frozen=True)
class RegistrationState:
    """All per-iteration variables, for M source and N target points.

    posterior:        (M, N) match probabilities; column sums <= 1, the
                      remainder being outlier mass.
    source_mass:      (M,) row sums of posterior (matched mass per source
                      point).
    target_mass:      (N,) column sums of posterior.
    matched_targets:  (M, 3) posterior-expected target position per source
                      point.
    mixing_weights:   (M,) mixture weights, non-negative, summing to 1.
    displacement:     (M, 3) current non-rigid offsets.
    displacement_cov: (M, M) posterior covariance of the displacement field.
    sigma2:           residual variance, floored at SIGMA2_FLOOR.
    transform:        current similarity transform.
    moved_source:     (M, 3) source points after displacement + transform.
    """

    posterior: np.ndarray
    source_mass: np.ndarray
    target_mass: np.ndarray
    matched_targets: np.ndarray
    mixing_weights: np.ndarray
    displacement: np.ndarray
    displacement_cov: np.ndarray
    sigma2: float
    transform: SimilarityTransform
    moved_source: np.ndarray


def init_state(
    source: PointCloud, target: PointCloud, params: RegistrationParams
) -> RegistrationState:
    """Start from the identity transform and zero displacement.

    The initial residual variance is gamma times the mean squared
    source/target distance per coordinate, floored at SIGMA2_FLOOR so
    coincident clouds do not divide by zero.
    """
    y = source.vertices
    x = target.vertices
    m, n = len(source), len(target)
    d2 = cdist(y, x, "sqeuclidean")
    sigma2 = max(params.gamma * float(d2.sum()) / (n * m * 3), SIGMA2_FLOOR)
    return RegistrationState(
        posterior=np.zeros((m, n)),
        source_mass=np.zeros(m),
        target_mass=np.zeros(n),
        matched_targets=y.copy(),
        mixing_weights=np.full(m, 1.0 / m),
        displacement=np.zeros((m, 3)),
        displacement_cov=np.eye(m),
        sigma2=sigma2,
        transform=SimilarityTransform.identity(),
        moved_source=y.copy(),
    )


def e_step(
    state: RegistrationState,
    source: PointCloud,
    target: PointCloud,
    params: RegistrationParams,
) -> RegistrationState:
    """Update match probabilities and the quantities derived from them.

    Each moved source point carries an isotropic Gaussian of variance
    sigma2; with omega > 0, an outlier component uniform over the target
    bounding box absorbs the remaining column mass. Source points with
    (near) zero matched mass keep their own moved position as the expected
    target.
    """
    x = target.vertices
    m = len(source)
    d2 = cdist(state.moved_source, x, "sqeuclidean")
    norm_const = (2.0 * math.pi * state.sigma2) ** -1.5
    phi = state.mixing_weights[:, None] * norm_const * np.exp(-d2 / (2.0 * state.sigma2))
    if params.use_sigma_correction:
        s = state.transform.scale
        trace_term = s * s * 3.0 * np.diagonal(state.displacement_cov)
        phi = phi * np.exp(-trace_term / (2.0 * state.sigma2))[:, None]

    col = phi.sum(axis=0)
    if params.omega == 0.0:
        if np.any(col == 0.0):
            raise NumericalUnderflowError(
                "all mixture densities vanished for at least one target point"
            )
        posterior = phi / col[None, :]
    else:
        extent = x.max(axis=0) - x.min(axis=0)
        volume = float(np.prod(extent))
        if volume <= 0.0:
            raise DegenerateGeometryError(
                "target bounding box has zero volume; cannot place the outlier component"
            )
        den = (1.0 - params.omega) * col + params.omega / volume
        posterior = (1.0 - params.omega) * phi / den[None, :]

    source_mass = posterior.sum(axis=1)
    target_mass = posterior.sum(axis=0)
    total = float(source_mass.sum())
    weak = source_mass < MASS_EPS
    safe = np.where(weak, 1.0, source_mass)
    matched = (posterior @ x) / safe[:, None]
    matched[weak] = state.moved_source[weak]
    if math.isfinite(params.kappa):
        mixing = (params.kappa + source_mass) / (params.kappa * m + total)
    else:
        mixing = np.full(m, 1.0 / m)
    return replace(
        state,
        posterior=posterior,
        source_mass=source_mass,
        target_mass=target_mass,
        matched_targets=matched,
        mixing_weights=mixing,
    )


def update_displacement(
    state: RegistrationState,
    source: PointCloud,
    gram: GramMatrix,
    params: RegistrationParams,
) -> RegistrationState:
    """Refit the smooth displacement field to the expected correspondences.

    The covariance (lam * G^-1 + (s^2/sigma2) diag(mass))^-1 is assembled
    through a Woodbury identity so the Gram matrix is never inverted and the
    single dense solve stays symmetric positive-definite (its matrix is
    I + PSD) even when individual masses vanish:

        Sigma = (G - (c/lam) G S K^-1 S G) / lam,
        K = I + (c/lam) S G S,  S = diag(sqrt(mass)),  c = s^2 / sigma2.

    The displacement is then c * Sigma @ (mass * residual), where the
    residual pulls each expected target back through the current transform.
    """
    y = source.vertices
    m = len(source)
    if gram.size != m:
        raise ShapeMismatchError(f"Gram matrix is {gram.size}x{gram.size}, cloud has {m} points")
    tr = state.transform
    c = tr.scale * tr.scale / state.sigma2
    g = gram.values
    root = np.sqrt(state.source_mass)
    weight = root[:, None] * root[None, :]
    k = (c / params.lam) * (weight * g)
    k[np.diag_indices_from(k)] += 1.0
    scaled = root[:, None] * g
    solved = solve_spd(k, scaled)
    cov = (g - (c / params.lam) * (scaled.T @ solved)) / params.lam
    cov = 0.5 * (cov + cov.T)
    residual = ((state.matched_targets - tr.translation) @ tr.rotation) / tr.scale - y
    disp = c * (cov @ (state.source_mass[:, None] * residual))
    moved = tr.apply(y + disp)
    return replace(state, displacement=disp, displacement_cov=cov, moved_source=moved)


def _procrustes_similarity(a: np.ndarray, b: np.ndarray, weights: np.ndarray | None):
    """Least-squares similarity fit b ~ scale * Q @ a + shift.

    Returns (scale, Q, shift); Q is a proper rotation. With ``weights`` None
    all points count equally.
    """
    n = a.shape[0]
    w = np.ones(n) if weights is None else weights
    total = float(w.sum())
    a_bar = w @ a / total
    b_bar = w @ b / total
    da = a - a_bar
    db = b - b_bar
    cross = (db * w[:, None]).T @ da / total
    u, _, vt = np.linalg.svd(cross)
    det = float(np.linalg.det(u @ vt))
    q = (u * np.array([1.0, 1.0, det])) @ vt
    var_a = float(w @ np.einsum("ij,ij->i", da, da)) / total
    if var_a <= 0.0:
        raise DegenerateGeometryError("point set has zero scatter; similarity fit undefined")
    scale = float(np.trace(q.T @ cross)) / var_a
    shift = b_bar - scale * (q @ a_bar)
    return scale, q, shift


def update_similarity(
    state: RegistrationState,
    source: PointCloud,
    target: PointCloud,
    params: RegistrationParams,
) -> RegistrationState:
    """Weighted-Procrustes refit of scale/rotation/translation.

    The deformed source (source + displacement) is matched against the
    expected targets with the per-point masses as weights; the moved source
    and the residual variance are then refreshed under the new transform.

    The decomposition of the total map into displacement and transform is
    then re-gauged: any similarity component left inside the displacement
    field is pulled into the transform (an exact reparametrization that
    leaves the moved cloud unchanged). Without this, the scale and a radial
    displacement field can trade off freely once the residual variance
    bottoms out, and the returned split becomes arbitrary; with it, the
    displacement holds only genuinely non-rigid deformation.
    """
    y = source.vertices
    x = target.vertices
    mass = state.source_mass
    total = float(mass.sum())
    if total < 1e-9:
        raise DegenerateGeometryError("no matched mass; cannot update the transform")
    deformed = y + state.displacement
    scale, rot, trans = _procrustes_similarity(deformed, state.matched_targets, mass)
    if scale <= 0.0:
        raise DegenerateGeometryError("estimated scale is not positive")

    disp = state.displacement
    if y.shape[0] > 1:
        gauge_scale, gauge_rot, gauge_shift = _procrustes_similarity(y, deformed, None)
        if gauge_scale > 0.0:
            disp = ((deformed - gauge_shift) @ gauge_rot) / gauge_scale - y
            trans = scale * (rot @ gauge_shift) + trans
            rot = rot @ gauge_rot
            scale = scale * gauge_scale

    new_tr = SimilarityTransform(scale, rot, trans)
    moved = new_tr.apply(y + disp)
    d2 = cdist(moved, x, "sqeuclidean")
    sigma2 = float((state.posterior * d2).sum()) / (3.0 * total)
    if params.use_sigma_correction:
        sigma2 += scale * scale * 3.0 * float(np.diagonal(state.displacement_cov).mean())
    sigma2 = max(sigma2, SIGMA2_FLOOR)
    return replace(state, transform=new_tr, moved_source=moved, sigma2=sigma2, displacement=disp)


@dataclass(frozen=True)
class RegistrationResult:
    """Everything a caller needs to reuse a finished registration.

    The transform and displacement live in normalized coordinates; the two
    records map results back into the original units of either cloud. A run
    that hit the iteration cap is returned with ``converged`` False rather
    than raised, so its best state remains usable.
    """

    transform: SimilarityTransform
    displacement: np.ndarray
    state: RegistrationState
    source_normalized: PointCloud
    target_normalized: PointCloud
    source_record: NormalizationRecord
    target_record: NormalizationRecord
    converged: bool
    iterations: int
    sigma2_history: tuple[float, ...]

    def aligned_source(self) -> PointCloud:
        """Source cloud after registration, in the target's original units."""
        moved = apply_transform(self.source_normalized, self.transform, self.displacement)
        return denormalize(moved, self.target_record)


def register(
    source: PointCloud,
    target: PointCloud,
    params: RegistrationParams | None = None,
) -> RegistrationResult:
    """Run the full loop until the residual variance stalls or the cap hits.

    Both clouds are normalized independently first; the Gram matrix is built
    once over the normalized source. The loop is free of randomness, so
    identical inputs produce bitwise-identical results.
    """
    params = params or RegistrationParams()
    src, src_rec = normalize(source)
    tgt, tgt_rec = normalize(target)
    gram = build_gram(src.vertices, params.beta)
    state = init_state(src, tgt, params)
    history = [state.sigma2]
    converged = False
    iterations = 0
    for iterations in range(1, params.max_iters + 1):
        state = e_step(state, src, tgt, params)
        state = update_displacement(state, src, gram, params)
        state = update_similarity(state, src, tgt, params)
        history.append(state.sigma2)
        if abs(history[-1] - history[-2]) / history[-2] < params.tol:
            converged = True
            break
    return RegistrationResult(
        transform=state.transform,
        displacement=state.displacement,
        state=state,
        source_normalized=src,
        target_normalized=tgt,
        source_record=src_rec,
        target_record=tgt_rec,
        converged=converged,
        iterations=iterations,
        sigma2_history=tuple(history),
    )


def apply_transform(
    source: PointCloud, transform: SimilarityTransform, displacement
) -> PointCloud:
    """Map each vertex through scale * R @ (vertex + displacement) + t.

    Colors are copied through untouched; only the geometry moves.
    """
    v = np.asarray(displacement, dtype=np.float64)
    if v.shape != source.vertices.shape:
        raise ShapeMismatchError(
            f"displacement shape {v.shape} != vertices shape {source.vertices.shape}"
        )
    return PointCloud(transform.apply(source.vertices + v), source.colors, source.id)
