"""Pinhole cameras, relative poses, and epipolar residuals.

Conventions used throughout the package:

* world-to-camera extrinsics: ``X_cam = R @ X_world + t``
* pixel coordinates are ``(u, v) = (column, row)``; the integer array index
  is the coordinate (no half-pixel offset), so the principal point pixel
  unprojects to the optical axis
* depth is the camera-frame z coordinate, in meters, positive in front
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-5
MIN_DEPTH = 1e-9
MIN_BASELINE = 1e-9


class BehindCameraError(ValueError):
    """Projection target has non-positive depth in the target camera."""


class DegenerateBaselineError(ValueError):
    """Camera pair with (near-)zero translation has no essential matrix."""


def _as_rotation(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise ValueError(f"rotation shape {R.shape}, wanted (3, 3)")
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err > ORTHO_TOL:
        raise ValueError(f"rotation not orthonormal, max |R^T R - I| = {err:.3e}")
    if abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
        raise ValueError(f"rotation determinant {np.linalg.det(R):.6f} != 1")
    R = R.copy()
    R.flags.writeable = False
    return R


@dataclass(frozen=True)
class CameraModel:
    """Calibrated pinhole camera with world-to-camera extrinsics."""

    fx: float
    fy: float
    cx: float
    cy: float
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        object.__setattr__(self, "R", _as_rotation(self.R))
        t = np.asarray(self.t, dtype=np.float64).reshape(3).copy()
        t.flags.writeable = False
        object.__setattr__(self, "t", t)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @property
    def K_inv(self) -> np.ndarray:
        return np.array([[1.0 / self.fx, 0.0, -self.cx / self.fx],
                         [0.0, 1.0 / self.fy, -self.cy / self.fy],
                         [0.0, 0.0, 1.0]])

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.R.T @ self.t

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.R.T + self.t

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return (pts - self.t) @ self.R


@dataclass(frozen=True)
class RelativePose:
    """Pose of a target camera relative to a reference camera."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "R", _as_rotation(self.R))
        t = np.asarray(self.t, dtype=np.float64).reshape(3).copy()
        t.flags.writeable = False
        object.__setattr__(self, "t", t)

    @classmethod
    def from_cameras(cls, ref: CameraModel, tgt: CameraModel) -> "RelativePose":
        R_rel = tgt.R @ ref.R.T
        t_rel = tgt.t - R_rel @ ref.t
        return cls(R=R_rel, t=t_rel)

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.t))


@dataclass(frozen=True)
class EssentialMatrix:
    """Essential matrix of a camera pair, optionally baseline-normalized."""

    matrix: np.ndarray
    unit_baseline: bool = False

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"essential matrix shape {m.shape}")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: skew(v) @ w == cross(v, w)."""
    x, y, z = np.asarray(v, dtype=np.float64).reshape(3)
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def essential_from_poses(ref: CameraModel, tgt: CameraModel,
                         unit_baseline: bool = False) -> EssentialMatrix:
    """Essential matrix [t_rel]x R_rel of the pair (ref, tgt).

    With `unit_baseline` the translation is scaled to unit length first,
    which makes epipolar residuals comparable across pairs with different
    baselines.  Raises DegenerateBaselineError for a (near-)zero baseline.
    """
    rel = RelativePose.from_cameras(ref, tgt)
    if rel.baseline <= MIN_BASELINE:
        raise DegenerateBaselineError(
            f"baseline {rel.baseline:.3e} below {MIN_BASELINE:.0e}")
    t = rel.t / rel.baseline if unit_baseline else rel.t
    return EssentialMatrix(matrix=skew(t) @ rel.R, unit_baseline=unit_baseline)


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------

def unproject_pixels(pixels: np.ndarray, depths: np.ndarray,
                     cam: CameraModel) -> np.ndarray:
    """Lift pixels (N, 2) as (u, v) with depths (N,) to world points (N, 3)."""
    uv = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    d = np.asarray(depths, dtype=np.float64).reshape(-1)
    homo = np.column_stack([uv, np.ones(len(uv))])
    rays = homo @ cam.K_inv.T
    return cam.camera_to_world(rays * d[:, None])


def project_points(points: np.ndarray,
                   cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Project world points (N, 3) to pixels (N, 2) and depths (N,).

    No visibility filtering: depths may be non-positive, and callers must
    mask them before dividing results into an image.  The dehomogenization
    guards depth with a tiny epsilon so the pixel array stays finite.
    """
    cam_pts = cam.world_to_camera(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    proj = cam_pts @ cam.K.T
    z = proj[:, 2]
    safe = np.where(np.abs(z) > MIN_DEPTH, z, MIN_DEPTH)
    return proj[:, :2] / safe[:, None], z


def _project_relative(pixels: np.ndarray, depths: np.ndarray,
                      ref: CameraModel, tgt: CameraModel,
                      motions: np.ndarray | None = None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Core two-view warp K [R_rel (depth K^-1 x) + t_rel + M], (uv, z).

    `motions`, if given, is per-point displacement expressed in the target
    camera's coordinate frame.
    """
    rel = RelativePose.from_cameras(ref, tgt)
    uv = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    d = np.asarray(depths, dtype=np.float64).reshape(-1)
    homo = np.column_stack([uv, np.ones(len(uv))])
    cam_pts = (homo @ ref.K_inv.T) * d[:, None] @ rel.R.T + rel.t
    if motions is not None:
        cam_pts = cam_pts + np.asarray(motions, dtype=np.float64).reshape(-1, 3)
    proj = cam_pts @ tgt.K.T
    z = proj[:, 2]
    safe = np.where(np.abs(z) > MIN_DEPTH, z, MIN_DEPTH)
    return proj[:, :2] / safe[:, None], z


def project_rigid_batch(pixels: np.ndarray, depths: np.ndarray,
                        ref: CameraModel, tgt: CameraModel
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Warp reference pixels into the target view assuming a static world."""
    return _project_relative(pixels, depths, ref, tgt)


def project_dynamic_batch(pixels: np.ndarray, depths: np.ndarray,
                          ref: CameraModel, tgt: CameraModel,
                          motions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rigid warp plus per-point motion given in the target camera frame."""
    return _project_relative(pixels, depths, ref, tgt, motions)


def project_dynamic_world_batch(pixels: np.ndarray, depths: np.ndarray,
                                ref: CameraModel, tgt: CameraModel,
                                displacements: np.ndarray
                                ) -> tuple[np.ndarray, np.ndarray]:
    """Dynamic warp with displacements given in the world frame.

    A world displacement dX appears in the target camera as R_tgt dX.
    """
    disp = np.asarray(displacements, dtype=np.float64).reshape(-1, 3)
    return _project_relative(pixels, depths, ref, tgt, disp @ tgt.R.T)


def project_rigid(pixel: np.ndarray, depth: float, ref: CameraModel,
                  tgt: CameraModel) -> tuple[np.ndarray, float]:
    """Single-pixel rigid warp; raises BehindCameraError if z_t <= 0."""
    uv, z = project_rigid_batch(np.asarray(pixel).reshape(1, 2), [depth], ref, tgt)
    if z[0] <= MIN_DEPTH:
        raise BehindCameraError(f"target depth {z[0]:.3e}")
    return uv[0], float(z[0])


def project_dynamic(pixel: np.ndarray, depth: float, ref: CameraModel,
                    tgt: CameraModel, motion: np.ndarray
                    ) -> tuple[np.ndarray, float]:
    """Single-pixel dynamic warp, motion in the target camera frame.

    Zero motion reproduces project_rigid exactly (same code path).
    Raises BehindCameraError if z_t <= 0.
    """
    uv, z = project_dynamic_batch(
        np.asarray(pixel).reshape(1, 2), [depth], ref, tgt,
        np.asarray(motion).reshape(1, 3))
    if z[0] <= MIN_DEPTH:
        raise BehindCameraError(f"target depth {z[0]:.3e}")
    return uv[0], float(z[0])


# ---------------------------------------------------------------------------
# epipolar residuals
# ---------------------------------------------------------------------------

def _normalized(pixels: np.ndarray, intrinsics) -> np.ndarray:
    """Homogeneous pixels through K^-1: (N, 3) normalized image coordinates."""
    K_inv = intrinsics.K_inv if isinstance(intrinsics, CameraModel) \
        else np.linalg.inv(np.asarray(intrinsics, dtype=np.float64))
    uv = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    homo = np.column_stack([uv, np.ones(len(uv))])
    return homo @ K_inv.T


def epipolar_residual_batch(pixels_ref: np.ndarray, pixels_tgt: np.ndarray,
                            essential: EssentialMatrix,
                            intrinsics) -> np.ndarray:
    """Signed epipolar residual x_t^T E x_r in normalized coordinates, (N,)."""
    xr = _normalized(pixels_ref, intrinsics)
    xt = _normalized(pixels_tgt, intrinsics)
    return np.einsum("ni,ij,nj->n", xt, essential.matrix, xr)


def epipolar_residual(pixel_ref: np.ndarray, pixel_tgt: np.ndarray,
                      essential: EssentialMatrix, intrinsics) -> float:
    """Signed epipolar residual of one correspondence.

    Zero (to numerical precision) exactly when the two pixels see the same
    static 3-D point; motion along the epipolar plane also stays at zero,
    which is the blind spot this measure inherits.
    """
    return float(epipolar_residual_batch(
        np.asarray(pixel_ref).reshape(1, 2), np.asarray(pixel_tgt).reshape(1, 2),
        essential, intrinsics)[0])


def residual_first_order(pixel_ref: np.ndarray, depth: float,
                         ref: CameraModel, tgt: CameraModel,
                         motion: np.ndarray) -> float:
    """First-order estimate of the epipolar residual of a moving point.

    `motion` is the point displacement in the target camera frame, as in
    project_dynamic.  Uses the unit-baseline essential matrix: a point at
    depth Z moved by M violates the constraint by about (n . M) / Z where
    n is the unit normal of the epipolar plane through the reference ray.
    Valid when the motion and depth change are small against scene depth;
    degrades near the epipole where ||E x_r|| collapses.
    """
    ess = essential_from_poses(ref, tgt, unit_baseline=True)
    x_hat = _normalized(np.asarray(pixel_ref).reshape(1, 2), ref)[0]
    line = ess.matrix @ x_hat
    norm = np.linalg.norm(line)
    if norm <= 1e-15:
        return 0.0
    n = line / norm
    m = np.asarray(motion, dtype=np.float64).reshape(3)
    return float(n @ m) / float(depth)
