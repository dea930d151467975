"""Cross-view consistency scoring with confidence-weighted residuals.

Every surviving cloud point is projected into all views.  Where it is
visible, the depth it should have is compared against the depth map, and
its source color against the image, both sampled bilinearly.  Views with
confident depth dominate the comparison: per-view confidences are
normalized into convex weights, so one trusted agreeing view can outvote
several noisy ones.  Points whose weighted inconsistency stays below a
threshold are re-labeled static; the survivors form the final masks after
a single morphological closing pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .purification import DynamicPointCloud, mask_from_cloud
from .tensor_io import SceneBundle

LOGIT_CLAMP = 40.0
VARIANCE_EPS = 1e-12
DEFAULT_LAMBDA = 1.0 / 3.0
DEFAULT_THETA_DYN = 0.1
DEFAULT_OCCLUSION_TOL = 0.05


class EmptyVisibilityError(ValueError):
    """Score requested for a point no view can see."""


@dataclass
class ProjectionRecord:
    """One point's projection into one view, with everything sampled there."""

    point_id: int
    view: int
    pixel: np.ndarray           # (2,) subpixel (u, v) in the target view
    depth_projected: float      # z of the point in the target camera
    depth_sampled: float        # bilinear depth map value (0 if none valid)
    color_projected: np.ndarray  # (3,) color carried from the source view
    color_sampled: np.ndarray    # (3,) bilinear image value
    confidence: float
    visible: bool


def activate_confidence(logits: np.ndarray) -> np.ndarray:
    """Map raw logits to confidences C = 1 + exp(l), clamped to stay finite.

    The floor of 1 makes C - 1 a precision: C near 1 means an almost
    uninformative depth observation.
    """
    l = np.clip(np.asarray(logits, dtype=np.float64), -LOGIT_CLAMP, LOGIT_CLAMP)
    return 1.0 + np.exp(l)


def confidence_to_variance(confidence: np.ndarray) -> np.ndarray:
    """Depth observation variance sigma^2 = 1 / (C - 1 + eps)."""
    c = np.asarray(confidence, dtype=np.float64)
    return 1.0 / (c - 1.0 + VARIANCE_EPS)


def bilinear_sample(values: np.ndarray, support: np.ndarray,
                    u: np.ndarray, v: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear interpolation restricted to a validity mask.

    `values` is (H, W) or (H, W, C); `support` (H, W) marks pixels allowed
    to contribute.  Taps outside the image or outside the support get zero
    weight and the rest are renormalized.  Returns (sampled, ok) where ok
    is False when no tap had weight (sampled is 0 there).
    """
    vals = np.asarray(values, dtype=np.float64)
    sup = np.asarray(support, dtype=bool)
    h, w = sup.shape
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)

    x0 = np.floor(u).astype(np.int64)
    y0 = np.floor(v).astype(np.int64)
    fx = u - x0
    fy = v - y0

    flat = vals.reshape(h * w, -1)
    out = np.zeros((len(u), flat.shape[1]))
    wsum = np.zeros(len(u))
    for dy, dx, wt in ((0, 0, (1 - fx) * (1 - fy)), (0, 1, fx * (1 - fy)),
                       (1, 0, (1 - fx) * fy), (1, 1, fx * fy)):
        xi = x0 + dx
        yi = y0 + dy
        inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        xi_c = np.clip(xi, 0, w - 1)
        yi_c = np.clip(yi, 0, h - 1)
        weight = wt * inside * sup[yi_c, xi_c]
        out += weight[:, None] * flat[yi_c * w + xi_c]
        wsum += weight
    ok = wsum > 0
    out[ok] /= wsum[ok, None]
    sampled = out[:, 0] if vals.ndim == 2 else out
    return sampled, ok


def _project_into_view(positions: np.ndarray, colors: np.ndarray,
                       bundle: SceneBundle, confidences: np.ndarray,
                       view: int, occlusion_tol: float
                       ) -> tuple[np.ndarray, ...]:
    """Vectorized projection of many points into one view.

    Returns (uv, z, depth_sampled, color_sampled, conf_sampled, visible).
    """
    from .geometry import project_points

    cam = bundle.cameras[view]
    uv, z = project_points(positions, cam)
    h, w = bundle.height, bundle.width
    in_front = z > 1e-9
    in_bounds = ((uv[:, 0] >= 0) & (uv[:, 0] <= w - 1)
                 & (uv[:, 1] >= 0) & (uv[:, 1] <= h - 1))
    candidate = in_front & in_bounds

    support = bundle.depths[view] > 0
    depth_s = np.zeros(len(positions))
    color_s = np.zeros((len(positions), 3))
    conf_s = np.zeros(len(positions))
    ok = np.zeros(len(positions), dtype=bool)
    if candidate.any():
        u = uv[candidate, 0]
        v = uv[candidate, 1]
        d, d_ok = bilinear_sample(bundle.depths[view], support, u, v)
        c, _ = bilinear_sample(bundle.images[view], support, u, v)
        cf, _ = bilinear_sample(confidences[view], support, u, v)
        depth_s[candidate] = d
        color_s[candidate] = c
        conf_s[candidate] = cf
        ok[candidate] = d_ok

    not_occluded = z <= depth_s + occlusion_tol * z
    visible = candidate & ok & not_occluded
    return uv, z, depth_s, color_s, conf_s, visible


def gather_projections(position: np.ndarray, color: np.ndarray,
                       bundle: SceneBundle, confidences: np.ndarray,
                       point_id: int = 0,
                       occlusion_tol: float = DEFAULT_OCCLUSION_TOL
                       ) -> list[ProjectionRecord]:
    """Project one point into every view and sample what each view saw there.

    `confidences` is the (T, H, W) activated confidence stack.  Views where
    the point lands out of frame, behind the camera, on invalid depth, or
    behind nearer geometry (projected depth exceeding sampled depth by more
    than the relative tolerance) come back with visible=False.
    """
    pos = np.asarray(position, dtype=np.float64).reshape(1, 3)
    col = np.asarray(color, dtype=np.float64).reshape(1, 3)
    records = []
    for view in range(bundle.frames):
        uv, z, d_s, c_s, cf_s, vis = _project_into_view(
            pos, col, bundle, confidences, view, occlusion_tol)
        records.append(ProjectionRecord(
            point_id=point_id, view=view, pixel=uv[0],
            depth_projected=float(z[0]), depth_sampled=float(d_s[0]),
            color_projected=col[0], color_sampled=c_s[0],
            confidence=float(cf_s[0]), visible=bool(vis[0])))
    return records


def mle_loss(records: list[ProjectionRecord]) -> float:
    """Joint negative log-likelihood of the visible depth residuals.

    Each visible view contributes r^2 / (2 sigma^2) + log(sigma^2) / 2 with
    the variance implied by its confidence.  Diagnostic only; the decision
    rule uses `dynamic_score`.
    """
    visible = [r for r in records if r.visible]
    if not visible:
        raise EmptyVisibilityError("no visible projection for this point")
    total = 0.0
    for rec in visible:
        var = float(confidence_to_variance(rec.confidence))
        residual = rec.depth_projected - rec.depth_sampled
        total += residual * residual / (2.0 * var) + 0.5 * np.log(var)
    return float(total)


def dynamic_score(records: list[ProjectionRecord],
                  lam: float = DEFAULT_LAMBDA) -> float:
    """Confidence-weighted cross-view inconsistency of one point.

    S = sum_i w_i (|depth residual_i| + lam * mean |color residual_i|)
    with w_i the confidences normalized over the visible views.  Zero means
    every view agrees the point is where its geometry says it should be.
    """
    visible = [r for r in records if r.visible]
    if not visible:
        raise EmptyVisibilityError("no visible projection for this point")
    conf = np.array([r.confidence for r in visible])
    weights = conf / conf.sum()
    score = 0.0
    for wt, rec in zip(weights, visible):
        r_d = abs(rec.depth_projected - rec.depth_sampled)
        r_c = float(np.mean(np.abs(rec.color_projected - rec.color_sampled)))
        score += wt * (r_d + lam * r_c)
    return float(score)


def score_cloud(cloud: DynamicPointCloud, bundle: SceneBundle,
                confidences: np.ndarray, lam: float = DEFAULT_LAMBDA,
                occlusion_tol: float = DEFAULT_OCCLUSION_TOL
                ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized `dynamic_score` over all alive points.

    Returns (scores, visible_counts), both length len(cloud).  Dead points
    and points visible nowhere carry score 0 with count 0; callers must
    branch on the count, a zero score alone does not mean "static".
    """
    n = len(cloud)
    scores = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    alive_ids = np.flatnonzero(cloud.alive)
    if len(alive_ids) == 0:
        return scores, counts

    pos = cloud.positions[alive_ids]
    frames = cloud.frame_indices[alive_ids]
    rows = cloud.pixels[alive_ids, 0]
    cols = cloud.pixels[alive_ids, 1]
    colors = bundle.images[frames, rows, cols].astype(np.float64)

    weight_sum = np.zeros(len(alive_ids))
    weighted_res = np.zeros(len(alive_ids))
    vis_count = np.zeros(len(alive_ids), dtype=np.int64)
    for view in range(bundle.frames):
        _, z, d_s, c_s, cf_s, vis = _project_into_view(
            pos, colors, bundle, confidences, view, occlusion_tol)
        r_d = np.abs(z - d_s)
        r_c = np.mean(np.abs(colors - c_s), axis=1)
        contrib = cf_s * (r_d + lam * r_c)
        weight_sum += np.where(vis, cf_s, 0.0)
        weighted_res += np.where(vis, contrib, 0.0)
        vis_count += vis

    seen = vis_count > 0
    out = np.zeros(len(alive_ids))
    out[seen] = weighted_res[seen] / weight_sum[seen]
    scores[alive_ids] = out
    counts[alive_ids] = vis_count
    return scores, counts


def close_masks(masks: np.ndarray) -> np.ndarray:
    """One 3x3 closing pass per frame: dilate, then erode.

    The frame is padded with one ring of background first so the closing
    behaves as if computed on an infinite plane: blobs touching the image
    edge are neither eaten nor artificially extended to the border.
    """
    structure = np.ones((3, 3), dtype=bool)
    out = np.zeros_like(masks, dtype=bool)
    for f in range(masks.shape[0]):
        padded = np.pad(masks[f], 1)
        grown = ndimage.binary_dilation(padded, structure=structure)
        closed = ndimage.binary_erosion(grown, structure=structure)
        out[f] = closed[1:-1, 1:-1]
    return out


def refine_masks(cloud: DynamicPointCloud, bundle: SceneBundle,
                 confidences: np.ndarray,
                 theta_dyn: float = DEFAULT_THETA_DYN,
                 lam: float = DEFAULT_LAMBDA,
                 occlusion_tol: float = DEFAULT_OCCLUSION_TOL
                 ) -> tuple[np.ndarray, DynamicPointCloud]:
    """Final masks: keep points whose inconsistency clears the threshold.

    Points nowhere visible keep their current (purification) verdict.
    Returns the closed per-frame masks plus the re-labeled cloud.
    """
    scores, counts = score_cloud(cloud, bundle, confidences, lam, occlusion_tol)
    out = cloud.copy()
    scored = out.alive & (counts > 0)
    out.alive[scored] = scores[scored] >= theta_dyn
    masks = mask_from_cloud(out, bundle)
    return close_masks(masks), out
