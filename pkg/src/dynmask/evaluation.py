"""Segmentation, trajectory, and reconstruction metrics.

Mask quality is scored with the region Jaccard mean and the boundary
F-measure (4-connected contours matched within a tolerance radius of
0.8% of the image diagonal).  Trajectories are scored with RMSE of camera
centers after closed-form similarity alignment, so the score ignores the
global scale/rotation/translation gauge a monocular pipeline cannot
observe.  Point clouds are scored with directed nearest-neighbor
distances: accuracy (pred to truth), completeness (truth to pred), and
their symmetric average, each as mean and median.

All metrics are pure functions of their inputs, deterministic, and
reported as fractions in [0, 1] for masks and meters for distances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

DEFAULT_BOUNDARY_TOL = 0.008
RECALL_THRESHOLD = 0.5

# 4-connectivity: a mask pixel is boundary if any of its 4 neighbors
# (or the outside of the image) is background
_CROSS = ndimage.generate_binary_structure(2, 1)


@dataclass
class MetricReport:
    """Flat bundle of every metric the evaluator can produce.

    Fields that could not be computed (missing ground truth, missing
    clouds) are None and serialize to JSON null.
    """

    jm: float | None = None
    fm: float | None = None
    jr: float | None = None
    fr: float | None = None
    jaccard_frames: list = field(default_factory=list)
    boundary_frames: list = field(default_factory=list)
    ate: float | None = None
    acc_mean: float | None = None
    acc_median: float | None = None
    comp_mean: float | None = None
    comp_median: float | None = None
    dist_mean: float | None = None
    dist_median: float | None = None

    def to_dict(self) -> dict:
        return {
            "jm": self.jm, "fm": self.fm, "jr": self.jr, "fr": self.fr,
            "jaccard_frames": list(self.jaccard_frames),
            "boundary_frames": list(self.boundary_frames),
            "ate": self.ate,
            "acc_mean": self.acc_mean, "acc_median": self.acc_median,
            "comp_mean": self.comp_mean, "comp_median": self.comp_median,
            "dist_mean": self.dist_mean, "dist_median": self.dist_median,
        }


def _check_stacks(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.ndim != 3 or gt.ndim != 3:
        raise ValueError("mask stacks must be (T, H, W)")
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    return pred, gt


# ---------------------------------------------------------------------------
# region similarity
# ---------------------------------------------------------------------------

def jaccard_frames(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per-frame intersection over union; empty-vs-empty scores 1."""
    pred, gt = _check_stacks(pred, gt)
    inter = (pred & gt).sum(axis=(1, 2)).astype(np.float64)
    union = (pred | gt).sum(axis=(1, 2)).astype(np.float64)
    out = np.ones(pred.shape[0])
    nz = union > 0
    out[nz] = inter[nz] / union[nz]
    return out


def jaccard_mean(pred: np.ndarray, gt: np.ndarray) -> float:
    return float(jaccard_frames(pred, gt).mean())


# ---------------------------------------------------------------------------
# boundary quality
# ---------------------------------------------------------------------------

def boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """4-connected contour: mask pixels adjacent to background.

    Pixels on the image border count as adjacent to background, so a blob
    touching the edge still contributes its outline there.
    """
    mask = np.asarray(mask, dtype=bool)
    eroded = ndimage.binary_erosion(mask, structure=_CROSS, border_value=0)
    return mask & ~eroded


def _boundary_f_single(pred: np.ndarray, gt: np.ndarray, tol: float) -> float:
    pb = boundary_pixels(pred)
    gb = boundary_pixels(gt)
    n_pred = int(pb.sum())
    n_gt = int(gb.sum())
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0
    # distance to the nearest contour pixel of the other mask
    dist_to_gt = ndimage.distance_transform_edt(~gb)
    dist_to_pred = ndimage.distance_transform_edt(~pb)
    precision = float((dist_to_gt[pb] <= tol).mean())
    recall = float((dist_to_pred[gb] <= tol).mean())
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def boundary_f_frames(pred: np.ndarray, gt: np.ndarray,
                      tol_frac: float = DEFAULT_BOUNDARY_TOL) -> np.ndarray:
    pred, gt = _check_stacks(pred, gt)
    h, w = pred.shape[1:]
    tol = tol_frac * float(np.hypot(h, w))
    return np.array([_boundary_f_single(pred[f], gt[f], tol)
                     for f in range(pred.shape[0])])


def boundary_f(pred: np.ndarray, gt: np.ndarray,
               tol_frac: float = DEFAULT_BOUNDARY_TOL) -> float:
    return float(boundary_f_frames(pred, gt, tol_frac).mean())


def recall_fraction(per_frame: np.ndarray,
                    threshold: float = RECALL_THRESHOLD) -> float:
    """Fraction of frames whose score strictly exceeds the threshold."""
    per_frame = np.asarray(per_frame, dtype=np.float64)
    if per_frame.size == 0:
        raise ValueError("empty score series")
    return float((per_frame > threshold).mean())


# ---------------------------------------------------------------------------
# trajectory error
# ---------------------------------------------------------------------------

def umeyama_alignment(src: np.ndarray, dst: np.ndarray
                      ) -> tuple[float, np.ndarray, np.ndarray]:
    """Closed-form similarity (scale, R, t) minimizing |s R src + t - dst|^2.

    Degenerate source sets (all points identical) fall back to identity
    rotation with unit scale so the caller still gets a defined transform.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError("point sets must both be (N, 3)")
    n = src.shape[0]
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    cs = src - mu_s
    cd = dst - mu_d
    var_s = float((cs * cs).sum()) / n
    if var_s <= 1e-15:
        return 1.0, np.eye(3), mu_d - mu_s
    cov = cd.T @ cs / n
    u, d, vt = np.linalg.svd(cov)
    sign = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[2] = -1.0
    rot = u @ np.diag(sign) @ vt
    scale = float((d * sign).sum()) / var_s
    trans = mu_d - scale * rot @ mu_s
    return scale, rot, trans


def ate(pred_cameras, gt_cameras) -> float:
    """RMSE of camera centers after best similarity alignment."""
    if len(pred_cameras) != len(gt_cameras):
        raise ValueError("trajectory length mismatch")
    if len(pred_cameras) < 2:
        raise ValueError("need at least two poses")
    pred = np.stack([c.center for c in pred_cameras])
    gt = np.stack([c.center for c in gt_cameras])
    scale, rot, trans = umeyama_alignment(pred, gt)
    aligned = scale * (pred @ rot.T) + trans
    err = aligned - gt
    return float(np.sqrt((err * err).sum(axis=1).mean()))


# ---------------------------------------------------------------------------
# point-cloud quality
# ---------------------------------------------------------------------------

def cloud_metrics(pred: np.ndarray, gt: np.ndarray) -> dict:
    """Directed nearest-neighbor statistics between two point sets."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if len(pred) == 0 or len(gt) == 0:
        raise ValueError("cloud metrics need non-empty point sets")
    acc = cKDTree(gt).query(pred)[0]
    comp = cKDTree(pred).query(gt)[0]
    out = {
        "acc_mean": float(acc.mean()),
        "acc_median": float(np.median(acc)),
        "comp_mean": float(comp.mean()),
        "comp_median": float(np.median(comp)),
    }
    out["dist_mean"] = (out["acc_mean"] + out["comp_mean"]) / 2.0
    out["dist_median"] = (out["acc_median"] + out["comp_median"]) / 2.0
    return out


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

def evaluate_masks(pred: np.ndarray, gt: np.ndarray,
                   tol_frac: float = DEFAULT_BOUNDARY_TOL) -> MetricReport:
    j = jaccard_frames(pred, gt)
    b = boundary_f_frames(pred, gt, tol_frac)
    return MetricReport(
        jm=float(j.mean()), fm=float(b.mean()),
        jr=recall_fraction(j), fr=recall_fraction(b),
        jaccard_frames=[float(v) for v in j],
        boundary_frames=[float(v) for v in b])
