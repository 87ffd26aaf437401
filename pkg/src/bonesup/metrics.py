"""Evaluation metrics: bone suppression ratio, MSE, PSNR, gradient similarity.

BSR is the fraction of bone-signal energy removed, measured over bone
pixels only: 1 - sum((pred - soft)^2) / sum((cxr - soft)^2) with both sums
restricted to the bone mask. Numbers are comparable only within this repo.
The gradient-similarity score is a Sobel-cosine proxy for perceptual
texture agreement (it is not LPIPS).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import sobel

PSNR_CAP_DB = 100.0
BONE_SIGNAL_THRESHOLD = 0.02


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")


def mse(pred: np.ndarray, gt: np.ndarray) -> float:
    _check_dims(pred, gt)
    diff = pred - gt
    return float(np.mean(diff * diff))


def psnr(pred: np.ndarray, gt: np.ndarray, cap: float = PSNR_CAP_DB) -> float:
    """10*log10(1/mse) for unit-range images; ``cap`` dB when mse == 0."""
    err = mse(pred, gt)
    if err == 0.0:
        return cap
    return min(10.0 * math.log10(1.0 / err), cap)


def bone_mask_from_pair(cxr: np.ndarray, gt_soft: np.ndarray,
                        threshold: float = BONE_SIGNAL_THRESHOLD) -> np.ndarray:
    """Pixels where the bone signal cxr - soft exceeds the threshold."""
    _check_dims(cxr, gt_soft)
    return (cxr - gt_soft) > threshold


def bsr(pred: np.ndarray, cxr: np.ndarray, gt_soft: np.ndarray,
        bone_mask: np.ndarray) -> float:
    """Bone suppression ratio over bone pixels; 1.0 when there is no bone."""
    _check_dims(pred, cxr)
    _check_dims(pred, gt_soft)
    _check_dims(pred, bone_mask)
    bone = bone_mask.astype(bool)
    denom = float(np.sum((cxr[bone] - gt_soft[bone]) ** 2))
    if denom == 0.0:
        return 1.0
    num = float(np.sum((pred[bone] - gt_soft[bone]) ** 2))
    return 1.0 - num / denom


def gradient_similarity(pred: np.ndarray, ref: np.ndarray,
                        mask: np.ndarray | None = None) -> float:
    """Mean cosine similarity of Sobel gradient vectors, optionally masked.

    Pixels where both gradients vanish count as fully similar.
    """
    _check_dims(pred, ref)
    gx_p, gy_p = sobel(pred, axis=1), sobel(pred, axis=0)
    gx_r, gy_r = sobel(ref, axis=1), sobel(ref, axis=0)
    dot = gx_p * gx_r + gy_p * gy_r
    norm = np.sqrt(gx_p**2 + gy_p**2) * np.sqrt(gx_r**2 + gy_r**2)
    eps = 1e-12
    cos = (dot + eps) / (norm + eps)
    if mask is not None:
        _check_dims(pred, mask)
        mask = mask.astype(bool)
        if not mask.any():
            return 1.0
        cos = cos[mask]
    return float(np.mean(cos))


@dataclass(frozen=True)
class ImageMetrics:
    image_id: str
    bsr: float
    mse: float
    psnr: float
    grad_sim: float


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple[ImageMetrics, ...]

    def _column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def mean(self, name: str) -> float:
        return float(np.mean(self._column(name)))

    def std(self, name: str) -> float:
        """Sample standard deviation (n - 1); 0 for fewer than 2 rows."""
        col = self._column(name)
        return float(np.std(col, ddof=1)) if len(col) > 1 else 0.0

    def table(self) -> str:
        out = io.StringIO()
        header = f"{'image_id':>10} {'bsr':>10} {'mse':>12} {'psnr':>10} {'grad_sim':>10}"
        out.write(header + "\n")
        for r in self.rows:
            out.write(
                f"{r.image_id:>10} {r.bsr:>10.5f} {r.mse:>12.6e} "
                f"{r.psnr:>10.3f} {r.grad_sim:>10.5f}\n"
            )
        out.write(
            f"{'mean+-std':>10} "
            f"{self.mean('bsr'):>10.5f} {self.mean('mse'):>12.6e} "
            f"{self.mean('psnr'):>10.3f} {self.mean('grad_sim'):>10.5f}\n"
        )
        out.write(
            f"{'':>10} "
            f"{self.std('bsr'):>10.5f} {self.std('mse'):>12.6e} "
            f"{self.std('psnr'):>10.3f} {self.std('grad_sim'):>10.5f}\n"
        )
        return out.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["image_id", "bsr", "mse", "psnr", "grad_sim"])
            for r in self.rows:
                writer.writerow(
                    [r.image_id, repr(r.bsr), repr(r.mse), repr(r.psnr),
                     repr(r.grad_sim)]
                )


def evaluate_image(image_id: str, pred: np.ndarray, cxr: np.ndarray,
                   gt_soft: np.ndarray, lung_mask: np.ndarray,
                   bone_mask: np.ndarray | None = None) -> ImageMetrics:
    if bone_mask is None:
        bone_mask = bone_mask_from_pair(cxr, gt_soft)
    return ImageMetrics(
        image_id=image_id,
        bsr=bsr(pred, cxr, gt_soft, bone_mask),
        mse=mse(pred, gt_soft),
        psnr=psnr(pred, gt_soft),
        grad_sim=gradient_similarity(pred, gt_soft, lung_mask),
    )
