"""Lung-region masks: phantom ground truth or threshold-based fallback.

Stands in for a learned segmenter. The threshold provider assumes the
radiographic convention that lungs are darker than surrounding tissue.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import binary_opening

from .phantom import PhantomGeometry, PhantomSample, rasterize_lungs

PROVIDERS = ("phantom_truth", "threshold")


def otsu_threshold(image: np.ndarray, bins: int = 256) -> float:
    """Classic Otsu split point over a fixed [0, 1] histogram."""
    hist, edges = np.histogram(np.clip(image, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
    total = hist.sum()
    centers = (edges[:-1] + edges[1:]) / 2.0
    weight_bg = np.cumsum(hist)
    weight_fg = total - weight_bg
    sum_bg = np.cumsum(hist * centers)
    sum_all = sum_bg[-1]
    valid = (weight_bg > 0) & (weight_fg > 0)
    if not valid.any():
        return float(centers[0])
    mean_bg = np.where(valid, sum_bg / np.maximum(weight_bg, 1), 0.0)
    mean_fg = np.where(valid, (sum_all - sum_bg) / np.maximum(weight_fg, 1), 0.0)
    between = np.where(valid, weight_bg * weight_fg * (mean_bg - mean_fg) ** 2, -1.0)
    return float(centers[int(np.argmax(between))])


def lung_mask(image: np.ndarray, provider: str = "threshold",
              phantom=None) -> np.ndarray:
    """Binary lung mask from the chosen provider.

    ``phantom_truth`` re-rasterizes the generator's exact ellipses and
    requires a :class:`PhantomSample` or :class:`PhantomGeometry` in
    ``phantom``; ``threshold`` is Otsu binarization (dark side foreground)
    followed by a 3x3 binary opening.
    """
    if provider == "phantom_truth":
        if isinstance(phantom, PhantomSample):
            geometry = phantom.geometry
        elif isinstance(phantom, PhantomGeometry):
            geometry = phantom
        else:
            raise ValueError(
                "phantom_truth provider needs phantom metadata "
                "(PhantomSample or PhantomGeometry)"
            )
        if geometry.size != image.shape[0] or image.shape[0] != image.shape[1]:
            raise ValueError(
                f"phantom geometry size {geometry.size} does not match image "
                f"shape {image.shape}"
            )
        return rasterize_lungs(geometry)
    if provider == "threshold":
        if image.max() - image.min() < 1e-12:
            return np.zeros(image.shape, dtype=bool)
        dark = image < otsu_threshold(image)
        return binary_opening(dark, structure=np.ones((3, 3), dtype=bool))
    raise ValueError(f"unknown mask provider {provider!r} (use {PROVIDERS})")


def apply_mask(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero out everything outside the mask."""
    if image.shape != mask.shape:
        raise ValueError(f"image {image.shape} vs mask {mask.shape} mismatch")
    return image * mask


def masked_condition(image: np.ndarray, mask: np.ndarray,
                     fill: float = 0.5) -> np.ndarray:
    """Masked image for conditioning: outside pixels take a neutral fill.

    The default 0.5 maps to 0 after the codec's zero-mean shift, so the
    masked-out region carries no signal in latent space.
    """
    if image.shape != mask.shape:
        raise ValueError(f"image {image.shape} vs mask {mask.shape} mismatch")
    mask = mask.astype(bool)
    return image * mask + fill * ~mask


def iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)
