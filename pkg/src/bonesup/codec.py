"""Pixel <-> latent conversion.

Stands in for a learned autoencoder with deterministic, invertible maps:
pixels in [0, 1] are shifted to the zero-mean convention [-0.5, 0.5] and,
for a patch factor k > 1, rearranged space-to-depth into k^2 channels at
(H/k) x (W/k). Images are 2-D float arrays, latents are (C, h, w) arrays.
"""

from __future__ import annotations

import re

import numpy as np

PIXEL_SHIFT = 0.5


def space_to_depth(image: np.ndarray, factor: int) -> np.ndarray:
    """Rearrange (H, W) -> (factor^2, H/factor, W/factor), linearly."""
    h, w = image.shape
    if h % factor or w % factor:
        raise ValueError(
            f"image {h}x{w} not divisible by patch factor {factor}"
        )
    blocks = image.reshape(h // factor, factor, w // factor, factor)
    return np.ascontiguousarray(
        blocks.transpose(1, 3, 0, 2).reshape(factor * factor, h // factor, w // factor)
    )


def depth_to_space(latent: np.ndarray, factor: int) -> np.ndarray:
    """Inverse of :func:`space_to_depth`."""
    c, h, w = latent.shape
    if c != factor * factor:
        raise ValueError(f"latent has {c} channels, expected {factor * factor}")
    blocks = latent.reshape(factor, factor, h, w)
    return blocks.transpose(2, 0, 3, 1).reshape(h * factor, w * factor)


class PatchCodec:
    """Invertible codec: shift to zero mean, then space-to-depth by ``factor``.

    ``factor=1`` is the identity codec (1-channel latent equal to the
    shifted image). Stateless and reentrant.
    """

    def __init__(self, factor: int = 1):
        if factor < 1:
            raise ValueError(f"patch factor must be >= 1, got {factor}")
        self.factor = factor

    @property
    def channels(self) -> int:
        return self.factor * self.factor

    def latent_shape(self, height: int, width: int) -> tuple[int, int, int]:
        if height % self.factor or width % self.factor:
            raise ValueError(
                f"image {height}x{width} not divisible by patch factor "
                f"{self.factor}"
            )
        return (self.channels, height // self.factor, width // self.factor)

    def encode(self, image: np.ndarray) -> np.ndarray:
        if image.ndim != 2:
            raise ValueError(f"expected 2-D image, got shape {image.shape}")
        return space_to_depth(np.asarray(image, dtype=np.float64) - PIXEL_SHIFT,
                              self.factor)

    def decode(self, latent: np.ndarray, clip: bool = True) -> np.ndarray:
        if latent.ndim != 3 or latent.shape[0] != self.channels:
            raise ValueError(
                f"latent shape {latent.shape} does not match codec with "
                f"{self.channels} channels"
            )
        image = depth_to_space(np.asarray(latent, dtype=np.float64),
                               self.factor) + PIXEL_SHIFT
        return np.clip(image, 0.0, 1.0) if clip else image

    def __repr__(self) -> str:
        return "identity" if self.factor == 1 else f"patch{self.factor}"


def make_codec(key: str) -> PatchCodec:
    """Codec from a config key: ``identity`` or ``patch{k}`` (e.g. patch2)."""
    key = key.strip().lower()
    if key == "identity":
        return PatchCodec(1)
    m = re.fullmatch(r"patch(\d+)", key)
    if m:
        return PatchCodec(int(m.group(1)))
    raise ValueError(f"unknown codec key {key!r} (use identity or patch{{k}})")
