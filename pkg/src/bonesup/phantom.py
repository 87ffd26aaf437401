"""Procedural chest phantoms: paired (CXR, soft tissue, lung mask, bone mask).

Soft tissue is a smooth field (seeded Gaussian blobs) with band-limited
texture inside two disjoint axis-aligned lung ellipses; bone is a sum of
quadratic rib arcs with Gaussian cross-profiles. The CXR is
clip(soft + bone), so suppressing bone perfectly recovers the soft plane.
Every sample is reproduced bit-exactly from (seed, index).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .imgio import read_pgm, read_pgm_mask, write_pgm
from .metrics import BONE_SIGNAL_THRESHOLD as BONE_THRESHOLD


@dataclass(frozen=True)
class LungEllipse:
    cx: float
    cy: float
    rx: float
    ry: float


@dataclass(frozen=True)
class RibArc:
    """Centerline y(x) = y0 + tilt*(x - x0) + curve*(x - x0)^2 / size."""

    y0: float
    tilt: float
    curve: float
    x0: float
    amplitude: float
    width: float


@dataclass(frozen=True)
class PhantomGeometry:
    """Realized per-sample descriptor; enough to re-rasterize the masks."""

    size: int
    lungs: tuple[LungEllipse, ...]
    ribs: tuple[RibArc, ...]
    texture_scale: float
    texture_amplitude: float


@dataclass(frozen=True)
class GeneratorConfig:
    """Sampling ranges for the procedural generator.

    Rib width and texture scale are in pixels at any image size (so
    models transfer across resolutions); blob and lung geometry scale
    with the image.
    """

    blob_count: tuple[int, int] = (5, 10)
    blob_amplitude: tuple[float, float] = (-0.05, 0.08)
    rib_count: tuple[int, int] = (6, 10)
    rib_amplitude: tuple[float, float] = (0.1, 0.3)
    rib_width: tuple[float, float] = (1.2, 2.2)
    texture_scale: float = 1.6
    texture_amplitude: float = 0.03
    lung_drop: float = 0.28
    base_level: float = 0.58


@dataclass(frozen=True)
class PhantomSample:
    cxr: np.ndarray
    soft: np.ndarray
    lung_mask: np.ndarray
    bone_mask: np.ndarray
    seed: int
    index: int
    geometry: PhantomGeometry


def rasterize_lungs(geometry: PhantomGeometry) -> np.ndarray:
    """Pixel-center rasterization of the lung ellipse union."""
    size = geometry.size
    yy = np.arange(size, dtype=np.float64)[:, None]
    xx = np.arange(size, dtype=np.float64)[None, :]
    mask = np.zeros((size, size), dtype=bool)
    for e in geometry.lungs:
        mask |= ((xx - e.cx) / e.rx) ** 2 + ((yy - e.cy) / e.ry) ** 2 <= 1.0
    return mask


def lung_area_analytic(geometry: PhantomGeometry) -> float:
    """Union area of the (disjoint by construction) lung ellipses."""
    return float(sum(np.pi * e.rx * e.ry for e in geometry.lungs))


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, index))))


def _sample_geometry(rng, size: int, cfg: GeneratorConfig) -> PhantomGeometry:
    s = float(size)
    lungs = []
    for side in (0.325, 0.675):
        cx = (side + rng.uniform(-0.012, 0.012)) * s
        cy = (0.52 + rng.uniform(-0.02, 0.02)) * s
        rx = rng.uniform(0.13, 0.15) * s
        ry = rng.uniform(0.24, 0.30) * s
        lungs.append(LungEllipse(cx, cy, rx, ry))

    n_ribs = int(rng.integers(cfg.rib_count[0], cfg.rib_count[1] + 1))
    ribs = []
    for _ in range(n_ribs):
        ribs.append(
            RibArc(
                y0=rng.uniform(0.2, 0.8) * s,
                tilt=rng.uniform(-0.08, 0.08),
                curve=rng.uniform(0.15, 0.5),
                x0=(0.5 + rng.uniform(-0.05, 0.05)) * s,
                amplitude=rng.uniform(*cfg.rib_amplitude),
                width=rng.uniform(*cfg.rib_width),
            )
        )
    return PhantomGeometry(
        size=size,
        lungs=tuple(lungs),
        ribs=tuple(ribs),
        texture_scale=cfg.texture_scale,
        texture_amplitude=cfg.texture_amplitude,
    )


def bone_field(geometry: PhantomGeometry) -> np.ndarray:
    size = geometry.size
    yy = np.arange(size, dtype=np.float64)[:, None]
    xx = np.arange(size, dtype=np.float64)[None, :]
    total = np.zeros((size, size))
    for rib in geometry.ribs:
        dx = xx - rib.x0
        center = rib.y0 + rib.tilt * dx + rib.curve * dx * dx / size
        total += rib.amplitude * np.exp(-((yy - center) ** 2) / (2.0 * rib.width**2))
    return total


def _soft_tissue(rng, geometry: PhantomGeometry, cfg: GeneratorConfig,
                 lung_mask: np.ndarray) -> np.ndarray:
    size = geometry.size
    s = float(size)
    yy = np.arange(size, dtype=np.float64)[:, None]
    xx = np.arange(size, dtype=np.float64)[None, :]

    base = np.full((size, size), cfg.base_level)
    n_blobs = int(rng.integers(cfg.blob_count[0], cfg.blob_count[1] + 1))
    for _ in range(n_blobs):
        amp = rng.uniform(*cfg.blob_amplitude)
        bx, by = rng.uniform(0.0, s), rng.uniform(0.0, s)
        sx, sy = rng.uniform(0.18, 0.45) * s, rng.uniform(0.18, 0.45) * s
        base += amp * np.exp(
            -((xx - bx) ** 2) / (2 * sx**2) - ((yy - by) ** 2) / (2 * sy**2)
        )

    noise = rng.standard_normal((size, size))
    texture = gaussian_filter(noise, geometry.texture_scale)
    texture /= max(texture.std(), 1e-12)

    soft = base - cfg.lung_drop * lung_mask
    soft += geometry.texture_amplitude * texture * lung_mask
    return np.clip(soft, 0.02, 0.98)


def generate_one(seed: int, index: int, size: int = 64,
                 config: GeneratorConfig = GeneratorConfig()) -> PhantomSample:
    if size < 32:
        raise ValueError(f"phantom size must be >= 32, got {size}")
    rng = _sample_rng(seed, index)
    geometry = _sample_geometry(rng, size, config)
    lung_mask = rasterize_lungs(geometry)
    soft = _soft_tissue(rng, geometry, config, lung_mask)
    bones = bone_field(geometry)
    cxr = np.clip(soft + bones, 0.0, 1.0)
    bone_mask = bones > BONE_THRESHOLD
    return PhantomSample(
        cxr=cxr,
        soft=soft,
        lung_mask=lung_mask,
        bone_mask=bone_mask,
        seed=seed,
        index=index,
        geometry=geometry,
    )


def generate(seed: int, count: int, size: int = 64,
             config: GeneratorConfig = GeneratorConfig()) -> list[PhantomSample]:
    """Deterministic batch: sample i depends only on (seed, i, size, config)."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return [generate_one(seed, i, size, config) for i in range(count)]


def split(samples: list, ratios: tuple[float, float, float], seed: int = 0):
    """Seeded shuffle, then contiguous (train, val, test) split.

    Sizes are floor(n * ratio) for train and val, remainder for test.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    n = len(samples)
    n_train = int(n * ratios[0])
    n_val = int(n * ratios[1])
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(
            f"split of {n} samples with ratios {ratios} leaves an empty part"
        )
    order = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((seed, 0x5B117)))
    ).permutation(n)
    shuffled = [samples[i] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )


def save_dataset(samples: list[PhantomSample], directory) -> None:
    """Write {id}_cxr/soft/lung/bone.pgm plus manifest.csv."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "manifest.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["id", "seed", "index", "size", "rib_count", "texture_scale",
             "lung_ellipses"]
        )
        for sample in samples:
            sid = f"{sample.index:04d}"
            write_pgm(directory / f"{sid}_cxr.pgm", sample.cxr)
            write_pgm(directory / f"{sid}_soft.pgm", sample.soft)
            write_pgm(directory / f"{sid}_lung.pgm", sample.lung_mask)
            write_pgm(directory / f"{sid}_bone.pgm", sample.bone_mask)
            ellipses = ";".join(
                f"{e.cx!r} {e.cy!r} {e.rx!r} {e.ry!r}" for e in sample.geometry.lungs
            )
            writer.writerow(
                [sid, sample.seed, sample.index, sample.geometry.size,
                 len(sample.geometry.ribs), sample.geometry.texture_scale,
                 ellipses]
            )


@dataclass(frozen=True)
class DiskSample:
    """A dataset entry loaded back from PGM files (8-bit quantized)."""

    sample_id: str
    cxr: np.ndarray
    soft: np.ndarray
    lung_mask: np.ndarray
    bone_mask: np.ndarray


def load_dataset(directory) -> list[DiskSample]:
    directory = Path(directory)
    manifest = directory / "manifest.csv"
    if not manifest.exists():
        raise FileNotFoundError(f"no manifest.csv under {directory}")
    out = []
    with open(manifest, newline="") as f:
        for row in csv.DictReader(f):
            sid = row["id"]
            out.append(
                DiskSample(
                    sample_id=sid,
                    cxr=read_pgm(directory / f"{sid}_cxr.pgm"),
                    soft=read_pgm(directory / f"{sid}_soft.pgm"),
                    lung_mask=read_pgm_mask(directory / f"{sid}_lung.pgm"),
                    bone_mask=read_pgm_mask(directory / f"{sid}_bone.pgm"),
                )
            )
    return out


def boneless_config() -> GeneratorConfig:
    """Degenerate generator with zero rib amplitude (cxr == soft)."""
    return replace(GeneratorConfig(), rib_amplitude=(0.0, 0.0))
