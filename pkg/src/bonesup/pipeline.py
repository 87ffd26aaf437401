"""End-to-end orchestration: segment, encode, dual-path sample, decode,
fuse, evaluate. Also the timing bench.

Artifacts are written eagerly under the output prefix with fixed names
(mask.pgm, global.pgm, local.pgm, fused.pgm), so a failing stage still
leaves everything produced before it. Stage errors are re-raised with the
stage name prefixed.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codec import PatchCodec, make_codec
from .config import PipelineConfig
from .denoise import Condition, OracleDenoiser, load_checkpoint
from .errors import ConfigError
from .fusion import poisson_fuse
from .imgio import read_image, read_pgm_mask, write_pgm
from .lungmask import lung_mask, masked_condition
from .metrics import MetricsReport, evaluate_image
from .sampling import dual_path_sample, sample, CondSpec
from .schedule import Schedule, make_schedule


@dataclass
class PipelineResult:
    mask: np.ndarray
    global_image: np.ndarray | None = None
    local_image: np.ndarray | None = None
    fused: np.ndarray | None = None
    report: MetricsReport | None = None
    artifacts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def output_image(self) -> np.ndarray:
        for candidate in (self.fused, self.global_image, self.local_image):
            if candidate is not None:
                return candidate
        raise ValueError("pipeline produced no output image")


@contextmanager
def _stage(name: str, timings: dict):
    start = time.perf_counter()
    try:
        yield
    except Exception as exc:
        try:
            raise type(exc)(f"stage {name}: {exc}") from exc
        except TypeError:
            raise exc from None
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - start


def build_schedule(config: PipelineConfig) -> Schedule:
    return make_schedule(config.steps, config.beta_start, config.beta_end,
                         config.sigma_data)


def make_denoiser(config: PipelineConfig, codec: PatchCodec,
                  schedule: Schedule, gt_soft: np.ndarray | None):
    if config.model == "oracle":
        if gt_soft is None:
            raise ConfigError(
                "model=oracle needs ground_truth (the oracle targets the "
                "encoded soft-tissue image)"
            )
        return OracleDenoiser(codec.encode(gt_soft), schedule)
    model = load_checkpoint(config.model)
    if model.arch.timesteps != config.steps:
        raise ConfigError(
            f"checkpoint trained for {model.arch.timesteps} steps, config "
            f"asks for {config.steps}"
        )
    if model.arch.out_channels != codec.channels:
        raise ConfigError(
            f"checkpoint predicts {model.arch.out_channels} channels, codec "
            f"{config.codec} produces {codec.channels}"
        )
    return model


def run_pipeline_arrays(config: PipelineConfig, cxr: np.ndarray,
                        mask: np.ndarray | None = None,
                        gt_soft: np.ndarray | None = None,
                        denoiser=None, out_dir=None) -> PipelineResult:
    """Core pipeline on in-memory arrays.

    ``mask=None`` runs the threshold provider on the CXR; ``denoiser=None``
    builds one from the config (oracle or checkpoint). ``out_dir`` enables
    artifact files.
    """
    config.validate(check_files=False)
    codec = make_codec(config.codec)
    schedule = build_schedule(config)
    timings: dict = {}
    result = PipelineResult(mask=np.zeros_like(cxr, dtype=bool),
                            timings=timings)

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    def emit(name: str, image) -> None:
        if out_dir is None:
            return
        with _stage("io", timings):
            target = out_dir / f"{name}.pgm"
            write_pgm(target, image)
            result.artifacts[name] = target

    with _stage("segmentation", timings):
        if mask is None:
            mask = lung_mask(cxr, provider="threshold")
        result.mask = mask
    emit("mask", mask)

    with _stage("encode", timings):
        if denoiser is None:
            denoiser = make_denoiser(config, codec, schedule, gt_soft)
        cond_global = Condition(codec.encode(cxr), kind="global")
        cond_local = Condition(codec.encode(masked_condition(cxr, mask)),
                               kind="local")

    sampler_cfg = config.sampler_config()
    with _stage("sampling", timings):
        if config.path == "global":
            latent = sample(denoiser, CondSpec(cond_global), schedule,
                            sampler_cfg)
            result.global_image = codec.decode(latent)
        elif config.path == "local":
            latent = sample(denoiser,
                            CondSpec(cond_global, cond_local), schedule,
                            sampler_cfg)
            result.local_image = codec.decode(latent)
        else:
            dual = dual_path_sample(denoiser, cond_global, cond_local,
                                    schedule, sampler_cfg)
            result.global_image = codec.decode(dual.global_latent)
            result.local_image = codec.decode(dual.local_latent)
    if result.global_image is not None:
        emit("global", result.global_image)
    if result.local_image is not None:
        emit("local", result.local_image)

    if config.path == "fused":
        with _stage("fusion", timings):
            max_iter = config.fusion_max_iter or None
            result.fused = poisson_fuse(result.global_image,
                                        result.local_image, mask,
                                        tol=config.fusion_tol,
                                        max_iter=max_iter)
        emit("fused", result.fused)

    if gt_soft is not None:
        with _stage("metrics", timings):
            rows = []
            for name, image in (("global", result.global_image),
                                ("local", result.local_image),
                                ("fused", result.fused)):
                if image is not None:
                    rows.append(evaluate_image(name, image, cxr, gt_soft, mask))
            result.report = MetricsReport(rows=tuple(rows))
    return result


def training_examples(samples, codec: PatchCodec):
    """(clean latent, condition) pairs covering both condition kinds.

    Every sample contributes a global example (conditioned on the full CXR)
    and a local example (conditioned on the lung-masked CXR); the clean
    target is the encoded soft-tissue image in both.
    """
    examples = []
    for sample in samples:
        z0 = codec.encode(sample.soft)
        examples.append((z0, Condition(codec.encode(sample.cxr), "global")))
        masked = masked_condition(sample.cxr, sample.lung_mask)
        examples.append((z0, Condition(codec.encode(masked), "local")))
    return examples


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """File-based entry: loads input/mask/ground truth per the config."""
    config.validate()
    if config.input is None:
        raise ConfigError("config needs an input image")
    cxr = read_image(config.input)
    gt_soft = (read_image(config.ground_truth)
               if config.ground_truth is not None else None)
    mask = (read_pgm_mask(config.mask)
            if config.mask != "threshold" else None)
    return run_pipeline_arrays(config, cxr, mask=mask, gt_soft=gt_soft,
                               out_dir=config.out_prefix)


@dataclass(frozen=True)
class BenchReport:
    steps: int
    repetitions: int
    stage_mean: dict
    stage_std: dict

    def table(self) -> str:
        lines = [f"steps={self.steps} repetitions={self.repetitions}",
                 f"{'stage':>14} {'mean_s':>10} {'std_s':>10}"]
        for name in sorted(self.stage_mean):
            lines.append(
                f"{name:>14} {self.stage_mean[name]:>10.4f} "
                f"{self.stage_std[name]:>10.4f}"
            )
        return "\n".join(lines) + "\n"


def bench(config: PipelineConfig, cxr: np.ndarray, repetitions: int = 3,
          mask: np.ndarray | None = None, gt_soft: np.ndarray | None = None,
          denoiser=None) -> BenchReport:
    """Per-stage wall time over ``repetitions`` runs, after one warm-up."""
    if repetitions < 1:
        raise ConfigError(f"repetitions must be >= 1, got {repetitions}")
    if config.steps != config.sampler_config().timesteps:
        raise ConfigError("sampler step count does not match config")
    runs = []
    for _ in range(repetitions + 1):  # first run warms caches, discarded
        result = run_pipeline_arrays(config, cxr, mask=mask, gt_soft=gt_soft,
                                     denoiser=denoiser)
        runs.append(result.timings)
    runs = runs[1:]
    names = sorted({name for timings in runs for name in timings})
    mean = {n: float(np.mean([r.get(n, 0.0) for r in runs])) for n in names}
    std = {
        n: float(np.std([r.get(n, 0.0) for r in runs], ddof=1))
        if repetitions > 1 else 0.0
        for n in names
    }
    return BenchReport(steps=config.steps, repetitions=repetitions,
                       stage_mean=mean, stage_std=std)
