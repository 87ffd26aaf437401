"""Plain-text key=value pipeline configuration.

Lines are ``key = value``; blank lines and ``#`` comments are ignored.
Unknown keys, malformed values, and out-of-range numerics raise
ConfigError (CLI exit code 2). See configs/demo.cfg for a worked example.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .sampling import (CLEAN_FORMS, FINAL_FORMS, RENOISE_FORMS,
                       DEFAULT_ALPHA_LOCAL, SamplerConfig)
from .schedule import (DEFAULT_SIGMA_DATA, PAPER_BETA_END, PAPER_BETA_START,
                       PAPER_TIMESTEPS)

OUTPUT_PATHS = ("global", "local", "dual", "fused")
MASK_SOURCES_DOC = "threshold | path to a 0/255 PGM file"


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one end-to-end run needs; file-serializable."""

    input: str | None = None
    ground_truth: str | None = None
    mask: str = "threshold"
    model: str = "oracle"
    codec: str = "identity"
    steps: int = PAPER_TIMESTEPS
    beta_start: float = PAPER_BETA_START
    beta_end: float = PAPER_BETA_END
    sigma_data: float = DEFAULT_SIGMA_DATA
    alpha_l: float = DEFAULT_ALPHA_LOCAL
    seed: int = 0
    path: str = "fused"
    share_noise: bool = False
    clean_form: str = "direct"
    consistency_mix: bool = False
    renoise_form: str = "stepwise"
    final_form: str = "clean"
    fusion_tol: float = 1e-8
    fusion_max_iter: int = 0  # 0 = solver default (10x unknowns)
    out_prefix: str = "out"

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            timesteps=self.steps,
            alpha_local=self.alpha_l,
            seed=self.seed,
            path="dual" if self.path == "fused" else self.path,
            share_noise=self.share_noise,
            clean_form=self.clean_form,
            consistency_mix=self.consistency_mix,
            renoise_form=self.renoise_form,
            final_form=self.final_form,
        )

    def validate(self, check_files: bool = True) -> None:
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if not (0.0 < self.beta_start <= self.beta_end < 1.0):
            raise ConfigError(
                f"beta range [{self.beta_start}, {self.beta_end}] invalid"
            )
        if self.sigma_data <= 0.0:
            raise ConfigError(f"sigma_data must be positive, got {self.sigma_data}")
        if not math.isfinite(self.alpha_l):
            raise ConfigError(f"alpha_l must be finite, got {self.alpha_l}")
        if self.path not in OUTPUT_PATHS:
            raise ConfigError(f"path must be one of {OUTPUT_PATHS}, got {self.path!r}")
        if self.clean_form not in CLEAN_FORMS:
            raise ConfigError(f"clean_form must be one of {CLEAN_FORMS}")
        if self.renoise_form not in RENOISE_FORMS:
            raise ConfigError(f"renoise_form must be one of {RENOISE_FORMS}")
        if self.final_form not in FINAL_FORMS:
            raise ConfigError(f"final_form must be one of {FINAL_FORMS}")
        if self.fusion_tol <= 0.0:
            raise ConfigError(f"fusion_tol must be positive, got {self.fusion_tol}")
        if self.fusion_max_iter < 0:
            raise ConfigError("fusion_max_iter must be >= 0")
        if check_files:
            if self.input is not None and not Path(self.input).exists():
                raise ConfigError(f"input file not found: {self.input}")
            if self.ground_truth is not None and not Path(self.ground_truth).exists():
                raise ConfigError(f"ground_truth file not found: {self.ground_truth}")
            if self.model != "oracle" and not Path(self.model).exists():
                raise ConfigError(f"model checkpoint not found: {self.model}")
            if self.mask != "threshold" and not Path(self.mask).exists():
                raise ConfigError(f"mask file not found: {self.mask}")


_BOOL_WORDS = {"true": True, "false": False, "1": True, "0": False,
               "yes": True, "no": False}


def _coerce(name: str, kind, raw: str):
    if kind == "bool":
        if raw.lower() not in _BOOL_WORDS:
            raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
        return _BOOL_WORDS[raw.lower()]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: expected a number, got {raw!r}") from None
    return raw


def parse_config_text(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    known = {f.name: f.type for f in fields(PipelineConfig)}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kind = str(known[key])
        if "bool" in kind:
            updates[key] = _coerce(key, "bool", raw)
        elif "int" in kind:
            updates[key] = _coerce(key, "int", raw)
        elif "float" in kind:
            updates[key] = _coerce(key, "float", raw)
        else:
            updates[key] = raw if raw.lower() != "none" else None
    return replace(base or PipelineConfig(), **updates)


def load_config(path, base: PipelineConfig | None = None) -> PipelineConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, base)
