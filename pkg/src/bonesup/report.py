"""Side-by-side evaluation of guidance and fusion choices on phantoms.

Produces the repo's comparison tables: sampling paths (global, local
under each guidance weight) and fusion on/off, each scored with the
standard metrics against the phantom ground truth. Used by the
acceptance suite and scripts/path_report.py.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .codec import PatchCodec
from .denoise import Condition
from .fusion import poisson_fuse
from .lungmask import masked_condition
from .metrics import MetricsReport, evaluate_image
from .sampling import CondSpec, SamplerConfig, sample
from .schedule import Schedule


@dataclass(frozen=True)
class PathComparison:
    """Per-variant metric reports over a common phantom set."""

    reports: dict

    def mean(self, variant: str, metric: str) -> float:
        return self.reports[variant].mean(metric)

    def table(self) -> str:
        lines = [
            f"{'variant':>16} {'bsr':>16} {'mse':>16} {'psnr':>14} {'grad_sim':>16}"
        ]
        for name, report in self.reports.items():
            lines.append(
                f"{name:>16} "
                f"{report.mean('bsr'):>8.4f}+-{report.std('bsr'):<6.4f} "
                f"{report.mean('mse'):>9.2e}+-{report.std('mse'):<6.1e} "
                f"{report.mean('psnr'):>7.2f}+-{report.std('psnr'):<5.2f} "
                f"{report.mean('grad_sim'):>8.4f}+-{report.std('grad_sim'):<6.4f}"
            )
        return "\n".join(lines) + "\n"


def compare_paths(denoiser, phantoms, schedule: Schedule, codec: PatchCodec,
                  guidance=(("vanilla", 1.0), ("leg", 3.0)),
                  fusion_tol: float = 1e-8,
                  sampler_config: SamplerConfig | None = None) -> PathComparison:
    """Run global/local/fused variants over phantoms and score them.

    ``guidance`` lists (name, alpha_local) settings for the local path;
    each contributes a local row and a fused row. The sampler seed is each
    phantom's own seed (local stream XOR 1, as in the dual run).
    """
    base = sampler_config or SamplerConfig(timesteps=schedule.timesteps)
    rows: dict[str, list] = {"global": []}
    for name, _ in guidance:
        rows[f"local[{name}]"] = []
        rows[f"fused[{name}]"] = []

    for phantom in phantoms:
        mask = phantom.lung_mask
        spec = CondSpec(
            global_cond=Condition(codec.encode(phantom.cxr), "global"),
            local_cond=Condition(
                codec.encode(masked_condition(phantom.cxr, mask)), "local"
            ),
        )

        def score(name, image):
            rows[name].append(
                evaluate_image(f"{phantom.seed}", image, phantom.cxr,
                               phantom.soft, mask, phantom.bone_mask)
            )

        global_cfg = replace(base, path="global", seed=phantom.seed)
        s_g = codec.decode(sample(denoiser, spec, schedule, global_cfg))
        score("global", s_g)
        for name, alpha in guidance:
            local_cfg = replace(base, path="local", seed=phantom.seed ^ 1,
                                alpha_local=alpha)
            s_l = codec.decode(sample(denoiser, spec, schedule, local_cfg))
            score(f"local[{name}]", s_l)
            fused = poisson_fuse(s_g, s_l, mask, tol=fusion_tol)
            score(f"fused[{name}]", fused)

    return PathComparison(
        reports={name: MetricsReport(rows=tuple(r)) for name, r in rows.items()}
    )
