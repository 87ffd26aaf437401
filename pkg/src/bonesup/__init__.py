"""Desk-scale chest X-ray bone suppression.

Latent consistency-style sampling with dual-path conditioning and
local-enhanced guidance, followed by Poisson global-local fusion; built
and evaluated end-to-end on procedural phantoms with paired ground truth.
"""

from .codec import PatchCodec, make_codec
from .denoise import (Condition, OracleDenoiser, ToyArch, ToyDenoiser,
                      gradient_check, train_step)
from .fusion import cg_solve, poisson_fuse
from .lungmask import apply_mask, lung_mask
from .metrics import bsr, mse, psnr
from .phantom import GeneratorConfig, PhantomSample, generate
from .sampling import (CondSpec, SamplerConfig, dual_path_sample,
                       forward_noise, leg_mix, reverse_step, sample)
from .schedule import Schedule, make_schedule, paper_schedule

__version__ = "0.1.0"

__all__ = [
    "Condition", "CondSpec", "GeneratorConfig", "OracleDenoiser",
    "PatchCodec", "PhantomSample", "SamplerConfig", "Schedule", "ToyArch",
    "ToyDenoiser", "apply_mask", "bsr", "cg_solve", "dual_path_sample",
    "forward_noise", "generate", "gradient_check", "leg_mix", "lung_mask",
    "make_codec", "make_schedule", "mse", "paper_schedule", "poisson_fuse",
    "psnr", "reverse_step", "sample", "train_step",
]
