import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bonesup.metrics import (ImageMetrics, MetricsReport, bone_mask_from_pair,
                             bsr, evaluate_image, gradient_similarity, mse,
                             psnr)


def test_mse_identical_zero():
    x = np.random.default_rng(0).uniform(0, 1, (8, 8))
    assert mse(x, x.copy()) == 0.0


def test_mse_constant_offset():
    gt = np.random.default_rng(1).uniform(0, 0.8, (8, 8))
    assert mse(gt + 0.1, gt) == pytest.approx(0.01, rel=1e-12)


def test_mse_dimension_mismatch():
    with pytest.raises(ValueError):
        mse(np.zeros((4, 4)), np.zeros((4, 5)))


def test_psnr_cap_on_identical():
    x = np.full((4, 4), 0.3)
    assert psnr(x, x.copy()) == 100.0


def test_psnr_twenty_db():
    gt = np.full((10, 10), 0.4)
    assert psnr(gt + 0.1, gt) == pytest.approx(20.0, abs=1e-9)


def test_psnr_thirty_db():
    gt = np.zeros((10, 10))
    pred = gt.copy()
    pred += math.sqrt(1e-3)
    assert psnr(pred, gt) == pytest.approx(30.0, abs=1e-9)


def test_bsr_perfect_suppression(phantoms64):
    sample = phantoms64[0]
    assert bsr(sample.soft, sample.cxr, sample.soft, sample.bone_mask) == 1.0


def test_bsr_no_suppression(phantoms64):
    sample = phantoms64[0]
    assert bsr(sample.cxr, sample.cxr, sample.soft, sample.bone_mask) == 0.0


def test_bsr_half_amplitude_residual(phantoms64):
    sample = phantoms64[0]
    pred = sample.soft + 0.5 * (sample.cxr - sample.soft)
    value = bsr(pred, sample.cxr, sample.soft, sample.bone_mask)
    assert value == pytest.approx(0.75, abs=1e-12)


def test_bsr_empty_bone_mask_is_one():
    x = np.random.default_rng(2).uniform(0, 1, (6, 6))
    assert bsr(x, x, x, np.zeros((6, 6), bool)) == 1.0


def test_bone_mask_threshold():
    cxr = np.full((4, 4), 0.5)
    soft = cxr.copy()
    cxr[1, 1] += 0.05
    cxr[2, 2] += 0.01
    mask = bone_mask_from_pair(cxr, soft)
    assert mask[1, 1] and not mask[2, 2]
    assert mask.sum() == 1


def test_gradient_similarity_self_is_one(phantoms64):
    sample = phantoms64[0]
    value = gradient_similarity(sample.soft, sample.soft, sample.lung_mask)
    assert value == pytest.approx(1.0, abs=1e-9)


def test_gradient_similarity_flat_regions_count_as_agreeing():
    flat = np.full((8, 8), 0.5)
    assert gradient_similarity(flat, flat) == pytest.approx(1.0)


def test_gradient_similarity_inverted_texture_negative():
    rng = np.random.default_rng(3)
    base = rng.uniform(0.4, 0.6, (16, 16))
    inverted = 1.0 - base
    assert gradient_similarity(inverted, base) < -0.9


def test_gradient_similarity_empty_mask():
    x = np.random.default_rng(4).uniform(0, 1, (8, 8))
    assert gradient_similarity(x, x, np.zeros((8, 8), bool)) == 1.0


@given(seed=st.integers(0, 5000))
@settings(max_examples=25)
def test_mse_psnr_order_consistency(seed):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0, 1, (6, 6))
    a = np.clip(gt + rng.normal(0, 0.05, gt.shape), 0, 1)
    b = np.clip(gt + rng.normal(0, 0.2, gt.shape), 0, 1)
    if mse(a, gt) == mse(b, gt):
        return
    assert (mse(a, gt) < mse(b, gt)) == (psnr(a, gt) > psnr(b, gt))


@given(scale=st.floats(0.0, 1.0))
@settings(max_examples=25)
def test_bsr_decreasing_in_residual_energy(scale):
    from bonesup.phantom import generate_one

    sample = generate_one(42, 0, 64)
    pred_full = sample.soft + scale * (sample.cxr - sample.soft)
    pred_more = sample.soft + min(1.0, scale + 0.1) * (sample.cxr - sample.soft)
    full = bsr(pred_full, sample.cxr, sample.soft, sample.bone_mask)
    more = bsr(pred_more, sample.cxr, sample.soft, sample.bone_mask)
    assert more <= full + 1e-12
    assert full <= 1.0


def test_mse_symmetric():
    rng = np.random.default_rng(5)
    a, b = rng.uniform(0, 1, (5, 5)), rng.uniform(0, 1, (5, 5))
    assert mse(a, b) == mse(b, a)


def test_report_aggregates_sample_std():
    rows = tuple(
        ImageMetrics(image_id=str(i), bsr=v, mse=v, psnr=v, grad_sim=v)
        for i, v in enumerate([0.5, 0.7, 0.9])
    )
    report = MetricsReport(rows=rows)
    assert report.mean("bsr") == pytest.approx(0.7)
    assert report.std("bsr") == pytest.approx(np.std([0.5, 0.7, 0.9], ddof=1))
    single = MetricsReport(rows=rows[:1])
    assert single.std("psnr") == 0.0


def test_report_table_and_csv(tmp_path, phantoms64):
    sample = phantoms64[0]
    row = evaluate_image("0001", sample.soft, sample.cxr, sample.soft,
                         sample.lung_mask, sample.bone_mask)
    report = MetricsReport(rows=(row,))
    text = report.table()
    assert "image_id" in text and "0001" in text
    csv_path = tmp_path / "metrics.csv"
    report.to_csv(csv_path)
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "image_id,bsr,mse,psnr,grad_sim"
    fields = lines[1].split(",")
    assert fields[0] == "0001"
    assert float(fields[1]) == 1.0  # perfect suppression
    assert float(fields[3]) == 100.0  # capped psnr


def test_evaluate_image_derives_bone_mask(phantoms64):
    sample = phantoms64[0]
    row = evaluate_image("x", sample.soft, sample.cxr, sample.soft,
                         sample.lung_mask)
    assert row.bsr == 1.0
