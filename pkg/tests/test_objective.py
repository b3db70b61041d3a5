import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from burncast.objective import (
    ConfusionCounts,
    LossConfig,
    aggregate_metrics,
    bce_dice_loss,
    confusion_counts,
    metrics_from_counts,
)
from oracles import confusion_brute, metrics_brute


def random_mask_pair(rng, shape=(16, 16)):
    return (
        (rng.random(shape) < 0.3).astype(np.uint8),
        (rng.random(shape) < 0.3).astype(np.uint8),
    )


class TestConfusionCounts:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            pred, target = random_mask_pair(rng)
            c = confusion_counts(pred, target)
            assert (c.tp, c.fp, c.fn, c.tn) == confusion_brute(pred, target)

    def test_counts_sum_to_pixels(self):
        rng = np.random.default_rng(1)
        pred, target = random_mask_pair(rng, (64, 64))
        assert confusion_counts(pred, target).total == 64 * 64

    def test_region_restriction(self):
        pred = np.ones((4, 4), dtype=np.uint8)
        target = np.zeros((4, 4), dtype=np.uint8)
        region = np.zeros((4, 4), dtype=bool)
        region[:2] = True
        c = confusion_counts(pred, target, region=region)
        assert c.fp == 8 and c.total == 8

    def test_rejects_nonbinary(self):
        with pytest.raises(ValueError):
            confusion_counts(np.full((4, 4), 2), np.zeros((4, 4)))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            confusion_counts(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_addition_pools_counts(self):
        a = ConfusionCounts(1, 2, 3, 4)
        b = ConfusionCounts(10, 20, 30, 40)
        s = a + b
        assert (s.tp, s.fp, s.fn, s.tn) == (11, 22, 33, 44)

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            ConfusionCounts(-1, 0, 0, 0)


class TestMetricFormulas:
    @given(tp=st.integers(0, 40), fp=st.integers(0, 40), fn=st.integers(0, 40))
    @settings(max_examples=300, deadline=None)
    def test_matches_reference_formulas(self, tp, fp, fn):
        m = metrics_from_counts(ConfusionCounts(tp, fp, fn, 0))
        ref = metrics_brute(tp, fp, fn)
        assert m.dice == pytest.approx(ref["dice"])
        assert m.iou == pytest.approx(ref["iou"])
        assert m.precision == pytest.approx(ref["precision"])
        assert m.recall == pytest.approx(ref["recall"])

    def test_both_empty_is_perfect(self):
        m = metrics_from_counts(ConfusionCounts(0, 0, 0, 100))
        assert (m.dice, m.iou, m.precision, m.recall) == (1.0, 1.0, 1.0, 1.0)

    def test_all_false_negative_is_zero(self):
        m = metrics_from_counts(ConfusionCounts(0, 0, 10, 0))
        assert m.dice == 0.0 and m.recall == 0.0
        # no positive predictions: precision denominator is 0 but masks differ
        assert m.precision == 0.0

    def test_iou_never_exceeds_dice(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            tp, fp, fn = rng.integers(0, 50, size=3)
            m = metrics_from_counts(ConfusionCounts(int(tp), int(fp), int(fn), 0))
            assert m.iou <= m.dice + 1e-12


class TestAggregation:
    def test_micro_pools_before_dividing(self):
        counts = [ConfusionCounts(10, 0, 0, 0), ConfusionCounts(0, 5, 5, 0)]
        micro = aggregate_metrics(counts, "micro")
        assert micro.dice == pytest.approx(2 * 10 / (2 * 10 + 5 + 5))

    def test_macro_averages_per_sample(self):
        counts = [ConfusionCounts(10, 0, 0, 0), ConfusionCounts(0, 5, 5, 0)]
        macro = aggregate_metrics(counts, "macro")
        assert macro.dice == pytest.approx((1.0 + 0.0) / 2)

    def test_single_sample_micro_equals_macro(self):
        c = [ConfusionCounts(7, 3, 2, 1)]
        assert aggregate_metrics(c, "micro").dice == pytest.approx(
            aggregate_metrics(c, "macro").dice
        )

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            aggregate_metrics([], "micro")

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            aggregate_metrics([ConfusionCounts(1, 0, 0, 0)], "median")


class TestBceDiceLoss:
    def test_perfect_prediction_near_zero(self):
        target = torch.zeros(2, 1, 8, 8)
        target[0, 0, 2:5, 2:5] = 1.0
        logits = torch.where(target > 0, 40.0, -40.0)
        loss = bce_dice_loss(logits, target, LossConfig())
        assert loss.item() < 1e-3

    def test_worst_prediction_is_large(self):
        target = torch.zeros(1, 1, 8, 8)
        target[0, 0, :4] = 1.0
        logits = torch.where(target > 0, -40.0, 40.0)
        loss = bce_dice_loss(logits, target, LossConfig())
        assert loss.item() > 10

    def test_weights_scale_components(self):
        torch.manual_seed(0)
        logits = torch.randn(2, 1, 8, 8)
        target = (torch.rand(2, 1, 8, 8) > 0.7).float()
        both = bce_dice_loss(logits, target, LossConfig(1.0, 1.0))
        bce_only = bce_dice_loss(logits, target, LossConfig(1.0, 0.0))
        dice_only = bce_dice_loss(logits, target, LossConfig(0.0, 1.0))
        assert both.item() == pytest.approx(bce_only.item() + dice_only.item(), rel=1e-6)

    def test_gradient_flows(self):
        logits = torch.zeros(1, 1, 8, 8, requires_grad=True)
        target = torch.zeros(1, 1, 8, 8)
        target[0, 0, 0, 0] = 1.0
        bce_dice_loss(logits, target, LossConfig()).backward()
        assert logits.grad is not None
        assert torch.isfinite(logits.grad).all()

    def test_rejects_soft_targets(self):
        logits = torch.zeros(1, 1, 4, 4)
        with pytest.raises(ValueError):
            bce_dice_loss(logits, torch.full((1, 1, 4, 4), 0.5), LossConfig())

    def test_rejects_both_weights_zero(self):
        with pytest.raises(ValueError):
            LossConfig(0.0, 0.0)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            bce_dice_loss(torch.zeros(1, 1, 4, 4), torch.zeros(1, 1, 4, 5), LossConfig())
