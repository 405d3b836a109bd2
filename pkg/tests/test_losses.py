import math

import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from pydantic import ValidationError

from app.core.errors import InvalidDistribution
from app.modules.losses import (
    InTrustParams,
    LossConfig,
    cross_entropy,
    dce,
    in_trust,
    label_smoothed_cross_entropy,
    token_loss,
)


def distributions(min_classes=2, max_classes=6):
    """Strictly positive distributions over a small vocabulary."""
    return st.lists(st.floats(0.05, 1.0), min_size=min_classes, max_size=max_classes).map(
        lambda w: torch.tensor(w, dtype=torch.float64) / sum(w)
    )


class TestCrossEntropy:
    def test_value(self):
        assert float(cross_entropy([0.7, 0.2, 0.1], 0)) == pytest.approx(-math.log(0.7))

    def test_floor(self):
        assert float(cross_entropy([1.0, 0.0], 1)) == pytest.approx(-math.log(1e-12))

    def test_batched(self):
        probs = torch.tensor([[0.5, 0.5], [0.9, 0.1]], dtype=torch.float64)
        values = cross_entropy(probs, [1, 0])
        assert values.shape == (2,)
        assert values.tolist() == pytest.approx([math.log(2), -math.log(0.9)])

    def test_rejects_unnormalized(self):
        with pytest.raises(InvalidDistribution):
            cross_entropy([0.5, 0.6], 0)

    def test_rejects_negative(self):
        with pytest.raises(InvalidDistribution):
            cross_entropy([1.2, -0.2], 0)

    def test_rejects_label_out_of_range(self):
        with pytest.raises(InvalidDistribution):
            cross_entropy([0.5, 0.5], 2)


class TestDce:
    def test_uniform_two_classes(self):
        assert float(dce([0.5, 0.5], 0, delta=0.5)) == pytest.approx(0.83699, abs=1e-5)

    def test_full_trust_is_entropy(self):
        probs = [0.6, 0.3, 0.1]
        entropy = -sum(p * math.log(p) for p in probs)
        assert float(dce(probs, 2, delta=1.0)) == pytest.approx(entropy)

    def test_bounded_when_confidently_wrong(self):
        probs = torch.tensor([1e-9, 1.0 - 1e-9], dtype=torch.float64)
        assert float(dce(probs, 0, delta=0.5)) == pytest.approx(-math.log(0.5), abs=1e-6)
        assert float(cross_entropy(probs, 0)) > 20

    @pytest.mark.parametrize("delta", [0.0, -0.1, 1.5])
    def test_invalid_delta(self, delta):
        with pytest.raises(ValueError):
            dce([0.5, 0.5], 0, delta=delta)

    @given(distributions(), st.floats(0.01, 1.0), st.data())
    def test_non_negative(self, probs, delta, data):
        label = data.draw(st.integers(0, probs.numel() - 1))
        assert float(dce(probs, label, delta)) >= 0.0


class TestInTrust:
    @given(distributions(), st.data())
    def test_ce_only_matches_cross_entropy(self, probs, data):
        label = data.draw(st.integers(0, probs.numel() - 1))
        params = InTrustParams(alpha=1.0, beta=0.0)
        assert float(in_trust(probs, label, params)) == pytest.approx(float(cross_entropy(probs, label)))

    @given(distributions(), st.data())
    def test_dce_only_matches_dce(self, probs, data):
        label = data.draw(st.integers(0, probs.numel() - 1))
        params = InTrustParams(alpha=0.0, beta=1.0, delta=0.3)
        assert float(in_trust(probs, label, params)) == pytest.approx(float(dce(probs, label, 0.3)))

    def test_default_is_sum(self):
        probs = [0.2, 0.3, 0.5]
        expected = float(cross_entropy(probs, 1)) + float(dce(probs, 1, 0.5))
        assert float(in_trust(probs, 1)) == pytest.approx(expected)

    def test_needs_a_weight(self):
        with pytest.raises(ValidationError):
            InTrustParams(alpha=0.0, beta=0.0)

    def test_gradient(self):
        logits = torch.randn(3, 5, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
        logits.requires_grad_(True)
        labels = torch.tensor([0, 3, 4])

        def fn(x):
            return in_trust(torch.softmax(x, -1), labels, validate=False)

        assert torch.autograd.gradcheck(fn, (logits,))


class TestLabelSmoothing:
    def test_zero_epsilon_is_cross_entropy(self):
        probs = [0.1, 0.6, 0.3]
        assert float(label_smoothed_cross_entropy(probs, 1, 0.0)) == pytest.approx(float(cross_entropy(probs, 1)))

    def test_value(self):
        probs = [0.25, 0.75]
        expected = 0.9 * -math.log(0.75) + 0.1 * -(math.log(0.25) + math.log(0.75)) / 2
        assert float(label_smoothed_cross_entropy(probs, 1, 0.1)) == pytest.approx(expected)


class TestTokenLoss:
    def test_ignores_padding(self):
        logits = torch.randn(1, 3, 7, generator=torch.Generator().manual_seed(1))
        targets = torch.tensor([[5, 6, 0]])
        loss = token_loss(LossConfig(name="ce"))(logits, targets)
        expected = torch.nn.functional.cross_entropy(logits[0, :2], targets[0, :2])
        assert float(loss) == pytest.approx(float(expected), rel=1e-5)

    def test_all_padding_is_zero(self):
        logits = torch.randn(2, 2, 4, requires_grad=True)
        loss = token_loss()(logits, torch.zeros(2, 2, dtype=torch.long))
        loss.backward()
        assert float(loss) == 0.0
        assert torch.count_nonzero(logits.grad) == 0

    @pytest.mark.parametrize("name", ["ce", "in_trust", "label_smoothing"])
    def test_named_losses_are_finite_and_differentiable(self, name):
        logits = torch.randn(2, 4, 9, requires_grad=True, generator=torch.Generator().manual_seed(2))
        targets = torch.tensor([[4, 5, 2, 0], [6, 7, 8, 2]])
        loss_fn = token_loss(LossConfig(name=name))
        loss = loss_fn(logits, targets)
        loss.backward()
        assert torch.isfinite(loss)
        assert torch.isfinite(logits.grad).all()
        assert loss_fn.__name__ == f"{name}_loss"

    def test_unknown_name(self):
        with pytest.raises(ValidationError):
            LossConfig(name="focal")
