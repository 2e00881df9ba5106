"""Weighted three-term training objective.

Total loss = (w1 / 16) * sum_k CE(patch_logits_k, label_k)
           + (w2 / 4) * [squared error over the four rect coordinates]
           + w3 * BCE(crop_prob, cropped)

The breakdown reports the unweighted per-term quantities: ``patch`` is the
mean per-patch cross-entropy, ``rect`` the per-sample sum of the four squared
coordinate errors, ``class`` the binary cross-entropy — each averaged over
the batch — so ``total = w1 * patch + (w2 / 4) * rect + w3 * class``.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor

from .model import PredictionBundle

__all__ = ["NonFiniteLossError", "LossBreakdown", "compute_loss", "PROB_CLAMP"]

PROB_CLAMP = 1e-7


class NonFiniteLossError(RuntimeError):
    """A loss term evaluated to NaN or infinity; the message names the terms."""


class LossBreakdown(dict):
    """Mapping with keys total/patch/rect/class; values are 0-dim tensors."""

    @property
    def total(self) -> Tensor:
        return self["total"]


def compute_loss(
    pred: PredictionBundle,
    patch_labels: Tensor | None,
    rect: Tensor,
    cropped: Tensor,
    weights: tuple[float, float, float],
) -> LossBreakdown:
    """Evaluate the objective for a batch.

    ``patch_labels`` is (B, 16) int64 (None or ignored when the variant has
    no patch branch), ``rect`` is (B, 4) in [0, 1], ``cropped`` is (B,) in
    {0, 1}. Raises NonFiniteLossError naming the offending terms if any term
    is not finite.
    """
    w1, w2, w3 = weights
    zero = pred.rect_hat.new_zeros(())

    if pred.patch_logits is not None:
        if patch_labels is None:
            raise ValueError("patch labels required when the model has a patch branch")
        b, k, c = pred.patch_logits.shape
        patch_term = F.cross_entropy(
            pred.patch_logits.reshape(b * k, c), patch_labels.reshape(b * k)
        )
    else:
        patch_term = zero

    rect_term = ((pred.rect_hat - rect) ** 2).sum(dim=1).mean()

    p = pred.crop_prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    c = cropped.to(p.dtype)
    class_term = -(c * torch.log(p) + (1.0 - c) * torch.log1p(-p)).mean()

    total = w1 * patch_term + (w2 / 4.0) * rect_term + w3 * class_term

    terms = {"patch": patch_term, "rect": rect_term, "class": class_term, "total": total}
    bad = [name for name, value in terms.items() if not torch.isfinite(value).all()]
    if bad:
        raise NonFiniteLossError(f"non-finite loss terms: {', '.join(sorted(bad))}")
    return LossBreakdown(total=total, patch=patch_term, rect=rect_term, **{"class": class_term})
