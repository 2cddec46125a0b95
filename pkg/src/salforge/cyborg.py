"""Composite saliency-guided loss.

Blends a divergence between the model's class activation map and a human (or
human-like) saliency map with classification cross-entropy:

    loss = alpha * human_term + (1 - alpha) * cross_entropy

The human term is the mean squared error between the min-max-normalized CAM
and the saliency map brought onto the CAM grid (unit view, bilinear resize,
min-max normalization). Gradients flow through the CAM, including the head
weights' appearance in the raw CAM; the argmin/argmax pixel selections of the
normalization are held fixed at their forward values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import CamClassifier, cross_entropy, log_softmax, softmax
from .saliency import SaliencyMap, UnitMap, minmax_normalize_array, resize_bilinear, to_unit


@dataclass(frozen=True)
class CyborgConfig:
    """Weight alpha in [0, 1] on the human term; (1 - alpha) goes to CE."""

    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


def saliency_target(saliency: SaliencyMap, width: int, height: int) -> np.ndarray:
    """Saliency map brought onto the CAM grid and min-max normalized."""
    resized = resize_bilinear(to_unit(saliency), width, height)
    return minmax_normalize_array(resized.values)


def human_loss(cam_map: UnitMap, saliency: SaliencyMap) -> float:
    """Mean squared error between the CAM and the prepared saliency target."""
    target = saliency_target(saliency, cam_map.width, cam_map.height)
    return float(np.mean((cam_map.values - target) ** 2))


def cyborg_loss(logits, label: int, cam_map: UnitMap, saliency: SaliencyMap,
                config: CyborgConfig) -> float:
    """alpha * human_loss + (1 - alpha) * cross_entropy for one sample."""
    a = config.alpha
    return a * human_loss(cam_map, saliency) + (1.0 - a) * cross_entropy(logits, label)


def batch_loss_and_gradients(model: CamClassifier, images: np.ndarray,
                             labels: np.ndarray, targets, alpha: float):
    """Mean composite loss over a batch plus gradients for every parameter.

    targets is a per-sample list: the normalized saliency target on the CAM
    grid (as produced by saliency_target), or None for samples carrying no
    map, whose human term is zero. The CAM path is skipped entirely when
    alpha == 0, so a zero-alpha run is the cross-entropy baseline, float op
    for float op.

    Returns (loss, gradients, logits); gradients align with
    model.parameters().
    """
    b = images.shape[0]
    labels = np.asarray(labels)
    logits, feats = model.forward_batch(images)
    rows = np.arange(b)
    ce = -log_softmax(logits)[rows, labels]
    dlogits = softmax(logits)
    dlogits[rows, labels] -= 1.0
    dlogits *= (1.0 - alpha) / b

    human_terms = np.zeros(b)
    dfeats = None
    head_w_extra = None
    if alpha > 0.0:
        dfeats = np.zeros_like(feats)
        head_w_extra = np.zeros_like(model.head.weight)
        n = feats.shape[2] * feats.shape[3]
        for i in range(b):
            target = targets[i]
            if target is None:
                continue
            w_row = model.head.weight[labels[i]]
            raw = np.tensordot(w_row, feats[i], axes=1)
            lo = raw.min()
            hi = raw.max()
            if hi == lo:
                # degenerate CAM: normalized map is all zeros and, by the
                # fixed-extrema rule, contributes no gradient
                human_terms[i] = np.mean(target ** 2)
                continue
            span = hi - lo
            cam_vals = (raw - lo) / span
            diff = cam_vals - target
            human_terms[i] = np.mean(diff ** 2)
            g = (alpha / b) * (2.0 / n) * diff  # dL/d(normalized cam)
            draw = g / span
            s1 = g.sum() / span
            s2 = (g * cam_vals).sum() / span
            imin = np.unravel_index(np.argmin(raw), raw.shape)
            imax = np.unravel_index(np.argmax(raw), raw.shape)
            draw[imax] -= s2
            draw[imin] += s2 - s1
            dfeats[i] += w_row[:, None, None] * draw
            head_w_extra[labels[i]] += np.tensordot(feats[i], draw, axes=([1, 2], [0, 1]))

    grads = model.backward_batch(dlogits, dfeats)
    if head_w_extra is not None:
        grads[-2] = grads[-2] + head_w_extra
    loss = float(np.mean((1.0 - alpha) * ce + alpha * human_terms))
    return loss, grads, logits


def cyborg_gradients(model: CamClassifier, image: np.ndarray, label: int,
                     saliency: SaliencyMap | None, config: CyborgConfig):
    """Gradients of the composite loss for a single (C, H, W) sample.

    The CAM grid of this engine matches the image grid (stride-1, pad-1
    convolutions), which is where the saliency target is prepared.
    """
    target = None
    if saliency is not None:
        target = saliency_target(saliency, image.shape[2], image.shape[1])
    _, grads, _ = batch_loss_and_gradients(
        model, image[None], np.array([label]), [target], config.alpha
    )
    return grads
