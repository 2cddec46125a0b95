"""Saliency-mimicking autoencoder.

A small convolutional autoencoder regresses fine-grained saliency maps from
input images: two stride-2 conv+ReLU encoder blocks (1 -> 8 -> 16 channels),
two transposed-conv decoder blocks (16 -> 8 -> 1) realized as zero-stuffing
plus stride-1 convolutions, and a sigmoid output. Trained with MSE against
the unit view of the target maps using Adam. Once trained it generates
saliency for unseen images at scale.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import (
    Adam,
    CheckpointError,
    Conv2d,
    FitTo,
    ReLU,
    Sigmoid,
    ZeroStuff,
    load_arrays,
    save_arrays,
)
from .errors import DimensionMismatch, EmptyDataset, NumericError
from .saliency import SaliencyMap, round_half_away_from_zero, to_unit


class MimicAutoencoder:
    """Image -> saliency regressor with sigmoid output in (0, 1)."""

    def __init__(self, seed=0, rng=None):
        rng = np.random.default_rng(seed) if rng is None else rng
        self.enc1 = Conv2d(1, 8, stride=2, pad=1, rng=rng)
        self.enc2 = Conv2d(8, 16, stride=2, pad=1, rng=rng)
        self.dec1 = Conv2d(16, 8, stride=1, pad=1, rng=rng)
        self.dec2 = Conv2d(8, 1, stride=1, pad=1, rng=rng)
        self._relu1 = ReLU()
        self._relu2 = ReLU()
        self._relu3 = ReLU()
        self._up1 = ZeroStuff(stride=2, extra=1)
        self._up2 = ZeroStuff(stride=2, extra=1)
        self._fit = FitTo()
        self._sigmoid = Sigmoid()
        self.input_hw = None  # set by training; enforced at generation time

    def forward_batch(self, images):
        """images (B, 1, H, W) -> sigmoid saliency (B, 1, H, W)."""
        self._fit.target_hw = images.shape[2:]
        x = self._relu1.forward(self.enc1.forward(images))
        x = self._relu2.forward(self.enc2.forward(x))
        x = self._relu3.forward(self.dec1.forward(self._up1.forward(x)))
        x = self.dec2.forward(self._up2.forward(x))
        return self._sigmoid.forward(self._fit.forward(x))

    def backward_batch(self, dout):
        dx = self._fit.backward(self._sigmoid.backward(dout))
        dx = self._up2.backward(self.dec2.backward(dx))
        dx = self._up1.backward(self.dec1.backward(self._relu3.backward(dx)))
        dx = self.enc2.backward(self._relu2.backward(dx))
        self.enc1.backward(self._relu1.backward(dx))
        return self.gradients()

    def parameters(self):
        return (self.enc1.parameters() + self.enc2.parameters()
                + self.dec1.parameters() + self.dec2.parameters())

    def gradients(self):
        return (self.enc1.gradients() + self.enc2.gradients()
                + self.dec1.gradients() + self.dec2.gradients())

    def save(self, path):
        save_arrays(path, self.parameters())

    @classmethod
    def load(cls, path):
        arrays = load_arrays(path)
        model = cls()
        params = model.parameters()
        if len(arrays) != len(params):
            raise CheckpointError(f"expected {len(params)} arrays, found {len(arrays)}")
        for param, loaded in zip(params, arrays):
            if param.shape != loaded.shape:
                raise CheckpointError(f"shape {loaded.shape} does not match {param.shape}")
            param[...] = loaded
        return model


@dataclass(frozen=True)
class MimicTrainConfig:
    learning_rate: float = 0.0001
    epochs: int = 50
    batch_size: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")


def train_mimic(pairs, config: MimicTrainConfig):
    """Fit the autoencoder to (image, saliency) pairs with Adam + MSE.

    pairs is a sequence of (image (H, W) float array, SaliencyMap). Returns
    (model, per-epoch mean MSE history). Deterministic given config.seed.
    """
    if not pairs:
        raise EmptyDataset("mimic training needs at least one (image, saliency) pair")
    hw = pairs[0][0].shape
    for image, foi in pairs:
        if image.shape != hw or (foi.height, foi.width) != hw:
            raise DimensionMismatch("all mimic training images and maps must share dimensions")
    images = np.stack([np.asarray(img, dtype=np.float64) for img, _ in pairs])[:, None]
    targets = np.stack([to_unit(foi).values for _, foi in pairs])[:, None]

    rng = np.random.default_rng(config.seed)
    model = MimicAutoencoder(rng=rng)
    model.input_hw = hw
    optimizer = Adam(config.learning_rate)
    n = images.shape[0]
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            out = model.forward_batch(images[idx])
            diff = out - targets[idx]
            loss = float(np.mean(diff ** 2))
            if not np.isfinite(loss):
                raise NumericError(f"non-finite mimic loss at epoch {epoch}")
            grads = model.backward_batch(2.0 * diff / diff.size)
            optimizer.step(model.parameters(), grads)
            losses.append(loss)
        history.append(float(np.mean(losses)))
    return model, history


def saliency_mse(model: MimicAutoencoder, pairs) -> float:
    """Mean squared error of the model's saliency against unit-view targets."""
    if not pairs:
        raise EmptyDataset("need at least one pair to evaluate")
    images = np.stack([np.asarray(img, dtype=np.float64) for img, _ in pairs])[:, None]
    targets = np.stack([to_unit(foi).values for _, foi in pairs])[:, None]
    out = model.forward_batch(images)
    return float(np.mean((out - targets) ** 2))


def generate_saliency(model: MimicAutoencoder, image: np.ndarray) -> SaliencyMap:
    """Generate an 8-bit fine-grained saliency map for one (H, W) image."""
    image = np.asarray(image, dtype=np.float64)
    if model.input_hw is not None and image.shape != tuple(model.input_hw):
        raise DimensionMismatch(
            f"image is {image.shape}, model was trained on {tuple(model.input_hw)}"
        )
    out = model.forward_batch(image[None, None])[0, 0]
    scaled = round_half_away_from_zero(out * 255.0)
    return SaliencyMap(np.clip(scaled, 0, 255).astype(np.uint8))
