"""Three-branch crop detector.

The patch branch is an 18-layer residual network (stages of 2/2/2/2 basic
blocks) turning each 96x96 RGB patch into an embedding, topped by a single
linear layer classifying the patch into one of the 16 grid cells. The global
branch is a 34-layer residual network (stages of 3/4/6/3) over the 224x149
thumbnail with two extra coordinate channels. A three-layer perceptron fuses
the concatenated embeddings into five outputs: four sigmoid-bounded crop
rectangle coordinates and one crop logit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import Tensor, nn
from torchvision.models.resnet import BasicBlock, conv1x1

from .config import (
    GRID_CELLS,
    PATCH_SIZE,
    THUMB_HEIGHT,
    THUMB_WIDTH,
    ModelConfig,
)

__all__ = ["ConstructionError", "PredictionBundle", "ResidualTrunk", "CropDetector", "build_model"]

PATCH_STAGE_BLOCKS = (2, 2, 2, 2)
GLOBAL_STAGE_BLOCKS = (3, 4, 6, 3)


class ConstructionError(ValueError):
    """Model wiring does not satisfy its shape contract."""


@dataclass
class PredictionBundle:
    """One forward pass: per-patch logits/embeddings, global embedding, heads.

    ``patch_logits`` is (B, 16, 16) — per patch, per grid cell; ``rect_hat``
    is (B, 4) in [0, 1]; ``crop_prob`` is (B,) in [0, 1]. Branch outputs that
    the variant lacks are None.
    """

    patch_logits: Optional[Tensor]
    patch_embeddings: Optional[Tensor]
    global_embedding: Optional[Tensor]
    rect_hat: Tensor
    crop_logit: Tensor
    crop_prob: Tensor


class ResidualTrunk(nn.Module):
    """Residual convnet: 7x7 stem, four strided stages, pooled linear embedding.

    ``stage_blocks`` of (2, 2, 2, 2) yields the standard 18-layer network and
    (3, 4, 6, 3) the 34-layer one (counting convolutions plus the final
    linear). ``base_width`` scales all stage widths together.
    """

    def __init__(
        self,
        in_channels: int,
        stage_blocks: tuple[int, int, int, int],
        base_width: int,
        out_dim: int,
    ) -> None:
        super().__init__()
        if len(stage_blocks) != 4:
            raise ConstructionError(f"expected 4 stages, got {len(stage_blocks)}")
        w = base_width
        self.conv1 = nn.Conv2d(in_channels, w, kernel_size=7, stride=2, padding=3, bias=False)
        self.bn1 = nn.BatchNorm2d(w)
        self.relu = nn.ReLU(inplace=True)
        self.maxpool = nn.MaxPool2d(kernel_size=3, stride=2, padding=1)
        widths = (w, 2 * w, 4 * w, 8 * w)
        strides = (1, 2, 2, 2)
        stages = []
        inplanes = w
        for planes, blocks, stride in zip(widths, stage_blocks, strides):
            stages.append(self._make_stage(inplanes, planes, blocks, stride))
            inplanes = planes
        self.stages = nn.Sequential(*stages)
        self.avgpool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(widths[-1], out_dim)
        self.depth = 2 * sum(stage_blocks) + 2
        self._init_weights()

    @staticmethod
    def _make_stage(inplanes: int, planes: int, blocks: int, stride: int) -> nn.Sequential:
        downsample = None
        if stride != 1 or inplanes != planes:
            downsample = nn.Sequential(
                conv1x1(inplanes, planes, stride), nn.BatchNorm2d(planes)
            )
        layers = [BasicBlock(inplanes, planes, stride, downsample)]
        layers.extend(BasicBlock(planes, planes) for _ in range(1, blocks))
        return nn.Sequential(*layers)

    def _init_weights(self) -> None:
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
            elif isinstance(m, nn.BatchNorm2d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)

    def forward(self, x: Tensor) -> Tensor:
        x = self.relu(self.bn1(self.conv1(x)))
        x = self.maxpool(x)
        x = self.stages(x)
        x = self.avgpool(x)
        return self.fc(torch.flatten(x, 1))


def _fusion_mlp(in_dim: int, hidden: tuple[int, int], out_dim: int) -> nn.Sequential:
    h1, h2 = hidden
    return nn.Sequential(
        nn.Linear(in_dim, h1),
        nn.ReLU(inplace=True),
        nn.Linear(h1, h2),
        nn.ReLU(inplace=True),
        nn.Linear(h2, out_dim),
    )


class CropDetector(nn.Module):
    """Patch branch + global branch + fusion perceptron, per the config variant."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        self.patch_trunk: Optional[ResidualTrunk] = None
        self.patch_head: Optional[nn.Linear] = None
        self.global_trunk: Optional[ResidualTrunk] = None
        if config.variant != "global":
            self.patch_trunk = ResidualTrunk(
                3, PATCH_STAGE_BLOCKS, config.base_width, config.embed_dim
            )
            self.patch_head = nn.Linear(config.embed_dim, config.patch_classes)
        if config.variant != "patch":
            self.global_trunk = ResidualTrunk(
                5, GLOBAL_STAGE_BLOCKS, config.base_width, config.embed_dim
            )
        self.fusion = _fusion_mlp(config.fusion_input, config.fusion_hidden, 5)
        self._check_wiring()

    def _check_wiring(self) -> None:
        cfg = self.config
        expected = {
            "joint": cfg.patch_classes * cfg.embed_dim + cfg.embed_dim,
            "global": cfg.embed_dim,
            "patch": cfg.patch_classes * cfg.embed_dim,
        }[cfg.variant]
        actual = self.fusion[0].in_features
        if actual != expected:
            raise ConstructionError(
                f"fusion input is {actual}, expected {expected} for variant {cfg.variant}"
            )
        if self.patch_trunk is not None and self.patch_trunk.depth != 18:
            raise ConstructionError(f"patch trunk has depth {self.patch_trunk.depth}, expected 18")
        if self.global_trunk is not None and self.global_trunk.depth != 34:
            raise ConstructionError(f"global trunk has depth {self.global_trunk.depth}, expected 34")

    def forward(
        self, patches: Optional[Tensor] = None, thumbs: Optional[Tensor] = None
    ) -> PredictionBundle:
        """patches: (B, 16, 3, 96, 96); thumbs: (B, 5, 149, 224)."""
        patch_emb = patch_logits = global_emb = None
        pieces = []
        if self.patch_trunk is not None:
            if patches is None:
                raise ValueError(f"variant {self.config.variant} requires patches")
            b, k, c, h, w = patches.shape
            if (k, c, h, w) != (GRID_CELLS, 3, PATCH_SIZE, PATCH_SIZE):
                raise ValueError(
                    f"patches must be (B, {GRID_CELLS}, 3, {PATCH_SIZE}, {PATCH_SIZE}), "
                    f"got {tuple(patches.shape)}"
                )
            flat = self.patch_trunk(patches.reshape(b * k, c, h, w))
            patch_emb = flat.view(b, k, self.config.embed_dim)
            patch_logits = self.patch_head(patch_emb)
            pieces.append(patch_emb.reshape(b, k * self.config.embed_dim))
        if self.global_trunk is not None:
            if thumbs is None:
                raise ValueError(f"variant {self.config.variant} requires thumbnails")
            if tuple(thumbs.shape[1:]) != (5, THUMB_HEIGHT, THUMB_WIDTH):
                raise ValueError(
                    f"thumbnails must be (B, 5, {THUMB_HEIGHT}, {THUMB_WIDTH}), "
                    f"got {tuple(thumbs.shape)}"
                )
            global_emb = self.global_trunk(thumbs)
            pieces.append(global_emb)
        fused = self.fusion(torch.cat(pieces, dim=1) if len(pieces) > 1 else pieces[0])
        rect_hat = torch.sigmoid(fused[:, :4])
        crop_logit = fused[:, 4]
        return PredictionBundle(
            patch_logits=patch_logits,
            patch_embeddings=patch_emb,
            global_embedding=global_emb,
            rect_hat=rect_hat,
            crop_logit=crop_logit,
            crop_prob=torch.sigmoid(crop_logit),
        )


def build_model(config: ModelConfig) -> CropDetector:
    """Construct the detector for a config; wiring errors raise ConstructionError."""
    return CropDetector(config)
