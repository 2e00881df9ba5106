"""Model and training configuration.

The detector couples three subnetworks: a patch branch embedding each of the
16 grid patches, a global branch embedding the 224x149 thumbnail (plus two
coordinate channels), and a fusion perceptron mapping the concatenated
embeddings to a crop rectangle and a crop probability. ``variant`` selects
which branches exist: ``joint`` keeps both, ``global`` drops the patch
branch, ``patch`` drops the global branch.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

__all__ = ["ModelConfig", "VARIANTS", "learning_rate"]

VARIANTS = ("joint", "global", "patch")

PATCH_SIZE = 96
THUMB_WIDTH = 224
THUMB_HEIGHT = 149
GRID_CELLS = 16


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and optimization settings.

    ``base_width`` scales the residual trunk widths (stages use width
    multipliers 1/2/4/8); 64 is the standard full-size network, smaller
    values give cheap models for sanity checks. The embedding dimension is
    independent of trunk width, so the fusion input stays 16*64 + 64 = 1088
    for the default joint model at any width.
    """

    variant: str = "joint"
    embed_dim: int = 64
    patch_classes: int = GRID_CELLS
    base_width: int = 64
    fusion_hidden: tuple[int, int] = (512, 128)
    loss_weights: tuple[float, float, float] = (2.4, 3.0, 1.0)
    epochs: int = 25
    lr_start: float = 5e-3
    lr_end: float = 1.5e-3
    batch_size: int = 64
    seed: int = 0
    augment: bool = True
    workers: int = 0

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("embed_dim", "patch_classes", "base_width", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.lr_start <= 0 or self.lr_end <= 0:
            raise ValueError("learning rates must be positive")
        if len(self.fusion_hidden) != 2 or any(h < 1 for h in self.fusion_hidden):
            raise ValueError(f"fusion_hidden must be two positive widths, got {self.fusion_hidden}")
        if len(self.loss_weights) != 3 or any(w < 0 for w in self.loss_weights):
            raise ValueError(f"loss_weights must be three non-negative values, got {self.loss_weights}")
        if self.workers < 0:
            raise ValueError("workers must be >= 0")

    @property
    def fusion_input(self) -> int:
        """Width of the concatenated embedding entering the fusion perceptron."""
        if self.variant == "joint":
            return self.patch_classes * self.embed_dim + self.embed_dim
        if self.variant == "global":
            return self.embed_dim
        return self.patch_classes * self.embed_dim

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fusion_hidden"] = list(self.fusion_hidden)
        d["loss_weights"] = list(self.loss_weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "fusion_hidden" in d:
            d["fusion_hidden"] = tuple(d["fusion_hidden"])
        if "loss_weights" in d:
            d["loss_weights"] = tuple(d["loss_weights"])
        return cls(**d)

    def with_(self, **kwargs) -> "ModelConfig":
        return replace(self, **kwargs)


def learning_rate(epoch: int, config: ModelConfig) -> float:
    """Per-epoch learning rate, decaying geometrically from lr_start to lr_end.

    Epoch 0 uses lr_start and the final epoch (epochs - 1) uses lr_end
    exactly; intermediate epochs interpolate on a geometric scale.
    """
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if config.epochs == 1:
        return config.lr_start
    ratio = config.lr_end / config.lr_start
    return config.lr_start * ratio ** (epoch / (config.epochs - 1))
