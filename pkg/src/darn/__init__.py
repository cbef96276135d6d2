"""Product-consistent intrinsic image decomposition on a small numpy autodiff engine."""

from .checkpoint import ModelBundle, load_checkpoint, save_checkpoint
from .estimator import IntrinsicDecomposer
from .model import DecompositionPair, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig
from .training import TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "ModelBundle", "load_checkpoint", "save_checkpoint", "IntrinsicDecomposer",
    "DecompositionPair", "Discriminator", "DiscriminatorConfig", "Generator", "GeneratorConfig",
    "TrainConfig", "evaluate", "train",
]
