"""Joint capitalization and punctuation restoration on a small numpy stack.

The pieces are usable on their own: ``autodiff`` (reverse-mode tensors),
``crf`` (linear-chain CRF), ``tokenizer`` (BPE), ``corpus`` (labeling and
segmentation), ``model``, ``training``, ``evaluation`` and ``checkpoint``.
"""

from .corpus import CapLabel, LabeledToken, PuncLabel, Segment, normalize_and_label, restore, segment
from .model import JointModel, ModelConfig, Variant, build_variant
from .tokenizer import SubwordVocab, train_vocab
from .training import TrainConfig, joint_loss, train

__version__ = "0.1.0"

__all__ = [
    "CapLabel",
    "JointModel",
    "LabeledToken",
    "ModelConfig",
    "PuncLabel",
    "Segment",
    "SubwordVocab",
    "TrainConfig",
    "Variant",
    "build_variant",
    "joint_loss",
    "normalize_and_label",
    "restore",
    "segment",
    "train",
    "train_vocab",
]
