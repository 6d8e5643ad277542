"""Scene tokenizer: shared-codebook residual quantization of BEV latents."""

from .codebook import (
    Codebook,
    CodebookError,
    codebook_stats,
    perplexity,
    quantize_map,
    quantize_vector,
)
from .losses import (
    LossWeights,
    class_weights_from_counts,
    focal_loss,
    lovasz_softmax,
    tokenizer_loss,
)
from .model import SceneTokenizer, TokenizerConfigError, TokenizerHparams
from .nets import DecoderNet, EncoderNet
from .quantize import (
    HistoryQueue,
    QuantizerConfig,
    QuantizerConfigError,
    ResidualQuantizer,
    TokenizationResult,
    resize_map,
)

__all__ = [
    "Codebook",
    "CodebookError",
    "codebook_stats",
    "perplexity",
    "quantize_map",
    "quantize_vector",
    "LossWeights",
    "class_weights_from_counts",
    "focal_loss",
    "lovasz_softmax",
    "tokenizer_loss",
    "SceneTokenizer",
    "TokenizerConfigError",
    "TokenizerHparams",
    "DecoderNet",
    "EncoderNet",
    "HistoryQueue",
    "QuantizerConfig",
    "QuantizerConfigError",
    "ResidualQuantizer",
    "TokenizationResult",
    "resize_map",
]
