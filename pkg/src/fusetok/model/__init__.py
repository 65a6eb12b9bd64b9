from .tokenizer import (
    AcousticEncoder,
    Decoder,
    FeatureTensor,
    ModelError,
    Role,
    SemanticEncoder,
    Tokenizer,
    fuse,
    parameter_hash,
)

__all__ = [
    "AcousticEncoder",
    "Decoder",
    "FeatureTensor",
    "ModelError",
    "Role",
    "SemanticEncoder",
    "Tokenizer",
    "fuse",
    "parameter_hash",
]
