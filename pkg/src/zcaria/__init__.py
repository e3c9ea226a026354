"""Zero-correlation linear cryptanalysis workbench for reduced-round ARIA."""

from .cipher import (
    CipherProfile,
    PairSet,
    decrypt,
    diffuse,
    encrypt,
    generate_dataset,
    load_profile,
    random_round_keys,
    substitute,
)

__version__ = "0.1.0"

__all__ = [
    "CipherProfile",
    "PairSet",
    "decrypt",
    "diffuse",
    "encrypt",
    "generate_dataset",
    "load_profile",
    "random_round_keys",
    "substitute",
]
