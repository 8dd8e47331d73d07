"""Privacy-preserving content-based image search over matrix-HE ciphertexts."""

from .config import SystemConfig
from .errors import PicError
from .fixedpoint import FxpConfig
from .he import Ciphertext, HEKey, HEParams
from .protocol import PlainPipeline, System

__version__ = "0.1.0"

__all__ = ["SystemConfig", "PicError", "FxpConfig", "Ciphertext", "HEKey", "HEParams",
           "PlainPipeline", "System"]
