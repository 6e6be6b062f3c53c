"""embed-bridge: corpus JSONL in, vector JSONL out, one real model in between."""

from .encoder import BridgeConfig, BridgeError, encode_file

__version__ = "0.1.0"

__all__ = ["BridgeConfig", "BridgeError", "encode_file", "__version__"]
