"""Python bindings for the lopro layer quantizer."""

import json

from . import _lopro
from ._lopro import (
    StageError,
    average_bits,
    fwht,
    inspect,
    pack_bits,
    reconstruct,
    synthetic_layer,
    unpack_bits,
)

__all__ = [
    "StageError",
    "average_bits",
    "default_config",
    "fwht",
    "inspect",
    "pack_bits",
    "quantize",
    "reconstruct",
    "synthetic_layer",
    "unpack_bits",
]


def default_config():
    return json.loads(_lopro.default_config())


def quantize(weights, activations, **config):
    """Quantize one layer. Keyword names follow the CLI flags with '_' for '-',
    e.g. quantize(w, x, bits=2, group_size=64, b_i=64, b_h=64)."""
    cfg = {k.replace("_", "-"): v for k, v in config.items()}
    return _lopro.quantize(weights, activations, json.dumps(cfg))
