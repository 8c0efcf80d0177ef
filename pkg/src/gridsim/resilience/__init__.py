"""Self-healing: super-peer election, erasure-coded registry mirrors and
adaptive checkpointing."""

from __future__ import annotations

from gridsim.discovery import Registry
from gridsim.resilience.erasure import ErasureParams, Share, decode_bytes, encode_bytes


def encode_registry(registry: Registry, params: ErasureParams) -> list[Share]:
    return encode_bytes(registry.serialize(), params, registry.version)


def decode_registry(shares, params: ErasureParams) -> Registry:
    return Registry.deserialize(decode_bytes(shares, params))
