"""HTTP service, wire encodings, and the CLI."""

from .app import ApiSession, create_app, serve
from .wire import decode_tile, encode_tile, mask_to_runs, runs_to_mask

__all__ = [
    "ApiSession",
    "create_app",
    "decode_tile",
    "encode_tile",
    "mask_to_runs",
    "runs_to_mask",
    "serve",
]
