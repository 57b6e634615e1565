"""Transformer model server for the trace-bridge line protocol.

Fine-tunes an encoder-only transformer with a binary head and serves
its predictions and pooled latent vectors over newline-delimited JSON,
so protocol clients can treat it as a black-box predictor.
"""

from hfbridge.model import BridgeServerConfig, finetune, init_base, load_served_model
from hfbridge.server import serve

__all__ = [
    "BridgeServerConfig",
    "finetune",
    "init_base",
    "load_served_model",
    "serve",
]
