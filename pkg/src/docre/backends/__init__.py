"""
Chat backends package
Routing, the remote HTTP backend, the gold oracle, and replay/recording backends
"""

from .base import (
    BackendResponse,
    ChatBackend,
    ChatRequest,
    DecodeSettings,
    RequestContext,
    StageBinding,
    StageRouting,
    chat,
)

__all__ = [
    'BackendResponse',
    'ChatBackend',
    'ChatRequest',
    'DecodeSettings',
    'RequestContext',
    'StageBinding',
    'StageRouting',
    'chat',
]
