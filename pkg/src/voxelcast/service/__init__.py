from .app import CLASS_PALETTE, create_app
from .rle import RLEError, decode_rle, encode_rle
from .sessions import Session, SessionError, SessionManager, StepRecord

__all__ = [
    "CLASS_PALETTE",
    "create_app",
    "RLEError",
    "decode_rle",
    "encode_rle",
    "Session",
    "SessionError",
    "SessionManager",
    "StepRecord",
]
