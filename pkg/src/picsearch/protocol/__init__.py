from .audit import ALL_PREDICATES, AuditLog, audit_assert
from .entities import Client, CloudServer, KeyAgent, Network, SearchResult, TrustedParty
from .messages import Kind, Message, decode_frame, encode_frame
from .oracle import PlainPipeline
from .system import System

__all__ = [
    "ALL_PREDICATES", "AuditLog", "audit_assert", "Client", "CloudServer", "KeyAgent",
    "Network", "SearchResult", "TrustedParty", "Kind", "Message", "decode_frame",
    "encode_frame", "PlainPipeline", "System",
]
