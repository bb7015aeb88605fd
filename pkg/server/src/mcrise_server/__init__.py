"""Reference scoring server for the mcrise JSON wire protocol."""

__version__ = "0.1.0"

from .app import make_app
from .backends import (
    BackendError,
    ClassifierBackend,
    SyntheticBackend,
    UnknownLabelError,
    backend_from_string,
)
from .conformance import ConformanceReport, conformance_check, default_fixtures
from .protocol import ProtocolError, parse_score_request

__all__ = [
    "__version__",
    "make_app",
    "BackendError",
    "ClassifierBackend",
    "SyntheticBackend",
    "UnknownLabelError",
    "backend_from_string",
    "ConformanceReport",
    "conformance_check",
    "default_fixtures",
    "ProtocolError",
    "parse_score_request",
]
