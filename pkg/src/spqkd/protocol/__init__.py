"""BB84 endpoints, classical channel and post-processing."""

from .bb84 import PreparedPulse, SiftedKey, alice_prepare, bob_choose_basis, qber, sift
from .cascade import ReconciliationResult, cascade_reconcile
from .privacy import privacy_amplify
from .session import SessionReport, run_session
from .wire import ClassicalMessage, MessageType, endpoint_pair

__all__ = [
    "ClassicalMessage",
    "MessageType",
    "PreparedPulse",
    "ReconciliationResult",
    "SessionReport",
    "SiftedKey",
    "alice_prepare",
    "bob_choose_basis",
    "cascade_reconcile",
    "endpoint_pair",
    "privacy_amplify",
    "qber",
    "run_session",
    "sift",
]
