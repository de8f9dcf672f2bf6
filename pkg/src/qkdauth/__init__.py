"""Four-state quantum key distribution simulator with identity verification."""

from .adversary import AdversaryKind, AdversaryStrategy
from .auth import AuthParams, AuthVerdict, SplitRule
from .photonics import Basis, ChannelParams
from .pipeline import SessionConfig, SessionReport, Variant, run_session
from .reconciliation import ReconParams

__all__ = [
    "AdversaryKind", "AdversaryStrategy", "AuthParams", "AuthVerdict", "Basis", "ChannelParams",
    "ReconParams", "SessionConfig", "SessionReport", "SplitRule", "Variant", "run_session",
]
__version__ = "0.1.0"
