"""Per-slot rate control: auxiliary rate ``eta`` and job admission ``r``."""

from __future__ import annotations

from dataclasses import dataclass

from .utility import UnknownUtilityError, is_registered


@dataclass(frozen=True)
class RateDecision:
    eta: float
    r: int


def compute_eta(Y, V, s, arrival_max, utility):
    """Maximiser of ``V*U(eta*s) - Y*eta*s`` over ``eta in [0, arrival_max]``."""
    if not is_registered(utility):
        raise UnknownUtilityError(f"unregistered utility {utility!r}")
    target = utility.deriv_inv(Y / V)
    return max(min(target / s, arrival_max), 0)


def admit(Y, Q, arrivals):
    """Admit every arrival iff tokens exceed the backlog (strictly)."""
    return arrivals if Y - Q > 0 else 0


def decide(Y, Q, arrivals, V, s, arrival_max, utility) -> RateDecision:
    return RateDecision(compute_eta(Y, V, s, arrival_max, utility), admit(Y, Q, arrivals))
