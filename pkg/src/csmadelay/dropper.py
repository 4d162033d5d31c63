"""Threshold job dropping."""


def drop_decision(Q, Z, V, beta, drop_max):
    """Drop ``drop_max`` jobs when ``Q + Z`` exceeds ``V * beta``, else none.

    The per-slot objective ``d*s*(Q + Z - V*beta)`` is linear in ``d``, so
    the optimum sits at an end point of ``[0, drop_max]``.
    """
    return drop_max if Q + Z > V * beta else 0
