"""dBm / mW conversion."""

import math

from .errors import InvalidInputError


def dbm_to_mw(p_dbm):
    """10^(P/10); -inf dBm maps to 0 mW."""
    if math.isnan(p_dbm) or p_dbm == math.inf:
        raise InvalidInputError("dBm value must be finite or -inf")
    return 10.0 ** (p_dbm / 10.0)


def mw_to_dbm(p_mw):
    if not (p_mw > 0 and math.isfinite(p_mw)):
        raise InvalidInputError("mW value must be finite and > 0")
    return 10.0 * math.log10(p_mw)


def dbm_mw_convert(value, direction):
    """Convert ``value`` with ``direction`` either ``"dbm->mw"`` or ``"mw->dbm"``."""
    if direction == "dbm->mw":
        return dbm_to_mw(value)
    if direction == "mw->dbm":
        return mw_to_dbm(value)
    raise InvalidInputError(f"unknown direction {direction!r}")
