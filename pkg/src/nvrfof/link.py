"""
RF-over-fiber delivery chain.

laser -> Mach-Zehnder intensity modulator -> fiber -> photodiode -> antenna.

The modulator transmission is T(V) = (1 + cos(pi V / v_pi + bias_phase)) / 2.
For a drive V(t) = v_rf sin(wt) the Jacobi-Anger expansion gives

    average     P_in (1 + cos(bias) J0(m)) / 2
    fundamental P_in |sin(bias)| J1(m)        (peak optical power swing)

with m = pi v_rf / v_pi. The photodiode is linear and feeds a resistive
load, so the recovered tone carries I1^2 R / 2.
"""

from dataclasses import dataclass, asdict
import math

from scipy import special

from .errors import InvalidInputError
from .units import dbm_to_mw, mw_to_dbm, dbm_mw_convert  # noqa: F401

QUADRATURE = -math.pi / 2


@dataclass(frozen=True)
class LinkParameters:
    """
    Parameters of the RFoF chain.

    Defaults are representative assumptions, not measured values: they put
    47 mW on the photodiode at quadrature with modulation index 0.2.
    ``cable_loss_db`` is an optional lumped loss between photodiode and
    antenna feedpoint (cable, mismatch).
    """

    p_laser: float = 100.0  # mW at modulator input
    insertion_loss: float = 0.94  # optical transmission factor
    v_pi: float = 5.0  # V
    bias_phase: float = QUADRATURE  # rad
    v_rf: float = 1.0 / math.pi  # V peak, gives m = 0.2 with v_pi = 5
    responsivity: float = 0.9  # A/W
    load_impedance: float = 50.0  # ohm
    cable_loss_db: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value):
                raise InvalidInputError(f"{name} must be finite")
        for name in ("p_laser", "v_pi", "responsivity", "load_impedance"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be > 0")
        if not 0 < self.insertion_loss <= 1:
            raise InvalidInputError("insertion_loss must lie in (0, 1]")
        if self.v_rf < 0:
            raise InvalidInputError("v_rf must be >= 0")
        if self.cable_loss_db < 0:
            raise InvalidInputError("cable_loss_db must be >= 0")

    @property
    def modulation_index(self):
        return math.pi * self.v_rf / self.v_pi

    @classmethod
    def with_modulation_index(cls, m, **kwargs):
        v_pi = kwargs.get("v_pi", cls.v_pi)
        kwargs["v_rf"] = m * v_pi / math.pi
        return cls(**kwargs)


@dataclass(frozen=True)
class LinkResult:
    p_opt_pd: float  # mW
    modulation_index: float  # None for end-point measurements
    p_rf_ant: float  # dBm, -inf when no tone is recovered
    efficiency: float

    @property
    def p_rf_ant_mw(self):
        return dbm_to_mw(self.p_rf_ant)

    def to_dict(self):
        return {
            "p_opt_pd_mw": self.p_opt_pd,
            "modulation_index": self.modulation_index,
            "p_rf_ant_dbm": self.p_rf_ant,
            "p_rf_ant_mw": self.p_rf_ant_mw,
            "efficiency": self.efficiency,
            "efficiency_percent": 100.0 * self.efficiency,
        }


def mzm_average_and_fundamental(link):
    """
    Average optical power at the photodiode (mW) and the fundamental fraction.

    The fraction is the peak optical power swing at the drive frequency
    divided by the average; 2 J1(m) at quadrature.
    """
    m = link.modulation_index
    p_in = link.p_laser * link.insertion_loss
    p_avg = 0.5 * p_in * (1.0 + math.cos(link.bias_phase) * float(special.j0(m)))
    swing = p_in * abs(math.sin(link.bias_phase)) * float(special.j1(m))
    if p_avg == 0.0:
        return 0.0, 0.0
    return p_avg, swing / p_avg


def photocurrent_fundamental(link):
    """Peak photocurrent (A) of the recovered tone."""
    p_avg, frac = mzm_average_and_fundamental(link)
    return link.responsivity * p_avg * 1e-3 * frac


def recovered_rf_power(link):
    """RF power at the antenna feedpoint in dBm (``-inf`` when no tone)."""
    i1 = photocurrent_fundamental(link)
    p_mw = 0.5 * i1**2 * link.load_impedance * 1e3
    if p_mw <= 0.0:
        return -math.inf
    return mw_to_dbm(p_mw) - link.cable_loss_db


def efficiency(p_rf_ant, p_opt_pd):
    """Optical-to-RF conversion efficiency P_RF,ant / P_opt,PD (dBm, mW in)."""
    if not (p_opt_pd > 0 and math.isfinite(p_opt_pd)):
        raise InvalidInputError("p_opt_pd must be > 0")
    return dbm_to_mw(p_rf_ant) / p_opt_pd


def evaluate_link(link):
    """Run the forward model and collect a :class:`LinkResult`."""
    p_avg, _ = mzm_average_and_fundamental(link)
    p_rf = recovered_rf_power(link)
    eta = efficiency(p_rf, p_avg) if p_avg > 0 else 0.0
    return LinkResult(p_avg, link.modulation_index, p_rf, eta)


def endpoint_result(p_opt_pd, p_rf_ant):
    """Efficiency from measured end-point powers only (mW optical, dBm RF)."""
    return LinkResult(p_opt_pd, None, p_rf_ant, efficiency(p_rf_ant, p_opt_pd))


# --- flat key/value configuration ------------------------------------------------

# Keys whose value may be given as <name>_mw or <name>_dbm.
_POWER_KEYS = ("p_laser", "p_opt_pd", "p_rf_ant")
_LINK_KEYS = {
    "insertion_loss",
    "v_pi",
    "bias_phase",
    "v_rf",
    "modulation_index",
    "responsivity",
    "load_impedance",
    "cable_loss_db",
}


def _power(cfg, name, unit):
    """Return the power ``name`` from ``cfg`` in ``unit`` ("mw"/"dbm"), or None."""
    mw, dbm = cfg.get(f"{name}_mw"), cfg.get(f"{name}_dbm")
    if mw is not None and dbm is not None:
        raise InvalidInputError(f"give only one of {name}_mw / {name}_dbm")
    if mw is None and dbm is None:
        return None
    try:
        if unit == "mw":
            return float(mw) if mw is not None else dbm_to_mw(float(dbm))
        if dbm is not None:
            return float(dbm)
        return -math.inf if float(mw) == 0 else mw_to_dbm(float(mw))
    except (TypeError, ValueError) as exc:
        key = f"{name}_mw" if mw is not None else f"{name}_dbm"
        raise InvalidInputError(f"{key}: {exc}") from None


def link_from_config(cfg):
    """
    Interpret a flat key/value link document.

    If either end-point key (``p_opt_pd_*`` / ``p_rf_ant_*``) is present the
    document is an end-point measurement and both are required; otherwise
    the remaining keys override :class:`LinkParameters` defaults. Returns a
    :class:`LinkResult`.
    """
    known = {f"{n}_{u}" for n in _POWER_KEYS for u in ("mw", "dbm")} | _LINK_KEYS
    unknown = sorted(k for k, v in cfg.items() if k not in known and v is not None)
    if unknown:
        raise InvalidInputError("unknown link keys: " + ", ".join(unknown))

    p_opt = _power(cfg, "p_opt_pd", "mw")
    p_rf = _power(cfg, "p_rf_ant", "dbm")
    if p_opt is not None or p_rf is not None:
        missing = []
        if p_opt is None:
            missing.append("p_opt_pd_mw|p_opt_pd_dbm")
        if p_rf is None:
            missing.append("p_rf_ant_dbm|p_rf_ant_mw")
        if missing:
            raise InvalidInputError("missing required keys: " + ", ".join(missing))
        return endpoint_result(p_opt, p_rf)

    kwargs = {}
    for key, value in cfg.items():
        if key in _LINK_KEYS and value is not None:
            try:
                kwargs[key] = float(value)
            except (TypeError, ValueError):
                raise InvalidInputError(f"{key}: expected a number, got {value!r}") from None
    p_laser = _power(cfg, "p_laser", "mw")
    if p_laser is not None:
        kwargs["p_laser"] = p_laser
    m = kwargs.pop("modulation_index", None)
    if m is not None:
        if "v_rf" in kwargs:
            raise InvalidInputError("give only one of v_rf / modulation_index")
        return evaluate_link(LinkParameters.with_modulation_index(m, **kwargs))
    return evaluate_link(LinkParameters(**kwargs))
