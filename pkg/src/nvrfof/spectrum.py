"""
CW-ODMR spectrum synthesis.

The microwave-off PL level is normalized to 1, so the depth of a dip is its
contrast (I_off - I_on) / I_off directly. Every resonance is a Lorentzian
whose depth and width follow a two-parameter saturation model in the
dimensionless drive s = P / P_sat:

    C(s)  = c_inf * s / (1 + s)
    dv(s) = fwhm0 * sqrt(1 + s)

Each of the four NV orientations carries a quarter of ``C(s)`` per
transition, so a line shared by all four orientations is ``C(s)`` deep.
"""

from dataclasses import dataclass, field
import io
import json
import math
import os
import tempfile

import numpy as np

from . import spin
from .errors import InvalidInputError
from .units import dbm_to_mw

CSV_HEADER = "frequency_mhz,pl_normalized"


@dataclass(frozen=True)
class DriveParameters:
    """Microwave drive at the antenna feedpoint plus saturation constants.

    p_rf: delivered power (dBm); p_sat: saturation power (mW);
    c_inf: asymptotic contrast; fwhm0: unbroadened FWHM (MHz).
    """

    p_rf: float = 0.0
    p_sat: float = 30.0
    c_inf: float = 0.12
    fwhm0: float = 8.0

    def __post_init__(self):
        if math.isnan(self.p_rf) or self.p_rf == math.inf:
            raise InvalidInputError("p_rf must be a finite dBm value or -inf")
        if not (math.isfinite(self.p_sat) and self.p_sat > 0):
            raise InvalidInputError("p_sat must be > 0")
        if not 0 < self.c_inf < 1:
            raise InvalidInputError("c_inf must lie in (0, 1)")
        if not (math.isfinite(self.fwhm0) and self.fwhm0 > 0):
            raise InvalidInputError("fwhm0 must be > 0")

    @property
    def saturation(self):
        """Dimensionless drive s = P_mW / p_sat."""
        return dbm_to_mw(self.p_rf) / self.p_sat


@dataclass(frozen=True)
class LineShape:
    center: float
    fwhm: float
    contrast: float

    def __post_init__(self):
        if not self.fwhm > 0:
            raise InvalidInputError("fwhm must be > 0")
        if not 0 <= self.contrast < 1:
            raise InvalidInputError("contrast must lie in [0, 1)")


@dataclass
class Spectrum:
    """Normalized PL sampled on an ascending frequency grid (MHz)."""

    frequencies: np.ndarray
    pl_normalized: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.pl_normalized = np.asarray(self.pl_normalized, dtype=float)
        f, y = self.frequencies, self.pl_normalized
        if f.ndim != 1 or y.shape != f.shape:
            raise InvalidInputError("frequencies and pl_normalized must be 1-D arrays of equal length")
        if f.size < 2:
            raise InvalidInputError("a spectrum needs at least 2 points")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(y))):
            raise InvalidInputError("spectrum values must be finite")
        if np.any(np.diff(f) <= 0):
            raise InvalidInputError("frequencies must be strictly ascending")


def compute_contrast(i_off, i_on):
    """ODMR contrast (I_off - I_on) / I_off from integrated PL."""
    if not i_off > 0:
        raise InvalidInputError("i_off must be > 0")
    if i_on < 0:
        raise InvalidInputError("i_on must be >= 0")
    return (i_off - i_on) / i_off


def saturation_contrast(drive):
    s = drive.saturation
    return drive.c_inf * s / (1.0 + s)


def broadened_fwhm(drive):
    return drive.fwhm0 * math.sqrt(1.0 + drive.saturation)


def calibrate_saturation(p1_dbm, c1, p2_dbm, c2):
    """
    Solve (c_inf, p_sat) so that C(p1) = c1 and C(p2) = c2 exactly.

    Requires p1 < p2 and c1 < c2 with c1/P1 > c2/P2 (sub-linear growth).
    """
    q1, q2 = dbm_to_mw(p1_dbm), dbm_to_mw(p2_dbm)
    if not (q1 < q2 and 0 < c1 < c2):
        raise InvalidInputError("need p1 < p2 and 0 < c1 < c2")
    a1, a2 = c1 / q1, c2 / q2
    if a1 <= a2:
        raise InvalidInputError("contrast must grow sub-linearly with power to saturate")
    # c = c_inf q / (q + p_sat)  =>  (c/q)(q + p_sat) is the same at both points
    p_sat = (c2 - c1) / (a1 - a2)
    c_inf = c1 * (q1 + p_sat) / q1
    return c_inf, p_sat


def lorentzian_dip(f, center, fwhm):
    """Unit-depth Lorentzian profile with the given FWHM."""
    hw2 = (0.5 * fwhm) ** 2
    return hw2 / ((f - center) ** 2 + hw2)


def spectrum_lines(params, field, drive):
    """Resonances contributing to the synthesized spectrum, as :class:`LineShape`."""
    c = saturation_contrast(drive)
    width = broadened_fwhm(drive)
    n_axes = len(spin.NV_AXES)
    return [LineShape(f0, width, c * n / n_axes) for f0, n in spin.ensemble_transitions(params, field)]


def frequency_grid(f_start, f_stop, n_points):
    if int(n_points) != n_points or n_points < 2:
        raise InvalidInputError("grid requires >= 2 points")
    if not (math.isfinite(f_start) and math.isfinite(f_stop) and f_stop > f_start):
        raise InvalidInputError("grid requires f_start < f_stop")
    return np.linspace(f_start, f_stop, int(n_points))


def synthesize_spectrum(params, field, drive, grid, noise_sigma=0.0, seed=0):
    """
    Noisy normalized PL spectrum of an NV ensemble.

    Parameters
    ----------
    params : spin.NVParameters
    field : spin.FieldVector
        Lab-frame field in gauss.
    drive : DriveParameters
    grid : tuple
        ``(f_start_mhz, f_stop_mhz, n_points)``.
    noise_sigma : float
        Standard deviation of additive white Gaussian noise on PL.
    seed : int
        Seed for ``numpy.random.default_rng``; the output is a pure
        function of the inputs and this seed.
    """
    if grid is None or len(grid) != 3:
        raise InvalidInputError("grid must be (f_start, f_stop, n_points)")
    f = frequency_grid(*grid)
    if not (math.isfinite(noise_sigma) and noise_sigma >= 0):
        raise InvalidInputError("noise_sigma must be >= 0")

    pl = np.ones_like(f)
    for line in spectrum_lines(params, field, drive):
        pl -= line.contrast * lorentzian_dip(f, line.center, line.fwhm)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        pl += rng.normal(0.0, noise_sigma, f.size)

    meta = {
        "bx_gauss": field.bx,
        "by_gauss": field.by,
        "bz_gauss": field.bz,
        "p_rf_dbm": drive.p_rf,
        "noise_sigma": noise_sigma,
        "seed": int(seed),
    }
    return Spectrum(f, pl, meta)


# --- CSV serialization -------------------------------------------------------


def _format_meta_value(value):
    if isinstance(value, str):
        try:
            json.loads(value)
        except ValueError:
            if "\n" not in value and value == value.strip():
                return value
        return json.dumps(value)
    return json.dumps(value)


def _parse_meta_value(text):
    try:
        return json.loads(text)
    except ValueError:
        return text


def spectrum_to_csv(spectrum):
    """Serialize to CSV text: ``# key=value`` metadata lines, header, then rows."""
    buf = io.StringIO()
    for key, value in spectrum.meta.items():
        if not key or key != key.strip() or "=" in key or "\n" in key:
            raise InvalidInputError(f"metadata key {key!r} must be non-empty, unpadded, without '=' or newlines")
        buf.write(f"# {key}={_format_meta_value(value)}\n")
    buf.write(CSV_HEADER + "\n")
    for f, y in zip(spectrum.frequencies.tolist(), spectrum.pl_normalized.tolist()):
        buf.write(f"{f!r},{y!r}\n")
    return buf.getvalue()


class SpectrumFormatError(InvalidInputError):
    """Malformed spectrum CSV; ``line`` is the 1-based offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


def spectrum_from_csv(text):
    """Parse CSV text produced by :func:`spectrum_to_csv`."""
    meta = {}
    rows = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" not in body:
                raise SpectrumFormatError("metadata line must be '# key=value'", lineno)
            key, value = body.split("=", 1)
            meta[key.strip()] = _parse_meta_value(value)
            continue
        if not header_seen:
            if line.replace(" ", "") != CSV_HEADER:
                raise SpectrumFormatError(f"expected header {CSV_HEADER!r}", lineno)
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise SpectrumFormatError("expected 2 comma-separated values", lineno)
        try:
            f, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise SpectrumFormatError("non-numeric value", lineno) from None
        if not (math.isfinite(f) and math.isfinite(y)):
            raise SpectrumFormatError("non-finite value", lineno)
        if rows and f <= rows[-1][0]:
            raise SpectrumFormatError("frequencies must be strictly ascending", lineno)
        rows.append((f, y))
    if not header_seen:
        raise SpectrumFormatError("empty file" if not text.strip() else "missing header")
    if not rows:
        raise SpectrumFormatError("no data rows")
    if len(rows) < 2:
        raise SpectrumFormatError("a spectrum needs at least 2 points")
    arr = np.array(rows)
    return Spectrum(arr[:, 0], arr[:, 1], meta)


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_spectrum(path, spectrum):
    atomic_write_text(path, spectrum_to_csv(spectrum))


def read_spectrum(path):
    with open(path) as fh:
        return spectrum_from_csv(fh.read())
