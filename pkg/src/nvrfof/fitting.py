"""
Multi-Lorentzian fitting of ODMR spectra and sweep analysis.

Fit model, with a shared microwave-off level ``b``::

    PL(f) = b * (1 - sum_k a_k * h_k^2 / ((f - c_k)^2 + h_k^2)),   h_k = w_k / 2

so ``a_k`` is the line contrast in the (I_off - I_on) / I_off sense and
``w_k`` is its FWHM. Parameters are packed as
``[b, c_1, w_1, a_1, c_2, w_2, a_2, ...]``.
"""

from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from .errors import DegenerateFitError, InvalidInputError
from .spectrum import LineShape, atomic_write_text

PARAMS_PER_LINE = 3
_LINE_FIELDS = ("center", "fwhm", "contrast")
SMOOTHING_WINDOWS = (5, 9, 17, 33)


@dataclass(frozen=True)
class FitConfig:
    """
    Knobs for peak detection and the least-squares solver.

    ``peak_threshold`` of None means three times the estimated noise std.
    """

    n_lines: object = "auto"
    max_iterations: int = 200
    convergence_tol: float = 1e-9
    peak_threshold: float = None

    def __post_init__(self):
        if self.n_lines != "auto":
            if isinstance(self.n_lines, bool) or int(self.n_lines) != self.n_lines or self.n_lines < 1:
                raise InvalidInputError("n_lines must be 'auto' or an integer >= 1")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be a positive integer")
        if not self.convergence_tol > 0:
            raise InvalidInputError("convergence_tol must be > 0")
        if self.peak_threshold is not None and not self.peak_threshold > 0:
            raise InvalidInputError("peak_threshold must be > 0")


@dataclass(frozen=True)
class FittedLine:
    center: float
    fwhm: float
    contrast: float
    center_err: float = 0.0
    fwhm_err: float = 0.0
    contrast_err: float = 0.0


@dataclass
class FitResult:
    lines: list
    baseline: float
    baseline_err: float
    residual_norm: float
    converged: bool
    iterations: int

    def to_dict(self):
        return {
            "lines": [
                {
                    "center_mhz": ln.center,
                    "fwhm_mhz": ln.fwhm,
                    "contrast": ln.contrast,
                    "center_err_mhz": ln.center_err,
                    "fwhm_err_mhz": ln.fwhm_err,
                    "contrast_err": ln.contrast_err,
                }
                for ln in self.lines
            ],
            "baseline": self.baseline,
            "baseline_err": self.baseline_err,
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, d):
        lines = [
            FittedLine(
                float(ln["center_mhz"]),
                float(ln["fwhm_mhz"]),
                float(ln["contrast"]),
                float(ln["center_err_mhz"]),
                float(ln["fwhm_err_mhz"]),
                float(ln["contrast_err"]),
            )
            for ln in d["lines"]
        ]
        return cls(
            lines,
            float(d["baseline"]),
            float(d["baseline_err"]),
            float(d["residual_norm"]),
            bool(d["converged"]),
            int(d["iterations"]),
        )


@dataclass
class SweepResult:
    """
    Per-point summary of a field or power sweep.

    Field sweeps fill ``splitting`` and the regression fields; power sweeps
    fill ``contrast``/``fwhm`` and the monotonicity verdicts. Entries of
    excluded points are None.
    """

    kind: str
    control: list
    splitting: list = field(default_factory=list)
    excluded: list = field(default_factory=list)
    slope: float = None
    intercept: float = None
    residuals: list = field(default_factory=list)
    expected_slope: float = None
    splitting_increasing: bool = None
    contrast: list = field(default_factory=list)
    contrast_err: list = field(default_factory=list)
    fwhm: list = field(default_factory=list)
    fwhm_err: list = field(default_factory=list)
    contrast_nondecreasing: bool = None
    fwhm_nondecreasing: bool = None

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# --- model ---------------------------------------------------------------------


def pack_parameters(baseline, lines):
    p = [baseline]
    for ln in lines:
        p.extend([ln.center, ln.fwhm, ln.contrast])
    return np.array(p, dtype=float)


def parameter_names(n_lines):
    names = ["baseline"]
    for k in range(1, n_lines + 1):
        names.extend(f"line{k}.{name}" for name in _LINE_FIELDS)
    return names


def lorentzian_model(f, p):
    """Evaluate the fit model at frequencies ``f`` for packed parameters ``p``."""
    f = np.asarray(f, dtype=float)
    dips = np.zeros_like(f)
    for c, w, a in np.reshape(p[1:], (-1, PARAMS_PER_LINE)):
        h2 = 0.25 * w * w
        dips += a * h2 / ((f - c) ** 2 + h2)
    return p[0] * (1.0 - dips)


def model_jacobian(f, p):
    """Analytic derivative of :func:`lorentzian_model` with respect to ``p``; shape (n, len(p))."""
    f = np.asarray(f, dtype=float)
    b = p[0]
    jac = np.empty((f.size, len(p)))
    dips = np.zeros_like(f)
    for k, (c, w, a) in enumerate(np.reshape(p[1:], (-1, PARAMS_PER_LINE))):
        h = 0.5 * w
        x = f - c
        den = x * x + h * h
        shape = h * h / den
        dips += a * shape
        col = 1 + PARAMS_PER_LINE * k
        jac[:, col] = -b * a * 2.0 * x * h * h / den**2
        jac[:, col + 1] = -b * a * h * x * x / den**2
        jac[:, col + 2] = -b * shape
    jac[:, 0] = 1.0 - dips
    return jac


# --- peak detection --------------------------------------------------------------


def estimate_noise(y):
    """Robust white-noise std from the MAD of second differences."""
    d2 = np.diff(np.asarray(y, dtype=float), 2)
    if d2.size == 0:
        return 0.0
    mad = np.median(np.abs(d2 - np.median(d2)))
    return float(1.4826 * mad / math.sqrt(6.0))


def estimate_baseline(y):
    return float(np.percentile(y, 95))


def _half_depth_width(f, y, i, level):
    """Width between the crossings of ``level`` on each side of index ``i``."""
    n = len(y)

    def crossing(step):
        j = i
        while 0 <= j + step < n and y[j + step] < level:
            j += step
        if not 0 <= j + step < n:
            return None
        # linear interpolation between j (below) and j + step (at/above)
        y0, y1 = y[j], y[j + step]
        t = (level - y0) / (y1 - y0) if y1 != y0 else 0.0
        return f[j] + t * (f[j + step] - f[j])

    left, right = crossing(-1), crossing(1)
    if left is None and right is None:
        return f[-1] - f[0]
    if left is None:
        return 2.0 * (right - f[i])
    if right is None:
        return 2.0 * (f[i] - left)
    return right - left


def _split_widest(guesses):
    """Replace the broadest guess by two narrower ones straddling it."""
    k = max(range(len(guesses)), key=lambda j: guesses[j].fwhm)
    g = guesses[k]
    quarter = 0.25 * g.fwhm
    pair = [
        LineShape(g.center - quarter, 0.5 * g.fwhm, g.contrast),
        LineShape(g.center + quarter, 0.5 * g.fwhm, g.contrast),
    ]
    return guesses[:k] + pair + guesses[k + 1:]


def _find_dips(f, y, window, sigma, config):
    smooth = uniform_filter1d(y, window, mode="nearest") if window > 1 else y
    # 3 sigma at the base window; wider boxcars average noise down by sqrt(window)
    default = max(3.0 * sigma * math.sqrt(SMOOTHING_WINDOWS[0] / window), 1e-9)
    threshold = config.peak_threshold if config.peak_threshold is not None else default
    base = estimate_baseline(smooth)

    idx, props = find_peaks(-smooth, height=-(base - threshold), distance=2, prominence=threshold)
    order = np.argsort(props["prominences"])[::-1] if idx.size else []
    guesses = []
    for j in order:
        i = int(idx[j])
        depth = base - smooth[i]
        width = _half_depth_width(f, smooth, i, base - 0.5 * depth)
        width = max(width, f[1] - f[0])
        guesses.append(LineShape(float(f[i]), float(width), float(min(depth / base, 0.999))))
    return guesses


def detect_peaks(spectrum, config=FitConfig()):
    """
    Initial line guesses from local minima of the spectrum.

    A dip counts when it lies more than the threshold below the estimated
    baseline and stands out from its surroundings by at least as much.
    Noisy data is boxcar-smoothed first; with a fixed ``config.n_lines``
    the window is widened until enough dips appear. The most prominent
    dips are kept, and when too few are found the broadest guess is split
    repeatedly. Returns a list of :class:`LineShape` sorted by center
    (possibly empty).
    """
    f, y = spectrum.frequencies, spectrum.pl_normalized
    sigma = estimate_noise(y)
    windows = [w for w in SMOOTHING_WINDOWS if 8 * w <= y.size] if sigma > 0 else []
    guesses = []
    for window in windows or [1]:
        found = _find_dips(f, y, window, sigma, config)
        if len(found) > len(guesses):
            guesses = found
        if config.n_lines == "auto" or len(guesses) >= config.n_lines:
            break

    if config.n_lines != "auto":
        guesses = guesses[: config.n_lines]
        while guesses and len(guesses) < config.n_lines:
            guesses = _split_widest(guesses)
    return sorted(guesses, key=lambda g: g.center)


# --- least squares -----------------------------------------------------------


def _collinear(normal, names, tol=1e-12):
    """Names of parameters spanning the (near) null space of ``normal``, or []."""
    d = np.sqrt(np.diag(normal))
    dead = [names[i] for i in np.flatnonzero(~(d > 0))]
    if dead:
        return dead
    corr = normal / np.outer(d, d)
    w, v = np.linalg.eigh(corr)
    small = w < tol * max(w[-1], 1.0)
    if not np.any(small):
        return []
    weight = np.max(np.abs(v[:, small]), axis=1)
    return [names[i] for i in np.flatnonzero(weight > 0.1)]


STEP_TOL = 1e-12


def fit_lorentzians(spectrum, config=FitConfig(), init=(), baseline=None):
    """
    Damped least-squares fit of a sum of Lorentzian dips.

    Parameters
    ----------
    spectrum : Spectrum
    config : FitConfig
        Only ``max_iterations`` and ``convergence_tol`` are used here.
    init : sequence
        Initial guesses with ``center``, ``fwhm`` and ``contrast`` attributes.
    baseline : float, optional
        Initial off-resonance level; estimated from the data when omitted.

    Returns
    -------
    FitResult
        With ``converged=False`` and the best parameters seen when the
        iteration budget runs out.

    Raises
    ------
    InvalidInputError
        Empty ``init``, non-positive initial FWHM, or too few grid points.
    DegenerateFitError
        The normal matrix is singular at the start or at the solution.
    """
    init = list(init)
    if not init:
        raise InvalidInputError("at least one initial guess is required")
    for g in init:
        if not (math.isfinite(g.fwhm) and g.fwhm > 0):
            raise InvalidInputError(f"initial FWHM must be > 0, got {g.fwhm}")
        if not (math.isfinite(g.center) and math.isfinite(g.contrast)):
            raise InvalidInputError("initial guesses must be finite")
    f, y = spectrum.frequencies, spectrum.pl_normalized
    n_par = 1 + PARAMS_PER_LINE * len(init)
    if f.size < 3 * n_par:
        raise InvalidInputError(f"need >= {3 * n_par} grid points for {len(init)} lines, have {f.size}")

    names = parameter_names(len(init))
    b0 = estimate_baseline(y) if baseline is None else float(baseline)
    p = pack_parameters(b0, init)
    r = y - lorentzian_model(f, p)
    ssr = float(r @ r)

    jac = model_jacobian(f, p)
    normal = jac.T @ jac
    bad = _collinear(normal, names)
    if bad:
        raise DegenerateFitError(bad)
    grad = jac.T @ r

    lam = 1e-3
    converged = False
    iterations = 0
    while iterations < config.max_iterations:
        iterations += 1
        diag = np.diag(normal)
        try:
            step = np.linalg.solve(normal + lam * np.diag(diag), grad)
        except np.linalg.LinAlgError:
            step = None
        if step is not None and np.all(np.isfinite(step)):
            p_new = p + step
            r_new = y - lorentzian_model(f, p_new)
            ssr_new = float(r_new @ r_new)
        else:
            ssr_new = math.inf
        if ssr_new < ssr:
            rel = (ssr - ssr_new) / ssr
            moved = np.max(np.abs(step) / np.maximum(np.abs(p), 1e-300))
            p, r, ssr = p_new, r_new, ssr_new
            lam = max(lam / 10.0, 1e-12)
            # a flat cost alone is not enough; parameters must also have settled
            if (rel < config.convergence_tol and moved < STEP_TOL) or ssr == 0.0:
                converged = True
                break
            jac = model_jacobian(f, p)
            normal = jac.T @ jac
            grad = jac.T @ r
        else:
            lam *= 10.0
            if lam > 1e12:
                # no descent direction left at machine precision
                converged = True
                break

    jac = model_jacobian(f, p)
    normal = jac.T @ jac
    bad = _collinear(normal, names)
    if bad:
        raise DegenerateFitError(bad)
    dof = max(f.size - n_par, 1)
    cov = np.linalg.inv(normal) * (ssr / dof)
    err = np.sqrt(np.clip(np.diag(cov), 0.0, None))

    lines = []
    for k, (c, w, a) in enumerate(np.reshape(p[1:], (-1, PARAMS_PER_LINE))):
        ec, ew, ea = err[1 + PARAMS_PER_LINE * k: 1 + PARAMS_PER_LINE * (k + 1)]
        lines.append(FittedLine(float(c), float(abs(w)), float(a), float(ec), float(ew), float(ea)))
    lines.sort(key=lambda ln: ln.center)
    return FitResult(
        lines,
        float(p[0]),
        float(err[0]),
        math.sqrt(ssr / f.size),
        converged,
        iterations,
    )


def fit_spectrum(spectrum, config=FitConfig()):
    """Detect peaks and fit them; raises InvalidInputError when none are found."""
    guesses = detect_peaks(spectrum, config)
    if not guesses:
        raise InvalidInputError("no resonances detected")
    return fit_lorentzians(spectrum, config, guesses)


# --- sweeps --------------------------------------------------------------------


def _ols(x, y):
    """Least-squares line; a degenerate abscissa gives slope 0 through the mean."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum() / sxx) if sxx > 0 else 0.0
    intercept = float(ym - slope * xm)
    return slope, intercept, (y - (slope * x + intercept)).tolist()


def analyze_field_sweep(results, alpha=0.0, gamma_e=2.8, line_indices=None):
    """
    Regress line splitting against field magnitude.

    ``results`` is a sequence of ``(B_gauss, FitResult)``. The splitting is
    taken between the outermost lines unless ``line_indices=(i, j)`` picks
    a pair. Points with fewer than two lines are listed in ``excluded``.
    ``expected_slope`` is 2 gamma_e cos(alpha).
    """
    results = list(results)
    if len(results) < 2:
        raise InvalidInputError("a field sweep needs >= 2 points")
    i_lo, i_hi = line_indices if line_indices is not None else (0, -1)
    control, splitting, excluded = [], [], []
    for n, (b, fit) in enumerate(results):
        control.append(float(b))
        if len(fit.lines) < 2:
            excluded.append(n)
            splitting.append(None)
            continue
        splitting.append(fit.lines[i_hi].center - fit.lines[i_lo].center)

    out = SweepResult("field", control, splitting, excluded, expected_slope=2.0 * gamma_e * math.cos(alpha))
    kept = [(x, s) for x, s in zip(control, splitting) if s is not None]
    if len(kept) >= 2:
        xs, ss = zip(*kept)
        out.slope, out.intercept, out.residuals = _ols(xs, ss)
        pairs = sorted(kept)
        out.splitting_increasing = all(
            s1 > s0 for (x0, s0), (x1, s1) in zip(pairs, pairs[1:]) if x1 > x0
        )
    return out


def _nondecreasing(x, y, err):
    for i in range(len(x) - 1):
        if x[i + 1] > x[i] and y[i + 1] < y[i] - (err[i] + err[i + 1]):
            return False
    return True


def analyze_power_sweep(results):
    """
    Contrast and FWHM of the deepest line per drive power.

    ``results`` is a sequence of ``(p_rf_dbm, FitResult)``. The verdicts
    require both quantities to be non-decreasing with power, allowing each
    step to dip by the sum of the two points' standard errors.
    """
    results = sorted(list(results), key=lambda t: t[0])
    if len(results) < 2:
        raise InvalidInputError("a power sweep needs >= 2 points")
    out = SweepResult("power", [float(p) for p, _ in results])
    for n, (_, fit) in enumerate(results):
        if not fit.lines:
            out.excluded.append(n)
            for lst in (out.contrast, out.contrast_err, out.fwhm, out.fwhm_err):
                lst.append(None)
            continue
        best = max(fit.lines, key=lambda ln: ln.contrast)
        out.contrast.append(best.contrast)
        out.contrast_err.append(best.contrast_err)
        out.fwhm.append(best.fwhm)
        out.fwhm_err.append(best.fwhm_err)
    keep = [i for i in range(len(results)) if i not in out.excluded]
    x = [out.control[i] for i in keep]
    out.contrast_nondecreasing = _nondecreasing(
        x, [out.contrast[i] for i in keep], [out.contrast_err[i] for i in keep]
    )
    out.fwhm_nondecreasing = _nondecreasing(x, [out.fwhm[i] for i in keep], [out.fwhm_err[i] for i in keep])
    return out


# --- JSON ------------------------------------------------------------------------


def _encode_nonfinite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _encode_nonfinite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode_nonfinite(v) for v in obj]
    return obj


def dumps(obj):
    """Strict JSON text; non-finite floats become the strings "inf", "-inf", "nan"."""
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    return json.dumps(_encode_nonfinite(obj), indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    atomic_write_text(path, dumps(obj))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
