"""
NV ground-state spin Hamiltonian and transition frequencies.

Units throughout: frequencies and Hamiltonian entries in MHz, magnetic
fields in gauss, gyromagnetic ratio in MHz/G. The spin-1 basis is ordered
{|+1>, |0>, |-1>} so that Sz = diag(1, 0, -1).

The lab frame has z along the <100> surface normal of the diamond plate.
The four NV symmetry axes are the <111> family; since an NV axis is a line
rather than a vector, every axis is oriented so that the field makes an
angle 0 <= alpha <= pi/2 with it.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import InvalidInputError

#: Degenerate orientations are grouped when their cos(alpha) agree to this.
COS_GROUP_TOL = 1e-9

_SQ3 = math.sqrt(3.0)

#: The <111> axes of a <100>-cut sample expressed in the lab frame.
NV_AXES = np.array(
    [
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ]
) / _SQ3


@dataclass(frozen=True)
class NVParameters:
    """Zero-field splitting ``D``, strain splitting ``E`` (MHz) and ``gamma_e`` (MHz/G)."""

    D: float = 2870.0
    E: float = 0.0
    gamma_e: float = 2.8

    def __post_init__(self):
        for name in ("D", "E", "gamma_e"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"{name} must be finite")
        if self.D <= 0:
            raise InvalidInputError("D must be > 0")
        if self.E < 0:
            raise InvalidInputError("E must be >= 0")
        if self.gamma_e <= 0:
            raise InvalidInputError("gamma_e must be > 0")


@dataclass(frozen=True)
class FieldVector:
    """Magnetic flux density in gauss."""

    bx: float = 0.0
    by: float = 0.0
    bz: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.bx, self.by, self.bz)):
            raise InvalidInputError("field components must be finite")

    @classmethod
    def along(cls, direction, magnitude):
        """Field of ``magnitude`` gauss pointing along ``direction`` (any nonzero 3-vector)."""
        d = np.asarray(direction, dtype=float)
        norm = np.linalg.norm(d)
        if d.shape != (3,) or not np.isfinite(norm) or norm == 0:
            raise InvalidInputError("direction must be a finite nonzero 3-vector")
        bx, by, bz = (magnitude * d / norm).tolist()
        return cls(bx, by, bz)

    def as_array(self):
        return np.array([self.bx, self.by, self.bz], dtype=float)

    @property
    def magnitude(self):
        return float(np.linalg.norm(self.as_array()))


@dataclass(frozen=True)
class FieldProjection:
    """Field magnitude (gauss) and its angle ``alpha`` (rad) to an NV axis."""

    magnitude: float
    alpha: float

    def __post_init__(self):
        if not math.isfinite(self.magnitude) or self.magnitude < 0:
            raise InvalidInputError("magnitude must be finite and >= 0")
        if not 0.0 <= self.alpha <= math.pi:
            raise InvalidInputError("alpha must lie in [0, pi]")

    @property
    def parallel(self):
        """Field component along the axis, B cos(alpha)."""
        return self.magnitude * math.cos(self.alpha)


def spin_matrices():
    """Return the spin-1 operators ``(Sx, Sy, Sz)`` in the {+1, 0, -1} basis."""
    r = 1.0 / math.sqrt(2.0)
    sx = np.array([[0, r, 0], [r, 0, r], [0, r, 0]], dtype=complex)
    sy = np.array([[0, -1j * r, 0], [1j * r, 0, -1j * r], [0, 1j * r, 0]], dtype=complex)
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return sx, sy, sz


_SX, _SY, _SZ = spin_matrices()


def build_hamiltonian(params, field):
    """
    Ground-state Hamiltonian H = D Sz^2 + E (Sx^2 - Sy^2) + gamma_e B.S.

    ``field`` must already be expressed in the NV frame (z along the NV axis).
    Returns a 3x3 complex Hermitian array in MHz.
    """
    if not isinstance(field, FieldVector):
        field = FieldVector(*field)
    g = params.gamma_e
    h = params.D * (_SZ @ _SZ) + params.E * (_SX @ _SX - _SY @ _SY)
    h = h + g * (field.bx * _SX + field.by * _SY + field.bz * _SZ)
    # kill rounding asymmetry from the products above
    return 0.5 * (h + h.conj().T)


def eigenvalues(params, field):
    """Ascending energy levels of the NV-frame Hamiltonian."""
    h = build_hamiltonian(params, field)
    try:
        return np.linalg.eigvalsh(h)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise RuntimeError("Hermitian eigen-solver failed on a 3x3 matrix") from exc


def transition_frequencies_exact(params, field):
    """Exact (f_minus, f_plus) in MHz from diagonalizing H in the NV frame."""
    lam = eigenvalues(params, field)
    return float(lam[1] - lam[0]), float(lam[2] - lam[0])


def transition_frequencies_approx(params, proj):
    """First-order lines f = D -/+ gamma_e B cos(alpha), returned as (f_minus, f_plus)."""
    shift = params.gamma_e * proj.magnitude * math.cos(proj.alpha)
    return params.D - shift, params.D + shift


def estimate_field_projection(f_minus, f_plus, params=NVParameters()):
    """
    Invert the first-order line positions.

    Returns ``(D_est, b_parallel)``: the line centroid in MHz and the field
    projection B cos(alpha) in gauss.
    """
    if not (math.isfinite(f_minus) and math.isfinite(f_plus)):
        raise InvalidInputError("frequencies must be finite")
    if f_plus < f_minus:
        raise InvalidInputError("f_plus must be >= f_minus")
    return 0.5 * (f_plus + f_minus), (f_plus - f_minus) / (2.0 * params.gamma_e)


def orientation_projections(field):
    """
    Project a lab-frame field onto the four NV axes.

    Returns a list of four :class:`FieldProjection`, one per row of
    ``NV_AXES``. For B = 0 the angle is reported as 0.
    """
    b = field.as_array()
    mag = float(np.linalg.norm(b))
    out = []
    for axis in NV_AXES:
        if mag == 0.0:
            out.append(FieldProjection(0.0, 0.0))
            continue
        c = abs(float(axis @ b)) / mag
        out.append(FieldProjection(mag, math.acos(min(c, 1.0))))
    return out


def orientation_groups(field):
    """
    Group the four NV axes by equal cos(alpha).

    Returns a list of ``(axis_indices, cos_alpha)`` ordered by decreasing
    cos(alpha); indices refer to rows of ``NV_AXES``.
    """
    projs = orientation_projections(field)
    cosines = [math.cos(p.alpha) for p in projs]
    groups = []
    for i in np.argsort(cosines, kind="stable")[::-1]:
        for members, c in groups:
            if abs(c - cosines[i]) <= COS_GROUP_TOL:
                members.append(int(i))
                break
        else:
            groups.append(([int(i)], cosines[i]))
    return [(tuple(sorted(m)), c) for m, c in groups]


def nv_frame(axis_index):
    """
    Rotation matrix whose rows are the NV-frame unit vectors (x, y, z) in lab coordinates.

    z is the (sign-folded) NV axis; x lies in the plane spanned by the axis
    and the lab z direction.
    """
    z = NV_AXES[axis_index]
    x = np.array([0.0, 0.0, 1.0]) - z[2] * z
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.vstack([x, y, z])


def to_nv_frame(field, axis_index):
    """Express a lab-frame field in the frame of NV axis ``axis_index``.

    The axis is flipped when needed so that the parallel component is >= 0.
    """
    b = field.as_array()
    rot = nv_frame(axis_index)
    local = rot @ b
    if local[2] < 0:
        # rotation by pi about x maps the axis onto its antipode
        local = np.array([local[0], -local[1], -local[2]])
    return FieldVector(*local.tolist())


def ensemble_transitions(params, field):
    """
    Exact transition lines for an NV ensemble with all four orientations.

    Returns a list of ``(frequency_mhz, n_orientations)`` tuples: two per
    degenerate orientation group, each weighted by how many axes share it.
    Frequencies are computed once per group from its first member.
    """
    lines = []
    for members, _ in orientation_groups(field):
        f_lo, f_hi = transition_frequencies_exact(params, to_nv_frame(field, members[0]))
        lines.append((f_lo, len(members)))
        lines.append((f_hi, len(members)))
    return sorted(lines)
