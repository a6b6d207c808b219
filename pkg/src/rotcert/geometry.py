"""Rotations, quaternions, and the rotation-search measurement model.

Conventions used throughout the package:

* Quaternions are 4-vectors q = (q1, q2, q3, q4) with the SCALAR PART LAST.
  q and -q encode the same rotation; the canonical representative has
  q4 >= 0, and when q4 == 0 the first nonzero entry is nonnegative.
* vec() is column-major stacking, so vec(R) lists R's columns in order.
* A measurement is a pair of unit bearing vectors (a, b) ideally related by
  b = R a + noise. Its sensing matrix W = a' kron I3 satisfies
  W vec(R) = R a and has largest singular value 1.
* The quadratic cost matrix M of a pair satisfies, for every unit q,

      || b - R(q) a ||^2 = ||b||^2 + ||a||^2 - 2 tr(M' q q')

  which turns pairwise residuals into linear functions of q q'.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .errors import ConfigError, DegenerateSet, DimensionMismatch, ParseError

UNIT_TOL = 1e-12
ORTHO_TOL = 1e-10


def _unit(v, what="vector"):
    arr = np.asarray(v, dtype=float)
    norm = np.linalg.norm(arr)
    if norm <= 0.0 or not np.isfinite(norm):
        raise ValueError(f"cannot normalize a zero or non-finite {what}")
    return arr / norm


class UnitQuaternion:
    """A unit quaternion, scalar part last, stored in canonical sign.

    The constructor accepts any 4-vector within 1e-6 of unit length,
    renormalizes it, and flips the sign to the canonical representative.
    """

    __slots__ = ("q",)

    def __init__(self, q):
        arr = np.asarray(q, dtype=float)
        if arr.shape != (4,):
            raise DimensionMismatch(f"quaternion needs 4 entries, got {arr.shape}")
        norm = np.linalg.norm(arr)
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {norm!r} is not close to 1")
        arr = arr / norm
        if arr[3] < 0.0:
            arr = -arr
        elif arr[3] == 0.0:
            for entry in arr:
                if entry != 0.0:
                    if entry < 0.0:
                        arr = -arr
                    break
        self.q = arr
        self.q.flags.writeable = False

    @classmethod
    def random(cls, rng):
        return cls(_unit(rng.standard_normal(4), "quaternion"))

    @classmethod
    def identity(cls):
        return cls(np.array([0.0, 0.0, 0.0, 1.0]))

    def vec(self):
        return self.q.copy()

    def __eq__(self, other):
        return isinstance(other, UnitQuaternion) and np.array_equal(self.q, other.q)

    def __hash__(self):
        return hash(self.q.tobytes())

    def __repr__(self):
        inner = ", ".join(f"{v:+.6f}" for v in self.q)
        return f"UnitQuaternion([{inner}])"


class Rotation3:
    """A proper rotation matrix, validated to orthogonality and det +1."""

    __slots__ = ("R",)

    def __init__(self, R):
        mat = np.asarray(R, dtype=float)
        if mat.shape != (3, 3):
            raise DimensionMismatch(f"rotation needs shape (3, 3), got {mat.shape}")
        if np.abs(mat.T @ mat - np.eye(3)).max() > ORTHO_TOL:
            raise ValueError("matrix is not orthogonal within 1e-10")
        if abs(np.linalg.det(mat) - 1.0) > ORTHO_TOL:
            raise ValueError("matrix determinant is not +1 within 1e-10")
        self.R = mat
        self.R.flags.writeable = False

    def apply(self, v):
        return self.R @ np.asarray(v, dtype=float)

    def __repr__(self):
        return f"Rotation3({np.array2string(self.R, precision=4)})"


class Measurement:
    """One bearing-vector pair; both sides unit length within 1e-12."""

    __slots__ = ("a", "b", "is_inlier_truth")

    def __init__(self, a, b, is_inlier_truth=None):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape != (3,) or b.shape != (3,):
            raise DimensionMismatch("measurement vectors must be 3-vectors")
        for v, name in ((a, "a"), (b, "b")):
            if abs(np.linalg.norm(v) - 1.0) > 1e-9:
                raise ValueError(f"measurement vector {name} is not unit length")
        self.a = _unit(a)
        self.b = _unit(b)
        self.a.flags.writeable = False
        self.b.flags.writeable = False
        self.is_inlier_truth = is_inlier_truth

    @classmethod
    def from_raw(cls, a, b, is_inlier_truth=None):
        """Build from arbitrary nonzero vectors, normalizing both."""
        return cls(_unit(a, "a"), _unit(b, "b"), is_inlier_truth)

    def residual_sq(self, q: UnitQuaternion) -> float:
        r = self.b - quat_to_rotation(q).R @ self.a
        return float(r @ r)


class TripletMeasurement:
    """Three mutually orthonormal direction vectors observed together.

    Stacking the three sensing matrices gives a 9x9 orthogonal matrix, so
    the stacked map preserves norms exactly; these sets are the benign
    extreme for the anti-concentration certificates.
    """

    __slots__ = ("a1", "a2", "a3")

    def __init__(self, a1, a2, a3):
        vs = [np.asarray(v, dtype=float) for v in (a1, a2, a3)]
        for v in vs:
            if v.shape != (3,):
                raise DimensionMismatch("triplet entries must be 3-vectors")
            if abs(np.linalg.norm(v) - 1.0) > 1e-9:
                raise ValueError("triplet entries must be unit vectors")
        for i in range(3):
            for j in range(i + 1, 3):
                if abs(vs[i] @ vs[j]) > ORTHO_TOL:
                    raise ValueError("triplet entries must be orthogonal")
        self.a1, self.a2, self.a3 = (_unit(v) for v in vs)
        for v in (self.a1, self.a2, self.a3):
            v.flags.writeable = False

    def stack(self) -> np.ndarray:
        """The 9x9 stacked sensing matrix [W(a1); W(a2); W(a3)]."""
        return np.vstack(
            [np.kron(v[None, :], np.eye(3)) for v in (self.a1, self.a2, self.a3)]
        )


class RotationSearchInstance:
    """A batch of measurements with the residual bound and optional truths."""

    __slots__ = (
        "measurements",
        "c_bar_sq",
        "ground_truth",
        "secondary_truths",
        "labels",
    )

    def __init__(
        self,
        measurements,
        c_bar_sq,
        ground_truth=None,
        secondary_truths=None,
        labels=None,
    ):
        ms = tuple(measurements)
        if len(ms) < 3:
            raise DegenerateSet(f"need at least 3 measurements, got {len(ms)}")
        if not c_bar_sq > 0:
            raise ConfigError(f"c_bar_sq must be positive, got {c_bar_sq!r}")
        if labels is not None and len(labels) != len(ms):
            raise DimensionMismatch("one label per measurement")
        self.measurements = ms
        self.c_bar_sq = float(c_bar_sq)
        self.ground_truth = ground_truth
        self.secondary_truths = (
            None if secondary_truths is None else tuple(secondary_truths)
        )
        self.labels = None if labels is None else tuple(int(v) for v in labels)

    @property
    def n(self):
        return len(self.measurements)

    def residuals_sq(self, q: UnitQuaternion) -> np.ndarray:
        rot = quat_to_rotation(q).R
        a = np.stack([m.a for m in self.measurements])
        b = np.stack([m.b for m in self.measurements])
        diff = b - a @ rot.T
        return np.einsum("ij,ij->i", diff, diff)

    def __repr__(self):
        return (
            f"RotationSearchInstance(n={self.n}, c_bar_sq={self.c_bar_sq}, "
            f"truth={'yes' if self.ground_truth else 'no'})"
        )


# Lift matrix P with vec(R(q)) = P vec(q q'), both vecs column-major.
P_MATRIX = np.array(
    [
        [1, 0, 0, 0, 0, -1, 0, 0, 0, 0, -1, 0, 0, 0, 0, 1],
        [0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0],
        [0, 0, 1, 0, 0, 0, 0, -1, 1, 0, 0, 0, 0, -1, 0, 0],
        [0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, -1, 0, 0, -1, 0],
        [-1, 0, 0, 0, 0, 1, 0, 0, 0, 0, -1, 0, 0, 0, 0, 1],
        [0, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 0],
        [0, 0, 1, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 1, 0, 0],
        [0, 0, 0, -1, 0, 0, 1, 0, 0, 1, 0, 0, -1, 0, 0, 0],
        [-1, 0, 0, 0, 0, -1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1],
    ],
    dtype=float,
)


def p_matrix() -> np.ndarray:
    """The constant 9x16 integer matrix lifting vec(q q') to vec(R(q))."""
    return P_MATRIX.copy()


def quat_to_rotation(q: UnitQuaternion) -> Rotation3:
    """Rotation matrix of a unit quaternion (scalar-last convention)."""
    if not isinstance(q, UnitQuaternion):
        q = UnitQuaternion(q)
    q1, q2, q3, q4 = q.q
    R = np.array(
        [
            [
                2 * (q1 * q1 + q4 * q4) - 1,
                2 * (q1 * q2 - q3 * q4),
                2 * (q1 * q3 + q2 * q4),
            ],
            [
                2 * (q1 * q2 + q3 * q4),
                2 * (q2 * q2 + q4 * q4) - 1,
                2 * (q2 * q3 - q1 * q4),
            ],
            [
                2 * (q1 * q3 - q2 * q4),
                2 * (q2 * q3 + q1 * q4),
                2 * (q3 * q3 + q4 * q4) - 1,
            ],
        ]
    )
    return Rotation3(R)


def cost_matrix(m: Measurement) -> np.ndarray:
    """The 4x4 matrix M with vec(M) = P'(a kron b), column-major vec."""
    ab = np.kron(m.a, m.b)
    return (P_MATRIX.T @ ab).reshape(4, 4, order="F")


def wahba_matrix(m: Measurement) -> np.ndarray:
    """The 3x9 sensing matrix W = a' kron I3, mapping vec(R) to R a."""
    return np.kron(m.a[None, :], np.eye(3))


def closed_form_wahba(measurements, weights=None) -> UnitQuaternion:
    """Weighted least-squares rotation fit via the 4x4 eigenproblem.

    Maximizes sum_i w_i q' ((M_i + M_i')/2) q over unit quaternions, whose
    optimum is the top eigenvector. Raises DegenerateSet when fewer than
    three measurements are given or the direction set is collinear.
    """
    ms = list(measurements)
    if len(ms) < 3:
        raise DegenerateSet(f"need at least 3 measurements, got {len(ms)}")
    if weights is None:
        weights = np.ones(len(ms))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(ms),):
        raise DimensionMismatch("one weight per measurement")
    directions = np.stack([m.a for m in ms])
    svals = np.linalg.svd(directions * weights[:, None], compute_uv=False)
    if svals[1] <= 1e-9 * max(svals[0], 1e-300):
        raise DegenerateSet("direction set is collinear; rotation undetermined")
    accum = np.zeros((4, 4))
    for w, m in zip(weights, ms):
        M = cost_matrix(m)
        accum += w * 0.5 * (M + M.T)
    _, vecs = np.linalg.eigh(accum)
    return UnitQuaternion(vecs[:, -1])


def geodesic_error_deg(q1: UnitQuaternion, q2: UnitQuaternion) -> float:
    """Rotation angle between two attitudes, in degrees, in [0, 180]."""
    r1 = quat_to_rotation(q1).R
    r2 = quat_to_rotation(q2).R
    cos_angle = 0.5 * (np.trace(r1.T @ r2) - 1.0)
    return float(np.degrees(np.arccos(np.clip(cos_angle, -1.0, 1.0))))


def vec_distance(q1: UnitQuaternion, q2: UnitQuaternion) -> float:
    """Euclidean distance between the two vectorized rotation matrices.

    This is the quantity the estimation-contract bounds control; it equals
    2 sqrt(2) sin(angle / 2) and tops out at 2 sqrt(2) < 2 sqrt(3).
    """
    r1 = quat_to_rotation(q1).R
    r2 = quat_to_rotation(q2).R
    return float(np.linalg.norm(r1 - r2))


def _random_unit(rng, dim=3):
    return _unit(rng.standard_normal(dim))


def _distinct_rotation(rng, existing, min_sep_deg=10.0):
    while True:
        q = UnitQuaternion.random(rng)
        if all(geodesic_error_deg(q, other) > min_sep_deg for other in existing):
            return q


def _largest_remainder(total, fractions):
    quotas = [f * total for f in fractions]
    counts = [int(np.floor(v)) for v in quotas]
    short = total - sum(counts)
    remainders = sorted(
        range(len(fractions)), key=lambda k: (-(quotas[k] - counts[k]), k)
    )
    for k in remainders[:short]:
        counts[k] += 1
    return counts


def generate_instance(
    n,
    beta,
    outlier_mode="random",
    seed=0,
    noise_sigma_sq=1e-4,
    c_bar_sq=0.0021,
) -> RotationSearchInstance:
    """Synthetic rotation-search instance with floor(beta * n) outliers.

    Directions a_i are uniform on the sphere; inlier observations are
    b_i = normalize(R a_i + eps) with isotropic Gaussian eps of covariance
    noise_sigma_sq * I. The default residual budget c_bar_sq = 0.0021 is the
    0.9999 chi-square(3) tail of that noise level.

    outlier_mode:
        "random"       outlier b_i are independent uniform unit vectors;
        "consistent"   outliers share one second rotation (plus noise);
        "multi:K"      outliers split evenly over K distinct extra rotations;
        ("multi", fractions)  explicit outlier fractions, one per extra
                       rotation, summing to 1.

    Labels record provenance per measurement: 0 for inliers, k >= 1 for the
    k-th extra rotation, -1 for random outliers.
    """
    if n < 3:
        raise DegenerateSet(f"need n >= 3, got {n}")
    if not 0.0 <= beta < 1.0:
        raise ConfigError(f"beta must lie in [0, 1), got {beta}")
    rng = np.random.default_rng(seed)
    truth = UnitQuaternion.random(rng)
    rot = quat_to_rotation(truth).R
    sigma = float(np.sqrt(noise_sigma_sq))

    num_out = int(np.floor(beta * n))
    num_in = n - num_out

    if isinstance(outlier_mode, tuple):
        tag, fractions = outlier_mode
        if tag != "multi":
            raise ConfigError(f"unknown outlier mode {outlier_mode!r}")
        fractions = [float(f) for f in fractions]
        if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigError(
                f"multi-mode fractions must be nonnegative and sum to 1, "
                f"got {fractions}"
            )
    elif outlier_mode == "random":
        fractions = None
    elif outlier_mode == "consistent":
        fractions = [1.0]
    elif isinstance(outlier_mode, str) and outlier_mode.startswith("multi:"):
        k = int(outlier_mode.split(":", 1)[1])
        if k < 1:
            raise ConfigError("multi mode needs at least one extra rotation")
        fractions = [1.0 / k] * k
    else:
        raise ConfigError(f"unknown outlier mode {outlier_mode!r}")

    secondary = []
    assignment = []
    if fractions is None:
        assignment = [-1] * num_out
    else:
        counts = _largest_remainder(num_out, fractions)
        for j, count in enumerate(counts):
            secondary.append(_distinct_rotation(rng, [truth] + secondary))
            assignment.extend([j + 1] * count)

    measurements = []
    labels = []
    for i in range(n):
        a = _random_unit(rng)
        if i < num_in:
            b = _unit(rot @ a + sigma * rng.standard_normal(3))
            label = 0
        else:
            label = assignment[i - num_in]
            if label == -1:
                b = _random_unit(rng)
            else:
                rot2 = quat_to_rotation(secondary[label - 1]).R
                b = _unit(rot2 @ a + sigma * rng.standard_normal(3))
        measurements.append(Measurement(a, b, is_inlier_truth=(label == 0)))
        labels.append(label)

    return RotationSearchInstance(
        measurements,
        c_bar_sq,
        ground_truth=truth,
        secondary_truths=secondary or None,
        labels=labels,
    )


def generate_triplet_set(n, seed=0):
    """n orthonormal triplets: random direction, projected partner, cross."""
    if n < 1:
        raise ConfigError(f"need n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        a1 = _random_unit(rng)
        raw = rng.standard_normal(3)
        proj = raw - (raw @ a1) * a1
        while np.linalg.norm(proj) < 1e-9:
            raw = rng.standard_normal(3)
            proj = raw - (raw @ a1) * a1
        a2 = _unit(proj)
        a3 = np.cross(a1, a2)
        out.append(TripletMeasurement(a1, a2, a3))
    return out


def load_pairs_csv(path) -> RotationSearchInstance:
    """Read "ax,ay,az,bx,by,bz" rows into an instance (vectors normalized).

    A single literal header row is tolerated. Any other malformed row is a
    ParseError carrying its 1-based line number; fewer than three data rows
    is a DegenerateSet.
    """
    header = ["ax", "ay", "az", "bx", "by", "bz"]
    measurements = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            cells = [cell.strip() for cell in row]
            if lineno == 1 and [c.lower() for c in cells] == header:
                continue
            if len(cells) != 6:
                raise ParseError(
                    f"expected 6 fields, got {len(cells)}", line=lineno
                )
            try:
                vals = [float(c) for c in cells]
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            try:
                a = _unit(vals[:3], "a")
                b = _unit(vals[3:], "b")
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            measurements.append(Measurement(a, b))
    if len(measurements) < 3:
        raise DegenerateSet(
            f"need at least 3 measurement rows, got {len(measurements)}"
        )
    return RotationSearchInstance(measurements, c_bar_sq=0.0021)


def instance_to_json(instance: RotationSearchInstance) -> str:
    """Serialize an instance, truths and labels included, to JSON text."""
    payload = {
        "n": instance.n,
        "c_bar_sq": instance.c_bar_sq,
        "measurements": [
            {"a": list(m.a), "b": list(m.b)} for m in instance.measurements
        ],
        "ground_truth": (
            None if instance.ground_truth is None else list(instance.ground_truth.q)
        ),
        "secondary_truths": (
            None
            if instance.secondary_truths is None
            else [list(q.q) for q in instance.secondary_truths]
        ),
        "labels": None if instance.labels is None else list(instance.labels),
    }
    return json.dumps(payload, indent=2)


def instance_from_json(text: str) -> RotationSearchInstance:
    data = json.loads(text)
    labels = data.get("labels")
    measurements = [
        Measurement(
            np.array(rec["a"]),
            np.array(rec["b"]),
            is_inlier_truth=None if labels is None else labels[k] == 0,
        )
        for k, rec in enumerate(data["measurements"])
    ]
    truth = data.get("ground_truth")
    secondary = data.get("secondary_truths")
    return RotationSearchInstance(
        measurements,
        data["c_bar_sq"],
        ground_truth=None if truth is None else UnitQuaternion(np.array(truth)),
        secondary_truths=(
            None
            if secondary is None
            else [UnitQuaternion(np.array(q)) for q in secondary]
        ),
        labels=labels,
    )
