import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2

from rotcert.errors import (
    ConfigError,
    DegenerateSet,
    DimensionMismatch,
    ParseError,
)
from rotcert.geometry import (
    Measurement,
    Rotation3,
    RotationSearchInstance,
    TripletMeasurement,
    UnitQuaternion,
    closed_form_wahba,
    cost_matrix,
    generate_instance,
    generate_triplet_set,
    geodesic_error_deg,
    instance_from_json,
    instance_to_json,
    load_pairs_csv,
    p_matrix,
    quat_to_rotation,
    wahba_matrix,
)


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _vec(M):
    return np.asarray(M).reshape(-1, order="F")


def test_quaternion_canonical_sign():
    q = UnitQuaternion([0.5, 0.5, 0.5, -0.5])
    assert q.q[3] == 0.5
    assert np.allclose(q.q, [-0.5, -0.5, -0.5, 0.5])


def test_quaternion_zero_scalar_tiebreak():
    q = UnitQuaternion([-1.0, 0.0, 0.0, 0.0])
    assert q.q[0] == 1.0


def test_quaternion_rejects_non_unit():
    with pytest.raises(ValueError):
        UnitQuaternion([1.0, 1.0, 0.0, 0.0])
    with pytest.raises(DimensionMismatch):
        UnitQuaternion([1.0, 0.0, 0.0])


def test_rotation_validation():
    Rotation3(np.eye(3))
    with pytest.raises(ValueError):
        Rotation3(np.eye(3) * 1.001)
    with pytest.raises(ValueError):
        Rotation3(np.diag([1.0, 1.0, -1.0]))


def test_identity_quaternion_maps_to_identity():
    R = quat_to_rotation(UnitQuaternion.identity()).R
    assert np.abs(R - np.eye(3)).max() < 1e-15


def test_x_flip_quaternion():
    # 180 degrees about the x axis
    R = quat_to_rotation(UnitQuaternion([1.0, 0.0, 0.0, 0.0])).R
    assert np.abs(R - np.diag([1.0, -1.0, -1.0])).max() < 1e-15


def test_p_matrix_is_integer_9x16():
    P = p_matrix()
    assert P.shape == (9, 16)
    assert np.array_equal(P, np.round(P))
    assert np.abs(P).max() == 1
    # first row frozen explicitly
    assert list(P[0]) == [1, 0, 0, 0, 0, -1, 0, 0, 0, 0, -1, 0, 0, 0, 0, 1]


def test_p_matrix_lift_identity_bulk():
    rng = np.random.default_rng(0)
    P = p_matrix()
    for _ in range(1000):
        q = UnitQuaternion.random(rng)
        R = quat_to_rotation(q).R
        lifted = P @ _vec(np.outer(q.q, q.q))
        assert np.abs(lifted - _vec(R)).max() < 1e-12


@given(st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4))
@settings(max_examples=200)
def test_p_matrix_lift_identity_hypothesis(raw):
    v = np.asarray(raw)
    norm = np.linalg.norm(v)
    if norm < 1e-2:
        return
    q = UnitQuaternion(v / norm)
    lifted = p_matrix() @ _vec(np.outer(q.q, q.q))
    assert np.abs(lifted - _vec(quat_to_rotation(q).R)).max() < 1e-12


def test_cost_matrix_residual_identity():
    rng = np.random.default_rng(1)
    for _ in range(500):
        q = UnitQuaternion.random(rng)
        R = quat_to_rotation(q).R
        m = Measurement(_unit(rng.standard_normal(3)), _unit(rng.standard_normal(3)))
        M = cost_matrix(m)
        lhs = np.linalg.norm(m.b - R @ m.a) ** 2
        rhs = 2.0 - 2.0 * float(np.trace(M.T @ np.outer(q.q, q.q)))
        assert abs(lhs - rhs) < 1e-10


def test_cost_matrix_aligned_pair():
    m = Measurement([1.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    M = cost_matrix(m)
    q = UnitQuaternion.identity()
    assert abs(float(np.trace(M.T @ np.outer(q.q, q.q))) - 1.0) < 1e-12


def test_cost_matrix_quarter_turn():
    # e1 observed as e2 is explained exactly by a 90 degree z rotation
    m = Measurement([1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
    M = cost_matrix(m)
    s = np.sin(np.pi / 4)
    q = UnitQuaternion([0.0, 0.0, s, np.cos(np.pi / 4)])
    val = float(np.trace(M.T @ np.outer(q.q, q.q)))
    assert abs(val - 1.0) < 1e-12
    assert m.residual_sq(q) < 1e-12


def test_wahba_matrix_basis_case():
    W = wahba_matrix(Measurement([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]))
    expected = np.hstack([np.eye(3), np.zeros((3, 6))])
    assert np.array_equal(W, expected)


def test_wahba_matrix_maps_vec_to_image():
    rng = np.random.default_rng(2)
    for _ in range(200):
        q = UnitQuaternion.random(rng)
        R = quat_to_rotation(q).R
        m = Measurement(_unit(rng.standard_normal(3)), _unit(rng.standard_normal(3)))
        W = wahba_matrix(m)
        assert np.abs(W @ _vec(R) - R @ m.a).max() < 1e-12
        assert abs(np.linalg.svd(W, compute_uv=False)[0] - 1.0) < 1e-12


def test_closed_form_wahba_noiseless():
    rng = np.random.default_rng(3)
    q0 = UnitQuaternion.random(rng)
    R0 = quat_to_rotation(q0).R
    ms = [
        Measurement(a, R0 @ a)
        for a in (_unit(rng.standard_normal(3)) for _ in range(12))
    ]
    qhat = closed_form_wahba(ms)
    assert geodesic_error_deg(qhat, q0) < 1e-8


def test_closed_form_wahba_noisy():
    inst = generate_instance(40, 0.0, seed=5)
    qhat = closed_form_wahba(inst.measurements)
    assert geodesic_error_deg(qhat, inst.ground_truth) < 0.5


def test_closed_form_wahba_weights_mask_outliers():
    inst = generate_instance(30, 0.3, "random", seed=6)
    weights = np.array([1.0 if lab == 0 else 0.0 for lab in inst.labels])
    qhat = closed_form_wahba(inst.measurements, weights)
    assert geodesic_error_deg(qhat, inst.ground_truth) < 0.5


def test_closed_form_wahba_degenerate():
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.0, 1.0, 0.0])
    with pytest.raises(DegenerateSet):
        closed_form_wahba([Measurement(a, b)])
    collinear = [Measurement(a, b), Measurement(-a, b), Measurement(a, -b)]
    with pytest.raises(DegenerateSet):
        closed_form_wahba(collinear)


def test_geodesic_error_basics():
    rng = np.random.default_rng(4)
    q = UnitQuaternion.random(rng)
    assert geodesic_error_deg(q, UnitQuaternion(-q.q)) == 0.0
    flip = UnitQuaternion([1.0, 0.0, 0.0, 0.0])
    assert abs(geodesic_error_deg(UnitQuaternion.identity(), flip) - 180.0) < 1e-9
    for _ in range(100):
        q1, q2 = UnitQuaternion.random(rng), UnitQuaternion.random(rng)
        err = geodesic_error_deg(q1, q2)
        assert 0.0 <= err <= 180.0
        assert err == geodesic_error_deg(q2, q1)


def test_default_budget_matches_noise_tail():
    # 0.9999 chi-square(3) tail of the default noise level, independently
    tail = chi2.ppf(0.9999, df=3) * 1e-4
    assert abs(tail - 0.0021) / 0.0021 < 0.03


def test_generate_instance_deterministic():
    one = generate_instance(20, 0.25, "random", seed=11)
    two = generate_instance(20, 0.25, "random", seed=11)
    assert one.labels == two.labels
    for m1, m2 in zip(one.measurements, two.measurements):
        assert np.array_equal(m1.a, m2.a) and np.array_equal(m1.b, m2.b)
    assert np.array_equal(one.ground_truth.q, two.ground_truth.q)


def test_generate_instance_outlier_count():
    inst = generate_instance(50, 0.2, "random", seed=0)
    assert sum(1 for lab in inst.labels if lab != 0) == 10
    assert sum(1 for m in inst.measurements if not m.is_inlier_truth) == 10


def test_generate_instance_inliers_fit_budget():
    # the default budget is a 0.9999 tail, so clean instances should pass
    # their own residual check in nearly every run
    good = 0
    runs = 200
    for seed in range(runs):
        inst = generate_instance(50, 0.0, seed=seed)
        if np.all(inst.residuals_sq(inst.ground_truth) <= inst.c_bar_sq):
            good += 1
    assert good >= int(0.98 * runs)


def test_generate_instance_consistent_mode():
    inst = generate_instance(40, 0.5, "consistent", seed=9)
    assert inst.secondary_truths is not None and len(inst.secondary_truths) == 1
    assert sum(1 for lab in inst.labels if lab == 1) == 20
    assert geodesic_error_deg(inst.ground_truth, inst.secondary_truths[0]) > 10.0
    # the outlier block fits its own rotation
    second = inst.secondary_truths[0]
    res = inst.residuals_sq(second)
    outlier_res = [r for r, lab in zip(res, inst.labels) if lab == 1]
    assert np.median(outlier_res) < inst.c_bar_sq


def test_generate_instance_multi_classes():
    # four extra rotations on top of the truth: five classes of ten
    inst = generate_instance(50, 0.8, ("multi", [0.25, 0.25, 0.25, 0.25]), seed=2)
    counts = {}
    for lab in inst.labels:
        counts[lab] = counts.get(lab, 0) + 1
    assert counts == {0: 10, 1: 10, 2: 10, 3: 10, 4: 10}
    assert len(inst.secondary_truths) == 4
    qs = [inst.ground_truth] + list(inst.secondary_truths)
    for i in range(len(qs)):
        for j in range(i + 1, len(qs)):
            assert geodesic_error_deg(qs[i], qs[j]) > 10.0


def test_generate_instance_multi_string_form():
    inst = generate_instance(50, 0.8, "multi:4", seed=2)
    assert len(inst.secondary_truths) == 4
    assert sorted(set(inst.labels)) == [0, 1, 2, 3, 4]


def test_generate_instance_bad_fractions():
    with pytest.raises(ConfigError):
        generate_instance(50, 0.8, ("multi", [0.5, 0.4]), seed=0)
    with pytest.raises(ConfigError):
        generate_instance(50, 0.8, ("multi", [1.5, -0.5]), seed=0)
    with pytest.raises(ConfigError):
        generate_instance(50, 0.8, "nonsense", seed=0)


def test_generate_instance_largest_remainder():
    # 7 outliers over fractions (0.5, 0.3, 0.2) -> 4, 2, 1 by remainders
    inst = generate_instance(10, 0.7, ("multi", [0.5, 0.3, 0.2]), seed=1)
    counts = {}
    for lab in inst.labels:
        counts[lab] = counts.get(lab, 0) + 1
    assert counts[1] == 4 and counts[2] == 2 and counts[3] == 1


def test_residuals_vectorized_matches_scalar():
    inst = generate_instance(15, 0.4, "random", seed=8)
    rng = np.random.default_rng(0)
    q = UnitQuaternion.random(rng)
    vec = inst.residuals_sq(q)
    scalar = np.array([m.residual_sq(q) for m in inst.measurements])
    assert np.abs(vec - scalar).max() < 1e-14


def test_triplet_set_orthonormal_and_isometric():
    rng = np.random.default_rng(12)
    trips = generate_triplet_set(8, seed=12)
    for t in trips:
        for u in (t.a1, t.a2, t.a3):
            assert abs(np.linalg.norm(u) - 1.0) < 1e-12
        S = t.stack()
        assert S.shape == (9, 9)
        assert np.abs(S.T @ S - np.eye(9)).max() < 1e-10
        v = rng.standard_normal(9)
        assert abs(np.linalg.norm(S @ v) - np.linalg.norm(v)) < 1e-10
    again = generate_triplet_set(8, seed=12)
    assert np.array_equal(trips[3].a2, again[3].a2)


def test_triplet_validation():
    e1 = [1.0, 0.0, 0.0]
    e2 = [0.0, 1.0, 0.0]
    with pytest.raises(ValueError):
        TripletMeasurement(e1, e1, e2)


def test_instance_validation():
    ms = [
        Measurement([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
        Measurement([0.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
    ]
    with pytest.raises(DegenerateSet):
        RotationSearchInstance(ms, 0.1)
    ms.append(Measurement([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]))
    with pytest.raises(ConfigError):
        RotationSearchInstance(ms, 0.0)
    RotationSearchInstance(ms, 0.1)


def test_load_pairs_csv(tmp_path):
    path = tmp_path / "pairs.csv"
    rows = ["ax,ay,az,bx,by,bz"]
    rng = np.random.default_rng(3)
    for _ in range(5):
        a = rng.standard_normal(3) * 2.0
        b = rng.standard_normal(3) * 0.5
        rows.append(",".join(str(v) for v in np.concatenate([a, b])))
    path.write_text("\n".join(rows) + "\n")
    inst = load_pairs_csv(path)
    assert inst.n == 5
    for m in inst.measurements:
        assert abs(np.linalg.norm(m.a) - 1.0) < 1e-12
        assert abs(np.linalg.norm(m.b) - 1.0) < 1e-12


def test_load_pairs_csv_malformed_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,0,0,0,1,0\n0,1,0,oops,0,1\n0,0,1,1,0,0\n")
    with pytest.raises(ParseError) as err:
        load_pairs_csv(path)
    assert err.value.line == 2


def test_load_pairs_csv_wrong_width(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,0,0,0,1,0\n0,1,0,0,1\n")
    with pytest.raises(ParseError) as err:
        load_pairs_csv(path)
    assert err.value.line == 2


def test_load_pairs_csv_too_few_rows(tmp_path):
    path = tmp_path / "short.csv"
    path.write_text("1,0,0,0,1,0\n0,1,0,0,0,1\n")
    with pytest.raises(DegenerateSet):
        load_pairs_csv(path)


def test_instance_json_roundtrip():
    inst = generate_instance(12, 0.25, "consistent", seed=4)
    text = instance_to_json(inst)
    payload = json.loads(text)
    assert payload["n"] == 12
    back = instance_from_json(text)
    assert back.n == inst.n
    assert back.labels == inst.labels
    assert back.c_bar_sq == inst.c_bar_sq
    assert geodesic_error_deg(back.ground_truth, inst.ground_truth) == 0.0
    assert len(back.secondary_truths) == 1
    for m1, m2 in zip(back.measurements, inst.measurements):
        assert np.abs(m1.a - m2.a).max() < 1e-15
        assert np.abs(m1.b - m2.b).max() < 1e-15


def test_instance_json_roundtrip_without_truth():
    ms = [
        Measurement([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
        Measurement([0.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
        Measurement([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]),
    ]
    inst = RotationSearchInstance(ms, 0.05)
    back = instance_from_json(instance_to_json(inst))
    assert back.ground_truth is None and back.labels is None
    assert back.n == 3
