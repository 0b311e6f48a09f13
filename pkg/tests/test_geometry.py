import numpy as np
import pytest

from fluoronav.errors import (
    DegenerateGeometry,
    FrameChainError,
    InsufficientMarkers,
    ParallelRays,
)
from fluoronav.geometry import (
    Ray3,
    RigidTransform,
    closest_point_between,
    compose,
    quat_to_matrix,
    register_point_sets,
    rotation_vector_to_matrix,
)

RNG = np.random.default_rng(20240811)


def random_transform(rng, from_frame="a", to_frame="b"):
    rvec = rng.normal(size=3)
    R = rotation_vector_to_matrix(rvec)
    t = rng.normal(scale=50.0, size=3)
    return RigidTransform.from_matrix(R, t, from_frame, to_frame)


def homogeneous(T):
    H = np.eye(4)
    H[:3, :3] = T.rotation
    H[:3, 3] = T.translation
    return H


# ---------------------------------------------------------------------------
# compose
# ---------------------------------------------------------------------------

def test_compose_identity():
    T = random_transform(RNG, "a", "b")
    I = RigidTransform.identity("a")
    out = compose(T, I)
    assert np.allclose(out.rotation, T.rotation, atol=1e-12)
    assert np.allclose(out.translation, T.translation, atol=1e-12)


def test_compose_inverse_is_identity():
    T = random_transform(RNG, "a", "b")
    out = compose(T, T.inverse())
    assert np.allclose(out.rotation, np.eye(3), atol=1e-9)
    assert np.allclose(out.translation, 0.0, atol=1e-9)
    assert out.from_frame == "b" and out.to_frame == "b"


def test_compose_hand_example_rz90():
    # Two quarter turns about z, outer one carries a +x shift: the point
    # (1,0,0) lands back at the origin.
    Rz = rotation_vector_to_matrix([0.0, 0.0, np.pi / 2])
    b = RigidTransform.from_matrix(Rz, [0, 0, 0], "w", "m")
    a = RigidTransform.from_matrix(Rz, [1, 0, 0], "m", "t")
    out = compose(a, b)
    assert np.allclose(out.apply([1.0, 0.0, 0.0]), [0.0, 0.0, 0.0], atol=1e-12)


def test_compose_matches_matrix_product_oracle():
    rng = np.random.default_rng(7)
    for _ in range(50):
        a = random_transform(rng, "m", "t")
        b = random_transform(rng, "w", "m")
        out = compose(a, b)
        H = homogeneous(a) @ homogeneous(b)
        assert np.allclose(homogeneous(out), H, atol=1e-12)
        assert out.from_frame == "w" and out.to_frame == "t"


def test_compose_frame_mismatch_raises():
    a = random_transform(RNG, "m", "t")
    b = random_transform(RNG, "w", "x")
    with pytest.raises(FrameChainError):
        compose(a, b)


def test_compose_associative():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a = random_transform(rng, "c", "d")
        b = random_transform(rng, "b", "c")
        c = random_transform(rng, "a", "b")
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        assert np.allclose(homogeneous(left), homogeneous(right), atol=1e-9)


def test_double_inverse_roundtrip():
    T = random_transform(RNG)
    back = T.inverse().inverse()
    assert np.allclose(homogeneous(back), homogeneous(T), atol=1e-9)


def test_rotation_stays_orthonormal_over_long_chains():
    rng = np.random.default_rng(3)
    T = RigidTransform.identity("f")
    step = random_transform(rng, "f", "f")
    for _ in range(500):
        T = compose(step, T)
    R = T.rotation
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-9)
    assert np.isclose(np.linalg.det(R), 1.0, atol=1e-9)


def test_serialization_roundtrip():
    T = random_transform(RNG, "grid", "patient_ref")
    d = T.to_dict()
    assert set(d) == {"from", "to", "quaternion", "translation"}
    assert d["quaternion"][0] >= 0.0
    back = RigidTransform.from_dict(d)
    assert np.allclose(homogeneous(back), homogeneous(T), atol=1e-15)


# ---------------------------------------------------------------------------
# register_point_sets
# ---------------------------------------------------------------------------

def test_register_identity():
    model = RNG.normal(scale=40.0, size=(5, 3))
    T, rms = register_point_sets(model, model)
    assert rms < 1e-9
    assert np.allclose(T.rotation, np.eye(3), atol=1e-9)
    assert np.allclose(T.translation, 0.0, atol=1e-9)


def test_register_pure_translation():
    model = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    T, rms = register_point_sets(model, model + np.array([5.0, 5.0, 5.0]))
    assert rms < 1e-9
    assert np.allclose(T.rotation, np.eye(3), atol=1e-9)
    assert np.allclose(T.translation, [5.0, 5.0, 5.0], atol=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_register_recovers_random_rigid(seed):
    rng = np.random.default_rng(seed)
    model = rng.normal(scale=60.0, size=(6, 3))
    truth = random_transform(rng)
    observed = truth.apply(model)
    T, rms = register_point_sets(model, observed)
    assert rms < 1e-9
    assert np.allclose(homogeneous(T), homogeneous(truth), atol=1e-9)
    assert np.isclose(np.linalg.det(T.rotation), 1.0, atol=1e-9)


def test_register_too_few_points():
    with pytest.raises(InsufficientMarkers):
        register_point_sets([[0, 0, 0], [1, 0, 0]], [[0, 0, 0], [1, 0, 0]])


def test_register_collinear_points():
    line = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
    with pytest.raises(DegenerateGeometry):
        register_point_sets(line, line)


def test_register_mismatched_lengths():
    with pytest.raises(ValueError):
        register_point_sets(np.zeros((4, 3)), np.zeros((5, 3)))


def test_register_residual_monotone_in_noise():
    sigmas = [0.0, 0.1, 0.3, 1.0]
    means = []
    for sigma in sigmas:
        acc = []
        for seed in range(100):
            rng = np.random.default_rng(1000 + seed)
            model = rng.normal(scale=60.0, size=(6, 3))
            truth = random_transform(rng)
            observed = truth.apply(model) + rng.normal(scale=sigma, size=(6, 3))
            _, rms = register_point_sets(model, observed)
            acc.append(rms)
        means.append(np.mean(acc))
    assert all(a < b for a, b in zip(means, means[1:]))


def test_register_residual_equivariant_under_common_transform():
    rng = np.random.default_rng(42)
    model = rng.normal(scale=60.0, size=(6, 3))
    observed = random_transform(rng).apply(model) + rng.normal(scale=0.3, size=(6, 3))
    _, rms0 = register_point_sets(model, observed)
    G = random_transform(rng)
    _, rms1 = register_point_sets(G.apply(model), G.apply(observed))
    assert np.isclose(rms0, rms1, atol=1e-9)


# ---------------------------------------------------------------------------
# closest_point_between
# ---------------------------------------------------------------------------

def grid_search_closest(r1, r2, span=40.0, iters=4):
    # Independent minimizer of |p1(s) - p2(t)| by nested grid refinement.
    s0 = t0 = 0.0
    width = span
    best = None
    for _ in range(iters):
        s = np.linspace(s0 - width, s0 + width, 201)
        t = np.linspace(t0 - width, t0 + width, 201)
        P1 = r1.origin[None, :] + s[:, None] * r1.direction[None, :]
        P2 = r2.origin[None, :] + t[:, None] * r2.direction[None, :]
        d2 = np.sum((P1[:, None, :] - P2[None, :, :]) ** 2, axis=2)
        i, j = np.unravel_index(np.argmin(d2), d2.shape)
        s0, t0 = s[i], t[j]
        best = (P1[i], P2[j], np.sqrt(d2[i, j]))
        width /= 50.0
    mid = 0.5 * (best[0] + best[1])
    return mid, best[2]


def test_closest_point_intersecting():
    p = np.array([1.0, 2.0, 3.0])
    r1 = Ray3(p - 4.0 * np.array([1.0, 0.0, 0.0]), [1.0, 0.0, 0.0])
    r2 = Ray3(p - 2.0 * np.array([0.0, 1.0, 0.0]), [0.0, 1.0, 0.0])
    mid, gap = closest_point_between(r1, r2)
    assert np.allclose(mid, p, atol=1e-12)
    assert gap < 1e-12


def test_closest_point_symmetric_skew():
    r1 = Ray3([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    r2 = Ray3([0.0, 0.0, 2.0], [0.0, 1.0, 0.0])
    mid, gap = closest_point_between(r1, r2)
    assert np.isclose(mid[2], 1.0, atol=1e-12)
    assert np.isclose(gap, 2.0, atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_closest_point_matches_grid_search(seed):
    rng = np.random.default_rng(seed)
    r1 = Ray3(rng.normal(scale=5.0, size=3), rng.normal(size=3))
    r2 = Ray3(rng.normal(scale=5.0, size=3), rng.normal(size=3))
    mid, gap = closest_point_between(r1, r2)
    mid_ref, gap_ref = grid_search_closest(r1, r2)
    assert np.allclose(mid, mid_ref, atol=1e-3)
    assert np.isclose(gap, gap_ref, atol=1e-4)


def test_closest_point_parallel_raises():
    r1 = Ray3([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    r2 = Ray3([0.0, 1.0, 0.0], [1.0, 0.0, 0.0])
    with pytest.raises(ParallelRays):
        closest_point_between(r1, r2)


def test_ray_direction_normalized():
    r = Ray3([0.0, 0.0, 0.0], [3.0, 0.0, 4.0])
    assert np.isclose(np.linalg.norm(r.direction), 1.0, atol=1e-12)


def test_quaternion_matrix_consistency():
    rng = np.random.default_rng(5)
    for _ in range(50):
        T = random_transform(rng)
        R = quat_to_matrix(T.quaternion)
        assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.isclose(np.linalg.det(R), 1.0, atol=1e-12)
