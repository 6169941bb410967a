import numpy as np
import pytest

from neuralfgp import icnn
from neuralfgp.errors import DimensionError


def make_params(W, U, b, w, u, c):
    W = tuple(np.asarray(m, dtype=np.float64) for m in W)
    widths = tuple(m.shape[0] for m in W)
    return icnn.ICNNParams(
        W,
        tuple(np.asarray(m, dtype=np.float64) for m in U),
        tuple(np.asarray(v, dtype=np.float64) for v in b),
        np.asarray(w, dtype=np.float64),
        np.asarray(u, dtype=np.float64),
        float(c),
        widths,
    )


def zero_params(n=2, widths=(3,), c=0.0, u=None):
    W = [np.zeros((widths[0], n))] + [
        np.zeros((widths[k], widths[k - 1])) for k in range(1, len(widths))
    ]
    U = [np.zeros((widths[k], n)) for k in range(1, len(widths))]
    b = [np.zeros(m) for m in widths]
    return make_params(W, U, b, np.zeros(widths[-1]), u if u is not None else np.zeros(n), c)


def random_simplex(rng, n, size=None):
    return rng.dirichlet(np.ones(n), size)


# --- init -------------------------------------------------------------------


def test_init_respects_constraints():
    theta = icnn.init(4, (8, 8, 8), seed=1)
    for W in theta.W[1:]:
        assert W.min() >= 0
    assert theta.w.min() >= 0


def test_init_generating_function_above_one_at_uniform():
    for seed in range(5):
        theta = icnn.init(5, (16, 16), seed=seed)
        assert icnn.generating_function(theta, np.full(5, 0.2)) > 1.0


def test_init_deterministic():
    a = icnn.init(3, (4, 4), seed=9)
    b = icnn.init(3, (4, 4), seed=9)
    for (_, x), (_, y) in zip(a.arrays(), b.arrays()):
        assert np.array_equal(x, y)


# --- forward ----------------------------------------------------------------


def test_forward_constant_network():
    theta = zero_params(c=5.0)
    for x in ([0.5, 0.5], [0.9, 0.1]):
        f, _ = icnn.forward(theta, np.array(x))
        assert f == 5.0


def test_forward_linear_part_only():
    theta = zero_params(u=np.array([1.0, 2.0]))
    f, _ = icnn.forward(theta, np.array([0.5, 0.5]))
    assert f == pytest.approx(1.5, abs=1e-15)


def test_forward_matches_straight_line_reimplementation():
    rng = np.random.default_rng(21)
    theta = icnn.init(2, (3, 4), seed=33)
    for _ in range(20):
        x = random_simplex(rng, 2)
        f, cache = icnn.forward(theta, x)
        # independent re-evaluation, spelled out step by step
        sp = lambda t: np.logaddexp(0.0, t)
        z1 = sp(theta.W[0] @ x + theta.b[0])
        z2 = sp(theta.W[1] @ z1 + theta.U[0] @ x + theta.b[1])
        f_ref = theta.w @ z2 + theta.u @ x + theta.c
        assert abs(f - f_ref) < 1e-12
        np.testing.assert_allclose(cache.z[1], z2, atol=1e-14)


def test_forward_dimension_mismatch():
    theta = icnn.init(3, (4,), seed=0)
    with pytest.raises(DimensionError):
        icnn.forward(theta, np.array([0.5, 0.5]))


# --- generating function ----------------------------------------------------


def test_generating_function_sign_flip():
    assert icnn.generating_function(zero_params(c=-3.0), np.array([0.4, 0.6])) == 3.0
    g = icnn.generating_function(zero_params(c=1.0), np.array([0.4, 0.6]))
    assert g == -1.0
    assert max(g, icnn.G_FLOOR) == icnn.G_FLOOR


def test_midpoint_convexity_random_networks():
    rng = np.random.default_rng(5)
    for seed in range(3):
        theta = icnn.project_constraints(icnn.init(4, (8, 8), seed=seed))
        for _ in range(200):
            x, y = random_simplex(rng, 4, 2)
            fx, _ = icnn.forward(theta, x)
            fy, _ = icnn.forward(theta, y)
            fm, _ = icnn.forward(theta, 0.5 * (x + y))
            assert fm <= 0.5 * fx + 0.5 * fy + 1e-10


# --- input gradient of log G ------------------------------------------------


def test_grad_log_g_linear_network_closed_form():
    theta = zero_params(u=np.array([1.0, 2.0]), c=-10.0)
    x = np.array([0.5, 0.5])
    # f = u.x - 10 so G = 10 - u.x = 8.5 and grad log G = -u / 8.5
    g = icnn.grad_log_G(theta, x)
    np.testing.assert_allclose(g, [-1.0 / 8.5, -2.0 / 8.5], atol=1e-14)


def test_grad_log_g_constant_network_is_zero():
    g = icnn.grad_log_G(zero_params(c=-4.0), np.array([0.3, 0.7]))
    np.testing.assert_array_equal(g, [0.0, 0.0])


@pytest.mark.parametrize("depth", [1, 2, 3])
@pytest.mark.parametrize("width", [4, 16, 64])
def test_grad_log_g_matches_finite_differences(depth, width):
    rng = np.random.default_rng(depth * 100 + width)
    n = 5
    theta = icnn.project_constraints(icnn.init(n, (width,) * depth, seed=depth + width))
    x = random_simplex(rng, n)
    g = icnn.grad_log_G(theta, x)
    h = 1e-6
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        lo = np.log(max(icnn.generating_function(theta, x - e), icnn.G_FLOOR))
        hi = np.log(max(icnn.generating_function(theta, x + e), icnn.G_FLOOR))
        fd = (hi - lo) / (2 * h)
        assert abs(g[i] - fd) / (1.0 + abs(fd)) < 1e-5


# --- constraint projection --------------------------------------------------


def test_project_clamps_and_is_idempotent():
    theta = icnn.init(3, (4, 4), seed=2)
    dirty = icnn.ICNNParams(
        (theta.W[0], theta.W[1] - 0.3),
        theta.U,
        theta.b,
        theta.w - 0.5,
        theta.u,
        theta.c,
        theta.widths,
    )
    once = icnn.project_constraints(dirty)
    assert once.W[1].min() >= 0
    assert once.w.min() >= 0
    # unconstrained parts untouched
    np.testing.assert_array_equal(once.W[0], dirty.W[0])
    np.testing.assert_array_equal(once.U[0], dirty.U[0])
    twice = icnn.project_constraints(once)
    for (_, a), (_, b) in zip(once.arrays(), twice.arrays()):
        assert np.array_equal(a, b)


def test_project_leaves_feasible_params_unchanged():
    theta = icnn.init(3, (4,), seed=8)
    projected = icnn.project_constraints(theta)
    for (_, a), (_, b) in zip(theta.arrays(), projected.arrays()):
        assert np.array_equal(a, b)


# --- softplus premise -------------------------------------------------------


def test_softplus_convex_and_nondecreasing_on_grid():
    grid = np.linspace(-6.0, 6.0, 241)
    vals = np.logaddexp(0.0, grid)
    first = np.diff(vals)
    second = np.diff(vals, 2)
    assert np.all(first >= 0)
    assert np.all(second >= -1e-12)


# --- serialisation ----------------------------------------------------------


def test_json_round_trip_bit_exact(tmp_path):
    theta = icnn.init(4, (8, 8), seed=77)
    path = tmp_path / "theta.json"
    icnn.save(theta, path)
    back = icnn.load(path)
    assert back.widths == theta.widths
    for (name, a), (_, b) in zip(theta.arrays(), back.arrays()):
        assert np.array_equal(a, b), name
