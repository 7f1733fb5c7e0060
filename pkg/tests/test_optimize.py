import numpy as np

from fairdesert.optimize import bfgs_minimize, newton_minimize


def quadratic(center, scale):
    def fgh(x):
        diff = (x - center) * scale
        return 0.5 * diff @ (diff / scale) * 1.0, diff, np.diag(scale)
    def fg(x):
        f, g, _ = fgh(x)
        return f, g
    return fgh, fg


def test_newton_solves_quadratic_in_one_step():
    fgh, _ = quadratic(np.array([1.0, -2.0, 3.0]), np.array([4.0, 1.0, 0.25]))
    res = newton_minimize(fgh, np.zeros(3))
    assert res.converged and res.iterations <= 2
    assert np.allclose(res.x, [1.0, -2.0, 3.0], atol=1e-8)


def test_bfgs_on_ill_conditioned_quadratic():
    scale = np.array([1000.0, 1.0, 0.001])
    _, fg = quadratic(np.array([0.5, -0.5, 2.0]), scale)
    res = bfgs_minimize(fg, np.zeros(3), tol=1e-10, max_iter=500)
    assert res.converged
    assert np.allclose(res.x, [0.5, -0.5, 2.0], atol=1e-5)


def test_bfgs_on_nonconvex_smooth():
    def fg(x):
        f = (1 - x[0]) ** 2 + 5 * (x[1] - x[0] ** 2) ** 2
        g = np.array([
            -2 * (1 - x[0]) - 20 * (x[1] - x[0] ** 2) * x[0],
            10 * (x[1] - x[0] ** 2),
        ])
        return f, g
    res = bfgs_minimize(fg, np.array([-1.0, 1.0]), tol=1e-9, max_iter=2000)
    assert res.converged
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-5)


def test_optimizers_deterministic():
    _, fg = quadratic(np.array([0.3, 0.7]), np.array([2.0, 5.0]))
    a = bfgs_minimize(fg, np.array([5.0, -5.0]))
    b = bfgs_minimize(fg, np.array([5.0, -5.0]))
    assert np.array_equal(a.x, b.x) and a.fun == b.fun


def test_bfgs_reports_nonconvergence():
    def fg(x):
        f = (1 - x[0]) ** 2 + 5 * (x[1] - x[0] ** 2) ** 2
        g = np.array([
            -2 * (1 - x[0]) - 20 * (x[1] - x[0] ** 2) * x[0],
            10 * (x[1] - x[0] ** 2),
        ])
        return f, g
    res = bfgs_minimize(fg, np.array([-1.2, 0.7]), tol=1e-12, max_iter=2)
    assert not res.converged
