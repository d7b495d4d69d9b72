import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from barabanov.matnum import (RangeError, SingularMatrixError, determinant, expm, log_norm,
                              rank_of_columns, solve_linear, spectrum)

mpmath.mp.dps = 40

small = arrays(np.float64, (3, 3), elements=st.floats(-3, 3, allow_nan=False, width=64))


def mp_expm(A, t):
    M = mpmath.matrix(A.tolist()) * t
    E = mpmath.expm(M)
    return np.array([[float(E[i, j]) for j in range(E.cols)] for i in range(E.rows)])


def test_expm_zero_matrix():
    assert np.array_equal(expm(np.zeros((2, 2)), 7.3), np.eye(2))


def test_expm_quarter_rotation():
    R = expm(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.pi / 2)
    assert np.allclose(R, [[0.0, 1.0], [-1.0, 0.0]], atol=1e-15)


def test_expm_diagonal():
    assert np.allclose(expm(np.diag([-1.0, 0.0]), np.log(2.0)), np.diag([0.5, 1.0]), atol=1e-15)


def test_expm_matches_high_precision_oracle(rng):
    for scale in (0.01, 1.0, 10.0, 60.0):
        for _ in range(5):
            A = rng.standard_normal((3, 3))
            t = scale / max(np.linalg.norm(A, 2), 1e-12)
            ref = mp_expm(A, t)
            got = expm(A, t)
            assert np.abs(got - ref).max() <= 1e-12 * max(1.0, np.abs(ref).max())


def test_expm_nilpotent_exact():
    N = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    ref = np.array([[1.0, 2.0, 2.0], [0.0, 1.0, 2.0], [0.0, 0.0, 1.0]])
    assert np.allclose(expm(N, 2.0), ref, atol=1e-14)


def test_expm_overflow_raises():
    with pytest.raises(RangeError):
        expm(np.eye(2) * 1000.0, 10.0)


def test_expm_nonfinite_input_raises():
    with pytest.raises(RangeError):
        expm(np.array([[np.inf, 0.0], [0.0, 1.0]]))


@settings(max_examples=60, deadline=None)
@given(small, st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_group_law(A, s, t):
    lhs = expm(A, s) @ expm(A, t)
    rhs = expm(A, s + t)
    assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(rhs).max())


@settings(max_examples=60, deadline=None)
@given(small, st.floats(0.0, 2.0))
def test_liouville(A, t):
    d = np.linalg.det(expm(A, t))
    ref = np.exp(t * np.trace(A))
    assert abs(d - ref) <= 1e-9 * ref


@settings(max_examples=60, deadline=None)
@given(small, st.floats(0.05, 1.5))
def test_spectral_mapping(A, t):
    ev = spectrum(A).eigenvalues
    got = np.linalg.eigvals(expm(A, t))
    for k, lam in enumerate(ev):
        z = np.exp(t * lam)
        # an m-fold near-defective cluster moves like (eps * ||M||)^(1/m)
        m = int(np.sum(np.abs(ev - lam) < 1e-3))
        spread = 10 * (np.finfo(float).eps * np.abs(got).max()) ** (1.0 / m)
        tol = (1e-8 if m == 1 else max(1e-6, spread)) * max(1.0, abs(z))
        assert np.min(np.abs(got - z)) <= tol


def test_spectrum_diagonal():
    s = spectrum(np.diag([-1.0, -2.0, -3.0]))
    assert np.allclose(sorted(s.eigenvalues.real), [-3, -2, -1])
    assert s.abscissa == pytest.approx(-1.0)


def test_spectrum_rotation():
    s = spectrum(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    assert np.allclose(sorted(s.eigenvalues.imag), [-1, 1])
    assert abs(s.abscissa) < 1e-15


def test_spectrum_example1_matrix_by_characteristic_polynomial():
    A1 = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
    # (l^2 + 1)(l + 1) = l^3 + l^2 + l + 1
    roots = [complex(r) for r in mpmath.polyroots([1, 1, 1, 1])]
    got = spectrum(A1).eigenvalues
    for r in roots:
        assert np.min(np.abs(got - r)) < 1e-12
    assert abs(spectrum(A1).abscissa) < 1e-12


def test_spectrum_matches_polyroots_oracle(rng):
    for _ in range(20):
        A = rng.standard_normal((3, 3))
        # characteristic polynomial coefficients by traces of minors
        c2 = -np.trace(A)
        c1 = 0.5 * (np.trace(A) ** 2 - np.trace(A @ A))
        c0 = -np.linalg.det(A)
        roots = [complex(r) for r in mpmath.polyroots([1, c2, c1, c0], maxsteps=200, extraprec=60)]
        got = spectrum(A).eigenvalues
        for r in roots:
            assert np.min(np.abs(got - r)) < 1e-9
        assert spectrum(A).abscissa == pytest.approx(max(r.real for r in roots), abs=1e-9)


def test_spectrum_conjugate_pairs_exact(rng):
    for _ in range(20):
        ev = spectrum(rng.standard_normal((3, 3))).eigenvalues
        cplx = ev[np.abs(ev.imag) > 0]
        for z in cplx:
            assert np.any(ev == np.conj(z))


def test_spectral_radius():
    s = spectrum(np.diag([-3.0, 2.0]))
    assert s.radius == pytest.approx(3.0)


def test_determinant_basics():
    assert determinant(np.eye(3)) == pytest.approx(1.0)
    assert determinant(np.diag([2.0, 3.0, 4.0])) == pytest.approx(24.0)


def cofactor_det3(M):
    return (M[0, 0] * (M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1])
            - M[0, 1] * (M[1, 0] * M[2, 2] - M[1, 2] * M[2, 0])
            + M[0, 2] * (M[1, 0] * M[2, 1] - M[1, 1] * M[2, 0]))


def test_rank_one_determinant_identity(rng):
    from conftest import random_hurwitz

    for _ in range(10):
        A = random_hurwitz(rng)
        b, c = rng.standard_normal(3), rng.standard_normal(3)
        for u in (0.0, 0.5, 1.0):
            M = A + u * np.outer(b, c)
            ident = (1 + u * b @ np.linalg.solve(A.T, c)) * cofactor_det3(A)
            assert determinant(M) == pytest.approx(ident, rel=1e-10, abs=1e-12)
            assert cofactor_det3(M) == pytest.approx(ident, rel=1e-10, abs=1e-12)


def test_solve_linear_basics():
    assert np.allclose(solve_linear(np.eye(3), [1.0, 2.0, 3.0]), [1, 2, 3])
    assert np.allclose(solve_linear(np.diag([2.0, 4.0]), [2.0, 4.0]), [1, 1])


def test_solve_linear_round_trip(rng):
    for _ in range(20):
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        A = Q @ np.diag(rng.uniform(0.5, 2.0, 3)) @ Q.T
        y = rng.standard_normal(3)
        x = solve_linear(A, y)
        assert np.linalg.norm(A @ x - y) < 1e-10


def test_solve_linear_singular():
    with pytest.raises(SingularMatrixError):
        solve_linear(np.array([[1.0, 2.0], [2.0, 4.0]]), [1.0, 1.0])


def test_rank_of_columns():
    e = np.eye(3)
    assert rank_of_columns([e[0], e[1], e[2]]) == 3
    assert rank_of_columns([e[0], 2 * e[0]]) == 1


def test_rank_example1_krylov():
    A1 = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
    b = np.array([1.0, 0.0, 0.0])
    cols = [b, A1 @ b, A1 @ A1 @ b]
    assert np.allclose(cols[1], [0, -1, 0]) and np.allclose(cols[2], [-1, 0, 0])
    assert rank_of_columns(cols) == 2


def test_log_norm_bounds_abscissa(rng):
    for _ in range(20):
        A = rng.standard_normal((3, 3))
        assert log_norm(A) >= spectrum(A).abscissa - 1e-12
