import math

import numpy as np
import pytest
from scipy import stats

from sendees.exceptions import InsufficientSamplesError, NonFiniteError, ScoringError
from sendees.scores import (
    EesConfig,
    ScoreReport,
    efficient_eigenscore,
    exact_eigenscore,
    score_pair,
)
from sendees.spectral import cheb_apply_sequence, combine_ees, log_cheb_coefficients


def lu_logdet(A):
    """log det of an SPD matrix by Doolittle LU with partial pivoting, pure Python."""
    A = [list(map(float, r)) for r in A]
    n = len(A)
    logdet = 0.0
    for k in range(n):
        p = max(range(k, n), key=lambda i: abs(A[i][k]))
        A[k], A[p] = A[p], A[k]
        logdet += math.log(abs(A[k][k]))
        for i in range(k + 1, n):
            f = A[i][k] / A[k][k]
            for j in range(k, n):
                A[i][j] -= f * A[k][j]
    return logdet


def identical_columns(d=32, K=10, seed=0):
    col = np.random.default_rng(seed).standard_normal(d)
    return np.tile(col[:, None], (1, K))


class TestExact:
    def test_identical_columns_give_log_alpha(self):
        assert exact_eigenscore(identical_columns(), 1e-3).value == pytest.approx(math.log(1e-3))
        assert math.log(1e-3) == pytest.approx(-6.9078, abs=1e-4)

    def test_centered_projector_case(self):
        # centering leaves the all-ones direction at alpha and, here, all
        # others at exactly 1
        K, alpha = 6, 1e-3
        Q = np.linalg.qr(np.random.default_rng(1).standard_normal((40, K)))[0]
        P = np.eye(K) - np.ones((K, K)) / K
        E = Q @ (math.sqrt(1 - alpha) * P)
        assert exact_eigenscore(E, alpha).value == pytest.approx(math.log(alpha) / K, abs=1e-12)

    def test_matches_lu_log_determinant(self):
        E = np.random.default_rng(2).standard_normal((512, 10))
        Ec = E - E.mean(axis=1, keepdims=True)
        S = Ec.T @ Ec + 1e-3 * np.eye(10)
        ref = lu_logdet(S.tolist()) / 10
        assert exact_eigenscore(E, 1e-3).value == pytest.approx(ref, rel=1e-8)

    @pytest.mark.parametrize("solver", ["jacobi", "lapack"])
    def test_solvers_agree(self, solver):
        E = np.random.default_rng(3).standard_normal((64, 12))
        ref = exact_eigenscore(E, 1e-3, solver="jacobi").value
        rep = exact_eigenscore(E, 1e-3, solver=solver)
        assert rep.value == pytest.approx(ref, rel=1e-10)
        assert rep.details["solver"] == solver

    def test_auto_switches_to_lapack_for_many_generations(self):
        E = np.random.default_rng(4).standard_normal((20, 80))
        assert exact_eigenscore(E).details["solver"] == "lapack"
        assert exact_eigenscore(E[:, :10]).details["solver"] == "jacobi"

    def test_column_permutation_invariant(self):
        rng = np.random.default_rng(5)
        E = rng.standard_normal((100, 10))
        perm = rng.permutation(10)
        assert exact_eigenscore(E[:, perm]).value == pytest.approx(exact_eigenscore(E).value,
                                                                  abs=1e-10)

    def test_monotone_in_alpha(self):
        E = np.random.default_rng(6).standard_normal((50, 10))
        values = [exact_eigenscore(E, a).value for a in (1e-6, 1e-4, 1e-3, 1e-1, 1.0, 10.0)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_report_fields(self):
        rep = exact_eigenscore(np.random.default_rng(7).standard_normal((8, 3)), 0.5)
        assert rep.method == "exact" and rep.matrix_rows == 8 and rep.matrix_cols == 3
        assert rep.elapsed_seconds >= 0 and rep.config_echo == 0.5
        assert rep.to_dict()["config"] == 0.5

    def test_needs_two_generations(self):
        with pytest.raises(InsufficientSamplesError):
            exact_eigenscore(np.ones((5, 1)))

    def test_rejects_non_finite(self):
        E = np.ones((3, 3))
        E[1, 1] = np.inf
        with pytest.raises(NonFiniteError):
            exact_eigenscore(E)

    @pytest.mark.parametrize("kwargs", [dict(alpha=0.0), dict(solver="qr")])
    def test_bad_arguments(self, kwargs):
        with pytest.raises(ValueError):
            exact_eigenscore(np.eye(3), **kwargs)


class TestEfficient:
    def test_identical_columns_below_gaussian(self):
        low = efficient_eigenscore(identical_columns()).value
        rng = np.random.default_rng(8)
        gaussian = [efficient_eigenscore(rng.standard_normal((32, 10))).value for _ in range(20)]
        assert np.isfinite(low)
        assert low < min(gaussian)

    def test_near_constant_rows_are_zeroed(self):
        E = identical_columns()
        E[0] += np.linspace(0, 1e-14, 10)
        assert efficient_eigenscore(E).value == efficient_eigenscore(identical_columns()).value

    def test_identical_columns_value(self):
        # zero operator: C_s = -I, d_m = (-1)^m * mean ||z||^2 / K
        cfg = EesConfig()
        rep = efficient_eigenscore(identical_columns(), cfg)
        assert rep.details["sigma_max"] == 0.0
        c = log_cheb_coefficients(20, 2048, 1e-8).coeffs
        from sendees.spectral import draw_probes

        seeds = np.random.SeedSequence(0).spawn(2)
        Z = draw_probes(10, 32, seeds[1])
        d0 = np.mean(np.sum(Z * Z, axis=0)) / 10
        d = d0 * (-1.0) ** np.arange(21)
        assert rep.value == pytest.approx(float(d @ c) / 10, rel=1e-12)

    def test_zero_moments_truncation(self):
        E = np.random.default_rng(9).standard_normal((40, 10))
        cfg = EesConfig(moments=0, quad_points=64)
        rep = efficient_eigenscore(E, cfg)
        c0 = log_cheb_coefficients(0, 64, 1e-8).coeffs[0]
        from sendees.spectral import draw_probes

        Z = draw_probes(10, 32, np.random.SeedSequence(0).spawn(2)[1])
        d0 = np.mean(np.sum(Z * Z, axis=0)) / 10
        assert rep.value == d0 * c0 / 10

    def test_deterministic(self):
        E = np.random.default_rng(10).standard_normal((64, 10))
        a = efficient_eigenscore(E, EesConfig(seed=4)).value
        assert efficient_eigenscore(E, EesConfig(seed=4)).value == a

    def test_finite_and_bounded(self):
        floor = 1e-8
        rng = np.random.default_rng(11)
        for _ in range(20):
            E = rng.standard_normal((rng.integers(5, 200), rng.integers(2, 20)))
            v = efficient_eigenscore(E).value
            assert np.isfinite(v)
            assert -(abs(math.log(floor)) + 1) <= v <= 1.0

    def test_permutation_keeps_rank_order(self):
        rng = np.random.default_rng(12)
        base, permuted = [], []
        for _ in range(200):
            E = decaying_matrix(rng, d=128)
            base.append(efficient_eigenscore(E).value)
            permuted.append(efficient_eigenscore(E[:, rng.permutation(E.shape[1])]).value)
        assert stats.spearmanr(base, permuted).statistic >= 0.95

    def test_ranks_track_exact_on_structured_family(self):
        rng = np.random.default_rng(21)
        exact, ees = [], []
        for _ in range(200):
            E = decaying_matrix(rng, d=256)
            exact.append(exact_eigenscore(E).value)
            ees.append(efficient_eigenscore(E).value)
        assert stats.spearmanr(exact, ees).statistic >= 0.9

    def test_series_error_shrinks_with_moments(self):
        # exact moments (basis-vector probes) isolate the truncation error;
        # pointwise it oscillates with M, so compare well separated orders
        rng = np.random.default_rng(13)
        K = 10
        Q = np.linalg.qr(rng.standard_normal((K, K)))[0]
        lam = rng.uniform(0.1, 1.0, K)
        E = Q * np.sqrt(lam)
        target = np.mean(np.log(lam)) / K
        errors = []
        for M in (5, 20, 50):
            d = cheb_apply_sequence(E, np.eye(K), M).sum(axis=1) / K
            c = log_cheb_coefficients(M, 4 * (M + 1) * 16, 1e-8)
            errors.append(abs(combine_ees(d, c, K) - target))
        assert all(b < a for a, b in zip(errors, errors[1:]))
        assert errors[-1] < errors[0] / 10

    def test_clustered_top_spectrum_stays_in_range(self):
        # square Gaussian matrices have clustered top singular values, so a
        # loose power tolerance underestimates sigma_max
        import warnings

        E = np.random.default_rng(18).standard_normal((600, 600))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            v = efficient_eigenscore(E, EesConfig(moments=200, quad_points=1024)).value
        assert np.isfinite(v)

    def test_power_method_failure_is_scoring_error(self):
        E = np.random.default_rng(14).standard_normal((30, 10))
        with pytest.raises(ScoringError, match="power_max_iter"):
            efficient_eigenscore(E, EesConfig(power_tol=1e-15, power_max_iter=1))

    def test_report(self):
        cfg = EesConfig(moments=5, quad_points=64)
        rep = efficient_eigenscore(np.random.default_rng(15).standard_normal((9, 4)), cfg)
        assert isinstance(rep, ScoreReport) and rep.method == "ees"
        assert rep.to_dict()["config"]["moments"] == 5

    @pytest.mark.parametrize("bad", [
        dict(moments=-1), dict(trace_samples=0), dict(quad_points=10),
        dict(lambda_floor=0.5), dict(power_tol=0), dict(power_max_iter=0),
        dict(power_block=0), dict(scale_margin=1.0), dict(probe="cauchy"),
    ])
    def test_config_validation(self, bad):
        with pytest.raises(ValueError):
            EesConfig(**bad)


def decaying_matrix(rng, d=512, K=10):
    """Generation matrix with a random spectral decay rate and a shared offset."""
    beta = rng.uniform(0.0, 1.5)
    s = np.exp(-beta * np.arange(K))
    s /= np.linalg.norm(s)
    Q = stats.ortho_group.rvs(K, random_state=rng)
    return rng.standard_normal((d, K)) @ np.diag(s) @ Q + rng.standard_normal((d, 1))


class TestPair:
    def test_identical_columns(self):
        exact, ees = score_pair(identical_columns())
        assert exact.value == pytest.approx(math.log(1e-3))
        assert ees.value < efficient_eigenscore(np.random.default_rng(16).standard_normal((32, 10))).value

    def test_independent_timings(self):
        exact, ees = score_pair(np.random.default_rng(17).standard_normal((40, 10)))
        assert exact.elapsed_seconds >= 0 and ees.elapsed_seconds >= 0
        assert exact.method == "exact" and ees.method == "ees"
