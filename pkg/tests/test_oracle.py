import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hidden_dpsgd import oracle as orc
from hidden_dpsgd import specfun
from hidden_dpsgd.accountant import SamplingScheme
from hidden_dpsgd.hockey_stick import DiscreteDist, hs_divergence, theta
from hidden_dpsgd.oracle import Grid1D, ToyProblem
from hidden_dpsgd import suites

GRID = Grid1D.centered(0.02, 201)


class TestGrid:
    def test_geometry(self):
        g = Grid1D(-1.0, 1.0, 4)
        assert g.h == 0.5
        assert g.edges.tolist() == [-1.0, -0.5, 0.0, 0.5, 1.0]
        assert g.atoms.tolist() == [-0.75, -0.25, 0.25, 0.75]

    def test_centered_has_zero_atom(self):
        assert GRID.atoms[100] == pytest.approx(0.0, abs=1e-15)

    def test_alignment(self):
        assert GRID.edge_index(-1.01) == 50
        with pytest.raises(ValueError):
            GRID.edge_index(0.003)
        assert GRID.inside((-1.01, 1.01)).sum() == 101

    @pytest.mark.parametrize("args", [(1.0, 0.0, 5), (0.0, 1.0, 2)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            Grid1D(*args)


class TestMaps:
    def test_clip(self):
        assert orc.clip(3.0, 2.0) == 2.0
        assert orc.clip(1.0, 2.0) == 1.0
        assert orc.clip(-5.0, 2.0) == -2.0
        assert orc.clip(np.array([-3.0, 0.5]), 1.0).tolist() == [-1.0, 0.5]
        with pytest.raises(ValueError):
            orc.clip(1.0, 0.0)

    def test_update_example(self):
        prob = ToyProblem((0.0,), eta=0.1, C=2.0)
        assert float(orc.update_map(prob, (0,))(1.0)) == pytest.approx(0.9)

    def test_zero_step(self):
        prob = ToyProblem((0.3, -2.0), eta=0.0, lam=0.25)
        w = np.linspace(-2, 2, 9)
        for batch in [(0,), (1,), (0, 1), ()]:
            assert orc.update_map(prob, batch)(w) == pytest.approx(0.75 * w)

    @given(
        st.sampled_from(sorted(orc.LOSS_GRADIENTS)),
        st.lists(st.floats(-5, 5), min_size=1, max_size=4),
        st.floats(0, 2),
        st.floats(0.1, 3),
        st.floats(0, 0.9),
        st.floats(-10, 10),
    )
    def test_step_bounded_by_eta_c(self, loss, data, eta, C, lam, w):
        prob = ToyProblem(tuple(data), loss=loss, eta=eta, C=C, lam=lam)
        for k in range(prob.n + 1):
            batch = tuple(range(k))
            assert abs(float(orc.update_map(prob, batch)(w)) - (1 - lam) * w) <= eta * C + 1e-12

    def test_capacity(self):
        with pytest.raises(ValueError):
            ToyProblem(tuple(range(13)))
        with pytest.raises(ValueError):
            ToyProblem((1.0,), loss="hinge")

    def test_batch_distribution(self):
        dist = orc.batch_distribution(SamplingScheme.poisson(0.3), 1)
        assert dist == [((), pytest.approx(0.7)), ((0,), pytest.approx(0.3))]
        dist = orc.batch_distribution(SamplingScheme.without_replacement(1, 2), 2)
        assert dist == [((0,), 0.5), ((1,), 0.5)]
        total = sum(w for _, w in orc.batch_distribution(SamplingScheme.poisson(0.4), 5))
        assert total == pytest.approx(1.0, abs=1e-15)
        with pytest.raises(ValueError):
            orc.batch_distribution(SamplingScheme.without_replacement(1, 3), 2)


class TestKernels:
    def test_snap_linear_split(self):
        g = Grid1D(0.0, 4.0, 4)  # atoms 0.5, 1.5, 2.5, 3.5
        rows = orc.snap_matrix(g, np.array([1.5, 1.75, -3.0, 9.0]))
        assert rows[0].tolist() == [0.0, 1.0, 0.0, 0.0]
        assert rows[1].tolist() == [0.0, 0.75, 0.25, 0.0]
        assert rows[2].tolist() == [1.0, 0.0, 0.0, 0.0]
        assert rows[3].tolist() == [0.0, 0.0, 0.0, 1.0]
        # First moment is preserved for interior positions.
        assert rows[1] @ g.atoms == pytest.approx(1.75)

    def test_mixture_poisson_single_point(self):
        prob = ToyProblem((0.5,), eta=0.2)
        scheme = SamplingScheme.poisson(0.3)
        K = orc.mixture_kernel(prob, scheme, GRID)
        expected = 0.7 * orc.snap_matrix(GRID, orc.update_map(prob, ())(GRID.atoms)) + 0.3 * orc.snap_matrix(
            GRID, orc.update_map(prob, (0,))(GRID.atoms))
        assert K == pytest.approx(expected, abs=1e-15)

    def test_mixture_without_replacement(self):
        prob = ToyProblem((0.5, -0.5), eta=0.2)
        K = orc.mixture_kernel(prob, SamplingScheme.without_replacement(1, 2), GRID)
        expected = 0.5 * orc.snap_matrix(GRID, orc.update_map(prob, (0,))(GRID.atoms)) + 0.5 * orc.snap_matrix(
            GRID, orc.update_map(prob, (1,))(GRID.atoms))
        assert K == pytest.approx(expected, abs=1e-15)
        orc.check_stochastic(K)

    def test_gaussian_cell_mass(self):
        g = Grid1D(-5.5, 5.5, 11)
        G = orc.gaussian_kernel(g, 1.0)
        ref = float(1 - mpmath.erfc(mpmath.mpf("0.5") / mpmath.sqrt(2)))
        assert G[5, 5] == pytest.approx(ref, abs=1e-15)
        assert G[5, 5] == pytest.approx(0.382924922548, abs=1e-12)

    def test_gaussian_rows_stochastic_and_symmetric(self):
        G = orc.gaussian_kernel(GRID, 0.7)
        orc.check_stochastic(G, tol=1e-14)
        mid = GRID.n_cells // 2
        assert G[mid] == pytest.approx(G[mid][::-1], abs=1e-12)

    def test_gaussian_folding(self):
        G = orc.gaussian_kernel(GRID, 1.0)
        # First atom -2.00, first cell ends at -1.99: all mass below -1.99 lands there.
        assert G[0, 0] == pytest.approx(1.0 - specfun.q_tail(0.01), abs=1e-14)
        assert G[-1, -1] == pytest.approx(G[0, 0], abs=1e-14)

    def test_gaussian_small_sigma(self):
        G = orc.gaussian_kernel(GRID, 1e-6)
        assert G == pytest.approx(np.eye(GRID.n_cells), abs=1e-12)

    def test_gaussian_domain(self):
        with pytest.raises(ValueError):
            orc.gaussian_kernel(GRID, 0.0)

    def test_projection(self):
        g = Grid1D(-2.0, 2.0, 8)  # h = 0.5
        P = orc.projection_kernel(g, (-1.0, 1.0))
        mu = g.dirac(1.7)
        assert (mu @ P).tolist() == g.dirac(0.75).tolist()
        inside = np.array([0, 0, 0.2, 0.3, 0.4, 0.1, 0, 0])
        assert (inside @ P).tolist() == inside.tolist()
        assert set(np.unique(P)) <= {0.0, 1.0}
        with pytest.raises(ValueError):
            orc.projection_kernel(g, (-0.9, 1.0))

    def test_check_stochastic(self):
        with pytest.raises(ValueError):
            orc.check_stochastic(np.array([[0.5, 0.4], [0.0, 1.0]]))
        with pytest.raises(ValueError):
            orc.check_stochastic(np.array([[1.5, -0.5], [0.0, 1.0]]))
        with pytest.raises(ValueError):
            orc.check_stochastic(np.ones((2, 3)) / 3)


class TestPushForward:
    def test_empty_and_identity(self):
        mu = np.array([0.2, 0.8])
        assert orc.push_forward([], mu).tolist() == mu.tolist()
        assert orc.push_forward([np.eye(2)], mu).tolist() == mu.tolist()

    def test_two_cell_power(self):
        q = 0.2
        K = np.array([[1 - q, q], [q, 1 - q]])
        out = orc.push_forward([K, K], np.array([1.0, 0.0]))
        assert out[0] == pytest.approx(0.5 + 0.5 * (1 - 2 * q) ** 2, abs=1e-15)

    def test_dist_round_trip(self):
        d = GRID.dist(GRID.dirac(0.0))
        out = orc.push_forward([orc.gaussian_kernel(GRID, 1.0)], d)
        assert isinstance(out, DiscreteDist)

    def test_mass_conserved(self):
        prob = ToyProblem((0.3, -0.4, 0.9), loss="nonconvex")
        K = orc.projected_kernel(prob, SamplingScheme.poisson(0.3), GRID, 0.5, (-1.01, 1.01))
        out = orc.push_forward([K] * 20, GRID.dirac(0.0))
        assert out.sum() == pytest.approx(1.0, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            orc.push_forward([np.eye(3)], np.array([0.5, 0.5]))


class TestVerifiers:
    def test_update_diameter_exhaustive_401_atoms(self):
        grid = Grid1D.centered(0.02, 401)
        for loss in orc.LOSS_GRADIENTS:
            prob = ToyProblem((-0.5, 0.0, 0.3, 2.0), loss=loss, eta=0.4, C=0.7)
            for scheme in (SamplingScheme.poisson(0.5), SamplingScheme.without_replacement(2, 4)):
                report = orc.verify_update_diameter(prob, scheme, grid, (-2.01, 2.01))
                assert report.passed, report.to_json()

    def test_identical_inputs_give_zero(self):
        prob = ToyProblem((0.1, 0.2))
        report = orc.verify_coupled_dpi(prob, prob, SamplingScheme.without_replacement(1, 2), GRID, 1.0,
                                        (-1.01, 1.01), 0.5, trials=1)
        assert report.passed
        assert report.max_slack <= 0

    def test_large_noise(self):
        prob, prob_prime = suites.neighbors("quadratic", 2)
        report = orc.verify_coupled_dpi(prob, prob_prime, SamplingScheme.poisson(0.3), GRID, 300.0,
                                        (-1.01, 1.01), 0.0, trials=10)
        assert report.passed
        assert report.details["theta"] < 0.01

    def test_rejects_non_neighbours(self):
        a = ToyProblem((0.0, 1.0))
        with pytest.raises(ValueError):
            orc.verify_coupled_dpi(a, ToyProblem((2.0, 3.0)), SamplingScheme.poisson(0.3), GRID, 1.0,
                                   (-1.01, 1.01), 0.0)

    def test_contraction_degenerate(self):
        report = orc.verify_contraction(GRID, 1.0, (0.0, 0.0), 0.0)
        assert report.details["empirical_sup"] == 0.0
        assert report.passed

    def test_contraction_is_tight(self):
        report = orc.verify_contraction(Grid1D.centered(0.02, 401), 1.0, (-1.01, 1.01), 0.0)
        assert report.passed
        assert report.details["empirical_sup"] == pytest.approx(report.details["analytic_theta"], rel=1e-3)

    def test_coupling_trivial_when_projection_never_binds(self):
        prob, _ = suites.neighbors("quadratic", 4, eta=0.1, C=1.0, lam=0.5)
        kappa = math.sqrt(specfun.chi2_quantile(1, 1 - 1e-13))
        grid = Grid1D.centered(0.02, 2001)
        report = orc.verify_prop4_coupling(prob, SamplingScheme.without_replacement(2, 4), grid, 1.0, kappa, 3)
        assert report.passed
        assert max(report.details["tv"]) <= 3e-12 + report.tolerance
        assert report.details["tv"][0] == 0.0

    def test_coupling_rejects_projected_variant(self):
        prob = ToyProblem((0.0, 1.0))
        with pytest.raises(ValueError):
            orc.verify_prop4_coupling(prob, SamplingScheme.without_replacement(1, 2), GRID, 1.0, 1.0, 2)

    def test_grid_allowance(self):
        for ratio in (0.1, 1.0, 3.0):
            a = orc.grid_allowance(ratio, 0.02, 1.0, 0.5)
            assert 0 <= a <= 0.02 / math.sqrt(2 * math.pi)

    def test_report_json(self):
        report = orc.verify_contraction(GRID, 1.0, (-1.01, 1.01), 1.0)
        record = json.loads(report.to_json())
        assert {"check", "params", "max_slack", "tolerance", "pass"} <= set(record)

    def test_failure_carries_witness(self):
        # Tolerance check against a deliberately wrong (too small) diameter factor.
        prob, prob_prime = regularized_witness_problems()
        report = orc.verify_regularized_dpi(prob, prob_prime, SamplingScheme.without_replacement(1, 2),
                                            Grid1D.centered(0.02, 301), 1.0, 0.5, 2, 0.0, diameter_factor=0.5)
        assert not report.passed
        record = json.loads(report.to_json())
        assert {"mu", "nu", "lhs", "rhs"} <= set(record["witness"])

    def test_recursion_and_theorem_single_case(self):
        prob, prob_prime = suites.neighbors("step", 4)
        for check in (orc.verify_recursion, orc.verify_theorem):
            report = check(prob, prob_prime, SamplingScheme.poisson(0.3), GRID, 0.5, (-1.01, 1.01), 0.0, 5)
            assert report.passed, report.to_json()

    def test_theorem_custom_initialization(self):
        prob, prob_prime = suites.neighbors("nonconvex", 2)
        mu0 = np.zeros(GRID.n_cells)
        mu0[GRID.inside((-1.01, 1.01))] = 1.0
        mu0 /= mu0.sum()
        report = orc.verify_theorem(prob, prob_prime, SamplingScheme.poisson(0.3), GRID, 0.5, (-1.01, 1.01),
                                    0.5, 3, mu0=mu0)
        assert report.passed


def regularized_witness_problems():
    prob = ToyProblem((10.0, 10.0), eta=0.5, C=1.0, lam=0.1)
    return prob, prob.replace_last(-10.0)


def continuous_projected_tv(means_a, means_b, lo, hi):
    """TV between two equal-weight Gaussian mixtures (unit variance) after projection onto [lo, hi]."""
    phi = lambda x, m: mpmath.npdf(x, m, 1)  # noqa: E731
    cdf = lambda x, m: mpmath.ncdf(x, m, 1)  # noqa: E731
    fa = lambda x: sum(phi(x, m) for m in means_a) / len(means_a)  # noqa: E731
    fb = lambda x: sum(phi(x, m) for m in means_b) / len(means_b)  # noqa: E731
    la = sum(cdf(lo, m) for m in means_a) / len(means_a)
    lb = sum(cdf(lo, m) for m in means_b) / len(means_b)
    ha = sum(1 - cdf(hi, m) for m in means_a) / len(means_a)
    hb = sum(1 - cdf(hi, m) for m in means_b) / len(means_b)
    cross = mpmath.findroot(lambda x: fa(x) - fb(x), 0.5)
    interior = mpmath.quad(lambda x: abs(fa(x) - fb(x)), [lo, cross, hi])
    return float((interior + abs(la - lb) + abs(ha - hb)) / 2)


class TestRegularizedStep:
    """The per-step constant of the projected companion process.

    Inputs live in [-r_1, r_1]; the update images of both datasets lie in a
    ball of radius (1 - lam) r_1 + eta C, whose diameter is twice that.
    """

    def test_continuous_witness(self):
        lam, eta, C, kappa = 0.1, 0.5, 1.0, 0.5
        r1 = eta * C + kappa
        r2 = r1 * (1 - (1 - lam) ** 2) / lam
        w, w_prime = 1.0, -0.96
        # X = (10, 10): both batches push w up by eta C; X' = (10, -10) splits.
        images = [(1 - lam) * w + eta * C]
        images_prime = [(1 - lam) * w_prime + eta * C, (1 - lam) * w_prime - eta * C]
        lhs = continuous_projected_tv(images, images_prime, -r2, r2)
        radius = (1 - lam) * r1 + eta * C
        # E_0(delta_w || delta_w') = 1, so the right-hand side is theta itself.
        assert lhs > theta(0.0, radius)
        assert lhs <= theta(0.0, 2 * radius)
        assert lhs == pytest.approx(0.714, abs=1e-3)

    def test_grid_stated_radius_fails_diameter_passes(self):
        prob, prob_prime = regularized_witness_problems()
        scheme = SamplingScheme.without_replacement(1, 2)
        grid = Grid1D.centered(0.02, 301)
        stated = orc.verify_regularized_dpi(prob, prob_prime, scheme, grid, 1.0, 0.5, 2, 0.0)
        doubled = orc.verify_regularized_dpi(prob, prob_prime, scheme, grid, 1.0, 0.5, 2, 0.0, diameter_factor=2.0)
        assert not stated.passed
        assert stated.details["violations"] > 0
        assert doubled.passed

    @pytest.mark.parametrize("loss", sorted(orc.LOSS_GRADIENTS))
    @pytest.mark.parametrize("eps", [0.0, 1.0])
    def test_diameter_version_holds(self, loss, eps):
        prob = ToyProblem((0.4, -0.3, 0.8, 2.0), loss=loss, eta=0.5, C=1.0, lam=0.3)
        prob_prime = prob.replace_last(-2.0)
        report = orc.verify_regularized_dpi(prob, prob_prime, SamplingScheme.without_replacement(2, 4),
                                            Grid1D.centered(0.02, 401), 1.0, 1.0, 3, eps, diameter_factor=2.0)
        assert report.passed, report.to_json()


class TestSuites:
    def test_registry(self):
        assert set(suites.SUITES) == {"contraction", "dpi", "recursion", "coupling", "theorem"}

    def test_unknown(self):
        with pytest.raises(ValueError):
            suites.run_suite("nope")

    def test_run_contraction(self):
        cert = suites.run_suite("contraction")
        assert cert["pass"] and cert["suite"] == "contraction" and len(cert["records"]) == 3
        json.dumps(cert)
