"""E-step, M-step, initialization strategies, and the full EM loop."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ggmoe import (
    Dataset,
    DimensionError,
    EMConfig,
    ExpertAtom,
    FavorableInit,
    FromMeasureInit,
    MixingMeasure,
    NumericalError,
    RandomSubsetInit,
    average_log_likelihood,
    e_step,
    fit_em,
    init_favorable,
    init_random_subset,
    m_step,
    sample_dataset,
)
from oracles import random_measure, regression_normal_equations, scalar_responsibilities


def symmetric_pair() -> MixingMeasure:
    base = ExpertAtom(0.5, np.array([-1.0]), np.eye(1), np.zeros(1), 0.0, 1.0)
    return MixingMeasure((base, base.replace(gate_mean=np.array([1.0]))))


class TestEStep:
    def test_single_component_gets_everything(self, g0):
        data = sample_dataset(g0, 30, 0)
        g1 = MixingMeasure((ExpertAtom(1.0, np.zeros(1), np.eye(1), np.zeros(1), 0.0, 1.0),))
        resp, total = e_step(g1, data)
        assert np.array_equal(resp, np.ones((30, 1)))
        assert abs(total - 30.0 * average_log_likelihood(g1, data)) < 1e-9

    def test_symmetric_point_splits_evenly(self):
        data = Dataset(x=np.array([[0.0]]), y=np.array([0.0]))
        resp, _ = e_step(symmetric_pair(), data)
        assert np.max(np.abs(resp - 0.5)) < 1e-12

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            d = int(rng.integers(1, 3))
            g = random_measure(rng, int(rng.integers(2, 5)), d)
            x = rng.standard_normal((6, d))
            y = rng.standard_normal(6)
            resp, _ = e_step(g, Dataset(x=x, y=y))
            for i in range(6):
                want = scalar_responsibilities(g, x[i], float(y[i]))
                assert np.max(np.abs(resp[i] - want)) < 1e-12

    @given(st.integers(0, 10**6))
    @settings(max_examples=30)
    def test_rows_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        g = random_measure(rng, int(rng.integers(1, 5)), 1)
        data = Dataset(x=rng.standard_normal((8, 1)), y=rng.standard_normal(8))
        resp, _ = e_step(g, data)
        assert np.max(np.abs(resp.sum(axis=1) - 1.0)) < 1e-12

    def test_total_underflow_raises(self):
        g = MixingMeasure((ExpertAtom(1.0, np.zeros(1), np.eye(1), np.zeros(1), 0.0, 1.0),))
        data = Dataset(x=np.array([[0.0]]), y=np.array([1e300]))
        with pytest.raises(NumericalError), np.errstate(over="ignore"):
            e_step(g, data)


class TestMStep:
    def test_recovers_exact_line(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((200, 1))
        y = 2.0 * x[:, 0] + 1.0
        data = Dataset(x=x, y=y)
        g = m_step(data, np.ones((200, 1)))
        atom = g.atoms[0]
        assert abs(atom.slope[0] - 2.0) < 1e-8
        assert abs(atom.intercept - 1.0) < 1e-8
        assert atom.noise_var < 1e-6

    def test_one_hot_labels_recover_truth(self, g0):
        n = 100_000
        data = sample_dataset(g0, n, 5)
        resp = np.zeros((n, 3))
        resp[np.arange(n), data.labels] = 1.0
        g = m_step(data, resp)
        counts = np.bincount(data.labels, minlength=3)
        for k, (atom, true_atom) in enumerate(zip(g.atoms, g0.atoms)):
            n_k = counts[k]
            gamma = true_atom.gate_cov[0, 0]
            sigma = true_atom.noise_var
            c = true_atom.gate_mean[0]
            assert abs(atom.weight - true_atom.weight) < 4.0 * np.sqrt(
                true_atom.weight * (1 - true_atom.weight) / n
            )
            assert abs(atom.gate_mean[0] - c) < 4.0 * np.sqrt(gamma / n_k)
            assert abs(atom.gate_cov[0, 0] - gamma) < 4.0 * gamma * np.sqrt(2.0 / n_k)
            assert abs(atom.slope[0] - true_atom.slope[0]) < 4.0 * np.sqrt(sigma / (n_k * gamma))
            assert abs(atom.intercept - true_atom.intercept) < 4.0 * np.sqrt(
                sigma * (1.0 / n_k + c**2 / (n_k * gamma))
            )
            assert abs(atom.noise_var - sigma) < 4.0 * sigma * np.sqrt(2.0 / n_k)

    def test_regression_matches_normal_equations(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((300, 2))
        y = x @ np.array([1.5, -0.5]) + 0.3 + 0.1 * rng.standard_normal(300)
        tau = rng.uniform(0.1, 1.0, size=300)
        resp = np.column_stack([tau, 1.0 - tau])
        g = m_step(Dataset(x=x, y=y), resp, cov_floor=0.0)
        for j, col in enumerate((tau, 1.0 - tau)):
            slope, intercept = regression_normal_equations(x, y, col)
            assert np.max(np.abs(g.atoms[j].slope - slope)) < 1e-9
            assert abs(g.atoms[j].intercept - intercept) < 1e-9

    def test_invalid_responsibilities(self):
        data = Dataset(x=np.zeros((3, 1)), y=np.zeros(3))
        with pytest.raises(ValueError):
            m_step(data, np.array([[0.5, 0.4]] * 3))
        with pytest.raises(ValueError):
            m_step(data, np.array([[1.2, -0.2]] * 3))
        with pytest.raises(DimensionError):
            m_step(data, np.ones((4, 1)))

    def test_prev_atom_count_mismatch(self, g0):
        data = sample_dataset(g0, 20, 0)
        with pytest.raises(DimensionError):
            m_step(data, np.ones((20, 1)), prev=g0)

    def test_starved_component_keeps_previous_parameters(self, g0):
        data = sample_dataset(g0, 100, 3)
        prev = init_favorable(g0, 3, 0.01, 0)
        resp = np.column_stack([0.5 * np.ones(100), 0.5 * np.ones(100), np.zeros(100)])
        g = m_step(data, resp, prev=prev)
        assert abs(sum(a.weight for a in g.atoms) - 1.0) < 1e-12
        assert g.atoms[2].weight < 1e-9
        assert np.array_equal(g.atoms[2].gate_mean, prev.atoms[2].gate_mean)
        assert g.atoms[2].noise_var == prev.atoms[2].noise_var

    def test_starved_without_previous_raises(self):
        data = Dataset(x=np.zeros((10, 1)) + np.arange(10)[:, None], y=np.zeros(10))
        resp = np.column_stack([np.ones(10), np.zeros(10)])
        with pytest.raises(NumericalError):
            m_step(data, resp)


class TestInits:
    def test_random_subset_uses_data_rows(self, g0):
        data = sample_dataset(g0, 50, 8)
        g = init_random_subset(data, 4, seed=1)
        assert g.k == 4
        assert np.allclose(g.weights, 0.25)
        rows = {float(v) for v in data.x[:, 0]}
        means = [float(a.gate_mean[0]) for a in g.atoms]
        assert len(set(means)) == 4
        assert all(m in rows for m in means)
        shared = g.atoms[0]
        for atom in g.atoms[1:]:
            assert np.array_equal(atom.gate_cov, shared.gate_cov)
            assert atom.noise_var == shared.noise_var

    def test_random_subset_needs_enough_rows(self, g0):
        data = sample_dataset(g0, 3, 0)
        with pytest.raises(ValueError):
            init_random_subset(data, 4, seed=0)

    def test_favorable_tiny_spread_recovers_reference(self, g0):
        g = init_favorable(g0, 3, spread=1e-12, seed=5)
        assert np.allclose(g.weights, 1.0 / 3.0)
        got = sorted(g.atoms, key=lambda a: a.gate_mean[0])
        want = sorted(g0.atoms, key=lambda a: a.gate_mean[0])
        for a, b in zip(got, want):
            assert np.max(np.abs(a.param_vector() - b.param_vector())) < 1e-9

    def test_favorable_covers_every_reference_atom(self, g0):
        g = init_favorable(g0, 5, spread=0.02, seed=3)
        assert g.k == 5
        owners = []
        for atom in g.atoms:
            gaps = [np.linalg.norm(atom.param_vector() - ref.param_vector()) for ref in g0.atoms]
            owners.append(int(np.argmin(gaps)))
        assert set(owners) == {0, 1, 2}

    def test_favorable_valid_across_seeds(self, g0):
        for seed in range(1000):
            init_favorable(g0, 5, spread=0.02, seed=seed)

    def test_favorable_rejects_bad_arguments(self, g0):
        with pytest.raises(ValueError):
            init_favorable(g0, 2, spread=0.02, seed=0)
        with pytest.raises(ValueError):
            init_favorable(g0, 5, spread=0.0, seed=0)
        with pytest.raises(ValueError):
            FavorableInit(g0, spread=-1.0)


class TestEMConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            EMConfig(n_components=0)
        with pytest.raises(ValueError):
            EMConfig(n_components=1, tol=0.0)
        with pytest.raises(ValueError):
            EMConfig(n_components=1, max_iter=0)
        with pytest.raises(ValueError):
            EMConfig(n_components=1, cov_floor=1.0)


class TestFitEM:
    def test_needs_enough_rows(self, g0):
        data = sample_dataset(g0, 4, 0)
        with pytest.raises(ValueError):
            fit_em(data, EMConfig(n_components=5))

    def test_from_measure_start_beats_truth_likelihood(self, g0):
        data = sample_dataset(g0, 10_000, 6)
        result = fit_em(data, EMConfig(n_components=3, init=FromMeasureInit(g0)))
        assert result.avg_loglik >= average_log_likelihood(g0, data) - 1e-3

    def test_from_measure_atom_count_mismatch(self, g0):
        data = sample_dataset(g0, 100, 0)
        with pytest.raises(ValueError):
            fit_em(data, EMConfig(n_components=5, init=FromMeasureInit(g0)))

    def test_huge_tol_stops_after_one_step(self, g0):
        data = sample_dataset(g0, 200, 2)
        result = fit_em(data, EMConfig(n_components=2, tol=1e10))
        assert result.n_iter == 1
        assert result.converged
        assert len(result.loglik_trace) == 2

    def test_trace_non_decreasing_on_overfit(self, g0):
        data = sample_dataset(g0, 2000, 12)
        result = fit_em(
            data, EMConfig(n_components=5, init=FavorableInit(g0, 0.02), seed=12)
        )
        trace = result.loglik_trace
        assert all(b >= a - 1e-8 * abs(a) for a, b in zip(trace, trace[1:]))

    def test_converged_fit_is_a_fixed_point(self, g0):
        data = sample_dataset(g0, 2000, 9)
        cfg = EMConfig(n_components=3, init=FavorableInit(g0, 0.02), seed=9)
        result = fit_em(data, cfg)
        assert result.converged
        resp, ll_now = e_step(result.measure, data)
        g_next = m_step(data, resp, cov_floor=cfg.cov_floor, prev=result.measure)
        _, ll_next = e_step(g_next, data)
        assert abs(ll_next - ll_now) <= cfg.tol * abs(ll_now)

    def test_permutation_equivariance(self, g0):
        data = sample_dataset(g0, 500, 4)
        start = init_favorable(g0, 4, spread=0.05, seed=4)
        order = [2, 0, 3, 1]
        cfg = dict(n_components=4, tol=1e-12, max_iter=5)
        base = fit_em(data, EMConfig(init=FromMeasureInit(start), **cfg))
        perm = fit_em(data, EMConfig(init=FromMeasureInit(start.permuted(order)), **cfg))
        assert abs(base.avg_loglik - perm.avg_loglik) < 1e-9
        for i, j in enumerate(order):
            gap = np.max(np.abs(perm.measure.atoms[i].param_vector() - base.measure.atoms[j].param_vector()))
            assert gap < 1e-9
            assert abs(perm.measure.atoms[i].weight - base.measure.atoms[j].weight) < 1e-9
        assert np.max(np.abs(perm.responsibilities - base.responsibilities[:, order])) < 1e-9

    def test_fit_result_round_trip(self, g0, tmp_path):
        data = sample_dataset(g0, 100, 1)
        result = fit_em(data, EMConfig(n_components=2, max_iter=10))
        path = tmp_path / "fit.json"
        result.to_json(path)
        import json

        payload = json.loads(path.read_text())
        assert payload["avg_loglik"] == result.avg_loglik
        assert MixingMeasure.from_dict(payload["measure"]).k == 2
        resp_path = tmp_path / "resp.csv"
        result.responsibilities_to_csv(resp_path)
        header = resp_path.read_text().splitlines()[0]
        assert header == "tau_1,tau_2"

    @given(st.integers(0, 10**6))
    @settings(max_examples=20)
    def test_monotone_trace_random_starts(self, seed):
        rng = np.random.default_rng(seed)
        g0 = random_measure(rng, 2, 1)
        data = sample_dataset(g0, 120, seed)
        result = fit_em(data, EMConfig(n_components=int(rng.integers(1, 4)), max_iter=25, seed=seed))
        trace = result.loglik_trace
        assert all(b >= a - 1e-8 * abs(a) for a, b in zip(trace, trace[1:]))
