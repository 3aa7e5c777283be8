import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewpbo.duels import (
    DuelLog,
    MixedDataset,
    PointRegistry,
    PreferenceDataset,
    build_duel_matrix,
    build_mixed_matrix,
    load_dataset,
    save_dataset,
)
from skewpbo.errors import IndexOutOfRange, PreferenceOnInvalidPoint, SelfDuel
from skewpbo.kernels import RbfArdKernel


class TestKernel:
    def test_diagonal_is_variance(self):
        k = RbfArdKernel(lengthscales=[0.5, 2.0], variance=1.7)
        x = np.array([[0.1, -0.3], [1.0, 2.0]])
        gram = k(x)
        np.testing.assert_allclose(np.diag(gram), 1.7, atol=1e-12)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        k = RbfArdKernel(lengthscales=[1.0, 0.3, 2.0], variance=0.5)
        x = rng.standard_normal((8, 3))
        gram = k(x)
        np.testing.assert_allclose(gram, gram.T, atol=1e-14)

    def test_ard_lengthscales_enter_per_dimension(self):
        k = RbfArdKernel(lengthscales=[1.0, 10.0], variance=1.0)
        a = np.array([[0.0, 0.0]])
        b = np.array([[1.0, 0.0]])
        c = np.array([[0.0, 1.0]])
        assert k(a, b)[0, 0] == pytest.approx(np.exp(-0.5))
        assert k(a, c)[0, 0] == pytest.approx(np.exp(-0.5 / 100.0))

    def test_rejects_nonpositive_parameters(self):
        with pytest.raises(ValueError):
            RbfArdKernel(lengthscales=[0.0], variance=1.0)
        with pytest.raises(ValueError):
            RbfArdKernel(lengthscales=[1.0], variance=-1.0)

    def test_dict_round_trip(self):
        k = RbfArdKernel(lengthscales=[0.35], variance=0.02)
        back = RbfArdKernel.from_dict(k.to_dict())
        np.testing.assert_array_equal(back.lengthscales, k.lengthscales)
        assert back.variance == k.variance


class TestDuelMatrix:
    def test_single_duel(self):
        data = PreferenceDataset(points=[[0.0], [1.0]], duels=[(0, 1)])
        np.testing.assert_array_equal(build_duel_matrix(data).w, [[1.0, -1.0]])

    def test_two_duels_three_points(self):
        # c beats a, then b beats c
        data = PreferenceDataset(points=[[0.0], [1.0], [2.0]], duels=[(2, 0), (1, 2)])
        np.testing.assert_array_equal(
            build_duel_matrix(data).w,
            [[-1.0, 0.0, 1.0], [0.0, 1.0, -1.0]],
        )

    def test_empty_duel_list_gives_zero_rows(self):
        data = PreferenceDataset(points=[[0.0], [1.0]], duels=[])
        w = build_duel_matrix(data)
        assert w.w.shape == (0, 2)

    def test_self_duel_rejected(self):
        with pytest.raises(SelfDuel):
            PreferenceDataset(points=[[0.0], [1.0]], duels=[(1, 1)])

    def test_out_of_range_rejected(self):
        with pytest.raises(IndexOutOfRange):
            PreferenceDataset(points=[[0.0], [1.0]], duels=[(0, 2)])

    def test_unreferenced_point_rejected(self):
        with pytest.raises(IndexOutOfRange):
            PreferenceDataset(points=[[0.0], [1.0], [2.0]], duels=[(0, 1)])

    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=12))
    @settings(max_examples=60, deadline=None)
    def test_rows_always_sum_to_zero_with_one_plus_one_minus(self, pairs):
        pairs = [(w, l) for w, l in pairs if w != l]
        if not pairs:
            return
        used = sorted({i for p in pairs for i in p})
        remap = {v: i for i, v in enumerate(used)}
        duels = [(remap[w], remap[l]) for w, l in pairs]
        pts = [[float(i)] for i in range(len(used))]
        w = build_duel_matrix(PreferenceDataset(points=pts, duels=duels)).w
        assert np.all(w.sum(axis=1) == 0)
        assert np.all((w == 1).sum(axis=1) == 1)
        assert np.all((w == -1).sum(axis=1) == 1)


class TestMixedMatrix:
    def test_labels_only(self):
        data = MixedDataset(points=[[0.0], [1.0]], duels=[], labels=(1, 0))
        np.testing.assert_array_equal(
            build_mixed_matrix(data).w, [[1.0, 0.0], [0.0, -1.0]]
        )

    def test_labels_and_duel_stacked(self):
        data = MixedDataset(points=[[0.0], [1.0]], duels=[(0, 1)], labels=(1, 1))
        np.testing.assert_array_equal(
            build_mixed_matrix(data).w,
            [[1.0, 0.0], [0.0, 1.0], [1.0, -1.0]],
        )

    def test_all_valid_composition(self):
        data = MixedDataset(points=[[0.0], [1.0], [2.0]],
                            duels=[(2, 0), (1, 2)], labels=(1, 1, 1))
        w = build_mixed_matrix(data).w
        np.testing.assert_array_equal(w[:3], np.eye(3))
        np.testing.assert_array_equal(w[3:], [[-1, 0, 1], [0, 1, -1]])

    def test_duel_on_invalid_point_rejected(self):
        with pytest.raises(PreferenceOnInvalidPoint):
            MixedDataset(points=[[0.0], [1.0]], duels=[(0, 1)], labels=(1, 0))

    def test_unlabeled_reference_allowed(self):
        data = MixedDataset(points=[[0.0], [1.0]], duels=[(0, 1)], labels=(1, None))
        w = build_mixed_matrix(data).w
        # one validity row (for the labeled point) plus the duel row
        np.testing.assert_array_equal(w, [[1.0, 0.0], [1.0, -1.0]])


class TestRegistryAndLog:
    def test_exact_duplicates_merge(self):
        reg = PointRegistry(dim=2)
        i = reg.index_of([0.5, 1.0])
        j = reg.index_of(np.array([0.5, 1.0]))
        assert i == j == 0
        assert len(reg) == 1

    def test_near_duplicates_stay_distinct(self):
        reg = PointRegistry(dim=1)
        assert reg.index_of([0.5]) != reg.index_of([0.5 + 1e-12])

    def test_log_accumulates(self):
        log = DuelLog(dim=1)
        log.add_duel([0.0], [1.0])
        log.add_label([2.0], False)
        data = log.mixed_dataset()
        assert data.n_points == 3
        assert data.labels == (None, None, 0)
        w = build_mixed_matrix(data).w
        assert w.shape == (2, 3)

    def test_dataset_file_round_trip(self, tmp_path):
        data = MixedDataset(points=[[0.0], [1.5]], duels=[(0, 1)], labels=(1, 1))
        path = tmp_path / "duels.json"
        save_dataset(data, path)
        back = load_dataset(path)
        assert isinstance(back, MixedDataset)
        np.testing.assert_array_equal(back.points, data.points)
        assert back.duels == data.duels
        assert back.labels == data.labels

    def test_preference_file_round_trip(self, tmp_path):
        data = PreferenceDataset(points=[[0.0], [1.5]], duels=[(1, 0)])
        path = tmp_path / "duels.json"
        save_dataset(data, path)
        back = load_dataset(path)
        assert isinstance(back, PreferenceDataset)
        assert back.duels == ((1, 0),)
