import numpy as np
import pytest

from cdalign.classifiers import fit_linear
from cdalign.data import UNKNOWN, UNLABELED, DomainDataset
from cdalign.exceptions import ProtocolInfeasible
from cdalign.protocols import (OfficeProtocolSpec, ReidProtocolSpec,
                               SyntheticSpec, apply_office_protocol,
                               apply_reid_protocol, generate_synthetic,
                               rotation_matrix)


def full_domain(domain_id, class_ids, per_class, d=5, seed=0):
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((len(class_ids) * per_class, d))
    labels = np.repeat(np.asarray(class_ids), per_class)
    return DomainDataset(domain_id=domain_id, features=feats, labels=labels)


def labeled_known_classes(ds):
    mask = ds.labels >= 0
    return set(np.unique(ds.labels[mask]).tolist())


class TestOffice:
    def make_pair(self, n_classes=31, per_class=8):
        ids = list(range(n_classes))
        return (full_domain("A", ids, per_class, seed=1),
                full_domain("B", ids, per_class, seed=2))

    def test_class_and_label_counts(self):
        a, b, truth = apply_office_protocol(*self.make_pair(),
                                            OfficeProtocolSpec(seed=3))
        for did in ("A", "B"):
            assert len(set(truth[did].tolist())) <= 16
        pooled = set(truth["A"].tolist()) | set(truth["B"].tolist())
        assert len(pooled) == 16
        assert UNKNOWN in pooled
        for ds in (a, b):
            assert ds.n_labeled == 10 * 3 + 9
            assert int((ds.labels == UNKNOWN).sum()) == 9
            assert len(labeled_known_classes(ds)) == 10

    def test_labeled_class_overlap_exactly_five(self):
        for seed in range(4):
            a, b, _ = apply_office_protocol(*self.make_pair(),
                                            OfficeProtocolSpec(seed=seed))
            overlap = labeled_known_classes(a) & labeled_known_classes(b)
            assert len(overlap) == 5

    def test_per_class_labeled_count(self):
        a, _, _ = apply_office_protocol(*self.make_pair(),
                                        OfficeProtocolSpec(seed=5))
        for c in labeled_known_classes(a):
            assert int((a.labels == c).sum()) == 3

    def test_truth_merges_rest_to_unknown(self):
        a, _, truth = apply_office_protocol(*self.make_pair(),
                                            OfficeProtocolSpec(seed=6))
        known = {c for c in set(truth["A"].tolist()) if c != UNKNOWN}
        assert len(known) == 15
        assert int((truth["A"] == UNKNOWN).sum()) == (31 - 15) * 8

    def test_determinism(self):
        pair = self.make_pair()
        r1 = apply_office_protocol(*pair, OfficeProtocolSpec(seed=9))
        r2 = apply_office_protocol(*pair, OfficeProtocolSpec(seed=9))
        assert np.array_equal(r1[0].labels, r2[0].labels)
        assert np.array_equal(r1[1].labels, r2[1].labels)
        r3 = apply_office_protocol(*pair, OfficeProtocolSpec(seed=10))
        assert not np.array_equal(r1[0].labels, r3[0].labels)

    def test_too_few_classes(self):
        pair = self.make_pair(n_classes=12)
        with pytest.raises(ProtocolInfeasible, match="16 classes"):
            apply_office_protocol(*pair, OfficeProtocolSpec())

    def test_too_few_samples_in_a_class(self):
        pair = self.make_pair(per_class=2)
        with pytest.raises(ProtocolInfeasible, match="needs 3"):
            apply_office_protocol(*pair, OfficeProtocolSpec())

    def test_partially_labeled_input_rejected(self):
        a, b = self.make_pair()
        labels = a.labels.copy()
        labels[0] = UNLABELED
        bad = DomainDataset(domain_id="A", features=a.features, labels=labels)
        with pytest.raises(ProtocolInfeasible, match="fully labeled"):
            apply_office_protocol(bad, b, OfficeProtocolSpec())

    def test_budget_validation(self):
        with pytest.raises(ProtocolInfeasible, match="known classes"):
            OfficeProtocolSpec(n_known=12)  # 2*10-5 = 15 > 12


class TestReid:
    def make_views(self, ids_a, ids_b, per_id=4):
        return (full_domain("A", sorted(ids_a), per_id, seed=3),
                full_domain("B", sorted(ids_b), per_id, seed=4))

    def test_intersection_defines_known(self):
        va, vb = self.make_views(range(1, 10), range(4, 13))
        a, b, truth = apply_reid_protocol(va, vb, ReidProtocolSpec(seed=0))
        known = {c for c in set(truth["A"].tolist()) if c != UNKNOWN}
        assert known == set(range(4, 10))  # N = 6
        assert int((truth["A"] == UNKNOWN).sum()) == 3 * 4
        assert int((truth["B"] == UNKNOWN).sum()) == 3 * 4

    def test_counts_n6(self):
        va, vb = self.make_views(range(1, 10), range(4, 13))
        a, b, _ = apply_reid_protocol(va, vb, ReidProtocolSpec(seed=1))
        for ds in (a, b):
            known = labeled_known_classes(ds)
            assert len(known) == 4
            for c in known:
                assert int((ds.labels == c).sum()) == 1
            assert int((ds.labels == UNKNOWN).sum()) == 1
        assert len(labeled_known_classes(a) & labeled_known_classes(b)) == 2

    @pytest.mark.parametrize("n", [6, 12, 30])
    def test_counts_across_sizes(self, n):
        shared = list(range(n))
        va, vb = self.make_views(shared + [100, 101, 102],
                                 shared + [200, 201, 202], per_id=3)
        a, b, _ = apply_reid_protocol(va, vb, ReidProtocolSpec(seed=2))
        for ds in (a, b):
            assert len(labeled_known_classes(ds)) == (2 * n) // 3
            assert int((ds.labels == UNKNOWN).sum()) == n // 4
        overlap = labeled_known_classes(a) & labeled_known_classes(b)
        assert len(overlap) == n // 3

    def test_no_shared_identities(self):
        va, vb = self.make_views([1, 2, 3], [4, 5, 6])
        with pytest.raises(ProtocolInfeasible, match="share no identities"):
            apply_reid_protocol(va, vb, ReidProtocolSpec())

    def test_not_enough_private_unknown_samples(self):
        # both views share everything -> no private ids to label as unknown
        va, vb = self.make_views(range(8), range(8))
        with pytest.raises(ProtocolInfeasible, match="unknown-class samples"):
            apply_reid_protocol(va, vb, ReidProtocolSpec())

    def test_determinism(self):
        va, vb = self.make_views(range(1, 10), range(4, 13))
        r1 = apply_reid_protocol(va, vb, ReidProtocolSpec(seed=7))
        r2 = apply_reid_protocol(va, vb, ReidProtocolSpec(seed=7))
        assert np.array_equal(r1[0].labels, r2[0].labels)
        assert np.array_equal(r1[1].labels, r2[1].labels)

    def test_exact_fraction_floors(self):
        spec = ReidProtocolSpec()
        assert spec.counts(6) == (4, 2, 1)
        assert spec.counts(12) == (8, 4, 3)
        assert spec.counts(30) == (20, 10, 7)
        assert spec.counts(3) == (2, 1, 0)  # exact rational floor, not float


class TestRotationMatrix:
    def test_orthogonal(self):
        r = rotation_matrix(6, 30.0)
        assert np.allclose(r @ r.T, np.eye(6), atol=1e-12)

    def test_plane_structure(self):
        r = rotation_matrix(4, 90.0)
        assert np.allclose(r @ np.array([1.0, 0, 0, 0]),
                           [0, 1.0, 0, 0], atol=1e-12)
        assert np.allclose(r @ np.array([0, 0, 1.0, 0]),
                           [0, 0, 0, 1.0], atol=1e-12)

    def test_odd_dimension_keeps_last_axis(self):
        r = rotation_matrix(5, 45.0)
        assert r[4, 4] == 1.0
        assert np.allclose(r[4, :4], 0.0) and np.allclose(r[:4, 4], 0.0)

    def test_zero_angle_is_identity(self):
        assert np.array_equal(rotation_matrix(7, 0.0), np.eye(7))


class TestSynthetic:
    def small(self, **overrides):
        base = dict(d=4, n_known=3, n_private_unknown=1, n_per_class=12,
                    labeled_known_per_domain=2, shared_labeled=1,
                    labeled_per_class=3, labeled_unknown=2, seed=0)
        base.update(overrides)
        return SyntheticSpec(**base)

    def test_shapes_and_truth(self):
        a, b, truth = generate_synthetic(self.small())
        assert a.n == b.n == 4 * 12
        assert a.d == b.d == 4
        for did, ds in (("A", a), ("B", b)):
            assert truth[did].shape == (ds.n,)
            assert int((truth[did] == UNKNOWN).sum()) == 12
            assert set(truth[did].tolist()) == {0, 1, 2, UNKNOWN}

    def test_label_counts(self):
        a, b, _ = generate_synthetic(self.small())
        for ds in (a, b):
            assert ds.n_labeled == 2 * 3 + 2
            assert int((ds.labels == UNKNOWN).sum()) == 2
            assert len(labeled_known_classes(ds)) == 2
        assert len(labeled_known_classes(a) & labeled_known_classes(b)) == 1

    def test_given_labels_agree_with_truth(self):
        a, b, truth = generate_synthetic(self.small(seed=3))
        for did, ds in (("A", a), ("B", b)):
            mask = ds.labels != UNLABELED
            assert np.array_equal(ds.labels[mask], truth[did][mask])

    def test_determinism_and_seed_sensitivity(self):
        s = self.small(seed=11)
        a1, b1, _ = generate_synthetic(s)
        a2, b2, _ = generate_synthetic(s)
        assert np.array_equal(a1.features, a2.features)
        assert np.array_equal(b1.labels, b2.labels)
        a3, _, _ = generate_synthetic(self.small(seed=12))
        assert not np.array_equal(a1.features, a3.features)

    def test_zero_shift_same_distribution(self):
        spec = self.small(angle_deg=0.0, shift_sigma=0.0, n_per_class=200,
                          sigma=0.3, seed=5)
        a, b, truth = generate_synthetic(spec)
        for c in range(3):
            ca = a.features[truth["A"] == c].mean(axis=0)
            cb = b.features[truth["B"] == c].mean(axis=0)
            assert np.linalg.norm(ca - cb) < 0.15  # sampling noise only

    def test_shift_changes_distribution(self):
        spec = self.small(n_per_class=200, sigma=0.3, seed=5)
        a, b, truth = generate_synthetic(spec)
        gaps = [np.linalg.norm(a.features[truth["A"] == c].mean(axis=0)
                               - b.features[truth["B"] == c].mean(axis=0))
                for c in range(3)]
        assert max(gaps) > 1.0

    def test_tiny_sigma_separable_within_domain(self):
        spec = self.small(sigma=1e-6, seed=2)
        a, _, truth = generate_synthetic(spec)
        idx = a.labeled_indices
        known = a.labels[idx] >= 0
        clf = fit_linear(a.features[idx][known], a.labels[idx][known])
        test_mask = (truth["A"] >= 0) & np.isin(truth["A"],
                                                a.labels[idx][known])
        pred = clf.predict(a.features[test_mask])
        assert np.mean(pred == truth["A"][test_mask]) == 1.0

    def test_no_leakage_into_datasets(self):
        a, b, truth = generate_synthetic(self.small())
        for did, ds in (("A", a), ("B", b)):
            assert int((ds.labels == UNLABELED).sum()) == ds.n - 8
            assert truth[did] is not ds.labels
            assert not np.shares_memory(truth[did], ds.labels)

    def test_spec_validation(self):
        with pytest.raises(ValueError, match="sigma"):
            self.small(sigma=0.0)
        with pytest.raises(ValueError, match="labeled_per_class"):
            self.small(labeled_per_class=20)
        with pytest.raises(ProtocolInfeasible):
            self.small(labeled_known_per_domain=3, shared_labeled=1)
