import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltacrop import sampler as sm
from deltacrop.datastore import BandStack
from deltacrop.errors import ContractError


def universe(n, labels=("paddy", "sugarcane", "banana", "pulses", "other"), seed=0):
    rng = np.random.default_rng(seed)
    return [sm.Parcel(f"p{i:03d}", labels[i % len(labels)], tuple(rng.uniform(0, 10, 2))) for i in range(n)]


def stack(date, parcel="p1", h=3, w=3, bands=("B", "G", "R", "NIR"), value=None, seed=0):
    data = np.random.default_rng(seed).uniform(size=(len(bands), h, w)) if value is None else np.full((len(bands), h, w), value)
    return BandStack(parcel, "PS", date, "2019-a", bands, data)


class TestSeeds:
    def test_stable(self):
        assert sm.derive_seed(7, "p1", "2019-01-01", 0) == sm.derive_seed(7, "p1", "2019-01-01", 0)
        assert sm.derive_seed(7, "p1", "2019-01-01", 0) != sm.derive_seed(7, "p1", "2019-01-01", 1)

    def test_splitmix_reference(self):
        # first outputs of SplitMix64 seeded with 0 (published reference values)
        state = 0
        outs = []
        for _ in range(3):
            outs.append(sm.splitmix64(state))
            state = (state + 0x9E3779B97F4A7C15) & sm.MASK64
        assert outs == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


class TestTestSplit:
    def test_172_parcels(self):
        plan = sm.make_test_split(universe(172), 35, seed=3)
        assert len(plan.test_parcels) == 35
        assert len(set(plan.test_parcels)) == 35
        assert len({p.id for p in universe(172)} - set(plan.test_parcels)) == 137

    def test_deterministic(self):
        u = universe(80)
        assert sm.make_test_split(u, 20, 5) == sm.make_test_split(u, 20, 5)

    def test_labels_covered(self):
        # brute force: every label with ≥5 parcels must appear in the holdout
        for seed in range(20):
            u = universe(60, seed=seed)
            plan = sm.make_test_split(u, 12, seed)
            labels = {p.label for p in u if p.id in set(plan.test_parcels)}
            counts = {}
            for p in u:
                counts[p.label] = counts.get(p.label, 0) + 1
            assert {lab for lab, c in counts.items() if c >= 5} <= labels

    def test_spatial_spread(self):
        # one label on a 3×3 grid of 9 clusters, 9 picks → one per cluster
        ps = [sm.Parcel(f"c{i}-{j}", "paddy", (i % 3 * 10 + j * 0.1, i // 3 * 10)) for i in range(9) for j in range(4)]
        plan = sm.make_test_split(ps, 9, 1)
        assert len({pid.split("-")[0] for pid in plan.test_parcels}) == 9

    @pytest.mark.parametrize("count", [0, 10, 11])
    def test_bad_count(self, count):
        with pytest.raises(ContractError):
            sm.make_test_split(universe(10), count, 0)


class TestKFold:
    def test_ten_into_five(self):
        folds = sm.make_kfold(universe(10), 5, 0)
        assert [len(f) for f in folds] == [2] * 5

    def test_partition(self):
        u = universe(37)
        folds = sm.make_kfold(u, 5, 11)
        flat = [p for f in folds for p in f]
        assert sorted(flat) == sorted(p.id for p in u)
        assert len(flat) == len(set(flat))

    def test_stratified(self):
        folds = sm.make_kfold(universe(50), 5, 2)
        label = {p.id: p.label for p in universe(50)}
        for f in folds:
            assert sorted(label[p] for p in f) == sorted(["paddy", "sugarcane", "banana", "pulses", "other"] * 2)

    def test_too_many_folds(self):
        with pytest.raises(ContractError):
            sm.make_kfold(universe(4), 5, 0)

    def test_parcel_with_many_images_in_one_fold(self):
        plan = sm.make_split_plan(universe(40), 8, 5, 4)
        target = plan.folds[2][0]
        holders = [i for i in range(plan.k) if target in plan.fold_split(i)[1]]
        assert holders == [2]
        images = [(target, d) for d in range(40)]
        assert sum(1 for i in range(plan.k) for p, _ in images if p in plan.fold_split(i)[1]) == 40


@given(st.integers(8, 120), st.integers(2, 6), st.integers(0, 2**32 - 1), st.integers(1, 7))
@settings(max_examples=1000, deadline=None)
def test_split_plan_partition_properties(n, k, seed, nlabels):
    labels = [f"c{i}" for i in range(nlabels)]
    u = universe(n, labels=labels, seed=seed % 1000)
    test_count = max(1, n // 5)
    plan = sm.make_split_plan(u, test_count, k, seed)
    test = set(plan.test_parcels)
    flat = [p for f in plan.folds for p in f]
    assert len(test) == test_count
    assert len(flat) == len(set(flat))
    assert set(flat) | test == {p.id for p in u}
    assert not set(flat) & test
    sizes = [len(f) for f in plan.folds]
    assert max(sizes) - min(sizes) <= 1


def test_plan_json_round_trip(tmp_path):
    plan = sm.make_split_plan(universe(30), 6, 5, 9)
    plan.save(tmp_path / "s.json")
    assert sm.SplitPlan.load(tmp_path / "s.json") == plan


class TestPixelSet:
    def test_exact_cover(self):
        s = stack("2019-01-01")
        ps = sm.sample_pixel_set(s, 9, 1)
        rows = {tuple(r) for r in ps.values}
        assert rows == {tuple(v) for v in s.data.reshape(4, -1).T}
        assert len(ps.values) == 9 and ps.source_count == 9

    def test_single_pixel_repeated(self):
        s = stack("2019-01-01", h=1, w=1)
        ps = sm.sample_pixel_set(s, 3, 0)
        assert (ps.values == s.data[:, 0, 0]).all()

    def test_ps_chip_distinct(self):
        s = stack("2019-01-01", h=19, w=19)
        ps = sm.sample_pixel_set(s, 300, 4)
        assert len({tuple(r) for r in ps.values}) == 300

    def test_bad_n(self):
        with pytest.raises(ContractError):
            sm.sample_pixel_set(stack("2019-01-01"), 0, 0)

    @given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 60), st.integers(0, 2**63))
    @settings(max_examples=200, deadline=None)
    def test_membership(self, h, w, n, seed):
        s = stack("2019-01-01", h=h, w=w, seed=h * 7 + w)
        ps = sm.sample_pixel_set(s, n, seed)
        source = {tuple(v) for v in s.data.reshape(4, -1).T}
        rows = [tuple(r) for r in ps.values]
        assert set(rows) <= source
        if h * w >= n:
            assert len(set(rows)) == n
        else:
            assert set(rows) == source
        again = sm.sample_pixel_set(s, n, seed)
        assert (again.values == ps.values).all()


def dates(count, start="2019-01-01", step=16):
    base = np.datetime64(start)
    return [str(base + i * step) for i in range(count)]


class TestSequence:
    def test_full_length(self):
        seq = sm.assemble_sequence([stack(d, seed=i) for i, d in enumerate(dates(41))], 41, 9, 0)
        assert seq.mask.all() and seq.length == 41
        assert (seq.positions == np.arange(41)).all()

    def test_padding(self):
        seq = sm.assemble_sequence([stack(d, seed=i) for i, d in enumerate(dates(30))], 41, 9, 0)
        assert seq.mask.tolist() == [True] * 30 + [False] * 11
        assert (seq.positions[:30] == np.arange(30)).all()
        assert not seq.values[30:].any()

    def test_subsample(self):
        # floor(i*50/41) for i = 0..40, evaluated independently
        expected = [0, 1, 2, 3, 4, 6, 7, 8, 9, 10, 12, 13, 14, 15, 17, 18, 19, 20, 21, 23, 24,
                    25, 26, 28, 29, 30, 31, 32, 34, 35, 36, 37, 39, 40, 41, 42, 43, 45, 46, 47, 48]
        assert sm.subsample_indices(50, 41) == expected
        stacks = [stack(d, value=float(i)) for i, d in enumerate(dates(50))]
        seq = sm.assemble_sequence(stacks, 41, 9, 0)
        assert seq.values[:, 0, 0].tolist() == [float(e) for e in expected]

    def test_order_invariant(self):
        stacks = [stack(d, seed=i) for i, d in enumerate(dates(20))]
        a = sm.assemble_sequence(stacks, 25, 4, 3)
        b = sm.assemble_sequence(stacks[::-1], 25, 4, 3)
        rng = np.random.default_rng(0)
        c = sm.assemble_sequence([stacks[i] for i in rng.permutation(20)], 25, 4, 3)
        assert (a.values == b.values).all() and (a.values == c.values).all()

    def test_empty(self):
        with pytest.raises(ContractError):
            sm.assemble_sequence([], 41, 9, 0)

    def test_mixed_parcels(self):
        with pytest.raises(ContractError):
            sm.assemble_sequence([stack("2019-01-01"), stack("2019-01-02", parcel="p2")], 4, 9, 0)

    def test_collate(self):
        seqs = [sm.assemble_sequence([stack(d) for d in dates(5)], 8, 9, s, label=s) for s in range(3)]
        batch = sm.collate_sequences(seqs)
        assert batch.x.shape == (3, 8, 9, 4) and batch.labels.tolist() == [0, 1, 2]
        assert batch.mask.shape == (3, 8)
