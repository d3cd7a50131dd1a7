import math

import numpy as np
import pytest

from deltacrop import datastore as ds
from deltacrop import synthgen as sg
from deltacrop.errors import ContractError


def quiet_config(**kw):
    base = dict(parcels=6, noise={"L8": 0.0, "S2": 0.0, "PS": 0.0}, dropout={"L8": 0.0, "S2": 0.0, "PS": 0.0},
                seed=11)
    base.update(kw)
    return sg.SceneConfig(**base).check()


class TestDoubleLogistic:
    def test_far_past_is_bare_soil(self):
        p = sg.Phenology(0.1, 0.8, 50, 0.2, 150, 0.2)
        assert sg.double_logistic(-1e4, p) == pytest.approx(0.0, abs=1e-12)

    def test_hand_value_at_green_up(self):
        p = sg.Phenology(0.1, 0.8, 50, 0.2, 150, 0.2)
        f = sg.double_logistic(50, p)
        # 1/(1+e^0) - 1/(1+e^{20}) = 0.5 - 2.06e-9
        assert f == pytest.approx(0.5 - 1 / (1 + math.exp(20)), abs=1e-15)
        assert sg.vegetation_index(50, p) == pytest.approx(0.45, abs=1e-8)

    def test_symmetric_peak(self):
        p = sg.Phenology(0.0, 1.0, 40, 0.1, 140, 0.1)
        t = np.linspace(0, 180, 1801)
        f = sg.double_logistic(t, p)
        assert t[np.argmax(f)] == pytest.approx(90.0)

    def test_range_scan(self):
        rng = np.random.default_rng(0)
        t = rng.uniform(-500, 1000, size=10_000)
        for _ in range(100):
            t0 = rng.uniform(-100, 300)
            p = sg.Phenology(0.0, 1.0, t0, rng.uniform(1e-3, 5), t0 + rng.uniform(1e-3, 400), rng.uniform(1e-3, 5))
            f = sg.double_logistic(t, p)
            assert (f >= 0).all() and (f <= 1).all()

    def test_mixing(self):
        soil, veg = np.array([0.2, 0.3]), np.array([0.05, 0.5])
        np.testing.assert_allclose(sg.mix_spectrum(0.25, soil, veg), [0.1625, 0.35])

    def test_invalid_params(self):
        with pytest.raises(ContractError):
            sg.Phenology(0.5, 0.4, 1, 1, 2, 1).check()
        with pytest.raises(ContractError):
            sg.Phenology(0.1, 0.4, 5, 1, 2, 1).check()


class TestParcelSeries:
    def test_homogeneous_when_noise_free(self):
        cfg = quiet_config(pixel_jitter=0.0, native_noise=0.0)
        s = sg.generate_parcel_series(sg.DEFAULT_PROFILES["paddy"], cfg, "x", 5)
        cube = s.render()
        assert (cube == cube[:, :, :1, :1]).all()

    def test_season_length(self):
        cfg = quiet_config(season_days=180)
        s = sg.generate_parcel_series(sg.DEFAULT_PROFILES["banana"], cfg, "x", 5)
        assert s.render().shape == (180, len(sg.NATIVE_TOKENS), 19, 19)

    def test_deterministic(self):
        cfg = quiet_config(native_noise=0.01)
        a = sg.generate_parcel_series(sg.DEFAULT_PROFILES["pulses"], cfg, "x", 9).render()
        b = sg.generate_parcel_series(sg.DEFAULT_PROFILES["pulses"], cfg, "x", 9).render()
        assert a.tobytes() == b.tobytes()

    def test_values_in_range(self):
        cfg = sg.SceneConfig(native_noise=0.05)
        for name, prof in sg.DEFAULT_PROFILES.items():
            cube = sg.generate_parcel_series(prof, cfg, name, 3).render()
            assert cube.min() >= 0 and cube.max() <= 1.5


class TestDataset:
    def test_l8_count_180_day_season(self, tmp_path):
        cfg = quiet_config(parcels=172, satellites=["L8"], season_days=180)
        out = sg.generate_dataset(cfg, tmp_path)
        recs = ds.read_manifest(out.manifests["L8"])
        per = {}
        for r in recs:
            per[r.parcel_id] = per.get(r.parcel_id, 0) + 1
        assert len(per) == 172
        assert set(per.values()) == {math.ceil(180 / 16)}

    def test_cross_sensor_block_means(self, tmp_path):
        cfg = quiet_config(parcels=3, season_days=40)
        out = sg.generate_dataset(cfg, tmp_path)
        by = {}
        for sat in ("L8", "S2", "PS"):
            for r in ds.read_manifest(out.manifests[sat]):
                by[(sat, r.parcel_id, r.date)] = ds.load_stack(r)
        checked = 0
        for (sat, pid, d), stack in by.items():
            if sat == "PS" or ("PS", pid, d) not in by:
                continue
            ps = by[("PS", pid, d)]
            m = stack.height
            edges = [i * 19 // m for i in range(m)] + [19]
            for tok in ("B", "G", "R", "NIR"):
                plane = ps.data[ds.PS.bands.index(tok)].astype(np.float64)
                ref = np.array([[plane[edges[i]:edges[i + 1], edges[j]:edges[j + 1]].mean()
                                 for j in range(m)] for i in range(m)])
                got = stack.data[stack.bands.index(tok)]
                np.testing.assert_allclose(got, ref, atol=1e-5)
                checked += 1
        assert checked > 0

    def test_block_widths(self):
        sizes = np.diff(np.append(sg.block_edges(19, 3), 19))
        assert set(sizes) <= {6, 7}

    def test_label_counts_reproducible(self, tmp_path):
        cfg = quiet_config(parcels=100, crops={"paddy": 0.5, "other": 0.5}, satellites=["L8"], season_days=32)
        a = sg.generate_dataset(cfg, tmp_path / "a").parcels
        b = sg.generate_dataset(cfg, tmp_path / "b").parcels
        assert a == b
        labels = [p["label"] for p in a]
        assert labels.count("paddy") == 50 and labels.count("other") == 50

    def test_monotone_observation_counts(self, tmp_path):
        cfg = sg.SceneConfig(parcels=8, seed=3)
        out = sg.generate_dataset(cfg, tmp_path)
        counts = {}
        for sat in ("L8", "S2", "PS"):
            for r in ds.read_manifest(out.manifests[sat]):
                counts[(sat, r.parcel_id)] = counts.get((sat, r.parcel_id), 0) + 1
        for p in out.parcels:
            pid = p["parcel_id"]
            assert counts[("PS", pid)] >= counts[("S2", pid)] >= counts[("L8", pid)]

    def test_files_are_valid_bsf(self, tmp_path):
        out = sg.generate_dataset(sg.SceneConfig(parcels=2, satellites=["S2"], seed=1), tmp_path)
        for r in ds.read_manifest(out.manifests["S2"]):
            stack = ds.load_stack(r)
            assert stack.bands == ds.S2.bands and stack.data.shape == (12, 7, 7)
            assert r.label == stack.label

    def test_config_json(self, tmp_path):
        cfg = sg.SceneConfig(parcels=3, seed=5)
        back = sg.SceneConfig.from_json(cfg.to_json())
        assert back == cfg
        with pytest.raises(ContractError):
            sg.SceneConfig.from_json({"parcels": 3, "bogus": 1})
        with pytest.raises(ContractError):
            sg.SceneConfig(dropout={"L8": 1.0}).check()


def test_discriminability_placement():
    profiles = sg.DEFAULT_PROFILES
    assert sg.spectral_separation(profiles, ["NIR", "SWIR1", "SWIR2"]) > sg.spectral_separation(profiles, ["R", "G", "B"])


def test_zipf_imbalance():
    w = sg.SceneConfig().crop_weights()
    vals = list(w.values())
    assert vals == sorted(vals, reverse=True) and vals[0] / vals[-1] == pytest.approx(5.0)
