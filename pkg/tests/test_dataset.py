import copy
import json
import math
import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from cubeval import dataset
from cubeval.dataset import RotationRepairWarning, StatsConfig, correlations, nearest_rotation, parse_dataset, stats
from cubeval.errors import GeometryError, InsufficientData, ReferentialError, SchemaError
from cubeval.synthetic import random_rotation
from conftest import DATA
from reference_stats import reference_stats

W, H = 1280, 720
K = {"fx": 720.0, "fy": 720.0, "px": 640.0, "py": 360.0}


def image(id_=0, intrinsics=K):
    return {"id": id_, "width": W, "height": H, "intrinsics": intrinsics}


def ann(center=(0.0, 0.0, 5.0), image_id=0, category="car", rotation=None, bbox2d=(600.0, 320.0, 80.0, 80.0), **kw):
    rot = np.eye(3).ravel().tolist() if rotation is None else list(np.ravel(rotation))
    return {
        "image_id": image_id,
        "category": category,
        "bbox2d": list(bbox2d),
        "center_cam": list(center),
        "rotation": rot,
        "dims": [1.0, 1.5, 4.0],
        **kw,
    }


def doc(annotations, images=None, categories=None):
    out = {"images": images or [image()], "annotations": annotations}
    if categories is not None:
        out["categories"] = categories
    return out


def center_for(y_norm, z, x_norm=0.5):
    """Camera-frame center whose projection lands at normalized (x_norm, y_norm)."""
    return ((x_norm * W - K["px"]) * z / K["fx"], (y_norm * H - K["py"]) * z / K["fy"], z)


class TestLoad:
    def test_minimal(self, tmp_path):
        path = tmp_path / "d.json"
        path.write_text(json.dumps(doc([ann()])))
        ds = dataset.load(path)
        assert (len(ds.images), len(ds.annotations)) == (1, 1)
        assert ds.annotations[0].box.volume == pytest.approx(6.0)

    def test_dangling_image_id(self):
        with pytest.raises(ReferentialError, match="'ghost'"):
            parse_dataset(doc([ann(image_id="ghost")]))

    @pytest.mark.parametrize(
        "mutate, match",
        [
            (lambda a: a.pop("dims"), r"annotations\[0\] \(id=17\): missing field\(s\) \['dims'\]"),
            (lambda a: a.update(colour="red"), "unknown field"),
            (lambda a: a.update(dims=[1, 2]), "dims must be a list of 3"),
            (lambda a: a.update(dims=[1, 0, 2]), "dims must be positive"),
            (lambda a: a.update(occlusion=1.2), r"occlusion must lie in \[0, 1\]"),
            (lambda a: a.update(category=" "), "category"),
            (lambda a: a.update(center_cam=[0, "x", 1]), "non-numeric"),
        ],
    )
    def test_schema_errors(self, mutate, match):
        a = ann(id=17)
        mutate(a)
        with pytest.raises(SchemaError, match=match):
            parse_dataset(doc([a]))

    def test_record_id_in_message(self):
        a = ann(id="obj-9")
        a["dims"] = [1, -1, 1]
        with pytest.raises(SchemaError, match="obj-9"):
            parse_dataset(doc([a]))

    def test_duplicate_image(self):
        with pytest.raises(SchemaError, match="duplicate"):
            parse_dataset(doc([], images=[image(), image()]))

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n "images": [\n ,]\n}')
        with pytest.raises(SchemaError, match="line 3"):
            dataset.load(path)

    def test_missing_intrinsics_fall_back(self):
        ds = parse_dataset(doc([ann()], images=[image(intrinsics=None)]))
        K0 = ds.images[0].intrinsics
        assert K0.estimated and (K0.fx, K0.px, K0.py) == (2 * H, W / 2, H / 2)


class TestRotations:
    def drifted(self, eps, seed=0):
        rng = np.random.default_rng(seed)
        R = random_rotation(rng)
        return R + eps * rng.uniform(-1, 1, (3, 3)), R

    def test_small_drift_repaired_with_warning(self):
        bad, _ = self.drifted(1e-5)
        with pytest.warns(RotationRepairWarning):
            ds = parse_dataset(doc([ann(rotation=bad)]))
        R = ds.annotations[0].box.rotation
        polar, _ = scipy.linalg.polar(bad)
        np.testing.assert_allclose(R, polar, atol=1e-12)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)

    def test_roundoff_is_repaired_silently(self):
        bad, _ = self.drifted(1e-8)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            ds = parse_dataset(doc([ann(rotation=bad)]))
        np.testing.assert_allclose(ds.annotations[0].box.rotation, scipy.linalg.polar(bad)[0], atol=1e-12)

    def test_large_drift_rejected(self):
        bad, _ = self.drifted(1e-2)
        with pytest.raises(GeometryError, match="annotations"):
            parse_dataset(doc([ann(rotation=bad)]))

    def test_reflection_rejected(self):
        with pytest.raises(GeometryError, match="determinant"):
            parse_dataset(doc([ann(rotation=np.diag([1.0, 1.0, -1.0]))]))

    @given(st.integers(0, 2**32 - 1), st.floats(1e-9, 1e-3))
    def test_nearest_rotation_matches_polar(self, seed, eps):
        bad, _ = self.drifted(eps, seed)
        np.testing.assert_allclose(nearest_rotation(bad), scipy.linalg.polar(bad)[0], atol=1e-12)


class TestRoundTrip:
    def test_fixture_round_trip(self, tmp_path, data_dir):
        ds = dataset.load(data_dir / "eval_gt.json")
        ds.save(tmp_path / "copy.json")
        again = dataset.load(tmp_path / "copy.json")
        assert again.to_dict() == ds.to_dict()
        for a, b in zip(ds.annotations, again.annotations):
            np.testing.assert_array_equal(a.box.rotation, b.box.rotation)
            np.testing.assert_array_equal(a.box.center, b.box.center)

    def test_repaired_rotation_survives(self, tmp_path):
        bad, _ = TestRotations().drifted(1e-5)
        with pytest.warns(RotationRepairWarning):
            ds = parse_dataset(doc([ann(rotation=bad)], categories=[{"name": "car", "priors": [1.8, 1.5, 4.2]}]))
        ds.save(tmp_path / "r.json")
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            again = dataset.load(tmp_path / "r.json")
        assert again.to_dict() == ds.to_dict()


class TestPredictions:
    def pred(self, **kw):
        base = ann()
        base.pop("bbox2d")
        return {**base, "score": 0.5, **kw}

    def test_wrapped_and_bare(self):
        p = self.pred()
        assert len(dataset.parse_predictions({"predictions": [p]})) == 1
        assert len(dataset.parse_predictions([p, p])) == 2

    def test_bad_score(self):
        with pytest.raises(SchemaError, match=r"predictions\[0\] \(id=4\): score"):
            dataset.parse_predictions([self.pred(score=1.5, id=4)])


class TestCorrelations:
    def test_perfect_linear(self):
        ys = np.linspace(0.55, 0.95, 12)
        anns = [ann(center=center_for(y, 10.0 * y), bbox2d=(0, 0, 100 / y, 50)) for y in ys]
        cy, _ = correlations(parse_dataset(doc(anns)))
        assert cy == pytest.approx(1.0, abs=1e-12)

    def test_constant_y_is_insufficient(self):
        anns = [ann(center=center_for(0.7, z)) for z in (3.0, 6.0, 9.0)]
        ds = parse_dataset(doc(anns))
        with pytest.raises(InsufficientData):
            correlations(ds)
        report = stats(ds)
        assert report.corr_y_z is None

    def test_single_annotation(self):
        with pytest.raises(InsufficientData):
            correlations(parse_dataset(doc([ann()])))

    def test_noisy_matches_closed_form(self):
        rng = np.random.default_rng(0)
        n, slope, sigma = 20000, 20.0, 1.5
        y = rng.uniform(0.5, 0.95, n)
        z = 5.0 + slope * (y - 0.5) + rng.normal(scale=sigma, size=n)
        z = np.clip(z, 0.5, None)
        anns = [ann(center=center_for(a, b), bbox2d=(0, 0, 400 / b, 400 / b)) for a, b in zip(y, z)]
        cy, _ = correlations(parse_dataset(doc(anns)))
        expected = 1 / math.sqrt(1 + sigma**2 / (slope**2 * np.var(y)))
        assert cy == pytest.approx(expected, abs=0.02)

    @given(st.integers(0, 1000), st.floats(0.1, 10.0), st.floats(0.0, 20.0))
    def test_affine_depth_invariance(self, seed, a, b):
        rng = np.random.default_rng(seed)
        y = rng.uniform(0.5, 0.95, 10)
        z = rng.uniform(2.0, 30.0, 10)
        sizes = rng.uniform(10, 300, 10)

        def build(depths):
            return parse_dataset(doc([ann(center=center_for(yy, zz), bbox2d=(0, 0, s, s)) for yy, zz, s in zip(y, depths, sizes)]))

        base = correlations(build(z))
        moved = correlations(build(a * z + b))
        assert moved == pytest.approx(base, abs=1e-9)


class TestStats:
    def test_centered_object(self):
        report = stats(parse_dataset(doc([ann(center=(0.0, 0.0, 5.0))])))
        assert report.center_hist[32, 32] == 1 and report.center_hist.sum() == 1
        assert report.xz_hist[16, 32] == 1

    def test_all_at_depth_five(self):
        anns = [ann(center=(x, 0.0, 5.0)) for x in np.linspace(-3, 3, 7)]
        report = stats(parse_dataset(doc(anns)))
        assert report.xz_hist[16].sum() == 7 and report.xz_hist.sum() == 7

    def test_spill_is_counted(self):
        anns = [ann(center=(0.0, 0.0, 50.0)), ann(center=(0.0, 0.0, -2.0)), ann(center=(30.0, 0.0, 5.0))]
        report = stats(parse_dataset(doc(anns)))
        assert report.xz_spill == 3  # too deep, behind the camera, too far right
        assert report.center_spill == 2  # behind the camera, off the right edge
        assert report.center_hist.sum() + report.center_spill == 3

    def test_depth_range(self):
        anns = [ann(center=(0.0, 0.0, 50.0))]
        report = stats(parse_dataset(doc(anns)), StatsConfig(depth_range=(0.0, 64.0)))
        assert report.xz_hist[50, 32] == 1

    def test_category_counts(self):
        anns = [ann(category=c) for c in ["car", "Car ", "chair", "car", "lamp"]]
        assert stats(parse_dataset(doc(anns))).category_counts == {"car": 3, "chair": 1, "lamp": 1}

    @given(st.randoms(use_true_random=False))
    def test_permutation_invariance(self, rnd):
        raw = json.loads((DATA / "stats_dataset.json").read_text())
        base = stats(parse_dataset(raw)).to_dict()
        shuffled = copy.deepcopy(raw)
        rnd.shuffle(shuffled["annotations"])
        got = stats(parse_dataset(shuffled)).to_dict()
        corr, corr0 = got.pop("correlation"), base.pop("correlation")
        assert got == base
        for key in corr0:
            assert corr[key] == pytest.approx(corr0[key], abs=1e-12)

    def test_matches_loop_reference(self, data_dir):
        raw = json.loads((data_dir / "stats_dataset.json").read_text())
        got = stats(parse_dataset(raw)).to_dict()
        ref = reference_stats(raw)
        for key in ("n_annotations", "category_counts", "n_estimated_intrinsics"):
            assert got[key] == ref[key]
        for key in ("center_hist", "xz_hist", "size_hist"):
            assert got[key]["counts"] == ref[key]["counts"]
            assert got[key]["spill"] == ref[key]["spill"]
        for key, value in ref["correlation"].items():
            assert got["correlation"][key] == pytest.approx(value, abs=1e-12)
        assert got["n_estimated_intrinsics"] == 1
