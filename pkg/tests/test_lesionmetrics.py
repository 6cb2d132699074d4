from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from freqseg.exceptions import GeometryMismatchError, SchemaViolationError, SpecError
from freqseg.lesionmetrics import (
    MetricConfig,
    connected_components,
    dice,
    lesion_match,
    lesion_wise_scores,
    nsd,
    surface,
)
from freqseg.volgrid import EVALUATION_REGIONS, BinaryMask, LabelVolume, VoxelGeometry

masks3 = arrays(bool, st.tuples(*[st.integers(1, 7)] * 3))


def mask(shape, *boxes, spacing=(1.0, 1.0, 1.0)):
    bits = np.zeros(shape, bool)
    for box in boxes:
        bits[box] = True
    return BinaryMask.from_array(bits, spacing)


def labels(arr, spacing=(1.0, 1.0, 1.0)):
    return LabelVolume.from_array(np.asarray(arr), spacing)


def two_lesion_fixture():
    ref = np.zeros((16, 16, 16), int)
    ref[1:4, 1:4, 1:4] = 1
    ref[10:12, 10:12, 10:12] = 1
    pred = np.zeros_like(ref)
    pred[1:4, 1:4, 1:4] = 1
    return ref, pred


class TestConfig:
    def test_defaults(self):
        cfg = MetricConfig()
        assert (cfg.connectivity, cfg.match_dilation_voxels, cfg.tau_mm, cfg.min_lesion_voxels) == (26, 1, 0.5, 0)

    @pytest.mark.parametrize("kwargs", [{"connectivity": 8}, {"tau_mm": 0}, {"tau_mm": -1},
                                        {"match_dilation_voxels": -1}, {"min_lesion_voxels": 1.5}])
    def test_invalid(self, kwargs):
        with pytest.raises(SpecError):
            MetricConfig(**kwargs)


class TestComponents:
    def test_empty(self):
        assert connected_components(mask((4, 4, 4))).count == 0

    @pytest.mark.parametrize("conn", [6, 18, 26])
    def test_separated_cubes(self, conn):
        m = mask((10, 10, 10), np.s_[0:2, 0:2, 0:2], np.s_[5:7, 5:7, 5:7])
        lab = connected_components(m, conn)
        assert lab.count == 2
        assert lab.sizes.tolist() == [8, 8]

    def test_corner_touch(self):
        m = mask((3, 3, 3), np.s_[0, 0, 0], np.s_[1, 1, 1])
        assert connected_components(m, 26).count == 1
        assert connected_components(m, 18).count == 2
        assert connected_components(m, 6).count == 2

    def test_edge_touch(self):
        m = mask((3, 3, 3), np.s_[0, 0, 0], np.s_[1, 1, 0])
        assert connected_components(m, 18).count == 1
        assert connected_components(m, 6).count == 2

    def test_raster_order_ids(self):
        m = mask((6, 6, 6), np.s_[4, 4, 4], np.s_[0, 5, 5], np.s_[2, 0, 0])
        lab = connected_components(m, 6).labels
        assert (lab[0, 5, 5], lab[2, 0, 0], lab[4, 4, 4]) == (1, 2, 3)

    @settings(max_examples=50, deadline=None)
    @given(bits=masks3, conn=st.sampled_from([6, 18, 26]))
    def test_matches_bfs_oracle(self, bits, conn):
        lab = connected_components(BinaryMask.from_array(bits), conn)
        ref, count = oracles.components(bits, conn)
        assert lab.count == count
        np.testing.assert_array_equal(lab.labels, ref)
        # partition: disjoint by construction, union equals the mask
        np.testing.assert_array_equal(lab.labels > 0, bits)
        assert lab.sizes.sum() == bits.sum()


class TestDice:
    def test_identical(self):
        m = mask((4, 4, 4), np.s_[1:3, 1:3, 1:3])
        assert dice(m, m) == 1.0

    def test_disjoint(self):
        assert dice(mask((4, 4, 4), np.s_[0, 0, 0]), mask((4, 4, 4), np.s_[3, 3, 3])) == 0.0

    def test_half_overlap(self):
        a = mask((4, 4, 4), np.s_[0:2, 0:2, 0:2])
        b = mask((4, 4, 4), np.s_[1:3, 0:2, 0:2])
        assert (a.count, b.count, int((a.bits & b.bits).sum())) == (8, 8, 4)
        assert dice(a, b) == 0.5

    def test_both_empty(self):
        assert dice(mask((2, 2, 2)), mask((2, 2, 2))) == 1.0

    def test_geometry_mismatch(self):
        with pytest.raises(GeometryMismatchError):
            dice(mask((2, 2, 2)), mask((2, 2, 3)))

    @given(a=arrays(bool, (4, 3, 5)), b=arrays(bool, (4, 3, 5)))
    def test_symmetric(self, a, b):
        ma, mb = BinaryMask.from_array(a), BinaryMask.from_array(b)
        assert dice(ma, mb) == dice(mb, ma)


class TestNsd:
    def test_identical(self):
        m = mask((6, 6, 6), np.s_[1:4, 2:5, 1:3])
        assert nsd(m, m, 0.5) == 1.0

    def test_offset_single_voxels(self):
        assert nsd(mask((5, 5, 5), np.s_[2, 2, 2]), mask((5, 5, 5), np.s_[2, 2, 3]), 0.5) == 0.0

    def test_offset_within_tolerance(self):
        assert nsd(mask((5, 5, 5), np.s_[2, 2, 2]), mask((5, 5, 5), np.s_[2, 2, 3]), 1.0) == 1.0

    def test_anisotropic_spacing(self):
        a = mask((5, 5, 5), np.s_[2, 2, 2], spacing=(1.0, 1.0, 3.0))
        b = mask((5, 5, 5), np.s_[2, 2, 3], spacing=(1.0, 1.0, 3.0))
        assert nsd(a, b, 2.9) == 0.0
        assert nsd(a, b, 3.0) == 1.0

    def test_empty_conventions(self):
        e, f = mask((3, 3, 3)), mask((3, 3, 3), np.s_[1, 1, 1])
        assert nsd(e, e, 0.5) == 1.0
        assert nsd(e, f, 0.5) == 0.0 and nsd(f, e, 0.5) == 0.0

    def test_surface_border_counts_as_outside(self):
        full = np.ones((3, 3, 3), bool)
        s = surface(full)
        assert s.sum() == 26 and not s[1, 1, 1]

    @settings(max_examples=60, deadline=None)
    @given(
        a=arrays(bool, (6, 5, 7)),
        b=arrays(bool, (6, 5, 7)),
        spacing=st.sampled_from([(1.0, 1.0, 1.0), (0.5, 0.8, 1.2), (1.0, 1.0, 2.5)]),
        tau=st.sampled_from([0.5, 1.0, 1.3, 2.0]),
    )
    def test_matches_all_pairs_oracle(self, a, b, spacing, tau):
        ma, mb = BinaryMask.from_array(a, spacing), BinaryMask.from_array(b, spacing)
        got = nsd(ma, mb, tau)
        assert abs(got - oracles.nsd(a, b, spacing, tau)) <= 1e-12
        assert got == nsd(mb, ma, tau)
        assert 0.0 <= got <= 1.0


class TestLesionMatch:
    def test_identical_two_lesions(self):
        m = mask((12, 12, 12), np.s_[0:2, 0:2, 0:2], np.s_[6:9, 6:9, 6:9])
        match = lesion_match(m, m)
        assert match.assigned == {1: (1,), 2: (2,)}
        assert match.false_positives == ()

    def test_far_component_is_false_positive(self):
        ref = mask((12, 12, 12), np.s_[0:2, 0:2, 0:2])
        pred = mask((12, 12, 12), np.s_[0:2, 0:2, 0:2], np.s_[9:11, 9:11, 9:11])
        assert lesion_match(ref, pred).false_positives == (2,)

    def test_adjacent_component_matches(self):
        ref = mask((10, 10, 10), np.s_[2:4, 2:4, 2:4])
        # adjacent: voxel centres one step apart across the ref/pred boundary
        pred = mask((10, 10, 10), np.s_[4:6, 2:4, 2:4])
        assert lesion_match(ref, pred, MetricConfig(match_dilation_voxels=1)).assigned == {1: (1,)}
        unmatched = lesion_match(ref, pred, MetricConfig(match_dilation_voxels=0))
        assert unmatched.assigned == {1: ()} and unmatched.false_positives == (1,)

    def test_two_voxel_gap_needs_two_steps(self):
        ref = mask((10, 10, 10), np.s_[2:4, 2:4, 2:4])
        pred = mask((10, 10, 10), np.s_[5:7, 2:4, 2:4])
        assert lesion_match(ref, pred, MetricConfig(match_dilation_voxels=1)).false_positives == (1,)
        assert lesion_match(ref, pred, MetricConfig(match_dilation_voxels=2)).assigned == {1: (1,)}

    def test_pred_shared_by_two_refs(self):
        ref = mask((10, 10, 10), np.s_[0:2, 0:2, 0:2], np.s_[4:6, 0:2, 0:2])
        pred = mask((10, 10, 10), np.s_[1:5, 0:2, 0:2])
        match = lesion_match(ref, pred, MetricConfig(connectivity=6))
        assert match.assigned == {1: (1,), 2: (1,)}

    def test_min_lesion_voxels(self):
        ref = mask((10, 10, 10), np.s_[0, 0, 0], np.s_[5:8, 5:8, 5:8])
        assert lesion_match(ref, ref, MetricConfig(min_lesion_voxels=2)).kept == (2,)


class TestLesionWiseScores:
    def test_perfect(self, rng):
        lab = rng.integers(0, 5, (8, 9, 7))
        report = lesion_wise_scores(labels(lab), labels(lab))
        assert list(report.regions) == list(EVALUATION_REGIONS)
        for score in report.regions.values():
            assert score.lesion_dice == score.lesion_nsd == 1.0

    def test_missed_lesion(self):
        ref, pred = two_lesion_fixture()
        report = lesion_wise_scores(labels(ref), labels(pred))
        for region in ("ET", "TC", "WT"):
            assert report[region].lesion_dice == 0.5
            assert report[region].n_ref_lesions == 2
        assert report["NET"].lesion_dice == 1.0

    def test_empty_reference_with_prediction(self):
        pred = np.zeros((6, 6, 6), int)
        pred[2, 2, 2] = 4
        report = lesion_wise_scores(labels(np.zeros((6, 6, 6), int)), labels(pred))
        assert report["ED"].lesion_dice == 0.0 and report["ED"].n_false_positive_lesions == 1
        assert report["ET"].lesion_dice == 1.0

    def test_whole_region_nsd_optional(self):
        ref, pred = two_lesion_fixture()
        plain = lesion_wise_scores(labels(ref), labels(pred)).to_dict()
        assert "region_nsd" not in plain["regions"]["ET"]
        extra = lesion_wise_scores(labels(ref), labels(pred), cfg=MetricConfig(whole_region_nsd=True))
        assert 0.0 < extra["ET"].region_nsd < 1.0

    def test_geometry_mismatch(self):
        with pytest.raises(GeometryMismatchError):
            lesion_wise_scores(labels(np.zeros((3, 3, 3), int)), labels(np.zeros((3, 3, 4), int)))

    def test_schema_violation(self):
        from freqseg.volgrid import LabelSchema

        strict = LabelSchema(raw_regions={"ET": 1, "NET": 2, "CC": 3, "ED": 5})
        with pytest.raises(SchemaViolationError):
            lesion_wise_scores(labels(np.full((2, 2, 2), 4)), labels(np.zeros((2, 2, 2), int)), strict)

    def test_far_false_positive_never_helps(self, rng):
        for _ in range(10):
            ref, pred = oracles.random_label_pair(rng, 10)
            big_ref = np.zeros((24, 24, 24), int)
            big_pred = np.zeros_like(big_ref)
            d = ref.shape
            big_ref[:d[0], :d[1], :d[2]] = ref
            big_pred[:d[0], :d[1], :d[2]] = pred
            base = lesion_wise_scores(labels(big_ref), labels(big_pred))
            big_pred[20:23, 20:23, 20:23] = 4
            worse = lesion_wise_scores(labels(big_ref), labels(big_pred))
            for region in ("ED", "WT"):
                assert worse[region].lesion_dice <= base[region].lesion_dice
                assert worse[region].lesion_nsd <= base[region].lesion_nsd

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_dual_implementation(self, seed):
        gen = np.random.default_rng(seed)
        ref, pred = oracles.random_label_pair(gen, 12)
        spacing = [(1.0, 1.0, 1.0), (0.5, 0.5, 1.0), (1.2, 0.9, 0.7)][seed % 3]
        cfg = MetricConfig(
            connectivity=[6, 18, 26][seed % 3],
            match_dilation_voxels=seed % 3,
            tau_mm=[0.5, 1.0, 1.5, 2.0][seed % 4],
            min_lesion_voxels=seed % 2,
        )
        got = lesion_wise_scores(labels(ref, spacing), labels(pred, spacing), cfg=cfg).to_dict()["regions"]
        want = oracles.lesion_report(ref, pred, spacing, cfg.tau_mm, cfg.connectivity,
                                     cfg.match_dilation_voxels, cfg.min_lesion_voxels)
        assert got == want

    def test_report_json_fields(self):
        ref, pred = two_lesion_fixture()
        d = lesion_wise_scores(labels(ref), labels(pred)).to_dict()
        assert set(d["regions"]["ET"]) == {
            "lesion_dice", "lesion_nsd", "n_ref_lesions", "n_pred_lesions", "n_false_positive_lesions"
        }
        assert d["config"]["tau_mm"] == 0.5

