from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqseg.exceptions import GeometryMismatchError, SpecError, ValidationError
from freqseg.fuse import EnsembleSpec, ProbVolume, argmax_labels, fuse_probs
from freqseg.volgrid import PED2025, VoxelGeometry

from conftest import prob_volume, random_probs

THIRD = 1.0 / 3.0


def oracle_fuse(models, weights):
    """Per voxel and class, accumulate w_i * p_i in model order with plain Python floats."""
    dims = models[0].probs.shape
    out = np.zeros(dims)
    for idx in itertools.product(*map(range, dims)):
        acc = 0.0
        for w, m in zip(weights, models):
            acc += w * float(m.probs[idx])
        out[idx] = acc
    return out


def oracle_labels(fused, codes=(1, 2, 3, 4)):
    dims = fused.shape[:3]
    out = np.zeros(dims, dtype=int)
    for idx in itertools.product(*map(range, dims)):
        p = list(fused[idx])
        best = 0
        for c in range(1, len(p)):
            if p[c] > p[best]:
                best = c
        out[idx] = 0 if best == 0 else codes[best - 1]
    return out


def single_voxel(*rows):
    return ProbVolume(VoxelGeometry((1, 1, 1)), np.array(rows, dtype=float).reshape(1, 1, 1, -1))


class TestProbVolume:
    def test_sum_tolerance(self):
        single_voxel([0.5, 0.50005])
        with pytest.raises(ValidationError, match="sums"):
            single_voxel([0.5, 0.6])

    def test_range(self):
        with pytest.raises(ValidationError):
            single_voxel([1.2, -0.2])

    def test_one_class(self):
        with pytest.raises(ValidationError):
            single_voxel([1.0])

    def test_renormalise(self):
        p = np.array([0.4, 0.60004]).reshape(1, 1, 1, 2)
        vol = ProbVolume.from_array(VoxelGeometry((1, 1, 1)), p)
        assert vol.probs.sum() == pytest.approx(1.0, abs=1e-15)
        raw = ProbVolume.from_array(VoxelGeometry((1, 1, 1)), p, renormalize=False)
        assert raw.probs.sum() == pytest.approx(1.00004)

    def test_shape_checked(self):
        with pytest.raises(ValidationError):
            ProbVolume(VoxelGeometry((2, 2, 2)), np.full((2, 2, 3, 2), 0.5))


class TestEnsembleSpec:
    def test_default_thirds(self):
        assert EnsembleSpec.equal(3).weights == (THIRD, THIRD, THIRD)

    @pytest.mark.parametrize("weights", [(0.5, 0.5, 0.5), (1.0, 0.0), (1.2, -0.2), ()])
    def test_invalid(self, weights):
        with pytest.raises(SpecError):
            EnsembleSpec(weights)

    def test_parse(self):
        assert EnsembleSpec.parse("0.7,0.3").weights == (0.7, 0.3)
        with pytest.raises(SpecError):
            EnsembleSpec.parse("0.7;0.3")


class TestFuseProbs:
    def test_identical_models(self, rng):
        m = prob_volume(rng)
        out = fuse_probs([m, m, m], EnsembleSpec.equal(3))
        np.testing.assert_allclose(out.probs, m.probs, rtol=0, atol=1e-12)

    def test_hand_arithmetic(self):
        models = [single_voxel([0.9, 0.1]), single_voxel([0.6, 0.4]), single_voxel([0.3, 0.7])]
        np.testing.assert_allclose(fuse_probs(models).probs.ravel(), [0.6, 0.4], atol=1e-15)

    def test_oracle(self, rng):
        models = [prob_volume(rng, (8, 8, 8), 5) for _ in range(3)]
        fused = fuse_probs(models, EnsembleSpec.equal(3))
        np.testing.assert_allclose(fused.probs, oracle_fuse(models, [THIRD] * 3), rtol=0, atol=1e-12)

    def test_weighted_two_models(self, rng):
        models = [prob_volume(rng, (4, 5, 6), 5) for _ in range(2)]
        fused = fuse_probs(models, EnsembleSpec((0.7, 0.3)))
        np.testing.assert_allclose(fused.probs, oracle_fuse(models, [0.7, 0.3]), rtol=0, atol=1e-12)

    def test_one_model_rejected(self, rng):
        with pytest.raises(ValidationError):
            fuse_probs([prob_volume(rng)])

    def test_weight_count(self, rng):
        with pytest.raises(SpecError):
            fuse_probs([prob_volume(rng)] * 3, EnsembleSpec((0.5, 0.5)))

    def test_geometry_mismatch(self, rng):
        a = prob_volume(rng, (4, 4, 4))
        b = ProbVolume(VoxelGeometry((4, 4, 4), (1, 1, 2)), random_probs(rng, (4, 4, 4), 5))
        with pytest.raises(GeometryMismatchError):
            fuse_probs([a, b])

    def test_class_mismatch(self, rng):
        with pytest.raises(GeometryMismatchError, match="classes"):
            fuse_probs([prob_volume(rng, classes=5), prob_volume(rng, classes=4)])

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(2, 5))
    def test_convex_and_permutation_invariant(self, seed, n):
        gen = np.random.default_rng(seed)
        models = [prob_volume(gen, (3, 3, 3), 4) for _ in range(n)]
        w = gen.random(n) + 0.05
        w = tuple(w / w.sum())
        w = w[:-1] + (1.0 - sum(w[:-1]),)
        fused = fuse_probs(models, EnsembleSpec(w)).probs
        stack = np.stack([m.probs for m in models])
        assert np.all(fused >= stack.min(0) - 1e-12) and np.all(fused <= stack.max(0) + 1e-12)
        order = gen.permutation(n)
        permuted = fuse_probs([models[i] for i in order], EnsembleSpec(tuple(w[i] for i in order))).probs
        np.testing.assert_allclose(permuted, fused, rtol=0, atol=1e-14)


class TestArgmax:
    def test_clear_winner(self):
        assert argmax_labels(single_voxel([0.1, 0.7, 0.1, 0.05, 0.05])).labels.item() == 1

    def test_tie_to_lowest(self):
        assert argmax_labels(single_voxel([0.5, 0.5, 0, 0, 0])).labels.item() == 0
        assert argmax_labels(single_voxel([0.1, 0.0, 0.45, 0.45, 0.0])).labels.item() == 2

    def test_class_count_must_match_schema(self):
        with pytest.raises(SpecError):
            argmax_labels(single_voxel([0.5, 0.25, 0.25]), PED2025)

    def test_pipeline_oracle(self, rng):
        models = [prob_volume(rng, (8, 8, 8), 5) for _ in range(3)]
        labels = argmax_labels(fuse_probs(models)).labels
        np.testing.assert_array_equal(labels, oracle_labels(oracle_fuse(models, [THIRD] * 3)))

    def test_rescaling_invariance(self, rng):
        models = [prob_volume(rng, (5, 5, 5), 5) for _ in range(3)]
        base = argmax_labels(fuse_probs(models)).labels
        scaled = []
        for m in models:
            p = m.probs * 3.7
            scaled.append(ProbVolume(m.geometry, p / p.sum(axis=-1, keepdims=True)))
        np.testing.assert_array_equal(argmax_labels(fuse_probs(scaled)).labels, base)
