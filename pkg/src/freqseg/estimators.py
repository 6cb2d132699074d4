"""scikit-learn style wrappers over the functional API.

The transforms are stateless apart from ``ZScoreNormalizer``, whose ``fit``
stores the statistics so one volume's normalisation can be applied to
another. Inputs may be bare 3-D arrays or ``ScalarVolume`` objects; outputs
come back in the same form.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dtcwt import DEFAULT_LEVELS, extract_lf
from .filters import load_dtcwt_filters, load_nsct_kernels
from .fuse import EnsembleSpec, ProbVolume, argmax_labels, fuse_probs
from .nsct import extract_hf
from .prep import apply_zscore, zscore_stats
from .validation import check_positive_int, check_schema, check_volume, unwrap
from .volgrid import VoxelGeometry


class LowFrequencyExtractor(TransformerMixin, BaseEstimator):
    """DTCWT low-frequency component of every axial slice."""

    def __init__(self, levels: int = DEFAULT_LEVELS, filters_path=None, n_jobs: int = 1):
        self.levels = levels
        self.filters_path = filters_path
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        check_volume(X)
        check_positive_int(self.levels, "levels")
        self.filters_ = load_dtcwt_filters(self.filters_path)
        return self

    def transform(self, X):
        check_is_fitted(self, "filters_")
        vol, bare = check_volume(X)
        return unwrap(extract_lf(vol, self.levels, self.filters_, self.n_jobs), bare)


class DirectionalHighFrequencyExtractor(TransformerMixin, BaseEstimator):
    """NSCT directional detail; arrays come back with the 4 directions on a new last axis."""

    def __init__(self, filters_path=None):
        self.filters_path = filters_path

    def fit(self, X, y=None):
        check_volume(X)
        self.kernels_ = load_nsct_kernels(self.filters_path)
        return self

    def transform(self, X):
        check_is_fitted(self, "kernels_")
        vol, bare = check_volume(X)
        hf = extract_hf(vol, self.kernels_)
        if bare:
            return np.stack([v.data for v in hf], axis=-1)
        return hf


class FrequencyDecomposer(TransformerMixin, BaseEstimator):
    """One volume -> array of shape ``dims + (5,)`` holding LF, HF1..HF4."""

    def __init__(self, levels: int = DEFAULT_LEVELS, filters_path=None):
        self.levels = levels
        self.filters_path = filters_path

    def fit(self, X, y=None):
        check_volume(X)
        check_positive_int(self.levels, "levels")
        self.filters_ = load_dtcwt_filters(self.filters_path)
        self.kernels_ = load_nsct_kernels(self.filters_path)
        return self

    def transform(self, X):
        check_is_fitted(self, ("filters_", "kernels_"))
        vol, _ = check_volume(X)
        lf = extract_lf(vol, self.levels, self.filters_)
        hf = extract_hf(vol, self.kernels_)
        return np.stack([lf.data] + [v.data for v in hf], axis=-1)


class ZScoreNormalizer(TransformerMixin, BaseEstimator):
    def __init__(self, mode: str = "nonzero"):
        self.mode = mode

    def fit(self, X, y=None):
        vol, _ = check_volume(X)
        self.mean_, self.std_, _ = zscore_stats(vol.data, self.mode)
        return self

    def transform(self, X):
        check_is_fitted(self, ("mean_", "std_"))
        vol, bare = check_volume(X)
        _, _, select = zscore_stats(vol.data, self.mode)
        return unwrap(vol.like(apply_zscore(vol.data, self.mean_, self.std_, select)), bare)


class ProbabilityEnsemble(BaseEstimator):
    """Weighted average of model probability maps followed by argmax.

    ``X`` is a sequence of ``ProbVolume`` objects or of arrays shaped
    ``dims + (C,)``. ``weights=None`` means equal weights.
    """

    def __init__(self, weights=None, schema="ped2025"):
        self.weights = weights
        self.schema = schema

    def _models(self, X):
        models = []
        for m in X:
            if isinstance(m, ProbVolume):
                models.append(m)
            else:
                arr = np.asarray(m)
                models.append(ProbVolume(VoxelGeometry(arr.shape[:3]), arr))
        return models

    def fit(self, X, y=None):
        models = self._models(X)
        self.spec_ = EnsembleSpec(self.weights) if self.weights is not None else EnsembleSpec.equal(len(models))
        self.schema_ = check_schema(self.schema)
        self.n_models_ = len(models)
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "spec_")
        return np.array(fuse_probs(self._models(X), self.spec_).probs)

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "spec_")
        fused = fuse_probs(self._models(X), self.spec_)
        return np.array(argmax_labels(fused, self.schema_).labels)
