"""sklearn-style facades over the training and clustering internals.

These exist so the package slots into estimator-shaped tooling
(get_params/set_params, fit/predict, clone) without giving up the
pipeline-oriented API underneath. They work on in-memory arrays; for
disk-backed datasets use the trainer module directly.
"""

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted
from torch.utils.data import TensorDataset

from .analysis import ClusterConfig, kmeans_1d
from .models import ModelConfig
from .objective import LossConfig, aggregate_metrics, confusion_counts
from .trainer import TrainConfig, train


def _as_float_tensor(X, name, ndim):
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got {X.ndim}-D shape {X.shape}")
    return torch.from_numpy(X)


class SpreadSegmenter(BaseEstimator):
    """Burned-area segmenter with a fit/predict surface.

    X is a batch of assembled model inputs: [N, C, H, W] for the 2-D
    architectures or [N, C, T, H, W] for unet3d. y is binary [N, H, W].
    """

    def __init__(self, arch="unet2d", base_width=16, levels=2, dropout=0.1,
                 lr=1e-3, weight_decay=1e-4, max_epochs=20, patience=15,
                 batch_size=8, threshold=0.5, seed=0):
        self.arch = arch
        self.base_width = base_width
        self.levels = levels
        self.dropout = dropout
        self.lr = lr
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.batch_size = batch_size
        self.threshold = threshold
        self.seed = seed

    def _input_ndim(self):
        # batch axis included: [N, C, H, W] or [N, C, T, H, W]
        return 5 if self.arch == "unet3d" else 4

    def fit(self, X, y, X_val=None, y_val=None):
        ndim = self._input_ndim()
        X_t = _as_float_tensor(X, "X", ndim)
        y_arr = np.asarray(y)
        if y_arr.shape != (X_t.shape[0], X_t.shape[-2], X_t.shape[-1]):
            raise ValueError(f"y shape {y_arr.shape} does not match X batch {X_t.shape}")
        if not np.isin(y_arr, (0, 1)).all():
            raise ValueError("y must be binary")
        y_t = torch.from_numpy(y_arr.astype(np.float32))[:, None]

        kwargs = dict(base_width=self.base_width, levels=self.levels,
                      dropout=self.dropout, seed=self.seed)
        if self.arch == "unet3d":
            kwargs["time_depth"] = int(X_t.shape[2])
        model_config = ModelConfig(arch=self.arch, in_channels=int(X_t.shape[1]), **kwargs)
        train_config = TrainConfig(
            lr=self.lr, weight_decay=self.weight_decay, max_epochs=self.max_epochs,
            patience=self.patience, batch_size=self.batch_size,
            threshold=self.threshold, seed=self.seed, loss=LossConfig(),
        )
        val_ds = None
        if X_val is not None:
            Xv = _as_float_tensor(X_val, "X_val", ndim)
            yv = torch.from_numpy(np.asarray(y_val, dtype=np.float32))[:, None]
            val_ds = TensorDataset(Xv, yv)
        result = train(model_config, train_config, TensorDataset(X_t, y_t), val_ds)
        self.model_ = result.model
        self.model_config_ = model_config
        self.history_ = result.history
        self.best_val_dice_ = result.best_val_dice
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X_t = _as_float_tensor(X, "X", self._input_ndim())
        self.model_.eval()
        with torch.no_grad():
            return torch.sigmoid(self.model_(X_t))[:, 0].numpy()

    def predict(self, X):
        return (self.predict_proba(X) > self.threshold).astype(np.uint8)

    def score(self, X, y):
        """Micro Dice over the batch."""
        pred = self.predict(X)
        y_arr = np.asarray(y).astype(np.uint8)
        counts = [confusion_counts(pred[i], y_arr[i]) for i in range(len(pred))]
        return aggregate_metrics(counts, "micro").dice


class FireSizeKMeans(BaseEstimator):
    """1-D k-means over burned areas, sklearn-flavored.

    Fitted attributes: cluster_centers_ ascending [k], labels_, inertia_.
    """

    def __init__(self, k=10, seed=0, n_restarts=8, max_iter=300, tol=1e-8):
        self.k = k
        self.seed = seed
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.tol = tol

    def _config(self):
        return ClusterConfig(k=self.k, seed=self.seed, n_restarts=self.n_restarts,
                             max_iter=self.max_iter, tol=self.tol)

    def fit(self, X, y=None):
        values = np.asarray(X, dtype=float).ravel()
        centers, labels, inertia = kmeans_1d(values, self._config())
        self.cluster_centers_ = centers
        self.labels_ = labels
        self.inertia_ = inertia
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        values = np.asarray(X, dtype=float).ravel()
        return np.abs(values[:, None] - self.cluster_centers_[None, :]).argmin(axis=1)

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_
