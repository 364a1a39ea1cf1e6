"""scikit-learn compatible wrappers around the ingest, training, search and quantization pieces.

They follow the usual estimator contract: constructor arguments are stored
verbatim (so ``get_params``/``clone`` work), learned state gets a trailing
underscore, and inputs go through sklearn's validation helpers.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from tinytc.arch.costs import HardwareBudget
from tinytc.arch.genome import INPUT_LENGTH, ArchGenome, default_parent, instantiate, parse_genome
from tinytc.errors import EmptyAfterCleaning, EmptyDataset
from tinytc.ingest.sessions import RECORD_LENGTH, Session, clean_session, session_bytes
from tinytc.nn.training import TrainConfig, train
from tinytc.quant import calibrate, fold_batchnorm, quantize_model
from tinytc.search.engine import SearchConfig, run_search
from tinytc.search.split import holdout_split, stratified_sample


class SessionVectorizer(TransformerMixin, BaseEstimator):
    """Turn sessions into fixed-length byte vectors.

    Each session is cleaned (unless ``clean=False``), its bytes concatenated,
    then truncated or zero-padded to ``length``. With ``scale`` the output is
    float32 in [0, 1], otherwise uint8. A session with nothing left after
    cleaning becomes an all-zero row so the output keeps one row per input.
    """

    def __init__(self, length: int = RECORD_LENGTH, clean: bool = True, scale: bool = True):
        self.length = length
        self.clean = clean
        self.scale = scale

    def fit(self, sessions, y=None):
        if self.length < 1:
            raise ValueError("length must be >= 1")
        self.n_features_out_ = self.length
        return self

    def transform(self, sessions) -> np.ndarray:
        check_is_fitted(self, "n_features_out_")
        out = np.zeros((len(sessions), self.length), dtype=np.uint8)
        for i, s in enumerate(sessions):
            if not isinstance(s, Session):
                raise TypeError(f"expected Session, got {type(s).__name__}")
            try:
                raw = session_bytes(clean_session(s) if self.clean else s)[:self.length]
            except EmptyAfterCleaning:
                continue
            out[i, :len(raw)] = np.frombuffer(raw, dtype=np.uint8)
        return out.astype(np.float32) / np.float32(255.0) if self.scale else out


def _as_genome(genome, n_classes: int) -> ArchGenome:
    if genome is None:
        return default_parent(n_classes)
    if isinstance(genome, str):
        genome = parse_genome(genome)
    return ArchGenome(tuple(genome.blocks), n_classes)


class _LabelMixin:
    def _encode(self, y):
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        return y_enc


class CNNClassifier(_LabelMixin, ClassifierMixin, BaseEstimator):
    """Train one architecture (``genome``; defaults to the search's starting point) on byte records.

    A stratified ``validation_fraction`` of the data drives the learning-rate
    schedule, early stopping and best-epoch restore.
    """

    def __init__(self, genome=None, learning_rate: float = 1e-3, batch_size: int = 128,
                 max_epochs: int = 100, validation_fraction: float = 0.2, plateau_patience: int = 5,
                 early_stop_patience: int = 10, random_state: int = 0):
        self.genome = genome
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.validation_fraction = validation_fraction
        self.plateau_patience = plateau_patience
        self.early_stop_patience = early_stop_patience
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(lr0=self.learning_rate, batch=self.batch_size, max_epochs=self.max_epochs,
                           plateau_patience=self.plateau_patience,
                           early_stop_patience=self.early_stop_patience, seed=self.random_state)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float32)
        if len(X) == 0:
            raise EmptyDataset("cannot fit on an empty dataset")
        y_enc = self._encode(y)
        self.genome_ = _as_genome(self.genome, len(self.classes_))
        tr, va = holdout_split(y_enc, self.validation_fraction, self.random_state)
        model = instantiate(self.genome_, X.shape[1], seed=self.random_state)
        self.model_, self.history_ = train(model, X[tr], y_enc[tr], X[va], y_enc[va], self._train_config())
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float32)
        return self.model_.predict_proba(X)

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[proba.argmax(axis=1)]


class HardwareAwareNAS(_LabelMixin, ClassifierMixin, BaseEstimator):
    """Evolutionary search for the most accurate architecture under a hardware budget.

    After the search the winner is retrained on all of ``X`` with
    ``refit_epochs`` (when ``refit``) and exposed as ``best_estimator_``.
    """

    def __init__(self, generations: int = 100, children: int = 10, runs: int = 3, holdout: float = 0.2,
                 param_limit: int = 128_000, tensor_limit: int = 24_000, flop_limit: int = 12_000_000,
                 max_epochs: int = 100, batch_size: int = 128, initial_genome=None, refit: bool = True,
                 refit_epochs: int = 200, workers: int = 1, random_state: int = 0):
        self.generations = generations
        self.children = children
        self.runs = runs
        self.holdout = holdout
        self.param_limit = param_limit
        self.tensor_limit = tensor_limit
        self.flop_limit = flop_limit
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.initial_genome = initial_genome
        self.refit = refit
        self.refit_epochs = refit_epochs
        self.workers = workers
        self.random_state = random_state

    def search_config(self, input_len: int = INPUT_LENGTH) -> SearchConfig:
        return SearchConfig(
            generations=self.generations, children=self.children, runs=self.runs, holdout=self.holdout,
            budget=HardwareBudget(self.param_limit, self.tensor_limit, self.flop_limit),
            seed=self.random_state, train=TrainConfig(max_epochs=self.max_epochs, batch=self.batch_size),
            input_len=input_len, workers=self.workers,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float32)
        y_enc = self._encode(y)
        initial = None if self.initial_genome is None else _as_genome(self.initial_genome, len(self.classes_))
        self.best_genome_, self.search_log_ = run_search(self.search_config(X.shape[1]), X, y_enc, initial)
        self.n_features_in_ = X.shape[1]
        if self.refit:
            self.best_estimator_ = CNNClassifier(self.best_genome_, batch_size=self.batch_size,
                                                 max_epochs=self.refit_epochs, validation_fraction=self.holdout,
                                                 random_state=self.random_state).fit(X, y)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "best_estimator_")
        return self.best_estimator_.predict_proba(X)

    def predict(self, X):
        check_is_fitted(self, "best_estimator_")
        return self.best_estimator_.predict(X)


class QuantizedClassifier(ClassifierMixin, BaseEstimator):
    """INT8 post-training quantization of a fitted :class:`CNNClassifier`.

    ``fit`` draws a stratified calibration sample of ``n_calibration`` rows
    from ``X``; if ``estimator`` is not fitted yet it is fitted on ``X, y`` first.
    """

    def __init__(self, estimator=None, n_calibration: int = 512, random_state: int = 0):
        self.estimator = estimator
        self.n_calibration = n_calibration
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float32)
        est = self.estimator if self.estimator is not None else CNNClassifier(random_state=self.random_state)
        if not hasattr(est, "model_"):
            est = est.fit(X, y)
        self.estimator_ = est
        self.classes_ = est.classes_
        y_enc = np.searchsorted(self.classes_, y)
        idx = stratified_sample(y_enc, self.n_calibration, self.random_state)
        self.folded_ = fold_batchnorm(est.model_)
        self.calibration_ = calibrate(self.folded_, X[idx])
        self.qmodel_ = quantize_model(self.folded_, self.calibration_)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "qmodel_")
        return self.qmodel_.predict_proba(check_array(X, dtype=np.float32))

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[proba.argmax(axis=1)]
