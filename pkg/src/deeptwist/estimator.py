"""scikit-learn estimator wrapping DeepTwist training of a ReLU MLP."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .distortion import DeepTwistConfig, make_hook, probe_batch, verify_compressed_form
from .nn import Dataset, MlpModel, make_optimizer, train
from .nn.model import log_softmax, predict_logits


class DeepTwistMLPClassifier(ClassifierMixin, BaseEstimator):
    """Multilayer perceptron trained with occasional weight distortion.

    ``compression`` is a list of assignments (``PruneAssignment``,
    ``QuantizeAssignment``, ``LowRankAssignment``) naming layers ``fc1``,
    ``fc2``, ... in input-to-output order. With ``compression=None`` this
    is a plain MLP trained by minibatch Adam or SGD.

    After :meth:`fit`, ``model_`` holds the trained network, ``events_``
    the distortion events and ``log_`` the periodic training log.
    """

    def __init__(
        self,
        hidden_layer_sizes=(300, 100),
        compression=None,
        distortion_step=5,
        global_prune=True,
        steps=2000,
        batch_size=50,
        optimizer="adam",
        learning_rate=5e-4,
        eval_every=500,
        random_state=0,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.compression = compression
        self.distortion_step = distortion_step
        self.global_prune = global_prune
        self.steps = steps
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.eval_every = eval_every
        self.random_state = random_state

    def _config(self):
        return DeepTwistConfig(self.distortion_step, list(self.compression or []), self.global_prune)

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        check_classification_targets(y)
        self._encoder = LabelEncoder().fit(y)
        self.classes_ = self._encoder.classes_
        codes = self._encoder.transform(y)
        sizes = (X.shape[1], *self.hidden_layer_sizes, max(len(self.classes_), 2))
        seed = 0 if self.random_state is None else int(self.random_state)

        model = MlpModel.initialize(sizes, seed=seed)
        data = Dataset(np.ascontiguousarray(X), codes)
        config = self._config()
        hook = None
        if config.assignments:
            hook = make_hook(config, model, probe_batch(data, seed))
        opt = make_optimizer(model, self.optimizer, self.learning_rate)
        result = train(model, data, opt, self.steps, self.batch_size, seed=seed, hook=hook,
                       eval_every=self.eval_every)
        self.model_ = model
        self.events_ = hook.events if hook is not None else []
        self.log_ = result.log
        return self

    def _logits(self, X):
        # a single-class target still trains a two-unit output; the spare unit is dropped
        return predict_logits(self.model_, X)[:, : len(self.classes_)]

    def predict_log_proba(self, X):
        check_is_fitted(self, "model_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return log_softmax(self._logits(X))

    def predict_proba(self, X):
        return np.exp(self.predict_log_proba(X))

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return self.classes_[np.argmax(self._logits(X), axis=1)]

    def verify(self):
        """Compressed-form report for the fitted network (see ``verify_compressed_form``)."""
        check_is_fitted(self, "model_")
        return verify_compressed_form(self.model_, self._config())
