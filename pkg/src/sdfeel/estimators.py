"""scikit-learn compatible wrapper: federated training of a softmax classifier."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import _rng
from .data import LabeledDataset, assign_clusters, dirichlet_partition
from .latency import LatencyConstants
from .learner import logits
from .protocol import AggregationSchedule, FederatedProblem, TrainingSettings, run_scheme
from .topology import complete, ring, ring_with_chords

__all__ = ["FederatedSoftmaxClassifier"]

_GRAPHS = {"ring": ring, "complete": complete}


class FederatedSoftmaxClassifier(ClassifierMixin, BaseEstimator):
    """Multinomial logistic regression trained by a federated scheme.

    ``fit`` splits the rows across ``n_clients`` clients with a Dirichlet label
    partition, groups them under ``n_servers`` edge servers connected by
    ``topology`` and runs ``scheme``. The fitted model is the data-weighted
    average of the client models after the last iteration.

    Parameters
    ----------
    scheme : {"sdfeel", "fedavg", "feel", "hierfavg"}
    n_clients, n_servers : int
    topology : {"ring", "complete", "chords"}
    tau1, tau2, alpha : int
        Aggregation schedule.
    eta : float
    batch_size : int
    iterations : int
        Must be a multiple of ``tau1 * tau2``.
    beta : float
        Participation probability per round.
    concentration : float
        Dirichlet concentration of the label split.
    random_state : int

    Attributes
    ----------
    classes_ : ndarray
    coef_ : ndarray, shape (n_classes, n_features)
    intercept_ : ndarray, shape (n_classes,)
    trace_ : list of TraceRecord
    """

    def __init__(self, scheme="sdfeel", n_clients=50, n_servers=10, topology="ring",
                 tau1=2, tau2=1, alpha=5, eta=0.01, batch_size=10, iterations=1000,
                 beta=1.0, concentration=0.5, random_state=0):
        self.scheme = scheme
        self.n_clients = n_clients
        self.n_servers = n_servers
        self.topology = topology
        self.tau1 = tau1
        self.tau2 = tau2
        self.alpha = alpha
        self.eta = eta
        self.batch_size = batch_size
        self.iterations = iterations
        self.beta = beta
        self.concentration = concentration
        self.random_state = random_state

    def _graph(self):
        if self.topology == "chords":
            return ring_with_chords(self.n_servers, 2, 0)
        try:
            return _GRAPHS[self.topology](self.n_servers)
        except KeyError:
            raise ValueError(f"unknown topology {self.topology!r}") from None

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        enc = LabelEncoder().fit(y)
        self.classes_ = enc.classes_
        if self.classes_.size < 2:
            raise ValueError("need at least two classes")
        codes = enc.transform(y)
        seed = int(self.random_state or 0)
        data = LabeledDataset(X, codes, int(self.classes_.size))
        plan = dirichlet_partition(codes, self.n_clients, self.concentration,
                                   _rng.stream_seed(seed, _rng.PARTITION))
        problem = FederatedProblem(data, plan, assign_clusters(self.n_clients, self.n_servers))
        settings = TrainingSettings(
            AggregationSchedule(self.tau1, self.tau2, self.alpha), eta=self.eta,
            batch_size=self.batch_size, iterations=self.iterations, beta=self.beta,
            seed=seed, latency=LatencyConstants())
        result = run_scheme(self.scheme, problem, self._graph(), settings)
        W = result.u_final.reshape(data.num_classes, data.dim + 1)
        self.coef_ = W[:, :-1].copy()
        self.intercept_ = W[:, -1].copy()
        self.trace_ = result.trace
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, ("coef_", "intercept_"))
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        w = np.hstack([self.coef_, self.intercept_[:, None]]).ravel()
        return logits(w, X, self.classes_.size)

    def predict_proba(self, X):
        z = self.decision_function(X)
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        z = self.decision_function(X)
        return self.classes_[np.argmax(z, axis=1)]
