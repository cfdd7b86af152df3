"""Estimator-style front door for the re-ranking model.

Wraps model construction, training, and scoring behind the familiar
fit/predict/score surface. Instances are the QueryInstance bundles from
`pipeline`; judged grades travel inside them, so `y` in fit is unused and
present only for interface compatibility.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .gnn import ModelConfig, RerankModel, rerank_order
from .metrics import ndcg_from_grades
from .training import TrainConfig, train, validation_ndcg
from .validation import ensure_fitted, ensure_instances, feature_width


class GraphNeuralReranker(BaseEstimator):
    """Two-branch candidate re-ranker trained with pairwise gradients.

    Parameters mirror the command-line training surface: the layer kind and
    depth of the graph branch, the individual branch mode, and the training
    schedule. All randomness is governed by `seed`.
    """

    def __init__(
        self,
        layer: str = "gcn",
        layers: int = 2,
        hidden_dim: int = 32,
        individual: str = "identity",
        scorer_hidden: int = 32,
        learning_rate: float = 1e-3,
        epochs: int = 30,
        patience: int = 5,
        sigma: float = 1.0,
        seed: int = 0,
        neg_samples: int = 8,
        ndcg_k: int = 10,
        holdout_fraction: float = 0.2,
    ):
        self.layer = layer
        self.layers = layers
        self.hidden_dim = hidden_dim
        self.individual = individual
        self.scorer_hidden = scorer_hidden
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.patience = patience
        self.sigma = sigma
        self.seed = seed
        self.neg_samples = neg_samples
        self.ndcg_k = ndcg_k
        self.holdout_fraction = holdout_fraction

    def _build_model(self, m: int) -> RerankModel:
        config = ModelConfig(
            kind=self.layer,
            feature_dim=m,
            layers=self.layers,
            hidden_dim=self.hidden_dim,
            individual=self.individual,
            scorer_hidden=self.scorer_hidden,
            seed=self.seed,
            neg_samples=self.neg_samples,
        )
        return RerankModel(config)

    def fit(self, X, y=None, validation=None):
        """Train on query instances; `validation` drives early stopping.

        Without an explicit validation list, the trailing holdout_fraction
        of X is held out (deterministically, in given order).
        """
        instances = ensure_instances(X)
        if validation is not None:
            val_instances = ensure_instances(validation, name="validation")
            train_instances = instances
        else:
            n_val = max(1, int(round(len(instances) * self.holdout_fraction)))
            if n_val >= len(instances):
                raise ValueError(
                    f"cannot hold out {n_val} of {len(instances)} instances for validation"
                )
            train_instances = instances[:-n_val]
            val_instances = instances[-n_val:]
        model = self._build_model(feature_width(instances))
        config = TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            patience=self.patience,
            seed=self.seed,
            sigma=self.sigma,
            ndcg_k=self.ndcg_k,
        )
        self.model_, self.report_ = train(model, train_instances, val_instances, config)
        return self

    def predict(self, X) -> list[np.ndarray]:
        """Relevance scores per instance, aligned with its candidate order."""
        ensure_fitted(self)
        instances = ensure_instances(X)
        return [
            self.model_.score(instance.x, instance.x_aug, instance.ctx).scores
            for instance in instances
        ]

    def rerank(self, X) -> list[list[str]]:
        """Candidate doc_ids per instance, best first."""
        ensure_fitted(self)
        instances = ensure_instances(X)
        orderings = []
        for instance, scores in zip(instances, self.predict(instances)):
            order = rerank_order(scores, instance.doc_ids)
            orderings.append([instance.doc_ids[i] for i in order])
        return orderings

    def score(self, X, y=None) -> float:
        """Mean nDCG@k over instances with judged gains (higher is better)."""
        ensure_fitted(self)
        instances = ensure_instances(X)
        return validation_ndcg(self.model_, instances, self.ndcg_k)

    def score_per_query(self, X) -> dict[str, float]:
        ensure_fitted(self)
        instances = ensure_instances(X)
        result = {}
        for instance in instances:
            if not any(grade > 0 for grade in instance.ideal_grades):
                continue
            scores = self.model_.score(instance.x, instance.x_aug, instance.ctx).scores
            order = rerank_order(scores, instance.doc_ids)
            predicted = [int(instance.grades[i]) for i in order]
            result[instance.query_id] = ndcg_from_grades(
                predicted, instance.ideal_grades, self.ndcg_k
            )
        return result
