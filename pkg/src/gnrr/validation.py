"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

from .pipeline import QueryInstance


def ensure_instances(X, name: str = "X") -> list[QueryInstance]:
    """Check that X is a non-empty, dimensionally consistent instance list."""
    if X is None:
        raise ValueError(f"{name} must be a list of query instances, got None")
    instances = list(X)
    if not instances:
        raise ValueError(f"{name} is empty")
    for i, instance in enumerate(instances):
        if not isinstance(instance, QueryInstance):
            raise TypeError(
                f"{name}[{i}] is {type(instance).__name__}, expected QueryInstance"
            )
    widths = {instance.x.shape[1] for instance in instances}
    if len(widths) != 1:
        raise ValueError(f"{name} mixes feature widths {sorted(widths)}")
    for instance in instances:
        if instance.x_aug.shape[1] != instance.x.shape[1] + 1:
            raise ValueError(
                f"query {instance.query_id!r}: augmented width "
                f"{instance.x_aug.shape[1]} != feature width + 1"
            )
        if not np.all(np.isfinite(instance.x_aug)):
            raise ValueError(f"query {instance.query_id!r}: non-finite features")
        if len(instance.grades) != instance.sub.n_nodes:
            raise ValueError(
                f"query {instance.query_id!r}: {len(instance.grades)} grades for "
                f"{instance.sub.n_nodes} candidates"
            )
    return instances


def feature_width(instances: list[QueryInstance]) -> int:
    return instances[0].x.shape[1]


def ensure_fitted(estimator, attribute: str = "model_") -> None:
    if not hasattr(estimator, attribute):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )
