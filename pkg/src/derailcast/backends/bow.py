"""Bag-of-words logistic regression, the desk-scale derailment classifier."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from derailcast.backends.base import ClassifierBackend, TrainingReport, tokenize
from derailcast.errors import ContextOverflowError, NotTrainedError, TrainingError

CLAMP = 1e-12


def binary_cross_entropy(probs, labels, reduction: str = "mean"):
    """-[y log p + (1 - y) log(1 - p)] with p clamped to [1e-12, 1 - 1e-12]."""
    p = np.clip(np.asarray(probs, dtype=float), CLAMP, 1 - CLAMP)
    y = np.asarray(labels, dtype=float)
    losses = -(y * np.log(p) + (1 - y) * np.log1p(-p))
    if reduction == "none":
        return losses
    if reduction == "sum":
        return float(losses.sum())
    if reduction == "mean":
        return float(losses.mean())
    raise ValueError(f"unknown reduction {reduction!r}")


@dataclass(frozen=True)
class BowConfig:
    l2: float = 1e-3
    max_iter: int = 500
    tol: float = 1e-9
    lowercase: bool = True
    max_tokens: int | None = None


class BagOfWordsClassifier(ClassifierBackend):
    """Binary-presence features, L-BFGS on mean BCE plus a small L2 term.

    Training minimizes the *mean* loss, so duplicating every example leaves
    the optimum (and the deterministic optimizer's path) unchanged.
    """

    def __init__(self, config: BowConfig | None = None):
        self.config = config or BowConfig()
        self.max_tokens = self.config.max_tokens
        self.vocab: dict[str, int] = {}
        self.weights: np.ndarray | None = None
        self.bias: float = 0.0

    @property
    def is_trained(self) -> bool:
        return self.weights is not None

    def _tokens(self, text: str) -> list[str]:
        toks = tokenize(text)
        return [t.lower() for t in toks] if self.config.lowercase else toks

    def _featurize(self, texts: Sequence[str]) -> np.ndarray:
        X = np.zeros((len(texts), len(self.vocab)))
        for row, text in enumerate(texts):
            for tok in set(self._tokens(text)):
                col = self.vocab.get(tok)
                if col is not None:
                    X[row, col] = 1.0
        return X

    def fit(self, texts: Sequence[str], labels: Sequence[bool]) -> TrainingReport:
        y = np.asarray([1.0 if lab else 0.0 for lab in labels])
        if len(texts) != len(y):
            raise TrainingError("texts and labels differ in length")
        if len(y) == 0 or y.min() == y.max():
            raise TrainingError("training data must contain both classes")
        vocab = sorted({tok for text in texts for tok in self._tokens(text)})
        self.vocab = {tok: i for i, tok in enumerate(vocab)}
        X = self._featurize(texts)
        n, d = X.shape
        l2 = self.config.l2
        curve: list[float] = []

        def objective(theta):
            w, b = theta[:d], theta[d]
            p = np.clip(expit(X @ w + b), CLAMP, 1 - CLAMP)
            loss = binary_cross_entropy(p, y) + 0.5 * l2 * float(w @ w)
            resid = (p - y) / n
            grad = np.concatenate([X.T @ resid + l2 * w, [resid.sum()]])
            return loss, grad

        result = minimize(
            objective,
            np.zeros(d + 1),
            jac=True,
            method="L-BFGS-B",
            callback=lambda theta: curve.append(objective(theta)[0]),
            options={"maxiter": self.config.max_iter, "ftol": self.config.tol, "gtol": 1e-8},
        )
        self.weights = result.x[:d]
        self.bias = float(result.x[d])
        probs = expit(X @ self.weights + self.bias)
        return TrainingReport(
            n_examples=n,
            final_loss=binary_cross_entropy(probs, y),
            train_accuracy=float(((probs >= 0.5) == (y == 1)).mean()),
            loss_curve=curve,
            converged=bool(result.success),
        )

    def predict_proba(self, text: str) -> float:
        if not self.is_trained:
            raise NotTrainedError("classifier has not been trained")
        if self.max_tokens is not None:
            length = len(tokenize(text))
            if length > self.max_tokens:
                raise ContextOverflowError(length, self.max_tokens)
        x = self._featurize([text])[0]
        return float(expit(x @ self.weights + self.bias))

    def to_dict(self) -> dict:
        if not self.is_trained:
            raise NotTrainedError("cannot save an untrained classifier")
        vocab = sorted(self.vocab, key=self.vocab.get)
        return {
            "kind": "bow",
            "config": {
                "l2": self.config.l2,
                "max_iter": self.config.max_iter,
                "tol": self.config.tol,
                "lowercase": self.config.lowercase,
                "max_tokens": self.config.max_tokens,
            },
            "vocab": vocab,
            "weights": [float(w) for w in self.weights],
            "bias": self.bias,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BagOfWordsClassifier":
        model = cls(BowConfig(**data["config"]))
        model.vocab = {tok: i for i, tok in enumerate(data["vocab"])}
        model.weights = np.asarray(data["weights"], dtype=float)
        model.bias = float(data["bias"])
        return model
