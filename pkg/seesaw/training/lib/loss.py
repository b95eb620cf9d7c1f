import numpy as np

from seesaw.nn.lib import ShapeError


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch, and its gradient w.r.t. `logits`."""
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(
            f"Expected (n, classes) logits and (n,) labels, "
            f"got {logits.shape} and {labels.shape}."
        )
    n = logits.shape[0]
    shifted = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = -float(log_probs[np.arange(n), labels].mean())
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return loss, (grad / n).astype(logits.dtype)


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Top-1 accuracy; ties go to the lowest class index."""
    return float((logits.argmax(axis=1) == labels).mean())
