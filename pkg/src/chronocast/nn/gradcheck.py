import numpy as np

from .losses import mse_loss
from .model import Sequential


def gradient_check(
    model: Sequential,
    x: np.ndarray,
    y: np.ndarray,
    epsilon: float = 1e-5,
    train: bool = True,
    mask_seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Dropout masks are frozen by reseeding the mask generator before every
    forward pass. Relative error is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """

    def loss_at() -> float:
        pred = model.forward(x, train=train, rng=np.random.default_rng(mask_seed))
        return mse_loss(pred, y)[0]

    model.zero_grad()
    pred = model.forward(x, train=train, rng=np.random.default_rng(mask_seed))
    _, grad = mse_loss(pred, y)
    model.backward(grad)
    analytic = np.concatenate([g.ravel() for g in model.gradients()]).copy()

    worst = 0.0
    k = 0
    for p in model.parameters():
        flat = p.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + epsilon
            up = loss_at()
            flat[i] = old - epsilon
            down = loss_at()
            flat[i] = old
            numeric = (up - down) / (2.0 * epsilon)
            a = analytic[k]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
            k += 1
    return worst
