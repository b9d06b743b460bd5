from typing import NamedTuple, Tuple

import numpy as np


class AdamState(NamedTuple):
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n_features: int) -> "AdamState":
        return cls(m=np.zeros(n_features), v=np.zeros(n_features), t=0)


def adam_step(
    state: AdamState,
    gradient: np.ndarray,
    alpha: float,
    b1: float = 0.9,
    b2: float = 0.999,
    eps: float = 1e-8
) -> Tuple[AdamState, np.ndarray]:
    """
    One bias-corrected Adam update.

    Returns the new state and the parameter delta -alpha * m_hat / (sqrt(v_hat) + eps);
    the caller adds the delta to its parameters.
    """
    t = state.t + 1
    m = b1 * state.m + (1.0 - b1) * gradient
    v = b2 * state.v + (1.0 - b2) * gradient * gradient
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    delta = -alpha * m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(m=m, v=v, t=t), delta
