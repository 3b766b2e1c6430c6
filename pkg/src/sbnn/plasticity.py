"""Per-connection ABCD Hebbian updates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import Network

DEFAULT_ETA = 0.01


class PlasticityDisabledError(RuntimeError):
    pass


@dataclass
class HebbianConfig:
    eta: float = DEFAULT_ETA
    enabled: bool = True

    def __post_init__(self) -> None:
        if not math.isfinite(self.eta):
            raise ValueError(f"eta must be finite, got {self.eta}")

    def freeze(self) -> None:
        """Switch plasticity off for good (called when pruning fires)."""
        self.enabled = False


def hebbian_delta(abcd: np.ndarray, pre: np.ndarray, post: np.ndarray, eta: float) -> np.ndarray:
    a, b, c, d = abcd[:, 0], abcd[:, 1], abcd[:, 2], abcd[:, 3]
    return eta * (a * pre + b * post + c * pre * post + d)


def hebbian_step(net: Network, activations: np.ndarray, config: HebbianConfig) -> Network:
    """Apply ``w += eta*(A*a_pre + B*a_post + C*a_pre*a_post + D)`` to every
    active connection, in place, reading one activation snapshot.

    Returns ``net`` for chaining.
    """
    if not config.enabled:
        raise PlasticityDisabledError("hebbian_step called with plasticity disabled")
    act = np.asarray(activations, dtype=float)
    mask = net.active
    pre = act[net.src[mask]]
    post = act[net.dst[mask]]
    net.weights[mask] = net.weights[mask] + hebbian_delta(net.abcd[mask], pre, post, config.eta)
    return net
