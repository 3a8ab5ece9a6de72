"""SGD-with-momentum and Adam, as pure functions of (params, grads, state)."""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd-momentum", "adam"):
            raise ConfigError(f"unknown optimizer kind '{self.kind}'")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        b1, b2 = self.betas
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise ConfigError(f"betas must be in [0, 1), got {self.betas}")


@dataclass
class OptimizerState:
    step_count: int
    slots: list


def init_state(params, config):
    if config.kind == "sgd-momentum":
        slots = [np.zeros_like(p) for p in params]
    else:
        slots = [(np.zeros_like(p), np.zeros_like(p)) for p in params]
    return OptimizerState(step_count=0, slots=slots)


def optimizer_step(params, grads, state, config):
    """One update; returns (new_params, new_state) without mutating inputs."""
    if len(params) != len(grads) or len(params) != len(state.slots):
        raise DimensionError(
            f"parameter/gradient/state counts differ: {len(params)}, {len(grads)}, {len(state.slots)}"
        )
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionError("gradient shape mismatch", p.shape, g.shape)
    t = state.step_count + 1
    new_params = []
    new_slots = []
    if config.kind == "sgd-momentum":
        for p, g, v in zip(params, grads, state.slots):
            v_new = config.momentum * v + g
            new_params.append(p - config.lr * v_new)
            new_slots.append(v_new)
    else:
        b1, b2 = config.betas
        for p, g, (m, v) in zip(params, grads, state.slots):
            m_new = b1 * m + (1.0 - b1) * g
            v_new = b2 * v + (1.0 - b2) * g * g
            m_hat = m_new / (1.0 - b1**t)
            v_hat = v_new / (1.0 - b2**t)
            new_params.append(p - config.lr * m_hat / (np.sqrt(v_hat) + config.eps))
            new_slots.append((m_new, v_new))
    return new_params, OptimizerState(step_count=t, slots=new_slots)
