"""Single-step neuron dynamics: ReLU units, adaptive LIF and Izhikevich.

Every step function is pure. State arrays may have any shape (a leading
population axis is common); updates are elementwise, so each neuron's
trajectory does not depend on what else shares the array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

# membrane values are clipped here before thresholding; mutated genomes can be extreme
V_CLAMP = 1e6


class NeuronModelKind(str, Enum):
    ARTIFICIAL = "Artificial"
    ALIF = "ALIF"
    IZHIKEVICH = "Izhikevich"

    @property
    def spiking(self) -> bool:
        return self is not NeuronModelKind.ARTIFICIAL


class NumericError(FloatingPointError):
    """Non-finite value entered a neuron update or network output."""


@dataclass(frozen=True)
class AlifParams:
    gamma: float = math.exp(-1 / 20)
    gamma_s: float = math.exp(-1 / 10)
    beta: float = 0.5
    v_th: float = 1.0

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0 < self.gamma_s < 1:
            raise ValueError(f"gamma_s must lie in (0, 1), got {self.gamma_s}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.v_th <= 0:
            raise ValueError(f"v_th must be > 0, got {self.v_th}")


@dataclass(frozen=True)
class IzhikevichParams:
    a: float = 0.02
    b: float = 0.25
    c: float = -58.0
    d: float = 0.0
    v_peak: float = 30.0
    current_scale: float = 20.0
    dt_scale: float = 0.2


ModelParams = AlifParams | IzhikevichParams | None


def default_params(kind: NeuronModelKind) -> ModelParams:
    match kind:
        case NeuronModelKind.ARTIFICIAL:
            return None
        case NeuronModelKind.ALIF:
            return AlifParams()
        case NeuronModelKind.IZHIKEVICH:
            return IzhikevichParams()
    raise ValueError(f"unknown neuron model {kind!r}")


@dataclass(frozen=True)
class NeuronState:
    """Runtime state for a group of neurons.

    ``u`` holds the Izhikevich recovery variable or the ALIF adaptation
    trace; it is all zeros for ReLU units. ``act`` is only used by ReLU
    units, ``s`` only by spiking ones.
    """

    v: np.ndarray
    u: np.ndarray
    s: np.ndarray
    act: np.ndarray

    @property
    def v_adp(self) -> np.ndarray:
        return self.u


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite value in neuron update")


def reset_state(kind: NeuronModelKind, n: int | tuple[int, ...], params: ModelParams = None) -> NeuronState:
    """Resting state for ``n`` neurons (``n`` may be a shape tuple)."""
    shape = (n,) if isinstance(n, int) else tuple(n)
    if shape[-1] < 1:
        raise ValueError("need at least one neuron")
    zeros = np.zeros(shape)
    s = np.zeros(shape, dtype=np.int8)
    match kind:
        case NeuronModelKind.ARTIFICIAL | NeuronModelKind.ALIF:
            return NeuronState(zeros, zeros.copy(), s, zeros.copy())
        case NeuronModelKind.IZHIKEVICH:
            p = params or IzhikevichParams()
            return NeuronState(np.full(shape, p.c), np.full(shape, p.b * p.c), s, zeros)
    raise ValueError(f"unknown neuron model {kind!r}")


def artificial_step(weighted_input: np.ndarray, check: bool = True) -> np.ndarray:
    x = np.asarray(weighted_input, dtype=float)
    if check:
        _check_finite(x)
    return np.maximum(x, 0.0)


def alif_step(
    state: NeuronState, params: AlifParams, weighted_input: np.ndarray, check: bool = True
) -> tuple[NeuronState, np.ndarray]:
    """Leak, integrate, fire against the adapted threshold, reset to zero."""
    if check:
        _check_finite(state.v, state.u, weighted_input)
    v = np.clip(params.gamma * state.v + weighted_input, -V_CLAMP, V_CLAMP)
    fired = v >= params.v_th + state.u
    s = fired.astype(np.int8)
    v = np.where(fired, 0.0, v)
    v_adp = params.gamma_s * state.u + params.beta * s
    return replace(state, v=v, u=v_adp, s=s), s


def izhikevich_step(
    state: NeuronState, params: IzhikevichParams, weighted_input: np.ndarray, check: bool = True
) -> tuple[NeuronState, np.ndarray]:
    """Advance the quadratic integrate-and-fire model by one 1 ms step.

    A neuron whose membrane potential is at or above ``v_peak`` on entry
    emits its spike this step and is reset (``v <- c``, ``u <- u + d``);
    all others integrate. Synaptic input is multiplied by
    ``current_scale`` and the intrinsic voltage increment by ``dt_scale``.
    """
    if check:
        _check_finite(state.v, state.u, weighted_input)
    v, u = state.v, state.u
    fired = v >= params.v_peak
    dv = params.dt_scale * (0.04 * v * v + 5.0 * v + 140.0 - u) + params.current_scale * weighted_input
    v_int = np.clip(v + dv, -V_CLAMP, V_CLAMP)
    u_int = np.clip(u + params.a * (params.b * v - u), -V_CLAMP, V_CLAMP)
    v_new = np.where(fired, params.c, v_int)
    u_new = np.where(fired, u + params.d, u_int)
    s = fired.astype(np.int8)
    return replace(state, v=v_new, u=u_new, s=s), s


def step(
    kind: NeuronModelKind,
    state: NeuronState,
    params: ModelParams,
    weighted_input: np.ndarray,
    check: bool = True,
) -> NeuronState:
    """Dispatch one update; the returned state carries spikes/activations."""
    match kind:
        case NeuronModelKind.ARTIFICIAL:
            return replace(state, act=artificial_step(weighted_input, check))
        case NeuronModelKind.ALIF:
            return alif_step(state, params, weighted_input, check)[0]
        case NeuronModelKind.IZHIKEVICH:
            return izhikevich_step(state, params, weighted_input, check)[0]
    raise ValueError(f"unknown neuron model {kind!r}")
