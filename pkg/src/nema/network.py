"""Compile connectomes and MLP baselines into evolvable recurrent policies.

A policy is a :class:`NetworkSpec` (fixed topology, shared read-only) plus a
:class:`Genome` (everything evolution may touch). Connectome-derived
networks keep Dale's law by storing log-magnitudes next to immutable signs.

Two execution modes exist. :class:`PolicyBatch` in *population* mode gives
each row its own genome (one swimmer per genome); in *shared* mode all rows
use one genome (many MNIST images through one network). In both modes a
row's result depends only on that row's inputs, never on the batch size.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .connectome import Connectome, ConnectomeStats, NeuronClass
from .neurons import (
    ModelParams,
    NeuronModelKind,
    NeuronState,
    NumericError,
    default_params,
    reset_state,
    step as neuron_step,
)

NetworkState = NeuronState

# log-weights are clipped before exponentiation so exp() stays finite and nonzero
W_LOG_CAP = 80.0
W_LOG_FLOOR = -700.0
ENC_DEC_INIT = 0.3

# (excitatory, inhibitory) initial log-magnitudes per neuron model
DEFAULT_LOG_INIT: dict[NeuronModelKind, tuple[float, float]] = {
    NeuronModelKind.ARTIFICIAL: (-2.5, -3.0),
    NeuronModelKind.ALIF: (-1.0, -1.5),
    NeuronModelKind.IZHIKEVICH: (2.0, 1.0),
}


class Provenance(str, Enum):
    EXACT = "ExactConnectome"
    STAT_MATCHED = "StatMatched"
    FULLY_CONNECTED = "FullyConnected"
    RANDOM_SPARSE = "RandomSparse"


class DecodeWindow(str, Enum):
    SPIKE_COUNT = "SpikeCount"
    LAST_ACTIVATION = "LastActivation"


class BuildError(ValueError):
    pass


class ContractError(ValueError):
    """Input dimensions disagree with the network's IoSpec."""


@dataclass(frozen=True)
class IoSpec:
    obs_dim: int
    action_dim: int
    input_ids: tuple[int, ...]
    output_ids: tuple[int, ...]
    substeps: int = 10
    decode: DecodeWindow | None = None  # None: chosen from the neuron model

    def __post_init__(self):
        object.__setattr__(self, "input_ids", tuple(int(i) for i in self.input_ids))
        object.__setattr__(self, "output_ids", tuple(int(i) for i in self.output_ids))
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    def window(self, kind: NeuronModelKind) -> DecodeWindow:
        if self.decode is not None:
            return self.decode
        return DecodeWindow.SPIKE_COUNT if kind.spiking else DecodeWindow.LAST_ACTIVATION


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    pre: np.ndarray
    post: np.ndarray
    signs: np.ndarray  # +1/-1; all +1 (unused) for plain-weight MLPs
    counts: np.ndarray
    neuron_count: int
    io: IoSpec
    provenance: Provenance
    layers: tuple[int, int] | None = None

    @property
    def n_synapses(self) -> int:
        return len(self.pre)

    @property
    def dale(self) -> bool:
        return self.provenance is not Provenance.FULLY_CONNECTED

    def adjacency(self) -> list[tuple[int, int, int, int]]:
        return list(zip(self.pre.tolist(), self.post.tolist(), self.signs.tolist(), self.counts.tolist()))


def effective_weight(sign, w_log):
    """``sign * exp(w_log)``: nonzero with the sign of ``sign``."""
    return sign * np.exp(np.clip(w_log, W_LOG_FLOOR, W_LOG_CAP))


@dataclass(frozen=True, eq=False)
class Genome:
    """Evolvable parameters of one policy.

    ``w_log`` holds per-synapse log-magnitudes when ``signs`` is set (Dale
    networks) and plain signed weights when ``signs`` is None (dense MLP).
    """

    w_log: np.ndarray
    signs: np.ndarray | None
    enc_w: np.ndarray
    enc_b: np.ndarray
    dec_w: np.ndarray
    dec_b: np.ndarray
    model_kind: NeuronModelKind = NeuronModelKind.ARTIFICIAL
    model_params: ModelParams = None

    @property
    def size(self) -> int:
        return self.w_log.size + self.enc_w.size + self.enc_b.size + self.dec_w.size + self.dec_b.size

    @property
    def n_connectome(self) -> int:
        return self.w_log.size

    def weights(self) -> np.ndarray:
        if self.signs is None:
            return self.w_log
        return effective_weight(self.signs, self.w_log)

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [self.w_log.ravel(), self.enc_w.ravel(), self.enc_b, self.dec_w.ravel(), self.dec_b]
        )

    def unflatten(self, vec: np.ndarray) -> Genome:
        """Genome with this one's layout, signs and model but values from ``vec``."""
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.size,):
            raise ContractError(f"expected flat vector of length {self.size}, got {vec.shape}")
        parts = []
        i = 0
        for a in (self.w_log, self.enc_w, self.enc_b, self.dec_w, self.dec_b):
            parts.append(vec[i : i + a.size].reshape(a.shape).copy())
            i += a.size
        return replace(self, w_log=parts[0], enc_w=parts[1], enc_b=parts[2], dec_w=parts[3], dec_b=parts[4])

    def group_slices(self) -> dict[str, slice]:
        """Flat-vector index ranges of the two mutation groups."""
        n = self.n_connectome
        return {"connectome": slice(0, n), "enc_dec": slice(n, self.size)}

    def equals(self, other: Genome) -> bool:
        same_signs = (self.signs is None and other.signs is None) or (
            self.signs is not None and other.signs is not None and np.array_equal(self.signs, other.signs)
        )
        return (
            same_signs
            and self.model_kind is other.model_kind
            and self.model_params == other.model_params
            and all(
                a.shape == b.shape and np.array_equal(a, b)
                for a, b in zip(
                    (self.w_log, self.enc_w, self.enc_b, self.dec_w, self.dec_b),
                    (other.w_log, other.enc_w, other.enc_b, other.dec_w, other.dec_b),
                )
            )
        )


def bare_genome(dim: int) -> Genome:
    """A genome that is just ``dim`` free reals (for analytic test objectives)."""
    e = np.zeros(0)
    return Genome(np.zeros(dim), None, np.zeros((0, 0)), e, np.zeros((0, 0)), e.copy())


def dale_violations(spec: NetworkSpec, genome: Genome) -> int:
    """Number of synapses whose effective weight sign differs from the stored sign."""
    if genome.signs is None:
        return 0
    w = genome.weights()
    bad = (np.sign(w) != genome.signs) | (np.sign(w) != spec.signs) | (w == 0)
    return int(np.count_nonzero(bad))


# -- builders ---------------------------------------------------------------


def _enc_dec(io: IoSpec, rng: np.random.Generator):
    enc_w = rng.uniform(-ENC_DEC_INIT, ENC_DEC_INIT, size=(io.obs_dim, len(io.input_ids)))
    dec_w = rng.uniform(-ENC_DEC_INIT, ENC_DEC_INIT, size=(len(io.output_ids), io.action_dim))
    return enc_w, np.zeros(len(io.input_ids)), dec_w, np.zeros(io.action_dim)


def _check_io(io: IoSpec, n: int) -> None:
    if not io.input_ids or not io.output_ids:
        raise BuildError("input and output neuron lists must be non-empty")
    bad = [i for i in io.input_ids + io.output_ids if not 0 <= i < n]
    if bad:
        raise BuildError(f"io references missing neurons {sorted(set(bad))} (network has {n})")


def _log_init(kind, init):
    return DEFAULT_LOG_INIT[kind] if init is None else init


def locomotion_io(c: Connectome, obs_dim: int, action_dim: int, substeps: int = 10) -> IoSpec:
    """Encoder drives motor neurons; decoder reads body-wall muscles."""
    return IoSpec(obs_dim, action_dim, tuple(c.ids(NeuronClass.MOTOR)), tuple(c.ids(NeuronClass.MUSCLE)), substeps)


def build_exact(
    c: Connectome,
    kind: NeuronModelKind,
    io: IoSpec,
    init: tuple[float, float] | None = None,
    seed: int = 0,
    params: ModelParams = None,
) -> tuple[NetworkSpec, Genome]:
    """Mirror ``c`` synapse-for-synapse; log-weights start at ``init`` per polarity."""
    _check_io(io, c.n_neurons)
    w_exc, w_inh = _log_init(kind, init)
    signs = np.array([s.sign for s in c.synapses], dtype=np.int8)
    spec = NetworkSpec(
        pre=np.array([s.pre for s in c.synapses], dtype=np.int64),
        post=np.array([s.post for s in c.synapses], dtype=np.int64),
        signs=signs,
        counts=np.array([s.count for s in c.synapses], dtype=np.int64),
        neuron_count=c.n_neurons,
        io=io,
        provenance=Provenance.EXACT,
    )
    w_log = np.where(signs > 0, w_exc, w_inh).astype(float)
    rng = np.random.default_rng(seed)
    genome = Genome(w_log, signs.copy(), *_enc_dec(io, rng), kind, params if params is not None else default_params(kind))
    return spec, genome


def build_stat_matched(
    st: ConnectomeStats,
    io: IoSpec,
    seed: int,
    kind: NeuronModelKind = NeuronModelKind.ARTIFICIAL,
    init: tuple[float, float] | None = None,
    params: ModelParams = None,
) -> tuple[NetworkSpec, Genome]:
    """Random Dale network with the neuron count and E/I synapse counts of ``st``.

    Neurons are split into excitatory and inhibitory pools in proportion to
    the excitatory synapse fraction; exactly ``excitatory_count`` distinct
    (pre, post) pairs are drawn with an excitatory pre neuron and
    ``inhibitory_count`` with an inhibitory one.
    """
    n, s = st.neuron_count, st.synapse_count
    e, i = st.excitatory_count, st.inhibitory_count
    if n < 2 or s > n * (n - 1):
        raise BuildError(f"cannot place {s} synapses on {n} neurons without duplicates")
    _check_io(io, n)
    rng = np.random.default_rng(seed)
    n_exc = round(n * e / s) if s else n
    if e > 0:
        n_exc = max(n_exc, -(-e // (n - 1)))
    if i > 0:
        n_exc = min(n_exc, n - (-(-i // (n - 1))))
    if (e > 0 and n_exc < 1) or (i > 0 and n_exc > n - 1):
        raise BuildError("infeasible excitatory/inhibitory split")
    perm = rng.permutation(n)
    exc_ids, inh_ids = np.sort(perm[:n_exc]), np.sort(perm[n_exc:])

    def sample(pres: np.ndarray, k: int) -> np.ndarray:
        # flat index over (pre in pres) x (post != pre)
        if k == 0:
            return np.zeros((0, 2), dtype=np.int64)
        flat = rng.choice(len(pres) * (n - 1), size=k, replace=False)
        flat.sort()
        pre = pres[flat // (n - 1)]
        post = flat % (n - 1)
        post = post + (post >= pre)
        return np.stack([pre, post], axis=1)

    pairs = np.concatenate([sample(exc_ids, e), sample(inh_ids, i)])
    signs = np.concatenate([np.ones(e, dtype=np.int8), -np.ones(i, dtype=np.int8)])
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    pairs, signs = pairs[order], signs[order]
    spec = NetworkSpec(
        pre=pairs[:, 0].copy(),
        post=pairs[:, 1].copy(),
        signs=signs,
        counts=np.ones(s, dtype=np.int64),
        neuron_count=n,
        io=io,
        provenance=Provenance.STAT_MATCHED,
    )
    w_exc, w_inh = _log_init(kind, init)
    w_log = np.where(signs > 0, w_exc, w_inh).astype(float)
    genome = Genome(w_log, signs.copy(), *_enc_dec(io, rng), kind, params if params is not None else default_params(kind))
    return spec, genome


def hidden_sizes(neuron_count: int) -> tuple[int, int]:
    return (neuron_count + 1) // 2, neuron_count // 2


def _mlp_io(io: IoSpec, h1: int, h2: int) -> IoSpec:
    return replace(io, input_ids=tuple(range(h1)), output_ids=tuple(range(h1, h1 + h2)))


def build_fully_connected(
    neuron_count: int,
    io: IoSpec,
    seed: int,
    kind: NeuronModelKind = NeuronModelKind.ARTIFICIAL,
    params: ModelParams = None,
) -> tuple[NetworkSpec, Genome]:
    """Two-hidden-layer MLP (obs -> h1 -> h2 -> action) with plain weights.

    The caller's input/output id lists are replaced by the two layers.
    """
    if neuron_count < 2:
        raise BuildError("a two-layer MLP needs at least 2 neurons")
    h1, h2 = hidden_sizes(neuron_count)
    io = _mlp_io(io, h1, h2)
    pre, post = np.meshgrid(np.arange(h1), np.arange(h1, h1 + h2), indexing="ij")
    s = h1 * h2
    spec = NetworkSpec(
        pre=pre.ravel(),
        post=post.ravel(),
        signs=np.ones(s, dtype=np.int8),
        counts=np.ones(s, dtype=np.int64),
        neuron_count=neuron_count,
        io=io,
        provenance=Provenance.FULLY_CONNECTED,
        layers=(h1, h2),
    )
    rng = np.random.default_rng(seed)
    enc = _enc_dec(io, rng)
    w = rng.uniform(-ENC_DEC_INIT, ENC_DEC_INIT, size=s)
    genome = Genome(w, None, *enc, kind, params if params is not None else default_params(kind))
    return spec, genome


def build_random_sparse(
    neuron_count: int,
    io: IoSpec,
    seed: int,
    kind: NeuronModelKind = NeuronModelKind.ARTIFICIAL,
    init: tuple[float, float] | None = None,
    params: ModelParams = None,
    density: float | None = None,
    exc_fraction: float | None = None,
) -> tuple[NetworkSpec, Genome]:
    """Two-hidden-layer MLP whose h1->h2 block is masked and sign-constrained.

    Density and the excitatory fraction of h1 neurons are drawn from U(0, 1)
    once per build unless given. Kept entries are listed in the same
    (pre, post) order as :func:`build_fully_connected`.
    """
    if neuron_count < 2:
        raise BuildError("a two-layer MLP needs at least 2 neurons")
    h1, h2 = hidden_sizes(neuron_count)
    io = _mlp_io(io, h1, h2)
    rng = np.random.default_rng(seed)
    p = rng.uniform() if density is None else float(density)
    r = rng.uniform() if exc_fraction is None else float(exc_fraction)
    total = h1 * h2
    k = min(total, max(0, round(p * total)))
    keep = np.sort(rng.choice(total, size=k, replace=False))
    polarity = np.full(h1, -1, dtype=np.int8)
    polarity[rng.permutation(h1)[: round(r * h1)]] = 1
    pre = keep // h2
    post = h1 + keep % h2
    signs = polarity[pre]
    spec = NetworkSpec(
        pre=pre.astype(np.int64),
        post=post.astype(np.int64),
        signs=signs,
        counts=np.ones(k, dtype=np.int64),
        neuron_count=neuron_count,
        io=io,
        provenance=Provenance.RANDOM_SPARSE,
        layers=(h1, h2),
    )
    w_exc, w_inh = _log_init(kind, init)
    w_log = np.where(signs > 0, w_exc, w_inh).astype(float)
    genome = Genome(w_log, signs.copy(), *_enc_dec(io, rng), kind, params if params is not None else default_params(kind))
    return spec, genome


def realized_density(spec: NetworkSpec) -> float:
    h1, h2 = spec.layers
    return spec.n_synapses / (h1 * h2)


# -- execution ------------------------------------------------------------------


@dataclass
class PolicyBatch:
    """Vectorized rollout of one or many genomes over a shared topology.

    Population mode (``shared=False``): row r runs ``genomes[r]``.
    Shared mode: exactly one genome, any number of rows.
    """

    spec: NetworkSpec
    genomes: Sequence[Genome]
    shared: bool = False
    _scatter: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        g0 = self.genomes[0]
        if self.shared and len(self.genomes) != 1:
            raise ContractError("shared mode takes exactly one genome")
        for g in self.genomes:
            if g.model_kind is not g0.model_kind or g.model_params != g0.model_params:
                raise ContractError("all genomes in a batch must share the neuron model")
            if g.w_log.shape != (self.spec.n_synapses,):
                raise ContractError("genome does not match the network topology")
        self.kind = g0.model_kind
        self.params = g0.model_params
        io = self.spec.io
        self.inputs = np.asarray(io.input_ids, dtype=np.int64)
        self.outputs = np.asarray(io.output_ids, dtype=np.int64)
        self.window = io.window(self.kind)
        n, s = self.spec.neuron_count, self.spec.n_synapses
        counts = self.spec.counts.astype(float)
        if self.shared:
            w = g0.weights() * counts
            self._matrix = sp.csr_matrix((w, (self.spec.pre, self.spec.post)), shape=(n, n))
            self.enc_w, self.enc_b = g0.enc_w, g0.enc_b
            self.dec_w, self.dec_b = g0.dec_w, g0.dec_b
        else:
            self._w = np.stack([g.weights() * counts for g in self.genomes]) if s else np.zeros((len(self.genomes), 0))
            self._scatter = sp.csr_matrix(
                (np.ones(s), (self.spec.post, np.arange(s))), shape=(n, s)
            )
            self._block = self._dense_block()
            self.enc_w = np.stack([g.enc_w for g in self.genomes])
            self.enc_b = np.stack([g.enc_b for g in self.genomes])
            self.dec_w = np.stack([g.dec_w for g in self.genomes])
            self.dec_b = np.stack([g.dec_b for g in self.genomes])

    def _dense_block(self) -> np.ndarray | None:
        # Layered MLP weights as per-row (h1, h2) matrices; cheaper than scatter once dense.
        if self.spec.layers is None or self.spec.n_synapses == 0:
            return None
        h1, h2 = self.spec.layers
        pre, post = self.spec.pre, self.spec.post - h1
        if pre.max() >= h1 or post.min() < 0 or post.max() >= h2:
            return None
        block = np.zeros((len(self.genomes), h1 * h2))
        flat = pre * h2 + post
        for r in range(len(self.genomes)):
            np.add.at(block[r], flat, self._w[r])
        return block.reshape(-1, h1, h2)

    @property
    def n_rows(self) -> int | None:
        return None if self.shared else len(self.genomes)

    def reset(self, rows: int | None = None) -> NetworkState:
        rows = self.n_rows if rows is None else rows
        if rows is None:
            raise ContractError("shared mode needs an explicit row count")
        return reset_state(self.kind, (rows, self.spec.neuron_count), self.params)

    def _recurrent(self, x: np.ndarray) -> np.ndarray:
        if self.shared:
            return np.asarray((self._matrix.T @ x.T).T)
        if self._block is not None:
            h1, h2 = self.spec.layers
            out = np.zeros_like(x)
            out[:, h1 : h1 + h2] = np.matmul(x[:, None, :h1], self._block)[:, 0, :]
            return out
        contrib = self._w * x[:, self.spec.pre]
        return np.asarray((self._scatter @ contrib.T).T)

    def _affine(self, x, w, b):
        if self.shared:
            return x @ w + b
        return np.matmul(x[:, None, :], w)[:, 0, :] + b

    def step(self, state: NetworkState, obs: np.ndarray) -> tuple[NetworkState, np.ndarray]:
        """One control step: encode, run ``substeps`` neural steps, decode.

        Rows with non-finite actions are returned as NaN; callers decide
        whether that is an error or a failed individual.
        """
        obs = np.asarray(obs, dtype=float)
        if obs.ndim != 2 or obs.shape[1] != self.spec.io.obs_dim:
            raise ContractError(f"observation must be (rows, {self.spec.io.obs_dim}), got {obs.shape}")
        if obs.shape[0] != state.v.shape[0] or (not self.shared and obs.shape[0] != len(self.genomes)):
            raise ContractError("observation rows do not match the network state")
        rows = obs.shape[0]
        current = np.tanh(self._affine(obs, self.enc_w, self.enc_b))
        external = np.zeros((rows, self.spec.neuron_count))
        external[:, self.inputs] = current
        spiking = self.kind.spiking
        counts = np.zeros((rows, len(self.outputs)))
        for _ in range(self.spec.io.substeps):
            drive = self._recurrent(state.s if spiking else state.act)
            state = neuron_step(self.kind, state, self.params, drive + external, check=False)
            if spiking:
                counts += state.s[:, self.outputs]
        if self.window is DecodeWindow.SPIKE_COUNT:
            if spiking:
                readout = counts / self.spec.io.substeps
            else:
                readout = state.act[:, self.outputs]
        else:
            readout = state.act[:, self.outputs] if not spiking else state.v[:, self.outputs]
        with np.errstate(invalid="ignore", over="ignore"):
            action = np.tanh(self._affine(readout, self.dec_w, self.dec_b))
        return state, action


def forward_episode_step(
    spec: NetworkSpec, genome: Genome, state: NetworkState, obs: np.ndarray
) -> tuple[NetworkState, np.ndarray]:
    """Single-genome control step; ``state`` is from :func:`initial_state`.

    Raises:
        ContractError: ``obs`` has the wrong length.
        NumericError: the action is not finite.
    """
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (spec.io.obs_dim,):
        raise ContractError(f"observation must have shape ({spec.io.obs_dim},), got {obs.shape}")
    batch = PolicyBatch(spec, [genome])
    new_state, action = batch.step(state, obs[None, :])
    if not np.all(np.isfinite(action)):
        raise NumericError("non-finite action")
    return new_state, action[0]


def initial_state(spec: NetworkSpec, genome: Genome) -> NetworkState:
    """Resting network state for a single-genome rollout (leading row axis of 1)."""
    return reset_state(genome.model_kind, (1, spec.neuron_count), genome.model_params)

