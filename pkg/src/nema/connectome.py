"""Connectome graphs: data model, JSON file format, validation and statistics.

Also ships a parameterized generator for the nematode locomotion
microcircuit (B/D-type motor neurons driving dorsal and ventral body-wall
muscles, repeated along the body).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Mapping


class NeuronClass(str, Enum):
    SENSORY = "Sensory"
    INTER = "Inter"
    MOTOR = "Motor"
    MUSCLE = "Muscle"


class Subtype(str, Enum):
    DB = "DB"
    VB = "VB"
    DD = "DD"
    VD = "VD"
    MUSCLE_DORSAL = "MuscleDorsal"
    MUSCLE_VENTRAL = "MuscleVentral"
    OTHER = "Other"


class Polarity(str, Enum):
    EXCITATORY = "Excitatory"
    INHIBITORY = "Inhibitory"

    @property
    def sign(self) -> int:
        return 1 if self is Polarity.EXCITATORY else -1


_B_TYPES = (Subtype.DB, Subtype.VB)
_D_TYPES = (Subtype.DD, Subtype.VD)


class ConnectomeError(ValueError):
    """Base class for connectome parse/build failures."""


class ConnectomeParseError(ConnectomeError):
    """Malformed file: bad JSON, missing/unknown keys, bad field values."""


class DanglingReferenceError(ConnectomeError):
    """A synapse endpoint does not name an existing neuron."""


class DaleViolationError(ConnectomeError):
    """A synapse sign disagrees with the polarity of its presynaptic neuron."""


class CircuitConfigError(ConnectomeError):
    """Invalid generator configuration."""


@dataclass(frozen=True)
class Neuron:
    id: int
    name: str
    cls: NeuronClass
    subtype: Subtype = Subtype.OTHER
    segment: int = 0
    polarity: Polarity = Polarity.EXCITATORY


@dataclass(frozen=True)
class Synapse:
    pre: int
    post: int
    sign: int
    count: int = 1
    self_loop: bool = False


@dataclass(frozen=True)
class Violation:
    """One broken invariant; ``index`` points into neurons or synapses."""

    kind: str  # "neuron", "reference", "dale", "self_loop", "count", "sign"
    message: str
    index: int | None = None


@dataclass(frozen=True)
class Connectome:
    neurons: tuple[Neuron, ...]
    synapses: tuple[Synapse, ...]
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "neurons", tuple(self.neurons))
        object.__setattr__(self, "synapses", tuple(self.synapses))
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))

    @property
    def n_neurons(self) -> int:
        return len(self.neurons)

    @property
    def n_synapses(self) -> int:
        return len(self.synapses)

    def ids(self, cls: NeuronClass | None = None, subtype: Subtype | None = None) -> list[int]:
        return [
            n.id
            for n in self.neurons
            if (cls is None or n.cls is cls) and (subtype is None or n.subtype is subtype)
        ]

    def __eq__(self, other):
        if not isinstance(other, Connectome):
            return NotImplemented
        return (
            self.neurons == other.neurons
            and self.synapses == other.synapses
            and dict(self.metadata) == dict(other.metadata)
        )

    def __hash__(self):
        return hash((self.neurons, self.synapses))


@dataclass(frozen=True)
class ConnectomeStats:
    neuron_count: int
    synapse_count: int
    excitatory_count: int
    inhibitory_count: int
    sparsity: float
    class_counts: Mapping[str, int]
    excitatory_neurons: int
    inhibitory_neurons: int


def validate(c: Connectome) -> list[Violation]:
    """Return every invariant violation in ``c``; an empty list means valid."""
    out: list[Violation] = []
    n = len(c.neurons)
    for i, nrn in enumerate(c.neurons):
        if nrn.id != i:
            out.append(Violation("neuron", f"neuron at position {i} has id {nrn.id}; ids must be dense 0..N-1", i))
        if nrn.segment < 0:
            out.append(Violation("neuron", f"neuron {nrn.id} has negative segment {nrn.segment}", i))
        if nrn.subtype in _B_TYPES and nrn.polarity is not Polarity.EXCITATORY:
            out.append(Violation("neuron", f"neuron {nrn.id} ({nrn.subtype.value}) must be Excitatory", i))
        if nrn.subtype in _D_TYPES and nrn.polarity is not Polarity.INHIBITORY:
            out.append(Violation("neuron", f"neuron {nrn.id} ({nrn.subtype.value}) must be Inhibitory", i))
    for k, syn in enumerate(c.synapses):
        bad_ref = False
        for end in ("pre", "post"):
            j = getattr(syn, end)
            if not 0 <= j < n:
                out.append(Violation("reference", f"synapse {k}: {end}={j} is not a neuron id (N={n})", k))
                bad_ref = True
        if syn.sign not in (1, -1):
            out.append(Violation("sign", f"synapse {k}: sign must be +1 or -1, got {syn.sign}", k))
        if syn.count < 1:
            out.append(Violation("count", f"synapse {k}: count must be positive, got {syn.count}", k))
        if syn.pre == syn.post and not syn.self_loop:
            out.append(Violation("self_loop", f"synapse {k}: self-loop on {syn.pre} not marked self_loop", k))
        if not bad_ref and syn.sign in (1, -1):
            pol = c.neurons[syn.pre].polarity
            if syn.sign != pol.sign:
                out.append(
                    Violation(
                        "dale",
                        f"synapse {k} ({syn.pre}->{syn.post}) has sign {syn.sign:+d} "
                        f"but pre neuron is {pol.value}",
                        k,
                    )
                )
    return out


def stats(c: Connectome) -> ConnectomeStats:
    n = c.n_neurons
    s = c.n_synapses
    exc = sum(1 for syn in c.synapses if syn.sign > 0)
    dense = n * (n - 1)
    classes = Counter(nrn.cls.value for nrn in c.neurons)
    exc_neurons = sum(1 for nrn in c.neurons if nrn.polarity is Polarity.EXCITATORY)
    return ConnectomeStats(
        neuron_count=n,
        synapse_count=s,
        excitatory_count=exc,
        inhibitory_count=s - exc,
        sparsity=s / dense if dense else 0.0,
        class_counts=MappingProxyType({k.value: classes.get(k.value, 0) for k in NeuronClass}),
        excitatory_neurons=exc_neurons,
        inhibitory_neurons=n - exc_neurons,
    )


# -- file format ----------------------------------------------------------

_TOP_KEYS = {"neurons", "synapses", "metadata"}
_NEURON_KEYS = {"id", "name", "class", "subtype", "segment", "polarity"}
_SYNAPSE_KEYS = {"pre", "post", "sign", "count", "self_loop"}
_SYNAPSE_REQUIRED = {"pre", "post", "sign"}


def _field(obj: dict, key: str, typ, where: str):
    if key not in obj:
        raise ConnectomeParseError(f"{where}: missing key {key!r}")
    val = obj[key]
    if typ is int and (isinstance(val, bool) or not isinstance(val, int)):
        raise ConnectomeParseError(f"{where}.{key}: expected integer, got {val!r}")
    if typ is str and not isinstance(val, str):
        raise ConnectomeParseError(f"{where}.{key}: expected string, got {val!r}")
    return val


def _enum(enum_cls, val, where: str):
    try:
        return enum_cls(val)
    except ValueError:
        allowed = ", ".join(e.value for e in enum_cls)
        raise ConnectomeParseError(f"{where}: {val!r} is not one of {{{allowed}}}") from None


def _check_keys(obj, allowed: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise ConnectomeParseError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConnectomeParseError(f"{where}: unknown key(s) {unknown}")


def parse_connectome(text: str) -> Connectome:
    """Parse a connectome JSON document and validate it.

    Raises:
        ConnectomeParseError: bad JSON or schema (message carries line or field path).
        DanglingReferenceError: a synapse endpoint is out of range.
        DaleViolationError: a synapse sign contradicts its pre neuron's polarity.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConnectomeParseError(f"line {e.lineno}, column {e.colno}: {e.msg}") from None
    _check_keys(doc, _TOP_KEYS, "<root>")
    for key in ("neurons", "synapses"):
        if key not in doc:
            raise ConnectomeParseError(f"<root>: missing key {key!r}")
        if not isinstance(doc[key], list):
            raise ConnectomeParseError(f"<root>.{key}: expected an array")

    neurons = []
    for i, obj in enumerate(doc["neurons"]):
        where = f"neurons[{i}]"
        _check_keys(obj, _NEURON_KEYS, where)
        neurons.append(
            Neuron(
                id=_field(obj, "id", int, where),
                name=_field(obj, "name", str, where),
                cls=_enum(NeuronClass, _field(obj, "class", str, where), f"{where}.class"),
                subtype=_enum(Subtype, _field(obj, "subtype", str, where), f"{where}.subtype"),
                segment=_field(obj, "segment", int, where),
                polarity=_enum(Polarity, _field(obj, "polarity", str, where), f"{where}.polarity"),
            )
        )
    synapses = []
    for k, obj in enumerate(doc["synapses"]):
        where = f"synapses[{k}]"
        _check_keys(obj, _SYNAPSE_KEYS, where)
        self_loop = obj.get("self_loop", False)
        if not isinstance(self_loop, bool):
            raise ConnectomeParseError(f"{where}.self_loop: expected boolean, got {self_loop!r}")
        synapses.append(
            Synapse(
                pre=_field(obj, "pre", int, where),
                post=_field(obj, "post", int, where),
                sign=_field(obj, "sign", int, where),
                count=_field(obj, "count", int, where) if "count" in obj else 1,
                self_loop=self_loop,
            )
        )
    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()
    ):
        raise ConnectomeParseError("<root>.metadata: expected an object of string values")

    c = Connectome(tuple(neurons), tuple(synapses), metadata)
    problems = validate(c)
    # reference errors first: a dangling endpoint makes the Dale check meaningless
    for kind, exc in (
        ("reference", DanglingReferenceError),
        ("dale", DaleViolationError),
    ):
        hits = [v.message for v in problems if v.kind == kind]
        if hits:
            raise exc("; ".join(hits))
    if problems:
        raise ConnectomeParseError("; ".join(v.message for v in problems))
    return c


def to_dict(c: Connectome) -> dict:
    neurons = [
        {
            "id": n.id,
            "name": n.name,
            "class": n.cls.value,
            "subtype": n.subtype.value,
            "segment": n.segment,
            "polarity": n.polarity.value,
        }
        for n in c.neurons
    ]
    synapses = []
    for s in c.synapses:
        d = {"pre": s.pre, "post": s.post, "sign": s.sign, "count": s.count}
        if s.self_loop:
            d["self_loop"] = True
        synapses.append(d)
    doc = {"neurons": neurons, "synapses": synapses}
    if c.metadata:
        doc["metadata"] = dict(sorted(c.metadata.items()))
    return doc


def serialize_connectome(c: Connectome) -> str:
    """Deterministic JSON text; equal connectomes give byte-identical output."""
    return json.dumps(to_dict(c), indent=1) + "\n"


def load_connectome(path) -> Connectome:
    with open(path, encoding="utf-8") as fh:
        return parse_connectome(fh.read())


def save_connectome(c: Connectome, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_connectome(c))


# -- locomotion circuit generator -----------------------------------------


@dataclass(frozen=True)
class SegmentConfig:
    """Per-segment cell counts for :func:`generate_locomotion_circuit`.

    The default gives 12 motor neurons and 16 muscles per unit, i.e. 72 motor
    neurons and 96 muscles over six units.
    """

    db: int = 2
    vb: int = 4
    dd: int = 2
    vd: int = 4
    muscles_dorsal: int = 8
    muscles_ventral: int = 8


def generate_locomotion_circuit(segments: int = 6, cfg: SegmentConfig | None = None) -> Connectome:
    """Build the repeated B/D motor microcircuit.

    Within a segment: DB/VB excite same-side muscles and the opposite-side
    D neurons; DD/VD inhibit same-side muscles; VD also inhibits VB. Each B
    neuron excites its same-class counterpart in the next posterior segment.
    """
    cfg = cfg or SegmentConfig()
    if segments < 1:
        raise CircuitConfigError(f"segments must be >= 1, got {segments}")
    for name in ("db", "vb", "dd", "vd", "muscles_dorsal", "muscles_ventral"):
        if getattr(cfg, name) < 1:
            raise CircuitConfigError(f"{name} must be >= 1, got {getattr(cfg, name)}")

    layout = (
        (Subtype.DB, NeuronClass.MOTOR, Polarity.EXCITATORY, cfg.db),
        (Subtype.VB, NeuronClass.MOTOR, Polarity.EXCITATORY, cfg.vb),
        (Subtype.DD, NeuronClass.MOTOR, Polarity.INHIBITORY, cfg.dd),
        (Subtype.VD, NeuronClass.MOTOR, Polarity.INHIBITORY, cfg.vd),
        (Subtype.MUSCLE_DORSAL, NeuronClass.MUSCLE, Polarity.EXCITATORY, cfg.muscles_dorsal),
        (Subtype.MUSCLE_VENTRAL, NeuronClass.MUSCLE, Polarity.EXCITATORY, cfg.muscles_ventral),
    )
    muscle_prefix = {Subtype.MUSCLE_DORSAL: "MD", Subtype.MUSCLE_VENTRAL: "MV"}
    neurons: list[Neuron] = []
    groups: list[dict[Subtype, list[int]]] = []
    for seg in range(segments):
        g: dict[Subtype, list[int]] = {}
        for sub, cls, pol, count in layout:
            g[sub] = []
            for j in range(count):
                nid = len(neurons)
                prefix = muscle_prefix.get(sub, sub.value)
                neurons.append(Neuron(nid, f"{prefix}{seg}_{j}", cls, sub, seg, pol))
                g[sub].append(nid)
        groups.append(g)

    synapses: list[Synapse] = []

    def connect(pres, posts, sign):
        for a in pres:
            for b in posts:
                synapses.append(Synapse(a, b, sign))

    for seg, g in enumerate(groups):
        connect(g[Subtype.DB], g[Subtype.MUSCLE_DORSAL], +1)
        connect(g[Subtype.VB], g[Subtype.MUSCLE_VENTRAL], +1)
        connect(g[Subtype.DB], g[Subtype.VD], +1)
        connect(g[Subtype.VB], g[Subtype.DD], +1)
        connect(g[Subtype.DD], g[Subtype.MUSCLE_DORSAL], -1)
        connect(g[Subtype.VD], g[Subtype.MUSCLE_VENTRAL], -1)
        connect(g[Subtype.VD], g[Subtype.VB], -1)
        if seg + 1 < segments:
            nxt = groups[seg + 1]
            for sub in _B_TYPES:
                for a, b in zip(g[sub], nxt[sub]):
                    synapses.append(Synapse(a, b, +1))

    meta = {
        "generator": "locomotion_circuit",
        "segments": str(segments),
        "cfg": ",".join(f"{k}={getattr(cfg, k)}" for k in cfg.__dataclass_fields__),
    }
    return Connectome(tuple(neurons), tuple(synapses), meta)
