"""Evolving C. elegans-style connectome networks with biophysical neuron models.

The package is split by concern:

- :mod:`nema.connectome` describes wiring diagrams and generates the motor circuit.
- :mod:`nema.neurons` holds the Artificial, ALIF and Izhikevich update rules.
- :mod:`nema.network` compiles wiring into Dale-constrained, evolvable policies.
- :mod:`nema.envs` has the swimmer, MNIST and quadratic tasks.
- :mod:`nema.evolution` has the GA, the ES pretrainer and checkpoints.
- :mod:`nema.experiments` and :mod:`nema.cli` run whole experiments.
"""

from .connectome import (
    Connectome,
    ConnectomeStats,
    Neuron,
    SegmentConfig,
    Synapse,
    generate_locomotion_circuit,
    load_connectome,
    parse_connectome,
    serialize_connectome,
    stats,
    validate,
)
from .evolution import EsConfig, GaConfig, TrainingRun, checkpoint_load, checkpoint_save, run_es, run_ga
from .network import (
    Genome,
    NetworkSpec,
    PolicyBatch,
    Provenance,
    build_exact,
    build_fully_connected,
    build_random_sparse,
    build_stat_matched,
    locomotion_io,
)
from .neurons import AlifParams, IzhikevichParams, NeuronModelKind

__version__ = "0.1.0"

__all__ = [
    "AlifParams",
    "Connectome",
    "ConnectomeStats",
    "EsConfig",
    "GaConfig",
    "Genome",
    "IzhikevichParams",
    "NetworkSpec",
    "Neuron",
    "NeuronModelKind",
    "PolicyBatch",
    "Provenance",
    "SegmentConfig",
    "Synapse",
    "TrainingRun",
    "build_exact",
    "build_fully_connected",
    "build_random_sparse",
    "build_stat_matched",
    "checkpoint_load",
    "checkpoint_save",
    "generate_locomotion_circuit",
    "load_connectome",
    "locomotion_io",
    "parse_connectome",
    "run_es",
    "run_ga",
    "serialize_connectome",
    "stats",
    "validate",
]
