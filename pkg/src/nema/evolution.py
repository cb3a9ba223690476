"""Elitist asexual GA, mirrored-sampling ES, population evaluation, checkpoints.

Randomness never flows through a shared generator. Every draw comes from a
substream keyed by ``(root seed, purpose, generation, index)``, so results
do not depend on evaluation order, worker count, or whether a run was
resumed from a checkpoint.
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .envs.tasks import FAILURE, Task
from .network import Genome
from .neurons import AlifParams, IzhikevichParams, NeuronModelKind

# substream purposes
MUTATION, EVALUATION, ES_NOISE = 0, 1, 2


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 750
    elite_size: int = 8
    mutation_rate_enc_dec: float = 0.01
    mutation_rate_connectome: float = 0.01
    decay_enc_dec: float = 0.997
    decay_connectome: float = 0.997
    generations: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.elite_size <= self.population_size:
            raise ValueError("need 1 <= elite_size <= population_size")
        if self.mutation_rate_enc_dec < 0 or self.mutation_rate_connectome < 0:
            raise ValueError("mutation rates must be >= 0")
        for d in (self.decay_enc_dec, self.decay_connectome):
            if not 0 < d <= 1:
                raise ValueError("decays must lie in (0, 1]")


PAPER_GA = GaConfig()
DESK_GA = GaConfig(population_size=50, elite_size=4)


@dataclass(frozen=True)
class EsConfig:
    population_size: int = 200
    sigma_enc_dec: float = 0.1
    sigma_connectome: float = 0.1
    lr_enc_dec: float = 0.1
    lr_connectome: float = 0.1
    sigma_decay: float = 0.999
    lr_decay: float = 0.999
    epochs: int = 1000
    seed: int = 0
    shaping: str = "centered"  # or "rank"

    def __post_init__(self):
        if self.shaping not in ("centered", "rank"):
            raise ValueError(f"unknown fitness shaping {self.shaping!r}")
        if self.population_size < 2 or self.population_size % 2:
            raise ValueError("ES population must be even (mirrored pairs)")
        if min(self.sigma_enc_dec, self.sigma_connectome) <= 0:
            raise ValueError("sigma must be > 0")
        if min(self.lr_enc_dec, self.lr_connectome) <= 0:
            raise ValueError("learning rate must be > 0")


def substream(root: int, purpose: int, generation: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=root, spawn_key=(purpose, generation, index))
    return np.random.default_rng(ss)


def eval_seed(root: int, generation: int, index: int) -> int:
    """Per-individual episode seed handed to ``Task.evaluate``."""
    ss = np.random.SeedSequence(entropy=root, spawn_key=(EVALUATION, generation, index))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


# -- evaluation --------------------------------------------------------------------


def evaluate_population(
    genomes: Sequence[Genome],
    task: Task,
    root_seed: int = 0,
    generation: int = 0,
    workers: int = 1,
    indices: Sequence[int] | None = None,
) -> np.ndarray:
    """Fitness of every genome; failures and NaN become ``-inf``.

    Genome ``i`` is evaluated with the episode seed of (root, generation,
    ``indices[i]``). The population is split into ``workers`` contiguous
    chunks evaluated on a thread pool; the numerical kernels release the GIL.
    """
    n = len(genomes)
    if n == 0:
        return np.zeros(0)
    indices = range(n) if indices is None else indices
    seeds = [eval_seed(root_seed, generation, i) for i in indices]
    workers = max(1, min(int(workers), n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    chunks = [(bounds[k], bounds[k + 1]) for k in range(workers)]

    def run(chunk):
        a, b = chunk
        try:
            return np.asarray(task.evaluate(genomes[a:b], seeds[a:b]), dtype=float)
        except (FloatingPointError, OverflowError):
            return _evaluate_one_by_one(task, genomes[a:b], seeds[a:b])

    if workers == 1:
        parts = [run(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    fit = np.concatenate(parts)
    fit[np.isnan(fit)] = FAILURE
    return fit


def _evaluate_one_by_one(task: Task, genomes, seeds) -> np.ndarray:
    out = np.empty(len(genomes))
    for k, (g, s) in enumerate(zip(genomes, seeds)):
        try:
            out[k] = task.evaluate([g], [s])[0]
        except (FloatingPointError, OverflowError):
            out[k] = FAILURE
    return out


# -- GA ------------------------------------------------------------------------------


def mutate(g: Genome, rate_enc_dec: float, rate_connectome: float, rng: np.random.Generator) -> Genome:
    """Single-parent child: i.i.d. Gaussian noise on each gene group; signs copied."""
    if rate_enc_dec < 0 or rate_connectome < 0:
        raise ValueError("mutation rates must be >= 0")
    vec = g.flatten()
    sl = g.group_slices()
    conn, encdec = sl["connectome"], sl["enc_dec"]
    n_conn = conn.stop - conn.start
    n_ed = encdec.stop - encdec.start
    if rate_connectome > 0 and n_conn:
        vec[conn] += rng.normal(0.0, rate_connectome, size=n_conn)
    if rate_enc_dec > 0 and n_ed:
        vec[encdec] += rng.normal(0.0, rate_enc_dec, size=n_ed)
    return g.unflatten(vec)


@dataclass
class TrainingRun:
    """GA state after evaluating generation ``generation`` (-1: not started).

    ``population`` and ``fitness`` belong to that evaluated generation;
    ``rates`` are the mutation standard deviations used to breed the next.
    """

    config: GaConfig
    population: list[Genome]
    fitness: np.ndarray | None = None
    generation: int = -1
    rate_connectome: float = 0.0
    rate_enc_dec: float = 0.0
    curve: list[tuple[float, float, float, float, float]] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def best(self) -> Genome:
        return self.population[int(ranking(self.fitness)[0])]


def init_run(seed_genome: Genome, cfg: GaConfig, extra: dict | None = None) -> TrainingRun:
    """Generation-0 population: the seed genome itself plus mutated copies of it."""
    pop = [seed_genome] + [
        mutate(
            seed_genome,
            cfg.mutation_rate_enc_dec,
            cfg.mutation_rate_connectome,
            substream(cfg.seed, MUTATION, 0, i),
        )
        for i in range(1, cfg.population_size)
    ]
    return TrainingRun(
        config=cfg,
        population=pop,
        rate_connectome=cfg.mutation_rate_connectome,
        rate_enc_dec=cfg.mutation_rate_enc_dec,
        extra=dict(extra or {}),
    )


def ranking(fitness: np.ndarray) -> np.ndarray:
    """Indices from best to worst; ties go to the lower index."""
    fitness = np.asarray(fitness, dtype=float)
    return np.lexsort((np.arange(len(fitness)), -fitness))


def select_elites(fitness: np.ndarray, elite_size: int) -> np.ndarray:
    return ranking(fitness)[:elite_size]


def curve_stats(fitness: np.ndarray) -> tuple[float, float, float]:
    finite = fitness[np.isfinite(fitness)]
    best = float(np.max(fitness)) if len(fitness) else -math.inf
    if len(finite) == 0:
        return best, -math.inf, 0.0
    return best, float(np.mean(finite)), float(np.std(finite))


def breed(run: TrainingRun, generation: int) -> list[Genome]:
    """Next population: elites unmutated, then children cycling over the elites."""
    cfg = run.config
    elites = select_elites(run.fitness, cfg.elite_size)
    pop = [run.population[i] for i in elites]
    for i in range(cfg.elite_size, cfg.population_size):
        parent = run.population[elites[(i - cfg.elite_size) % cfg.elite_size]]
        rng = substream(cfg.seed, MUTATION, generation, i)
        pop.append(mutate(parent, run.rate_enc_dec, run.rate_connectome, rng))
    return pop


def ga_generation(run: TrainingRun, task: Task, workers: int = 1) -> TrainingRun:
    """Breed (unless this is generation 0), evaluate, record curve stats, decay rates."""
    cfg = run.config
    g = run.generation + 1
    if run.generation >= 0:
        population = breed(run, g)
        rate_conn = run.rate_connectome * cfg.decay_connectome
        rate_ed = run.rate_enc_dec * cfg.decay_enc_dec
    else:
        population = run.population
        rate_conn, rate_ed = run.rate_connectome, run.rate_enc_dec
    fitness = evaluate_population(population, task, cfg.seed, g, workers)
    best, mean, std = curve_stats(fitness)
    return replace(
        run,
        population=population,
        fitness=fitness,
        generation=g,
        rate_connectome=rate_conn,
        rate_enc_dec=rate_ed,
        curve=run.curve + [(best, mean, std, rate_conn, rate_ed)],
    )


def run_ga(run: TrainingRun, task: Task, generations: int | None = None, workers: int = 1, callback=None) -> TrainingRun:
    """Advance until ``generations`` generations (default: the config's) are evaluated."""
    target = run.config.generations if generations is None else generations
    while run.generation + 1 < target:
        run = ga_generation(run, task, workers)
        if callback is not None:
            callback(run)
    return run


# -- ES ------------------------------------------------------------------------------


@dataclass
class EsState:
    theta: Genome
    sigma_enc_dec: float
    sigma_connectome: float
    lr_enc_dec: float
    lr_connectome: float
    epoch: int = 0
    history: list[float] = field(default_factory=list)  # fitness at theta before each update


def init_es(theta: Genome, cfg: EsConfig) -> EsState:
    return EsState(theta, cfg.sigma_enc_dec, cfg.sigma_connectome, cfg.lr_enc_dec, cfg.lr_connectome)


def centered_ranks(fitness: np.ndarray) -> np.ndarray:
    """Average ranks mapped linearly onto [-0.5, 0.5]; ties share a value."""
    n = len(fitness)
    if n < 2:
        return np.zeros(n)
    return (rankdata(fitness, method="average") - 1) / (n - 1) - 0.5


def shape_fitness(fitness: np.ndarray, mode: str = "centered") -> np.ndarray:
    """Zero-mean ES weights; all-equal fitness gives exactly zero weights.

    ``centered`` subtracts the mean (failed individuals count as the worst
    finite score); ``rank`` uses :func:`centered_ranks`.
    """
    fitness = np.asarray(fitness, dtype=float)
    finite = np.isfinite(fitness)
    if not finite.any() or np.all(fitness == fitness[0]):
        return np.zeros(len(fitness))
    if mode == "rank":
        return centered_ranks(fitness)
    f = np.where(finite, fitness, fitness[finite].min())
    if np.all(f == f[0]):
        return np.zeros(len(f))
    return f - f.mean()


def _group_vector(theta: Genome, conn_value: float, ed_value: float) -> np.ndarray:
    v = np.empty(theta.size)
    sl = theta.group_slices()
    v[sl["connectome"]] = conn_value
    v[sl["enc_dec"]] = ed_value
    return v


def es_epoch(state: EsState, cfg: EsConfig, task: Task, workers: int = 1) -> EsState:
    """One mirrored-sampling ES update on the flat genome, then decay sigma and lr.

    ``theta += lr / (n sigma) * sum_i w_i eps_i`` per parameter group, where
    ``w`` are the shaped (zero-mean) fitness values of the ``n`` candidates.
    """
    theta = state.theta
    x = theta.flatten()
    sigma = _group_vector(theta, state.sigma_connectome, state.sigma_enc_dec)
    lr = _group_vector(theta, state.lr_connectome, state.lr_enc_dec)
    half = cfg.population_size // 2
    rng = substream(cfg.seed, ES_NOISE, state.epoch, 0)
    eps = rng.standard_normal((half, theta.size))
    eps = np.concatenate([eps, -eps])
    candidates = [theta.unflatten(x + sigma * e) for e in eps]
    fit = evaluate_population(candidates, task, cfg.seed, state.epoch, workers)
    weights = shape_fitness(fit, cfg.shaping)
    step = lr / (cfg.population_size * sigma) * (weights @ eps)
    return replace(
        state,
        theta=theta.unflatten(x + step),
        sigma_enc_dec=state.sigma_enc_dec * cfg.sigma_decay,
        sigma_connectome=state.sigma_connectome * cfg.sigma_decay,
        lr_enc_dec=state.lr_enc_dec * cfg.lr_decay,
        lr_connectome=state.lr_connectome * cfg.lr_decay,
        epoch=state.epoch + 1,
        history=state.history + [float(np.max(fit))],
    )


def run_es(theta: Genome, cfg: EsConfig, task: Task, epochs: int | None = None, workers: int = 1) -> EsState:
    state = init_es(theta, cfg)
    for _ in range(cfg.epochs if epochs is None else epochs):
        state = es_epoch(state, cfg, task, workers)
    return state


# -- training curve CSV --------------------------------------------------------------

CURVE_HEADER = ("generation", "best", "mean", "std", "mutation_rate_connectome", "mutation_rate_enc_dec")


def _fmt(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else ("-inf" if x < 0 else ("inf" if x > 0 else "nan"))


def curve_csv(run: TrainingRun) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    for g, (best, mean, std, rc, re) in enumerate(run.curve):
        w.writerow([g, _fmt(best), _fmt(mean), _fmt(std), _fmt(rc), _fmt(re)])
    return buf.getvalue()


def emit_curve_csv(run: TrainingRun, path) -> None:
    """Write one row per evaluated generation; floats round-trip exactly."""
    if not run.curve:
        raise ValueError("run has no evaluated generations")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(curve_csv(run))


def read_curve_csv(path) -> list[dict[str, float]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "generation" else float(v)) for k, v in r.items()} for r in rows]


# -- checkpoints ---------------------------------------------------------------------

MAGIC = b"NEMA"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _params_to_dict(p) -> dict | None:
    if p is None:
        return None
    return {"type": type(p).__name__, **asdict(p)}


def _params_from_dict(d):
    if d is None:
        return None
    d = dict(d)
    typ = d.pop("type")
    return {"AlifParams": AlifParams, "IzhikevichParams": IzhikevichParams}[typ](**d)


def _section(name: str, payload: bytes) -> bytes:
    nb = name.encode()
    return struct.pack("<I", len(nb)) + nb + struct.pack("<Q", len(payload)) + payload


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def checkpoint_save(run: TrainingRun) -> bytes:
    """Versioned binary snapshot: magic, version, length-prefixed sections, CRC32."""
    template = run.population[0]
    config = {
        "ga": asdict(run.config),
        "generation": run.generation,
        "rate_connectome": run.rate_connectome.hex(),
        "rate_enc_dec": run.rate_enc_dec.hex(),
        "extra": run.extra,
    }
    lineage = {"root_seed": run.config.seed, "purposes": {"mutation": MUTATION, "evaluation": EVALUATION}}
    descriptor = {
        "count": len(run.population),
        "size": template.size,
        "shapes": [list(a.shape) for a in (template.w_log, template.enc_w, template.enc_b, template.dec_w, template.dec_b)],
        "signed": template.signs is not None,
        "kind": template.model_kind.value,
        "params": _params_to_dict(template.model_params),
        "has_fitness": run.fitness is not None,
    }
    flat = np.stack([g.flatten() for g in run.population]).astype("<f8")
    signs = b"" if template.signs is None else template.signs.astype("<i1").tobytes()
    fitness = b"" if run.fitness is None else np.asarray(run.fitness, dtype="<f8").tobytes()
    curve = np.asarray(run.curve, dtype="<f8").reshape(-1, 5).tobytes()
    body = b"".join(
        [
            _section("config", _json_bytes(config)),
            _section("rng", _json_bytes(lineage)),
            _section("genome_descriptor", _json_bytes(descriptor)),
            _section("genomes", flat.tobytes()),
            _section("signs", signs),
            _section("fitness", fitness),
            _section("curve", curve),
        ]
    )
    head = MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(body))
    return head + body + struct.pack("<I", zlib.crc32(head + body))


def checkpoint_load(blob: bytes) -> TrainingRun:
    """Inverse of :func:`checkpoint_save`; raises :class:`CheckpointError` on any damage."""
    if len(blob) < 20 or blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    version, body_len = struct.unpack_from("<IQ", blob, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    if len(blob) != 16 + body_len + 4:
        raise CheckpointError(f"length field says {body_len} body bytes but blob holds {len(blob) - 20}")
    (crc,) = struct.unpack_from("<I", blob, 16 + body_len)
    if crc != zlib.crc32(blob[: 16 + body_len]):
        raise CheckpointError("checksum mismatch")
    sections: dict[str, bytes] = {}
    pos, end = 16, 16 + body_len
    while pos < end:
        if pos + 4 > end:
            raise CheckpointError(f"truncated section header at offset {pos}")
        (nlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos : pos + nlen].decode()
        pos += nlen
        if pos + 8 > end:
            raise CheckpointError(f"truncated section {name!r}")
        (plen,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        if pos + plen > end:
            raise CheckpointError(f"section {name!r} overruns the body")
        sections[name] = blob[pos : pos + plen]
        pos += plen
    try:
        config = json.loads(sections["config"])
        desc = json.loads(sections["genome_descriptor"])
        flat = np.frombuffer(sections["genomes"], dtype="<f8").reshape(desc["count"], desc["size"])
        signs = np.frombuffer(sections["signs"], dtype="<i1").astype(np.int8) if desc["signed"] else None
        fitness = np.frombuffer(sections["fitness"], dtype="<f8").copy() if desc["has_fitness"] else None
        curve_arr = np.frombuffer(sections["curve"], dtype="<f8").reshape(-1, 5)
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"malformed checkpoint: {e}") from None

    shapes = [tuple(s) for s in desc["shapes"]]
    kind = NeuronModelKind(desc["kind"])
    params = _params_from_dict(desc["params"])
    template = Genome(
        np.zeros(shapes[0]),
        None if signs is None else signs.copy(),
        np.zeros(shapes[1]),
        np.zeros(shapes[2]),
        np.zeros(shapes[3]),
        np.zeros(shapes[4]),
        kind,
        params,
    )
    population = [template.unflatten(row) for row in flat]
    return TrainingRun(
        config=GaConfig(**config["ga"]),
        population=population,
        fitness=fitness,
        generation=config["generation"],
        rate_connectome=float.fromhex(config["rate_connectome"]),
        rate_enc_dec=float.fromhex(config["rate_enc_dec"]),
        curve=[tuple(float(v) for v in row) for row in curve_arr],
        extra=config["extra"],
    )
