"""Experiment configs, presets and the end-to-end runner.

An experiment file is INI text with one level of sections::

    [experiment]   name, output, seeds, workers
    [network]      connectome, segments, provenances, neuron_models, substeps
    [task]         name (swimmer | mnist | quadratic) plus task keys
    [ga]           GaConfig fields except the seed
    [es]           enabled plus EsConfig fields except the seed

Every (provenance, neuron model) pair is an *arm*. Each arm is trained once
per seed, and the seed drives the random network builds, ES pretraining and
the GA. Relative paths are resolved against the current directory.
"""

from __future__ import annotations

import configparser
import csv
import io
import itertools
import math
import os
import time
from dataclasses import dataclass, field, fields, replace
from importlib import resources

import numpy as np

from .connectome import generate_locomotion_circuit, load_connectome, stats
from .envs.mnist import mnist_load_dir
from .envs.swimmer import SwimmerConfig
from .envs.tasks import MnistTask, QuadraticTask, SwimmerTask
from .evolution import (
    EsConfig,
    GaConfig,
    TrainingRun,
    checkpoint_load,
    checkpoint_save,
    curve_csv,
    ga_generation,
    init_run,
    read_curve_csv,
    run_es,
)
from .network import (
    IoSpec,
    Provenance,
    bare_genome,
    build_exact,
    build_fully_connected,
    build_random_sparse,
    build_stat_matched,
    locomotion_io,
)
from .neurons import NeuronModelKind

EXPERIMENTS = ("BiophysicalRealism", "ArchitectureStatistics", "Limitations", "Custom")
TASKS = ("swimmer", "mnist", "quadratic")
WORKERS_ENV = "NEMA_WORKERS"


class ConfigError(ValueError):
    """The experiment file is invalid; raised before any training starts."""


@dataclass(frozen=True)
class TaskConfig:
    name: str = "swimmer"
    swimmer: SwimmerConfig = field(default_factory=SwimmerConfig)
    data_dir: str = "data/mnist"
    split: str = "train"
    subset_size: int = 1000
    subset_seed: int = 0
    dim: int = 10
    target: float = 1.0  # quadratic optimum is target * ones(dim)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    output: str
    seeds: tuple[int, ...]
    provenances: tuple[Provenance, ...] = (Provenance.EXACT,)
    neuron_models: tuple[NeuronModelKind, ...] = (NeuronModelKind.ARTIFICIAL,)
    connectome: str = "generated"
    segments: int = 6
    substeps: int = 10
    task: TaskConfig = field(default_factory=TaskConfig)
    ga: GaConfig = field(default_factory=GaConfig)
    es: EsConfig | None = None
    workers: int = 1

    @property
    def arms(self) -> list[tuple[Provenance, NeuronModelKind]]:
        return list(itertools.product(self.provenances, self.neuron_models))


def arm_name(provenance: Provenance, kind: NeuronModelKind) -> str:
    return f"{provenance.value}-{kind.value}"


# -- parsing ----------------------------------------------------------------------


def _list(text: str) -> list[str]:
    return [t.strip() for t in text.replace("\n", ",").split(",") if t.strip()]


def _typed(section: configparser.SectionProxy, key: str, typ, default):
    if key not in section:
        return default
    raw = section[key]
    try:
        if typ is bool:
            return section.getboolean(key)
        return typ(raw)
    except ValueError:
        raise ConfigError(f"[{section.name}] {key} = {raw!r} is not a valid {typ.__name__}") from None


def _dataclass_from(section, cls, skip=(), **fixed):
    kwargs = dict(fixed)
    known = {f.name: f for f in fields(cls)}
    for key in section:
        if key in skip:
            continue
        if key not in known:
            raise ConfigError(f"[{section.name}] unknown key {key!r}")
    for name, f in known.items():
        if name in skip or name in fixed:
            continue
        default = f.default
        kwargs[name] = _typed(section, name, type(default), default)
    try:
        return cls(**kwargs)
    except ValueError as e:
        raise ConfigError(f"[{section.name}] {e}") from None


def _enum_list(text: str, enum_cls, what: str):
    out = []
    for item in _list(text):
        try:
            out.append(enum_cls(item))
        except ValueError:
            allowed = ", ".join(e.value for e in enum_cls)
            raise ConfigError(f"unknown {what} {item!r} (expected one of {allowed})") from None
    if not out:
        raise ConfigError(f"empty {what} list")
    return tuple(out)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate experiment text; never touches the filesystem."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"unreadable config: {e}") from None
    for name in cp.sections():
        if name not in ("experiment", "network", "task", "ga", "es"):
            raise ConfigError(f"unknown section [{name}]")
    for name in ("experiment", "task", "ga"):
        if name not in cp:
            raise ConfigError(f"missing section [{name}]")
    ex = cp["experiment"]
    for key in ex:
        if key not in ("name", "output", "seeds", "workers"):
            raise ConfigError(f"[experiment] unknown key {key!r}")
    experiment = ex.get("name", "Custom")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"[experiment] name {experiment!r} is not one of {', '.join(EXPERIMENTS)}")
    if "output" not in ex:
        raise ConfigError("[experiment] output directory is required")
    try:
        seeds = tuple(int(s) for s in _list(ex.get("seeds", "")))
    except ValueError:
        raise ConfigError(f"[experiment] seeds = {ex['seeds']!r} must be integers") from None
    if not seeds:
        raise ConfigError("[experiment] seed list must not be empty")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("[experiment] seeds must be distinct")
    workers = _typed(ex, "workers", int, 1)
    if workers < 1:
        raise ConfigError("[experiment] workers must be >= 1")

    net = cp["network"] if "network" in cp else cp["DEFAULT"]
    for key in net:
        if key not in ("connectome", "segments", "provenances", "neuron_models", "substeps"):
            raise ConfigError(f"[network] unknown key {key!r}")
    provenances = _enum_list(net.get("provenances", "ExactConnectome"), Provenance, "provenance")
    kinds = _enum_list(net.get("neuron_models", "Artificial"), NeuronModelKind, "neuron model")
    segments = _typed(net, "segments", int, 6)
    substeps = _typed(net, "substeps", int, 10)
    if segments < 1 or substeps < 1:
        raise ConfigError("[network] segments and substeps must be >= 1")

    tk = cp["task"]
    name = tk.get("name", "swimmer")
    if name not in TASKS:
        raise ConfigError(f"[task] name {name!r} is not one of {', '.join(TASKS)}")
    task_keys = {
        "swimmer": {f.name for f in fields(SwimmerConfig)},
        "mnist": {"data_dir", "split", "subset_size", "subset_seed"},
        "quadratic": {"dim", "target"},
    }[name]
    for key in tk:
        if key != "name" and key not in task_keys:
            raise ConfigError(f"[task] key {key!r} does not apply to the {name} task")
    task = TaskConfig(
        name=name,
        swimmer=_dataclass_from(tk, SwimmerConfig, skip={"name", "data_dir", "split", "subset_size", "subset_seed", "dim", "target"})
        if name == "swimmer"
        else SwimmerConfig(),
        data_dir=tk.get("data_dir", "data/mnist"),
        split=tk.get("split", "train"),
        subset_size=_typed(tk, "subset_size", int, 1000),
        subset_seed=_typed(tk, "subset_seed", int, 0),
        dim=_typed(tk, "dim", int, 10),
        target=_typed(tk, "target", float, 1.0),
    )
    if task.subset_size < 1 or task.dim < 1:
        raise ConfigError("[task] subset_size and dim must be >= 1")
    if name == "swimmer" and task.swimmer.episode_length < 1:
        raise ConfigError("[task] episode_length must be >= 1")
    if name == "quadratic" and (len(provenances) > 1 or len(kinds) > 1):
        raise ConfigError("the quadratic task has a single arm")

    ga = _dataclass_from(cp["ga"], GaConfig, skip={"seed"}, seed=0)
    if ga.generations < 1:
        raise ConfigError("[ga] generations must be >= 1")
    es = None
    if "es" in cp and _typed(cp["es"], "enabled", bool, True):
        es = _dataclass_from(cp["es"], EsConfig, skip={"seed", "enabled"}, seed=0)
        if es.epochs < 0:
            raise ConfigError("[es] epochs must be >= 0")

    return ExperimentConfig(
        experiment=experiment,
        output=ex["output"],
        seeds=seeds,
        provenances=provenances,
        neuron_models=kinds,
        connectome=net.get("connectome", "generated"),
        segments=segments,
        substeps=substeps,
        task=task,
        ga=ga,
        es=es,
        workers=workers,
    )


def check_files(cfg: ExperimentConfig) -> None:
    """Referenced inputs must exist before any compute starts."""
    if cfg.connectome != "generated" and not os.path.isfile(cfg.connectome):
        raise ConfigError(f"[network] connectome file {cfg.connectome!r} does not exist")
    if cfg.task.name == "mnist":
        split = cfg.task.split
        for stem in (f"{split}-images-idx3-ubyte", f"{split}-labels-idx1-ubyte"):
            if not any(os.path.isfile(os.path.join(cfg.task.data_dir, stem + s)) for s in ("", ".gz")):
                raise ConfigError(f"[task] {stem}[.gz] not found in {cfg.task.data_dir!r}")


def _num(x) -> str:
    return repr(x) if isinstance(x, float) else str(x)


def render_config(cfg: ExperimentConfig) -> str:
    """Resolved config text with every default written out; parses back to ``cfg``."""
    cp = configparser.ConfigParser(interpolation=None)
    cp["experiment"] = {
        "name": cfg.experiment,
        "output": cfg.output,
        "seeds": ", ".join(map(str, cfg.seeds)),
        "workers": str(cfg.workers),
    }
    cp["network"] = {
        "connectome": cfg.connectome,
        "segments": str(cfg.segments),
        "provenances": ", ".join(p.value for p in cfg.provenances),
        "neuron_models": ", ".join(k.value for k in cfg.neuron_models),
        "substeps": str(cfg.substeps),
    }
    t = cfg.task
    task = {"name": t.name}
    if t.name == "swimmer":
        task.update({f.name: _num(getattr(t.swimmer, f.name)) for f in fields(SwimmerConfig)})
    elif t.name == "mnist":
        task.update(data_dir=t.data_dir, split=t.split, subset_size=str(t.subset_size), subset_seed=str(t.subset_seed))
    else:
        task["dim"] = str(t.dim)
        task["target"] = _num(t.target)
    cp["task"] = task
    cp["ga"] = {f.name: _num(getattr(cfg.ga, f.name)) for f in fields(GaConfig) if f.name != "seed"}
    if cfg.es is None:
        cp["es"] = {"enabled": "false"}
    else:
        es = {"enabled": "true"}
        es.update({f.name: _num(getattr(cfg.es, f.name)) for f in fields(EsConfig) if f.name != "seed"})
        cp["es"] = es
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# -- presets ----------------------------------------------------------------------


def preset_names() -> list[str]:
    files = resources.files("nema.presets").iterdir()
    return sorted(p.name[:-4] for p in files if p.name.endswith(".ini"))


def preset_text(name: str) -> str:
    path = resources.files("nema.presets").joinpath(f"{name}.ini")
    if not path.is_file():
        raise ConfigError(f"no preset named {name!r} (available: {', '.join(preset_names())})")
    return path.read_text(encoding="utf-8")


def load_config(source: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Read a config file, or a preset when ``source`` names one and no such file exists.

    ``overrides`` maps ``section.key`` to replacement values.
    """
    if os.path.isfile(source):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    elif os.sep not in source and not source.endswith(".ini"):
        text = preset_text(source)
    else:
        raise ConfigError(f"config file {source!r} does not exist")
    if overrides:
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.read_string(text)
        for dotted, value in overrides.items():
            section, _, key = dotted.partition(".")
            if not key:
                raise ConfigError(f"override {dotted!r} must look like section.key")
            if section not in cp:
                cp[section] = {}
            cp[section][key] = value
        buf = io.StringIO()
        cp.write(buf)
        text = buf.getvalue()
    return parse_config(text)


# -- building ---------------------------------------------------------------------


def _connectome(cfg: ExperimentConfig):
    if cfg.connectome == "generated":
        return generate_locomotion_circuit(cfg.segments)
    return load_connectome(cfg.connectome)


def _dims(cfg: ExperimentConfig) -> tuple[int, int]:
    if cfg.task.name == "mnist":
        return 784, 10
    return cfg.task.swimmer.obs_dim, cfg.task.swimmer.action_dim


def build_arm(cfg: ExperimentConfig, provenance: Provenance, kind: NeuronModelKind, seed: int, connectome=None):
    """Topology and initial genome of one arm for one seed."""
    c = connectome if connectome is not None else _connectome(cfg)
    obs_dim, action_dim = _dims(cfg)
    io_spec: IoSpec = locomotion_io(c, obs_dim, action_dim, cfg.substeps)
    if provenance is Provenance.EXACT:
        return build_exact(c, kind, io_spec, seed=seed)
    if provenance is Provenance.STAT_MATCHED:
        return build_stat_matched(stats(c), io_spec, seed, kind)
    if provenance is Provenance.FULLY_CONNECTED:
        return build_fully_connected(c.n_neurons, io_spec, seed, kind)
    return build_random_sparse(c.n_neurons, io_spec, seed, kind)


def make_task(cfg: ExperimentConfig, spec, dataset=None):
    if cfg.task.name == "swimmer":
        return SwimmerTask(spec, cfg.task.swimmer)
    if cfg.task.name == "mnist":
        data = dataset if dataset is not None else mnist_load_dir(cfg.task.data_dir, cfg.task.split)
        return MnistTask(spec, data, cfg.task.subset_size, cfg.task.subset_seed)
    return QuadraticTask(cfg.task.dim, np.full(cfg.task.dim, cfg.task.target))


def resolve_workers(cfg: ExperimentConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer") from None
        if value < 1:
            raise ConfigError(f"{WORKERS_ENV} must be >= 1")
        return value
    return cfg.workers


# -- running ----------------------------------------------------------------------


@dataclass
class SeedResult:
    arm: str
    seed: int
    generations: int
    initial_mean: float
    final_best: float
    final_mean: float
    seconds: float = 0.0
    error: str | None = None


@dataclass
class RunSummary:
    """Per-arm results; statistics are recomputable from the curve files."""

    results: list[SeedResult]
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return all(r.error is None for r in self.results)

    def arms(self) -> list[str]:
        return list(dict.fromkeys(r.arm for r in self.results))

    def final(self, arm: str) -> np.ndarray:
        return np.array([r.final_best for r in self.results if r.arm == arm and r.error is None])

    def initial(self, arm: str) -> np.ndarray:
        return np.array([r.initial_mean for r in self.results if r.arm == arm and r.error is None])

    def table(self) -> str:
        lines = [f"{'arm':<34} {'seeds':>5} {'initial mean':>14} {'final (mean +- std)':>26}"]
        for arm in self.arms():
            f, i = self.final(arm), self.initial(arm)
            if len(f) == 0:
                lines.append(f"{arm:<34} {0:>5} {'failed':>14}")
                continue
            lines.append(f"{arm:<34} {len(f):>5} {np.mean(i):>14.6g} {np.mean(f):>12.6g} +- {np.std(f):<10.4g}")
        lines.append(f"wall clock: {self.seconds:.1f} s")
        return "\n".join(lines)


def _fmt(x: float) -> str:
    if math.isfinite(x):
        return repr(float(x))
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def result_from_curve(arm: str, seed: int, path: str) -> SeedResult:
    rows = read_curve_csv(path)
    return SeedResult(arm, seed, len(rows), rows[0]["mean"], rows[-1]["best"], rows[-1]["mean"])


def summary_csv(results: list[SeedResult]) -> str:
    """Per-seed rows, then one aggregate row per arm (seed column ``all``)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["arm", "seed", "generations", "initial_mean", "final_best", "final_mean", "final_best_std"])
    arms = list(dict.fromkeys(r.arm for r in results))
    for r in results:
        w.writerow([r.arm, r.seed, r.generations, _fmt(r.initial_mean), _fmt(r.final_best), _fmt(r.final_mean), ""])
    for arm in arms:
        rs = [r for r in results if r.arm == arm]
        fb = np.array([r.final_best for r in rs])
        w.writerow(
            [
                arm,
                "all",
                rs[0].generations if len({r.generations for r in rs}) == 1 else "",
                _fmt(float(np.mean([r.initial_mean for r in rs]))),
                _fmt(float(np.mean(fb))),
                _fmt(float(np.mean([r.final_mean for r in rs]))),
                _fmt(float(np.std(fb))),
            ]
        )
    return buf.getvalue()


def _write(path: str, data, mode="w") -> None:
    # write-then-rename so an interrupted run never leaves a torn file
    tmp = path + ".tmp"
    with open(tmp, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


def _train(run: TrainingRun, task, generations: int, workers: int, arm_dir: str, seed: int, log) -> TrainingRun:
    curve_path = os.path.join(arm_dir, f"curve_{seed}.csv")
    ckpt_path = os.path.join(arm_dir, f"checkpoint_{seed}.bin")
    while run.generation + 1 < generations:
        run = ga_generation(run, task, workers)
        _write(ckpt_path, checkpoint_save(run), "wb")
        _write(curve_path, curve_csv(run))
        if log is not None:
            best, mean = run.curve[-1][:2]
            log(f"  gen {run.generation:4d}  best {best:.6g}  mean {mean:.6g}")
    return run


def run_arm_seed(
    cfg: ExperimentConfig,
    provenance: Provenance,
    kind: NeuronModelKind,
    seed: int,
    workers: int = 1,
    connectome=None,
    dataset=None,
    log=None,
) -> SeedResult:
    """ES pretraining (if configured) then GA for one arm and seed; writes its files."""
    name = arm_name(provenance, kind)
    arm_dir = os.path.join(cfg.output, name)
    os.makedirs(arm_dir, exist_ok=True)
    start = time.perf_counter()
    if cfg.task.name == "quadratic":
        spec, genome = None, bare_genome(cfg.task.dim)
    else:
        spec, genome = build_arm(cfg, provenance, kind, seed, connectome)
    task = make_task(cfg, spec, dataset)
    es_best = None
    if cfg.es is not None and cfg.es.epochs > 0:
        es = run_es(genome, replace(cfg.es, seed=seed), task, workers=workers)
        genome = es.theta
        es_best = es.history[-1]
    ga = replace(cfg.ga, seed=seed)
    extra = {"config": render_config(cfg), "arm": name, "seed": seed}
    if es_best is not None:
        extra["es_last_best"] = es_best
    run = init_run(genome, ga, extra)
    run = _train(run, task, ga.generations, workers, arm_dir, seed, log)
    best, mean = run.curve[-1][:2]
    return SeedResult(name, seed, len(run.curve), run.curve[0][1], best, mean, time.perf_counter() - start)


def collect_results(cfg: ExperimentConfig) -> list[SeedResult]:
    """Rebuild per-seed results from the curve files present in the output directory."""
    out = []
    for prov, kind in cfg.arms:
        name = arm_name(prov, kind)
        for seed in cfg.seeds:
            path = os.path.join(cfg.output, name, f"curve_{seed}.csv")
            if os.path.isfile(path):
                out.append(result_from_curve(name, seed, path))
    return out


def write_summary(cfg: ExperimentConfig, results: list[SeedResult]) -> None:
    _write(os.path.join(cfg.output, "summary.csv"), summary_csv(results))


def run_experiment(cfg: ExperimentConfig, log=None) -> RunSummary:
    """Train every arm for every seed (seeds in order) and write all artifacts.

    A failing (arm, seed) keeps its last checkpoint, is reported in the
    summary's ``error`` field, and does not stop the remaining work.
    """
    check_files(cfg)
    workers = resolve_workers(cfg)
    os.makedirs(cfg.output, exist_ok=True)
    _write(os.path.join(cfg.output, "config.ini"), render_config(cfg))
    connectome = _connectome(cfg) if cfg.task.name != "quadratic" else None
    dataset = mnist_load_dir(cfg.task.data_dir, cfg.task.split) if cfg.task.name == "mnist" else None
    start = time.perf_counter()
    results, timing = [], []
    for prov, kind in cfg.arms:
        for seed in cfg.seeds:
            name = arm_name(prov, kind)
            if log is not None:
                log(f"{name} seed {seed}")
            try:
                r = run_arm_seed(cfg, prov, kind, seed, workers, connectome, dataset, log)
            except Exception as e:  # noqa: BLE001 - reported per seed, run continues
                r = SeedResult(name, seed, 0, math.nan, math.nan, math.nan, error=f"{type(e).__name__}: {e}")
                if log is not None:
                    log(f"  failed: {r.error}")
            results.append(r)
            timing.append((name, seed, r.seconds))
    write_summary(cfg, [r for r in results if r.error is None])
    _write(
        os.path.join(cfg.output, "timing.csv"),
        "arm,seed,seconds\n" + "".join(f"{a},{s},{t:.3f}\n" for a, s, t in timing),
    )
    return RunSummary(results, time.perf_counter() - start)


def resume(checkpoint_path: str, log=None, generations: int | None = None) -> tuple[ExperimentConfig, SeedResult]:
    """Continue one (arm, seed) from its checkpoint to the configured generation count.

    The run directory's summary is rebuilt from all curve files afterwards.
    """
    with open(checkpoint_path, "rb") as fh:
        run = checkpoint_load(fh.read())
    if "config" not in run.extra:
        raise ConfigError("checkpoint carries no experiment config")
    cfg = parse_config(run.extra["config"])
    arm_dir = os.path.dirname(os.path.abspath(checkpoint_path))
    cfg = replace(cfg, output=os.path.dirname(arm_dir))
    check_files(cfg)
    prov_name, _, kind_name = run.extra["arm"].partition("-")
    prov, kind = Provenance(prov_name), NeuronModelKind(kind_name)
    seed = int(run.extra["seed"])
    start = time.perf_counter()
    if cfg.task.name == "quadratic":
        spec = None
    else:
        spec, _ = build_arm(cfg, prov, kind, seed)
    task = make_task(cfg, spec)
    target = cfg.ga.generations if generations is None else generations
    run = _train(run, task, target, resolve_workers(cfg), arm_dir, seed, log)
    best, mean = run.curve[-1][:2]
    result = SeedResult(run.extra["arm"], seed, len(run.curve), run.curve[0][1], best, mean, time.perf_counter() - start)
    write_summary(cfg, collect_results(cfg))
    return cfg, result
