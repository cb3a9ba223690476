"""Acceptance criteria 1-10, one test each.

Every test prints a single ``PASS``/``FAIL`` line (also repeated in the pytest
terminal summary) before asserting. The slow criteria run the shipped desk
presets end to end and are marked ``slow``; deselect them with ``-m "not slow"``.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from conftest import VERDICTS
from nema.connectome import generate_locomotion_circuit
from nema.envs import QuadraticTask, SwimmerConfig, SwimmerTask
from nema.envs.swimmer import SwimmerState, advance, kinetic_energy, rest_state
from nema.evolution import (
    DESK_GA,
    EsConfig,
    GaConfig,
    checkpoint_load,
    checkpoint_save,
    evaluate_population,
    init_run,
    mutate,
    run_es,
    run_ga,
    substream,
)
from nema.experiments import arm_name, load_config, run_experiment
from nema.network import Provenance, bare_genome, build_exact, dale_violations, locomotion_io
from nema.neurons import AlifParams, IzhikevichParams, NeuronModelKind, NeuronState, alif_step, izhikevich_step, reset_state

DATA = Path(__file__).resolve().parents[1] / "data" / "mnist"
SWIM = SwimmerConfig(episode_length=200)
K = NeuronModelKind


def verdict(number: int, title: str, ok: bool, detail: str, seconds: float) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail}; {seconds:.1f} s)"
    VERDICTS.append(line)
    print(line)
    assert ok, line


def desk_swimmer_arm(kind, substeps=5):
    c = generate_locomotion_circuit(6)
    spec, g = build_exact(c, kind, locomotion_io(c, SWIM.obs_dim, SWIM.action_dim, substeps=substeps))
    return SwimmerTask(spec, SWIM), spec, g


def test_criterion_01_dale_conservation():
    t0 = time.perf_counter()
    task, spec, g = desk_swimmer_arm(K.ALIF)
    signs0 = g.signs.copy()
    seen, violations = 0, 0

    def check(run):
        nonlocal seen, violations
        for genome in run.population:
            violations += dale_violations(spec, genome) + int(np.count_nonzero(genome.signs != signs0))
            seen += 1

    run = run_ga(init_run(g, DESK_GA), task, generations=50, callback=check)
    check(run)
    ok = violations == 0 and run.generation == 49
    verdict(1, "Dale's law conserved", ok, f"{violations} violations over {seen} genomes x {spec.n_synapses} synapses", time.perf_counter() - t0)


def test_criterion_02_izhikevich_oracle():
    t0 = time.perf_counter()
    p = IzhikevichParams(a=0.02, b=0.25, dt_scale=1.0)
    state = NeuronState(np.array([-65.0]), np.array([-16.25]), np.zeros(1, np.int8), np.zeros(1))
    new, _ = izhikevich_step(state, p, np.zeros(1))
    dv, du = abs(new.v[0] + 64.75), abs(new.u[0] + 16.25)
    verdict(2, "Izhikevich hand oracle", dv < 1e-9 and du < 1e-9, f"|dv| = {dv:.1e}, |du| = {du:.1e}", time.perf_counter() - t0)


def test_criterion_03_alif_adaptation():
    t0 = time.perf_counter()
    p = AlifParams()
    state, times = reset_state(K.ALIF, 1, p), []
    for t in range(200):
        state, s = alif_step(state, p, np.array([0.3]))
        if s[0]:
            times.append(t)
    isi = np.diff(times)
    ok = len(isi) >= 2 and bool(np.all(np.diff(isi) >= 0)) and bool(np.any(np.diff(isi) > 0))
    verdict(3, "ALIF inter-spike intervals lengthen", ok, f"intervals {isi.tolist()}", time.perf_counter() - t0)


def test_criterion_04_es_quadratic():
    t0 = time.perf_counter()
    task, dists = QuadraticTask(5), []
    for seed in range(3):
        theta0 = np.random.default_rng(seed).normal(size=5)
        theta0 /= np.linalg.norm(theta0)
        cfg = EsConfig(population_size=40, sigma_connectome=0.1, lr_connectome=0.1, epochs=500, seed=seed)
        state = run_es(bare_genome(5).unflatten(theta0), cfg, task)
        dists.append(float(np.linalg.norm(state.theta.flatten())))
    ok = all(d < 1e-2 for d in dists)
    verdict(4, "ES reaches the quadratic optimum", ok, "distances " + ", ".join(f"{d:.2e}" for d in dists), time.perf_counter() - t0)


def test_criterion_05_elite_monotonicity():
    t0 = time.perf_counter()
    drops = 0
    for seed in range(5):
        target = np.random.default_rng(100 + seed).uniform(-1, 1, 10)
        cfg = GaConfig(population_size=50, elite_size=4, seed=seed)
        run = run_ga(init_run(bare_genome(10), cfg), QuadraticTask(10, target), generations=200)
        best = np.array([row[0] for row in run.curve])
        drops += int(np.count_nonzero(np.diff(best) < 0))
        assert len(best) == 200
    verdict(5, "GA best fitness never decreases", drops == 0, f"{drops} decreases over 5 x 200 generations", time.perf_counter() - t0)


def _initial_means(summary, arms):
    return {arm: float(np.mean(summary.initial(arm))) for arm in arms}


@pytest.mark.slow
def test_criterion_06_realism_ordering(tmp_path):
    t0 = time.perf_counter()
    # generation-0 statistics do not depend on how many generations follow
    cfg = load_config("desk_biophysical_realism", {"experiment.output": str(tmp_path), "ga.generations": "1"})
    summary = run_experiment(cfg)
    names = [arm_name(Provenance.EXACT, k) for k in (K.IZHIKEVICH, K.ALIF, K.ARTIFICIAL)]
    m = _initial_means(summary, names)
    izh, alif, art = (m[n] for n in names)
    ok = summary.ok and izh >= alif >= art
    detail = f"gen-0 means Izhikevich {izh:.4f}, ALIF {alif:.4f}, Artificial {art:.4f}"
    verdict(6, "initial fitness Izhikevich >= ALIF >= Artificial", ok, detail, time.perf_counter() - t0)


@pytest.mark.slow
def test_criterion_07_architecture_ordering(tmp_path):
    t0 = time.perf_counter()
    cfg = load_config(
        "desk_architecture_statistics",
        {"experiment.output": str(tmp_path), "network.provenances": "ExactConnectome, StatMatched, RandomSparse"},
    )
    summary = run_experiment(cfg)
    exact, stat, rand = (arm_name(p, K.ARTIFICIAL) for p in (Provenance.EXACT, Provenance.STAT_MATCHED, Provenance.RANDOM_SPARSE))
    final = {a: float(np.mean(summary.final(a))) for a in (exact, stat, rand)}
    init = _initial_means(summary, (stat, rand))
    ok = summary.ok and final[exact] > final[stat] > final[rand] and init[stat] > init[rand]
    detail = (
        f"final Exact {final[exact]:.4f}, StatMatched {final[stat]:.4f}, RandomSparse {final[rand]:.4f}; "
        f"gen-0 StatMatched {init[stat]:.4f}, RandomSparse {init[rand]:.4f}"
    )
    verdict(7, "Exact > StatMatched > RandomSparse", ok, detail, time.perf_counter() - t0)


@pytest.mark.slow
def test_criterion_08_mnist_ordering(tmp_path):
    t0 = time.perf_counter()
    cfg = load_config("desk_limitations", {"experiment.output": str(tmp_path), "task.data_dir": str(DATA)})
    summary = run_experiment(cfg)
    fc = float(np.mean(summary.final(arm_name(Provenance.FULLY_CONNECTED, K.ARTIFICIAL))))
    exact = float(np.mean(summary.final(arm_name(Provenance.EXACT, K.ARTIFICIAL))))
    ok = summary.ok and fc - exact >= 0.05 and fc - 0.10 >= 0.15
    detail = f"accuracy FullyConnected {fc:.3f}, ExactConnectome {exact:.3f}"
    verdict(8, "MNIST: FullyConnected beats the connectome and chance", ok, detail, time.perf_counter() - t0)


def test_criterion_09_determinism_and_resume():
    t0 = time.perf_counter()
    task, _, g = desk_swimmer_arm(K.ALIF)
    cfg = GaConfig(population_size=50, elite_size=4, seed=9)
    full = run_ga(init_run(g, cfg), task, generations=15)
    half = run_ga(init_run(g, cfg), task, generations=10)
    resumed = run_ga(checkpoint_load(checkpoint_save(half)), task, generations=15)
    same_curve = resumed.curve == full.curve
    genomes = [mutate(g, 0.05, 0.05, substream(0, 0, 0, i)) for i in range(16)]
    one = evaluate_population(genomes, task, workers=1)
    eight = evaluate_population(genomes, task, workers=8)
    same_fit = bool(np.array_equal(one, eight))
    detail = f"resumed curve {'identical' if same_curve else 'differs'}, workers 1 vs 8 {'identical' if same_fit else 'differ'}"
    verdict(9, "bitwise resume and worker invariance", same_curve and same_fit, detail, time.perf_counter() - t0)


def test_criterion_10_swimmer_invariants():
    t0 = time.perf_counter()
    cfg = SwimmerConfig()
    rng = np.random.default_rng(10)

    state = rest_state(cfg, 4)
    rest_ok = True
    for _ in range(1000):
        state, r = advance(cfg, state, np.zeros((4, cfg.joints)))
        rest_ok &= not r.any()
    rest_ok &= not (state.head.any() or state.head_vel.any() or state.theta.any() or state.omega.any())

    theta = 0.3 * rng.normal(size=(1, cfg.links))
    a = SwimmerState(np.zeros((1, 2)), np.zeros((1, 2)), theta, np.zeros((1, cfg.links)))
    b = SwimmerState(np.zeros((1, 2)), np.zeros((1, 2)), -theta, np.zeros((1, cfg.links)))
    flip = np.array([1.0, -1.0])
    err = 0.0
    for _ in range(1000):
        tau = rng.uniform(-1, 1, size=(1, cfg.joints))
        a, _ = advance(cfg, a, tau)
        b, _ = advance(cfg, b, -tau)
        err = max(err, np.abs(a.head - b.head * flip).max(), np.abs(a.theta + b.theta).max())

    s = SwimmerState(
        rng.normal(size=(100, 2)), rng.normal(size=(100, 2)), rng.normal(size=(100, cfg.links)), 10 * rng.normal(size=(100, cfg.links))
    )
    ke, decay_ok = kinetic_energy(cfg, s), True
    for _ in range(100):
        s, _ = advance(cfg, s, np.zeros((100, cfg.joints)))
        new = kinetic_energy(cfg, s)
        decay_ok &= bool(np.all(new <= ke))
        ke = new

    ok = rest_ok and err < 1e-9 and decay_ok
    detail = f"rest fixed point {'exact' if rest_ok else 'broken'}, reflection error {err:.1e}, energy decay {'monotone' if decay_ok else 'violated'}"
    verdict(10, "swimmer physics invariants", ok, detail, time.perf_counter() - t0)
