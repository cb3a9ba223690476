"""MNIST IDX loading, the task contract, and batched fitness evaluation."""

import gzip
import struct
from dataclasses import replace

import numpy as np
import pytest

from nema.connectome import generate_locomotion_circuit
from nema.envs import (
    FAILURE,
    EpisodeDone,
    IdxFormatError,
    MnistDataset,
    MnistTask,
    QuadraticTask,
    SwimmerConfig,
    SwimmerTask,
    accuracy,
    mnist_dump,
    mnist_fitness,
    mnist_load,
    mnist_load_dir,
    quadratic_task,
)
from nema.envs.swimmer import advance, observe, rest_state
from nema.evolution import mutate
from nema.network import IoSpec, PolicyBatch, bare_genome, build_exact, build_fully_connected, locomotion_io
from nema.neurons import NeuronModelKind


def idx_images(pixels: np.ndarray, magic=0x803) -> bytes:
    return struct.pack(">IIII", magic, len(pixels), 28, 28) + pixels.astype(np.uint8).tobytes()


def idx_labels(labels, magic=0x801) -> bytes:
    return struct.pack(">II", magic, len(labels)) + bytes(labels)


def synthetic(n=40, seed=0) -> MnistDataset:
    rng = np.random.default_rng(seed)
    pix = rng.integers(0, 256, size=(n, 784))
    return mnist_load(idx_images(pix), idx_labels(rng.integers(0, 10, n).tolist()))


class TestIdx:
    def test_header_magic(self):
        assert idx_images(np.zeros((1, 784)))[:4] == bytes([0, 0, 8, 3])
        with pytest.raises(IdxFormatError, match="magic 0x00000801 at offset 0"):
            mnist_load(idx_images(np.zeros((1, 784)), magic=0x801), idx_labels([0]))

    def test_single_zero_image(self):
        d = mnist_load(idx_images(np.zeros((1, 784))), idx_labels([7]))
        assert len(d) == 1 and d.labels.tolist() == [7] and not d.images.any()

    def test_full_intensity_is_one(self):
        d = mnist_load(idx_images(np.full((1, 784), 255)), idx_labels([1]))
        assert np.all(d.images == 1.0)

    def test_truncated_payload(self):
        blob = idx_images(np.zeros((2, 784)))[:-10]
        with pytest.raises(IdxFormatError, match=f"offset {len(blob)}"):
            mnist_load(blob, idx_labels([0, 1]))

    def test_truncated_header(self):
        with pytest.raises(IdxFormatError, match="offset"):
            mnist_load(b"\x00\x00\x08\x03\x00", idx_labels([0]))

    def test_trailing_bytes(self):
        with pytest.raises(IdxFormatError, match="trailing"):
            mnist_load(idx_images(np.zeros((1, 784))) + b"\x00", idx_labels([0]))

    def test_count_mismatch(self):
        with pytest.raises(IdxFormatError, match="does not match"):
            mnist_load(idx_images(np.zeros((2, 784))), idx_labels([0]))

    def test_wrong_image_size(self):
        blob = struct.pack(">IIII", 0x803, 1, 27, 29) + bytes(27 * 29)
        with pytest.raises(IdxFormatError, match="28x28"):
            mnist_load(blob, idx_labels([0]))

    def test_label_out_of_range(self):
        with pytest.raises(IdxFormatError, match="not a digit"):
            mnist_load(idx_images(np.zeros((1, 784))), idx_labels([12]))

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        pix = rng.integers(0, 256, size=(5, 784))
        img, lab = idx_images(pix), idx_labels([1, 2, 3, 4, 5])
        d = mnist_load(img, lab)
        assert mnist_dump(d) == (img, lab)
        again = mnist_load(*mnist_dump(d))
        np.testing.assert_array_equal(again.images, d.images)

    def test_directory_with_gzip(self, tmp_path):
        img, lab = mnist_dump(synthetic(8))
        with gzip.open(tmp_path / "test-images-idx3-ubyte.gz", "wb") as fh:
            fh.write(img)
        (tmp_path / "test-labels-idx1-ubyte").write_bytes(lab)
        d = mnist_load_dir(str(tmp_path), "test")
        assert len(d) == 8 and d.split == "test"
        with pytest.raises(FileNotFoundError):
            mnist_load_dir(str(tmp_path), "train")

    def test_subset(self):
        d = synthetic(40)
        a, b = d.subset(10, 3), d.subset(10, 3)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert len(a) == 10
        with pytest.raises(ValueError):
            d.subset(41, 0)

    def test_accuracy_ties_go_low(self):
        assert accuracy(np.zeros((4, 10)), np.array([0, 0, 1, 2])) == 0.5


@pytest.fixture(scope="module")
def mnist_net():
    c = generate_locomotion_circuit(2)
    spec, g = build_exact(c, NeuronModelKind.ARTIFICIAL, locomotion_io(c, 784, 10, substeps=3))
    return spec, g


class TestMnistTask:
    def test_constant_output_scores_class_frequency(self, mnist_net):
        spec, g = mnist_net
        data = synthetic(60)
        bias = np.zeros(10)
        bias[4] = 5.0
        g = replace(g, dec_w=np.zeros_like(g.dec_w), dec_b=bias)
        task = MnistTask(spec, data, subset_size=30, seed=2)
        expected = float(np.mean(task.data.labels == 4))
        assert task.evaluate([g])[0] == expected

    def test_lookup_genome_on_one_image(self, mnist_net):
        spec, g = mnist_net
        data = synthetic(10)
        task = MnistTask(spec, data, subset_size=1, seed=0)
        bias = -np.ones(10)
        bias[task.data.labels[0]] = 1.0
        g = replace(g, dec_w=np.zeros_like(g.dec_w), dec_b=bias)
        assert mnist_fitness(g, spec, data, 1, 0) == 1.0

    def test_deterministic_and_bounded(self, mnist_net):
        spec, g = mnist_net
        data = synthetic(50)
        a = mnist_fitness(g, spec, data, 20, 5)
        assert a == mnist_fitness(g, spec, data, 20, 5)
        assert 0.0 <= a <= 1.0

    def test_rejects_wrong_dims(self):
        c = generate_locomotion_circuit(1)
        spec, _ = build_exact(c, NeuronModelKind.ARTIFICIAL, locomotion_io(c, 10, 5))
        with pytest.raises(ValueError, match="784"):
            MnistTask(spec, synthetic(5))

    def test_episode_interface(self, mnist_net):
        spec, _ = mnist_net
        task = MnistTask(spec, synthetic(20), subset_size=20)
        obs = task.reset(seed=1)
        assert obs.shape == (784,)
        label = task._label
        _, reward, done = task.step(np.eye(10)[label])
        assert reward == 1.0 and done
        with pytest.raises(EpisodeDone):
            task.step(np.zeros(10))

    def test_fully_connected_scores(self):
        spec, g = build_fully_connected(20, IoSpec(784, 10, (0,), (0,), substeps=2), seed=0)
        task = MnistTask(spec, synthetic(30), subset_size=30)
        scores = task.scores(g)
        assert scores.shape == (30, 10) and np.all(np.abs(scores) <= 1)


@pytest.fixture(scope="module")
def setup():
    c = generate_locomotion_circuit(6)
    cfg = SwimmerConfig(episode_length=40)
    spec, g = build_exact(c, NeuronModelKind.ALIF, locomotion_io(c, 10, 5, substeps=3))
    genomes = [mutate(g, 0.1, 0.1, np.random.default_rng(i)) for i in range(4)]
    return SwimmerTask(spec, cfg), spec, cfg, genomes


class TestSwimmerTask:
    def test_matches_manual_rollout(self, setup):
        task, spec, cfg, genomes = setup
        fit = task.evaluate(genomes)
        for k, g in enumerate(genomes):
            policy = PolicyBatch(spec, [g])
            net, body, total = policy.reset(), rest_state(cfg), 0.0
            for _ in range(cfg.episode_length):
                net, a = policy.step(net, observe(body))
                body, r = advance(cfg, body, a)
                total += r[0]
            assert fit[k] == pytest.approx(total, abs=1e-15)

    def test_batch_independent(self, setup):
        task, _, _, genomes = setup
        together = task.evaluate(genomes)
        alone = np.concatenate([task.evaluate([g]) for g in genomes])
        np.testing.assert_array_equal(together, alone)

    def test_failed_row_is_sentinel(self, setup):
        task, _, _, genomes = setup
        bad = replace(genomes[1], dec_b=np.full(5, np.nan))
        fit = task.evaluate([genomes[0], bad, genomes[2]])
        assert fit[1] == FAILURE
        assert fit[0] == task.evaluate([genomes[0]])[0]

    def test_dimension_check(self):
        c = generate_locomotion_circuit(1)
        spec, _ = build_exact(c, NeuronModelKind.ALIF, locomotion_io(c, 4, 5))
        with pytest.raises(ValueError, match="does not fit"):
            SwimmerTask(spec)

    def test_empty(self, setup):
        assert setup[0].evaluate([]).shape == (0,)


class TestQuadratic:
    def test_optimum(self):
        target = np.arange(4.0)
        task = quadratic_task(4, target)
        assert task.evaluate([bare_genome(4).unflatten(target)])[0] == 0.0

    def test_monotone_in_distance(self):
        task = QuadraticTask(3)
        direction = np.array([1.0, -2.0, 0.5])
        vals = [task.fitness(r * direction) for r in np.linspace(3, 0, 20)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_single_step_episode(self):
        task = QuadraticTask(2, [1.0, 1.0])
        assert task.reset().shape == (0,)
        _, reward, done = task.step(np.array([1.0, 3.0]))
        assert (reward, done) == (-4.0, True)
        with pytest.raises(EpisodeDone):
            task.step(np.zeros(2))

    def test_bad_target(self):
        with pytest.raises(ValueError):
            QuadraticTask(3, [0.0, 1.0])
        with pytest.raises(ValueError):
            QuadraticTask(0)
