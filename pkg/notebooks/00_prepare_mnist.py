"""Build the bundled MNIST IDX files from the ``mnist`` npm package.

The npm package (MIT licence, version 1.1.0) ships 10,000 real MNIST
digits as JSON arrays of pixel intensities rounded to three decimals. We
turn them back into bytes with ``round(x * 255)``, shuffle each digit class
with a fixed seed, and write an 8,000-image ``train`` split and a
2,000-image ``test`` split as gzipped IDX files under ``data/mnist``.

Fetch the package first, e.g. ``npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz``,
then run ``python3 notebooks/00_prepare_mnist.py package/src/digits``.

If you have the original LeCun files, copy them into ``data/mnist`` as
``train-images-idx3-ubyte.gz`` etc. instead; the loader accepts both.
"""

import gzip
import json
import os
import sys

import numpy as np

from nema.envs.mnist import MnistDataset, mnist_dump

src = sys.argv[1] if len(sys.argv) > 1 else "package/src/digits"
out = sys.argv[2] if len(sys.argv) > 2 else os.path.join(os.path.dirname(__file__), "..", "data", "mnist")

# %% load every class and quantize back to bytes
images, labels = [], []
for digit in range(10):
    with open(os.path.join(src, f"{digit}.json")) as fh:
        flat = np.asarray(json.load(fh)["data"], dtype=float)
    pix = np.rint(flat.reshape(-1, 784) * 255).astype(np.uint8)
    images.append(pix)
    labels.append(np.full(len(pix), digit))
    print(f"digit {digit}: {len(pix)} images")

# %% stratified 80/20 split, shuffled with a fixed seed
rng = np.random.default_rng(0)
train_idx, test_idx = [], []
offset = 0
for pix in images:
    order = offset + rng.permutation(len(pix))
    cut = int(round(0.8 * len(pix)))
    train_idx.append(order[:cut])
    test_idx.append(order[cut:])
    offset += len(pix)
all_pix = np.concatenate(images)
all_lab = np.concatenate(labels)

# %% write gzipped IDX files (mtime pinned so the bytes are reproducible)
os.makedirs(out, exist_ok=True)
for split, idx in (("train", train_idx), ("test", test_idx)):
    idx = rng.permutation(np.concatenate(idx))
    data = MnistDataset(all_pix[idx] / 255.0, all_lab[idx], split)
    img, lab = mnist_dump(data)
    for kind, stem, blob in (("images", "idx3", img), ("labels", "idx1", lab)):
        path = os.path.join(out, f"{split}-{kind}-{stem}-ubyte.gz")
        with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as fh:
            fh.write(blob)
    print(f"{split}: {len(idx)} images, label counts {np.bincount(data.labels, minlength=10).tolist()}")
