"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one row per kernel with the best-of-N wall time of each backend and
the speedup. Also times one training epoch end to end under each backend.
"""

import argparse
import timeit

import numpy as np

from lesionkit import kernels
from lesionkit.classifier import LabeledImages, ReferenceCnn, TrainConfig, train


def cases():
    rng = np.random.default_rng(0)
    img = rng.random((128, 128, 3))
    theta = np.deg2rad(17.0)
    m = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]) * 1.1
    off = np.array([3.2, -4.7])
    x = rng.standard_normal((10, 64, 64, 16)).astype(np.float32)
    cols = rng.standard_normal((10 * 64 * 64, 16 * 9)).astype(np.float32)
    act = np.maximum(x, 0)
    pooled, idx = kernels.backend_module("python").maxpool2x2(act)
    inten = img.mean(axis=2)
    cy, cx = np.meshgrid((np.arange(6) + 0.5) * 128 / 6 - 0.5, (np.arange(7) + 0.5) * 128 / 7 - 0.5,
                         indexing="ij")
    centers = np.stack([np.full(cy.size, 0.5), cy.ravel(), cx.ravel()], axis=1)
    step = float(np.sqrt(128 * 128 / 42))
    return {
        "warp_bilinear 128x128x3": lambda k: k.warp_bilinear(img, m, off, 0.0),
        "im2col3x3 10x64x64x16": lambda k: k.im2col3x3(x),
        "col2im3x3 10x64x64x16": lambda k: k.col2im3x3(cols, 10, 64, 64, 16),
        "maxpool2x2 10x64x64x16": lambda k: k.maxpool2x2(act),
        "maxpool2x2_backward": lambda k: k.maxpool2x2_backward(pooled, idx, 64, 64),
        "slic_assign 128x128, 42 centers": lambda k: k.slic_assign(inten, centers, step, 0.1, 2 * step),
    }


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels are not built; only the NumPy fallback is available")
    print(f"{'kernel':34s}" + "".join(f"{b:>12s}" for b in backends) + "   speedup")
    for name, fn in cases().items():
        times = [best_of(lambda: fn(kernels.backend_module(b)), args.repeat) for b in backends]
        speed = f"{times[0] / times[-1]:8.1f}x" if len(times) > 1 else ""
        print(f"{name:34s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times) + "  " + speed)

    rng = np.random.default_rng(1)
    labels = np.arange(40) % 2
    images = np.clip(np.where(labels == 1, 0.9, 0.1)[:, None, None, None]
                     + 0.05 * rng.standard_normal((40, 64, 64, 3)), 0, 1).astype(np.float32)
    data = LabeledImages(images, labels, ("dark", "bright"))
    model = ReferenceCnn.create(data.class_names, (64, 64, 3), seed=0)
    times = []
    for b in backends:
        kernels.set_backend(b)
        times.append(best_of(lambda: train(model, data, None, TrainConfig(epochs=1)), max(1, args.repeat // 2)))
    speed = f"{times[0] / times[-1]:8.1f}x" if len(times) > 1 else ""
    print(f"{'train epoch, 40 images 64x64':34s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
          + "  " + speed)


if __name__ == "__main__":
    main()
