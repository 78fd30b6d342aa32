"""End-to-end throughput measurement: preprocess, forward, descriptor, per frame."""

import os
import platform
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .descriptor import extract_descriptor
from .modelio import default_preprocess, open_model, preprocess

THREADS_ENV = "FUSECAT_THREADS"


def default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def cpu_description():
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine()


@dataclass
class ModelBench:
    code: str
    scale: int
    frames: int
    wall_seconds: float
    fps: float
    median_fps: float
    mean_fps: float
    layer_seconds: dict = field(default_factory=dict)


@dataclass
class BenchReport:
    models: list
    environment: dict

    def to_dict(self):
        return {"models": [asdict(m) for m in self.models], "environment": self.environment}

    def fps(self, code):
        for m in self.models:
            if m.code == code:
                return m.fps
        raise KeyError(code)

    def table(self):
        lines = ["code\tscale\tframes\twall_s\tfps\tmedian_fps\tmean_fps"]
        for m in self.models:
            lines.append(f"{m.code}\t{m.scale}\t{m.frames}\t{m.wall_seconds:.4f}\t{m.fps:.3f}"
                         f"\t{m.median_fps:.3f}\t{m.mean_fps:.3f}")
        return "\n".join(lines)


def bench_image(seed=0, size=256):
    return np.random.default_rng(seed).integers(0, 256, (size, size, 3), dtype=np.uint8)


def bench_model(net, weights, iterations=5, warmup=1, threads=1, image=None, label=None):
    """Time ``iterations`` frames after ``warmup`` untimed ones.

    With ``threads > 1`` frames run concurrently on a worker pool; BLAS
    itself is pinned to one thread either way so the worker count is the
    only source of parallelism.
    """
    from threadpoolctl import threadpool_limits

    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    image = bench_image() if image is None else image
    prep = default_preprocess(net)
    taps = [tuple(net.meta["best_tap"])] if "best_tap" in net.meta else [net.layers[-1].name]
    layer_seconds = {}

    def frame(timings=None):
        t0 = time.perf_counter()
        x = preprocess(image, prep)
        extract_descriptor(net, weights, x, taps, timings=timings)
        return time.perf_counter() - t0

    with threadpool_limits(limits=1):
        for _ in range(warmup):
            frame()
        start = time.perf_counter()
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                times = list(pool.map(lambda _: frame(), range(iterations)))
        else:
            times = [frame(layer_seconds) for _ in range(iterations)]
        wall = time.perf_counter() - start
    wall = max(wall, 1e-9)
    per_layer = {k: v / iterations for k, v in layer_seconds.items()}
    return ModelBench(label or net.meta.get("code", net.meta.get("arch", "net")),
                      net.input_shape[1], iterations, wall, iterations / wall,
                      1.0 / statistics.median(times), iterations / sum(times), per_layer)


def bench(models, iterations=5, warmup=1, threads=None, seed=0):
    """Benchmark each model reference in turn; weights are built before timing starts."""
    threads = threads or default_threads()
    results = []
    for ref in models:
        if isinstance(ref, tuple):
            net, weights = ref
            label = None
        else:
            net, weights = open_model(ref, seed)
            label = str(ref)
        results.append(bench_model(net, weights, iterations, warmup, threads,
                                   bench_image(seed), label))
        del weights
    env = {"cpu": cpu_description(), "threads": threads, "python": platform.python_version(),
           "numpy": np.__version__}
    return BenchReport(results, env)
