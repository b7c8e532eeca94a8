"""Compare the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json]

Each kernel runs the same deterministic inputs through both backends; the
outputs are checked for equality before any timing is reported.
"""

import argparse
import json
import math
import random
import sys
import timeit

from dronemac.kernels import compiled, pure


def _polygon(rng, n, cx=0.0, cy=0.0, r=1.0):
    """Star-shaped simple polygon with n vertices."""
    angles = sorted(rng.uniform(0, 2 * math.pi) for _ in range(n))
    return [(cx + r * (0.5 + rng.random()) * math.cos(a), cy + r * (0.5 + rng.random()) * math.sin(a)) for a in angles]


def workloads(seed=7):
    rng = random.Random(seed)
    poly = _polygon(rng, 64)
    points = [(rng.uniform(-1.6, 1.6), rng.uniform(-1.6, 1.6)) for _ in range(2000)]
    pairs = [(_polygon(rng, 24, rng.uniform(-2, 2), rng.uniform(-2, 2)), _polygon(rng, 24)) for _ in range(50)]
    image = bytes(rng.getrandbits(8) for _ in range(256 * 256))
    return {
        "point_in_polygon x2000 (64 vertices)": lambda k: [k.point_in_polygon(poly, x, y) for x, y in points],
        "polygons_intersect x50 (24x24)": lambda k: [k.polygons_intersect(a, b) for a, b in pairs],
        "is_simple (64 vertices)": lambda k: k.is_simple(poly),
        "pixelate 256x256 / 16": lambda k: k.pixelate(image, 256, 256, 16),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    status = 0
    for name, fn in workloads().items():
        same = fn(pure) == fn(compiled)
        status |= not same
        t_py = min(timeit.repeat(lambda: fn(pure), number=1, repeat=args.repeat))
        t_c = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat))
        row = {"kernel": name, "python_ms": t_py * 1e3, "cython_ms": t_c * 1e3, "speedup": t_py / t_c, "agree": same}
        if args.json:
            print(json.dumps(row))
        else:
            print(f"{name:40s} python {t_py * 1e3:9.3f} ms  cython {t_c * 1e3:8.3f} ms  x{t_py / t_c:6.1f}  {'agree' if same else 'DISAGREE'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
