#!/usr/bin/env python3
"""Build the otex extension module and run a quick end-to-end check.

Usage: python3 python/smoke_test.py
"""

import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def build_module(workdir: Path) -> Path:
    subprocess.run(
        ["cargo", "build", "-p", "otex-py", "--release"],
        cwd=REPO,
        check=True,
    )
    built = REPO / "target" / "release" / "libotex.so"
    target = workdir / "otex.so"
    shutil.copyfile(built, target)
    return target


def main() -> int:
    workdir = Path(tempfile.mkdtemp(prefix="otex-smoke-"))
    build_module(workdir)
    sys.path.insert(0, str(workdir))
    import otex

    # Deterministic seeded noise.
    x = otex.Image.noise(48, 48, seed=7)
    assert (x.height, x.width) == (48, 48)
    assert x.data() == otex.Image.noise(48, 48, seed=7).data()

    # Synthesis is reproducible per seed and traces every iteration.
    y1, trace = otex.synthesize(x, method="nn", scales=2, iters=3, subsample=1.0, seed=3)
    y2, _ = otex.synthesize(x, method="nn", scales=2, iters=3, subsample=1.0, seed=3)
    assert y1.data() == y2.data()
    assert len(trace) == 2 * 3
    assert all(0.0 <= row[2] <= 1.0 for row in trace)

    # Optimal-transport matching drives match cardinality high at small eps.
    y_ot, trace_ot = otex.synthesize(
        x, method="ot", scales=2, iters=3, subsample=1.0, eps=0.001, sweeps=5, seed=3
    )
    final_mc = trace_ot[-1][2]
    assert final_mc > 0.9, f"final OT match cardinality {final_mc}"

    # An image is never innovative against itself; a fresh noise image is.
    levels, mean_self = otex.innovation_capacity(x, x, scales=2, patch=4)
    assert mean_self == 0.0 and len(levels) == 3
    other = otex.Image.noise(48, 48, seed=99)
    _, mean_other = otex.innovation_capacity(x, other, scales=2, patch=4)
    assert mean_other > 0.5

    # Tile map of a shifted copy renders at synthesis size.
    render = otex.tile_map_render(x, x.shift(8, 8), patch=4)
    assert (render.height, render.width) == (48, 48)

    # Gram baseline runs end to end.
    g = otex.gram_synthesize(x, filters=8, steps=15, scales=2, seed=1)
    assert (g.height, g.width) == (48, 48)

    # PNG round trip.
    png = workdir / "out.png"
    y1.save(str(png))
    back = otex.Image.load(str(png))
    assert (back.height, back.width) == (48, 48)

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
