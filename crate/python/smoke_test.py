"""Smoke test for the wattgan Python extension.

Builds the extension with cargo (unless WATTGAN_SO points at a built
library), copies it next to a temporary `wattgan.so` and exercises the API.
"""

import math
import os
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def build_extension() -> Path:
    override = os.environ.get("WATTGAN_SO")
    if override:
        return Path(override)
    subprocess.run(
        ["cargo", "build", "--release", "-p", "wattgan-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    suffix = {"darwin": "dylib", "win32": "dll"}.get(sys.platform, "so")
    return ROOT / "target" / "release" / f"libwattgan_py.{suffix}"


def load(lib: Path):
    dest = Path(tempfile.mkdtemp(prefix="wattgan-py-"))
    name = "wattgan.pyd" if sys.platform == "win32" else "wattgan.so"
    shutil.copy(lib, dest / name)
    sys.path.insert(0, str(dest))
    import wattgan

    return wattgan


def main() -> None:
    wg = load(build_extension())

    x, y = [0.0, 1.0, 2.0], [0.0, 1.0, 2.0]
    assert wg.dtw_exact(x, y) == 0.0
    assert wg.sdtw(x, y, gamma=0.1) <= 0.0
    assert len(wg.sdtw_grad(x, [0.5, 1.5], gamma=0.1)) == 3
    assert math.isclose(wg.euclidean([1.0, 3.0], [0.0, 0.0]), 5.0)

    readings, labels = wg.synth('{"length": 600, "injections": '
                                '[{"kind": "plateau", "start": 300, "duration": 24, "magnitude": -40}]}')
    assert len(readings) == 600 and sum(labels) == 24
    scaled, lo, hi = wg.normalize(readings[:144])
    assert min(scaled) == -1.0 and max(scaled) == 1.0 and lo < hi
    wins = wg.windows(scaled, 48)
    assert len(wins) == 97 and len(wins[0]) == wg.WINDOW_LEN

    g = wg.Generator(seed=1)
    d = wg.Critic(seed=2)
    z = [[0.1 * ((i + j) % 7 - 3) for j in range(wg.LATENT_DIM)] for i in range(4)]
    fake = g.forward(z, mode="asm")
    assert len(fake) == 4 and all(abs(v) < 1.0 for row in fake for v in row)
    assert len(d.forward(fake, mode="asm")) == 4

    rec = wg.invert(g, wins[:4], steps=20, loss="softdtw", mode="asm", seed=3)
    assert len(rec["z"]) == 4 and len(rec["recon"][0]) == 48
    assert all(math.isfinite(v) for v in rec["losses"])

    gen, critic, losses = wg.train_wgan(wins * 3, epochs=1, batch_size=64, seed=5)
    assert len(losses) == 4 and critic.max_abs_param() <= 0.01 + 1e-12

    points = wg.critical_points([0, 1, 2], [0.5, 2.0, 3.0], threshold=1.0)
    assert points == [25, 26]
    curve = wg.kde_curve(points, 60)
    assert max(curve) == 1.0
    assert 25 in wg.predict(curve, 0.5)

    m = wg.match_events([100], [110], r_t=12)
    assert (m["tp"], m["fn"], m["fp"]) == (1, 0, 0) and m["f1"] == 1.0

    try:
        g.forward(z, mode="bogus")
    except ValueError:
        pass
    else:
        raise AssertionError("invalid mode accepted")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
