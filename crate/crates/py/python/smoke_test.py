"""Smoke test for the sjbench extension module.

Build and install first, e.g. `maturin develop --release` from crates/py,
then run `python python/smoke_test.py`.
"""

import os
import tempfile

import sjbench


def check(cond, msg):
    if not cond:
        raise SystemExit(f"FAIL: {msg}")


def main():
    h = w = 12
    region = [(r, c) for r in range(4, 8) for c in range(4, 8)]
    model = sjbench.Model.region_mean(region)
    img = sjbench.Image.random(h, w, 3)
    check(img.height == h and img.channels == 3, "image shape")

    oracle = sjbench.SaliencyMap(h, w, [1.0 if (i // w, i % w) in region else 0.0 for i in range(h * w)])
    xs, ys, ins = sjbench.insertion(model, img, oracle, step=1 / (h * w))
    check(len(xs) == h * w + 1 and xs[-1] == 1.0, "insertion grid")
    _, _, dele = sjbench.deletion(model, img, oracle, baseline="blur")
    check(ins > dele, f"insertion {ins} vs deletion {dele}")

    occ = sjbench.occlusion(model, sjbench.Image.filled(h, w, 3, 1.0), window=1, stride=1)
    check(all((occ.get(r, c) == 1.0) == ((r, c) in region) for r in range(h) for c in range(w)), "occlusion")
    rise = sjbench.rise(model, img, n_masks=500, seed=1)
    check(rise.postprocessed and max(rise.data()) == 1.0, "rise map")
    check(sjbench.pointing_game(oracle, [(0, 4, 4, 7, 7)]), "pointing")

    check(sjbench.average_drop(0.8, 0.4) == (0.5, False), "average drop")
    check(abs(sjbench.spearman([1, 2, 3, 4], [1, 3, 2, 4]) - 0.8) < 1e-12, "spearman")
    r = sjbench.road_score(model, img, oracle, noise_std=0.0)
    check(0.0 <= r <= 1.0, "road")

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.smap")
        rise.save(path)
        check(sjbench.SaliencyMap.load(path).data() == rise.data(), "smap round trip")

    try:
        sjbench.average_drop(0.0, 0.5)
    except ValueError:
        pass
    else:
        raise SystemExit("FAIL: zero original score accepted")

    print(f"sjbench {sjbench.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
