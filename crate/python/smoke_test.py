"""Smoke test for the rgb2hs extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`
or `pip install crates/python`, then run `python python/smoke_test.py`.
"""

import math
import os
import tempfile

import rgb2hs


def check(cond, msg):
    if not cond:
        raise SystemExit("FAIL: " + msg)


def main():
    # Colorimetry and metrics.
    x, y, z = rgb2hs.spectrum_to_xyz([1.0] * 31)
    check(abs(y - 100.0) < 1e-6, f"equal-energy Y = {y}")
    check(rgb2hs.xyz_to_srgb(0.0, 0.0, 0.0) == (0, 0, 0), "black")
    d = rgb2hs.ciede2000((50.0, 2.6772, -79.7751), (50.0, 0.0, -82.7485))
    check(abs(d - 2.0425) < 1e-4, f"CIEDE2000 pair 1 = {d}")
    check(rgb2hs.plan_tiles(1392, 1300) == (5, 5, 1280, 1280), "tile grid")
    check(len(rgb2hs.wavelengths()) == 31, "wavelengths")

    # Rendering a synthetic split.
    cubes = rgb2hs.synth_dataset(3, 32, 7)
    lo, hi = rgb2hs.compute_stats(cubes[:2])
    pairs = [rgb2hs.render(c, lo, hi) for c in cubes]
    rgb, hs = pairs[0]
    check((rgb.height, rgb.width) == (32, 32), "render size")
    check(len(hs.pixel(3, 4)) == 31, "pixel bands")
    same = rgb2hs.evaluate(hs, hs)
    check(same["rmse"] == 0.0 and abs(same["gfc"] - 1.0) < 1e-9, f"self metrics {same}")

    # Models.
    cfg = rgb2hs.GeneratorConfig(16)
    for k, v in [("base_filters", "4"), ("filter_cap", "8"), ("final_hidden", "8")]:
        cfg.set(k, v)
    check([c.receptive_field() for c in rgb2hs.GeneratorConfig(256).skip_ladder()[:5]] == [1, 3, 7, 15, 31],
          "receptive-field ladder")
    check(rgb2hs.GeneratorConfig(32, skips=2).label() == "2/3x3", "label")
    check(rgb2hs.Discriminator(0).param_count() == 1_573_441, "discriminator size")
    gen = rgb2hs.Generator(cfg, seed=1)
    disc = rgb2hs.Discriminator(seed=1, base_filters=4)

    # A short training run.
    trainer = rgb2hs.Trainer(gen, disc, {"epochs": 2, "d_iters_per_cycle": 2, "g_iters_per_cycle": 1})
    records = trainer.run(pairs[:2])
    check(len(records) == 4 and records[0]["phase"] == "d" and records[2]["phase"] == "g", "loss records")
    g = records[2]
    check(math.isclose(g["g_total"], g["g_adv_loss"] + 100.0 * g["g_l1_loss"], rel_tol=1e-12), "g_total")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "gen.advw")
        trained = trainer.generator
        trained.save(path)
        loaded = rgb2hs.Generator.load(path)
        check(loaded.param_names() == trained.param_names(), "checkpoint names")
        est = loaded.reconstruct(pairs[2][0])
        check((est.height, est.width) == (32, 32), "reconstruction size")
        check(est.data() == trained.reconstruct(pairs[2][0]).data(), "reloaded model differs")
        report = rgb2hs.evaluate(pairs[2][1], est)
        check(all(math.isfinite(report[k]) for k in ("rmse", "rmse_rel", "gfc", "de00")), f"metrics {report}")

        cube_path = os.path.join(tmp, "c.hsi")
        est.write(cube_path)
        check(rgb2hs.SpectralImage.read(cube_path).data() == est.data(), "HSI1 round trip")

    try:
        rgb2hs.SpectralImage(2, 2, [0.0] * 5)
        raise SystemExit("FAIL: bad length accepted")
    except ValueError:
        pass

    check(all(ok for _, _, ok in rgb2hs.gradcheck("layer")), "layer gradient suite")
    check(rgb2hs.cli(["gradcheck", "--scope", "layer"]) == 0, "cli gradcheck")
    print(f"rgb2hs {rgb2hs.__version__}: python smoke test passed")


if __name__ == "__main__":
    main()
