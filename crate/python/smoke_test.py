"""Smoke test for the spa_oximetry extension module.

Build and run from the repository root:

    cargo build --release -p spa-python --features extension-module
    cp target/release/libspa_oximetry.so python/spa_oximetry.so
    PYTHONPATH=python python3 python/smoke_test.py
"""

import os
import sys
import tempfile

import spa_oximetry as so


def check(cond, what):
    if not cond:
        print(f"FAIL: {what}")
        sys.exit(1)
    print(f"ok: {what}")


def main():
    spectrum = so.Spectrum.bundled()
    lo, hi = spectrum.range()
    check(lo <= 700 and hi >= 850, "bundled spectrum covers 700-850 nm")
    check(spectrum.absorption(850, "hbo2") > spectrum.absorption(850, "hb"), "HbO2 dominates at 850 nm")
    check(abs(so.sample_hg(0.9, 0.5) - 0.9855) < 1e-12, "HG closed form")

    phantom = so.Phantom(seed=1, grid=32, mask_rows=12)
    m700 = phantom.simulate(700, photons=5000, seed=1)
    m850 = phantom.simulate(850, photons=5000, seed=2)
    check(abs(m700.deposited + m700.escaped - 1.0) < 0.01, "weight balance")
    img700, img850 = so.clean_pair(m700, m850, mask_rows=12)
    mask = phantom.vessel_mask()
    gt_so2 = phantom.gt_so2()
    so2, invalid = so.lu_map(img700, img850, mask)
    err = so.mse_in_mask(so2, gt_so2, mask)
    print(f"   linear unmixing sO2 MSE in vessels: {err:.4f} ({invalid} invalid pixels)")
    check(0.0 <= err <= 1.0, "linear unmixing runs")

    seg = [[1.0 if v else 0.0 for v in row] for row in mask]
    noisy = [[v + 5.0 for v in row] for row in so2]
    a = so.hybrid_loss(seg, mask, so2, gt_so2)
    b = so.hybrid_loss(seg, mask, [[s if m else n for n, s, m in zip(nr, sr, mr)] for nr, sr, mr in zip(noisy, so2, mask)], gt_so2)
    check(a == b, "hybrid loss ignores sO2 outside vessels")

    with tempfile.TemporaryDirectory() as tmp:
        root = os.path.join(tmp, "ds")
        writer = so.DatasetWriter(root)
        writer.write_sample("exp_0", img700, img850, seg, gt_so2, split="test")
        ds = writer.commit()
        pred = os.path.join(tmp, "pred")
        so.write_prediction(pred, "exp_0", seg, so2)
        report = so.evaluate(root, pred)
        check(report.splitlines()[0].startswith("sample_id,dice_loss"), "evaluation report")
        check(ds.read_sample("exp_0")["provenance"] == "experimental-import", "dataset round trip")

    print("smoke test passed")


if __name__ == "__main__":
    main()
