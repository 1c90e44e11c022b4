"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (see ``conftest.py``) before asserting, so
the summary lists every criterion even when some fail.
"""

import math
import time
from pathlib import Path

import numpy as np

from tempdepth import io as fio
from tempdepth.diffmask import difference_mask, directional_variance
from tempdepth.geometry import normals_from_depth
from tempdepth.losses import LossConfig, gradcheck_suite, silog, total_loss
from tempdepth.metrics import depth_metrics, qtc, rtc
from tempdepth.synthetic import (
    SceneSpec,
    iou,
    random_box_scene,
    random_camera_shift_scene,
    render_sequence,
)
from tempdepth import temporal as tm

GOLDEN = Path(__file__).parent / "golden"
N_SCENES = 50
# Mean IoU of the default mask pipeline on seeds 0..49 at stride 1 was
# 0.6338 on the first run; frozen at its two-decimal floor as a regression bound.
IOU_BOUND = 0.63
STRIDE_TOLERANCE = 0.15


def box_scene_ious(stride):
    out = []
    for seed in range(N_SCENES):
        f0, f1 = render_sequence(random_box_scene(seed), 2, frame_stride=stride)
        out.append(iou(difference_mask(f0.depth, f1.depth).refined, f1.changed_gt))
    return np.array(out)


def unit_vectors(rng, n):
    v = rng.normal(size=(3, 1, n))
    return v / np.linalg.norm(v, axis=0)


def naive_variance(n0, n1):
    out = np.zeros(n0.shape[2])
    for x in range(n0.shape[2]):
        for k in range(3):
            a, b = n0[k, 0, x], n1[k, 0, x]
            mu = (a + b) / 2
            out[x] += ((a - mu) ** 2 + (b - mu) ** 2) / 2
    return out


def test_1_difference_mask_iou(report_line):
    start = time.perf_counter()
    ious = box_scene_ious(1)
    cam_fracs = []
    for seed in range(N_SCENES):
        f0, f1 = render_sequence(random_camera_shift_scene(seed), 2)
        cam_fracs.append(difference_mask(f0.depth, f1.depth).dynamic_fraction)
    elapsed = time.perf_counter() - start
    ok = ious.mean() >= IOU_BOUND and max(cam_fracs) == 0.0 and elapsed < 5.0
    report_line(ok, "1 difference-mask IoU",
                f"mean IoU {ious.mean():.4f} (bound {IOU_BOUND}, min {ious.min():.4f}), "
                f"camera-shift max dynamic_fraction {max(cam_fracs)}, {elapsed:.2f}s (<5s)")
    assert ok


def test_2_frame_stride_robustness(report_line):
    base = box_scene_ious(1).mean()
    means = {s: box_scene_ious(s).mean() for s in (2, 3)}
    gaps = {s: abs(m - base) for s, m in means.items()}
    ok = all(g <= STRIDE_TOLERANCE for g in gaps.values())
    report_line(ok, "2 frame-stride robustness",
                f"stride1 {base:.4f}, " + ", ".join(
                    f"stride{s} {means[s]:.4f} (|diff| {gaps[s]:.4f})" for s in means)
                + f" (tol {STRIDE_TOLERANCE})")
    assert ok


def test_3_variance_oracle(report_line):
    rng = np.random.default_rng(2024)
    n0, n1 = unit_vectors(rng, 1000), unit_vectors(rng, 1000)
    got = directional_variance(n0, n1)[0]
    loop_err = np.abs(got - naive_variance(n0, n1)).max()
    closed_err = np.abs(got - ((n0 - n1) ** 2).sum(axis=0)[0] / 4).max()
    ok = loop_err < 1e-12 and closed_err < 1e-12
    report_line(ok, "3 variance oracle",
                f"loop max err {loop_err:.2e}, closed-form max err {closed_err:.2e} (<1e-12)")
    assert ok


def test_4_attention_invariants(report_line):
    rng = np.random.default_rng(99)
    worst_row = worst_hull = worst_masked = 0.0
    swap_ok = True
    for i in range(200):
        h, w = rng.integers(1, 5, size=2)
        c = int(rng.integers(1, 5))
        zd0, zd1 = rng.normal(0, 2, (2, c, h, w))
        zn0, zn1 = rng.normal(0, 2, (2, c, h, w))
        mask = rng.integers(0, 2, (h, w))
        wts = tm.AttentionWeights.random(c, seed=i)
        wts.w_q, wts.w_k, wts.w_v = (rng.normal(0, 0.5, (c, c)) for _ in range(3))
        for a, b, na, nb in ((zd0, zd1, zn0, zn1), (zd1, zd0, zn1, zn0)):
            sns = tm.sns_direction(a, b, na, nb, mask, wts)
            ms = tm.ms_direction(a, b, mask, wts)
            for s in (sns.similarity, ms.attention):
                worst_row = max(worst_row, np.abs(s.sum(axis=1) - 1).max())
            for al, val in ((sns.aligned, b), (ms.aligned, ms.value)):
                al, val = tm.flatten(al), tm.flatten(val)
                over = np.maximum(al - val.max(axis=0), val.min(axis=0) - al)
                worst_hull = max(worst_hull, max(over.max(), 0.0))
            masked = mask.reshape(-1) == 0
            if masked.any():
                worst_masked = max(worst_masked,
                                   np.abs(sns.similarity[masked] - 1.0 / (h * w)).max())
        f = tm.sns_forward(zd0, zd1, zn0, zn1, mask, wts) + tm.ms_forward(zd0, zd1, mask, wts)
        g = tm.sns_forward(zd1, zd0, zn1, zn0, mask, wts) + tm.ms_forward(zd1, zd0, mask, wts)
        swap_ok &= all(np.array_equal(f[i], g[j]) for i, j in ((0, 1), (1, 0), (2, 3), (3, 2)))
    ok = worst_row <= 1e-6 and worst_hull <= 1e-6 and worst_masked <= 1e-7 and swap_ok
    report_line(ok, "4 attention invariants",
                f"row-sum err {worst_row:.1e} (<=1e-6), hull excess {worst_hull:.1e} (<=1e-6), "
                f"masked-row err {worst_masked:.1e} (<=1e-7), swap bitwise {swap_ok}")
    assert ok


def test_5_loss_pins(report_line):
    start = time.perf_counter()
    gt = np.random.default_rng(5).uniform(1, 50, (8, 8))
    zero = silog(gt, gt)
    scaled = silog(math.e * gt, gt)
    total = total_loss(1.0, 2.0, 3.0, LossConfig(loss_alpha=10.0)).total
    worst = gradcheck_suite(seed=0, instances=100)
    elapsed = time.perf_counter() - start
    ok = (zero == 0.0 and abs(scaled - 10 * math.sqrt(0.15)) < 1e-9 and total == 51.0
          and max(worst.values()) < 1e-4 and elapsed < 2.0)
    report_line(ok, "5 loss pins",
                f"silog(gt,gt)={zero}, silog(e*gt,gt)={scaled:.12f} vs {10 * math.sqrt(0.15):.12f}, "
                f"total={total}, worst grad rel err {max(worst.values()):.1e} (<1e-4), "
                f"{elapsed:.2f}s (<2s)")
    assert ok


def test_6_metric_pins(report_line):
    rng = np.random.default_rng(6)
    gt = rng.uniform(1, 60, (16, 16))
    m = depth_metrics(1.2 * gt, gt)
    pin_ok = abs(m.abs_rel - 0.2) < 1e-12 and abs(m.delta1 - 1.0) < 1e-12
    k = np.ones((3, 3))
    d2 = np.full((3, 3), 2.0)
    k1 = np.zeros((2, 2))
    k1[1, 0] = 1
    cases_ok = (qtc(d2, d2, k) == 0.0 and rtc(d2, d2, k) == 1.0
                and qtc(d2, np.ones((3, 3)), k) == 0.5
                and qtc(np.full((2, 2), 4.0), np.full((2, 2), 5.0), k1) == 0.25
                and rtc(d2, np.ones((3, 3)), k, 1.25) == 0.0)
    scale_ok = True
    for _ in range(50):
        d, dw = rng.uniform(0.5, 50, (2, 6, 6))
        kk = rng.integers(0, 2, (6, 6))
        kk[0, 0] = 1
        for c in (0.25, 0.5, 2.0, 8.0):
            scale_ok &= qtc(c * d, c * dw, kk) == qtc(d, dw, kk)
            scale_ok &= rtc(c * d, c * dw, kk) == rtc(d, dw, kk)
    ok = pin_ok and cases_ok and scale_ok
    report_line(ok, "6 metric pins",
                f"abs_rel {m.abs_rel:.15f}, delta1 {m.delta1}, qtc/rtc cases {cases_ok}, "
                f"joint-scale exact {scale_ok}")
    assert ok


def test_7_planar_normals(report_line):
    worst = 0.0
    for a, b in ((0.3, -0.2), (-0.5, 0.8), (0.0, 1.0), (1.2, 0.4)):
        f = render_sequence(SceneSpec(32, 24, (a, b, 60.0)), 1)[0]
        n = normals_from_depth(f.depth)
        expected = np.array([-a, -b, 1.0]) / math.sqrt(a * a + b * b + 1)
        worst = max(worst, np.abs(n[:, 1:-1, 1:-1] - expected[:, None, None]).max(),
                    np.abs(f.normals_gt[:, 1:-1, 1:-1] - expected[:, None, None]).max())
    ok = worst < 1e-4
    report_line(ok, "7 planar normals", f"max component err {worst:.1e} (<1e-4)")
    assert ok


def test_8_golden_round_trips(report_line, tmp_path):
    files = {
        "depth_2x3.pfm": (fio.read_pfm, fio.write_pfm),
        "normals_2x2.pfm": (fio.read_pfm, fio.write_pfm),
        "mask_3x4.pgm": (fio.read_mask_pgm, fio.write_mask_pgm),
        "feat_2x2x3.fgrid": (fio.read_fgrid, fio.write_fgrid),
    }
    results = {}
    for name, (read, write) in files.items():
        src = GOLDEN / name
        write(read(src), tmp_path / name)
        results[name] = (tmp_path / name).read_bytes() == src.read_bytes()
    # big-endian input re-encodes to the little-endian golden file
    be = fio.read_pfm(GOLDEN / "depth_2x3_be.pfm")
    fio.write_pfm(be, tmp_path / "be.pfm")
    results["depth_2x3_be.pfm"] = (tmp_path / "be.pfm").read_bytes() == (GOLDEN / "depth_2x3.pfm").read_bytes()
    ok = all(results.values())
    report_line(ok, "8 golden round-trips",
                ", ".join(f"{k} {'ok' if v else 'MISMATCH'}" for k, v in results.items()))
    assert ok
