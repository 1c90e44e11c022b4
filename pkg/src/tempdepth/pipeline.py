"""End-to-end pass over a frame pair: mask, toy features, SNS + MS, fusion.

Every stage's invariants are checked and reported, so the CLI can refuse to
emit features produced by a broken module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import temporal as tm
from .diffmask import MaskConfig, difference_mask, mask_loss


@dataclass
class PairResult:
    features: dict[str, np.ndarray]
    mask_feat: np.ndarray
    checks: dict[str, bool]
    stats: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def _uniform_masked_rows(s: np.ndarray, mask_feat: np.ndarray, tol: float = 1e-7) -> bool:
    rows = mask_feat.reshape(-1) == 0
    if not rows.any():
        return True
    return bool(np.all(np.abs(s[rows] - 1.0 / s.shape[1]) <= tol))


def run_pair(
    depth0: np.ndarray,
    depth1: np.ndarray,
    weights: tm.AttentionWeights | None = None,
    mask_cfg: MaskConfig = MaskConfig(),
    stride: int = 8,
    cd: int = 8,
    cn: int = 8,
    seed: int = 0,
) -> PairResult:
    res = difference_mask(depth0, depth1, mask_cfg)
    zd0, zn0 = tm.toy_feature_extractor(depth0, res.normals0, stride, cd, cn, seed)
    zd1, zn1 = tm.toy_feature_extractor(depth1, res.normals1, stride, cd, cn, seed)
    mask_feat = tm.max_pool_mask(res.refined, stride)
    if weights is None:
        weights = tm.AttentionWeights.random(cd, seed)

    sns = [tm.sns_direction(zd0, zd1, zn0, zn1, mask_feat, weights),
           tm.sns_direction(zd1, zd0, zn1, zn0, mask_feat, weights)]
    ms = [tm.ms_direction(zd0, zd1, mask_feat, weights),
          tm.ms_direction(zd1, zd0, mask_feat, weights)]
    zv = [tm.fuse_video_feature(ms[i].static, sns[i].dyna, weights) for i in range(2)]

    features = {"zd0": zd0, "zd1": zd1, "zn0": zn0, "zn1": zn1}
    for i in range(2):
        features[f"zdyna{i}"] = sns[i].dyna
        features[f"zstatic{i}"] = ms[i].static
        features[f"zv{i}"] = zv[i]

    values = (zd1, zd0)
    checks: dict[str, bool] = {}
    for i in range(2):
        checks[f"sns{i}_rows_stochastic"] = tm.check_similarity(sns[i].similarity)
        checks[f"sns{i}_masked_rows_uniform"] = _uniform_masked_rows(sns[i].similarity, mask_feat)
        checks[f"sns{i}_convex_hull"] = tm.check_convex_hull(sns[i].aligned, values[i])
        checks[f"ms{i}_rows_stochastic"] = tm.check_similarity(ms[i].attention)
        checks[f"ms{i}_convex_hull"] = tm.check_convex_hull(ms[i].aligned, ms[i].value)
    checks["outputs_finite"] = all(bool(np.all(np.isfinite(f))) for f in features.values())

    stats = {
        "baseline": res.baseline,
        "raw_pixels": int(res.raw.sum()),
        "refined_pixels": int(res.refined.sum()),
        "dynamic_fraction": res.dynamic_fraction,
        "feature_dynamic_fraction": float(mask_feat.mean()),
        "mask_loss": mask_loss(res.raw, res.refined),
    }
    return PairResult(features, mask_feat, checks, stats)
