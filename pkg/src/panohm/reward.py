"""Scanpath imitation rewards.

Both rewards are means over subjects of products of Gaussian similarity
factors: direction agreement (phase difference over rho), position
validity (great-circle distance over varrho), and for the magnitude
reward additionally magnitude agreement (over varsigma).

Units: rho is degrees of phase difference, varrho is radians of
great-circle distance, varsigma is degrees-per-frame of magnitude. The
scales are configuration so an alternative reading of the three constants
can be dialed in without touching code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pandata import HMTrace, derive_scanpath
from .sphere import GeoPos, great_circle_dist_many, phase_diff_many


@dataclass(frozen=True)
class RewardParams:
    rho_deg: float = 42.0
    varrho_rad: float = 0.7
    varsigma_deg: float = 1.0

    def __post_init__(self):
        if self.rho_deg <= 0 or self.varrho_rad <= 0 or self.varsigma_deg <= 0:
            raise ValueError("reward scales must be strictly positive")


@dataclass
class GroundTruthFrame:
    """Per-subject position and scanpath step for one frame."""

    lons: np.ndarray  # (M,)
    lats: np.ndarray  # (M,)
    dirs: np.ndarray  # (M,) bearings, degrees
    mags: np.ndarray  # (M,) degrees per frame

    def __post_init__(self):
        self.lons = np.asarray(self.lons, dtype=np.float64)
        self.lats = np.asarray(self.lats, dtype=np.float64)
        self.dirs = np.asarray(self.dirs, dtype=np.float64)
        self.mags = np.asarray(self.mags, dtype=np.float64)
        if not (len(self.lons) == len(self.lats) == len(self.dirs) == len(self.mags)):
            raise ValueError("ground-truth arrays must agree in length")
        if len(self.lons) < 1:
            raise ValueError("ground truth needs at least one subject")

    @property
    def count(self) -> int:
        return len(self.lons)


def ground_truth_frames(traces: list[HMTrace]) -> list[GroundTruthFrame]:
    """Align subject traces into per-frame ground-truth sets.

    A video with T frames yields T-1 sets: the step at frame t is the move
    from frame t to t+1.
    """
    if not traces:
        raise ValueError("no traces given")
    lengths = {len(tr) for tr in traces}
    if len(lengths) != 1:
        raise ValueError(f"traces disagree in length: {sorted(lengths)}")
    steps = [derive_scanpath(tr) for tr in traces]
    frames = []
    for t in range(lengths.pop() - 1):
        frames.append(
            GroundTruthFrame(
                lons=np.array([tr.positions[t].lon for tr in traces]),
                lats=np.array([tr.positions[t].lat for tr in traces]),
                dirs=np.array([s[t].direction_deg for s in steps]),
                mags=np.array([s[t].magnitude_deg for s in steps]),
            )
        )
    return frames


def _validity_factors(
    pred_pos: GeoPos, pred_dir_deg: float, gt: GroundTruthFrame, params: RewardParams
) -> np.ndarray:
    """Direction-similarity times position-validity factor per subject."""
    d_d = phase_diff_many(pred_dir_deg, gt.dirs)
    d_s = np.radians(great_circle_dist_many(pred_pos, gt.lons, gt.lats))
    return np.exp(-0.5 * (d_d / params.rho_deg) ** 2) * np.exp(
        -0.5 * (d_s / params.varrho_rad) ** 2
    )


def reward_alpha(
    pred_pos: GeoPos, pred_dir_deg: float, gt: GroundTruthFrame, params: RewardParams
) -> float:
    """Direction reward in (0, 1]."""
    return float(np.mean(_validity_factors(pred_pos, pred_dir_deg, gt, params)))


def magnitude_validity(
    pred_pos: GeoPos, pred_dir_deg: float, gt: GroundTruthFrame, params: RewardParams
) -> np.ndarray:
    """Per-subject validity weights of the magnitude similarity score.

    These do not depend on the predicted magnitude, so they can be frozen
    into an episode tape and reused by the analytic magnitude gradient.
    """
    return _validity_factors(pred_pos, pred_dir_deg, gt, params)


def reward_nu_from_validity(
    pred_mag_deg: float, gt_mags: np.ndarray, validity: np.ndarray, params: RewardParams
) -> float:
    dm = (pred_mag_deg - gt_mags) / params.varsigma_deg
    return float(np.mean(np.exp(-0.5 * dm * dm) * validity))


def reward_nu(
    pred_pos: GeoPos,
    pred_dir_deg: float,
    pred_mag_deg: float,
    gt: GroundTruthFrame,
    params: RewardParams,
) -> float:
    """Magnitude reward in (0, 1]; the direction/position factors gate it."""
    validity = _validity_factors(pred_pos, pred_dir_deg, gt, params)
    return reward_nu_from_validity(pred_mag_deg, gt.mags, validity, params)


def grad_reward_nu_wrt_mag(
    pred_mag_deg: float, gt_mags: np.ndarray, validity: np.ndarray, params: RewardParams
) -> float:
    """Analytic d(reward_nu)/d(predicted magnitude), validity factors held fixed."""
    s2 = params.varsigma_deg * params.varsigma_deg
    dm = pred_mag_deg - np.asarray(gt_mags, dtype=np.float64)
    return float(np.mean(-dm / s2 * np.exp(-0.5 * dm * dm / s2) * validity))
