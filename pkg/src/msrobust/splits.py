"""Parent-atomic train/val/test assignment with metadata stratification.

The assignment is greedy largest-parent-first: each parent goes to the split
that minimizes a penalty combining (a) absolute deviation of realized split
tile-fractions from the targets and (b) a chi-square-style divergence between
each split's stratification-key histograms and the overall histogram. Ties
break by seeded choice, so identical inputs and seed reproduce the assignment
exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from msrobust.errors import ConfigError, InfeasibleTolerance, ToleranceWarning

SPLIT_NAMES = ("train", "val", "test")
STRAT_KEYS = ("location", "view_angle_bin", "azimuth_bin")


@dataclass(frozen=True)
class SplitPlan:
    fractions: tuple[float, float, float] = (0.80, 0.08, 0.12)
    strat_keys: tuple[str, ...] = ("location", "view_angle_bin", "azimuth_bin")
    angle_bin_width: float = 10.0
    seed: int = 0
    tolerance: float = 0.02
    histogram_weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        object.__setattr__(self, "strat_keys", tuple(self.strat_keys))
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError(f"fractions must sum to 1.0, got {sum(self.fractions)}")
        if not 0.0 < self.tolerance < 0.5:
            raise ConfigError("tolerance must be in (0, 0.5)")
        if self.angle_bin_width <= 0:
            raise ConfigError("angle_bin_width must be > 0")
        for key in self.strat_keys:
            if key not in STRAT_KEYS:
                raise ConfigError(f"unknown strat key {key!r} (choose from {STRAT_KEYS})")


def _strat_value(key, metadata, plan):
    """Project parent metadata onto one stratification category."""
    if key == "location":
        try:
            return str(metadata["location"])
        except KeyError:
            raise ConfigError("metadata missing 'location'") from None
    angle_field = "view_angle" if key == "view_angle_bin" else "azimuth"
    try:
        angle = float(metadata[angle_field])
    except KeyError:
        raise ConfigError(f"metadata missing {angle_field!r}") from None
    return int(np.floor(angle / plan.angle_bin_width))


def assign_splits(parents, plan: SplitPlan) -> dict[str, str]:
    """Assign every parent image to one split; all its tiles follow it.

    `parents` is a list of (parent_id, tile_count, metadata) where metadata
    supplies 'location', 'view_angle', 'azimuth' as the plan's strat keys
    require. Returns {parent_id: split_name}.
    """
    if not parents:
        return {}
    for pid, tc, _ in parents:
        if tc < 1:
            raise ConfigError(f"parent {pid!r} has tile_count {tc}")
    total = sum(tc for _, tc, _ in parents)
    targets = dict(zip(SPLIT_NAMES, plan.fractions))

    # Overall category distribution per strat key, tile-weighted. Also
    # validates that metadata carries every required key.
    cats = {
        pid: {k: _strat_value(k, meta, plan) for k in plan.strat_keys}
        for pid, _, meta in parents
    }

    for pid, tc, _ in parents:
        if all(tc > (targets[s] + plan.tolerance) * total for s in SPLIT_NAMES):
            raise InfeasibleTolerance(pid, tc)
    overall = {k: {} for k in plan.strat_keys}
    for pid, tc, _ in parents:
        for k in plan.strat_keys:
            v = cats[pid][k]
            overall[k][v] = overall[k].get(v, 0) + tc
    overall_frac = {
        k: {v: n / total for v, n in hist.items()} for k, hist in overall.items()
    }

    rng = np.random.default_rng(plan.seed)
    counts = {s: 0 for s in SPLIT_NAMES}
    hists = {s: {k: {} for k in plan.strat_keys} for s in SPLIT_NAMES}
    assignment = {}

    damp = 1.0 / total

    def penalty(split, pid, tc):
        """(total penalty, fraction term).

        The histogram term is a chi-square-style divergence between each
        split's category counts and its fair share (target fraction x overall
        histogram), so parking everything in one split is heavily penalized
        rather than rewarded. Equal totals fall back to the fraction term
        before the seeded shuffle resolves genuine ties.
        """
        frac_dev = 0.0
        for s in SPLIT_NAMES:
            n = counts[s] + (tc if s == split else 0)
            frac_dev += abs(n / total - targets[s])
        if not plan.strat_keys or plan.histogram_weight == 0.0:
            return frac_dev, frac_dev
        div = 0.0
        for s in SPLIT_NAMES:
            for k in plan.strat_keys:
                h = hists[s][k]
                extra = cats[pid][k] if s == split else None
                for v, q in overall_frac[k].items():
                    share = (h.get(v, 0) + (tc if v == extra else 0)) / total
                    expected = targets[s] * q
                    div += (share - expected) ** 2 / (expected + damp)
        return frac_dev + plan.histogram_weight * div, frac_dev

    order = sorted(parents, key=lambda p: (-p[1], p[0]))
    for pid, tc, _ in order:
        scores = [penalty(s, pid, tc) for s in SPLIT_NAMES]
        best = min(scores)
        tied = [
            s
            for s, sc in zip(SPLIT_NAMES, scores)
            if sc[0] - best[0] <= 1e-12 and sc[1] - best[1] <= 1e-12
        ]
        choice = tied[0] if len(tied) == 1 else tied[int(rng.integers(len(tied)))]
        assignment[pid] = choice
        counts[choice] += tc
        for k in plan.strat_keys:
            v = cats[pid][k]
            hists[choice][k][v] = hists[choice][k].get(v, 0) + tc

    for s in SPLIT_NAMES:
        dev = abs(counts[s] / total - targets[s])
        if dev > plan.tolerance + 1e-12:
            warnings.warn(
                f"split {s!r} ended {dev:.4f} from target (tolerance {plan.tolerance})",
                ToleranceWarning,
                stacklevel=2,
            )
    return assignment


def apply_assignment(manifest, assignment):
    """Stamp a parent->split assignment onto every record of a manifest."""
    records = []
    for rec in manifest.records:
        split = assignment.get(rec.parent_id, rec.split)
        records.append(rec if split == rec.split else replace(rec, split=split))
    return manifest.with_records(records)
