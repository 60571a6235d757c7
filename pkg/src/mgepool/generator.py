"""Core MGE procedure: spectrum masks, latent resampling, and the
sample-evaluate-accept loop that builds pools of generated models.

Per layer, the DCT coefficients carrying at least a fraction t of the
spectral energy are kept from the base model; the rest are replaced by
bounded pseudo-normal draws and the merged spectrum is inverse-transformed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigRangeError, DegenerateSpectrumError, GenerationFailedError
from .nn import ParamEntry, ParamSet, evaluate_accuracy
from .transforms import (
    MAX_LATENT_BOUND,
    RngStream,
    dct2,
    idct2,
    sample_bounded_normal,
)


@dataclass
class GeneratorConfig:
    """Knobs of the generation loop. Defaults follow the standard recipe:
    t=0.8, z=0.2, 100 attempts per wanted model, tolerance 0.05."""

    t: float = 0.8
    z: float = 0.2
    attempts: int = 100
    epsilon: float = 0.05
    seed: int = 0
    adaptive_z: bool = False  # halve z after every 10 consecutive rejections

    def __post_init__(self):
        if not (0.0 <= self.t <= 1.0):
            raise ConfigRangeError(f"energy threshold t={self.t} outside [0, 1]")
        if not (0.0 < self.z <= MAX_LATENT_BOUND):
            raise ConfigRangeError(f"latent bound z={self.z} outside (0, {MAX_LATENT_BOUND}]")
        if self.attempts < 1:
            raise ConfigRangeError("attempt budget must be >= 1")
        if self.epsilon <= 0:
            raise ConfigRangeError("acceptance tolerance must be > 0")


@dataclass
class MaskRow:
    """Retention mask over one layer's DCT coefficients."""

    keep: np.ndarray          # bool, True = retained
    energy_fraction: float    # energy actually carried by the retained set
    threshold: float


@dataclass
class Candidate:
    params: ParamSet
    accuracy: float = None
    accepted: bool = None
    seconds: float = 0.0
    seed: int = -1            # attempt index or child-stream key
    cand_id: int = -1
    lineage: tuple = ("seed", ())
    f_q: float = None
    f_d: float = None
    f: float = None


@dataclass
class PoolResult:
    candidates: list
    attempts: int
    seconds: float
    base_accuracy: float


def importance_mask(coeffs, t) -> MaskRow:
    """Minimal coefficient set, by descending |c|^2, reaching energy >= t.

    Ties in magnitude resolve to the lower index. t=0 keeps nothing,
    t=1 keeps everything.
    """
    if not (0.0 <= t <= 1.0):
        raise ConfigRangeError(f"t={t} outside [0, 1]")
    c = np.asarray(coeffs, dtype=np.float64)
    energy = c * c
    total = energy.sum()
    if total == 0.0:
        raise DegenerateSpectrumError("all-zero layer spectrum")
    keep = np.zeros(c.size, dtype=bool)
    if t == 0.0:
        return MaskRow(keep, 0.0, t)
    if t >= 1.0:
        keep[:] = True
        return MaskRow(keep, 1.0, t)
    order = np.argsort(-energy, kind="stable")
    frac = np.cumsum(energy[order]) / total
    count = int(np.searchsorted(frac, t, side="left")) + 1
    count = min(count, c.size)
    keep[order[:count]] = True
    return MaskRow(keep, float(frac[count - 1]), t)


def model_masks(base: ParamSet, t: float) -> dict:
    """Per-layer retention masks computed on the base model's spectra."""
    return {e.name: importance_mask(dct2(e.values), t) for e in base.entries}


def generate_layer(layer_values, mask: MaskRow, cfg: GeneratorConfig, rng,
                   z=None) -> np.ndarray:
    """Splice retained base coefficients with fresh bounded-normal draws."""
    c = dct2(layer_values)
    if mask.keep.size != c.size:
        raise ConfigRangeError("mask length != coefficient length")
    merged = c.copy()
    n_replace = int((~mask.keep).sum())
    if n_replace:
        merged[~mask.keep] = sample_bounded_normal(z if z is not None else cfg.z,
                                                   n_replace, rng)
    return idct2(merged)


def accept(candidate_accuracy, base_accuracy, cfg: GeneratorConfig) -> bool:
    """Keep a candidate that beats the base or sits within tolerance of it."""
    return (candidate_accuracy > base_accuracy
            or abs(candidate_accuracy - base_accuracy) < cfg.epsilon)


def generate_model(base, spec, cfg, valset, base_accuracy=None, rng=None,
                   masks=None, z=None, seed=-1) -> Candidate:
    """One full generation attempt: resample every layer, evaluate, flag.

    The candidate keeps full-precision parameters, but its recorded accuracy
    is measured on the float32-rounded copy so the accepted flag stays valid
    for the persisted form of the model.
    """
    if base_accuracy is None:
        base_accuracy = evaluate_accuracy(spec, base.as_float32(), valset)
    if rng is None:
        rng = RngStream(cfg.seed).generator()
    if masks is None:
        masks = model_masks(base, cfg.t)
    t0 = time.perf_counter()
    entries = [
        ParamEntry(e.name, e.shape, generate_layer(e.values, masks[e.name], cfg, rng, z=z))
        for e in base.entries
    ]
    params = ParamSet(entries)
    acc = evaluate_accuracy(spec, params.as_float32(), valset)
    ok = accept(acc, base_accuracy, cfg)
    return Candidate(params=params, accuracy=acc, accepted=ok,
                     seconds=time.perf_counter() - t0, seed=seed)


def generate_pool(base, spec, cfg, valset, count) -> PoolResult:
    """Collect `count` accepted candidates within cfg.attempts * count tries."""
    if count < 1:
        raise ConfigRangeError("count must be >= 1")
    base_acc = evaluate_accuracy(spec, base.as_float32(), valset)
    masks = model_masks(base, cfg.t)
    root = RngStream(cfg.seed)
    budget = cfg.attempts * count
    accepted = []
    attempts = 0
    consecutive = 0
    z = cfg.z
    t0 = time.perf_counter()
    while len(accepted) < count and attempts < budget:
        rng = root.child(attempts).generator()
        cand = generate_model(base, spec, cfg, valset, base_accuracy=base_acc,
                              rng=rng, masks=masks, z=z, seed=attempts)
        attempts += 1
        if cand.accepted:
            cand.cand_id = len(accepted)
            accepted.append(cand)
            consecutive = 0
        else:
            consecutive += 1
            if cfg.adaptive_z and consecutive % 10 == 0:
                z = max(z / 2.0, 1e-6)
    elapsed = time.perf_counter() - t0
    if not accepted:
        raise GenerationFailedError(
            f"no candidate accepted in {attempts} attempts", attempts, budget)
    return PoolResult(accepted, attempts, elapsed, base_acc)


# ---------------------------------------------------------------------------
# spectrum diagnostics


def unimportant_mask_spatial(layer_values, band, fraction) -> np.ndarray:
    """Parameter positions most affected by zeroing a frequency band.

    Zeroes the band's lowest-|magnitude| share of coefficients, inverse-
    transforms, and marks the top `fraction` of positions by |delta| as
    unimportant. fraction=0 yields an empty mask.
    """
    if not (0.0 <= fraction < 1.0):
        raise ConfigRangeError(f"fraction={fraction} outside [0, 1)")
    v = np.asarray(layer_values, dtype=np.float64)
    n = v.size
    mask = np.zeros(n, dtype=bool)
    if fraction == 0.0:
        return mask
    c = dct2(v)
    third = n // 3
    if band == "low":
        lo, hi = 0, max(third, 1)
    elif band == "mid":
        lo, hi = third, max(2 * third, third + 1)
    else:
        raise ConfigRangeError(f"unknown band {band!r}")
    band_idx = np.arange(lo, hi)
    k_band = int(np.ceil(fraction * band_idx.size))
    order = band_idx[np.argsort(np.abs(c[band_idx]), kind="stable")]
    zeroed = c.copy()
    zeroed[order[:k_band]] = 0.0
    delta = np.abs(idct2(zeroed) - v)
    k = int(np.ceil(fraction * n))
    top = np.argsort(-delta, kind="stable")[:k]  # ties: lowest index first
    mask[top] = True
    return mask


def zero_fill_decay(base, spec, testset, fractions):
    """Accuracy after zeroing the lowest-energy share of each layer's spectrum."""
    fractions = list(fractions)
    if fractions != sorted(fractions) or any(f < 0 or f > 1 for f in fractions):
        raise ConfigRangeError("fractions must be ascending within [0, 1]")
    curve = []
    for f in fractions:
        if f == 0.0:
            curve.append((f, evaluate_accuracy(spec, base, testset)))
            continue
        entries = []
        for e in base.entries:
            c = dct2(e.values)
            k = int(round(f * c.size))
            if k >= c.size:
                entries.append(ParamEntry(e.name, e.shape, np.zeros(c.size)))
                continue
            order = np.argsort(c * c, kind="stable")
            zeroed = c.copy()
            zeroed[order[:k]] = 0.0
            entries.append(ParamEntry(e.name, e.shape, idct2(zeroed)))
        curve.append((f, evaluate_accuracy(spec, ParamSet(entries), testset)))
    return curve


def band_sensitivity(base, spec, testset, bands, scale, seed=0):
    """Accuracy after perturbing each coefficient index band independently."""
    for i, (lo, hi) in enumerate(bands):
        if not (0.0 <= lo < hi <= 1.0):
            raise ConfigRangeError(f"band {i} bounds invalid")
        for lo2, hi2 in bands[i + 1:]:
            if lo < hi2 and lo2 < hi:
                raise ConfigRangeError("bands overlap")
    root = RngStream(seed)
    results = []
    for bi, (lo, hi) in enumerate(bands):
        if scale == 0.0:
            results.append(((lo, hi), evaluate_accuracy(spec, base, testset)))
            continue
        rng = root.child(bi).generator()
        entries = []
        for e in base.entries:
            c = dct2(e.values)
            a, b = int(lo * c.size), int(hi * c.size)
            if b > a:
                c = c.copy()
                c[a:b] += sample_bounded_normal(scale, b - a, rng)
                entries.append(ParamEntry(e.name, e.shape, idct2(c)))
            else:
                entries.append(ParamEntry(e.name, e.shape, e.values.copy()))
        results.append(((lo, hi), evaluate_accuracy(spec, ParamSet(entries), testset)))
    return results
