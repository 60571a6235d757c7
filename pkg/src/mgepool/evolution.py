"""Evolutionary enhancement loop: mutate parents by resampling their
unimportant spectrum, fuse candidates by weighted parameter averaging,
score with the combined fitness, keep the fittest.

Selection is elitist (parents compete with their offspring), which makes
the per-generation max fitness exactly non-decreasing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigRangeError, StructuralError
from .fitness import FitnessConfig, criterion_score
from .generator import (
    Candidate,
    GeneratorConfig,
    accept,
    generate_layer,
    generate_pool,
    model_masks,
)
from .nn import ParamEntry, ParamSet, evaluate_accuracy
from .transforms import RngStream


@dataclass
class EvolutionConfig:
    generations: int
    parents: int = 10
    mutations: int = 10
    fusions: int = 20
    fusion_weights: str = "uniform"  # uniform | fitness_proportional
    seed: int = 0

    def __post_init__(self):
        if self.generations < 0:
            raise ConfigRangeError("generations must be >= 0")
        if self.parents < 1 or self.mutations < 1 or self.fusions < 1:
            raise ConfigRangeError("parents, mutations, fusions must be >= 1")
        if self.fusion_weights not in ("uniform", "fitness_proportional"):
            raise ConfigRangeError(f"unknown fusion rule {self.fusion_weights!r}")


@dataclass
class GenerationStats:
    generation: int
    max_f: float
    mean_f: float
    best_id: int

    def to_record(self):
        return {"generation": self.generation, "max_f": self.max_f,
                "mean_f": self.mean_f, "best_id": self.best_id}


def mutate(parent: Candidate, count, gcfg: GeneratorConfig, stream: RngStream):
    """Children share the parent's retained coefficients; the unimportant
    ones are freshly resampled from independent child streams."""
    if count < 1:
        raise ConfigRangeError("count must be >= 1")
    masks = model_masks(parent.params, gcfg.t)
    children = []
    for i in range(count):
        rng = stream.child(i).generator()
        entries = [
            ParamEntry(e.name, e.shape,
                       generate_layer(e.values, masks[e.name], gcfg, rng))
            for e in parent.params.entries
        ]
        children.append(Candidate(params=ParamSet(entries), seed=i,
                                  lineage=("mutate", (parent.cand_id,))))
    return children


def fuse(parents, weights) -> ParamSet:
    """Elementwise weighted average of parameter sets; weights sum to 1."""
    if len(parents) != len(weights) or not parents:
        raise ConfigRangeError("parents/weights length mismatch")
    w = np.asarray(weights, dtype=np.float64)
    if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
        raise ConfigRangeError("weights must be non-negative and sum to 1")
    layouts = [[(e.name, tuple(e.shape)) for e in p.entries] for p in parents]
    if any(l != layouts[0] for l in layouts[1:]):
        raise StructuralError("parents have mismatched architectures")
    entries = []
    for i, e in enumerate(parents[0].entries):
        acc = np.zeros_like(e.values)
        for p, wi in zip(parents, w):
            acc += wi * p.entries[i].values
        entries.append(ParamEntry(e.name, e.shape, acc))
    return ParamSet(entries)


def evaluate_population(members, spec, fit: FitnessConfig):
    """Attach (f_q, f_d, f) to every member; deterministic re-evaluation."""
    for m in members:
        m.f_q = criterion_score(spec, m.params, fit.base)
        m.f_d = 0.0 if fit.extra is None else criterion_score(spec, m.params, fit.extra)
        m.f = m.f_q + fit.gamma * m.f_d
    return members


def select(members, n):
    """Top n by combined fitness; ties broken by higher f_q, then lower id."""
    if len(members) < n:
        raise StructuralError(f"population {len(members)} smaller than n={n}")
    return sorted(members, key=lambda m: (-m.f, -m.f_q, m.cand_id))[:n]


def evolve(base, spec, gcfg: GeneratorConfig, ecfg: EvolutionConfig,
           fit: FitnessConfig, valset):
    """Full E-MGE loop; returns (best candidate, per-generation history).

    The seed population comes from the standard generation loop; each
    generation adds j mutation children (round-robin over parents) and up
    to m fused candidates, re-checks fused ones against the acceptance
    predicate, scores everything, and keeps the n fittest.
    """
    pool = generate_pool(base, spec, gcfg, valset, count=ecfg.parents)
    base_acc = pool.base_accuracy
    members = pool.candidates
    next_id = len(members)
    evaluate_population(members, spec, fit)
    parents = select(members, ecfg.parents)
    history = [GenerationStats(0, parents[0].f,
                               float(np.mean([m.f for m in parents])),
                               parents[0].cand_id)]
    root = RngStream(ecfg.seed)
    for gen in range(1, ecfg.generations + 1):
        children = []
        for i in range(ecfg.mutations):
            parent = parents[i % len(parents)]
            child = mutate(parent, 1, gcfg, root.child(gen, i))[0]
            child.cand_id = next_id
            next_id += 1
            child.accuracy = evaluate_accuracy(spec, child.params.as_float32(), valset)
            child.accepted = accept(child.accuracy, base_acc, gcfg)
            children.append(child)
        evaluate_population(children, spec, fit)
        fusable = parents + children
        frng = root.child(gen, 1 << 20).generator()
        fused = []
        for i in range(ecfg.fusions):
            a, b = frng.choice(len(fusable), size=2, replace=False)
            pa, pb = fusable[a], fusable[b]
            if ecfg.fusion_weights == "fitness_proportional" and pa.f + pb.f > 0:
                wa = pa.f / (pa.f + pb.f)
            else:
                wa = 0.5
            params = fuse([pa.params, pb.params], [wa, 1.0 - wa])
            acc = evaluate_accuracy(spec, params.as_float32(), valset)
            if not accept(acc, base_acc, gcfg):
                continue  # fused model lost the pool's quality guarantee
            cand = Candidate(params=params, accuracy=acc, accepted=True,
                             cand_id=next_id,
                             lineage=("fuse", (pa.cand_id, pb.cand_id)))
            next_id += 1
            fused.append(cand)
        evaluate_population(fused, spec, fit)
        parents = select(parents + children + fused, ecfg.parents)
        history.append(GenerationStats(gen, parents[0].f,
                                       float(np.mean([m.f for m in parents])),
                                       parents[0].cand_id))
    # elitism: the all-time best always survives into the final parents
    best = max(parents, key=lambda m: (m.f, m.f_q, -m.cand_id))
    return best, history
