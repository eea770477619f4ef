"""Genetic search over perturbations of the explained data that pulls the
explanation toward a target map."""

from dataclasses import dataclass
from math import comb

import numpy as np

from ..numerics import importance_order, kendall_tau_distance, make_rng, spearman_rank_corr, importance_ranks
from .taxonomy import TAXONOMY, AttackArtifact


@dataclass
class GAConfig:
    population: int = 50
    generations: int = 20
    mutation_std: float = 0.1
    mutation_rate: float = 0.1
    crossover_rate: float = 0.5
    tournament_k: int = 3
    alpha: float = None
    seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.generations < 0:
            raise ValueError("generations must be nonnegative")
        if self.tournament_k < 1:
            raise ValueError("tournament_k must be positive")
        for name in ("mutation_rate", "crossover_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")


def explanation_fitness(values, target, alpha=None):
    """L1 distance plus alpha times the Kendall distance of the importance orderings."""
    values = np.asarray(values, dtype=float)
    target = np.asarray(target, dtype=float)
    d = len(target)
    if alpha is None:
        alpha = 1.0 / comb(d, 2) if d > 1 else 0.0
    tau = kendall_tau_distance(importance_order(values), importance_order(target)) if d > 1 else 0
    return float(np.abs(values - target).sum() + alpha * tau)


def _tournament(fitness, k, rng):
    picks = rng.integers(0, len(fitness), k)
    return picks[np.argmin(fitness[picks])]


def attack_data_poisoning_genetic(explain_fn, target_map, perturbable, ga_cfg=None, data=None, predict_fn=None):
    """Evolve an additive perturbation of ``data`` restricted to ``perturbable`` columns.

    ``explain_fn(data')`` returns an attribution vector (or Attribution) for
    the perturbed data. Elitism keeps the best individual, so the
    best-fitness trace never increases. Individual 0 of the first
    generation is the unperturbed data.
    """
    cfg = ga_cfg or GAConfig()
    if data is None:
        raise ValueError("data to perturb is required")
    data = np.asarray(data, dtype=float)
    single = data.ndim == 1
    D = np.atleast_2d(data)
    mask = np.asarray(perturbable, dtype=bool).ravel()
    if mask.shape[0] != D.shape[1]:
        raise ValueError(f"perturbable mask has {mask.shape[0]} entries for {D.shape[1]} features")
    if not mask.any():
        raise ValueError("perturbable mask selects no feature")
    target = np.asarray(getattr(target_map, "values", target_map), dtype=float).ravel()

    def explain(delta):
        out = explain_fn((D + delta)[0] if single else D + delta)
        return np.asarray(getattr(out, "values", out), dtype=float).ravel()

    def fitness(delta):
        return explanation_fitness(explain(delta), target, cfg.alpha)

    rng = make_rng(cfg.seed, "data_poisoning")
    gene_mask = np.broadcast_to(mask, D.shape)
    pop = [np.zeros(D.shape)]
    for _ in range(cfg.population - 1):
        pop.append(np.where(gene_mask, rng.normal(0.0, cfg.mutation_std, D.shape), 0.0))
    fit = np.array([fitness(p) for p in pop])
    trace = [float(fit.min())]
    for _ in range(cfg.generations):
        if trace[-1] == 0.0:
            break
        elite = int(np.argmin(fit))
        children = [pop[elite]]
        child_fit = [fit[elite]]
        while len(children) < cfg.population:
            a = pop[_tournament(fit, cfg.tournament_k, rng)]
            b = pop[_tournament(fit, cfg.tournament_k, rng)]
            if rng.random() < cfg.crossover_rate:
                child = np.where(rng.random(D.shape) < 0.5, a, b)
            else:
                child = a.copy()
            hit = gene_mask & (rng.random(D.shape) < cfg.mutation_rate)
            child = child + np.where(hit, rng.normal(0.0, cfg.mutation_std, D.shape), 0.0)
            children.append(child)
            child_fit.append(fitness(child))
        pop, fit = children, np.array(child_fit)
        trace.append(float(fit.min()))

    best = pop[int(np.argmin(fit))]
    before = explain(np.zeros(D.shape))
    after = explain(best)
    perturbed = D + best
    metrics = {
        "best_fitness": trace[-1],
        "initial_fitness": trace[0],
        "generations_run": len(trace) - 1,
        "fitness_trace": trace,
        "max_abs_delta": float(np.abs(best).max()),
        "l1_delta": float(np.abs(best).sum()),
    }
    if len(before) > 1 and np.ptp(importance_ranks(before)) > 0:
        metrics["spearman"] = spearman_rank_corr(importance_ranks(before), importance_ranks(after))
    if predict_fn is not None:
        y0 = np.asarray(predict_fn(D))
        y1 = np.asarray(predict_fn(perturbed))
        metrics["prediction_agreement"] = float(np.mean(y0 == y1))
        metrics["predictions_preserved"] = bool(np.all(y0 == y1))
    payload = {
        "original": data,
        "perturbed": perturbed[0] if single else perturbed,
        "delta": best[0] if single else best,
        "attribution_before": before,
        "attribution_after": after,
    }
    return AttackArtifact(
        "data_poisoning",
        TAXONOMY["data_poisoning"],
        payload,
        provenance={"ga": cfg.__dict__.copy(), "perturbable": np.flatnonzero(mask).tolist()},
        summary={"kind": "perturbed_data", "shape": list(D.shape), "delta": best,
                 "attribution_before": before, "attribution_after": after},
        metrics=metrics,
    )
