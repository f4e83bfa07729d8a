"""Independent reference implementations used to check the package.

Everything here recomputes a quantity through a different code path than
the package: densities via plain scalar formulas with matrix inverses,
regression via explicit normal equations, the transportation problem via
exhaustive vertex enumeration, and the composite loss via a direct
term-by-term translation of its definition.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from ggmoe import ExpertAtom, MixingMeasure


def random_atom(rng: np.random.Generator, d: int, weight: float | None = None) -> ExpertAtom:
    """A generic well-conditioned atom with parameters of order one."""
    if weight is None:
        weight = float(rng.uniform(0.05, 0.95))
    a_mat = rng.standard_normal((d, d))
    return ExpertAtom(
        weight=weight,
        gate_mean=rng.standard_normal(d),
        gate_cov=a_mat @ a_mat.T + 0.1 * np.eye(d),
        slope=rng.standard_normal(d),
        intercept=float(rng.standard_normal()),
        noise_var=float(rng.uniform(0.1, 2.0)),
    )


def random_measure(rng: np.random.Generator, k: int, d: int) -> MixingMeasure:
    weights = rng.dirichlet(np.ones(k))
    return MixingMeasure(tuple(random_atom(rng, d, float(w)) for w in weights))


def gaussian_pdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Multivariate normal density via explicit inverse and determinant."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    diff = x - np.atleast_1d(mean)
    cov = np.atleast_2d(cov)
    d = diff.shape[0]
    quad = float(diff @ np.linalg.inv(cov) @ diff)
    norm = math.sqrt((2.0 * math.pi) ** d * float(np.linalg.det(cov)))
    return math.exp(-0.5 * quad) / norm


def scalar_component_terms(g: MixingMeasure, x, y: float) -> list[float]:
    """Per-component joint terms pi_k * gate_k(x) * expert_k(y | x)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    terms = []
    for atom in g.atoms:
        gate = gaussian_pdf(x, atom.gate_mean, atom.gate_cov)
        mean = float(atom.slope @ x + atom.intercept)
        expert = math.exp(-0.5 * (y - mean) ** 2 / atom.noise_var) / math.sqrt(
            2.0 * math.pi * atom.noise_var
        )
        terms.append(atom.weight * gate * expert)
    return terms


def scalar_joint_density(g: MixingMeasure, x, y: float) -> float:
    return float(sum(scalar_component_terms(g, x, y)))


def scalar_responsibilities(g: MixingMeasure, x, y: float) -> np.ndarray:
    terms = np.array(scalar_component_terms(g, x, y))
    return terms / terms.sum()


def regression_normal_equations(
    x: np.ndarray, y: np.ndarray, tau: np.ndarray
) -> tuple[np.ndarray, float]:
    """Weighted least squares through the explicit normal equations."""
    design = np.hstack([x, np.ones((x.shape[0], 1))])
    lhs = design.T @ (tau[:, None] * design)
    rhs = design.T @ (tau * y)
    beta = np.linalg.solve(lhs, rhs)
    return beta[:-1], float(beta[-1])


def transport_vertex_oracle(cost: np.ndarray, p: np.ndarray, q: np.ndarray) -> float:
    """Exact transportation optimum by enumerating basic feasible solutions.

    Every vertex of the transportation polytope is supported on a spanning
    tree of the bipartite supply/demand graph, so enumerating all edge
    subsets of size m+n-1, solving each tree's flows by leaf elimination,
    and keeping the cheapest nonnegative solution gives the exact optimum.
    Practical up to roughly 4x4 problems.
    """
    m, n = cost.shape
    n_nodes = m + n
    edges_all = [(i, j) for i in range(m) for j in range(n)]
    best = math.inf
    for subset in itertools.combinations(edges_all, n_nodes - 1):
        adj: list[list[tuple[int, int]]] = [[] for _ in range(n_nodes)]
        for e, (i, j) in enumerate(subset):
            adj[i].append((e, m + j))
            adj[m + j].append((e, i))
        seen = [False] * n_nodes
        stack, seen[0], count = [0], True, 1
        while stack:
            u = stack.pop()
            for _, v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    count += 1
                    stack.append(v)
        if count != n_nodes:
            continue
        need = np.concatenate([p, q]).astype(float)
        deg = [len(a) for a in adj]
        removed_edge = [False] * (n_nodes - 1)
        removed_node = [False] * n_nodes
        flow = np.zeros(n_nodes - 1)
        order = [u for u in range(n_nodes) if deg[u] == 1]
        feasible = True
        while order:
            u = order.pop()
            if removed_node[u]:
                continue
            pending = [(e, v) for e, v in adj[u] if not removed_edge[e]]
            if not pending:
                removed_node[u] = True
                continue
            e, v = pending[0]
            f = need[u]
            if f < -1e-12:
                feasible = False
                break
            flow[e] = f
            need[v] -= f
            need[u] = 0.0
            removed_edge[e] = True
            removed_node[u] = True
            deg[v] -= 1
            if deg[v] == 1:
                order.append(v)
        if not feasible or np.any(flow < -1e-12):
            continue
        total = sum(f * cost[i, j] for f, (i, j) in zip(flow, subset))
        best = min(best, total)
    return best


def wasserstein_by_enumeration(g: MixingMeasure, g0: MixingMeasure, r: float) -> float:
    theta_g = np.stack([a.param_vector() for a in g.atoms])
    theta_0 = np.stack([a.param_vector() for a in g0.atoms])
    gaps = np.linalg.norm(theta_g[:, None, :] - theta_0[None, :, :], axis=2)
    value = transport_vertex_oracle(gaps**r, g.weights, g0.weights)
    return max(value, 0.0) ** (1.0 / r)


def atom_gaps(fitted: ExpertAtom, true_atom: ExpertAtom) -> tuple[float, float, float, float, float]:
    """The five parameter gaps, recomputed with plain scalar arithmetic."""
    dc = math.sqrt(sum(float(v) ** 2 for v in fitted.gate_mean - true_atom.gate_mean))
    dgamma = math.sqrt(sum(float(v) ** 2 for v in (fitted.gate_cov - true_atom.gate_cov).ravel()))
    da = math.sqrt(sum(float(v) ** 2 for v in fitted.slope - true_atom.slope))
    db = abs(fitted.intercept - true_atom.intercept)
    dsigma = abs(fitted.noise_var - true_atom.noise_var)
    return dc, dgamma, da, db, dsigma


def s_loss_by_hand(fitted: ExpertAtom, true_atom: ExpertAtom, s) -> float:
    return math.fsum(gap**exp for gap, exp in zip(atom_gaps(fitted, true_atom), s))


def cells_by_hand(g: MixingMeasure, g0: MixingMeasure) -> list[list[int]]:
    """Nearest-true-atom assignment with ties kept at the smallest index."""
    cells: list[list[int]] = [[] for _ in range(g0.k)]
    for ell, fitted in enumerate(g.atoms):
        best_k, best_loss = 0, math.inf
        for k, true_atom in enumerate(g0.atoms):
            loss = s_loss_by_hand(fitted, true_atom, (2.0, 1.0, 1.0, 2.0, 1.0))
            if loss < best_loss:
                best_k, best_loss = k, loss
        cells[best_k].append(ell)
    return cells


def voronoi_loss_by_hand(
    g: MixingMeasure, g0: MixingMeasure, rbar_values: dict[int, float] | None = None, tail: float = 7.0
) -> float:
    """Direct term-by-term translation of the composite loss definition."""
    if rbar_values is None:
        rbar_values = {1: 1.0, 2: 4.0, 3: 6.0}
    total = 0.0
    for k, cell in enumerate(cells_by_hand(g, g0)):
        true_atom = g0.atoms[k]
        mass = math.fsum(g.atoms[ell].weight for ell in cell)
        total += abs(mass - true_atom.weight)
        if len(cell) == 1:
            atom = g.atoms[cell[0]]
            total += atom.weight * s_loss_by_hand(atom, true_atom, (1.0,) * 5)
        elif len(cell) > 1:
            r = rbar_values.get(len(cell), tail)
            exponents = (r, r / 2.0, r / 2.0, r, r / 2.0)
            agg_c = np.zeros(g.dim)
            agg_gamma = np.zeros((g.dim, g.dim))
            agg_a = np.zeros(g.dim)
            agg_b = 0.0
            agg_sigma = 0.0
            for ell in cell:
                atom = g.atoms[ell]
                total += atom.weight * s_loss_by_hand(atom, true_atom, exponents)
                dc = atom.gate_mean - true_atom.gate_mean
                db = atom.intercept - true_atom.intercept
                agg_c = agg_c + atom.weight * dc
                agg_b += atom.weight * db
                agg_gamma = agg_gamma + atom.weight * (
                    atom.gate_cov - true_atom.gate_cov + np.outer(dc, dc)
                )
                agg_a = agg_a + atom.weight * (atom.slope - true_atom.slope + db * dc)
                agg_sigma += atom.weight * (atom.noise_var - true_atom.noise_var + db**2)
            total += (
                math.sqrt(float(agg_c @ agg_c))
                + abs(agg_b)
                + math.sqrt(float(np.sum(agg_gamma**2)))
                + math.sqrt(float(agg_a @ agg_a))
                + abs(agg_sigma)
            )
    return total
