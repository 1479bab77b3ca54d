"""Ulam discretization of a flow and a linear program over its stationary measures.

Cells are boxes in Hopf coordinates ``(eta, xi1, xi2)`` with

    x1 + i x2 = cos(eta) e^{i xi1},    x3 + i x4 = sin(eta) e^{i xi2}.

The round volume is uniform in ``(sin^2 eta, xi1, xi2)``, so cells are
sampled uniformly by volume through ``u = sin^2 eta``.  All cells share the
same random offsets, which removes sampling noise from symmetry comparisons.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import Infeasible, NumericalFailure, OutOfRangeParameter, ResolutionTooLarge
from .fields import nu_of_x, parse_field
from .flow import integrate_batch

MAX_CELLS = 100_000
STATIONARITY_TOL = 1e-9
TWO_PI = 2.0 * np.pi


def hopf_coordinates(p):
    """``(eta, xi1, xi2)`` of points on S^3, angles in ``[0, 2 pi)``."""
    p = np.atleast_2d(p)
    eta = np.arctan2(np.hypot(p[:, 2], p[:, 3]), np.hypot(p[:, 0], p[:, 1]))
    xi1 = np.mod(np.arctan2(p[:, 1], p[:, 0]), TWO_PI)
    xi2 = np.mod(np.arctan2(p[:, 3], p[:, 2]), TWO_PI)
    return eta, xi1, xi2


def from_hopf_coordinates(eta, xi1, xi2):
    c, s = np.cos(eta), np.sin(eta)
    return np.stack([c * np.cos(xi1), c * np.sin(xi1), s * np.cos(xi2), s * np.sin(xi2)], axis=-1)


def _eta_edges(n_eta):
    return np.linspace(0.0, 0.5 * np.pi, n_eta + 1)


def cell_index(p, resolution):
    """Flat index of the cell containing each point."""
    n_eta, n1, n2 = resolution
    eta, xi1, xi2 = hopf_coordinates(p)
    k = np.clip((eta / (0.5 * np.pi) * n_eta).astype(int), 0, n_eta - 1)
    i = np.clip((xi1 / TWO_PI * n1).astype(int), 0, n1 - 1)
    j = np.clip((xi2 / TWO_PI * n2).astype(int), 0, n2 - 1)
    return (k * n1 + i) * n2 + j


@dataclass(frozen=True, eq=False)
class UlamChain:
    """Cell partition, transition matrix (CSR, row-stochastic) and cell objective."""

    field_name: str
    resolution: tuple
    tau: float
    samples_per_cell: int
    seed: int
    transition: sp.csr_matrix
    objective: np.ndarray
    volumes: np.ndarray

    @property
    def n_cells(self):
        return int(np.prod(self.resolution))

    def cells(self):
        """Box bounds ``(eta0, eta1, xi1_0, xi1_1, xi2_0, xi2_1)`` per cell, in index order."""
        n_eta, n1, n2 = self.resolution
        e = _eta_edges(n_eta)
        a = TWO_PI * np.arange(n1 + 1) / n1
        b = TWO_PI * np.arange(n2 + 1) / n2
        k, i, j = np.meshgrid(np.arange(n_eta), np.arange(n1), np.arange(n2), indexing="ij")
        k, i, j = k.ravel(), i.ravel(), j.ravel()
        return np.column_stack([e[k], e[k + 1], a[i], a[i + 1], b[j], b[j + 1]])

    def stationarity_residual(self, mu):
        """``|| mu P - mu ||_1``."""
        mu = np.asarray(mu, dtype=float)
        return float(np.sum(np.abs(self.transition.T @ mu - mu)))

    def as_dict(self):
        return {
            "field": self.field_name,
            "resolution": list(self.resolution),
            "tau": self.tau,
            "samples_per_cell": self.samples_per_cell,
            "seed": self.seed,
            "cells": self.cells().tolist(),
            "transition": self.transition.toarray().ravel().tolist(),
            "objective": self.objective.tolist(),
            "volumes": self.volumes.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        res = tuple(int(x) for x in data["resolution"])
        n = int(np.prod(res))
        dense = np.asarray(data["transition"], dtype=float).reshape(n, n)
        chain = cls(str(data["field"]), res, float(data["tau"]), int(data["samples_per_cell"]),
                    int(data["seed"]), sp.csr_matrix(dense),
                    np.asarray(data["objective"], dtype=float),
                    np.asarray(data["volumes"], dtype=float))
        check_chain(chain)
        return chain


def check_chain(chain, tol=1e-9):
    """Raise ``ValueError`` unless the transition matrix is row-stochastic."""
    P = chain.transition
    n = chain.n_cells
    if P.shape != (n, n) or chain.objective.shape != (n,):
        raise ValueError("chain arrays do not match its resolution")
    if P.nnz and P.data.min() < 0:
        raise ValueError("negative transition probability")
    if np.max(np.abs(np.asarray(P.sum(axis=1)).ravel() - 1.0)) > tol:
        raise ValueError("transition rows do not sum to 1")


def save_chain(chain, path):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".part")
    with os.fdopen(fd, "w") as fh:
        json.dump(chain.as_dict(), fh)
    os.replace(tmp, path)


def load_chain(path):
    with open(path) as fh:
        return UlamChain.from_dict(json.load(fh))


def build_chain(spec, resolution=(8, 8, 8), tau=0.1, samples_per_cell=16, seed=0, tol=1e-10):
    """Estimate the time-``tau`` transfer operator on Hopf-coordinate cells.

    Raises
    ------
    ResolutionTooLarge
        Above 10^5 cells.
    """
    resolution = tuple(int(r) for r in resolution)
    if len(resolution) != 3 or min(resolution) < 1:
        raise OutOfRangeParameter("resolution must be three positive integers")
    n = int(np.prod(resolution))
    if n > MAX_CELLS:
        raise ResolutionTooLarge(f"{n} cells exceeds the limit of {MAX_CELLS}")
    if not 0.01 <= tau <= 1.0:
        raise OutOfRangeParameter(f"tau={tau} outside [0.01, 1]")
    if samples_per_cell < 8:
        raise OutOfRangeParameter("samples_per_cell must be at least 8")

    n_eta, n1, n2 = resolution
    m = int(samples_per_cell)
    offsets = np.random.default_rng(seed).random((m, 3))
    e = _eta_edges(n_eta)
    u_lo, u_hi = np.sin(e[:-1]) ** 2, np.sin(e[1:]) ** 2
    k, i, j = (x.ravel() for x in np.meshgrid(np.arange(n_eta), np.arange(n1), np.arange(n2),
                                              indexing="ij"))
    u = u_lo[k][:, None] + offsets[None, :, 0] * (u_hi - u_lo)[k][:, None]
    xi1 = TWO_PI * (i[:, None] + offsets[None, :, 1]) / n1
    xi2 = TWO_PI * (j[:, None] + offsets[None, :, 2]) / n2
    start = from_hopf_coordinates(np.arcsin(np.sqrt(u)), xi1, xi2).reshape(-1, 4)

    _, traj = integrate_batch(spec, start, tau, tol, record_steps=False)
    dest = cell_index(traj[:, -1], resolution)
    src = np.repeat(np.arange(n), m)
    P = sp.csr_matrix((np.full(n * m, 1.0 / m), (src, dest)), shape=(n, n))
    P.sum_duplicates()

    objective = nu_of_x(spec, start).reshape(n, m).mean(axis=1)
    density = spec.density(start).reshape(n, m).mean(axis=1)
    volumes = (u_hi - u_lo)[k] / (n1 * n2) * density
    volumes = volumes / volumes.sum()
    chain = UlamChain(spec.name, resolution, float(tau), m, int(seed), P, objective, volumes)
    check_chain(chain)
    return chain


def identity_chain(objective):
    """Chain with identity transitions (every distribution is stationary)."""
    objective = np.asarray(objective, dtype=float)
    n = len(objective)
    return UlamChain("identity", (1, 1, n), 0.1, 8, 0, sp.identity(n, format="csr"),
                     objective, np.full(n, 1.0 / n))


@dataclass(frozen=True, eq=False)
class LPResult:
    min_value: float
    argmin_weights: np.ndarray
    feasibility_residual: float
    maximize: bool = False

    def as_dict(self):
        return {"value": self.min_value, "maximize": self.maximize,
                "feasibility_residual": self.feasibility_residual,
                "argmin_weights": self.argmin_weights.tolist()}


def min_invariant_linking(chain, maximize=False, tol=STATIONARITY_TOL):
    """Extremize ``sum objective_i mu_i`` over stationary distributions of the chain.

    Stationarity ``mu P = mu`` is imposed as two one-sided constraints with
    slack ``tol``.  The reported ``feasibility_residual`` is the larger of
    ``max |mu P - mu|`` and ``|sum mu - 1|``.

    Raises
    ------
    Infeasible
        If the solver reports no stationary distribution (an internal error
        for a stochastic matrix).
    NumericalFailure
        For any other solver failure.
    """
    check_chain(chain)
    n = chain.n_cells
    M = (chain.transition.T - sp.identity(n, format="csr")).tocsr()
    A_ub = sp.vstack([M, -M]).tocsr()
    b_ub = np.full(2 * n, tol)
    c = -chain.objective if maximize else chain.objective
    options = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=np.ones((1, n)), b_eq=[1.0],
                  bounds=(0, None), method="highs", options=options)
    if res.status == 2:
        # presolve can misjudge the thin slab; the equality form is exact
        A_eq = sp.vstack([M, sp.csr_matrix(np.ones((1, n)))]).tocsr()
        res = linprog(c, A_eq=A_eq, b_eq=np.append(np.zeros(n), 1.0),
                      bounds=(0, None), method="highs", options=options)
    if res.status == 2:
        raise Infeasible("no stationary distribution found")
    if res.status != 0:
        raise NumericalFailure(f"LP solver failed: {res.message}")
    mu = np.maximum(res.x, 0.0)
    mu = mu / mu.sum()
    resid = max(float(np.max(np.abs(M @ mu))), abs(float(mu.sum()) - 1.0))
    return LPResult(float(chain.objective @ mu), mu, resid, bool(maximize))


def chain_field(chain):
    return parse_field(chain.field_name)
