"""Brute-force reference constructions that share no code with the package.

Bosons are built from truncated single-mode matrices and Kronecker products, then
projected onto a fixed particle number. States are matched to the package only through
occupation tuples.
"""

from __future__ import annotations

import itertools
from functools import reduce

import numpy as np
from scipy import linalg


def mode_annihilator(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), 1)


def site_operator(op: np.ndarray, site: int, sites: int) -> np.ndarray:
    eye = np.eye(op.shape[0])
    return reduce(np.kron, [op if j == site else eye for j in range(sites)])


class KronBosons:
    """Full truncated Fock space (cutoff+1)^L with explicit ladder matrices."""

    def __init__(self, sites: int, cutoff: int):
        self.sites, self.cutoff = sites, cutoff
        a = mode_annihilator(cutoff)
        self.a = [site_operator(a, x, sites) for x in range(sites)]
        self.n = [ax.conj().T @ ax for ax in self.a]
        self.occupations = list(itertools.product(range(cutoff + 1), repeat=sites))

    def sector(self, particles: int) -> list[int]:
        return [i for i, occ in enumerate(self.occupations) if sum(occ) == particles]

    def hopping(self, b: np.ndarray) -> np.ndarray:
        return sum(b[x, y] * self.a[x].conj().T @ self.a[y]
                   for x in range(self.sites) for y in range(self.sites) if b[x, y] != 0) \
            + 0 * self.n[0]

    def pair(self, v: np.ndarray) -> np.ndarray:
        out = 0 * self.n[0]
        for x in range(self.sites):
            for y in range(self.sites):
                if v[x, y] != 0:
                    ax, ay = self.a[x], self.a[y]
                    out = out + 0.5 * v[x, y] * ax.conj().T @ ay.conj().T @ ay @ ax
        return out

    def restrict(self, op: np.ndarray, particles: int) -> tuple[np.ndarray, list[tuple[int, ...]]]:
        idx = self.sector(particles)
        return op[np.ix_(idx, idx)], [self.occupations[i] for i in idx]


def permute_to(basis_states, occupations, matrix: np.ndarray) -> np.ndarray:
    """Reorder an oracle matrix (rows labelled by ``occupations``) to the package order."""
    where = {tuple(o): i for i, o in enumerate(occupations)}
    perm = [where[tuple(int(v) for v in row)] for row in basis_states]
    return matrix[np.ix_(perm, perm)]


def expm_evolve(H: np.ndarray, psi: np.ndarray, t: float) -> np.ndarray:
    return linalg.expm(-1j * t * H) @ psi


def reduced_density_by_sum(amplitudes: np.ndarray, states: np.ndarray, keep: list[int]) -> dict:
    """rho_Y as a dict {(occ_Y, occ_Y'): value}, summing over matching complement occupations."""
    comp = [j for j in range(states.shape[1]) if j not in keep]
    out: dict = {}
    for i, si in enumerate(states):
        for j, sj in enumerate(states):
            if tuple(si[comp]) != tuple(sj[comp]):
                continue
            key = (tuple(si[keep]), tuple(sj[keep]))
            out[key] = out.get(key, 0) + amplitudes[i] * np.conj(amplitudes[j])
    return out
