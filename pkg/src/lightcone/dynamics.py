"""Time evolution inside fixed-N sectors: propagators, expectations, ground states."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg as sla
from scipy.sparse import linalg as spla

from . import fock, model
from .lattice import Region

DENSE_LIMIT = 512
DEGENERACY_TOL = 1e-10


class DynamicsError(ValueError):
    pass


class NotLocalized(DynamicsError):
    pass


def _lanczos(H, v: np.ndarray, m: int):
    """Orthonormal Krylov basis and tridiagonal coefficients (full reorthogonalization)."""
    n = v.shape[0]
    m = min(m, n)
    V = np.zeros((n, m + 1), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[:, 0] = v
    k = m
    for j in range(m):
        w = H @ V[:, j]
        alpha[j] = np.vdot(V[:, j], w).real
        w = w - alpha[j] * V[:, j] - (beta[j - 1] * V[:, j - 1] if j else 0)
        w -= V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        beta[j] = np.linalg.norm(w)
        if beta[j] < 1e-13:
            k = j + 1
            break
        V[:, j + 1] = w / beta[j]
    return V, alpha[:k], beta[:k], k


def krylov_step(H, psi: np.ndarray, dt: float, m: int = 30) -> tuple[np.ndarray, float]:
    """One step e^{-i dt H} psi and its a-posteriori error estimate."""
    norm = np.linalg.norm(psi)
    if norm == 0:
        return psi.copy(), 0.0
    V, a, b, k = _lanczos(H, psi / norm, m)
    T = np.diag(a) + np.diag(b[: k - 1], 1) + np.diag(b[: k - 1], -1)
    w, Q = np.linalg.eigh(T)
    coeffs = Q @ (np.exp(-1j * dt * w) * Q[0].conj())
    out = norm * (V[:, :k] @ coeffs)
    err = norm * abs(b[k - 1] * coeffs[k - 1]) if k < V.shape[0] else 0.0
    return out, float(err)


@dataclass(eq=False)
class Propagator:
    """e^{-itH} for a hermitian sector operator.

    ``dense_eigen`` caches a full eigendecomposition; ``krylov`` runs adaptive
    Lanczos steps keeping the local error below ``tolerance`` per unit time.
    """

    generator: fock.Operator
    method: str = "auto"
    tolerance: float = 1e-9
    krylov_dim: int = 30
    _step: float = field(default=0.5, repr=False)

    def __post_init__(self):
        if not self.generator.hermitian:
            raise DynamicsError("generator must be hermitian")
        if self.method == "auto":
            self.method = "dense_eigen" if self.basis.dim <= DENSE_LIMIT else "krylov"
        if self.method not in ("dense_eigen", "krylov"):
            raise DynamicsError(f"unknown propagation method {self.method!r}")

    @property
    def basis(self):
        return self.generator.basis

    @functools.cached_property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        w, Q = np.linalg.eigh(self.generator.dense())
        return w, Q

    def unitary(self, t: float) -> np.ndarray:
        w, Q = self.spectrum
        return (Q * np.exp(-1j * t * w)) @ Q.conj().T

    def apply(self, psi: np.ndarray, t: float) -> np.ndarray:
        """e^{-itH} applied to a vector or to the columns of a matrix."""
        if t == 0:
            return np.array(psi, dtype=complex, copy=True)
        if self.method == "dense_eigen":
            w, Q = self.spectrum
            phase = np.exp(-1j * t * w)
            coeffs = Q.conj().T @ psi
            coeffs = phase * coeffs if coeffs.ndim == 1 else phase[:, None] * coeffs
            return Q @ coeffs
        if psi.ndim == 2:
            return np.column_stack([self._krylov(psi[:, j], t) for j in range(psi.shape[1])])
        return self._krylov(psi, t)

    def _krylov(self, psi: np.ndarray, t: float) -> np.ndarray:
        H = self.generator.matrix
        out = np.asarray(psi, dtype=complex)
        sign = 1.0 if t > 0 else -1.0
        remaining = abs(t)
        dt = min(self._step, remaining)
        while remaining > 1e-15:
            dt = min(dt, remaining)
            trial, err = krylov_step(H, out, sign * dt, self.krylov_dim)
            if err > self.tolerance * dt and dt > 1e-8:
                dt *= 0.5
                continue
            out = trial
            remaining -= dt
            if err < 0.1 * self.tolerance * dt:
                dt *= 1.5
        self._step = max(dt, 1e-6)
        return out


def propagator(op: fock.Operator, method: str = "auto", tolerance: float = 1e-9) -> Propagator:
    return Propagator(op, method, tolerance)


def _check_basis(P: Propagator, basis):
    if basis != P.basis:
        raise fock.BasisMismatch("state and generator live in different bases")


def evolve_state(P: Propagator, psi: fock.StateVector, t: float) -> fock.StateVector:
    _check_basis(P, psi.basis)
    return fock.StateVector(psi.basis, P.apply(psi.amplitudes, t))


def evolve_density(P: Propagator, rho: fock.DensityMatrix, t: float) -> fock.DensityMatrix:
    """rho_t = e^{-itH} rho e^{itH}."""
    _check_basis(P, rho.basis)
    if P.method == "dense_eigen":
        U = P.unitary(t)
        return fock.DensityMatrix(rho.basis, U @ rho.matrix @ U.conj().T)
    left = P.apply(rho.matrix, t)
    both = P.apply(left.conj().T, t).conj().T
    return fock.DensityMatrix(rho.basis, both)


def evolve(P: Propagator, omega, t: float):
    if isinstance(omega, fock.StateVector):
        return evolve_state(P, omega, t)
    return evolve_density(P, omega, t)


def expectation(omega, A) -> complex:
    """omega(A) for a state vector or density matrix; A an Operator or dense/sparse matrix."""
    mat = A.matrix if isinstance(A, fock.Operator) else A
    if isinstance(A, fock.Operator) and A.basis != omega.basis:
        raise fock.BasisMismatch("observable and state live in different bases")
    if isinstance(omega, fock.StateVector):
        psi = omega.amplitudes
        return complex(np.vdot(psi, mat @ psi))
    return complex(np.sum((mat @ omega.matrix).diagonal()))


def heisenberg_expectation(P: Propagator, omega, A: fock.Operator, t: float) -> complex:
    """omega(alpha_t(A)) = Tr(A rho_t), evolving the state rather than the observable."""
    if A.basis != P.basis:
        raise fock.BasisMismatch("observable and generator live in different bases")
    return expectation(evolve(P, omega, t), A)


@dataclass(eq=False)
class System:
    """Kernels plus one sector basis, caching restricted Hamiltonians and propagators."""

    h: model.OneBodyKernel
    v: model.TwoBodyKernel
    basis: fock.SectorBasis
    method: str = "auto"
    tolerance: float = 1e-9
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def lattice(self):
        return self.h.lattice

    def _key(self, region: Region | None):
        return None if region is None or len(region) == len(self.lattice) else region.members

    def hamiltonian(self, region: Region | None = None) -> fock.Operator:
        key = ("H", self._key(region))
        if key not in self._cache:
            self._cache[key] = model.build_hamiltonian(self.h, self.v, self.basis, region)
        return self._cache[key]

    def propagator(self, region: Region | None = None) -> Propagator:
        key = ("P", self._key(region))
        if key not in self._cache:
            self._cache[key] = Propagator(self.hamiltonian(region), self.method, self.tolerance)
        return self._cache[key]

    def observable(self, f) -> fock.Operator:
        return fock.second_quantize_multiplier(f, self.basis)

    def ground_state(self) -> "GroundState":
        if "ground" not in self._cache:
            self._cache["ground"] = ground_state(self.propagator())
        return self._cache["ground"]


def localized_evolution_expectation(h, v, basis, X_region: Region, A: fock.Operator, omega, t: float,
                                    system: System | None = None) -> complex:
    """omega(alpha_t^X(A)) with the dynamics generated by H restricted to X_region."""
    if not A.support.issubset(X_region):
        raise NotLocalized("observable not localized in evolution region")
    sys_ = system if system is not None else System(h, v, basis)
    return heisenberg_expectation(sys_.propagator(X_region), omega, A, t)


def one_particle_evolution(h: model.OneBodyKernel, f, t: float) -> np.ndarray:
    """beta_t(f) = e^{ith} f e^{-ith} as a site-indexed matrix."""
    w, V = np.linalg.eigh(h.entries)
    U = (V * np.exp(1j * t * w)) @ V.conj().T
    fm = np.diag(np.asarray(f, dtype=complex)) if np.ndim(f) == 1 else np.asarray(f, dtype=complex)
    return U @ fm @ U.conj().T


@dataclass(frozen=True)
class GroundState:
    energy: float
    state: fock.StateVector
    gap: float
    residual: float
    degenerate: bool
    sector: int
    note: str = "energies are reported relative to the unshifted Hamiltonian; gap experiments shift E to 0"


def _lowest_pair(P: Propagator) -> tuple[np.ndarray, np.ndarray]:
    dim = P.basis.dim
    if dim <= DENSE_LIMIT or P.method == "dense_eigen":
        w, Q = P.spectrum if P.method == "dense_eigen" else np.linalg.eigh(P.generator.dense())
        return w[:2], Q[:, :2]
    rng = np.random.default_rng(12345)
    v0 = rng.standard_normal(dim)
    w, Q = spla.eigsh(P.generator.matrix, k=2, which="SA", tol=1e-13, v0=v0, ncv=min(dim, 40))
    order = np.argsort(w)
    return w[order], Q[:, order]


def ground_state(P: Propagator | Sequence[Propagator]) -> GroundState:
    """Lowest eigenpair across the given sector propagators, and the gap above it."""
    props = [P] if isinstance(P, Propagator) else list(P)
    if not props:
        raise DynamicsError("no sector selected")
    levels = []
    for k, p in enumerate(props):
        w, Q = _lowest_pair(p)
        for j in range(len(w)):
            levels.append((float(w[j]), k, Q[:, j]))
    levels.sort(key=lambda item: item[0])
    e0, k0, vec = levels[0]
    gap = levels[1][0] - e0 if len(levels) > 1 else float("inf")
    p = props[k0]
    vec = vec / np.linalg.norm(vec)
    # fix the global phase so the largest component is real positive
    j = np.argmax(np.abs(vec))
    vec = vec * (abs(vec[j]) / vec[j])
    residual = float(np.linalg.norm(p.generator.matrix @ vec - e0 * vec))
    return GroundState(e0, fock.StateVector(p.basis, vec.astype(complex)), float(gap), residual,
                       bool(gap < DEGENERACY_TOL), p.basis.particles)


def dense_propagator_matrix(H: fock.Operator, t: float) -> np.ndarray:
    """Reference e^{-itH} by scipy's Pade exponential, used as an independent oracle."""
    return sla.expm(-1j * t * H.dense())
