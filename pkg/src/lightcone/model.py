"""Hamiltonian kernels, their decay diagnostics and a small model zoo."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from . import fock
from .lattice import Lattice, Region

# multiples of kappa above which each propagation estimate is claimed
VELOCITY_FACTORS = {
    "mvb": 1.0,
    "transport": 1.0,
    "lightcone": 2.0,
    "weak_lrb": 2.0,
    "correlation": 3.0,
    "signal": 4.0,
    "control": 8.0,
}
VELOCITY_MARGIN = 1.05


class ModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OneBodyKernel:
    lattice: Lattice
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=complex)
        n = len(self.lattice)
        if e.shape != (n, n):
            raise ModelError(f"one-body kernel must be {n}x{n}, got {e.shape}")
        if np.max(np.abs(e - e.conj().T), initial=0.0) > 1e-12:
            raise ModelError("one-body kernel must be hermitian")
        object.__setattr__(self, "entries", e)

    def restricted(self, X: Region) -> np.ndarray:
        """Full-size matrix with entries outside X x X set to zero."""
        mask = X.indicator().astype(bool)
        return np.where(np.outer(mask, mask), self.entries, 0)


@dataclass(frozen=True, eq=False)
class TwoBodyKernel:
    lattice: Lattice
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries)
        n = len(self.lattice)
        if e.shape != (n, n):
            raise ModelError(f"two-body kernel must be {n}x{n}, got {e.shape}")
        if np.iscomplexobj(e):
            if np.any(e.imag != 0):
                raise ModelError("two-body kernel must be real")
            e = e.real
        e = e.astype(float)
        if not np.array_equal(e, e.T):
            raise ModelError("two-body kernel must be symmetric")
        object.__setattr__(self, "entries", e)

    @classmethod
    def zero(cls, lattice: Lattice) -> "TwoBodyKernel":
        return cls(lattice, np.zeros((len(lattice), len(lattice))))

    def restricted(self, X: Region) -> np.ndarray:
        mask = X.indicator().astype(bool)
        return np.where(np.outer(mask, mask), self.entries, 0.0)


@dataclass(frozen=True)
class DecayReport:
    n: int
    kappa_n: float
    nu_n: float
    kappa: float
    kappa_prime: float | None
    patch_size: int


# ---------------------------------------------------------------------------
# diagnostics


def kappa_n(h: OneBodyKernel, n: int) -> float:
    """sup_x sum_y |h_xy| |x-y|^(n+1) over the finite patch."""
    if n < 0:
        raise ModelError("order n must be nonnegative")
    d = h.lattice.distances
    return float(np.max(np.sum(np.abs(h.entries) * d ** (n + 1), axis=1)))


def nu_n(v: TwoBodyKernel, n: int) -> float:
    """sup_x sum_y |v_xy| |x-y|^n; the diagonal drops out for n >= 1."""
    if n < 0:
        raise ModelError("order n must be nonnegative")
    d = v.lattice.distances
    weight = d ** n if n > 0 else np.ones_like(d)
    return float(np.max(np.sum(np.abs(v.entries) * weight, axis=1)))


def operator_norm(m, tol: float = 1e-8, max_iter: int = 10_000) -> float:
    """Largest singular value; dense below 512 rows, else power iteration on M*M."""
    return fock.spectral_norm(m, tol, max_iter)


def group_velocity_matrix(h: OneBodyKernel, X: Region) -> np.ndarray:
    """Entries of i[h, d_X]: i h_xy (d_X(y) - d_X(x))."""
    d = X.distance_function()
    return 1j * h.entries * (d[None, :] - d[:, None])


def kappa_prime(h: OneBodyKernel, X: Region) -> float:
    return operator_norm(group_velocity_matrix(h, X))


def decay_report(h: OneBodyKernel, v: TwoBodyKernel, n: int, X: Region | None = None) -> DecayReport:
    return DecayReport(n, kappa_n(h, n), nu_n(v, n), kappa_n(h, 0),
                       None if X is None else kappa_prime(h, X), len(h.lattice))


def velocity_threshold(h: OneBodyKernel, experiment: str) -> float:
    try:
        factor = VELOCITY_FACTORS[experiment]
    except KeyError:
        raise ModelError(f"no velocity constant for experiment {experiment!r}") from None
    return factor * kappa_n(h, 0)


def default_velocity(h: OneBodyKernel, experiment: str) -> float:
    return VELOCITY_MARGIN * velocity_threshold(h, experiment)


# ---------------------------------------------------------------------------
# Hamiltonians


def build_hamiltonian(h: OneBodyKernel, v: TwoBodyKernel, basis, restrict_to: Region | None = None) -> fock.Operator:
    """dGamma(h) plus the pair term, with both kernels cut down to ``restrict_to``."""
    if h.lattice is not v.lattice or h.lattice is not basis.region.lattice:
        raise ModelError("kernels and basis must share one lattice")
    X = basis.region.lattice.full() if restrict_to is None else restrict_to
    if X.lattice is not h.lattice:
        raise ModelError("restriction region lives on another lattice")
    kin = fock.second_quantize_kernel(h.restricted(X), basis)
    pot = fock.pair_interaction(v.restricted(X), basis)
    mat = (kin.matrix + pot.matrix).tocsr()
    return fock.Operator(basis, mat, X & basis.region, True)


def boundary_coupling(h: OneBodyKernel, v: TwoBodyKernel, basis, inner: Region) -> tuple[fock.Operator, fock.Operator]:
    """Hopping and interaction terms across the boundary of ``inner``.

    Returns (S, W) with H = H_inner + H_outer + S + W.
    """
    mask = inner.indicator().astype(bool)
    cross = np.outer(mask, ~mask)
    hop = np.where(cross, h.entries, 0)
    S = fock.second_quantize_kernel(hop + hop.conj().T, basis)
    # pair term across the cut: both orderings of (x, y) contribute, so the 1/2 cancels
    vc = np.where(cross | cross.T, v.entries, 0.0)
    W = fock.pair_interaction(vc, basis)
    return S, W


# ---------------------------------------------------------------------------
# model zoo


def _nearest_neighbour(lattice: Lattice) -> np.ndarray:
    d = lattice.distances
    return np.isclose(d, lattice.grid, rtol=0, atol=1e-12)


def bose_hubbard(lattice: Lattice, J: float = 1.0, lam: float = 0.0) -> tuple[OneBodyKernel, TwoBodyKernel]:
    h = -float(J) * _nearest_neighbour(lattice).astype(float)
    v = float(lam) * np.eye(len(lattice))
    return OneBodyKernel(lattice, h), TwoBodyKernel(lattice, v)


def power_law(lattice: Lattice, J: float = 1.0, alpha: float = 4.0, u: float = 0.0,
              beta: float = 4.0) -> tuple[OneBodyKernel, TwoBodyKernel]:
    """Hopping -J (1+r)^-alpha between distinct sites; pair potential u (1+r)^-beta."""
    if alpha <= 0 or beta <= 0:
        raise ModelError("power-law exponents must be positive")
    d = lattice.distances
    h = -float(J) * (1.0 + d) ** (-float(alpha))
    np.fill_diagonal(h, 0.0)
    v = float(u) * (1.0 + d) ** (-float(beta))
    return OneBodyKernel(lattice, h), TwoBodyKernel(lattice, v)


def model_zoo(name: str, params: Mapping, lattice: Lattice) -> tuple[OneBodyKernel, TwoBodyKernel]:
    params = dict(params)
    if name == "bose_hubbard":
        lam = params.pop("lam", params.pop("lambda", 0.0))
        J = params.pop("J", 1.0)
        _reject_extra(name, params)
        return bose_hubbard(lattice, J, lam)
    if name == "power_law":
        alpha = params.pop("alpha", None)
        if alpha is None:
            raise ModelError("power_law needs alpha")
        out = power_law(lattice, params.pop("J", 1.0), alpha, params.pop("u", 0.0), params.pop("beta", alpha))
        _reject_extra(name, params)
        return out
    if name == "custom_file":
        h_path = params.pop("h_path", None)
        if h_path is None:
            raise ModelError("custom_file needs h_path")
        h = read_kernel(h_path, lattice)
        v_path = params.pop("v_path", None)
        v = read_pair_kernel(v_path, lattice) if v_path else TwoBodyKernel.zero(lattice)
        _reject_extra(name, params)
        return h, v
    raise ModelError(f"unknown model {name!r}; choose bose_hubbard, power_law or custom_file")


def _reject_extra(name: str, params: Mapping):
    if params:
        raise ModelError(f"unexpected parameters for {name}: {sorted(params)}")


# ---------------------------------------------------------------------------
# kernel files


def write_kernel(path, kernel) -> None:
    """Text format: header lines with lattice data, then ``x y real imag`` per nonzero entry."""
    lat = kernel.lattice
    e = np.asarray(kernel.entries, dtype=complex)
    lines = [f"# lightcone-kernel dim={lat.dim} grid={lat.grid!r} metric={lat.metric} sites={len(lat)}"]
    lines += ["# site " + " ".join(str(c) for c in site) for site in lat.sites]
    for x, y in zip(*np.nonzero(e)):
        lines.append(f"{x} {y} {float(e[x, y].real)!r} {float(e[x, y].imag)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _read_lattice_header(lines: list[str]) -> Lattice:
    head = dict(tok.split("=") for tok in lines[0].split()[2:])
    sites = [tuple(int(c) for c in ln.split()[2:]) for ln in lines if ln.startswith("# site")]
    return Lattice(int(head["dim"]), tuple(sites), float(head["grid"]), head["metric"])


def read_kernel_entries(path, lattice: Lattice | None = None) -> tuple[Lattice, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# lightcone-kernel"):
        raise ModelError(f"{path}: missing kernel header")
    stored = _read_lattice_header(lines)
    if lattice is None:
        lattice = stored
    elif lattice.sites != stored.sites or lattice.grid != stored.grid:
        raise ModelError(f"{path}: lattice in file does not match the configured lattice")
    e = np.zeros((len(lattice), len(lattice)), dtype=complex)
    for ln in lines:
        if ln.startswith("#") or not ln.strip():
            continue
        x, y, re, im = ln.split()
        e[int(x), int(y)] = complex(float(re), float(im))
    return lattice, e


def read_kernel(path, lattice: Lattice | None = None) -> OneBodyKernel:
    return OneBodyKernel(*read_kernel_entries(path, lattice))


def read_pair_kernel(path, lattice: Lattice | None = None) -> TwoBodyKernel:
    return TwoBodyKernel(*read_kernel_entries(path, lattice))
