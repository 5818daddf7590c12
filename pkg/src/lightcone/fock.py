"""Fixed-particle-number bosonic Fock sectors and the operators acting on them.

Occupation vectors are stored as rows of an integer array, one column per site of the
basis region, in lexicographically descending order. Index lookup uses the
combinatorial rank of an occupation vector, so it vectorizes over many states.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import io as spio
from scipy import sparse

from .lattice import GeometryError, Region

DROP_TOL = 1e-15
DENSE_LIMIT = 512


class BasisMismatch(ValueError):
    pass


def sector_dimension(sites: int, particles: int) -> int:
    """Stars-and-bars count C(n + m - 1, n)."""
    if sites == 0:
        return 1 if particles == 0 else 0
    return comb(particles + sites - 1, particles)


@functools.lru_cache(maxsize=256)
def _occupations(sites: int, particles: int) -> np.ndarray:
    if sites == 0:
        return np.zeros((1 if particles == 0 else 0, 0), dtype=np.int64)
    if sites == 1:
        return np.array([[particles]], dtype=np.int64)
    blocks = []
    for first in range(particles, -1, -1):
        rest = _occupations(sites - 1, particles - first)
        head = np.full((rest.shape[0], 1), first, dtype=np.int64)
        blocks.append(np.hstack([head, rest]))
    out = np.vstack(blocks)
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=256)
def _rank_table(sites: int, particles: int) -> np.ndarray:
    """table[i, r, o] = number of states preceding occupation o at site i with r particles left."""
    table = np.zeros((max(sites, 1), particles + 1, particles + 1), dtype=np.int64)
    for i in range(sites):
        tail = sites - i - 1
        for r in range(particles + 1):
            acc = 0
            for o in range(r, -1, -1):
                table[i, r, o] = acc
                acc += sector_dimension(tail, r - o)
    return table


class _BasisBase:
    """Shared behaviour of single sectors and finite direct sums of sectors."""

    region: Region
    states: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.states.shape[0])

    @property
    def num_sites(self) -> int:
        return len(self.region)

    def local_position(self, x: int) -> int:
        try:
            return self.region.members.index(int(x))
        except ValueError:
            raise GeometryError(f"site {x} not in basis region {list(self.region.members)}") from None

    def site_vector(self, f) -> np.ndarray:
        """Restrict a lattice-indexed or region-indexed vector to the region's sites."""
        f = np.asarray(f)
        if f.ndim != 1:
            raise BasisMismatch("site vector must be one-dimensional")
        if f.shape[0] == self.num_sites:
            return f
        if f.shape[0] == len(self.region.lattice):
            return f[list(self.region.members)]
        raise BasisMismatch(f"site vector of length {f.shape[0]} does not fit region of {self.num_sites} sites")

    def site_matrix(self, b) -> np.ndarray:
        b = np.asarray(b)
        m = self.num_sites
        if b.shape == (m, m):
            return b
        nl = len(self.region.lattice)
        if b.shape == (nl, nl):
            idx = list(self.region.members)
            return b[np.ix_(idx, idx)]
        raise BasisMismatch(f"kernel of shape {b.shape} does not fit region of {m} sites")

    @functools.cached_property
    def index(self) -> dict:
        return {tuple(int(v) for v in row): i for i, row in enumerate(self.states)}

    def index_of(self, occupation: Sequence[int]) -> int:
        return self.index[tuple(int(v) for v in occupation)]


@dataclass(frozen=True, eq=False)
class SectorBasis(_BasisBase):
    """Occupation basis of the N = ``particles`` sector over ``region``."""

    region: Region
    particles: int
    states: np.ndarray = field(repr=False)

    def __eq__(self, other) -> bool:
        return (isinstance(other, SectorBasis) and other.region == self.region
                and other.particles == self.particles)

    def __hash__(self) -> int:
        return hash((self.region, self.particles))

    @property
    def sectors(self) -> tuple["SectorBasis", ...]:
        return (self,)

    def lookup(self, occ: np.ndarray) -> np.ndarray:
        """Vectorized row index of each occupation row (rows must lie in this sector)."""
        occ = np.atleast_2d(occ)
        m, n = self.num_sites, self.particles
        if m == 0:
            return np.zeros(occ.shape[0], dtype=np.int64)
        table = _rank_table(m, n)
        remaining = n - np.cumsum(occ, axis=1) + occ
        sites = np.arange(m)[None, :]
        return table[sites, remaining, occ].sum(axis=1)


def enumerate_sector(region: Region, n: int) -> SectorBasis:
    if n < 0:
        raise ValueError("particle number must be nonnegative")
    return SectorBasis(region, int(n), _occupations(len(region), int(n)))


@dataclass(frozen=True, eq=False)
class FockSpace(_BasisBase):
    """Direct sum of sectors over one region; states are concatenated sector bases."""

    region: Region
    sectors: tuple[SectorBasis, ...]

    def __eq__(self, other) -> bool:
        return (isinstance(other, FockSpace) and other.region == self.region
                and tuple(s.particles for s in other.sectors) == tuple(s.particles for s in self.sectors))

    def __hash__(self) -> int:
        return hash((self.region, tuple(s.particles for s in self.sectors)))

    @functools.cached_property
    def states(self) -> np.ndarray:
        return np.vstack([s.states for s in self.sectors]) if self.sectors else np.zeros((0, len(self.region)), int)

    @functools.cached_property
    def offsets(self) -> dict[int, int]:
        out, acc = {}, 0
        for s in self.sectors:
            out[s.particles] = acc
            acc += s.dim
        return out

    def lookup(self, occ: np.ndarray) -> np.ndarray:
        occ = np.atleast_2d(occ)
        counts = occ.sum(axis=1)
        out = np.empty(occ.shape[0], dtype=np.int64)
        for s in self.sectors:
            mask = counts == s.particles
            if mask.any():
                out[mask] = self.offsets[s.particles] + s.lookup(occ[mask])
        missing = ~np.isin(counts, [s.particles for s in self.sectors])
        if missing.any():
            raise BasisMismatch("occupation outside the truncated Fock space")
        return out


def truncated_fock_space(region: Region, n_max: int) -> FockSpace:
    """Sectors 0..n_max over ``region``."""
    return FockSpace(region, tuple(enumerate_sector(region, k) for k in range(n_max + 1)))


def _particles_of(basis) -> set[int]:
    return {s.particles for s in basis.sectors}


# ---------------------------------------------------------------------------
# operators and states


@dataclass(frozen=True, eq=False)
class Operator:
    """Sparse matrix between two bases, tagged with the sites it acts on."""

    basis: object
    matrix: sparse.csr_matrix
    support: Region
    hermitian: bool = False
    out_basis: object = None

    def __post_init__(self):
        target = self.codomain
        if self.matrix.shape != (target.dim, self.basis.dim):
            raise BasisMismatch(f"matrix shape {self.matrix.shape} vs bases ({target.dim}, {self.basis.dim})")
        if self.hermitian:
            diff = self.matrix - self.matrix.getH()
            if diff.nnz and abs(diff).max() > 1e-12:
                raise ValueError("operator flagged hermitian is not")

    @property
    def codomain(self):
        return self.basis if self.out_basis is None else self.out_basis

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def adjoint(self) -> "Operator":
        return Operator(self.codomain, self.matrix.getH().tocsr(), self.support, self.hermitian,
                        None if self.out_basis is None else self.basis)

    def __matmul__(self, other):
        if isinstance(other, Operator):
            if other.codomain != self.basis:
                raise BasisMismatch("operator product between incompatible bases")
            out = None if self.codomain == other.basis else self.codomain
            return Operator(other.basis, (self.matrix @ other.matrix).tocsr(),
                            self.support | other.support, False, out)
        return self.matrix @ other

    def __add__(self, other: "Operator") -> "Operator":
        self._check_same(other)
        return Operator(self.basis, (self.matrix + other.matrix).tocsr(), self.support | other.support,
                        self.hermitian and other.hermitian, self.out_basis)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check_same(other)
        return Operator(self.basis, (self.matrix - other.matrix).tocsr(), self.support | other.support,
                        self.hermitian and other.hermitian, self.out_basis)

    def scale(self, c: complex) -> "Operator":
        return Operator(self.basis, (c * self.matrix).tocsr(), self.support,
                        self.hermitian and np.isreal(c), self.out_basis)

    def _check_same(self, other: "Operator"):
        if other.basis != self.basis or other.codomain != self.codomain:
            raise BasisMismatch("operator sum between incompatible bases")

    def norm(self) -> float:
        """Spectral norm."""
        return spectral_norm(self.matrix)


def spectral_norm(m, tol: float = 1e-8, max_iter: int = 10_000) -> float:
    """Largest singular value: exact for diagonal or small matrices, else power iteration on M*M."""
    if sparse.issparse(m):
        m = m.tocsr()
        if m.shape[0] == m.shape[1] and m.nnz == np.count_nonzero(m.diagonal()):
            return float(np.max(np.abs(m.diagonal()), initial=0.0))
        if max(m.shape) <= DENSE_LIMIT:
            m = m.toarray()
    if not sparse.issparse(m):
        m = np.asarray(m)
        if m.size == 0:
            return 0.0
        if max(m.shape) <= DENSE_LIMIT:
            return float(np.linalg.norm(m, 2))
    x = np.random.default_rng(0).standard_normal(m.shape[1]) + 0j
    x /= np.linalg.norm(x)
    lam = prev = 0.0
    for _ in range(max_iter):
        y = m.conj().T @ (m @ x)
        lam = float(np.linalg.norm(y))
        if lam == 0.0:
            return 0.0
        x = y / lam
        if abs(lam - prev) <= tol * lam:
            break
        prev = lam
    return float(np.sqrt(lam))


def commutator(a: Operator, b: Operator) -> Operator:
    return (a @ b) - (b @ a)


def identity_operator(basis) -> Operator:
    return Operator(basis, sparse.identity(basis.dim, dtype=complex, format="csr"),
                    Region(basis.region.lattice, ()), True)


def operator_from_matrix(basis, matrix, support: Region | Iterable[int], hermitian: bool | None = None) -> Operator:
    if not isinstance(support, Region):
        support = Region(basis.region.lattice, support)
    mat = sparse.csr_matrix(np.asarray(matrix, dtype=complex) if not sparse.issparse(matrix) else matrix,
                            dtype=complex)
    if hermitian is None:
        diff = mat - mat.getH()
        hermitian = not diff.nnz or abs(diff).max() <= 1e-12
    return Operator(basis, mat, support, hermitian)


@dataclass(frozen=True, eq=False)
class StateVector:
    basis: object
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (self.basis.dim,):
            raise BasisMismatch("amplitude vector does not match basis")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        return StateVector(self.basis, self.amplitudes / self.norm)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.basis, np.outer(self.amplitudes, self.amplitudes.conj()))

    def expectation(self, op: Operator) -> complex:
        if op.basis != self.basis:
            raise BasisMismatch("observable and state live in different bases")
        psi = self.amplitudes
        return complex(np.vdot(psi, op.matrix @ psi))


def basis_state(basis, occupation: Sequence[int]) -> StateVector:
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index_of(occupation)] = 1.0
    return StateVector(basis, amps)


def superposition(basis, terms: Mapping[tuple, complex]) -> StateVector:
    """Normalized superposition of occupation states given as {occupation: amplitude}."""
    amps = np.zeros(basis.dim, dtype=complex)
    for occ, c in terms.items():
        amps[basis.index_of(occ)] += c
    return StateVector(basis, amps).normalized()


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    basis: object
    matrix: np.ndarray

    def __post_init__(self):
        if self.matrix.shape != (self.basis.dim, self.basis.dim):
            raise BasisMismatch("density matrix does not match basis")

    @functools.cached_property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def expectation(self, op: Operator) -> complex:
        if op.basis != self.basis:
            raise BasisMismatch("observable and state live in different bases")
        return complex((op.matrix @ self.matrix).trace())

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))


# ---------------------------------------------------------------------------
# second quantization


def _assemble(rows, cols, vals, shape) -> sparse.csr_matrix:
    rows = np.concatenate(rows) if rows else np.zeros(0, int)
    cols = np.concatenate(cols) if cols else np.zeros(0, int)
    vals = np.concatenate(vals).astype(complex) if vals else np.zeros(0, complex)
    keep = np.abs(vals) > DROP_TOL
    mat = sparse.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=shape)
    return mat.tocsr()


def _support_from_sites(basis, local_sites: Iterable[int]) -> Region:
    return Region(basis.region.lattice, [basis.region.members[i] for i in local_sites])


def second_quantize_multiplier(f, basis) -> Operator:
    """dGamma of a multiplication operator: diagonal with sum_x f(x) occ(x)."""
    fv = basis.site_vector(f)
    diag = basis.states @ fv
    mat = sparse.diags(np.asarray(diag, dtype=complex), format="csr")
    mat.eliminate_zeros()
    support = _support_from_sites(basis, np.flatnonzero(fv != 0))
    return Operator(basis, mat, support, bool(np.all(np.isreal(fv))))


def second_quantize_kernel(b, basis) -> Operator:
    """sum_{x,y} b_xy a*_x a_y on every sector of ``basis``."""
    bm = basis.site_matrix(b).astype(complex)
    occ = basis.states
    rows, cols, vals = [], [], []
    diag = occ @ np.diag(bm)
    rows.append(np.arange(basis.dim))
    cols.append(np.arange(basis.dim))
    vals.append(diag)
    xs, ys = np.nonzero(bm)
    for x, y in zip(xs, ys):
        if x == y:
            continue
        src = np.flatnonzero(occ[:, y] > 0)
        if src.size == 0:
            continue
        new = occ[src].copy()
        amp = np.sqrt(new[:, y]) * np.sqrt(new[:, x] + 1.0)
        new[:, y] -= 1
        new[:, x] += 1
        rows.append(basis.lookup(new))
        cols.append(src)
        vals.append(bm[x, y] * amp)
    mat = _assemble(rows, cols, vals, (basis.dim, basis.dim))
    touched = np.flatnonzero(np.any(bm != 0, axis=0) | np.any(bm != 0, axis=1))
    herm = np.allclose(bm, bm.conj().T, atol=1e-14, rtol=0)
    return Operator(basis, mat, _support_from_sites(basis, touched), herm)


def pair_interaction(v, basis) -> Operator:
    """Normal-ordered pair term 1/2 sum v_xy a*_x a*_y a_y a_x, diagonal in occupations."""
    vm = np.asarray(basis.site_matrix(v))
    if np.iscomplexobj(vm):
        if np.any(vm.imag != 0):
            raise ValueError("pair potential must be real")
        vm = vm.real
    if not np.array_equal(vm, vm.T):
        raise ValueError("pair potential must be symmetric")
    occ = basis.states.astype(float)
    diag = 0.5 * (np.einsum("ix,xy,iy->i", occ, vm, occ) - occ @ np.diag(vm))
    mat = sparse.diags(diag.astype(complex), format="csr")
    mat.eliminate_zeros()
    touched = np.flatnonzero(np.any(vm != 0, axis=0))
    return Operator(basis, mat, _support_from_sites(basis, touched), True)


# ---------------------------------------------------------------------------
# ladder operators


def annihilator(x: int, source: SectorBasis) -> Operator:
    """Matrix of a_x from sector n to sector n-1 (zero map when n = 0)."""
    p = source.local_position(x)
    n = source.particles
    support = Region(source.region.lattice, [x])
    if n == 0:
        target = enumerate_sector(source.region, 0)
        return Operator(source, sparse.csr_matrix((target.dim, source.dim), dtype=complex), support,
                        False, target)
    target = enumerate_sector(source.region, n - 1)
    src = np.flatnonzero(source.states[:, p] > 0)
    new = source.states[src].copy()
    amp = np.sqrt(new[:, p].astype(float))
    new[:, p] -= 1
    mat = _assemble([target.lookup(new)], [src], [amp], (target.dim, source.dim))
    return Operator(source, mat, support, False, target)


def creator(x: int, source: SectorBasis) -> Operator:
    """Matrix of a*_x from sector n to sector n+1."""
    up = enumerate_sector(source.region, source.particles + 1)
    return annihilator(x, up).adjoint()


def apply_annihilator(x: int, psi: StateVector) -> StateVector:
    if not isinstance(psi.basis, SectorBasis):
        raise BasisMismatch("annihilator acts on a single sector")
    op = annihilator(x, psi.basis)
    return StateVector(op.codomain, op.matrix @ psi.amplitudes)


# ---------------------------------------------------------------------------
# tensor factorization and partial traces


@dataclass(frozen=True, eq=False)
class Factorization:
    """Relabeling of a sector over R as the sum over k of Sector(S,k) (x) Sector(R minus S, n-k).

    ``inner[i]`` and ``outer[i]`` are the positions of state ``i`` inside the
    truncated Fock spaces over S and its complement; ``target[i]`` its row in the
    block-ordered product space, blocks ordered by k ascending.
    """

    basis: SectorBasis
    inside: FockSpace
    outside: FockSpace
    inner: np.ndarray
    outer: np.ndarray
    target: np.ndarray
    blocks: tuple[tuple[int, int, int], ...]

    @functools.cached_property
    def unitary(self) -> sparse.csr_matrix:
        dim = self.basis.dim
        return sparse.csr_matrix((np.ones(dim, dtype=complex), (self.target, np.arange(dim))), shape=(dim, dim))


def factorize(basis: SectorBasis, S: Region) -> Factorization:
    if not S.issubset(basis.region):
        raise GeometryError(f"{S} is not contained in the basis region")
    pos_in = [basis.local_position(x) for x in S]
    comp = basis.region - S
    pos_out = [basis.local_position(x) for x in comp]
    n = basis.particles
    inside = truncated_fock_space(S, n)
    outside = truncated_fock_space(comp, n)
    occ_in = basis.states[:, pos_in]
    occ_out = basis.states[:, pos_out]
    inner = inside.lookup(occ_in)
    outer = outside.lookup(occ_out)
    k = occ_in.sum(axis=1)
    blocks, offset = [], 0
    target = np.empty(basis.dim, dtype=np.int64)
    for kk in range(n + 1):
        d_in = sector_dimension(len(S), kk)
        d_out = sector_dimension(len(comp), n - kk)
        mask = k == kk
        local_in = inner[mask] - inside.offsets[kk]
        local_out = outer[mask] - outside.offsets[n - kk]
        target[mask] = offset + local_in * d_out + local_out
        blocks.append((kk, offset, d_in * d_out))
        offset += d_in * d_out
    return Factorization(basis, inside, outside, inner, outer, target, tuple(blocks))


def _as_matrix(rho) -> tuple[object, np.ndarray]:
    if isinstance(rho, StateVector):
        return rho.basis, None
    return rho.basis, np.asarray(rho.matrix)


def partial_trace(rho, Y: Region) -> DensityMatrix:
    """Trace out the complement of Y; the result lives on the truncated Fock space over Y."""
    basis = rho.basis
    if not Y.issubset(basis.region):
        raise GeometryError(f"{Y} is not contained in the basis region")
    n_max = max(_particles_of(basis))
    space_y = truncated_fock_space(Y, n_max)
    comp = basis.region - Y
    space_c = truncated_fock_space(comp, n_max)
    py = [basis.local_position(x) for x in Y]
    pc = [basis.local_position(x) for x in comp]
    iy = space_y.lookup(basis.states[:, py])
    ic = space_c.lookup(basis.states[:, pc])
    if isinstance(rho, StateVector):
        psi = np.zeros((space_y.dim, space_c.dim), dtype=complex)
        psi[iy, ic] = rho.amplitudes
        return DensityMatrix(space_y, psi @ psi.conj().T)
    mat = np.asarray(rho.matrix)
    out = np.zeros((space_y.dim, space_y.dim), dtype=complex)
    order = np.argsort(ic, kind="stable")
    bounds = np.flatnonzero(np.diff(ic[order])) + 1
    for group in np.split(order, bounds):
        out[np.ix_(iy[group], iy[group])] += mat[np.ix_(group, group)]
    return DensityMatrix(space_y, out)


def lift_local_operator(blocks: Mapping[int, np.ndarray], S: Region, basis: SectorBasis) -> Operator:
    """Embed A_S (block k acting on Sector(S,k)) as A_S (x) 1 inside ``basis``."""
    fac = factorize(basis, S)
    occ_k = fac.basis.states[:, [basis.local_position(x) for x in S]].sum(axis=1)
    rows, cols, vals = [], [], []
    by_outer: dict[int, np.ndarray] = {}
    for i in range(basis.dim):
        by_outer.setdefault(int(fac.outer[i]), []).append(i)
    for members in by_outer.values():
        members = np.asarray(members)
        kk = int(occ_k[members[0]])
        block = blocks.get(kk)
        if block is None:
            continue
        local = fac.inner[members] - fac.inside.offsets[kk]
        sub = np.asarray(block)[np.ix_(local, local)]
        r, c = np.nonzero(sub)
        rows.append(members[r])
        cols.append(members[c])
        vals.append(sub[r, c])
    mat = _assemble(rows, cols, vals, (basis.dim, basis.dim))
    return operator_from_matrix(basis, mat, S)


def local_blocks(op: Operator, S: Region, atol: float = 1e-12) -> dict[int, np.ndarray] | None:
    """Blocks A_S^{(k)} with U_S A U_S* = sum_k A_S^{(k)} (x) 1, or None if no such form exists."""
    basis = op.basis
    fac = factorize(basis, S)
    coo = op.matrix.tocoo()
    off = fac.outer[coo.row] != fac.outer[coo.col]
    if np.any(np.abs(coo.data[off]) > atol):
        return None
    csr = op.matrix.tocsr()
    order = np.argsort(fac.outer, kind="stable")
    cuts = np.flatnonzero(np.diff(fac.outer[order])) + 1
    found: dict[int, np.ndarray] = {}
    for members in np.split(order, cuts):
        o = int(fac.outer[members[0]])
        kk = int(basis.particles - fac.outside.states[o].sum())
        local = fac.inner[members] - fac.inside.offsets[kk]
        d = sector_dimension(len(S), kk)
        block = np.zeros((d, d), dtype=complex)
        block[np.ix_(local, local)] = csr[members][:, members].toarray()
        prev = found.get(kk)
        if prev is None:
            found[kk] = block
        elif np.max(np.abs(prev - block), initial=0.0) > atol:
            return None
    return found


def is_localized(op: Operator, S: Region, atol: float = 1e-12) -> bool:
    """Factorization criterion: A acts as A_S (x) 1 under the splitting of S and its complement."""
    return local_blocks(op, S, atol) is not None


def commutes_with_outside_ladders(family: Mapping[int, Operator], S: Region, atol: float = 1e-12) -> bool:
    """Commutation criterion: [A, a_x] = [A, a*_x] = 0 for x outside S, as maps between
    consecutive sectors of ``family`` (particle number -> operator on that sector)."""
    ns = sorted(family)
    for lo, hi in zip(ns, ns[1:]):
        if hi != lo + 1:
            continue
        a_lo, a_hi = family[lo], family[hi]
        outside = a_hi.basis.region - S
        for x in outside:
            down = annihilator(x, a_hi.basis).matrix
            lhs = a_lo.matrix @ down - down @ a_hi.matrix
            if lhs.nnz and abs(lhs).max() > atol:
                return False
            up = creator(x, a_lo.basis).matrix
            lhs = a_hi.matrix @ up - up @ a_lo.matrix
            if lhs.nnz and abs(lhs).max() > atol:
                return False
    return True


def operator_family(build: Callable[[SectorBasis], Operator], region: Region, particles: Iterable[int]) -> dict:
    return {n: build(enumerate_sector(region, n)) for n in particles}


# ---------------------------------------------------------------------------
# fidelity


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    # eigenvalues below the solver's resolution are zero; their square roots would not be
    floor = 4 * m.shape[0] * np.finfo(float).eps * max(float(np.abs(w).max(initial=0.0)), 1e-300)
    w = np.where(w > floor, w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Trace norm of sqrt(rho) sqrt(sigma)."""
    if rho.basis != sigma.basis:
        raise BasisMismatch("fidelity between different bases")
    if np.array_equal(rho.matrix, sigma.matrix):
        return rho.trace
    prod = _psd_sqrt(rho.matrix) @ _psd_sqrt(sigma.matrix)
    return float(np.linalg.svd(prod, compute_uv=False).sum())


def fidelity_with_pure(rho: DensityMatrix, phi: np.ndarray) -> float:
    """sqrt(<phi, rho phi>) for a normalized vector phi."""
    val = np.vdot(phi, rho.matrix @ phi).real
    return float(np.sqrt(max(val, 0.0)))


def pure_vector(rho: DensityMatrix, atol: float = 1e-10) -> np.ndarray | None:
    """Return phi if rho = |phi><phi| up to ``atol``, else None."""
    w, v = np.linalg.eigh(0.5 * (rho.matrix + rho.matrix.conj().T))
    if abs(w[-1] - 1.0) > atol or np.any(np.abs(w[:-1]) > atol):
        return None
    return v[:, -1]


# ---------------------------------------------------------------------------
# text export


def write_matrix(path, matrix) -> None:
    """Matrix Market coordinate export for cross-checking with other tools."""
    spio.mmwrite(str(path), sparse.coo_matrix(matrix), precision=17)


def read_matrix(path) -> np.ndarray:
    data = spio.mmread(str(path))
    return data.toarray() if sparse.issparse(data) else np.asarray(data)
