"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the terminal summary under "acceptance criteria".
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import linalg

from lightcone import bounds, cli, dynamics, fock, model
from lightcone.lattice import Lattice, make_cutoff
from conftest import ACCEPTANCE_LINES, chain_system, number_on

ROOT = Path(__file__).resolve().parents[1]


def record(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}" + (f": {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def identity_on(region):
    return lambda b: fock.operator_from_matrix(b, np.eye(b.dim), region, True)


def dg(b, basis):
    return fock.second_quantize_kernel(b, basis).dense()


# ---------------------------------------------------------------------------


def test_criterion_01_operator_algebra():
    rng = np.random.default_rng(2024)
    worst, worst_ccr = 0.0, 0.0
    for _ in range(30):
        L = int(rng.integers(1, 6))
        n = int(rng.integers(0, 4))
        basis = fock.enumerate_sector(Lattice.chain(L).full(), n)
        v = rng.standard_normal((L, L)) + 1j * rng.standard_normal((L, L))
        w = rng.standard_normal((L, L)) + 1j * rng.standard_normal((L, L))
        c = complex(rng.standard_normal(), rng.standard_normal())
        errs = [np.abs(dg(v + c * w, basis) - dg(v, basis) - c * dg(w, basis)).max(initial=0.0),
                np.abs(dg(v.conj().T, basis) - dg(v, basis).conj().T).max(initial=0.0)]
        big_a, big_b, small = dg(v, basis), dg(w, basis), w
        for _ in range(2):
            big_b = big_a @ big_b - big_b @ big_a
            small = v @ small - small @ v
            errs.append(np.abs(big_b - dg(small, basis)).max(initial=0.0) / max(1.0, np.abs(big_b).max(initial=0.0)))
        g = rng.standard_normal((L, L)) + 1j * rng.standard_normal((L, L))
        herm = (v + v.conj().T) / 2
        gap = dg(herm + g @ g.conj().T, basis) - dg(herm, basis)
        errs.append(max(0.0, -np.linalg.eigvalsh(gap).min(initial=0.0)))
        u = rng.standard_normal((L, L))
        V = fock.pair_interaction(u + u.T, basis).dense()
        F = fock.second_quantize_multiplier(rng.standard_normal(L), basis).dense()
        errs.append(np.abs(V @ F - F @ V).max(initial=0.0))
        worst = max(worst, max(errs))
        lo, hi = basis, fock.enumerate_sector(basis.region, n + 1)
        for x in range(L):
            for y in range(L):
                lhs = (fock.annihilator(y, hi).matrix @ fock.creator(x, lo).matrix).toarray()
                if n > 0:
                    down = fock.enumerate_sector(basis.region, n - 1)
                    lhs -= (fock.creator(x, down).matrix @ fock.annihilator(y, lo).matrix).toarray()
                worst_ccr = max(worst_ccr, np.abs(lhs - (x == y) * np.eye(lo.dim)).max(initial=0.0))
    record(1, "operator algebra", worst <= 1e-10 and worst_ccr <= 1e-12,
           f"identity residual {worst:.1e} (tol 1e-10), CCR residual {worst_ccr:.1e} (tol 1e-12)")


def test_criterion_02_dynamics():
    rng = np.random.default_rng(7)
    S = chain_system(7, 3, lam=1.5)
    H = S.hamiltonian()
    dense = dynamics.Propagator(H, "dense_eigen")
    kry = dynamics.Propagator(H, "krylov", tolerance=1e-11)
    psi = fock.StateVector(S.basis, rng.standard_normal(S.basis.dim) + 1j * rng.standard_normal(S.basis.dim)).normalized()
    g = rng.standard_normal((S.basis.dim, 5)) + 1j * rng.standard_normal((S.basis.dim, 5))
    rho = fock.DensityMatrix(S.basis, g @ g.conj().T / np.trace(g @ g.conj().T).real)
    conserve, agree = 0.0, 0.0
    for t in (0.5, 2.0, -3.0):
        for P in (dense, kry):
            conserve = max(conserve, abs(dynamics.evolve(P, psi, t).norm - 1))
            out = dynamics.evolve(P, rho, t)
            conserve = max(conserve, abs(out.trace - 1), max(0.0, -out.eigenvalues().min()))
        agree = max(agree, np.linalg.norm(dense.apply(psi.amplitudes, t) - kry.apply(psi.amplitudes, t)))
    A = number_on(0)(S.basis)
    Hd = H.dense()
    exact = np.vdot(psi.amplitudes, 1j * (Hd @ A.dense() - A.dense() @ Hd) @ psi.amplitudes).real
    f = lambda t: dynamics.heisenberg_expectation(dense, psi, A, t).real  # noqa: E731
    errs = [abs((f(dt) - f(-dt)) / (2 * dt) - exact) for dt in (0.08, 0.04, 0.02)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    ok = conserve <= 1e-9 and agree <= 1e-9 and S.basis.dim <= 200 and min(ratios) >= 3.5
    record(2, "dynamics", ok, f"conservation {conserve:.1e}, Krylov vs dense {agree:.1e} on dim {S.basis.dim}, "
                              f"finite-difference error ratios {', '.join(f'{r:.2f}' for r in ratios)}")


def test_criterion_03_intertwining():
    f = np.r_[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]
    S = chain_system(6, 2, lam=0.0)
    omega = fock.superposition(S.basis, {(2, 0, 0, 0, 0, 0): 1.0, (0, 1, 0, 1, 0, 0): 0.5 + 0.5j})
    rep = bounds.verify_dgamma_intertwining(S, f, omega, [0.3, 1.1, 2.7])
    interacting = chain_system(6, 2, lam=1.0)
    info = bounds.verify_dgamma_intertwining(interacting, f, fock.basis_state(interacting.basis, (2, 0, 0, 0, 0, 0)),
                                             [0.3, 1.1, 2.7])
    ACCEPTANCE_LINES.append(f"[INFO] criterion  3 with on-site interaction lambda=1 the identity fails: "
                            f"max difference {info.metadata['max_difference']:.3e}")
    record(3, "intertwining (Bose-Hubbard L=6, n=2, lambda=0)", rep.passed,
           f"max difference {rep.metadata['max_difference']:.1e} (tol 1e-9)")


def test_criterion_04_mvb():
    S = chain_system(10, 2, J=1.0, lam=1.0)
    X = S.lattice.region([0, 1, 2])
    omega = fock.basis_state(S.basis, (0, 0, 2, 0, 0, 0, 0, 0, 0, 0))
    kappa = model.kappa_n(S.h, 0)
    rep = bounds.verify_mvb(S, X, omega, c=1.05 * kappa, etas=[1, 2, 3, 4, 5, 6, 7, 9], time_fractions=[0.5])
    ok = rep.passed and rep.fits["leakage_vs_eta"].upper <= -1.25
    record(4, "maximal velocity bound", ok,
           f"slope {rep.fitted_exponent:.2f} +- {rep.fit_stderr:.2f} (threshold -1.25), verdicts {rep.verdicts}")


def test_criterion_05_lightcone_approximation():
    S = chain_system(8, 2)
    X = S.lattice.region([0, 1])

    def pair(b):
        N = number_on(0)(b)
        return N @ N - N

    omega = fock.basis_state(S.basis, (1, 1, 0, 0, 0, 0, 0, 0))
    kappa = model.kappa_n(S.h, 0)
    rep = bounds.verify_lightcone_approx(S, X, pair, omega, c=2.1 * kappa, xis=[1, 2, 3, 4, 5, 6])
    record(5, "light-cone approximation", rep.passed,
           f"slope {rep.fitted_exponent:.2f} +- {rep.fit_stderr:.2f} (threshold -1.25), "
           f"zero when covering {rep.verdicts['zero_when_covering']}, D/t bounded {rep.verdicts['linear_in_t_bounded']}")


def test_criterion_06_weak_lieb_robinson():
    S = chain_system(10, 2)
    X, Y = S.lattice.region([0]), S.lattice.region([9])
    cat = fock.superposition(S.basis, {(2,) + (0,) * 9: 1.0, (0,) * 9 + (2,): 1.0})
    kappa = model.kappa_n(S.h, 0)
    pairs = []
    for d in range(2, 10):
        occ = [0] * 10
        occ[9 - d] = 2
        state = fock.superposition(S.basis, {tuple(occ): 1.0, (0,) * 9 + (2,): 1.0})
        pairs.append(bounds.LocalPair(S.lattice.region([9 - d]), Y, number_on(9 - d), number_on(9), state))
    rep = bounds.verify_weak_lrb(S, X, Y, number_on(0), number_on(9), cat, c=2.1 * kappa, xis=[1, 2, 3, 4],
                                 shell="annulus", front_times=np.linspace(0, 6, 121), wavefront=pairs,
                                 suppression=1e-6, arrival=1e-2)
    m = rep.metadata
    record(6, "weak Lieb-Robinson bound", rep.passed,
           f"max before front {m['max_before_front']:.2e} (< 1e-6 * {m['norms_AB']:.0f}), "
           f"max after {m['max_overall']:.2e}, wavefront slope {m['wavefront_slope']:.2f}, "
           f"residual {m['wavefront_max_relative_residual']:.0%}")


def test_criterion_07_signal_detector():
    lat = Lattice.chain(9)
    h, v = model.power_law(lat, J=1.0, alpha=3.5, u=1.0)
    S = dynamics.System(h, v, fock.enumerate_sector(lat.full(), 2))
    X, Y = lat.region([0]), lat.region([8])
    rho = fock.superposition(S.basis, {(2,) + (0,) * 8: 1.0, (1,) + (0,) * 7 + (1,): 1.0})
    grid = np.geomspace(0.005, 0.05, 5)
    linear = bounds.verify_signal_detector(S, X, Y, number_on(0), number_on(8), rho, xis=[2, 3, 4], shell="annulus",
                                           reference=(0.05, 0.05), slope_rs=grid, slope_times=grid)
    commuting = bounds.verify_signal_detector(S, X, Y, number_on(0), number_on(8),
                                              fock.basis_state(S.basis, (2,) + (0,) * 8), xis=[2, 3, 4],
                                              rs=[0.1, 0.3], time_fractions=[0.5, 0.99])
    exact_zero = linear.verdicts["zero_at_r0"] and all(p.lhs == 0 for p in commuting.points)
    bh = chain_system(9, 2)
    rho_bh = fock.superposition(bh.basis, {(2,) + (0,) * 8: 1.0, (1,) + (0,) * 7 + (1,): 1.0})
    kappa = model.kappa_n(bh.h, 0)
    quiet = bounds.verify_signal_detector(bh, bh.lattice.region([0]), bh.lattice.region([8]), number_on(0),
                                          number_on(8), rho_bh, c=4.2 * kappa, xis=[4], shell="annulus",
                                          rs=[0.1, 0.3, 0.47], suppression=1e-6)
    sr, stt = linear.fits["SD_vs_r"].slope, linear.fits["SD_vs_t"].slope
    ok = exact_zero and linear.passed and quiet.passed
    record(7, "signal detector", ok,
           f"exact zeros {exact_zero}, slope in r {sr:.3f}, slope in t {stt:.3f} (1 +- 0.1), "
           f"max inside cone on L=9 {quiet.metadata['max_in_window']:.1e} (< 1e-6)")


def test_criterion_08_control_fidelity():
    S = chain_system(8, 2)
    X, Y = S.lattice.region([0, 1]), S.lattice.region([6, 7])
    rho = fock.superposition(S.basis, {(2,) + (0,) * 7: 1.0, (1, 1) + (0,) * 6: 1.0})
    kappa = model.kappa_n(S.h, 0)

    def phase(b):
        return fock.operator_from_matrix(b, np.diag(np.exp(1j * np.pi * b.states[:, 0])), S.lattice.region([0]))

    ident = bounds.verify_control_fidelity(S, X, Y, identity_on(X), rho, c=8.4 * kappa, xis=[1, 2],
                                           time_fractions=[0.5, 0.99])
    rep = bounds.verify_control_fidelity(S, X, Y, phase, rho, c=8.4 * kappa, xis=[1, 1.5, 2, 2.5])
    deficit = rep.metadata["max_deficit_in_window"]
    ok = all(p.lhs == 0 for p in ident.points) and deficit <= 1e-5 and rep.verdicts["two_way_fidelity"]
    record(8, "control fidelity", ok,
           f"identity exact {all(p.lhs == 0 for p in ident.points)}, max 1-F {deficit:.1e} (<= 1e-5), "
           f"two-way difference {rep.metadata['two_way_max_difference']:.1e} (<= 1e-10)")


def test_criterion_09_gap_clustering():
    S = chain_system(8, 8, J=1.0, lam=8.0)
    gs = S.ground_state()
    H = S.hamiltonian().dense()
    w, Q = linalg.eigh(H, subset_by_index=[0, 1], driver="evr")
    overlap = abs(np.vdot(Q[:, 0], gs.state.amplitudes))
    monotone, details = True, []
    for i in (0, 1, 2):
        Ys = [S.lattice.region([i + d]) for d in range(2, 6) if i + d < 8]
        rep = bounds.verify_gap_clustering(S, S.lattice.region([i]), Ys, number_on(i),
                                           [number_on(y.members[0]) for y in Ys])
        monotone &= rep.verdicts["monotone_decay"]
        details.append(", ".join(f"{c:.1e}" for c in rep.metadata["connected_correlators"]))
    ok = monotone and gs.residual <= 1e-9 and abs(gs.energy - w[0]) <= 1e-9 and abs(overlap - 1) <= 1e-9
    record(9, "gap clustering", ok,
           f"E0 {gs.energy:.8f} vs dense {w[0]:.8f}, gap {gs.gap:.3f}, residual {gs.residual:.1e}; "
           f"connected <n_i n_j> by separation: {' | '.join(details)}")


def test_criterion_10_macroscopic_transport():
    S = chain_system(10, 3)
    X = S.lattice.region([0, 1, 2])
    omega = fock.basis_state(S.basis, (1, 1, 1, 0, 0, 0, 0, 0, 0, 0))
    rep = bounds.verify_macroscopic_transport(S, X, omega, 1 / 6, 1 / 3, etas=[1, 2, 3, 4, 5, 6, 7])
    impossible = bounds.verify_macroscopic_transport(S, X, omega, 1 / 6, 1 + 1e-9, etas=[1, 2, 3])
    zero_imp = all(p.lhs == 0 for p in impossible.points)
    ok = rep.passed and zero_imp
    record(10, "macroscopic transport", ok,
           f"slope {rep.fitted_exponent:.2f} +- {rep.fit_stderr:.2f} (threshold -1.25), zero at t=0 "
           f"{rep.verdicts['zero_at_t0']}, impossible fraction zero {zero_imp}")


def test_criterion_11_commutator_machinery():
    rng = np.random.default_rng(11)
    closed_err = 0.0
    for _ in range(10):
        A = rng.standard_normal((9, 9)) + 1j * rng.standard_normal((9, 9))
        f = rng.standard_normal(9)
        for k in (1, 2, 3):
            nested = bounds.nested_commutator(A, f, k)
            closed_err = max(closed_err, np.abs(bounds.iterated_commutator(A, f, k) - nested).max()
                             / max(1.0, np.abs(nested).max()))
    lat = Lattice.chain(20)
    h, _ = model.bose_hubbard(lat, J=1.0)
    X = lat.region([0])
    schur_ok = True
    for k in (1, 2, 3):
        rep = bounds.verify_commutator_norm_bound(h, X, k, 2)
        schur_ok &= rep.passed and rep.metadata["below_M"]
    chi = make_cutoff(1.0)
    s_values = np.geomspace(6, 60, 9)
    exps = {n: bounds.verify_commutator_expansion(h, X, chi, n, s_values) for n in (1, 2)}
    ok = closed_err <= 1e-12 and schur_ok and all(r.passed for r in exps.values())
    record(11, "commutator machinery", ok,
           f"closed form vs nested {closed_err:.1e}, Schur bound holds {schur_ok}, remainder slope+2se "
           + ", ".join(f"n={n}: {r.fits['remainder_vs_s'].upper:.2f} (<= {-(n + 1) + 0.25})" for n, r in exps.items())
           + f", symmetrized {exps[1].fits['symmetrized_vs_s'].upper:.2f} (<= -1.75)")


def test_criterion_12_astlo_geometry():
    rng = np.random.default_rng(12)
    S = chain_system(10, 2)
    worst = np.inf
    for _ in range(10):
        members = sorted(rng.choice(10, size=int(rng.integers(1, 4)), replace=False))
        X = S.lattice.region(members)
        c = float(rng.uniform(2.5, 5.0))
        v = float(rng.uniform(2.05, c - 0.1))
        eta = float(rng.uniform(0.5, 5.0))
        t = float(rng.uniform(-0.999, 0.999)) * eta / c
        worst = min(worst, min(bounds.astlo_geometry(X, eta, t, c, v, S.basis).values()))
    record(12, "ASTLO geometry", worst >= -1e-10, f"minimum diagonal slack {worst:.2e} (>= -1e-10)")


def test_criterion_13_factorization():
    rng = np.random.default_rng(13)
    lat = Lattice.chain(5)
    basis = fock.enumerate_sector(lat.full(), 3)
    unit = 0.0
    for members in ([0], [1, 3], [0, 2, 4], [4]):
        U = fock.factorize(basis, lat.region(members)).unitary
        unit = max(unit, np.abs((U @ U.getH()).toarray() - np.eye(basis.dim)).max())
    dual = 0.0
    for _ in range(20):
        Y = lat.region(sorted(rng.choice(5, size=int(rng.integers(1, 4)), replace=False)))
        g = rng.standard_normal((basis.dim, basis.dim)) + 1j * rng.standard_normal((basis.dim, basis.dim))
        rho = fock.DensityMatrix(basis, g @ g.conj().T / np.trace(g @ g.conj().T).real)
        red = fock.partial_trace(rho, Y)
        blocks = {k: (lambda m: m + m.conj().T)(rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
                  for k in range(4) for d in [fock.sector_dimension(len(Y), k)]}
        full = linalg.block_diag(*[blocks[k] for k in range(4)])
        dual = max(dual, abs(rho.expectation(fock.lift_local_operator(blocks, Y, basis)) - np.trace(red.matrix @ full)))
    agree = 0
    for j in range(10):
        S = lat.region(sorted(rng.choice(5, size=2, replace=False)))
        blocks = {k: rng.standard_normal((d, d)) for k in range(5) for d in [fock.sector_dimension(2, k)]}
        family = fock.operator_family(lambda b: fock.lift_local_operator(blocks, S, b), lat.full(), range(5))
        if j % 2:
            x, y = S.members[0], S.complement().members[0]
            hop = np.zeros((5, 5))
            hop[x, y] = hop[y, x] = 1.0
            family = {n: op + fock.second_quantize_kernel(hop, op.basis) for n, op in family.items()}
        loc = all(fock.is_localized(op, S) for op in family.values())
        agree += loc == fock.commutes_with_outside_ladders(family, S) and loc == (j % 2 == 0)
    ok = unit <= 1e-12 and dual <= 1e-10 and agree == 10
    record(13, "Fock factorization and partial trace", ok,
           f"unitarity {unit:.1e}, duality {dual:.1e} over 20 observables, criteria agree on {agree}/10")


def test_criterion_14_cli_determinism(tmp_path):
    config = ROOT / "configs" / "mvb_chain.toml"
    codes = [cli.main(["run", str(config), "--out", str(tmp_path / d), "--quiet"]) for d in ("a", "b")]
    same = (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()
    record(14, "CLI determinism", codes == [0, 0] and same, f"exit codes {codes}, byte-identical CSV {same}")
