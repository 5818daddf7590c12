"""Command-line experiment runner: TOML config in, ``report.json`` and ``sweep.csv`` out.

Exit codes: 0 when every verdict passes, 3 when a verdict fails, 2 for configuration
or precondition errors, 1 for internal errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import bounds, dynamics, fock, model
from .lattice import Lattice, Region, make_cutoff

MEMORY_BUDGET = 2 * 1024 ** 3
CSV_HEADER = ["experiment", "param_name", "param_value", "t", "lhs", "bound_shape", "in_window"]

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID, EXIT_FAILED = 0, 1, 2, 3


class ConfigError(ValueError):
    """Schema violation, reported with the dotted path to the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------------------
# config parsing


def _get(table: dict, key: str, path: str, kind=None, default=...):
    if key not in table:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
        return default
    value = table[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"{path}.{key}" if path else key, f"expected {_kind_name(kind)}, got {type(value).__name__}")
    return value


def _kind_name(kind) -> str:
    if isinstance(kind, tuple):
        return " or ".join(k.__name__ for k in kind)
    return kind.__name__


def _grid(table: dict, key: str, path: str, required: bool = False) -> list[float] | None:
    if key not in table:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return None
    raw = table[key]
    if not isinstance(raw, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in raw):
        raise ConfigError(f"{path}.{key}", "expected a list of numbers")
    vals = [float(x) for x in raw]
    if any(b < a for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"{path}.{key}", "grid must be sorted ascending")
    return vals


@dataclass
class ExperimentConfig:
    lattice: Lattice
    model_name: str
    model_params: dict
    sectors: list[int]
    state: dict
    regions: dict[str, Region]
    experiments: list[dict]
    out_dir: Path
    seed: int | None
    source: Path | None = None
    raw: dict = field(default_factory=dict, repr=False)


def _parse_lattice(table: dict) -> Lattice:
    extent = _get(table, "extent", "lattice", list)
    if not extent or not all(isinstance(e, int) and e > 0 for e in extent):
        raise ConfigError("lattice.extent", "expected a nonempty list of positive integers")
    dim = _get(table, "dim", "lattice", int, len(extent))
    if dim != len(extent):
        raise ConfigError("lattice.dim", f"dimension {dim} does not match extent {extent}")
    grid = float(_get(table, "grid", "lattice", (int, float), 1.0))
    metric = _get(table, "metric", "lattice", str, "euclidean")
    try:
        return Lattice.box(extent, grid, metric)
    except ValueError as exc:
        raise ConfigError("lattice", str(exc)) from None


def _parse_region(spec, lattice: Lattice, named: dict[str, Region], path: str) -> Region:
    if isinstance(spec, str):
        if spec not in named:
            raise ConfigError(path, f"unknown region {spec!r}")
        return named[spec]
    if isinstance(spec, list):
        if not all(isinstance(x, int) for x in spec):
            raise ConfigError(path, "site lists must contain integer indices")
        try:
            return Region(lattice, spec)
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from None
    if isinstance(spec, dict):
        if "complement" in spec:
            return _parse_region(spec["complement"], lattice, named, f"{path}.complement").complement()
        if "coords" in spec:
            try:
                return Region(lattice, [lattice.index(c) for c in spec["coords"]])
            except ValueError:
                raise ConfigError(f"{path}.coords", "coordinate not on the lattice") from None
        if "center" in spec:
            center = np.asarray(spec["center"], dtype=float) * lattice.grid
            radius = float(_get(spec, "radius", path, (int, float)))
            diff = lattice.coords - center
            d = np.abs(diff).max(axis=1) if lattice.metric == "linf" else np.linalg.norm(diff, axis=1)
            return Region(lattice, np.flatnonzero(d <= radius + 1e-12))
        if "range" in spec:
            lo, hi = spec["range"]
            return Region(lattice, range(int(lo), int(hi)))
    raise ConfigError(path, "region must be a name, a site list, or a table with complement, coords, center or range")


def load_config(path: str | Path, seed: int | None = None, out: str | Path | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"invalid TOML: {exc}") from None
    return parse_config(raw, seed=seed, out=out, source=path)


def parse_config(raw: dict, seed: int | None = None, out: str | Path | None = None,
                 source: Path | None = None) -> ExperimentConfig:
    lattice = _parse_lattice(_get(raw, "lattice", "", dict))
    mtable = _get(raw, "model", "", dict)
    model_name = _get(mtable, "name", "model", str)
    model_params = dict(_get(mtable, "params", "model", dict, {}))
    sector = _get(raw, "sector", "", dict)
    parts = _get(sector, "particles", "sector", (int, list))
    sectors = [parts] if isinstance(parts, int) else list(parts)
    if not sectors or not all(isinstance(p, int) and p >= 0 for p in sectors):
        raise ConfigError("sector.particles", "expected a nonnegative integer or a list of them")
    regions: dict[str, Region] = {}
    for name, spec in _get(raw, "regions", "", dict, {}).items():
        regions[name] = _parse_region(spec, lattice, regions, f"regions.{name}")
        if not len(regions[name]):
            raise ConfigError(f"regions.{name}", "region resolves to an empty site set")
    state = _get(raw, "state", "", dict, {})
    exps = raw.get("experiment")
    if isinstance(exps, dict):
        exps = [exps]
    if not isinstance(exps, list) or not exps:
        raise ConfigError("experiment", "need at least one [experiment] table")
    for k, e in enumerate(exps):
        name = _get(e, "name", f"experiment[{k}]", str)
        if name not in bounds.EXPERIMENTS:
            raise ConfigError(f"experiment[{k}].name",
                              f"unknown experiment {name!r}; available: {', '.join(sorted(bounds.EXPERIMENTS))}")
    seed = raw.get("seed") if seed is None else seed
    if seed is not None and not isinstance(seed, int):
        raise ConfigError("seed", "expected an integer")
    if state.get("kind") == "random" and seed is None:
        raise ConfigError("seed", "a seed is required for random state generation")
    out_dir = Path(out) if out is not None else Path(_get(_get(raw, "output", "", dict, {}), "dir", "output", str, "out"))
    if source is not None and not out_dir.is_absolute() and out is None:
        out_dir = source.parent / out_dir
    return ExperimentConfig(lattice, model_name, model_params, sectors, state, regions, exps, out_dir, seed,
                            source, raw)


# ---------------------------------------------------------------------------
# building models, states and operators


def _occupation(spec, lattice: Lattice, path: str) -> tuple[int, ...]:
    if isinstance(spec, str):
        tokens = spec.replace(",", " ").split()
        occ = [int(c) for c in (tokens if len(tokens) > 1 else spec.strip())]
    elif isinstance(spec, list):
        occ = [int(x) for x in spec]
    else:
        raise ConfigError(path, "occupation must be a digit string or a list of integers")
    if len(occ) != len(lattice) or min(occ) < 0:
        raise ConfigError(path, f"occupation needs {len(lattice)} nonnegative entries")
    return tuple(occ)


def _amplitude(value, path: str) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, list) and len(value) == 2:
        return complex(value[0], value[1])
    raise ConfigError(path, "amplitude must be a number or [re, im]")


def build_state(spec: dict, basis: fock.SectorBasis, cfg: ExperimentConfig, path: str = "state"):
    kind = _get(spec, "kind", path, str)
    lattice = basis.region.lattice
    if kind == "occupation":
        occ = _occupation(_get(spec, "occupation", path), lattice, f"{path}.occupation")
        if sum(occ) != basis.particles:
            raise ConfigError(f"{path}.occupation", f"holds {sum(occ)} particles, sector has {basis.particles}")
        return fock.basis_state(basis, occ)
    if kind == "superposition":
        terms = {}
        for k, term in enumerate(_get(spec, "terms", path, list)):
            occ = _occupation(_get(term, "occupation", f"{path}.terms[{k}]"), lattice, f"{path}.terms[{k}].occupation")
            if sum(occ) != basis.particles:
                raise ConfigError(f"{path}.terms[{k}].occupation", "particle number does not match the sector")
            terms[occ] = _amplitude(term.get("amplitude", 1.0), f"{path}.terms[{k}].amplitude")
        return fock.superposition(basis, terms).normalized()
    if kind == "random":
        region = _parse_region(_get(spec, "region", path), lattice, cfg.regions, f"{path}.region")
        outside = [basis.local_position(x) for x in region.complement()]
        allowed = np.flatnonzero(basis.states[:, outside].sum(axis=1) == 0) if outside else np.arange(basis.dim)
        if not allowed.size:
            raise ConfigError(f"{path}.region", "no sector state fits inside the region")
        rng = np.random.default_rng(cfg.seed)
        amps = np.zeros(basis.dim, dtype=complex)
        amps[allowed] = rng.standard_normal(allowed.size) + 1j * rng.standard_normal(allowed.size)
        return fock.StateVector(basis, amps).normalized()
    if kind == "density_file":
        file = Path(_get(spec, "path", path, str))
        if cfg.source is not None and not file.is_absolute():
            file = cfg.source.parent / file
        mat = fock.read_matrix(file)
        if mat.shape != (basis.dim, basis.dim):
            raise ConfigError(f"{path}.path", f"matrix shape {mat.shape} does not match sector dimension {basis.dim}")
        return fock.DensityMatrix(basis, mat)
    raise ConfigError(f"{path}.kind", f"unknown state kind {kind!r}; choose occupation, superposition, random or density_file")


def build_operator(spec, cfg: ExperimentConfig, path: str):
    """Operator spec -> callable basis -> Operator."""
    if not isinstance(spec, dict):
        raise ConfigError(path, "operator must be a table with a kind")
    kind = _get(spec, "kind", path, str)
    lattice = cfg.lattice

    def region_of() -> Region:
        if "site" in spec:
            return Region(lattice, [int(spec["site"])])
        return _parse_region(_get(spec, "region", path), lattice, cfg.regions, f"{path}.region")

    if kind == "number":
        R = region_of()
        return lambda b: fock.second_quantize_multiplier(R.indicator(), b)
    if kind == "pair":
        R = region_of()

        def pair(b):
            N = fock.second_quantize_multiplier(R.indicator(), b)
            return N @ N - N
        return pair
    if kind == "phase":
        R = region_of()
        angle = float(_get(spec, "angle", path, (int, float)))

        def phase(b):
            occ = b.states[:, [b.local_position(x) for x in R]].sum(axis=1)
            return fock.operator_from_matrix(b, np.diag(np.exp(1j * angle * occ)), R, None)
        return phase
    if kind == "identity":
        R = region_of()
        return lambda b: fock.operator_from_matrix(b, np.eye(b.dim), R, True)
    if kind == "multiplier":
        values = np.asarray(_get(spec, "values", path, list), dtype=float)
        if values.shape != (len(lattice),):
            raise ConfigError(f"{path}.values", f"need {len(lattice)} entries")
        return lambda b: fock.second_quantize_multiplier(values, b)
    raise ConfigError(f"{path}.kind", f"unknown operator kind {kind!r}; choose number, pair, phase, identity or multiplier")


def build_kernels(cfg: ExperimentConfig):
    params = dict(cfg.model_params)
    if cfg.model_name == "custom_file" and cfg.source is not None:
        for key in ("h_path", "v_path"):
            if key in params and not Path(params[key]).is_absolute():
                params[key] = str(cfg.source.parent / params[key])
    try:
        return model.model_zoo(cfg.model_name, params, cfg.lattice)
    except model.ModelError as exc:
        raise ConfigError("model", str(exc)) from None


# ---------------------------------------------------------------------------
# resource estimates


def sector_bytes(dim: int, sites: int, bonds: int, mixed: bool = False) -> int:
    """Rough peak memory of one experiment on a sector of dimension ``dim``."""
    states = dim * sites * 8
    nnz = dim * (bonds + 1)
    hamiltonian = nnz * (16 + 4) + (dim + 1) * 4
    vectors = (dynamics.DENSE_LIMIT if dim <= dynamics.DENSE_LIMIT else 32) * dim * 16
    dense = 2 * dim * dim * 16 if (dim <= dynamics.DENSE_LIMIT or mixed) else 0
    return int(states + hamiltonian + vectors + dense)


def estimate(cfg: ExperimentConfig, h: model.OneBodyKernel | None = None) -> list[dict]:
    bonds = len(cfg.lattice) ** 2 if h is None else int(np.count_nonzero(h.entries))
    mixed = cfg.state.get("kind") == "density_file"
    out = []
    for n in cfg.sectors:
        dim = fock.sector_dimension(len(cfg.lattice), n)
        mem = sector_bytes(dim, len(cfg.lattice), bonds, mixed)
        method = "dense_eigen" if dim <= dynamics.DENSE_LIMIT else "krylov"
        cost = dim ** 3 if method == "dense_eigen" else 30 * dim * (bonds + 1)
        out.append({"particles": n, "dimension": dim, "bytes": mem, "method": method,
                    "flops_per_point": cost, "within_budget": mem <= MEMORY_BUDGET})
    return out


# ---------------------------------------------------------------------------
# dispatch


def _c_value(e: dict, h, experiment: str, path: str) -> float | None:
    if "c" in e and "c_multiplier" in e:
        raise ConfigError(path, "give either c or c_multiplier, not both")
    if "c" in e:
        return float(e["c"])
    if "c_multiplier" in e:
        return float(e["c_multiplier"]) * model.kappa_n(h, 0)
    return None


def _times(e: dict, path: str, required: bool = True) -> tuple[list[float], list[float] | None]:
    times = _grid(e, "times", path) or []
    fractions = _grid(e, "time_fractions", path)
    if required and not times and not fractions:
        raise ConfigError(f"{path}.times", "empty time grid")
    return times, fractions


def _region(e: dict, key: str, cfg: ExperimentConfig, path: str) -> Region:
    return _parse_region(_get(e, key, path), cfg.lattice, cfg.regions, f"{path}.{key}")


def _operator(e: dict, key: str, cfg: ExperimentConfig, path: str):
    return build_operator(_get(e, key, path), cfg, f"{path}.{key}")


_KNOWN_KEYS = {
    "mvb": {"X", "c", "c_multiplier", "etas", "times", "time_fractions", "n"},
    "lightcone_approx": {"X", "A", "c", "c_multiplier", "xis", "times", "time_fractions", "n"},
    "weak_lrb": {"X", "Y", "A", "B", "c", "c_multiplier", "xis", "times", "time_fractions", "n", "shell",
                 "front_times", "wavefront", "suppression", "arrival"},
    "correlation_spread": {"Z", "pairs", "ell", "times", "time_fractions", "n"},
    "signal_detector": {"X", "Y", "A", "B", "c", "c_multiplier", "xis", "times", "time_fractions", "rs",
                        "r_fractions", "n", "shell", "reference", "slope_rs", "slope_times", "suppression"},
    "control_fidelity": {"X", "Y", "U", "c", "c_multiplier", "xis", "times", "time_fractions", "n"},
    "gap_clustering": {"X", "Ys", "A", "Bs", "xis", "n"},
    "macroscopic_transport": {"X", "nu", "nu_prime", "c", "c_multiplier", "etas", "times", "time_fractions", "n"},
    "astlo_monotonicity": {"X", "delta", "v", "v_multiplier", "s_values", "times", "nodes", "n"},
    "commutator_norm": {"X", "k", "n"},
    "commutator_expansion": {"X", "delta", "n", "s_values"},
    "dgamma_intertwining": {"f", "times", "tolerance"},
}


def prepare(cfg: ExperimentConfig, e: dict, k: int):
    """Validate one experiment table and return a zero-argument callable producing its report."""
    path = f"experiment[{k}]"
    name = e["name"]
    extra = set(e) - _KNOWN_KEYS[name] - {"name"}
    if extra:
        raise ConfigError(f"{path}.{sorted(extra)[0]}", f"unknown field for {name}")
    h, v = build_kernels(cfg)
    n = int(e.get("n", 1))

    def system(particles: int | None = None) -> dynamics.System:
        p = cfg.sectors[0] if particles is None else particles
        return dynamics.System(h, v, fock.enumerate_sector(cfg.lattice.full(), p))

    if name == "commutator_norm":
        args = dict(h=h, X=_region(e, "X", cfg, path), k=int(_get(e, "k", path, int)), n=n)
        return lambda: bounds.verify_commutator_norm_bound(**args)
    if name == "commutator_expansion":
        args = dict(h=h, X=_region(e, "X", cfg, path),
                    chi=make_cutoff(float(_get(e, "delta", path, (int, float), 1.0)), max(4, n + 1)),
                    n=n, s_values=_grid(e, "s_values", path, required=True))
        return lambda: bounds.verify_commutator_expansion(**args)

    S = system()
    omega = build_state(cfg.state, S.basis, cfg)
    c = _c_value(e, h, name, path)
    grid = lambda key, required=False: _grid(e, key, path, required)  # noqa: E731
    region = lambda key: _region(e, key, cfg, path)  # noqa: E731
    operator = lambda key: _operator(e, key, cfg, path)  # noqa: E731

    if name == "mvb":
        times, fr = _times(e, path)
        args = dict(system=S, X=region("X"), omega=omega, c=c, etas=grid("etas", True), times=times, n=n,
                    time_fractions=fr)
    elif name == "lightcone_approx":
        times, fr = _times(e, path)
        args = dict(system=S, X=region("X"), A=operator("A"), omega=omega, c=c, xis=grid("xis", True),
                    times=times, n=n, time_fractions=fr)
    elif name == "weak_lrb":
        times, fr = _times(e, path)
        pairs = []
        for j, w in enumerate(e.get("wavefront", [])):
            wp = f"{path}.wavefront[{j}]"
            pairs.append(bounds.LocalPair(_region(w, "X", cfg, wp), _region(w, "Y", cfg, wp),
                                          _operator(w, "A", cfg, wp), _operator(w, "B", cfg, wp),
                                          build_state(_get(w, "state", wp, dict), S.basis, cfg, f"{wp}.state")))
        args = dict(system=S, X=region("X"), Y=region("Y"), A=operator("A"), B=operator("B"), omega=omega, c=c,
                    xis=grid("xis", True), times=times, n=n, time_fractions=fr, shell=e.get("shell", "empty"),
                    front_times=grid("front_times"), wavefront=pairs,
                    suppression=float(e.get("suppression", 1e-6)), arrival=float(e.get("arrival", 1e-2)))
    elif name == "correlation_spread":
        times, fr = _times(e, path)
        pairs = []
        for j, p in enumerate(_get(e, "pairs", path, list)):
            pp = f"{path}.pairs[{j}]"
            pairs.append(bounds.CorrelationPair(_region(p, "X", cfg, pp), _region(p, "Y", cfg, pp),
                                                _operator(p, "A", cfg, pp), _operator(p, "B", cfg, pp)))
        args = dict(system=S, Z=region("Z"), pairs=pairs, omega=omega,
                    ell=float(_get(e, "ell", path, (int, float))), times=times, n=n, time_fractions=fr)
    elif name == "signal_detector":
        times, fr = _times(e, path)
        reference = e.get("reference")
        args = dict(system=S, X=region("X"), Y=region("Y"), A=operator("A"), B=operator("B"), rho=omega, c=c,
                    xis=grid("xis", True), times=times, rs=grid("rs") or [], n=n, time_fractions=fr,
                    r_fractions=grid("r_fractions"), shell=e.get("shell", "empty"),
                    slope_times=grid("slope_times"), slope_rs=grid("slope_rs"),
                    reference=None if reference is None else tuple(float(x) for x in reference),
                    suppression=e.get("suppression"))
    elif name == "control_fidelity":
        times, fr = _times(e, path)
        args = dict(system=S, X=region("X"), Y=region("Y"), U=operator("U"), rho_pure=omega, c=c,
                    xis=grid("xis", True), times=times, n=n, time_fractions=fr)
    elif name == "gap_clustering":
        Ys = [_parse_region(y, cfg.lattice, cfg.regions, f"{path}.Ys[{j}]")
              for j, y in enumerate(_get(e, "Ys", path, list))]
        Bs = [build_operator(b, cfg, f"{path}.Bs[{j}]") for j, b in enumerate(_get(e, "Bs", path, list))]
        args = dict(system=[S] + [system(p) for p in cfg.sectors[1:]], X=region("X"), Ys=Ys, A=operator("A"),
                    Bs=Bs, xis=grid("xis"), n=n)
    elif name == "macroscopic_transport":
        times, fr = _times(e, path)
        args = dict(system=S, X=region("X"), omega=omega, nu=float(_get(e, "nu", path, (int, float))),
                    nu_prime=float(_get(e, "nu_prime", path, (int, float))), c=c, etas=grid("etas", True),
                    times=times, n=n, time_fractions=fr)
    elif name == "astlo_monotonicity":
        times = grid("times") or []
        if not times:
            raise ConfigError(f"{path}.times", "empty time grid")
        vel = float(e["v"]) if "v" in e else float(e.get("v_multiplier", 1.5)) * model.kappa_n(h, 0)
        args = dict(system=S, X=region("X"), chi=make_cutoff(float(_get(e, "delta", path, (int, float), 1.0))),
                    v=vel, s_values=grid("s_values", True), omega=omega, times=times,
                    nodes=int(e.get("nodes", 64)), n=n)
    elif name == "dgamma_intertwining":
        times = grid("times") or []
        if not times:
            raise ConfigError(f"{path}.times", "empty time grid")
        fspec = _get(e, "f", path)
        if isinstance(fspec, list) and len(fspec) == len(cfg.lattice) and any(isinstance(x, float) for x in fspec):
            f = np.asarray(fspec, dtype=float)
        else:
            f = _parse_region(fspec, cfg.lattice, cfg.regions, f"{path}.f").indicator()
        args = dict(system=S, f=f, omega=omega, times=times, tol=float(e.get("tolerance", 1e-9)))
    else:
        raise ConfigError(f"{path}.name", f"no dispatcher for {name!r}")
    fn = bounds.EXPERIMENTS[name]
    return lambda: fn(**args)


# ---------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    x = float(x)
    return "nan" if math.isnan(x) else format(x, ".17g")


def sweep_csv(reports: list[bounds.BoundReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        for p in r.points:
            w.writerow([r.experiment, p.param_name, _fmt(p.param), _fmt(p.t), _fmt(p.lhs), _fmt(p.bound_shape),
                        _fmt(p.in_window)])
    return buf.getvalue()


def report_json(cfg: ExperimentConfig, reports: list[bounds.BoundReport]) -> str:
    doc = {
        "seed": cfg.seed,
        "lattice": {"dim": cfg.lattice.dim, "sites": len(cfg.lattice), "grid": cfg.lattice.grid,
                    "metric": cfg.lattice.metric},
        "model": {"name": cfg.model_name, "params": cfg.model_params},
        "sectors": cfg.sectors,
        "passed": all(r.passed for r in reports),
        "experiments": [r.to_dict() for r in reports],
    }
    return json.dumps(bounds._jsonable(doc), indent=2, sort_keys=True) + "\n"


def verdict_line(r: bounds.BoundReport) -> str:
    status = "PASS" if r.passed else "FAIL"
    failed = [k for k, ok in r.verdicts.items() if not ok]
    extra = f" slope={r.fitted_exponent:.3f}" if r.fitted_exponent is not None else ""
    if r.empirical_constant is not None:
        extra += f" C_emp={r.empirical_constant:.3g}"
    if failed:
        extra += " failed=" + ",".join(failed)
    return f"{r.experiment}: {status}{extra}"


# ---------------------------------------------------------------------------
# commands


def _threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("LIGHTCONE_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def cmd_run(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out=args.out)
    for est in estimate(cfg):
        if not est["within_budget"]:
            raise bounds.PreconditionError(
                f"sector N={est['particles']} has dimension {est['dimension']}, needing about "
                f"{est['bytes'] / 2**30:.1f} GiB > budget {MEMORY_BUDGET / 2**30:.0f} GiB")
    jobs = [prepare(cfg, e, k) for k, e in enumerate(cfg.experiments)]
    with ThreadPoolExecutor(max_workers=_threads(args.threads)) as pool:
        # map preserves submission order, so the reduction is deterministic
        reports = list(pool.map(lambda job: job(), jobs))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "report.json").write_text(report_json(cfg, reports))
    (cfg.out_dir / "sweep.csv").write_text(sweep_csv(reports))
    if not args.quiet:
        for r in reports:
            print(verdict_line(r))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED


def cmd_validate(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out=args.out)
    h, _ = build_kernels(cfg)
    ok = True
    for est in estimate(cfg, h):
        line = (f"sector N={est['particles']}: dimension {est['dimension']}, method {est['method']}, "
                f"~{est['bytes'] / 2**20:.1f} MiB, ~{est['flops_per_point']:.3g} flops per sweep point")
        print(line)
        if not est["within_budget"]:
            ok = False
            print(f"warning: dimension {est['dimension']:.3g} exceeds the "
                  f"{MEMORY_BUDGET / 2**30:.0f} GiB memory budget", file=sys.stderr)
    if ok:
        for k, e in enumerate(cfg.experiments):
            prepare(cfg, e, k)
            print(f"experiment[{k}] {e['name']}: configuration valid")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_list(args) -> int:
    for name, fn in sorted(bounds.EXPERIMENTS.items()):
        doc = (fn.__doc__ or "").strip().splitlines()
        print(f"{name:24s} {doc[0] if doc else ''}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lightcone", description="Run light-cone bound experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run the experiments in a config"), ("validate", "check a config without evolving")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--threads", type=int, help="worker threads (default $LIGHTCONE_THREADS or 1)")
        s.add_argument("--seed", type=int, help="rng seed (overrides the config)")
        s.add_argument("--quiet", action="store_true")
    sub.add_parser("list-experiments", help="list available experiments")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "validate": cmd_validate, "list-experiments": cmd_list}[args.command]
    try:
        return handler(args)
    except (ConfigError, bounds.PreconditionError, fock.BasisMismatch, model.ModelError,
            dynamics.DynamicsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
