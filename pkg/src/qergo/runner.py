"""Config-driven experiments behind the command line.

Each ``cmd_*`` takes a :class:`RunConfig`, writes CSVs into ``cfg.out`` and
returns a manifest dict; ``manifest["passed"]`` is the exit-code contract.
CSV floats are written with ``repr`` so seeded reruns give identical bytes.
"""
from __future__ import annotations

import copy
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .cover_green import IDENTITY_NAMES, continuation_solve, identity_residuals, mu_k
from .diagnostics import (ConstantChi, GaussianChi, PopulationDynamics, empirical_vs_tree,
                          green_diagonal_average, histogram_rows, kesten_mckay_density, ks_distance_km,
                          phi_histogram, write_rows)
from .ensembles import (EnsembleConfig, bst_profile, expander_gap, perturbed_regular, random_regular,
                        random_subset, sample_potential)
from .ergodicity import (ZetaPolicy, build_quasi_eigenvectors, indicator_observable, kg_diagonal_family,
                         quasi_eigen_residual, quantum_variance, resolve_threads)
from .errors import ConfigError, SizeCapExceeded
from .graph import count_nb_paths, write_graph
from .invariance import transfer_matrix, transfer_row_sums_expected
from .quantization import Observable, lift_kernel
from .spectral import eigensystem
from .reduction import identity_suite

SCHEMA_VERSION = 1

DEFAULTS = {
    "seed": 0,
    "out": "qergo-run",
    "threads": None,
    "ensemble": {"n": 500, "q_plus_1": 3, "epsilon": 0.0, "nu": "uniform", "nu_values": [],
                 "extra_edges": 0, "max_degree": 6},
    "gamma": {"eta0": 0.1, "interval": [-2.5, 2.5], "tol": 1e-10, "chunk": 64},
    "observable": {"kind": "half-indicator", "R": 0},
    "identities": {"instances": 5, "n_range": [40, 200], "lambdas": [-4.0, -2.0, 0.0, 2.0, 4.0],
                   "etas": [1.0, 0.1, 0.01], "eta0s": [0.05, 0.1, 0.5], "reduction_samples": 4, "operands": 2,
                   "T": 3, "m_values": [2, 3], "mu_levels": [2, 3], "mu_lambda": 0.5, "tol": 1e-8},
    "ergodicity": {"n_ladder": [250, 500, 1000, 2000], "seeds": 5, "trend_ratio": 0.6, "max_inversions": 1,
                   "min_average": 0.2},
    "bs_check": {"centers": [-1.0, 0.0, 1.0], "width": 0.3, "pool": 100000, "oracle_eta": 0.005, "nodes": 16,
                 "abs_tol": 0.02, "se_factor": 3.0, "ks_bound": 0.05, "phi_k": [0, 1, 2], "phi_lambda": 0.0,
                 "phi_eta": 0.05, "grid": 81, "bins": 50},
    "gen": {"gap_threshold": 0.01, "bst_radius": 3},
    "caps": {"n_max": 5000, "path_cap": 100_000_000, "oracle_budget": 5e10},
}

PRESETS = {
    "anderson": {"ensemble": {"epsilon": 0.5}},
    "bs-check": {"ensemble": {"n": 2000}},
}

OBSERVABLE_KINDS = ("half-indicator", "constant", "lifted-indicator")

CSV_SCHEMAS = {
    "residuals.csv": ["instance", "n", "check", "gamma_re", "gamma_im", "name", "residual", "bound"],
    "variance_vs_n.csv": ["n", "seed", "instance_seed", "count", "variance", "annealed_variance", "min_average",
                          "max_average"],
    "variance_terms.csv": ["n", "seed", "j", "lambda_j", "term", "average"],
    "tree_comparison.csv": ["chi", "center", "width", "finite", "tree", "stderr", "difference", "bound"],
    "density.csv": ["lambda", "density_km", "density_empirical"],
    "green_average.csv": ["lambda", "eta", "green_average"],
    "phi_hist_k{k}.csv": ["value", "weight"],
}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be a table")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class RunConfig:
    data: dict

    def __getitem__(self, key):
        return self.data[key]

    @property
    def out(self) -> str:
        return self.data["out"]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def threads(self) -> int:
        return resolve_threads(self.data["threads"])

    def ensemble(self, n: int | None = None, seed: int | None = None, epsilon: float | None = None) -> EnsembleConfig:
        e = self.data["ensemble"]
        return EnsembleConfig(int(e["n"] if n is None else n), int(e["q_plus_1"]),
                              float(e["epsilon"] if epsilon is None else epsilon), e["nu"],
                              tuple(e["nu_values"]), self.seed if seed is None else int(seed))

    def spectrum_bound(self) -> float:
        """``A + D``: potential bound plus maximal degree."""
        e = self.data["ensemble"]
        d = e["max_degree"] if e["extra_edges"] else e["q_plus_1"]
        return self.ensemble().bound + d

    def validate(self) -> "RunConfig":
        gm = self.data["gamma"]
        if not 0 < gm["eta0"] < 1:
            raise ConfigError("gamma.eta0 must lie in (0, 1)")
        a, b = gm["interval"]
        s = self.spectrum_bound()
        if not -s <= a < b <= s:
            raise ConfigError(f"gamma.interval must be an interval inside [-{s}, {s}]")
        for key, val in self.data["caps"].items():
            if not val > 0:
                raise ConfigError(f"caps.{key} must be positive")
        if self.data["observable"]["kind"] not in OBSERVABLE_KINDS:
            raise ConfigError(f"observable.kind must be one of {OBSERVABLE_KINDS}")
        if self.data["observable"]["R"] < 0:
            raise ConfigError("observable.R must be non-negative")
        self.ensemble()
        return self

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)


def load_config(subcommand: str, path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the subcommand preset, then the JSON file, then ``overrides``.

    A manifest written by a previous run is accepted as a config: its
    ``config`` table is replayed.
    """
    data = _merge(DEFAULTS, PRESETS.get(subcommand, {}))
    if path is not None:
        with open(path) as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        if "schema_version" in user and "config" in user:
            user = user["config"]
        data = _merge(data, user)
    if overrides:
        data = _merge(data, {k: v for k, v in overrides.items() if v is not None})
    return RunConfig(data).validate()


def instance_seed(seed: int, *labels: int) -> int:
    return int(np.random.SeedSequence([seed, *labels]).generate_state(1)[0])


class Manifest:
    def __init__(self, command: str, cfg: RunConfig):
        self.data = {"schema_version": SCHEMA_VERSION, "command": command, "version": __version__,
                     "config": cfg.to_dict(), "threads": cfg.threads, "timings": {}, "tolerances": {},
                     "seeds": {"base": cfg.seed}, "summary": {}, "assertions": [], "csv_schemas": {}}
        self._t = time.perf_counter()

    def stage(self, name: str) -> None:
        now = time.perf_counter()
        self.data["timings"][name] = now - self._t
        self._t = now

    def check(self, name: str, passed: bool, detail: str = "") -> bool:
        self.data["assertions"].append({"name": name, "passed": bool(passed), "detail": detail})
        return passed

    def csv(self, name: str, schema_key: str | None = None) -> None:
        self.data["csv_schemas"][name] = CSV_SCHEMAS[schema_key or name]

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.data["assertions"])

    def write(self, out: str) -> dict:
        self.data["passed"] = self.passed
        with open(os.path.join(out, "manifest.json"), "w") as fh:
            json.dump(self.data, fh, indent=2, default=_json_default)
        return self.data


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def _prepare(cfg: RunConfig) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


def _check_size(cfg: RunConfig, n: int) -> None:
    if n > cfg["caps"]["n_max"]:
        raise SizeCapExceeded(f"N={n} exceeds caps.n_max={cfg['caps']['n_max']}")


def _check_paths(cfg: RunConfig, g, k: int) -> None:
    count_nb_paths(g, k, int(cfg["caps"]["path_cap"]))


def make_observable(cfg: RunConfig, g, subset) -> list[Observable]:
    ob = cfg["observable"]
    if ob["kind"] == "constant":
        return [Observable.vertex(g, np.ones(g.n), name="one")]
    if ob["kind"] == "half-indicator":
        return [indicator_observable(g, subset)]
    _check_paths(cfg, g, int(ob["R"]))
    mask = np.zeros(g.n, dtype=bool)
    mask[subset] = True
    return lift_kernel(lambda x, y: (mask[x] & mask[y]).astype(float), int(ob["R"]), g)


def build_instance(cfg: RunConfig, n: int, seed: int, epsilon: float | None = None):
    ecfg = cfg.ensemble(n=n, seed=seed, epsilon=epsilon)
    extra = cfg["ensemble"]["extra_edges"]
    g = perturbed_regular(ecfg, extra, cfg["ensemble"]["max_degree"]) if extra else random_regular(ecfg)
    return ecfg, g, sample_potential(g, ecfg)


def cmd_gen(cfg: RunConfig) -> dict:
    out = _prepare(cfg)
    man = Manifest("gen", cfg)
    _check_size(cfg, cfg["ensemble"]["n"])
    ecfg, g, w = build_instance(cfg, cfg["ensemble"]["n"], cfg.seed)
    write_graph(g, os.path.join(out, "graph.txt"))
    write_rows(os.path.join(out, "potential.csv"), ["vertex", "w"], [(i, float(v)) for i, v in enumerate(w.values)])
    man.stage("generate")
    man.data["summary"] = {"n": g.n, "edges": int(g.oriented.count // 2), "digest": g.digest(),
                           "min_degree": int(g.degrees.min()), "max_degree": int(g.degrees.max()),
                           "potential_bound": w.bound}
    # informational only: a single sample says nothing about the family
    gc = cfg["gen"]
    beta = expander_gap(g)
    man.data["summary"].update({"expander_gap": beta, "gap_flagged": bool(beta < gc["gap_threshold"]),
                                "short_radius_fraction": bst_profile(g, int(gc["bst_radius"])).tolist()})
    man.stage("diagnose")
    man.check("graph-built", True)
    return man.write(out)


def _identity_instance(cfg: RunConfig, i: int):
    lo, hi = cfg["identities"]["n_range"]
    s = instance_seed(cfg.seed, 1, i)
    n = int(np.random.default_rng(s).integers(lo // 2, hi // 2 + 1)) * 2
    ecfg = EnsembleConfig(n, 3, 1.0, "uniform", (), s)
    g = perturbed_regular(ecfg, n // 4, 6)
    return g, sample_potential(g, ecfg), s


def cmd_identities(cfg: RunConfig) -> dict:
    """Tree identities, quasi-eigenvector equations, variance-reduction operator identities and transfer structure."""
    out = _prepare(cfg)
    man = Manifest("identities", cfg)
    ic = cfg["identities"]
    tol = float(ic["tol"])
    man.data["tolerances"] = {"residual_bound": tol, "zeta_tol": cfg["gamma"]["tol"]}
    rows = []
    worst = {}

    def record(inst, n, check, gamma, name, value):
        rows.append((inst, n, check, float(np.real(gamma)), float(np.imag(gamma)), name, float(value), tol))
        worst[check] = max(worst.get(check, 0.0), float(value))

    for i in range(int(ic["instances"])):
        g, w, s = _identity_instance(cfg, i)
        man.data["seeds"][f"instance{i}"] = s
        for eta in ic["etas"]:
            zf = None
            for lam in ic["lambdas"]:
                zf = continuation_solve(g, w, float(lam), float(eta), 1e-13)
                for name, val in identity_residuals(zf).items():
                    record(i, g.n, "tree", zf.gamma, name, val)
        es = eigensystem(g, w)
        for eta0 in ic["eta0s"]:
            pol = ZetaPolicy(g, w, float(eta0), 1e-13, threads=cfg.threads)
            vs = build_quasi_eigenvectors(es, pol, (-np.inf, np.inf))
            for v in vs:
                r1, r2 = quasi_eigen_residual(v, g)
                scale = 1 + np.abs(v.f).max()
                record(i, g.n, "quasi_eigen", v.gamma, "forward", r1 / scale)
                record(i, g.n, "quasi_eigen", v.gamma, "reflected", r2 / (1 + np.abs(v.f_star).max()))
        pol = ZetaPolicy(g, w, float(cfg["gamma"]["eta0"]), 1e-13, threads=cfg.threads)
        rep = identity_suite(es, pol, None, int(ic["reduction_samples"]), int(ic["operands"]), int(ic["T"]),
                             tuple(ic["m_values"]), seed=s)
        for name, val in rep.residuals.items():
            record(i, g.n, "reduction", complex(np.nan, cfg["gamma"]["eta0"]), name, val)
        for eta in ic["etas"]:
            zf = continuation_solve(g, w, float(ic["mu_lambda"]), float(eta), 1e-13)
            for k in ic["mu_levels"]:
                for which in ("S", "S_adjoint"):
                    sums = np.asarray(transfer_matrix(zf, which, int(k)).sum(axis=1)).ravel()
                    expect = transfer_row_sums_expected(zf, which, int(k))
                    record(i, g.n, "transfer", zf.gamma, f"rowsum_{which}_k{k}", np.abs(sums - expect).max())
                meas = mu_k(zf, int(k))
                neg = max(0.0, -meas.values.min(), -meas.compat_defect.min(), -meas.inv_defect.min())
                record(i, g.n, "transfer", zf.gamma, f"negativity_k{k}", neg)
        man.stage(f"instance{i}")
    write_rows(os.path.join(out, "residuals.csv"), CSV_SCHEMAS["residuals.csv"], rows)
    man.csv("residuals.csv")
    man.data["summary"] = {"worst": worst, "rows": len(rows), "identity_names": list(IDENTITY_NAMES)}
    for check, val in worst.items():
        man.check(f"{check}-residuals", val <= tol, f"max {val:.3e} against bound {tol:.1e}")
    return man.write(out)


def trend_holds(medians, ratio: float, max_inversions: int) -> tuple[bool, int]:
    """Last median at most ``ratio`` times the first, non-increasing up to ``max_inversions`` rises."""
    m = np.asarray(medians, dtype=float)
    inversions = int(np.sum(np.diff(m) > 0))
    return bool(m[-1] <= ratio * m[0] and inversions <= max_inversions), inversions


def cmd_ergodicity(cfg: RunConfig, command: str = "ergodicity") -> dict:
    """Quantum variance of ``a - <a>_gamma_j`` over an N ladder and a set of seeds."""
    out = _prepare(cfg)
    man = Manifest(command, cfg)
    ec, gm = cfg["ergodicity"], cfg["gamma"]
    interval = tuple(gm["interval"])
    man.data["tolerances"] = {"zeta_tol": gm["tol"], "trend_ratio": ec["trend_ratio"],
                              "min_average": ec["min_average"]}
    summary_rows, term_rows, medians, min_avg = [], [], [], np.inf
    for n in ec["n_ladder"]:
        _check_size(cfg, n)
        vals = []
        for s in range(int(ec["seeds"])):
            t0 = time.perf_counter()
            iseed = instance_seed(cfg.seed, 2, int(n), s)
            man.data["seeds"][f"n{n}_s{s}"] = iseed
            _, g, w = build_instance(cfg, int(n), iseed)
            es = eigensystem(g, w, size_cap=int(cfg["caps"]["n_max"]))
            subset = random_subset(g.n, g.n // 2, iseed)
            fam = make_observable(cfg, g, subset)
            pol = ZetaPolicy(g, w, gm["eta0"], gm["tol"], int(gm["chunk"]), cfg.threads)
            rep = quantum_variance(es, fam, pol, interval, centered=True, name=cfg["observable"]["kind"])
            # centering at the plain mean |Lambda|/N, the disorder-averaged weight for R = 0
            annealed = float("nan")
            if len(fam) == 1 and fam[0].k == 0:
                vecs = es.vectors[:, rep.indices]
                raw = kg_diagonal_family(fam, vecs).real
                norms = kg_diagonal_family(Observable.vertex(g, np.ones(g.n)), vecs).real
                annealed = float(np.abs(raw - fam[0].values.real.mean() * norms).sum() / g.n)
            avg = rep.averages.real
            lo_avg = float(avg.min()) if len(avg) else float("nan")
            min_avg = min(min_avg, lo_avg)
            vals.append(rep.aggregate)
            summary_rows.append((int(n), s, iseed, len(rep.terms), rep.aggregate, annealed, lo_avg,
                                 float(avg.max()) if len(avg) else float("nan")))
            man.data["timings"][f"n{n}_s{s}"] = time.perf_counter() - t0
            term_rows.extend((int(n), s, int(j), float(lam), float(t), float(a))
                             for j, lam, t, a in zip(rep.indices, rep.lambdas, rep.terms, avg))
        medians.append(float(np.median(vals)))
        # flush after every rung so partial ladders survive a failure
        write_rows(os.path.join(out, "variance_vs_n.csv"), CSV_SCHEMAS["variance_vs_n.csv"], summary_rows)
        write_rows(os.path.join(out, "variance_terms.csv"), CSV_SCHEMAS["variance_terms.csv"], term_rows)
    man.csv("variance_vs_n.csv")
    man.csv("variance_terms.csv")
    ok, inv = trend_holds(medians, ec["trend_ratio"], ec["max_inversions"])
    man.data["summary"] = {"medians": dict(zip(map(str, ec["n_ladder"]), medians)), "inversions": inv,
                           "min_average": min_avg, "policy": pol.meta()}
    if cfg["observable"]["kind"] == "constant":
        top = max(r[4] for r in summary_rows)
        man.check("constant-observable-zero", top == 0.0, f"largest variance {top!r}")
    else:
        man.check("variance-trend", ok, f"medians {medians}, {inv} inversions")
    if cfg["observable"]["kind"] == "half-indicator":
        man.check("average-positive", min_avg >= ec["min_average"],
                  f"min <1_Lambda> = {min_avg:.4f} against {ec['min_average']}")
    return man.write(out)


def cmd_bs_check(cfg: RunConfig) -> dict:
    """Finite spectral averages against the tree, Kesten-McKay and Phi histograms."""
    out = _prepare(cfg)
    man = Manifest("bs-check", cfg)
    bc = cfg["bs_check"]
    n = int(cfg["ensemble"]["n"])
    _check_size(cfg, n)
    ecfg, g, w = build_instance(cfg, n, cfg.seed)
    q = ecfg.q_plus_1 - 1
    es = eigensystem(g, w, size_cap=int(cfg["caps"]["n_max"]))
    man.stage("eigensystem")
    man.data["tolerances"] = {"abs_tol": bc["abs_tol"], "se_factor": bc["se_factor"], "ks_bound": bc["ks_bound"],
                              "chi_width": bc["width"], "oracle_eta": bc["oracle_eta"]}
    summary = {}
    edge = 2 * np.sqrt(q)
    grid = np.linspace(-edge - 1 - ecfg.bound, edge + 1 + ecfg.bound, int(bc["grid"]))
    counts, _ = np.histogram(es.values, bins=np.append(grid - (grid[1] - grid[0]) / 2, grid[-1] + (grid[1] - grid[0]) / 2))
    dens_emp = counts / (es.n * (grid[1] - grid[0]))
    write_rows(os.path.join(out, "density.csv"), CSV_SCHEMAS["density.csv"],
               zip(grid.tolist(), kesten_mckay_density(q, grid).tolist(), dens_emp.tolist()))
    man.csv("density.csv")
    if ecfg.epsilon == 0 and cfg["ensemble"]["extra_edges"] == 0:
        ks = ks_distance_km(es.values, q)
        summary["ks_distance"] = ks
        man.check("kesten-mckay-ks", ks <= bc["ks_bound"], f"KS {ks:.4f} against {bc['ks_bound']}")
    oracle = PopulationDynamics(ecfg, int(bc["pool"]), float(bc["oracle_eta"]), budget=float(cfg["caps"]["oracle_budget"]),
                                seed=instance_seed(cfg.seed, 4), threads=cfg.threads)
    man.data["seeds"]["popdyn"] = oracle.seed
    rows = []
    fin, est = empirical_vs_tree(es, ConstantChi(1.0), oracle)
    rows.append(("constant", float("nan"), float("nan"), fin, est.value, 0.0, abs(fin - est.value), 0.0))
    man.check("constant-chi", abs(fin - 1) <= 1e-12 and est.value == 1.0, f"finite {fin!r}")
    for i, c in enumerate(bc["centers"]):
        chi = GaussianChi(float(c), float(bc["width"]))
        fin, est = empirical_vs_tree(es, chi, oracle, q=q, tag=i + 1)
        bound = max(bc["abs_tol"], bc["se_factor"] * est.stderr)
        rows.append(("gaussian", float(c), float(bc["width"]), fin, est.value, est.stderr, abs(fin - est.value), bound))
        man.check(f"tree-agreement-{c}", abs(fin - est.value) <= bound,
                  f"|{fin:.5f} - {est.value:.5f}| against {bound:.4f}")
    write_rows(os.path.join(out, "tree_comparison.csv"), CSV_SCHEMAS["tree_comparison.csv"], rows)
    man.csv("tree_comparison.csv")
    man.stage("tree")
    eta = float(bc["phi_eta"])
    green_rows = []
    for lam in np.linspace(-edge, edge, 9):
        zf = continuation_solve(g, w, float(lam), eta, float(cfg["gamma"]["tol"]))
        green_rows.append((float(lam), eta, green_diagonal_average(zf)))
    write_rows(os.path.join(out, "green_average.csv"), CSV_SCHEMAS["green_average.csv"], green_rows)
    man.csv("green_average.csv")
    zf = continuation_solve(g, w, float(bc["phi_lambda"]), eta, float(cfg["gamma"]["tol"]))
    for k in bc["phi_k"]:
        _check_paths(cfg, g, int(k))
        total, raw = phi_histogram(zf, int(k), lambda x: x)
        summary[f"phi_sum_k{k}"] = total
        write_rows(os.path.join(out, f"phi_hist_k{k}.csv"), CSV_SCHEMAS["phi_hist_k{k}.csv"],
                   histogram_rows(raw, int(bc["bins"])))
        man.csv(f"phi_hist_k{k}.csv", "phi_hist_k{k}.csv")
    if 0 in bc["phi_k"]:
        man.check("phi-normalization", abs(summary["phi_sum_k0"] - 1) <= 1e-10, f"{summary['phi_sum_k0']!r}")
    man.stage("phi")
    summary.update({"tree_rows": [dict(zip(CSV_SCHEMAS["tree_comparison.csv"], r)) for r in rows],
                    "oracle_converged": bool(est.converged) if est.nodes else True})
    man.data["summary"] = summary
    return man.write(out)


COMMANDS = {"gen": cmd_gen, "identities": cmd_identities, "ergodicity": cmd_ergodicity,
            "anderson": lambda cfg: cmd_ergodicity(cfg, "anderson"), "bs-check": cmd_bs_check}
