"""Experiment presets, certified step selection and batch execution."""
from __future__ import annotations

import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .cournot import generate_instance
from .engine import RunConfig, audit_restricted_monotonicity, centralized_ne, run
from .errors import CertificateError
from .game import GameConstants, GameInstance, estimate_constants, load_game
from .network import GraphSequence, parse_graph_spec, spectral_certificate
from .tuning import (
    Alg1Certificate,
    Alg2Certificate,
    alg1_matrix,
    alg1_max_step,
    alg2_certificate,
    choose_alg1_step,
    choose_alg2_steps,
    lemma2_bounds,
    numeric_alg2_certificate,
)

PRESETS = ("fig1_compare", "fig2_unconstrained", "fig3_scaling", "fig4_balanced_ring", "custom")
POLICIES = ("certified", "explicit", "numeric")
THRESHOLD = 1e-4


@dataclass
class ExperimentSpec:
    """Everything needed to rebuild an experiment.

    ``steps`` holds explicit step sizes per algorithm, e.g.
    ``{"alg1": {"alpha": 1e-3}, "alg2": {"gamma": 1e-3, "tau": 1e-4}}``;
    algorithms without an entry use ``policy``.
    """

    preset: str = "custom"
    game: str = "generate"          # "generate" or a path to a game JSON
    N: int = 20
    m: int = 7
    n_total: int | None = None
    sizes: list = field(default_factory=list)   # overrides N when non-empty
    graph: str = "er:0.2"
    family_size: int = 1
    schedule: str | None = None
    algorithms: list = field(default_factory=lambda: ["alg1", "alg2"])
    policy: str = "certified"
    steps: dict = field(default_factory=dict)
    fraction: float = 0.99
    theta: float | None = None
    seeds: list = field(default_factory=lambda: [0])
    max_iters: int = 100_000
    stop_tol: float = 1e-10
    init: str = "zeros"
    unbounded: bool = False
    uncertified: bool = False
    extra_cells: list = field(default_factory=list)
    audit_samples: int = 200
    workers: int = 1
    out: str = "runs"

    def validate(self) -> None:
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; expected one of {PRESETS}")
        if not self.algorithms:
            raise ValueError("the algorithm list is empty")
        for a in self.algorithms:
            if a not in ("alg1", "alg2", "unconstrained"):
                raise ValueError(f"unknown algorithm {a!r}")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown step policy {self.policy!r}; expected one of {POLICIES}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if not 0 < self.fraction < 1:
            raise ValueError("fraction must lie in (0, 1)")
        if "unconstrained" in self.algorithms and not (self.unbounded or self.uncertified):
            raise ValueError("the unconstrained iteration needs an unbounded game")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**doc)


def preset(name: str, **overrides) -> ExperimentSpec:
    """The named preset with ``overrides`` applied."""
    base = {
        "fig1_compare": dict(graph="er:0.2", family_size=1, algorithms=["alg1", "alg2"]),
        "fig2_unconstrained": dict(
            graph="er:0.2", family_size=5, algorithms=["alg1"], unbounded=True,
            extra_cells=[{"label": "unconstrained_a2e-3", "algorithm": "unconstrained",
                          "alpha": 2e-3, "uncertified": True}],
        ),
        "fig3_scaling": dict(graph="er:0.2", family_size=5, algorithms=["alg1", "alg2"],
                             sizes=[20, 50, 100]),
        "fig4_balanced_ring": dict(
            graph="ring", algorithms=["alg2"],
            extra_cells=[{"label": "alg2_tau_x1000", "algorithm": "alg2", "tau_scale": 1000.0,
                          "uncertified": True}],
        ),
        "custom": {},
    }
    if name not in base:
        raise ValueError(f"unknown preset {name!r}; expected one of {PRESETS}")
    doc = {"preset": name, **base[name], **overrides}
    return ExperimentSpec.from_dict(doc)


# -- certificates -------------------------------------------------------------

def certify(game: GameInstance, seq: GraphSequence, algorithm: str,
            constants: GameConstants | None = None, fraction: float = 0.99,
            theta: float | None = None, policy: str = "certified",
            explicit: dict | None = None) -> Alg1Certificate | Alg2Certificate:
    """Step sizes and their certificate for ``algorithm`` on ``(game, seq)``.

    With explicit steps the certificate is evaluated at those values and may
    be invalid; the caller decides whether an invalid one is acceptable.
    """
    k = constants or estimate_constants(game)
    sc = spectral_certificate(seq)
    N = game.num_agents
    explicit = explicit or {}
    if algorithm in ("alg1", "unconstrained"):
        if sc.sigma_bar is None:
            raise CertificateError("graphs are not doubly stochastic", bound="sigma_bar")
        if sc.sigma_bar >= 1:
            raise CertificateError(f"sigma_bar = {sc.sigma_bar} >= 1", bound="sigma_bar")
        if "alpha" in explicit:
            return alg1_matrix(float(explicit["alpha"]), k.mu, k.ell, k.ell0, sc.sigma_bar, N)
        return choose_alg1_step(k.mu, k.ell, k.ell0, sc.sigma_bar, N, fraction)
    if sc.lambda_bar is None or sc.sigma_tilde is None:
        raise CertificateError("graphs are not weight balanced", bound="lambda_bar")
    if sc.lambda_bar <= 0:
        raise CertificateError("a graph in the family is not connected", bound="lambda_bar")
    if "gamma" in explicit and "tau" in explicit:
        return alg2_certificate(float(explicit["gamma"]), float(explicit["tau"]), k.mu, k.ell,
                                k.ell0, sc.lambda_bar, sc.sigma_tilde, N, theta)
    cert = choose_alg2_steps(k.mu, k.ell, k.ell0, sc.lambda_bar, sc.sigma_tilde, N, theta,
                             fraction, explicit.get("gamma"))
    if policy == "numeric" and game.is_affine:
        return numeric_alg2_certificate(game, seq, cert.gamma, fraction)
    return cert


def bounds_report(game: GameInstance, seq: GraphSequence, fraction: float = 0.99,
                  theta: float | None = None) -> dict:
    """Certificate quantities for both algorithms (``None`` where not applicable)."""
    k = estimate_constants(game)
    sc = spectral_certificate(seq)
    N = game.num_agents
    doc = {"constants": {"mu": k.mu, "ell0": k.ell0, "ell": k.ell, "exact": k.exact},
           "spectral": {"sigma_bar": sc.sigma_bar, "sigma_tilde": sc.sigma_tilde,
                        "lambda_bar": sc.lambda_bar},
           "alpha_star": None, "lemma2": None, "rho_at_alpha_star": None, "alg2": None}
    if sc.sigma_bar is not None and sc.sigma_bar < 1:
        a_star = alg1_max_step(k.mu, k.ell, k.ell0, sc.sigma_bar, N)
        doc["alpha_star"] = a_star
        doc["lemma2"] = lemma2_bounds(k.mu, k.ell, k.ell0, sc.sigma_bar).as_dict()
        doc["rho_at_alpha_star"] = alg1_matrix(a_star, k.mu, k.ell, k.ell0, sc.sigma_bar, N).rho
        doc["alpha_certified"] = fraction * a_star
    if sc.lambda_bar is not None and sc.lambda_bar > 0:
        c2 = choose_alg2_steps(k.mu, k.ell, k.ell0, sc.lambda_bar, sc.sigma_tilde, N, theta,
                               fraction)
        doc["alg2"] = {"gamma": c2.gamma, "gamma_max": c2.gamma_max, "mu_bar": c2.mu_bar,
                       "tau": c2.tau, "tau_max": c2.tau_max, "rho": c2.rho, "theta": c2.theta}
    return _jsonable(doc)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# -- cells --------------------------------------------------------------------

@dataclass
class Cell:
    label: str
    game: GameInstance
    seq: GraphSequence
    cfg: RunConfig
    x_star: np.ndarray
    seeds: dict
    audit: dict | None = None


def _build_game(spec: ExperimentSpec, N: int, seed: int) -> GameInstance:
    if spec.game == "generate":
        game = generate_instance(N=N, m=spec.m, n_total=spec.n_total, seed=seed).game
    else:
        game = load_game(spec.game)
    return game.without_boxes() if spec.unbounded else game


def _steps_from(cert, algorithm: str) -> dict:
    if algorithm == "alg2":
        return {"gamma": cert.gamma, "tau": cert.tau}
    return {"alpha": cert.alpha}


def build_cells(spec: ExperimentSpec) -> list[Cell]:
    """Expand a spec into runnable cells; certificates are checked here."""
    spec.validate()
    cells = []
    sizes = spec.sizes or [spec.N]
    for N in sizes:
        for seed in spec.seeds:
            game = _build_game(spec, N, seed)
            k = estimate_constants(game)
            seq = parse_graph_spec(spec.graph, game.num_agents, spec.family_size, seed,
                                   spec.schedule)
            x_star = centralized_ne(game, constants=k).x
            tag = f"N{game.num_agents}_s{seed}"
            certs = {}
            for alg in spec.algorithms:
                explicit = spec.steps.get(alg)
                policy = "explicit" if explicit else spec.policy
                cert = certify(game, seq, alg, k, spec.fraction, spec.theta, policy, explicit)
                certs[alg] = cert
                if alg != "unconstrained" and not cert.valid and not spec.uncertified:
                    bound = cert.failures[0] if isinstance(cert, Alg2Certificate) else "rho_alpha"
                    raise CertificateError(
                        f"{alg} step sizes for {tag} are not certified ({bound})", bound=bound)
                steps = dict(explicit) if explicit else _steps_from(cert, alg)
                uncertified = spec.uncertified or alg == "unconstrained"
                cfg = RunConfig(alg, **steps, max_iters=spec.max_iters, stop_tol=spec.stop_tol,
                                init=spec.init, init_seed=seed, audit_contraction=True,
                                certificate=cert if alg != "unconstrained" else None,
                                uncertified=uncertified)
                cells.append(Cell(f"{alg}_{tag}", game, seq, cfg, x_star,
                                  {"game": seed, "graph": seed, "init": seed},
                                  _alg2_audit(game, seq, cert, x_star, spec, seed)
                                  if alg == "alg2" else None))
            for extra in spec.extra_cells:
                if not spec.uncertified and extra.get("uncertified"):
                    continue
                alg = extra["algorithm"]
                if alg in certs:
                    steps = _steps_from(certs[alg], alg)
                elif alg == "unconstrained":
                    steps = {"alpha": extra["alpha"]}
                else:
                    steps = _steps_from(certify(game, seq, alg, k, spec.fraction, spec.theta,
                                                spec.policy), alg)
                if "alpha" in extra and alg != "alg2":
                    steps["alpha"] = float(extra["alpha"])
                if "tau_scale" in extra:
                    steps["tau"] *= float(extra["tau_scale"])
                cfg = RunConfig(alg, **steps, max_iters=spec.max_iters, stop_tol=spec.stop_tol,
                                init=spec.init, init_seed=seed, uncertified=True)
                cells.append(Cell(f"{extra['label']}_{tag}", game, seq, cfg, x_star,
                                  {"game": seed, "graph": seed, "init": seed}))
    return cells


def _alg2_audit(game, seq, cert, x_star, spec, seed) -> dict:
    worst = None
    for gi, g in enumerate(seq.family):
        rep = audit_restricted_monotonicity(game, g, cert.gamma, x_star, cert.mu_bar,
                                            samples=spec.audit_samples, seed=seed + gi)
        if worst is None or rep.min_ratio < worst.min_ratio:
            worst = rep
        if not rep.passed:
            worst = rep
            break
    return {"passed": worst.passed, "min_ratio": worst.min_ratio, "mu_bar": worst.mu_bar,
            "samples": worst.samples * len(seq.family)}


def execute_cell(cell: Cell, out_dir: str | None) -> dict:
    trace = run(cell.game, cell.seq, cell.cfg, cell.x_star)
    if out_dir is not None:
        trace.write(out_dir, cell.label)
    row = {"label": cell.label, "algorithm": cell.cfg.algorithm, **trace.summary(),
           "iters_to_1e-4": trace.iterations_to(THRESHOLD), "config": cell.cfg.to_dict(),
           "seeds": cell.seeds, "certified": not cell.cfg.uncertified}
    row["contraction_audit_passed"] = (None if cell.cfg.rho is None or cell.cfg.uncertified
                                       else not trace.audit_violations)
    if cell.audit is not None:
        row["monotonicity_audit"] = cell.audit
    return _jsonable(row)


def run_experiment(spec: ExperimentSpec, write: bool = True) -> dict:
    """Run every cell of ``spec``; writes traces, ``summary.json`` and ``manifest.json``."""
    cells = build_cells(spec)
    out = Path(spec.out) if write else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    target = str(out) if out is not None else None
    if spec.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(execute_cell, cells, [target] * len(cells)))
    else:
        rows = [execute_cell(c, target) for c in cells]
    summary = {"preset": spec.preset, "cells": rows}
    if out is not None:
        (out / "summary.json").write_text(json.dumps(summary, indent=1))
        (out / "manifest.json").write_text(json.dumps(manifest(spec), indent=1))
    return summary


def manifest(spec: ExperimentSpec) -> dict:
    return _jsonable({
        "spec": spec.to_dict(),
        "version": __version__,
        "backend": kernels.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seeds": list(spec.seeds),
    })


def load_spec(path, **overrides) -> ExperimentSpec:
    doc = json.loads(Path(path).read_text())
    doc.update({k: v for k, v in overrides.items() if v is not None})
    name = doc.pop("preset", "custom")
    return preset(name, **doc)


__all__ = ["ExperimentSpec", "PRESETS", "bounds_report", "build_cells", "certify",
           "execute_cell", "manifest", "preset", "run_experiment"]
