"""Sweep driver: optimize a basis per N, persist it, analyze, fit, verify."""

from __future__ import annotations

import logging
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import analysis, io, thermal
from .optimizer import (
    LocalizedBasis,
    OptimizerConfig,
    init_identity,
    objective_s,
    quadrature_moments,
    run,
)
from .oscillator import build_quadratures, build_space

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
DEFAULT_N_VALUES = (2, 4, 8, 16, 32, 64)

# bands checked by verify()
FIG1_SLOPE_BAND = (0.45, 0.75)
FIG1_INTERCEPT_BAND = (0.7, 1.3)
FIG2_MIN_EXPONENT = 1.0


@dataclass
class ExperimentConfig:
    n_values: list[int] = field(default_factory=lambda: list(DEFAULT_N_VALUES))
    seed: int = 7
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    beta: float | None = None
    output_dir: Path = Path("results")
    emit_profiles: bool = False
    workers: int | None = None

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        if not self.n_values:
            raise ValueError("n_values must not be empty")
        if any(int(n) != n or n < 1 for n in self.n_values):
            raise ValueError(f"every N must be a positive integer: {self.n_values}")
        self.n_values = sorted({int(n) for n in self.n_values})
        if self.beta is not None and not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "optimizer" in doc:
            opt = doc["optimizer"]
            doc["optimizer"] = opt if isinstance(opt, OptimizerConfig) else OptimizerConfig(**opt)
        return cls(**doc)

    def to_dict(self) -> dict:
        return {
            "n_values": list(self.n_values),
            "seed": self.seed,
            "optimizer": self.optimizer.to_dict(),
            "beta": self.beta,
            "output_dir": str(self.output_dir),
            "emit_profiles": self.emit_profiles,
            "workers": self.workers,
        }


def subseed(seed: int, n: int) -> int:
    """Per-N seed; independent of which other N values are in the sweep."""
    return int(np.random.SeedSequence([int(seed), int(n)]).generate_state(1, dtype=np.uint64)[0])


def _fits(records: list[dict]) -> dict:
    ok = [r for r in records if r.get("status") == "ok"]
    fits = {"fig1": None, "fig2": None}
    pts1 = [(r["n"], r["mean_variance"]) for r in ok]
    if len({n for n, _ in pts1}) >= 2 and len(pts1) >= 3:
        fits["fig1"] = analysis.fit_log(pts1).to_dict()
    pts2 = [(r["n"], r["avg_de2"]) for r in ok if r["avg_de2"] > 0]
    if len({n for n, _ in pts2}) >= 2 and len(pts2) >= 3:
        fits["fig2"] = analysis.fit_power(pts2).to_dict()
    return fits


def _thermal_stage(basis: LocalizedBasis, quads, beta: float, out: Path, n: int,
                   seed: int) -> dict:
    ens = thermal.build_ensemble(basis, beta)
    thermal.check_ensemble(ens)
    band = thermal.band_profile(ens)
    h1 = thermal.default_perturbation(quads)
    resp = thermal.response(ens, h1, perturbation="0.1*x")
    canon = thermal.response(thermal.canonical_ensemble(basis.space, beta), h1,
                             perturbation="0.1*x")
    low, high = resp.quartile_weights()

    files = {
        "rho": f"rho_N{n}.bin",
        "band": f"band_N{n}.csv",
        "response": f"response_N{n}.csv",
        "spectrum": f"spectrum_N{n}.csv",
    }
    io.save_matrix(out / files["rho"], ens.rho,
                   {"kind": "density_matrix", "beta": beta, "seed": seed})
    io.write_csv(out / files["band"], {
        "offset_d": np.arange(n), "band_weight_w_d": band.band_weight})
    io.write_csv(out / files["response"], {
        "t_inverse_omega": resp.times, "delta_H0_hbar_omega": resp.values,
        "canonical_delta_H0_hbar_omega": canon.values})
    io.write_csv(out / files["spectrum"], {
        "frequency_index": np.arange(len(resp.spectrum)), "magnitude": resp.spectrum})
    return {
        "beta": beta,
        "effective_bandwidth": band.effective_bandwidth,
        "band_weight_total": float(band.band_weight.sum()),
        "low_quartile_weight": low,
        "high_quartile_weight": high,
        "response_max_abs": float(np.max(np.abs(resp.values))),
        "response_max_imag": resp.max_imag,
        "canonical_max_abs": float(np.max(np.abs(canon.values))),
        "files": files,
    }


def run_one(n: int, cfg: ExperimentConfig) -> dict:
    """Optimize, persist and analyze one N; returns its manifest record."""
    start = time.perf_counter()
    out = cfg.output_dir
    seed = subseed(cfg.seed, n)
    opt = replace(cfg.optimizer, seed=seed)
    space = build_space(n)
    quads = build_quadratures(space)
    basis, trace = run(init_identity(space), opt, quads)

    files = {"basis": f"basis_N{n}.bin", "trace": f"basis_N{n}.trace.json",
             "states": f"states_N{n}.csv"}
    io.save_matrix(out / files["basis"], basis.coeffs, {
        "kind": "basis", "seed": seed, "sweep_seed": cfg.seed,
        "config": opt.to_dict(), "final_s": trace.final_s})
    io.write_json(out / files["trace"], {"n": n, "seed": seed, **trace.summary()})

    m = quadrature_moments(basis, quads)
    es = analysis.energy_stats(basis)
    io.write_csv(out / files["states"], {
        "state": np.arange(n),
        "mean_x_sqrt_hbar_per_m_omega": m.mean_x,
        "mean_p_sqrt_hbar_m_omega": m.mean_p,
        "dx2": m.dx2,
        "dp2": m.dp2,
        "mean_e_hbar_omega": es.mean_e,
        "de2_hbar_omega_sq": es.de2,
    })

    tails = analysis.tail_summary(basis)
    record = {
        "n": n,
        "status": "ok",
        "seed": seed,
        "final_s": trace.final_s,
        "mean_variance": (n * n - trace.final_s) / n,
        "avg_de2": es.avg_de2,
        "avg_mean_e": es.avg_mean_e,
        "min_uncertainty_product": float(np.min(m.dx2 * m.dp2)),
        "unitarity_residual": basis.unitarity_residual(),
        "accepted": trace.accepted_count,
        "rejected": trace.rejected_count,
        "proposals": trace.proposals,
        "stop_reason": trace.stop_reason,
        "tail": {k: tails[k] for k in ("count", "median_nu", "q25_nu", "q75_nu")},
        "files": files,
    }
    if cfg.emit_profiles:
        dens, x = analysis.position_profiles(basis)
        files["profiles"] = f"profiles_N{n}.csv"
        cols = {"x_sqrt_hbar_per_m_omega": x}
        cols.update({f"psi2_state{k}": dens[k] for k in range(n)})
        io.write_csv(out / files["profiles"], cols)
    if cfg.beta is not None:
        record["thermal"] = _thermal_stage(basis, quads, cfg.beta, out, n, seed)
    record["wall_time_s"] = time.perf_counter() - start
    return record


def _safe_run_one(n: int, cfg: ExperimentConfig) -> dict:
    try:
        return run_one(n, cfg)
    except Exception as exc:  # recorded per N, the sweep continues
        log.error("N=%d failed: %s", n, exc)
        return {"n": n, "status": "failed", "error": f"{type(exc).__name__}: {exc}",
                "traceback": traceback.format_exc()}


def _manifest(cfg: ExperimentConfig, records: dict[int, dict], complete: bool) -> dict:
    recs = [records[n] for n in sorted(records)]
    return {
        "format": "locbasis-manifest",
        "version": MANIFEST_VERSION,
        "config": cfg.to_dict(),
        "status": "complete" if complete else "partial",
        "records": recs,
        "failed": [r["n"] for r in recs if r["status"] != "ok"],
        "fits": _fits(recs),
    }


def run_sweep(cfg: ExperimentConfig) -> dict:
    """Run every N in ``cfg``; the manifest is rewritten after each one finishes."""
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    records: dict[int, dict] = {}
    path = out / MANIFEST_NAME
    workers = cfg.workers or os.cpu_count() or 1
    workers = min(workers, len(cfg.n_values))

    def done(rec: dict) -> None:
        records[rec["n"]] = rec
        io.write_json(path, _manifest(cfg, records, complete=False))
        if rec["status"] == "ok":
            log.info("N=%d: mean variance %.4f, avg dE^2 %.4f, %d proposals (%.1fs)",
                     rec["n"], rec["mean_variance"], rec["avg_de2"], rec["proposals"],
                     rec["wall_time_s"])

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_safe_run_one, n, cfg) for n in cfg.n_values]
            for fut in as_completed(futures):
                done(fut.result())
    else:
        for n in cfg.n_values:
            done(_safe_run_one(n, cfg))

    manifest = _manifest(cfg, records, complete=True)
    io.write_json(path, manifest)
    if manifest["fits"]["fig1"] or manifest["fits"]["fig2"]:
        io.write_json(out / "fits.json", manifest["fits"])
    return manifest


def _fmt_block(rows) -> list[str]:
    return [f"{n:.12g} {y:.12g}" for n, y in rows]


def emit_figure_data(manifest: dict, out_dir, samples: int = 64) -> list[Path]:
    """Write gnuplot-ready fig1.csv and fig2.csv (data block, then fitted curve)."""
    fits = manifest.get("fits") or {}
    if not fits.get("fig1") or not fits.get("fig2"):
        raise ValueError("manifest has no fits; a sweep needs at least 3 N values")
    out = Path(out_dir)
    ok = [r for r in manifest["records"] if r["status"] == "ok"]
    written = []
    specs = [
        ("fig1.csv", fits["fig1"], "mean_variance",
         "mean of dx^2 + dp^2 over the N localized states (units hbar)",
         lambda c: f"y = a + b*ln(N), a = {c['a']:.4g}, b = {c['b']:.4g}"),
        ("fig2.csv", fits["fig2"], "avg_de2",
         "mean of dE^2 over the N localized states (units (hbar omega)^2)",
         lambda c: f"y = c*N^e, c = {c['c']:.4g}, e = {c['e']:.4g}"),
    ]
    for name, fit_doc, key, what, law in specs:
        fit = analysis.FitResult(fit_doc["model"], fit_doc["coefficients"],
                                 fit_doc["residual_rms"], fit_doc["n_values"])
        pts = [(r["n"], r[key]) for r in ok if r["n"] in set(fit.n_values)]
        grid = np.geomspace(min(fit.n_values), max(fit.n_values), samples)
        lines = [
            f"# {what} versus N",
            f"# fit: {law(fit.coefficients)}, residual_rms = {fit.residual_rms:.4g}",
            f"# index 0 columns: N {key}",
            *_fmt_block(pts),
            "",
            "",
            "# index 1 columns: N fit",
            *_fmt_block(zip(grid, fit.predict(grid))),
        ]
        path = out / name
        io.atomic_write_text(path, "\n".join(lines) + "\n")
        written.append(path)
    return written


def _check(report: list, name: str, passed: bool, detail: str = "") -> None:
    report.append({"name": name, "passed": bool(passed), "detail": detail})


def _verify_record(rec: dict, base: Path, beta: float | None, report: list) -> None:
    n = rec["n"]
    tag = f"N={n}"
    coeffs, header = io.load_matrix(base / rec["files"]["basis"])
    _check(report, f"{tag} header", header.get("kind") == "basis" and header["n"] == n,
           f"kind={header.get('kind')} n={header.get('n')}")
    space = build_space(n)
    quads = build_quadratures(space)
    basis = LocalizedBasis(coeffs, space)

    resid = basis.unitarity_residual()
    _check(report, f"{tag} unitarity", resid < 1e-10, f"residual {resid:.3e}")
    if not resid < 1e-6:
        return

    m = quadrature_moments(basis, quads)
    total = float(np.sum(m.mean_x2 + m.mean_p2))
    _check(report, f"{tag} trace identity", abs(total - n * n) < 1e-8,
           f"sum <x^2>+<p^2> = {total:.12g}, N^2 = {n * n}")
    s = objective_s(basis, quads)
    _check(report, f"{tag} objective matches record", abs(s - rec["final_s"]) < 1e-8 * max(1, s),
           f"S = {s:.12g}, recorded {rec['final_s']:.12g}")
    direct = float(np.mean(m.dx2 + m.dp2))
    _check(report, f"{tag} variance sum rule", abs(direct - (n * n - s) / n) < 1e-8,
           f"direct {direct:.12g}")
    prod = float(np.min(m.dx2 * m.dp2))
    _check(report, f"{tag} uncertainty floor", prod >= 0.25 - 1e-9, f"min dx2*dp2 = {prod:.6g}")
    es = analysis.energy_stats(basis)
    _check(report, f"{tag} energy trace", abs(es.mean_e.sum() - n * n / 2) < 1e-9,
           f"sum <E> = {es.mean_e.sum():.12g}")

    doc = io.read_json(base / rec["files"]["trace"])
    hist = np.array([v for _, v in doc["s_history"]]) if doc["s_history"] else np.zeros(0)
    _check(report, f"{tag} S monotone", bool(np.all(np.diff(hist) >= 0)),
           f"{len(hist)} samples")

    if beta is not None:
        canon = thermal.response(thermal.canonical_ensemble(space, beta),
                                 thermal.default_perturbation(quads))
        worst = float(np.max(np.abs(canon.values)))
        _check(report, f"{tag} canonical null response", worst < 1e-12, f"max {worst:.3e}")
        ens = thermal.build_ensemble(basis, beta)
        resp = thermal.response(ens, thermal.default_perturbation(quads))
        _check(report, f"{tag} response zero at t=0", abs(resp.values[0]) < 1e-14,
               f"{resp.values[0]:.3e}")
        per = thermal.response(ens, thermal.default_perturbation(quads),
                               times=np.array([0.0, 2 * math.pi]))
        gap = abs(per.values[1] - per.values[0])
        _check(report, f"{tag} response periodic", gap < 1e-10, f"{gap:.3e}")


def verify(manifest_path) -> dict:
    """Re-derive every invariant from the persisted files; pass/fail per check."""
    manifest_path = Path(manifest_path)
    manifest = io.read_json(manifest_path)
    base = manifest_path.parent
    report: list[dict] = []
    requested = manifest["config"]["n_values"]
    got = sorted(r["n"] for r in manifest["records"])
    _check(report, "one record per N", got == sorted(requested), f"{got}")
    _check(report, "no failed runs", not manifest["failed"], f"failed: {manifest['failed']}")
    beta = manifest["config"].get("beta")

    ok = [r for r in manifest["records"] if r["status"] == "ok"]
    for rec in ok:
        try:
            _verify_record(rec, base, beta, report)
        except Exception as exc:
            _check(report, f"N={rec['n']} readable", False, f"{type(exc).__name__}: {exc}")

    fig1 = manifest["fits"].get("fig1")
    if fig1:
        a, b = fig1["coefficients"]["a"], fig1["coefficients"]["b"]
        lo, hi = FIG1_SLOPE_BAND
        _check(report, "fig1 slope band", lo <= b <= hi, f"b = {b:.4g}")
        lo, hi = FIG1_INTERCEPT_BAND
        _check(report, "fig1 intercept band", lo <= a <= hi, f"a = {a:.4g}")
    fig2 = manifest["fits"].get("fig2")
    if fig2:
        e = fig2["coefficients"]["e"]
        _check(report, "fig2 at least linear", e >= FIG2_MIN_EXPONENT, f"e = {e:.4g}")
    by_n = {r["n"]: r["avg_de2"] for r in ok}
    ns = sorted(by_n)
    if len(ns) >= 2:
        mono = all(by_n[b] >= by_n[a] for a, b in zip(ns, ns[1:]))
        _check(report, "avg dE^2 non-decreasing in N", mono,
               ", ".join(f"{by_n[k]:.4g}" for k in ns))

    return {"passed": all(c["passed"] for c in report), "checks": report}
