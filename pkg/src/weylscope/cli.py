"""Command-line entry point: ``weylscope <command> ...``.

Exit codes: 0 success or positive verdict, 1 negative or inconclusive
verdict, 2 parse or configuration error, 3 numerical failure (more than
20% exceptional sample points).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import KINDS, GeneratorSpec, generate, write_golden
from .curvature import tensor_norm
from .detect import (
    ClassifyConfig,
    classify,
    cspace_transform_check,
    mean_curvature_transform_check,
    sasaki_check,
)
from .dsl import load_metric, parse_metric, render_metric
from .errors import BadKind, BadParams, EvenDimension, ParseError, RankNotOne, UnknownSymbol, WeylscopeError
from .frame import ChartGeometry, _weyl_svd, decide_rank, degeneracy_survey

EXIT_OK, EXIT_NEGATIVE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
EXCEPTIONAL_LIMIT = 0.2


@dataclass
class RunConfig:
    command: str
    input_path: str | None = None
    samples: int = 100
    seed: int = 42
    verify_samples: int = 5
    tol_rank: float | None = None
    tol_field: float | None = None
    output: str | None = None
    per_sample: bool = False
    phi: str | None = None
    kind: str | None = None
    params: list = field(default_factory=list)
    directory: str = "corpus"

    def validate(self):
        if self.samples < 1 or self.verify_samples < 1:
            raise BadParams("sample counts must be >= 1")
        for name in ("tol_rank", "tol_field"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise BadParams(f"{name} must be positive")

    def classify_config(self) -> ClassifyConfig:
        cfg = ClassifyConfig(samples=self.samples, seed=self.seed, verify_samples=self.verify_samples,
                             per_sample=self.per_sample, workers=_workers())
        if self.tol_rank is not None:
            cfg.tol_rank = self.tol_rank
        if self.tol_field is not None:
            cfg.tol_field = self.tol_field
        return cfg

    def public(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("output", "directory")}
        return {k: v for k, v in sorted(d.items()) if v not in (None, [])}


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("WEYLSCOPE_THREADS", "1")))
    except ValueError:
        return 1


def _clean(x):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python numbers."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def _header(cfg: RunConfig, text: str | None) -> dict:
    return {
        "tool_version": __version__,
        "input_hash": hashlib.sha256(text.encode()).hexdigest() if text is not None else None,
        "config": cfg.public(),
    }


def _exceptional_fraction(points, total) -> float:
    return len(points) / max(total, 1)


# --------------------------------------------------------------------------
# commands


def cmd_analyze(cfg: RunConfig, defn, text):
    geo = ChartGeometry(defn, cfg.tol_rank or 1e-7)
    survey = degeneracy_survey(defn, count=cfg.samples, seed=cfg.seed, tol_rank=geo.tol_rank)
    pts = survey.points
    b = geo.bundle(pts, full=True)
    U, s, E, Rn = _weyl_svd(b)
    rank, amb = decide_rank(s, Rn, geo.tol_rank)
    gi = b.g_inv
    rows = []
    for i in range(len(pts)):
        rows.append({
            "index": i,
            "point": pts[i],
            "scalar_curvature": b.tau[i],
            "ricci_traceless_norm": tensor_norm(b.ricci_traceless[i], gi[i], 2),
            "riemann_norm": tensor_norm(b.riemann[i], gi[i], 4),
            "weyl_norm": tensor_norm(b.weyl[i], gi[i], 4),
            "weyl_divergence_norm": tensor_norm(b.weyl_div[i], gi[i], 3),
            "weyl_rank": int(rank[i]),
            "rank_ambiguous": bool(amb[i]),
            "weyl_singular_values": s[i],
        })
    report = _header(cfg, text)
    report.update({"dimension": defn.dim, "rank_histogram": survey.rank_histogram,
                   "modal_rank": survey.modal_rank, "exceptional_points": survey.exceptional_points,
                   "samples": rows})
    code = EXIT_OK
    if _exceptional_fraction(survey.exceptional_points, len(pts)) > EXCEPTIONAL_LIMIT:
        code = EXIT_NUMERIC
    return report, code


def classification_payload(rep) -> dict:
    out = {
        "rank_histogram": rep.rank_histogram,
        "rank": rep.rank_k,
        "transversal_class": rep.transversal_class,
        "route": rep.route,
        "verdict": rep.verdict,
        "scaling_sign": rep.scaling_sign,
        "residuals": {"einstein": rep.einstein_residual, "rot": rep.rot_residual,
                      "frobenius": rep.frobenius, "contact": rep.contact},
        "exceptional_points": rep.exceptional_points,
        "notes": rep.notes,
    }
    if rep.product_split is not None:
        out["product_split"] = rep.product_split
    if rep.per_sample:
        out["per_sample"] = rep.per_sample
    return out


def cmd_classify(cfg: RunConfig, defn, text):
    rep = classify(defn, cfg.classify_config())
    report = _header(cfg, text)
    report.update(classification_payload(rep))
    if _exceptional_fraction(rep.exceptional_points, cfg.samples) > EXCEPTIONAL_LIMIT:
        return report, EXIT_NUMERIC
    return report, EXIT_OK if rep.verdict == "ConformallyEinstein" else EXIT_NEGATIVE


def cmd_verify(cfg: RunConfig, defn, text):
    if not cfg.phi:
        raise BadParams("verify needs --phi")
    samples = min(cfg.samples, 10)
    cs = cspace_transform_check(defn, cfg.phi, samples=samples, seed=cfg.seed)
    report = _header(cfg, text)
    report["weyl_divergence_transform"] = {"residual": cs.residual, "lhs_max": cs.lhs, "rhs_max": cs.rhs}
    ok = cs.residual <= 1e-6
    try:
        mc = mean_curvature_transform_check(defn, cfg.phi, samples=min(samples, cfg.verify_samples),
                                            seed=cfg.seed, tol_rank=cfg.tol_rank or 1e-7)
        report["mean_curvature_transform"] = {"residual": mc}
        ok = ok and mc <= 1e-4
    except WeylscopeError as err:
        report["mean_curvature_transform"] = {"skipped": f"{type(err).__name__}: {err}"}
    report["passed"] = ok
    return report, EXIT_OK if ok else EXIT_NEGATIVE


def cmd_sasaki(cfg: RunConfig, defn, text):
    report = _header(cfg, text)
    try:
        rep = sasaki_check(defn, cfg.classify_config())
    except (EvenDimension, RankNotOne) as err:
        report.update({"passed": False, "error": f"{type(err).__name__}: {err}"})
        return report, EXIT_CONFIG if isinstance(err, EvenDimension) else EXIT_NEGATIVE
    report.update({
        "passed": rep.passed,
        "conditions": {
            "contact": {"passed": rep.cond_contact, "top_form_norm": rep.contact_norm},
            "omega_orthogonal": {"passed": rep.cond_omega_orthogonal, "deviation": rep.omega_deviation},
            "einstein": {"passed": rep.cond_einstein, "residual": rep.einstein_residual},
        },
        "sigma": rep.sigma,
        "log_exponent_residual": rep.log_exponent_residual,
        "notes": rep.notes,
    })
    return report, EXIT_OK if rep.passed else EXIT_NEGATIVE


def cmd_selftest(cfg: RunConfig, defn, text):
    from .selftest import run_selftest

    checks = run_selftest(cfg.seed)
    for c in checks:
        print(c.line(), file=sys.stderr)
    report = {"tool_version": __version__, "checks": [{"name": c.name, "value": c.value, "tol": c.tol,
                                                      "passed": c.ok} for c in checks]}
    report["passed"] = all(c.ok for c in checks)
    return report, EXIT_OK if report["passed"] else EXIT_NEGATIVE


def _param_value(v: str):
    try:
        val = json.loads(v)
    except json.JSONDecodeError:
        return v if v not in KINDS else GeneratorSpec(v, {})
    return _spec_from_json(val) if isinstance(val, dict) and "kind" in val else val


def _spec_from_json(d) -> GeneratorSpec:
    params = {k: _spec_from_json(v) if isinstance(v, dict) and "kind" in v else v
              for k, v in d.get("params", {}).items()}
    return GeneratorSpec(d["kind"], params)


def parse_params(items) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise BadParams(f"parameter {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k] = _param_value(v)
    return out


def cmd_generate(cfg: RunConfig, defn, text):
    if cfg.kind == "golden":
        paths = write_golden(cfg.directory)
        return {"written": [str(p) for p in paths]}, EXIT_OK
    spec = GeneratorSpec(cfg.kind, parse_params(cfg.params))
    metric = generate(spec)
    out = Path(cfg.output) if cfg.output else Path(cfg.directory) / spec.filename()
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render_metric(metric), encoding="utf-8")
    return {"written": [str(out)], "spec": spec.to_json()}, EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "classify": cmd_classify, "verify": cmd_verify,
            "sasaki": cmd_sasaki, "selftest": cmd_selftest, "generate": cmd_generate}
FILE_COMMANDS = {"analyze", "classify", "verify", "sasaki"}


def run(cfg: RunConfig) -> tuple[dict, int]:
    cfg.validate()
    defn = text = None
    if cfg.command in FILE_COMMANDS:
        text = Path(cfg.input_path).read_text(encoding="utf-8")
        defn = parse_metric(text)
    return COMMANDS[cfg.command](cfg, defn, text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="weylscope", description="Conformal analysis of metrics in the .metric format.")
    ap.add_argument("--version", action="version", version=f"weylscope {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_file=True):
        if needs_file:
            p.add_argument("input_path", help=".metric file")
        p.add_argument("--samples", type=int, default=100)
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--verify-samples", type=int, default=5, dest="verify_samples")
        p.add_argument("--tol-rank", type=float, dest="tol_rank")
        p.add_argument("--tol-field", type=float, dest="tol_field")
        p.add_argument("--output", "-o", help="write the JSON report here instead of stdout")

    common(sub.add_parser("analyze", help="curvature summary at sampled points"))
    p = sub.add_parser("classify", help="rank survey, transversal class and verdict")
    common(p)
    p.add_argument("--per-sample", action="store_true", dest="per_sample")
    p = sub.add_parser("verify", help="conformal transformation self-checks for a factor φ")
    common(p)
    p.add_argument("--phi", required=True)
    common(sub.add_parser("sasaki", help="conformally Einstein-Sasaki conditions"))
    common(sub.add_parser("selftest", help="jet and convention property suites"), needs_file=False)
    p = sub.add_parser("generate", help="write a corpus .metric file (kind 'golden' writes the golden set)")
    p.add_argument("kind", help=f"one of {', '.join(KINDS)} or golden")
    p.add_argument("params", nargs="*", help="key=value; values are JSON or a bare kind name")
    p.add_argument("--dir", default="corpus", dest="directory")
    p.add_argument("--output", "-o")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(**{k: v for k, v in vars(args).items() if k in RunConfig.__dataclass_fields__})
    try:
        report, code = run(cfg)
    except (ParseError, UnknownSymbol, BadParams, BadKind, OSError) as err:
        print(f"weylscope: error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except WeylscopeError as err:
        print(f"weylscope: numerical failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    text = dumps(report)
    if cfg.output and cfg.command != "generate":
        Path(cfg.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
