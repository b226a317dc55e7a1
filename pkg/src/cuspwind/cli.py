"""Command line: validate | delta | kappa | simulate | cf-oracle | report.

Settings come from flags, then from an optional YAML config (``--config``),
then from defaults.  Exit status 0 means success, 1 an invariant failure and
2 an unreadable input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import evt, gauss
from .errors import CuspwindError, ParseError
from .group import build_group, load_group_spec, shipped_group_path, shipped_groups, validate_markov

DEFAULTS = {
    "depth": 20.0,
    "s_margin": 0.02,
    "shell_width": 3.0,
    "n": 10_000,
    "trials": 1000,
    "workers": 1,
    "out": "cuspwind-out",
    "sampler": "markov",
    "stream_length": 0,
    "streams": 0,
    "n_min": 4,
}

EXIT_OK, EXIT_FAIL, EXIT_PARSE = 0, 1, 2


def _group_path(ref: str) -> Path:
    p = Path(ref)
    if p.exists():
        return p
    if ref in shipped_groups():
        return shipped_group_path(ref)
    raise ParseError(f"no group spec file or shipped group named {ref!r}")


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ParseError(f"config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("config must be a mapping")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def resolve(args: argparse.Namespace) -> dict:
    """Merge flag > config file > default."""
    conf = _load_config(args.config)
    out = dict(DEFAULTS)
    out.update(conf)
    out.update({k: v for k, v in vars(args).items() if v is not None})
    return out


def _header(cfg: dict, group=None) -> dict:
    return {
        "software": "cuspwind",
        "version": __version__,
        "command": cfg["command"],
        "group_digest": group.digest if group is not None else None,
        "group": cfg.get("group"),
        "depth": cfg.get("depth"),
        "s_margin": cfg.get("s_margin"),
        "seed": cfg.get("seed"),
    }


def _write_json(path: Path, doc: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _need_seed(cfg):
    if cfg.get("seed") is None:
        raise ParseError("a seed is required (--seed or 'seed' in the config)")
    return int(cfg["seed"])


# ---------------------------------------------------------------- commands


def cmd_validate(cfg: dict) -> int:
    out = Path(cfg["out"])
    spec = load_group_spec(_group_path(cfg["group"]))
    report = {"passed": False}
    status = EXIT_OK
    group = None
    try:
        group = build_group(spec)
        v = validate_markov(group)
        report = v.as_dict()
        report["intervals"] = {group.name(k): [iv.lo, iv.hi] for k, iv in enumerate(group.intervals)}
        status = EXIT_OK if v.passed else EXIT_FAIL
    except CuspwindError as exc:
        report = {"passed": False, "error": type(exc).__name__, "message": str(exc)}
        status = EXIT_FAIL
    doc = _header(cfg, group)
    doc["group_digest"] = spec.digest
    doc["validation"] = report
    _write_json(out / "validation.json", doc)
    print(("pass" if status == EXIT_OK else "FAIL") + f": {report.get('message', '')}".rstrip(": "))
    return status


def _group(cfg):
    return build_group(load_group_spec(_group_path(cfg["group"])))


def cmd_delta(cfg: dict) -> int:
    from .patterson import estimate_delta

    group = _group(cfg)
    est = estimate_delta(group, float(cfg["depth"]))
    doc = _header(cfg, group)
    doc["delta"] = est.as_dict()
    _write_json(Path(cfg["out"]) / "delta.json", doc)
    print(f"delta = {est.delta:.6f} +- {est.uncertainty:.6f} at depth {est.depth:g}")
    if est.warning:
        print("warning: " + est.warning)
    return EXIT_OK


def cmd_kappa(cfg: dict) -> int:
    from .patterson import kappa_with_uncertainty

    group = _group(cfg)
    rep = kappa_with_uncertainty(group, float(cfg["depth"]), s_margin=float(cfg["s_margin"]),
                                 shell_width=float(cfg["shell_width"]), n_min=int(cfg["n_min"]))
    doc = _header(cfg, group)
    doc["kappa"] = rep.as_dict()
    _write_json(Path(cfg["out"]) / "kappa.json", doc)
    print(f"kappa direct = {rep.direct.kappa:.5f} +- {rep.direct.uncertainty:.5f}")
    print(f"kappa tail   = {rep.tail.kappa:.5f} +- {rep.tail.uncertainty:.5f}")
    print(f"relative difference {rep.relative_difference:.4f}")
    return EXIT_OK


def _write_samples(out: Path, name: str, result, doc_extra: dict, cfg: dict, group=None):
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.csv").write_text(result.table())
    doc = _header(cfg, group)
    doc.update(doc_extra)
    _write_json(out / f"{name}_summary.json", doc)


def cmd_simulate(cfg: dict) -> int:
    from .patterson import (
        PhiField, code_atoms, estimate_delta, kappa_direct, mu_D_mass, patterson_atoms,
    )
    from .group import orbit_ball

    seed = _need_seed(cfg)
    n, trials, workers = int(cfg["n"]), int(cfg["trials"]), int(cfg["workers"])
    out = Path(cfg["out"])
    kind = cfg["sampler"]
    if kind == "cf":
        res = evt.simulate_maxima(None, evt.SamplerSpec(evt.SamplerKind.CF_UNIFORM, seed), n, trials, workers)
        summ = evt.summarize(res, 1.0, 1 / gauss.LOG2)
        _write_samples(out, "samples", res, {"summary": summ.as_dict()}, cfg)
        print(f"KS distance to the Galambos law: {summ.ks_vs_theory:.4f}")
        return EXIT_OK
    group = _group(cfg)
    depth = float(cfg["depth"])
    ball = orbit_ball(group, depth)
    delta = estimate_delta(group, depth, ball=ball).delta
    atoms = patterson_atoms(group, depth, delta, s_margin=float(cfg["s_margin"]), ball=ball)
    phi = PhiField(group, atoms)
    coding = code_atoms(group, atoms)
    kd = kappa_direct(group, atoms, phi, mu_D_mass(group, atoms, phi, coding))
    if kind == "markov":
        model = evt.SymbolicMarkov.from_atoms(group, atoms, phi, coding)
        spec = evt.SamplerSpec(evt.SamplerKind.SYMBOLIC_MARKOV, seed, model)
    elif kind == "atomic":
        spec = evt.SamplerSpec(evt.SamplerKind.PATTERSON_ATOMIC, seed, atoms)
    else:
        raise ParseError(f"unknown sampler {kind!r}; use cf, atomic or markov")
    res = evt.simulate_maxima(group, spec, n, trials, workers)
    summ = evt.summarize(res, delta, kd.kappa)
    _write_samples(out, "samples", res, {"summary": summ.as_dict(), "kappa_direct": kd.kappa}, cfg, group)
    print(f"{res.label}: {int(res.censored.sum())} censored trials, KS to exp(-kappa/s) "
          f"{summ.ks_vs_theory:.4f}")
    return EXIT_OK


def cmd_cf_oracle(cfg: dict) -> int:
    seed = _need_seed(cfg)
    n, trials, workers = int(cfg["n"]), int(cfg["trials"]), int(cfg["workers"])
    out = Path(cfg["out"])
    res = evt.simulate_maxima(None, evt.SamplerSpec(evt.SamplerKind.CF_UNIFORM, seed), n, trials, workers)
    summ = evt.summarize(res, 1.0, gauss.philipp_constant())
    doc = {"galambos": summ.as_dict(), "philipp_constant": gauss.philipp_constant()}
    L, S = int(cfg["stream_length"]), int(cfg["streams"])
    if L >= 160 and S > 0:
        grid = evt.log_grid(16, L, 200)
        W, K = [], []
        streams = gauss.cf_streams(seed + 1, S, L, workers=workers)
        for s in streams:
            W.append(evt.liminf_track(s, 1.0, grid).window_infimum)
            K.append(evt.khintchine_track(s, 1.0, grid).final_window_mean)
        med = np.median(np.array(W), axis=0)
        doc["liminf"] = {"grid": grid, "median_window_infimum": med,
                         "trend_last_decade": evt.trend_slope(grid, med)}
        doc["khintchine"] = {"final_window_mean": float(np.mean(K)), "per_stream": K}
    _write_samples(out, "cf_samples", res, doc, cfg)
    print(f"KS distance to the Galambos law: {summ.ks_vs_theory:.4f}")
    if summ.frechet:
        print(f"Frechet fit: shape {summ.frechet.alpha:.4f}, scale {summ.frechet.beta:.4f}")
    return EXIT_OK


def cmd_report(cfg: dict) -> int:
    out = Path(cfg["out"])
    found = sorted(out.glob("*.json")) if out.exists() else []
    if not found:
        print(f"no cached results in {out}; run the other subcommands first", file=sys.stderr)
        return EXIT_FAIL
    lines = [f"# cuspwind report (version {__version__})", ""]
    for path in found:
        doc = json.loads(path.read_text())
        lines.append(f"## {path.stem}")
        lines.append("")
        for key in ("group", "group_digest", "depth", "s_margin", "seed", "version"):
            lines.append(f"- {key}: {doc.get(key)}")
        body = {k: v for k, v in doc.items() if k not in {"software", "command", "group", "group_digest",
                                                           "depth", "s_margin", "seed", "version"}}
        lines.append("")
        lines.append("```json")
        lines.append(json.dumps(body, indent=2, sort_keys=True)[:20000])
        lines.append("```")
        lines.append("")
    (out / "report.md").write_text("\n".join(lines))
    _plots(out)
    print(f"wrote {out / 'report.md'}")
    return EXIT_OK


def _plots(out: Path):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    for csv in out.glob("*samples.csv"):
        summ_path = out / f"{csv.stem}_summary.json"
        if not summ_path.exists():
            continue
        doc = json.loads(summ_path.read_text())
        info = doc.get("summary") or doc.get("galambos") or {}
        n = int(csv.read_text().splitlines()[0].split("n=")[1].split(";")[0])
        data = np.loadtxt(csv, delimiter=",", skiprows=2)
        if data.ndim == 1:
            data = data[None, :]
        delta = float(info.get("delta_used", 1.0))
        kappa = float(info.get("kappa_reference", 1 / gauss.LOG2))
        cdf = evt.empirical_cdf(data[data[:, 2] == 0, 1], delta, n)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.semilogx(cdf.s, cdf.F, label="empirical")
        ax.semilogx(cdf.s, np.exp(-kappa / cdf.s), "--", label="exp(-kappa/s)")
        ax.set_xlabel("s")
        ax.set_ylabel("P(Y_n^(2d-1)/n <= s)")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / f"{csv.stem}_cdf.png", dpi=120)
        plt.close(fig)


COMMANDS = {
    "validate": cmd_validate,
    "delta": cmd_delta,
    "kappa": cmd_kappa,
    "simulate": cmd_simulate,
    "cf-oracle": cmd_cf_oracle,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cuspwind", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"cuspwind {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, group=True):
        p.add_argument("--config", help="YAML file with default settings")
        p.add_argument("--out", help="output directory")
        if group:
            p.add_argument("--group", help="group spec file or shipped group name")

    p = sub.add_parser("validate", help="build a group and check the Markov law")
    common(p)
    p = sub.add_parser("delta", help="estimate the exponent of convergence")
    common(p)
    p.add_argument("--depth", type=float, help="orbit radius")
    p = sub.add_parser("kappa", help="kappa(G) by the direct formula and the tail fit")
    common(p)
    p.add_argument("--depth", type=float)
    p.add_argument("--s-margin", dest="s_margin", type=float)
    p.add_argument("--shell-width", dest="shell_width", type=float)
    p.add_argument("--n-min", dest="n_min", type=int)
    p = sub.add_parser("simulate", help="simulate Y_n and compare with the Frechet law")
    common(p)
    p.add_argument("--sampler", choices=["cf", "atomic", "markov"])
    p.add_argument("--depth", type=float)
    p.add_argument("--s-margin", dest="s_margin", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p = sub.add_parser("cf-oracle", help="continued-fraction laws (Galambos, Philipp, Khintchine)")
    common(p, group=False)
    p.add_argument("--n", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--streams", type=int, help="number of long streams for the almost-sure laws")
    p.add_argument("--stream-length", dest="stream_length", type=int)
    p = sub.add_parser("report", help="collect cached results into report.md")
    common(p, group=False)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = resolve(args)
        if args.command in {"validate", "delta", "kappa"} and not cfg.get("group"):
            raise ParseError("--group is required")
        return COMMANDS[args.command](cfg)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except CuspwindError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
