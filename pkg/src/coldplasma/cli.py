"""Command-line driver: domain / certify / similarity / solve / verify.

Each subcommand reads a JSON config (mandatory integer "version" field),
writes machine-readable outputs into --out, and exits 0 on success, 2 on a
validation failure (reports still written), 1 on hard errors.  All outputs
embed the SHA-256 of the canonicalized config, and runs are deterministic for
a fixed config and seed: no timestamps, no hidden entropy.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import geometry, multiplier, operators, similarity, solver
from .errors import ColdPlasmaError, ConfigError, DomainBuildError, ParameterError

CONFIG_VERSION = 1


# ---------------------------------------------------------------------------
# config plumbing


def _load_config(path: str) -> tuple[dict, str]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"malformed JSON in {path} at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}, got {cfg.get('version')!r}")
    digest = hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()
    return cfg, digest


def _sonic_from_config(cfg: dict) -> geometry.SonicCurve:
    sc = cfg.get("sigma", {"kind": "power", "exponent": 2.0, "coefficient": 1.0})
    if sc.get("kind", "power") == "power":
        return geometry.SonicCurve.power(float(sc.get("exponent", 2.0)),
                                         float(sc.get("coefficient", 1.0)))
    return geometry.SonicCurve.tabulated(sc["y"], sc["sigma"])


def _domain_from_config(cfg: dict) -> geometry.Domain:
    dcfg = cfg.get("domain", {})
    rect = dcfg.get("rect", {"p": -1.0, "q": 2.0, "ell": 1.0, "delta": 0.1})
    c1 = dcfg.get("c1", {"eps_c": 2.0, "m": 1.0})
    spec = geometry.DomainSpec(
        sonic=_sonic_from_config(dcfg),
        rect=geometry.RectangleSpec(p=float(rect["p"]), q=float(rect["q"]),
                                    ell=float(rect["ell"]), delta=float(rect["delta"])),
        c1=geometry.C1Spec(eps_c=float(c1["eps_c"]), m=float(c1["m"])),
        K=float(cfg.get("K", 0.0)),
        variant=dcfg.get("variant", "omega"),
        x_lambda=dcfg.get("x_lambda"),
        trace_step=float(dcfg.get("trace_step", 1e-3)),
    )
    return geometry.build_domain(spec)


def _write_json(path: Path, payload: dict, meta: dict) -> None:
    out = {"meta": meta}
    out.update(payload)
    path.write_text(json.dumps(out, sort_keys=True, indent=2) + "\n")


def _write_polyline_csv(path: Path, pieces: dict, meta: dict) -> None:
    with path.open("w") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write("piece,x,y\n")
        for name, poly in pieces.items():
            for x, y in np.asarray(poly):
                fh.write(f"{name},{x:.17g},{y:.17g}\n")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_domain(cfg: dict, outdir: Path, meta: dict, seed: int) -> int:
    dom = _domain_from_config(cfg)
    _write_json(outdir / "domain.json", dom.to_dict(), meta)
    _write_polyline_csv(outdir / "boundary.csv",
                        {"c1": dom.c1, "gamma": dom.gamma, "c2": dom.c2}, meta)
    return 0


def _cmd_certify(cfg: dict, outdir: Path, meta: dict, seed: int) -> int:
    dom = _domain_from_config(cfg)
    case = multiplier.MultiplierCase(cfg.get("case", "theorem2"), float(cfg.get("K", 0.0)),
                                     dom.ell, dom.sonic)
    gcfg = cfg.get("grid", {"nx": 64, "ny": 64})
    grid = operators.Grid.from_domain(dom, int(gcfg["nx"]), int(gcfg["ny"]))
    rep = multiplier.certify_lemma4(case, dom, grid,
                                    n_fields=int(cfg.get("n_fields", 20)), seed=seed)
    _write_json(outdir / "certification.json", rep.to_dict(), meta)
    return 0 if rep.certified else 2


def _cmd_similarity(cfg: dict, outdir: Path, meta: dict, seed: int) -> int:
    scfg = cfg.get("similarity", {})
    nu = float(scfg.get("nu", 0.25))
    branch = scfg.get("branch", "mu_pow_nu")
    interval = tuple(scfg.get("mu_interval", (5.0, 200.0)))
    step = float(scfg.get("step", 0.01))
    sol = similarity.solve_F(nu, branch, interval, step)
    with (outdir / "similarity_F.csv").open("w") as fh:
        fh.write("# " + json.dumps({**meta, "nu": nu, "branch": branch,
                                    "residual_max": sol.residual_max},
                                   sort_keys=True) + "\n")
        fh.write("mu,F,Fp\n")
        for mu, F, Fp in sol.to_rows():
            fh.write(f"{mu:.17g},{F:.17g},{Fp:.17g}\n")
    # sampled field on a small grid patch of the valid mu range
    xs = np.linspace(0.8, 1.2, 9)
    ys = np.linspace(np.sqrt(interval[0] * 1.3 * 0.8), np.sqrt(interval[1] * 0.7 * 1.2), 9)
    with (outdir / "similarity_field.csv").open("w") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write("x,y,psi,u1,u2\n")
        for x in xs:
            for y in ys:
                mu = y * y / x
                if not (interval[0] <= mu <= interval[1]):
                    continue
                psi, u1, u2 = similarity.eval_similarity(sol, float(x), float(y))
                fh.write(f"{x:.17g},{y:.17g},{psi:.17g},{u1:.17g},{u2:.17g}\n")
    return 0


def _make_data(cfg: dict, dom, grid) -> tuple:
    fcfg = cfg.get("f", {"kind": "zero"})
    kind = fcfg.get("kind", "zero")
    K = float(cfg.get("K", 0.0))
    if kind == "zero":
        return operators.GridField.zeros(grid), "homogeneous", None
    if kind.startswith("manufactured:"):
        name = kind.split(":", 1)[1]
        u_ex, f_ex, g_ex = solver.manufactured_case(name, K, dom.sonic)
        f = operators.GridField.from_callable(grid, lambda X, Y: f_ex(X, Y))
        return f, "trace_match", g_ex
    if kind.startswith("csv:"):
        path = kind.split(":", 1)[1]
        f = _field_from_csv(Path(path), grid)
        return f, "homogeneous", None
    raise ConfigError(f"unknown data kind {kind!r}")


def _field_from_csv(path: Path, grid) -> "operators.GridField":
    f = operators.GridField.zeros(grid)
    with path.open() as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("i,"):
                continue
            parts = line.strip().split(",")
            if len(parts) < 6:
                continue
            i, j = int(parts[0]), int(parts[1])
            f.u1[j, i] = float(parts[4])
            f.u2[j, i] = float(parts[5])
    f.u1[~grid.mask] = 0.0
    f.u2[~grid.mask] = 0.0
    return f


def _cmd_solve(cfg: dict, outdir: Path, meta: dict, seed: int) -> int:
    dom = _domain_from_config(cfg)
    gcfg = cfg.get("grid", {"nx": 64, "ny": 64})
    grid = operators.Grid.from_domain(dom, int(gcfg["nx"]), int(gcfg["ny"]))
    f, mode, g_ex = _make_data(cfg, dom, grid)
    prob = solver.LeastSquaresProblem(
        domain=dom, grid=grid, K=float(cfg.get("K", 0.0)), f=f,
        lambda_b=cfg.get("lambda_b"), boundary_mode=mode, g=g_ex)
    # the library default (20 sqrt(ndof)) is usually too tight for 1e-10;
    # the CLI asks for a bigger budget unless the config overrides it
    maxit = cfg.get("maxit")
    maxit = int(maxit) if maxit else 60_000
    u, stats = solver.solve_least_squares(prob, tol=float(cfg.get("tol", 1e-10)),
                                          maxit=maxit)
    with (outdir / "solution.csv").open("w") as fh:
        operators.field_to_csv(u, fh, meta={**meta, "domain": dom.digest()})
    payload = {"stats": stats.to_dict()}
    if mode == "trace_match":
        wd = solver.verify_weak_identity(u, prob, n_fields=int(cfg.get("n_check_fields", 5)),
                                         seed=seed)
        payload["weak_identity_max_defect"] = wd["max_defect"]
    _write_json(outdir / "solve_stats.json", payload, meta)
    return 0 if stats.converged else 2


def _cmd_verify(cfg: dict, outdir: Path, meta: dict, seed: int) -> int:
    """Composite property run: green identity, certification, solver defects,
    similarity residuals; single verdict JSON."""
    checks = []

    def check(name: str, passed: bool, margin: float, detail: str = ""):
        checks.append({"name": name, "passed": bool(passed), "margin": float(margin),
                       "detail": detail})

    dom = _domain_from_config(cfg)
    s = dom.sonic
    check("domain_valid", dom.validation.all_passed, 0.0,
          ",".join(dom.validation.failed()) or "all structural checks passed")

    # green identity refinement
    gaps = []
    for n in (32, 64):
        grid = operators.Grid.from_domain(dom, n, n)
        u = operators.GridField.from_callable(grid, lambda X, Y: (X ** 2 + Y, X + Y ** 2))
        w = operators.GridField.from_callable(grid, lambda X, Y: (X + 2 * Y ** 2, X ** 2 - Y))
        gaps.append(operators.green_identity_gap(u, w, 0.25, s, dom))
    ratio = gaps[0] / gaps[1] if gaps[1] > 0 else float("inf")
    check("green_identity_rate", 2.5 <= ratio <= 6.0, ratio,
          f"gap {gaps[0]:.3e} -> {gaps[1]:.3e}")

    # certification across the theorem cases
    grid = operators.Grid.from_domain(dom, 64, 64)
    for case, K in (("theorem2", 0.0), ("theorem2", 0.25), ("theorem2", 0.5),
                    ("theorem3", 0.0), ("theorem3", 0.5), ("theorem3", 1.0)):
        mc = multiplier.MultiplierCase(case, K, dom.ell, s)
        rep = multiplier.certify_lemma4(mc, dom, grid, n_fields=5, seed=seed)
        check(f"certify_{case}_K{K}", rep.certified, rep.k_cert,
              f"k_cert={rep.k_cert:.4f}, min ratio {min(rep.empirical_ratios):.3f}")

    # manufactured solve at modest size
    u_ex, f_ex, g_ex = solver.manufactured_case("poly1", 0.5, s)
    grid = operators.Grid.from_domain(dom, 48, 48)
    f = operators.GridField.from_callable(grid, lambda X, Y: f_ex(X, Y))
    prob = solver.LeastSquaresProblem(domain=dom, grid=grid, K=0.5, f=f,
                                      boundary_mode="trace_match", g=g_ex)
    u, stats = solver.solve_least_squares(prob, tol=1e-9, maxit=40_000)
    ue = operators.GridField.from_callable(grid, lambda X, Y: u_ex(X, Y))
    diff = operators.GridField(grid, u.u1 - ue.u1, u.u2 - ue.u2)
    err = operators.weighted_norm(diff, "star", s)
    check("manufactured_error", err < 0.05, err, f"{stats.iterations} iterations")
    wd = solver.verify_weak_identity(u, prob, n_fields=5, seed=seed)
    check("weak_identity_defect", wd["max_defect"] < 0.02, wd["max_defect"])

    # similarity residuals
    sol = similarity.solve_F(0.25, "mu_pow_nu", (5.0, 200.0), 0.01)
    check("similarity_residual", sol.residual_max <= 1e-8, sol.residual_max)
    s1, s2 = similarity.indicial_exponents(0.25)
    check("indicial_exponents", (s1, s2) == (0.25, -0.75), 0.0)

    all_pass = all(c["passed"] for c in checks)
    _write_json(outdir / "verdict.json",
                {"checks": checks, "all_pass": all_pass}, meta)
    return 0 if all_pass else 2


# ---------------------------------------------------------------------------
# entry point


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="coldplasma",
        description="Mixed elliptic-hyperbolic cold-plasma toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("domain", "certify", "similarity", "solve", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    try:
        cfg, digest = _load_config(args.config)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        seed = int(args.seed)
        meta = {"config_sha256": digest, "seed": seed, "version": CONFIG_VERSION,
                "command": args.command}
        handler = {"domain": _cmd_domain, "certify": _cmd_certify,
                   "similarity": _cmd_similarity, "solve": _cmd_solve,
                   "verify": _cmd_verify}[args.command]
        return handler(cfg, outdir, meta, seed)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ParameterError, DomainBuildError) as e:
        print(f"validation failure: {e}", file=sys.stderr)
        try:
            _write_json(Path(args.out) / "failure.json",
                        {"error": str(e), "type": type(e).__name__},
                        {"command": args.command})
        except OSError:
            pass
        return 2
    except ColdPlasmaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
