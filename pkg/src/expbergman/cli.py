"""Command-line driver: every experiment suite emits a deterministic table.

Each subcommand writes a list of records (JSON or CSV). The first line of a
CSV file is a ``#`` comment naming the schema version and columns; JSON output
carries the same schema tag, the resolved configuration and the records.
Every record carries its provenance (seed, sample count, method tag, standard
error where one exists). Output depends only on the command line.

Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import carleson as carl
from . import funcspace as fs
from . import geometry as geo
from . import operators as ops
from .errors import ExpBergmanError
from .quadrature import IntegrationConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid command-line configuration (exit code 2)."""


# ---------------------------------------------------------------------------
# parsing helpers


def parse_grid(text: str | None, default) -> list:
    if text is None:
        return list(default)
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --grid {text!r}") from exc
    if not vals or any(not 0.0 <= v < 1.0 for v in vals):
        raise ConfigError("--grid values must lie in [0, 1)")
    return vals


def _params(text: str) -> dict:
    out = {}
    for item in filter(None, text.split(",")):
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = float(v)
    return out


def parse_measure(spec: str | None, n: int):
    """``lebesgue`` | ``power:a`` | ``gaussian:center=c,width=s,height=h`` | ``const:c`` | ``file.json``."""
    if spec is None or spec == "lebesgue":
        return carl.LebesgueVolume()
    if spec.endswith(".json"):
        try:
            with open(spec) as fh:
                mu = carl.atomic_from_json(json.load(fh))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot load atomic measure {spec!r}: {exc}") from exc
        if mu.n != n:
            raise ConfigError(f"atomic measure has dimension {mu.n}, expected {n}")
        return mu
    name, _, arg = spec.partition(":")
    try:
        if name == "power":
            return carl.power_density(float(arg))
        if name == "const":
            c = float(arg)
            if c < 0:
                raise ConfigError("constant symbol must be nonnegative")
            return carl.Density(lambda W: np.full(len(W), c), f"const:{c:g}", radial_power=0.0 if c == 1.0 else None)
        if name == "gaussian":
            kw = _params(arg)
            center = np.zeros(n, dtype=complex)
            center[0] = kw.get("center", 0.0)
            return carl.gaussian_bump(center, kw.get("width", 0.1), kw.get("height", 1.0))
    except ValueError as exc:
        raise ConfigError(f"bad --measure {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown measure {spec!r}")


def parse_symbol(spec: str | None, n: int):
    """``coord:j[,power]`` | ``monomial:a1,...,an`` | ``kernel`` (``Rg = (1 - z_1)^{-2}``)."""
    spec = spec or "coord:1"
    name, _, arg = spec.partition(":")
    try:
        if name == "kernel":
            a = np.zeros(n, dtype=complex)
            a[0] = 1.0
            return ops.KernelSymbol(a)
        if name == "coord":
            parts = [int(x) for x in arg.split(",")] if arg else [1]
            j, power = parts[0], (parts[1] if len(parts) > 1 else 1)
            if not 1 <= j <= n:
                raise ConfigError(f"coordinate index {j} out of range 1..{n}")
            return fs.MonomialFunction.coordinate(j - 1, n, power)
        if name == "monomial":
            alpha = tuple(int(x) for x in arg.split(","))
            if len(alpha) != n:
                raise ConfigError(f"monomial needs {n} exponents")
            return fs.MonomialFunction.monomial(alpha)
    except ValueError as exc:
        raise ConfigError(f"bad --symbol {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown symbol {spec!r}")


def ray_point(n: int, t: float) -> np.ndarray:
    z = np.zeros(n, dtype=complex)
    z[0] = t
    return z


def fmt_point(z) -> str:
    return ";".join(f"{float(c.real)!r}{float(c.imag):+}j" for c in np.asarray(z, dtype=complex))


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


# ---------------------------------------------------------------------------
# commands


def _cfg(args, default_samples):
    samples = args.samples or default_samples
    return IntegrationConfig(samples=samples, seed=args.seed)


def cmd_hessian(args):
    count = args.samples or 1000
    rng = np.random.default_rng([args.seed, 1])
    rows = []
    for i in range(count):
        n = args.n
        g = rng.standard_normal(2 * n)
        v = (g[:n] + 1j * g[n:]) / np.linalg.norm(g)
        z = v * 0.99 * rng.random() ** (1.0 / (2 * n))
        H = geo.hessian(z)
        Hi = geo.hessian_inverse(z)
        u = float(geo.defect(z))
        det_closed = (2.0 - u) / u ** (2 * n + 1)
        det_num = float(np.real(np.linalg.det(H)))
        spec = geo.hessian_spectral(z)
        rows.append({
            "index": i, "abs_z": float(np.linalg.norm(z)),
            "inverse_residual": float(np.max(np.abs(H @ Hi - np.eye(n)))),
            "det_residual": abs(det_num - det_closed) / det_closed,
            "spectral_residual": float(np.max(np.abs(spec.reconstruct() - H)) / np.max(np.abs(H))),
            "method": "closed-form", "seed": args.seed, "samples": count,
        })
    return rows


def cmd_distance(args):
    count = args.samples or 20
    rng = np.random.default_rng([args.seed, 2])
    rows = []
    n = args.n
    for i in range(count):
        g = rng.standard_normal((2, 2 * n))
        pts = (g[:, :n] + 1j * g[:, n:]) / np.linalg.norm(g, axis=1, keepdims=True)
        pts *= 0.95 * rng.random((2, 1)) ** (1.0 / (2 * n))
        z, w = pts
        est = geo.sigma_estimate(z, w)
        rows.append({
            "index": i, "z": fmt_point(z), "w": fmt_point(w),
            "euclidean": float(np.linalg.norm(w - z)), "lower": est.lower, "upper": est.upper,
            "status": est.status.value, "method": "comparison/polyline", "seed": args.seed, "samples": count,
        })
    return rows


def cmd_ball(args):
    samples = args.samples or 20000
    rows = []
    n, r = args.n, args.r
    for t in parse_grid(args.grid, (0.0, 0.5, 0.9, 0.99)):
        z = ray_point(n, t)
        res = geo.ball_volume(z, r, samples, args.seed, refine=0)
        u = 1.0 - t * t
        scale = u ** (2 * n + 1) * r ** (2 * n)
        audit = geo.inclusion_audit(z, r, 1000, np.random.default_rng([args.seed, 3, int(round(t * 1e6))]))
        rows.append({
            "abs_z": t, "volume": res.value, "stderr": res.stderr, "normalized": res.value / scale,
            "normalized_stderr": res.stderr / scale, "volume_D": geo.volume_D(z, r),
            "inner_checked": audit.inner_checked, "inner_violations": audit.inner_violations,
            "outer_checked": audit.outer_checked, "outer_violations": audit.outer_violations,
            "method": res.method, "seed": args.seed, "samples": samples,
        })
    return rows


def cmd_lattice(args):
    grid = parse_grid(args.grid, (0.8, 0.06))
    if len(grid) != 2:
        raise ConfigError("lattice --grid takes 'center_modulus,window_radius'")
    window = geo.Window(ray_point(args.n, grid[0]), grid[1])
    lat = geo.build_lattice(args.r, seed=args.seed, n=args.n, window=window)
    probes = args.samples or 2000
    rep = geo.verify_lattice(lat, probes=probes, seed=args.seed)
    return [{
        "window_center": grid[0], "window_radius": grid[1], "centers": len(lat.centers),
        "overlap_bound": lat.overlap_bound, "pairs_checked": rep.pairs_checked,
        "max_quarter_count": rep.max_quarter_count, "uncovered": rep.uncovered,
        "probes": rep.probes, "overlap": rep.overlap, "ok": rep.ok,
        "method": "greedy-certified", "seed": args.seed, "samples": probes,
    }]


def cmd_testfn(args):
    cfg = _cfg(args, 20000)
    n, p, r = args.n, args.p, args.r
    rows = []
    for t in parse_grid(args.grid, (0.0, 0.5, 0.9, 0.99)):
        z = ray_point(n, t)
        val, err = fs.norm_ratio(z, cfg, p)
        key = fs.key_inequality_constant(z, r, samples=4000, seed=args.seed)
        rows.append({
            "abs_z": t, "p": p, "norm_ratio": val, "stderr": err, "key_constant": key,
            "key_normalized": key / (r * r), "method": "mobius-defensive", "seed": args.seed,
            "samples": cfg.samples,
        })
    return rows


def cmd_carleson(args):
    cfg = _cfg(args, 20000)
    mu = parse_measure(args.measure, args.n)
    grid = parse_grid(args.grid, carl.DEFAULT_GRID)
    rep = carl.carleson_check(mu, args.p, args.r, boundary_grid=grid, cfg=cfg, n=args.n)
    rows = [{
        "kind": "trace", "abs_z": t, "mu_hat": m, "ball_ratio": b, "verdict": "", "vanishing": "",
        "tail_exponent": "", "chain_constant": "", "measure": rep.measure,
        "method": "mobius-ratio", "seed": args.seed, "samples": cfg.samples,
    } for t, m, b in rep.boundary_trace]
    rows.append({
        "kind": "summary", "abs_z": "", "mu_hat": rep.sup_mu_hat, "ball_ratio": rep.sup_ball_ratio,
        "verdict": rep.verdict.value, "vanishing": rep.vanishing_verdict.value,
        "tail_exponent": rep.tail_exponent, "chain_constant": rep.chain_constant, "measure": rep.measure,
        "method": "mobius-ratio", "seed": args.seed, "samples": cfg.samples,
    })
    return rows


def cmd_cesaro(args):
    cfg = _cfg(args, 20000)
    g = parse_symbol(args.symbol, args.n)
    grid = parse_grid(args.grid, (0.0, 0.5, 0.8, 0.9, 0.95, 0.99))
    stat = ops.cesaro_symbol_statistic(g, grid, seed=args.seed)
    rows = [{
        "kind": "symbol", "abs_z": t, "value": ray, "max_over_rays": mx, "p": "", "index": "",
        "method": "pointwise", "seed": args.seed, "samples": "",
    } for t, ray, mx in stat.boundary_trace]
    suite = fs.polynomial_suite(args.n, count=50, max_degree=args.max_degree or 6, seed=args.seed)
    for p in (1.0, 2.0):
        for i, f in enumerate(suite):
            rows.append({
                "kind": "norm_equivalence", "abs_z": "", "value": ops.norm_equivalence_ratio(f, p, cfg),
                "max_over_rays": "", "p": p, "index": i,
                "method": "exact" if p == 2 else "stratified", "seed": args.seed, "samples": cfg.samples,
            })
    return rows


def cmd_toeplitz(args):
    cfg = _cfg(args, 20000)
    n = args.n
    mu = parse_measure(args.measure or "const:1", n)
    if isinstance(mu, carl.Atomic):
        raise ConfigError("Toeplitz symbols must be densities")
    N = args.max_degree if args.max_degree is not None else min(ops.DEFAULT_TRUNCATION.get(n, 4), 12)
    basis = ops.OrthonormalBasis(n, N)
    M = ops.toeplitz_matrix(basis, mu, cfg)
    norm = ops.toeplitz_norm_probe(M)
    rows = []
    for k, alpha in enumerate(basis.indices):
        rows.append({
            "kind": "diagonal", "index": "-".join(map(str, alpha)), "abs_z": "",
            "value": float(M.entries[k, k].real), "stderr": float(M.stderr[k, k]),
            "method": M.method, "seed": args.seed, "samples": cfg.samples,
        })
    for t in parse_grid(args.grid, (0.0, 0.5, 0.9, 0.99)):
        res = ops.u_hat(mu, ray_point(n, t), cfg)
        rows.append({
            "kind": "u_hat", "index": "", "abs_z": t, "value": res.value, "stderr": res.stderr,
            "method": res.method, "seed": args.seed, "samples": cfg.samples,
        })
    rows.append({
        "kind": "norm_probe", "index": "", "abs_z": "", "value": norm,
        "stderr": float(np.max(M.stderr, initial=0.0)), "method": M.method, "seed": args.seed,
        "samples": cfg.samples,
    })
    return rows


def cmd_kernel(args):
    n = args.n
    N = args.max_degree if args.max_degree is not None else ops.DEFAULT_TRUNCATION.get(n, 4)
    if N < 3:
        raise ConfigError("--max-degree must be at least 3")
    schedule = (N // 3, 2 * N // 3, N)
    grid = parse_grid(args.grid, (0.0, 0.2, 0.4, 0.6, 0.8, 0.9))
    trace = ops.kernel_diagonal_bound(ops.OrthonormalBasis(n, N), grid, schedule)
    rows = []
    for i, Nk in enumerate(schedule):
        for j, t in enumerate(grid):
            rows.append({
                "N": Nk, "abs_z": t, "normalized_diagonal": float(trace.values[i, j]),
                "method": "truncated-basis", "seed": args.seed, "samples": "",
            })
    return rows


COMMANDS = {
    "hessian": (cmd_hessian, "closed-form identity residuals at random points"),
    "distance": (cmd_distance, "certified distance intervals on random point pairs"),
    "ball": (cmd_ball, "ball volume and inclusion sweep along a ray"),
    "lattice": (cmd_lattice, "build and verify a separated covering lattice in a window"),
    "testfn": (cmd_testfn, "test-function norm ratios and key-inequality constants"),
    "carleson": (cmd_carleson, "Carleson report for a measure"),
    "cesaro": (cmd_cesaro, "Cesaro symbol statistic and norm-equivalence suite"),
    "toeplitz": (cmd_toeplitz, "Toeplitz finite section, u-hat trace and norm probe"),
    "kernel": (cmd_kernel, "normalized diagonal of the truncated Bergman kernel"),
}


# ---------------------------------------------------------------------------
# output


def render(command: str, args, rows, fmt: str) -> str:
    rows = [{k: _clean(v) for k, v in row.items()} for row in rows]
    columns = list(rows[0].keys()) if rows else []
    schema = f"expbergman/{command}/v{SCHEMA_VERSION}"
    if fmt == "json":
        doc = {"schema": schema, "columns": columns, "config": config_record(command, args), "records": rows}
        return json.dumps(doc, indent=1, sort_keys=False) + "\n"
    buf = io.StringIO()
    buf.write(f"# schema={schema} columns={','.join(columns)}\n")
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def config_record(command, args) -> dict:
    keys = ("n", "p", "r", "seed", "samples", "measure", "symbol", "grid", "max_degree")
    return {"command": command, **{k: getattr(args, k) for k in keys}}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expbergman", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--n", type=int, default=1, help="complex dimension (1..3)")
        sp.add_argument("--p", type=float, default=2.0, help="integrability exponent (>= 1)")
        sp.add_argument("--r", type=float, default=1 / 80, help="metric ball radius (<= 1/80)")
        sp.add_argument("--seed", type=int, required=True, help="random seed (mandatory)")
        sp.add_argument("--samples", type=int, default=None, help="Monte Carlo samples or item count")
        sp.add_argument("--out", default=None, help="output file (default: stdout)")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--measure", default=None, help="lebesgue | power:a | gaussian:center=..,width=..,height=.. | const:c | file.json")
        sp.add_argument("--symbol", default=None, help="coord:j[,power] | monomial:a1,..,an | kernel")
        sp.add_argument("--grid", default=None, help="comma-separated list of |z| values")
        sp.add_argument("--max-degree", type=int, default=None, help="truncation degree N")
    return parser


def validate(args):
    if not 1 <= args.n <= 3:
        raise ConfigError("--n must be 1, 2 or 3")
    if not args.p >= 1:
        raise ConfigError("--p must be >= 1")
    if not 0 < args.r:
        raise ConfigError("--r must be positive")
    if args.samples is not None and args.samples < 1:
        raise ConfigError("--samples must be positive")
    if args.max_degree is not None and not 0 <= args.max_degree <= 60:
        raise ConfigError("--max-degree must lie in 0..60")
    if args.seed < 0:
        raise ConfigError("--seed must be nonnegative")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        validate(args)
        func, _ = COMMANDS[args.command]
        rows = func(args)
        text = render(args.command, args, rows, args.format)
    except ConfigError as exc:
        print(f"expbergman: configuration error: {exc}", file=sys.stderr)
        return 2
    except (ExpBergmanError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"expbergman: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 1
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
