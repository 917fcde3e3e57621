"""Command-line verifiers.

Each command runs one family of checks and writes a report.  JSON reports
have a ``header`` (command, resolved configuration and the only
time-dependent field, ``timestamp``) and a list of ``records``; each record
names the inequality it checks (``anchor``), the measured quantity, a
signed ``margin`` (nonnegative when the check holds) and ``passed``.

Exit status: 0 when every record passes, 1 when some record fails (the
failing records are written to stderr), 2 for usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from datetime import datetime, timezone
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .constants_lab import bg_verify, envelope, growth_report, ratio_L, search_extremal
from .errors import InvariantViolation, LPSError
from .gamma_construction import (
    LN2,
    gamma_sequences,
    kernel_sum_check,
    verify_equivalence,
    verify_partition,
)
from .littlewood_paley import (
    LOWER_CONSTANT,
    UPPER_CONSTANT,
    eigen_range,
    gershgorin_bounds,
    gfunction_closed_form,
    kernel_matrix,
    verify_theorem_a,
)
from .nc_matrix import (
    MatrixAlgebraFiltration,
    diagonal_filtration,
    nc_condexp,
    nc_gfunction,
    nc_square_functions,
    hardy_semigroup_norm_check,
    random_matrix,
    verify_nc_axioms,
    verify_nc_theorem,
)
from .probability import (
    MartingaleFunction,
    dyadic_filtration,
    random_filtration,
    sample_martingale,
    square_function_from,
)
from .semigroup import default_t_grid, theorem_a_sequence, verify_axioms

COMMANDS = ("verify-semigroup", "verify-theorem-a", "verify-gamma", "verify-nc", "constants", "emit-kernel")

DEFAULTS = {
    "verify-semigroup": {"seed": 0, "depth": 8, "samples": 100},
    "verify-theorem-a": {"seed": 0, "depth": 8, "samples": 1000},
    "verify-gamma": {"seed": 0, "depth": 6, "samples": 20, "q": "1,2,3", "M": 1.0},
    "verify-nc": {"seed": 0, "samples": 400, "factor_dims": "2,2,2,2", "p": "2,4,8"},
    "constants": {"seed": 0, "depth": 12, "samples": 200, "budget": 100_000, "p": "2,4,8,16"},
    "emit-kernel": {"depth": 50},
}
COMMON = {"format", "out", "config"}
SEMIGROUP_TOL = 1e-10
GAMMA_RESIDUAL_TOL = 1e-12
GAMMA_IDENTITY_TOL = 1e-10
PSD_TOL = 1e-10
GERSHGORIN_RADIUS = 2.0 / 15.0


class UsageError(Exception):
    pass


def record(anchor: str, check: str, value, margin: float, passed: Optional[bool] = None, **extra) -> dict:
    rec = {"anchor": anchor, "check": check, "value": value, "margin": margin,
           "passed": bool(margin >= 0) if passed is None else bool(passed)}
    rec.update(extra)
    return rec


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


# ---------------------------------------------------------------- commands


def run_verify_semigroup(cfg: dict) -> dict:
    depth, n = cfg["depth"], cfg["samples"]
    rng = np.random.default_rng(cfg["seed"])
    seq = theorem_a_sequence(depth)
    grid = default_t_grid(seq)[:30]
    dyadic = dyadic_filtration(depth)
    tree = random_filtration(rng, depth, max_branch=2)
    groups = {
        "dyadic": [sample_martingale(dyadic, rng) for _ in range(n - n // 2)],
        "random_tree": [sample_martingale(tree, rng, fiber_dim=2) for _ in range(n // 2)],
    }
    records = []
    for name, samples in groups.items():
        if not samples:
            continue
        rep = verify_axioms(seq, samples, grid)
        items = [(f"contraction_L{'inf' if math.isinf(p) else int(p)}", v) for p, v in rep.contraction.items()]
        items += [("positivity", rep.positivity), ("semigroup_law", rep.semigroup_law),
                  ("strong_continuity", rep.continuity), ("selfadjointness", rep.selfadjointness),
                  ("unitality", rep.unitality)]
        for check, v in items:
            records.append(record("symmetric diffusion semigroup axioms", f"{name}:{check}",
                                  v, SEMIGROUP_TOL - v, tolerance=SEMIGROUP_TOL))
        records.append(record("symmetric diffusion semigroup axioms", f"{name}:continuity_final_value",
                              rep.continuity_final, 2.0**-30 - rep.continuity_final))
    return {"records": records, "summary": {"t_grid": grid.tolist()}}


def run_verify_theorem_a(cfg: dict) -> dict:
    depth, n = cfg["depth"], cfg["samples"]
    rng = np.random.default_rng(cfg["seed"])
    seq = theorem_a_sequence(depth)
    filt = dyadic_filtration(depth)
    worst_lo = worst_hi = math.inf
    lp = {}
    failing = []
    for i in range(n):
        rep = verify_theorem_a(sample_martingale(filt, rng), seq)
        worst_lo = min(worst_lo, rep.worst_lower_margin)
        worst_hi = min(worst_hi, rep.worst_upper_margin)
        for c in rep.lp_checks:
            key = (str(c["p"]), c["side"])
            rel = (c["rhs"] - c["lhs"]) / c["rhs"] if c["rhs"] > 0 else 0.0
            lp[key] = min(lp.get(key, math.inf), rel)
        if not rep.passed:
            failing.append(i)
    anchor = "martingale/semigroup square-function sandwich"
    records = [
        record(anchor, "pointwise_lower: G/S - sqrt(7/60)", worst_lo, worst_lo + 1e-10),
        record(anchor, "pointwise_upper: sqrt(23/60) - G/S", worst_hi, worst_hi + 1e-10),
    ]
    for (p, side), m in sorted(lp.items()):
        records.append(record(anchor, f"Lp_{side}_p={p}", m, m + 1e-10))
    records.append(record(anchor, "failing_samples", len(failing), -len(failing), failing=failing))
    return {"records": records, "summary": {"depth": depth, "samples": n,
                                            "worst_lower_margin": worst_lo,
                                            "worst_upper_margin": worst_hi}}


def run_verify_gamma(cfg: dict) -> dict:
    depth, M = cfg["depth"], cfg["M"]
    rng = np.random.default_rng(cfg["seed"])
    anchor = "incomplete-gamma sequence construction"
    records, sequences = [], []
    for q in cfg["q"]:
        seqs = gamma_sequences(q, depth, M)
        sequences.append(seqs.to_dict())
        res = seqs.residuals
        tag = f"q={q:g}"
        records += [
            record(anchor, f"{tag}:l_k residual", res["lk_max"], GAMMA_RESIDUAL_TOL - res["lk_max"]),
            record(anchor, f"{tag}:m_k residual", res["mk_max"], GAMMA_RESIDUAL_TOL - res["mk_max"]),
            record(anchor, f"{tag}:t_k b_k q = l_k", res["identity_tb_l"], GAMMA_IDENTITY_TOL - res["identity_tb_l"]),
            record(anchor, f"{tag}:t_(k-1) b_k q = m_k", res["identity_tb_m"],
                   GAMMA_IDENTITY_TOL - res["identity_tb_m"]),
            record(anchor, f"{tag}:separation N > 2", seqs.N, seqs.N - 2.0 if not math.isinf(seqs.N) else math.inf),
        ]
        part = max(verify_partition(q, k, seqs) for k in range(1, depth + 1))
        records.append(record(anchor, f"{tag}:partition identity", part, GAMMA_IDENTITY_TOL - part))
        if q == 1:
            k = np.arange(1, depth + 1)
            l_err = float(np.max(np.abs(seqs.l[1:] + np.log1p(-(2.0 ** -(k + 2.0))))))
            m_err = float(np.max(np.abs(seqs.m[1:] - (k + 2) * LN2)))
            records.append(record(anchor, f"{tag}:closed form l_k", l_err, 1e-12 - l_err))
            records.append(record(anchor, f"{tag}:closed form m_k", m_err, 1e-12 - m_err))
        lt = seqs.log_t
        ts = np.exp(np.linspace(lt[-1] - 5.0, lt[0] + 5.0, 400))
        ksum = kernel_sum_check(seqs, ts)
        records.append(record(anchor, f"{tag}:kernel sum bound", ksum, 1.0 - ksum))

        worst_lo = worst_hi = math.inf
        violations = 0
        for i in range(cfg["samples"]):
            filt = dyadic_filtration(int(rng.integers(2, min(depth + 1, 7) + 1)))
            r = (1.0, 2.0, math.inf)[i % 3]
            rep = verify_equivalence(seqs, sample_martingale(filt, rng, fiber_dim=4, fiber_r=r))
            violations += rep.violations
            worst_lo = min(worst_lo, rep.worst_lower_margin / rep.lower_constant)
            worst_hi = min(worst_hi, rep.worst_upper_margin / rep.upper_constant)
        records.append(record("vector-valued g-function equivalence", f"{tag}:lower c_q S_q <= G_q",
                              worst_lo, worst_lo + 1e-8, violations=violations))
        records.append(record("vector-valued g-function equivalence", f"{tag}:upper G_q^q <= C S_q^q",
                              worst_hi, worst_hi + 1e-8))
    return {"records": records, "summary": {"sequences": sequences}}


def run_verify_nc(cfg: dict) -> dict:
    alg = MatrixAlgebraFiltration(tuple(cfg["factor_dims"]))
    rng = np.random.default_rng(cfg["seed"])
    seq = theorem_a_sequence(alg.depth)
    n = cfg["samples"]
    xs = [random_matrix(rng, alg.dim, hermitian=(i % 2 == 0)) for i in range(n)]
    worst = {}
    for x in xs:
        rep = verify_nc_theorem(alg, x, seq)
        for key, v in rep.to_dict().items():
            if key.endswith("tol"):
                continue
            worst[key] = min(worst.get(key, math.inf), v)
    anchor = "operator-order square-function sandwich"
    records = []
    for key in ("col_lower", "col_upper", "row_lower", "row_upper"):
        records.append(record(anchor, key, worst[key], worst[key] + PSD_TOL))
    for key in ("sqrt_col_lower", "sqrt_col_upper", "sqrt_row_lower", "sqrt_row_upper"):
        records.append(record("operator monotonicity of the square root", key, worst[key], worst[key] + 1e-7))

    # conditional expectation: trace preserving, idempotent, tower property
    ce = 0.0
    for x in xs[:20]:
        for m in range(1, alg.depth + 1):
            Em = nc_condexp(alg, x, m)
            ce = max(ce, abs(alg.tau(Em) - alg.tau(x)), float(np.abs(nc_condexp(alg, Em, m) - Em).max()))
            for k in range(1, m):
                ce = max(ce, float(np.abs(nc_condexp(alg, Em, k) - nc_condexp(alg, x, k)).max()))
    records.append(record("trace-preserving conditional expectations", "trace/idempotent/tower",
                          ce, 1e-12 - ce))

    # diagonal matrices against the commutative closed form
    filt = diagonal_filtration(alg)
    diag_err = 0.0
    for _ in range(20):
        v = rng.standard_normal(alg.dim)
        f = MartingaleFunction(filt, v)
        Gc, _ = nc_gfunction(alg, seq, np.diag(v))
        Sc, _ = nc_square_functions(alg, np.diag(v), start=2)
        G = gfunction_closed_form(seq, f)
        S = square_function_from(f, 2)
        scale = max(float(S.max()), 1e-300)
        diag_err = max(diag_err, float(np.abs(np.diag(Gc).real - G).max()) / scale,
                       float(np.abs(np.diag(Sc).real - S).max()) / scale,
                       float(np.abs(Gc - np.diag(np.diag(Gc))).max()) / scale)
    records.append(record("commutative diagonal embedding", "diag(G_c), diag(S_c) vs commutative",
                          diag_err, 1e-12 - diag_err))

    ax = verify_nc_axioms(alg, seq, xs[:8], default_t_grid(seq)[:12])
    for name, v in (("unitality", ax.unitality), ("trace_selfadjointness", ax.selfadjointness),
                    ("positivity", ax.positivity)):
        records.append(record("noncommutative semigroup axioms", name, float(v), SEMIGROUP_TOL - float(v)))
    for p, v in ax.contraction.items():
        records.append(record("noncommutative semigroup axioms",
                              f"contraction_L{'inf' if math.isinf(p) else int(p)}", float(v), SEMIGROUP_TOL - float(v)))

    for p in cfg["p"]:
        worst_margin = math.inf
        for x in xs[0:20:2]:
            rem = hardy_semigroup_norm_check(alg, x, p, seq)
            worst_margin = min(worst_margin, (rem["semigroup"] - rem["lower"]) / rem["hardy"],
                               (rem["upper"] - rem["semigroup"]) / rem["hardy"])
        records.append(record("Hardy-norm equivalence", f"p={p:g}", worst_margin, worst_margin + 1e-10))
    return {"records": records, "summary": {"factor_dims": list(alg.factor_dims), "samples": n}}


def run_constants(cfg: dict) -> dict:
    ps = cfg["p"]
    depth, budget, seed = cfg["depth"], cfg["budget"], cfg["seed"]
    rng = np.random.default_rng(seed)
    records = []
    bg_worst = {p: math.inf for p in ps}
    env_worst = {p: math.inf for p in ps}
    iso = 0.0
    for i in range(cfg["samples"]):
        filt = dyadic_filtration(int(rng.integers(2, 9)))
        f = sample_martingale(filt, rng)
        for p in ps:
            rep = bg_verify(f, p)
            bg_worst[p] = min(bg_worst[p], rep.lower_margin, rep.upper_margin, rep.refinement_margin)
            try:
                r = ratio_L(f, p, check_envelope=False)
            except LPSError:
                continue
            env_worst[p] = min(env_worst[p], (envelope(p) - r) / envelope(p))
        rep2 = bg_verify(f, 2.0)
        if rep2.s_norm > 0:
            iso = max(iso, abs(rep2.f_norm / rep2.s_norm - 1.0))
    for p in ps:
        records.append(record("Burkholder-Gundy inequality", f"p={p:g}", bg_worst[p], bg_worst[p] + 1e-10))
        records.append(record("reverse Littlewood-Paley-Stein envelope", f"p={p:g}", env_worst[p],
                              env_worst[p] + 1e-10))
    records.append(record("L2 isometry of the square function", "| ||f||_2/||Sf||_2 - 1 |", iso, 1e-10 - iso))

    table = growth_report(ps, depth, budget, seed)
    for row in table.rows:
        m = (row["envelope"] - max(row["searched_ratio"], row["witness_ratio"])) / row["envelope"]
        records.append(record("reverse Littlewood-Paley-Stein envelope", f"growth p={row['p']:g}",
                              row["searched_ratio"], m + 1e-10, witness_ratio=row["witness_ratio"]))
    searched = [r["searched_ratio"] for r in table.rows]
    steps = [b - a for a, b in zip(searched, searched[1:])]
    records.append(record("growth of the reverse constant in p", "searched ratios nondecreasing",
                          searched, min(steps, default=0.0)))
    small = search_extremal(ps[0], 2, min(budget, 1000), seed)
    records.append(record("growth of the reverse constant in p", "depth-2 supremum 2 attained",
                          small.best_ratio, small.best_ratio - (2.0 - 1e-6)))
    return {"records": records, "summary": table.to_dict(), "csv": table.to_csv()}


def run_emit_kernel(cfg: dict) -> dict:
    depth = cfg["depth"]
    if depth < 2:
        raise UsageError("emit-kernel needs --depth >= 2")
    B = kernel_matrix(theorem_a_sequence(depth), depth)
    g = gershgorin_bounds(B)
    lo, hi = eigen_range(B)
    anchor = "Gershgorin kernel bound"
    radius = float(g.radii.max())
    records = [
        record(anchor, "interval lower >= 7/60", g.lo, g.lo - LOWER_CONSTANT + 1e-12),
        record(anchor, "interval upper <= 23/60", g.hi, UPPER_CONSTANT + 1e-12 - g.hi),
        record(anchor, "radius <= 2/15", radius, GERSHGORIN_RADIUS + 1e-12 - radius),
        record(anchor, "lambda_min >= 7/60", lo, lo - LOWER_CONSTANT + 1e-12),
        record(anchor, "lambda_max <= 23/60", hi, UPPER_CONSTANT + 1e-12 - hi),
    ]
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows([[repr(float(v)) for v in row] for row in B.entries])
    return {"records": records,
            "summary": {"depth": depth, "size": B.size, "gershgorin": [g.lo, g.hi],
                        "eigen_range": [lo, hi], "kernel": B.entries.tolist()},
            "csv": buf.getvalue()}


RUNNERS = {
    "verify-semigroup": run_verify_semigroup,
    "verify-theorem-a": run_verify_theorem_a,
    "verify-gamma": run_verify_gamma,
    "verify-nc": run_verify_nc,
    "constants": run_constants,
    "emit-kernel": run_emit_kernel,
}


# ------------------------------------------------------------ configuration


def _floats(text: str) -> list:
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise UsageError("empty number list")
    return vals


def _ints(text: str) -> list:
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise UsageError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{num}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="martingale-lps",
        description="Verify martingale and semigroup square-function inequalities.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--seed", type=int, help="64-bit seed for all randomness")
    parser.add_argument("--depth", type=int, help="filtration depth")
    parser.add_argument("--samples", type=int, help="number of random samples")
    parser.add_argument("--p", help="comma-separated exponents p")
    parser.add_argument("--q", help="comma-separated exponents q")
    parser.add_argument("--M", type=float, help="time scale M of the gamma construction")
    parser.add_argument("--factor-dims", dest="factor_dims", help="tensor factor sizes, e.g. 2,2,2,2")
    parser.add_argument("--budget", type=int, help="ratio evaluations per extremal search")
    parser.add_argument("--format", choices=("json", "csv"), help="report format (default json)")
    parser.add_argument("--out", help="write the report here instead of stdout")
    parser.add_argument("--config", help="key=value file; command-line flags take precedence")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    command = args.command
    allowed = set(DEFAULTS[command]) | COMMON
    flags = {k: v for k, v in vars(args).items() if v is not None and k != "command"}
    from_file = read_config_file(flags["config"]) if "config" in flags else {}
    for key in list(from_file) + list(flags):
        if key not in allowed:
            raise UsageError(f"option {key!r} does not apply to {command}")
    cfg = dict(DEFAULTS[command])
    cfg.update({"format": "json", "out": None})
    cfg.update(from_file)
    cfg.update(flags)
    cfg.pop("config", None)

    try:
        for key in ("seed", "depth", "samples", "budget"):
            if key in cfg:
                cfg[key] = int(cfg[key])
        if "M" in cfg:
            cfg["M"] = float(cfg["M"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if "p" in cfg:
        cfg["p"] = _floats(cfg["p"])
    if "q" in cfg:
        cfg["q"] = _floats(cfg["q"])
    if "factor_dims" in cfg:
        cfg["factor_dims"] = _ints(cfg["factor_dims"])
    if cfg["format"] not in ("json", "csv"):
        raise UsageError("format must be json or csv")

    if "seed" in cfg and not 0 <= cfg["seed"] < 2**64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    if cfg.get("samples", 1) < 1:
        raise UsageError("samples must be >= 1")
    if cfg.get("budget", 1) < 1:
        raise UsageError("budget must be >= 1")
    if "depth" in cfg and cfg["depth"] < 1:
        raise UsageError("depth must be >= 1")
    if command == "verify-semigroup" and cfg["depth"] < 2:
        raise UsageError("verify-semigroup needs depth >= 2")
    if command == "constants":
        if any(p < 2 for p in cfg["p"]) or cfg["p"] != sorted(cfg["p"]):
            raise UsageError("constants needs ascending p values >= 2")
        if not 2 <= cfg["depth"] <= 14:
            raise UsageError("constants needs 2 <= depth <= 14")
    if command == "verify-nc" and any(p < 2 for p in cfg["p"]):
        raise UsageError("Hardy norms are computed for p >= 2 only")
    if command == "verify-gamma" and any(q < 1 for q in cfg["q"]):
        raise UsageError("q must be >= 1")
    return cfg


# ----------------------------------------------------------------- output


def records_csv(records: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["anchor", "check", "value", "margin", "passed"])
    for r in records:
        value = r["value"]
        writer.writerow([r["anchor"], r["check"], json.dumps(_jsonable(value)),
                         repr(r["margin"]) if isinstance(r["margin"], float) else r["margin"], r["passed"]])
    return buf.getvalue()


def render(command: str, cfg: dict, result: dict, timestamp: Optional[str] = None) -> tuple[str, bool]:
    records = result["records"]
    passed = all(r["passed"] for r in records)
    if cfg["format"] == "csv":
        return result.get("csv") or records_csv(records), passed
    header = {"command": command, "version": __version__,
              "config": {k: v for k, v in cfg.items() if k not in ("out", "format")},
              "timestamp": timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")}
    report = {"header": header, "records": records, "summary": result.get("summary", {}),
              "passed": passed}
    return json.dumps(_jsonable(report), sort_keys=True, indent=1) + "\n", passed


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        result = RUNNERS[args.command](cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(json.dumps(_jsonable({"failing_records": [exc.record]}), sort_keys=True), file=sys.stderr)
        return 1
    except LPSError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    text, passed = render(args.command, cfg, result)
    if cfg["out"]:
        with open(cfg["out"], "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if not passed:
        failing = [r for r in result["records"] if not r["passed"]]
        print(json.dumps(_jsonable({"failing_records": failing}), sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
