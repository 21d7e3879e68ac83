"""Command-line front end: ``idbounds <subcommand> ...``.

Every report is a JSON object ``{"command", "result", "manifest"}`` (or a
CSV table preceded by a ``# manifest=`` comment line). Exit codes: 0 on
success, 2 on validation errors, 64 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, is_dataclass
from pathlib import Path

import numpy as np

from . import __version__, checks, core, idcode, minimax, nptest, resolvability, secondorder, spectrum
from . import rng as rngmod

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_VALIDATION = 2
EXIT_USAGE = 64

MANIFEST_KEYS = ("argv", "command", "channel_sha256", "seeds", "generator", "tolerances", "version", "duration_s")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# serialization


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become the strings ``"inf"``, ``"-inf"``, ``"nan"``."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return {k: to_jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [to_jsonable(v) for v in items]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def from_json_real(v):
    """Inverse of the non-finite encoding of :func:`to_jsonable`."""
    if v in ("inf", "-inf", "nan"):
        return float(v)
    return v


@dataclass
class RunManifest:
    argv: list
    command: str
    channel_sha256: str | None
    seeds: list
    generator: str
    tolerances: dict
    version: str
    duration_s: float = 0.0


def _source_hash(source: str | None) -> str | None:
    if source is None:
        return None
    path = Path(source)
    data = path.read_bytes() if path.is_file() else source.encode()
    return hashlib.sha256(data).hexdigest()


def validate_manifest(obj: dict) -> RunManifest:
    """Check a parsed manifest and return it; raises ``ValidationError`` when malformed."""
    missing = [k for k in MANIFEST_KEYS if k not in obj]
    if missing:
        raise core.ValidationError(f"manifest lacks {missing}")
    if not isinstance(obj["argv"], list) or not all(isinstance(a, str) for a in obj["argv"]):
        raise core.ValidationError("manifest argv must be a list of strings")
    if obj["generator"] != rngmod.GENERATOR_NAME:
        raise core.ValidationError(f"unknown generator {obj['generator']!r}")
    return RunManifest(**{k: obj[k] for k in MANIFEST_KEYS})


def parse_report(text: str) -> dict:
    """Parse a JSON or CSV report and validate its embedded manifest."""
    stripped = text.lstrip()
    if stripped.startswith("# manifest="):
        first, _, body = stripped.partition("\n")
        manifest = json.loads(first[len("# manifest="):])
        rows = list(csv.DictReader(io.StringIO(body)))
        report = {"command": manifest.get("command"), "rows": rows, "manifest": manifest}
    else:
        report = json.loads(text)
        if not isinstance(report, dict) or "manifest" not in report:
            raise core.ValidationError("report lacks a manifest")
    validate_manifest(report["manifest"])
    return report


def _flatten(prefix: str, obj, out: list) -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, list) and obj and isinstance(obj[0], (dict, list)):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}.{i}", v, out)
    else:
        out.append((prefix, json.dumps(obj) if isinstance(obj, list) else obj))


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, allow_nan=False) + "\n"
    buf = io.StringIO()
    buf.write("# manifest=" + json.dumps(report["manifest"], allow_nan=False) + "\n")
    result = report["result"]
    if isinstance(result, dict) and "rows" in result:
        rows = result["rows"]
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    else:
        pairs: list = []
        _flatten("", result, pairs)
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["key", "value"])
        writer.writerows(pairs)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands; each returns (result, seeds, tolerances)


def _eval_report(ev: idcode.IDCodeEvaluation) -> dict:
    return {
        "type1": ev.type1,
        "type2": ev.type2,
        "worst_pair": ev.worst_pair,
        "worst_message": ev.worst_message,
        "single_message": ev.single_message,
    }


def cmd_beta(a):
    r = nptest.beta_epsilon(core.load_distribution(a.p), core.load_distribution(a.q), a.eps)
    res = {
        "beta": r.beta,
        "neg_log_beta": nptest.neg_log(r.beta),
        "type1": r.type1,
        "type2": r.type2,
        "threshold": r.test.threshold,
        "randomization": r.test.randomization,
    }
    return res, [], {"tie_tol": nptest.TIE_TOL}


def cmd_dspec(a):
    r = nptest.ds_epsilon(core.load_distribution(a.p), core.load_distribution(a.q), a.eps)
    return {"ds": r.value, "achieved_tail": r.achieved_tail}, [], {"cdf_tol": nptest.CDF_TOL}


def cmd_lemma1(a):
    if a.p is not None:
        if a.q is None or a.eps is None or a.zeta is None:
            raise core.ValidationError("a single lemma1 check needs --p, --q, --eps and --zeta")
        r = nptest.lemma1_check(core.load_distribution(a.p), core.load_distribution(a.q), a.eps, a.zeta)
        return r, [], {"slack": 1e-9}
    ok, detail = checks.lemma1_sandwich(a.sweep, a.seed)
    return {"holds": ok, **detail}, [a.seed], {"slack": 1e-9}


def cmd_softcover(a):
    w = core.load_channel(a.channel)
    p = core.load_distribution(a.input)
    s = resolvability.truncation_set(w, core.load_distribution(a.q), a.gamma)
    best = resolvability.soft_cover_best_of(p, w, s, a.m, a.trials, a.seed)
    res = {
        "bound": resolvability.soft_cover_bound(a.gamma, a.m),
        "best": {"distance": best.distance, "trial": best.trial, "mtype_counts": list(best.mtype.counts)},
    }
    if a.trials > 1:
        res["mean_check"] = resolvability.soft_cover_mean_check(p, w, s, a.m, a.trials, a.seed)
    res.update(rngmod.provenance(a.seed, trials=a.trials))
    return res, [a.seed], {}


def cmd_thm1(a):
    r = resolvability.theorem1_bound(core.load_channel(a.channel), core.load_distribution(a.q), a.gamma, a.m)
    res = {
        "bound": r.lower_bound_on_eps_plus_delta,
        "inf_term": r.inf_term,
        "penalty": r.penalty,
        "witness_x": r.witness_x,
    }
    return res, [], {}


def cmd_capacity(a):
    r = minimax.blahut_arimoto(core.load_channel(a.channel), a.tol)
    res = {
        "capacity": r.capacity,
        "input_dist": r.input_dist,
        "output_dist": r.output_dist,
        "gap": r.gap,
        "iterations": r.iterations,
    }
    return res, [], {"tol": a.tol}


def cmd_saddle(a):
    r = minimax.saddle_solve(core.load_channel(a.channel), a.eps, a.tol, method=a.method)
    res = {
        "p_star": r.p_star,
        "q_star": r.q_star,
        "minmax": r.minmax_value,
        "maxmin": r.maxmin_value,
        "gap": r.gap,
        "method": r.method,
        "iterations": r.iterations,
    }
    return res, [], {"tol": a.tol}


def _converse_report(r: minimax.ConverseReport) -> dict:
    return {
        "bound": r.bound_on_loglogN,
        "main_term": r.main_term,
        "slack_terms": r.slack_terms,
        "eta": r.eta,
        "variant": r.variant,
        "details": r.details,
    }


def cmd_converse(a):
    w = core.load_channel(a.channel)
    if a.variant == "cor1":
        res = _converse_report(minimax.corollary1_bound(w, a.eps, a.delta, a.eta))
    elif a.variant == "cor2":
        reps = minimax.corollary2_bound(w, a.eps, a.delta, a.eta)
        res = {k: _converse_report(v) for k, v in reps.items()}
    else:
        if a.gamma is None or a.m is None:
            raise core.ValidationError("--variant existing needs --gamma and --m")
        value, p = minimax.existing_bound(w, a.gamma, a.m, return_witness=True)
        res = {"bound_on_eps_plus_delta": value, "witness_input": p}
    return res, [], {"saddle_tol": minimax.DEFAULT_SADDLE_TOL}


def _dispersion_dict(r: secondorder.DispersionReport) -> dict:
    return {
        "capacity": r.capacity,
        "output_dist": r.output_dist,
        "v_min": r.v_min,
        "v_max": r.v_max,
        "u_min": r.u_min,
        "u_max": r.u_max,
        "pi_vertices": r.pi_vertices,
        "active_inputs": list(r.active_inputs),
        "capacity_gap": r.capacity_gap,
    }


def cmd_dispersion(a):
    return _dispersion_dict(secondorder.dispersion_analysis(core.load_channel(a.channel), a.tol)), [], {"tol": a.tol}


def cmd_second_order(a):
    w = core.load_channel(a.channel)
    rep = secondorder.dispersion_analysis(w)
    res = {
        "L": secondorder.second_order_id_capacity(w, a.eps, rep),
        "v_eps": secondorder.v_eps(rep, a.eps),
        "quantile": secondorder.gaussian_quantile(a.eps),
        "capacity": rep.capacity,
    }
    return res, [], {"tol": rep.tol}


_MODES = {"dp": "exact_dp", "mc": "monte_carlo"}


def cmd_spectrum(a):
    sp = spectrum.spectrum_cdf(
        core.load_distribution(a.input),
        core.load_channel(a.channel),
        core.load_distribution(a.q),
        a.n,
        mode=_MODES[a.mode],
        samples=a.samples,
        seed=a.seed,
    )
    rows = [{"value": v, "cdf": c} for v, c in zip(sp.values.tolist(), sp.cdf.tolist())]
    seeds = [sp.description["seed"]] if a.mode == "mc" else []
    return {"n": sp.n, "mode": sp.mode, "description": sp.description, "rows": rows}, seeds, {
        "merge_tol": spectrum.MERGE_TOL
    }


def _fbl_row(a, w, rep, n: int, seed: int) -> dict:
    if a.side == "converse":
        r = secondorder.finite_n_converse(w, n, a.eps, a.delta, seed=seed)
        return {
            "n": n,
            "bound": r.bound_on_loglogN,
            "main_term": r.main_term,
            "slack": sum(r.slack_terms.values()),
            "seed": seed if r.details["heuristic"] else "",
            "heuristic": r.details["heuristic"],
        }
    r = secondorder.achievability_rate(w, n, a.eps, mode=_MODES[a.mode], samples=a.samples, seed=seed, report=rep)
    return {
        "n": n,
        "bound": r["loglogN"],
        "main_term": r["rate"] * n,
        "slack": r["F"] * math.log(n),
        "seed": seed if a.mode == "mc" else "",
        "eps_n": r["eps_n"],
        "delta_n": r["delta_n"],
        "F": r["F"],
    }


def cmd_fbl(a):
    w = core.load_channel(a.channel)
    rep = secondorder.dispersion_analysis(w) if a.side == "achievability" else None
    seed = rngmod.default_seed() if a.seed is None else a.seed
    with ThreadPoolExecutor(max_workers=max(1, a.jobs)) as pool:
        rows = list(pool.map(lambda n: _fbl_row(a, w, rep, n, seed), a.n))
    return {"side": a.side, "eps": a.eps, "delta": a.delta, "rows": rows}, [seed], {}


def cmd_idcode(a):
    w = core.load_channel(a.channel)
    if a.action == "eval":
        code = idcode.IDCode.from_json(json.loads(Path(a.code).read_text()))
        return _eval_report(idcode.evaluate(code, w)), [], {}
    budget = idcode.SearchBudget(candidates=a.budget)
    r = idcode.search_codes(w, a.eps, a.delta, budget, seed=a.seed)
    res = {
        "N": r["N"],
        "code": r["best_code"].to_json(),
        "evaluation": _eval_report(r["evaluation"]),
        "monotone_ladder": r["monotone_ladder"],
        "candidates": r["candidates"],
        "optimal": False,
    }
    return res, [a.seed], {"budget": a.budget}


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS)
    p.add_argument("--jobs", type=int, default=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="idbounds", description="Finite-blocklength bounds for identification over DMCs.")
    ap.add_argument("--selftest", action="store_true", help="run the invariant suite and exit")
    ap.add_argument("--version", action="version", version=f"idbounds {__version__}")
    _common(ap)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.set_defaults(fn=fn)
        return p

    seed_default = rngmod.default_seed()
    for name, fn in (("beta", cmd_beta), ("dspec", cmd_dspec)):
        p = add(name, fn, "Neyman-Pearson beta" if name == "beta" else "information-spectrum divergence")
        p.add_argument("--p", required=True)
        p.add_argument("--q", required=True)
        p.add_argument("--eps", type=float, required=True)

    p = add("lemma1", cmd_lemma1, "sandwich check between Ds and -log beta")
    p.add_argument("--sweep", type=int, default=1000)
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--p")
    p.add_argument("--q")
    p.add_argument("--eps", type=float)
    p.add_argument("--zeta", type=float)

    p = add("softcover", cmd_softcover, "soft-covering experiment on a truncated channel")
    for flag in ("--channel", "--input", "--q"):
        p.add_argument(flag, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=seed_default)

    p = add("thm1", cmd_thm1, "lower bound on eps + delta for codes with N > |X|^M")
    p.add_argument("--channel", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--m", type=int, required=True)

    p = add("capacity", cmd_capacity, "Blahut-Arimoto capacity")
    p.add_argument("--channel", required=True)
    p.add_argument("--tol", type=float, default=minimax.DEFAULT_CAPACITY_TOL)

    p = add("saddle", cmd_saddle, "saddle point of beta over input and output laws")
    p.add_argument("--channel", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--tol", type=float, default=minimax.DEFAULT_SADDLE_TOL)
    p.add_argument("--method", choices=("lp", "subgradient"), default="lp")

    p = add("converse", cmd_converse, "single-shot converse bounds")
    p.add_argument("--channel", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--variant", choices=("cor1", "cor2", "existing"), default="cor1")
    p.add_argument("--gamma", type=float)
    p.add_argument("--m", type=int)

    p = add("dispersion", cmd_dispersion, "capacity-achieving polytope and dispersions")
    p.add_argument("--channel", required=True)
    p.add_argument("--tol", type=float, default=1e-11)

    p = add("second-order", cmd_second_order, "second-order ID capacity")
    p.add_argument("--channel", required=True)
    p.add_argument("--eps", type=float, required=True)

    p = add("spectrum", cmd_spectrum, "finite-n information-spectrum CDF")
    for flag in ("--channel", "--input", "--q"):
        p.add_argument(flag, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mode", choices=("dp", "mc"), default="dp")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=seed_default)

    p = add("fbl", cmd_fbl, "finite-blocklength converse or achievability sweep")
    p.add_argument("--channel", required=True)
    p.add_argument("--n", type=int, nargs="+", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--side", choices=("converse", "achievability"), required=True)
    p.add_argument("--mode", choices=("dp", "mc"), default="dp")
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--seed", type=int)

    p = add("idcode", cmd_idcode, "evaluate or search explicit ID codes")
    p.add_argument("action", choices=("eval", "search"))
    p.add_argument("--channel", required=True)
    p.add_argument("--code")
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--budget", type=int, default=20000)
    p.add_argument("--seed", type=int, default=seed_default)
    return ap


def _check_idcode_args(a) -> None:
    if a.action == "eval" and a.code is None:
        raise UsageError("idcode eval: error: --code is required")
    if a.action == "search" and (a.eps is None or a.delta is None):
        raise UsageError("idcode search: error: --eps and --delta are required")


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "idcode":
            _check_idcode_args(args)
    except UsageError as exc:
        err.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    fmt = getattr(args, "format", "json")
    args.jobs = getattr(args, "jobs", 1)
    if args.selftest:
        results = checks.run_checks(jobs=args.jobs)
        for r in results:
            out.write(r.line() + "\n")
        failed = [r for r in results if not r.passed]
        for r in failed:
            err.write(f"{r.name}: {json.dumps(to_jsonable(r.detail))}\n")
        return EXIT_FAILED if failed else EXIT_OK
    if args.command is None:
        err.write(parser.format_usage())
        return EXIT_USAGE
    t0 = time.perf_counter()
    try:
        result, seeds, tols = args.fn(args)
    except (core.ValidationError, minimax.ConvergenceError) as exc:
        err.write(f"idbounds {args.command}: {exc}\n")
        return EXIT_VALIDATION
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        err.write(f"idbounds {args.command}: invalid input: {exc}\n")
        return EXIT_VALIDATION
    manifest = RunManifest(
        argv=argv,
        command=args.command,
        channel_sha256=_source_hash(getattr(args, "channel", None)),
        seeds=seeds,
        generator=rngmod.GENERATOR_NAME,
        tolerances=tols,
        version=__version__,
        duration_s=time.perf_counter() - t0,
    )
    report = to_jsonable({"command": args.command, "result": result, "manifest": manifest})
    out.write(render(report, fmt))
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
