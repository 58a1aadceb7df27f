"""Config-driven experiment harness.

Subcommands: dims, estimate, boost, adversary, oracle, experiment.  Every
run is a pure function of its arguments and the mandatory --seed; reports
are written atomically as CSV + JSON with no timestamps, so repeated runs
are byte-identical regardless of thread count.

Exit codes: 0 success, 2 configuration error, 3 enumeration budget
exceeded, 4 adversary search did not converge, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import tempfile

from . import rng
from .adversary import (InstabilityCertificate, SolverConfig, cube_witness,
                        find_hard_distribution, hollow_star_witness,
                        load_witness)
from .booster import boost, boost_params
from .concepts import (ConceptClass, find_hollow_star, hollow_star_number,
                       littlestone_dimension, vc_dimension)
from .distributions import (FiniteDistribution, LabeledExample,
                            load_distribution)
from .errors import CapExceededError, StabilityLabError
from .estimators import (exact_output_distribution, list_coverage,
                         output_histogram, stability_report)
from .learners import all_plus, parse_class, parse_learner

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIZE = 3
EXIT_UNCONVERGED = 4

CSV_VERSION = "stability-lab report v1"


def _write_atomic(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(columns: list[str], rows: list[list]) -> str:
    lines = [f"# {CSV_VERSION}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    return "\n".join(lines) + "\n"


def _json_text(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _emit(out_dir: str, stem: str, columns, rows, payload) -> None:
    _write_atomic(os.path.join(out_dir, f"{stem}.csv"), _csv_text(columns, rows))
    _write_atomic(os.path.join(out_dir, f"{stem}.json"), _json_text(payload))


def _hypothesis_id(h, concept_class: ConceptClass | None) -> str:
    if concept_class is not None:
        try:
            return f"{concept_class.index_of(h)}:{h.pattern()}"
        except KeyError:
            pass
    return h.pattern()


def random_realizable_distributions(c: ConceptClass, count: int, seed: int):
    """Random full-support realizable distributions over the class domain.

    Picks a hypothesis uniformly, draws a symmetric Dirichlet(1) mass
    vector over the domain points, and labels each point by the picked
    hypothesis.
    """
    import math
    out = []
    d = c.domain.size
    for i in range(count):
        pick = rng.uniform(rng.derive(seed, i, rng.ROLE_PICK), 0)
        h = c.hypotheses[min(int(pick * len(c)), len(c) - 1)]
        wkey = rng.derive(seed, i, rng.ROLE_WEIGHTS)
        weights = [-math.log(1.0 - rng.uniform(wkey, j)) for j in range(d)]
        atoms = [(LabeledExample(x, h(x)), w)
                 for x, w in zip(c.domain.points, weights)]
        out.append(FiniteDistribution.from_weights(atoms, name=f"random({i})"))
    return out


def _resolve_distributions(spec: str, c: ConceptClass | None):
    m = re.fullmatch(r"random\((\d+),(\d+)\)", spec.replace(" ", ""))
    if m:
        if c is None:
            raise ValueError("cli: random(...) distributions need --class")
        return random_realizable_distributions(c, int(m.group(1)), int(m.group(2)))
    return [load_distribution(spec)]


def cmd_dims(args) -> int:
    c = parse_class(args.klass)
    vc = vc_dimension(c)
    ld = littlestone_dimension(c)
    hs = hollow_star_number(c, cap=args.hollow_cap)
    columns = ["class", "size", "vc", "ldim", "hollow_star"]
    row = [c.name, len(c), vc, ld, hs]
    payload = {"class": c.name, "size": len(c), "vc": vc, "ldim": ld,
               "hollow_star": hs, "seed": args.seed}
    _emit(args.out, "dims", columns, [row], payload)
    print(f"dims {c.name}: vc={vc} ldim={ld} hollow_star={hs}")
    return EXIT_OK


def _estimate_payload(args, learner, dist, hist, report):
    modal_id = _hypothesis_id(report.modal, learner.concept_class)
    freqs = {h.pattern(): cnt / hist.trials for h, cnt in hist.items_canonical()}
    return {
        "learner": learner.name, "distribution": dist.name, "n": args.n,
        "trials": args.trials, "seed": args.seed,
        "rho_hat": report.rho_hat, "collision_hat": report.collision_hat,
        "ci": report.ci_half_width, "modal_id": modal_id,
        "fallbacks": hist.fallbacks, "frequencies": freqs,
    }


def cmd_estimate(args) -> int:
    context = parse_class(args.klass) if args.klass else None
    learner = parse_learner(args.learner, context_class=context)
    dists = _resolve_distributions(args.dist, context)
    columns = ["learner", "distribution", "n", "trials", "rho_hat",
               "collision_hat", "ci", "modal_id"]
    rows, payloads = [], []
    for i, dist in enumerate(dists):
        hist = output_histogram(learner, dist, args.n, args.trials,
                                rng.derive(args.seed, i), threads=args.threads)
        report = stability_report(hist)
        payload = _estimate_payload(args, learner, dist, hist, report)
        rows.append([learner.name, dist.name, args.n, args.trials,
                     repr(report.rho_hat), repr(report.collision_hat),
                     repr(report.ci_half_width), payload["modal_id"]])
        payloads.append(payload)
    _emit(args.out, "estimate", columns, rows,
          {"runs": payloads, "seed": args.seed})
    for p in payloads:
        print(f"estimate {p['learner']} on {p['distribution']}: "
              f"rho_hat={p['rho_hat']:.4f} collision={p['collision_hat']:.4f} "
              f"ci={p['ci']:.4f}")
    return EXIT_OK


def cmd_boost(args) -> int:
    context = parse_class(args.klass) if args.klass else None
    inner = parse_learner(args.inner, context_class=context)
    params = boost_params(args.rho, args.eps, args.delta, args.n0)
    learner = boost(inner, params, all_plus(inner.domain))
    dists = _resolve_distributions(args.dist, context)
    n = params.n1 + params.n2
    columns = ["learner", "distribution", "n", "trials", "L", "T", "n2",
               "coverage_topL", "fallbacks", "rho_hat", "modal_id"]
    rows, payloads = [], []
    for i, dist in enumerate(dists):
        hist = output_histogram(learner, dist, n, args.trials,
                                rng.derive(args.seed, i), threads=args.threads)
        report = stability_report(hist)
        coverage = list_coverage(hist, hist.top(params.L))
        modal_id = _hypothesis_id(report.modal, inner.concept_class)
        rows.append([learner.name, dist.name, n, args.trials, params.L,
                     params.T, params.n2, repr(coverage), hist.fallbacks,
                     repr(report.rho_hat), modal_id])
        payloads.append({
            "learner": learner.name, "distribution": dist.name, "n": n,
            "trials": args.trials, "L": params.L, "T": params.T,
            "n0": params.n0, "n1": params.n1, "n2": params.n2,
            "alpha": params.alpha, "coverage_topL": coverage,
            "fallbacks": hist.fallbacks, "rho_hat": report.rho_hat,
            "modal_id": modal_id, "seed": args.seed,
        })
        print(f"boost on {dist.name}: top-{params.L} coverage {coverage:.4f}, "
              f"fallbacks {hist.fallbacks}, rho_hat {report.rho_hat:.4f}")
    _emit(args.out, "boost", columns, rows, {"runs": payloads, "seed": args.seed})
    return EXIT_OK


def _pick_witness(args, c: ConceptClass):
    if args.witness and args.witness not in ("auto", "cube", "hollow"):
        return load_witness(args.witness)
    kind = args.witness or "auto"
    is_cube = len(c) == 2 ** c.domain.size
    if kind == "cube" or (kind == "auto" and is_cube):
        return cube_witness(c.domain.size)
    star = find_hollow_star(c, hollow_star_number(c, cap=min(c.domain.size, 10)))
    if star is None:
        raise ValueError(f"cli: no witness construction applies to {c.name}")
    return hollow_star_witness(c, star)


def cmd_adversary(args) -> int:
    c = parse_class(args.klass)
    learner = parse_learner(args.learner, context_class=c)
    witness = _pick_witness(args, c)
    config = SolverConfig(damping=args.damping, n=args.n, mc=args.mc,
                          tol=args.tol, max_sweeps=args.max_sweeps)
    cert = find_hard_distribution(learner, witness, c, config, seed=args.seed)
    payload = cert.to_payload()
    payload.update({"seed": args.seed, "learner": learner.name,
                    "class": c.name, "witness": witness.name})
    columns = ["class", "learner", "witness", "k", "status", "residual",
               "max_frequency", "bound", "trials"]
    rows = [[c.name, learner.name, witness.name, witness.k, cert.status,
             repr(cert.residual), repr(cert.max_frequency), repr(cert.bound),
             cert.trials]]
    _emit(args.out, "adversary", columns, rows, payload)
    print(f"adversary {c.name} vs {learner.name}: status={cert.status} "
          f"residual={cert.residual:.4f} max_frequency={cert.max_frequency:.4f} "
          f"bound={cert.bound:.4f} t*={tuple(round(v, 6) for v in cert.t_star)}")
    return EXIT_OK if cert.status == "converged" else EXIT_UNCONVERGED


def cmd_oracle(args) -> int:
    context = parse_class(args.klass) if args.klass else None
    learner = parse_learner(args.learner, context_class=context)
    dist = load_distribution(args.dist)
    exact = exact_output_distribution(learner, dist, args.n)
    items = sorted(exact.items(), key=lambda kv: (-kv[1], kv[0].labels))
    columns = ["hypothesis", "probability"]
    rows = [[h.pattern(), repr(p)] for h, p in items]
    payload = {"learner": learner.name, "distribution": dist.name,
               "n": args.n, "seed": args.seed,
               "probabilities": {h.pattern(): p for h, p in items}}
    _emit(args.out, "oracle", columns, rows, payload)
    print(f"oracle {learner.name} on {dist.name}: "
          f"{len(items)} outputs, max p = {items[0][1]:.6f}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    pipeline = cfg.get("pipeline")
    if pipeline not in ("dims", "estimate", "boost", "adversary", "oracle"):
        raise ValueError(f"cli: unknown pipeline {pipeline!r} in {args.config}")
    ns = argparse.Namespace(**{
        "seed": cfg.get("seed", args.seed),
        "out": cfg.get("out", args.out),
        "threads": cfg.get("threads", args.threads),
        "klass": cfg.get("class"),
        "learner": cfg.get("learner"),
        "dist": cfg.get("dist"),
        "n": cfg.get("n"),
        "trials": cfg.get("trials"),
        "eps": cfg.get("eps"),
        "delta": cfg.get("delta"),
        "rho": cfg.get("rho"),
        "n0": cfg.get("n0", 1),
        "inner": cfg.get("inner"),
        "witness": cfg.get("witness", "auto"),
        "damping": cfg.get("damping", 0.02),
        "mc": cfg.get("mc", 5000),
        "tol": cfg.get("tol", 0.02),
        "max_sweeps": cfg.get("max_sweeps", 6),
        "hollow_cap": cfg.get("hollow_cap", 10),
    })
    if ns.seed is None:
        raise ValueError("cli: experiment config needs a seed")
    return {"dims": cmd_dims, "estimate": cmd_estimate, "boost": cmd_boost,
            "adversary": cmd_adversary, "oracle": cmd_oracle}[pipeline](ns)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stability-lab",
        description="Stability and list-replicability lab for finite concept classes")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_required=True):
        p.add_argument("--seed", type=int, required=seed_required,
                       help="master seed (mandatory; no wall-clock seeding)")
        p.add_argument("--out", default=".", help="report output directory")
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("dims", help="brute-force dimensions of a class")
    p.add_argument("--class", dest="klass", required=True)
    p.add_argument("--hollow-cap", dest="hollow_cap", type=int, default=10)
    common(p)
    p.set_defaults(fn=cmd_dims)

    p = sub.add_parser("estimate", help="Monte Carlo stability estimate")
    p.add_argument("--learner", required=True)
    p.add_argument("--class", dest="klass", default=None)
    p.add_argument("--dist", required=True,
                   help="distribution file or random(count,seed)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    common(p)
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("boost", help="estimate a boosted learner")
    p.add_argument("--inner", required=True)
    p.add_argument("--class", dest="klass", default=None)
    p.add_argument("--dist", required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--n0", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    common(p)
    p.set_defaults(fn=cmd_boost)

    p = sub.add_parser("adversary", help="search for a hard distribution")
    p.add_argument("--class", dest="klass", required=True)
    p.add_argument("--learner", required=True)
    p.add_argument("--witness", default="auto",
                   help="auto | cube | hollow | witness .json file")
    p.add_argument("--damping", type=float, default=0.02)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--mc", type=int, default=5000)
    p.add_argument("--tol", type=float, default=0.02)
    p.add_argument("--max-sweeps", dest="max_sweeps", type=int, default=6)
    common(p)
    p.set_defaults(fn=cmd_adversary)

    p = sub.add_parser("oracle", help="exact output distribution")
    p.add_argument("--learner", required=True)
    p.add_argument("--class", dest="klass", default=None)
    p.add_argument("--dist", required=True)
    p.add_argument("--n", type=int, required=True)
    common(p)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("experiment", help="run a JSON experiment config")
    p.add_argument("config")
    common(p, seed_required=False)
    p.set_defaults(fn=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CapExceededError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SIZE
    except (StabilityLabError, ValueError, KeyError, OSError,
            json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
