"""Command-line front end for expansions, symbol calculus, and oracle runs.

Subcommands parse weight/observable/symbol/group JSON files, run the
symbolic expansions or the quadrature oracle, and emit machine-readable
results: JSON with sorted keys and shortest round-trip floats, or CSV for
the comparison commands, so repeated runs are byte-identical.  Exit codes
follow the package's error taxonomy: 2 malformed input, 3 precondition
violations (including desk-scale caps without --unsafe), 4 truncation
budgets, 5 quadrature conditioning, 1 anything else.

Desk-scale caps: expansion order <= 2, oracle degree <= 16, k <= 200.
--unsafe lifts them without changing any computation.
"""

import argparse
import json
import os
import sys
from fractions import Fraction

from .errors import BergtoepError, InputError, PreconditionError

ORDER_CAP = 2
DEGREE_CAP = 16
K_CAP = 200.0

# default sample points for the n=1 orbifold comparison
ORBIFOLD_POINTS_1D = ((0.1, 0.0), (0.18, 0.0), (0.1, 0.08),
                      (0.22, 0.05), (0.3, 0.0))


# ------------------------------------------------------------ io helpers


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"bad JSON in {path}: {e}") from None


def _load_weight(path):
    from .weights import WeightSpec
    return WeightSpec.from_json_dict(_load_json(path))


def _records_exact(records):
    for r in records:
        for part in ("re", "im"):
            if isinstance(r.get(part, 0), float):
                return False
    return True


def _load_observable(path, n):
    from .polyalg import WirtingerPoly
    d = _load_json(path)
    if isinstance(d, list):
        records = d
    elif isinstance(d, dict) and "poly" in d:
        records = d["poly"]
        if "n" in d and int(d["n"]) != n:
            raise InputError(
                f"observable in {path} has n = {d['n']}, weight has n = {n}")
    else:
        raise InputError(
            f"{path}: observable must be a record list or {{'n', 'poly'}}")
    if not isinstance(records, list):
        raise InputError(f"{path}: polynomial records must form a list")
    try:
        return WirtingerPoly.from_records(n, records,
                                          exact=_records_exact(records))
    except (ValueError, TypeError) as e:
        raise InputError(f"bad polynomial records in {path}: {e}") from None


def _load_symbol(path, n):
    from .psdo import SymbolExpansion
    d = _load_json(path)
    if not isinstance(d, dict) or not all(k in d for k in ("n", "order", "grades")):
        raise InputError(f"{path}: symbol needs keys n, order, grades")
    if int(d["n"]) != n:
        raise InputError(f"symbol in {path} has n = {d['n']}, weight has n = {n}")
    exact = all(_records_exact(recs) for recs in d["grades"])
    try:
        return SymbolExpansion.from_json_dict(d, exact=exact)
    except (ValueError, TypeError) as e:
        raise InputError(f"bad symbol records in {path}: {e}") from None


def _load_group(spec, n):
    import cmath

    import numpy as np

    from .model_kernel import FiniteUnitaryGroup
    name = spec.lower()
    if name.startswith("z") and name[1:].isdigit():
        m = int(name[1:])
        if m < 1:
            raise InputError(f"bad cyclic group order in {spec!r}")
        root = cmath.exp(2j * cmath.pi / m)
        gen = np.diag([root] * n)
        return FiniteUnitaryGroup.from_generators([gen])
    d = _load_json(spec)
    if not isinstance(d, dict) or "generators" not in d:
        raise InputError(f"{spec}: group file needs a 'generators' list")
    gens = []
    for g in d["generators"]:
        try:
            gens.append(np.array([[complex(e[0], e[1]) for e in row]
                                  for row in g], dtype=complex))
        except (TypeError, IndexError, ValueError):
            raise InputError(
                f"{spec}: generators must be matrices of [re, im] pairs"
            ) from None
    return FiniteUnitaryGroup.from_generators(gens)


def _load_points(path, n):
    d = _load_json(path)
    if not isinstance(d, list) or not d:
        raise InputError(f"{path}: points file must be a non-empty list")
    pts = []
    for row in d:
        if n == 1 and isinstance(row, list) and len(row) == 2 \
                and not isinstance(row[0], list):
            row = [row]
        if not isinstance(row, list) or len(row) != n:
            raise InputError(f"{path}: each point needs {n} [re, im] pairs")
        try:
            pts.append(tuple(complex(e[0], e[1]) for e in row))
        except (TypeError, IndexError, ValueError):
            raise InputError(f"{path}: bad coordinate pair") from None
    return pts


def _scalar_record(c):
    from .polyalg import CRat, is_exact_scalar, to_complex
    if is_exact_scalar(c):
        cr = c if isinstance(c, CRat) else CRat(c)
        return {"re": str(cr.re), "im": str(cr.im)}
    z = to_complex(c)
    return {"re": z.real, "im": z.imag}


def _complex_pair(c):
    from .polyalg import to_complex
    z = to_complex(c)
    return [z.real, z.imag]


def _write_text(text, out_path):
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _emit_json(payload, out_path):
    _write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", out_path)


def _emit_csv(header, rows, tail_rows, out_path):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row))
    lines.extend(",".join(str(v) for v in row) for row in tail_rows)
    _write_text("\n".join(lines) + "\n", out_path)


# ------------------------------------------------------------ caps


def _parse_k_list(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            out.append(float(part))
        except ValueError:
            raise InputError(f"bad k value {part!r}") from None
    if not out:
        raise InputError("empty k list")
    return out


def _check_caps(args, order=None, degree=None, ks=()):
    if getattr(args, "unsafe", False):
        return
    if order is not None and order > ORDER_CAP:
        raise PreconditionError(
            f"order {order} exceeds the desk-scale cap {ORDER_CAP}; "
            "pass --unsafe to lift it")
    if degree is not None and degree > DEGREE_CAP:
        raise PreconditionError(
            f"degree {degree} exceeds the desk-scale cap {DEGREE_CAP}; "
            "pass --unsafe to lift it")
    for k in ks:
        if k > K_CAP:
            raise PreconditionError(
                f"k = {k} exceeds the desk-scale cap {K_CAP}; "
                "pass --unsafe to lift it")


def _expansion_payload(command, weight, result):
    return {
        "command": command,
        "n": result.n,
        "lambda": [str(l) if isinstance(l, (int, Fraction)) else float(l)
                   for l in weight.lam],
        "order": result.order,
        "ratios": [_scalar_record(r) for r in result.ratios],
        "coefficients": [_complex_pair(c) for c in result.coefficients],
        "leading_density": result.leading_density(),
    }


# ------------------------------------------------------------ commands


def cmd_normalize(args):
    import numpy as np

    from .chern_moser import RawJet, normalize_weight
    d = _load_json(args.weight)
    if isinstance(d, dict) and "phi" in d:
        try:
            raw = RawJet.from_json_dict(d)
        except (KeyError, ValueError, TypeError) as e:
            raise InputError(f"bad raw jet in {args.weight}: {e}") from None
    else:
        from .weights import WeightSpec
        w = WeightSpec.from_json_dict(d)
        raw = RawJet(w.n, w.phi_poly(), np.eye(w.n), w.vol)
    nf = normalize_weight(raw)
    payload = {"command": "normalize", "normal_form": nf.to_json_dict()}
    _emit_json(payload, args.out)
    return 0


def cmd_expand_bergman(args):
    from .expansion import bergman_diagonal_coeffs
    _check_caps(args, order=args.order)
    weight = _load_weight(args.weight)
    res = bergman_diagonal_coeffs(weight, args.order)
    _emit_json(_expansion_payload("expand-bergman", weight, res), args.out)
    return 0


def cmd_expand_toeplitz(args):
    from .toeplitz_star import toeplitz_diagonal_coeffs
    _check_caps(args, order=args.order)
    weight = _load_weight(args.weight)
    f = _load_observable(args.observable, weight.n)
    res = toeplitz_diagonal_coeffs(weight, f, args.order)
    _emit_json(_expansion_payload("expand-toeplitz", weight, res), args.out)
    return 0


def cmd_star(args):
    from .toeplitz_star import star_coefficients
    _check_caps(args, order=args.order)
    weight = _load_weight(args.weight)
    f = _load_observable(args.f, weight.n)
    g = _load_observable(args.g, weight.n)
    sc = star_coefficients(weight, f, g, args.order)
    payload = {
        "command": "star",
        "n": weight.n,
        "order": sc.order,
        "C": [_scalar_record(v) for v in sc.values],
    }
    _emit_json(payload, args.out)
    return 0


def cmd_psdo_expand(args):
    from .psdo import psdo_chained_coeffs, psdo_toeplitz_closed_ratios
    _check_caps(args, order=args.order)
    weight = _load_weight(args.weight)
    sym = _load_symbol(args.symbol, weight.n)
    res = psdo_chained_coeffs(weight, [sym], args.order)
    payload = _expansion_payload("psdo-expand", weight, res)
    payload["symbol_order"] = sym.order
    payload["classical"] = sym.classical
    payload["closed_form_ratios"] = None
    payload["closed_form_agrees"] = None
    if sym.classical and args.order <= 1:
        try:
            closed = psdo_toeplitz_closed_ratios(weight, sym, args.order)
        except PreconditionError:
            closed = None  # no closed form for this weight (low valuation)
        if closed is not None:
            from .polyalg import to_complex
            payload["closed_form_ratios"] = [_scalar_record(r) for r in closed]
            payload["closed_form_agrees"] = all(
                abs(to_complex(a) - to_complex(b)) <= 1e-12
                for a, b in zip(closed, res.ratios))
    _emit_json(payload, args.out)
    return 0


def cmd_psdo_commutator(args):
    from .polyalg import to_complex
    from .psdo import (commutator_bracket_total, psdo_chained_coeffs,
                       psdo_star_commutator, symbol_compose)
    weight = _load_weight(args.weight)
    P = _load_symbol(args.p, weight.n)
    Q = _load_symbol(args.q, weight.n)
    out = psdo_star_commutator(weight, P, Q)
    total = commutator_bracket_total(weight, P, Q)
    pq = psdo_chained_coeffs(weight, [P, Q], 1)
    qp = psdo_chained_coeffs(weight, [Q, P], 1)
    machinery = pq.ratios[1] - qp.ratios[1]
    diff = out["order_k0"]
    diff_sub = psdo_chained_coeffs(weight, [diff], 1).ratios[1]
    # mixed exact/float operands possible, so close the identity in complex
    residual = (to_complex(machinery)
                - (to_complex(diff_sub) + to_complex(total)))
    exact = all(not g.terms or all(
        not isinstance(v, (float, complex)) for v in g.terms.values())
        for g in diff.grades)
    payload = {
        "command": "psdo-commutator",
        "n": weight.n,
        "order_k0_symbol": diff.to_json_dict(exact=exact),
        "principal_at_contact": _complex_pair(
            out["order_k_minus1_principal_at_contact"]),
        "bracket_total": _scalar_record(total),
        "machinery_subleading_difference": _scalar_record(machinery),
        "identity_residual": _scalar_record(residual),
        "identity_holds": abs(to_complex(residual)) <= 1e-12,
    }
    _emit_json(payload, args.out)
    return 0


def cmd_oracle(args):
    import numpy as np

    from .oracle import GramOracle
    _check_caps(args, degree=args.deg, ks=(args.k,))
    weight = _load_weight(args.weight)
    if args.radius is not None:
        from .weights import WeightSpec
        weight = WeightSpec(weight.lam, weight.phi1, weight.vol,
                            radius=args.radius)
    oracle = GramOracle(weight, args.k, args.deg,
                        num_radial=args.num_radial,
                        num_angular=args.num_angular)
    center = np.zeros(weight.n, dtype=complex)
    payload = {
        "command": "oracle",
        "n": weight.n,
        "k": args.k,
        "max_degree": args.deg,
        "diagnostics": oracle.diagnostics,
        "kernel_diagonal_at_0": float(oracle.diagonal(center)),
    }
    if args.check_convergence:
        payload["convergence"] = oracle.convergence_check()
    _emit_json(payload, args.out)
    return 0


def cmd_compare(args):
    import numpy as np

    from .expansion import bergman_diagonal_coeffs
    from .oracle import GramOracle
    ks = _parse_k_list(args.k)
    _check_caps(args, order=args.order, degree=args.deg, ks=ks)
    weight = _load_weight(args.weight)
    res = bergman_diagonal_coeffs(weight, args.order)
    center = np.zeros(weight.n, dtype=complex)
    rows = []
    rel_errs = []
    for k in ks:
        oracle_val = float(GramOracle(weight, k, args.deg).diagonal(center))
        partials = [res.partial_sum_at(k, upto=m).real
                    for m in range(args.order + 1)]
        rel = abs(oracle_val - partials[-1]) / abs(oracle_val)
        rel_errs.append(rel)
        rows.append([k, oracle_val] + partials + [rel])
    decreasing = all(b < a for a, b in zip(rel_errs, rel_errs[1:]))
    verdict = "PASS" if decreasing and rel_errs[-1] <= args.tol else "FAIL"
    header = (["k", "oracle"]
              + [f"partial_sum_{m}" for m in range(args.order + 1)]
              + ["rel_err"])
    tail = [["summary", "verdict", verdict,
             f"decreasing={decreasing}", f"final={rel_errs[-1]!r}",
             f"tol={args.tol!r}"]]
    if args.format == "json":
        payload = {
            "command": "compare",
            "columns": header,
            "rows": rows,
            "verdict": verdict,
            "rel_err_decreasing": decreasing,
            "tolerance": args.tol,
        }
        _emit_json(payload, args.out)
    else:
        _emit_csv(header, rows, tail, args.out)
    return 0 if verdict == "PASS" else 1


def cmd_orbifold_compare(args):
    from .model_kernel import orbifold_limit_kernel
    from .oracle import invariant_gram
    ks = _parse_k_list(args.k)
    _check_caps(args, degree=args.deg, ks=ks)
    weight = _load_weight(args.weight)
    group = _load_group(args.group, weight.n)
    if args.points is not None:
        points = _load_points(args.points, weight.n)
    elif weight.n == 1:
        points = [(complex(re, im),) for re, im in ORBIFOLD_POINTS_1D]
    else:
        raise PreconditionError(
            "default sample points exist only for n = 1; pass --points")
    lamf = weight.lam_floats()
    rows = []
    max_gaps = []
    for k in ks:
        oracle = invariant_gram(weight, k, args.deg, group)
        worst = 0.0
        for x in points:
            got = float(oracle.scaled_localized(x, x).real)
            want = float(orbifold_limit_kernel(x, x, lamf, group).real)
            gap = abs(got - want) / abs(want)
            worst = max(worst, gap)
            rows.append([k, x[0].real if weight.n == 1 else repr(x),
                         x[0].imag if weight.n == 1 else "",
                         got, want, gap])
        max_gaps.append(worst)
    decreasing = all(b < a for a, b in zip(max_gaps, max_gaps[1:]))
    verdict = "PASS" if decreasing and max_gaps[-1] <= args.tol else "FAIL"
    header = ["k", "point_re", "point_im", "oracle_scaled", "model_limit",
              "rel_gap"]
    tail = [["summary", "verdict", verdict, f"decreasing={decreasing}",
             f"final_max_gap={max_gaps[-1]!r}", f"tol={args.tol!r}"]]
    if args.format == "json":
        payload = {
            "command": "orbifold-compare",
            "columns": header,
            "rows": rows,
            "verdict": verdict,
            "max_gap_decreasing": decreasing,
            "max_gaps": max_gaps,
            "tolerance": args.tol,
        }
        _emit_json(payload, args.out)
    else:
        _emit_csv(header, rows, tail, args.out)
    return 0 if verdict == "PASS" else 1


# ------------------------------------------------------------ parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bergtoep",
        description="Expansion coefficients and oracle comparisons for "
                    "weighted Bergman and Toeplitz kernels.")
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS/OpenMP thread count for quadrature "
                             "(set before heavy imports)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, handler, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(handler=handler)
        p.add_argument("--weight", required=True,
                       help="weight JSON file "
                            '{"n","lambda","phi1","vol","R","c"}')
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--unsafe", action="store_true",
                       help="lift the desk-scale caps on order, degree, k")
        return p

    add("normalize", cmd_normalize,
        help="bring a raw weight jet to diagonal quadratic normal form")

    p = add("expand-bergman", cmd_expand_bergman,
            help="kernel diagonal coefficients a_0..a_M")
    p.add_argument("--order", type=int, default=1)

    p = add("expand-toeplitz", cmd_expand_toeplitz,
            help="Toeplitz diagonal coefficients for a multiplier")
    p.add_argument("--observable", required=True)
    p.add_argument("--order", type=int, default=1)

    p = add("star", cmd_star, help="star-product coefficients C_0..C_M")
    p.add_argument("--f", required=True)
    p.add_argument("--g", required=True)
    p.add_argument("--order", type=int, default=1)

    p = add("psdo-expand", cmd_psdo_expand,
            help="diagonal expansion of a symbol-operator sandwich")
    p.add_argument("--symbol", required=True)
    p.add_argument("--order", type=int, default=1)

    p = add("psdo-commutator", cmd_psdo_commutator,
            help="commutator decomposition of two classical symbols")
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)

    p = add("oracle", cmd_oracle, help="Gram-matrix quadrature diagnostics")
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--deg", type=int, default=10)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--num-radial", type=int, default=None)
    p.add_argument("--num-angular", type=int, default=None)
    p.add_argument("--check-convergence", action="store_true")

    p = add("compare", cmd_compare,
            help="oracle kernel diagonal vs asymptotic partial sums")
    p.add_argument("--k", required=True, help="comma-separated k list")
    p.add_argument("--deg", type=int, default=12)
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = add("orbifold-compare", cmd_orbifold_compare,
            help="invariant oracle vs the group-summed model kernel")
    p.add_argument("--group", required=True,
                   help="zN for the cyclic group, or a generators JSON file")
    p.add_argument("--k", required=True, help="comma-separated k list")
    p.add_argument("--deg", type=int, default=12)
    p.add_argument("--points", default=None,
                   help="JSON list of sample points ([re, im] pairs)")
    p.add_argument("--tol", type=float, default=0.02)
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            parser.error("--threads must be >= 1")
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return args.handler(args)
    except BergtoepError as e:
        sys.stderr.write(f"error: {e}\n")
        return getattr(e, "exit_code", 1)


if __name__ == "__main__":
    sys.exit(main())
