"""Command-line front end.

Every command prints line-delimited ``key=value`` records with exact
rationals. Exit codes: 0 success, 2 bad input or failed precondition,
3 budget exhausted or unknown outcome, 4 internal invariant violation.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

from .errors import GogError, ParseError
from .gog import GraphOfGroups, Inclusion, _parse_group, format_rational, parse_gog, parse_rational, validate


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None


def load_gog(path: str) -> GraphOfGroups:
    g = parse_gog(_read(path))
    validate(g)
    return g


def load_marking(path: str, source: GraphOfGroups, target: GraphOfGroups | None = None):
    from .marking import marking_from_text

    return marking_from_text(_read(path), source, target)


def fmt(q) -> str:
    if isinstance(q, Fraction):
        return format_rational(q)
    if isinstance(q, bool):
        return "1" if q else "0"
    if isinstance(q, float):
        return f"{q:.12g}"
    return str(q)


def emit(out, **kv) -> None:
    out.write(" ".join(f"{k}={fmt(v)}" for k, v in kv.items()) + "\n")


def log12(q: Fraction) -> str:
    return f"{math.log(q):.12f}"


def jobs_from(args) -> int:
    if args.jobs is not None:
        return max(1, args.jobs)
    env = os.environ.get("GOGMETRIC_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ParseError(f"GOGMETRIC_JOBS must be an integer, got {env!r}") from None
    return 1


# --- DOT ---------------------------------------------------------------------------


def to_dot(g: GraphOfGroups, name: str = "gog") -> str:
    from .gog import group_to_text

    g.build()
    lines = [f"graph {name} {{"]
    for v in g.vids:
        grp = group_to_text(g.vertices[v])
        mark = ", peripheries=2" if v == g.base else ""
        lines.append(f'  "{v}" [label="{v}\\n{grp}"{mark}];')
    for e in g.edges:
        inc = f"{e.inc_src.to_text()} / {e.inc_dst.to_text()}"
        lines.append(f'  "{e.src}" -- "{e.dst}" [label="{e.id} {format_rational(e.length)}\\n{inc}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# --- commands ------------------------------------------------------------------------


def cmd_validate(args, out) -> int:
    from .gog import normalize, redundant_vertices

    g = load_gog(args.gog)
    emit(out, ok=True, vertices=len(g.vertices), edges=len(g.edges), covolume=g.covolume(), regime=g.regime(),
         redundant=",".join(redundant_vertices(g)) or "-")
    out.write(normalize(g).to_text())
    return 0


def cmd_tl(args, out) -> int:
    from .words import format_axis, parse_word, translation_length

    g = load_gog(args.gog)
    w = parse_word(g, args.word)
    res = translation_length(g, w)
    emit(out, tl=res.translation_length, elliptic=res.elliptic, axis=format_axis(g, res.projected_axis) or "-")
    return 0


def cmd_oracle_tl(args, out) -> int:
    from .tree import oracle_translation_length
    from .words import parse_word

    g = load_gog(args.gog)
    w = parse_word(g, args.word)
    emit(out, tl=oracle_translation_length(g, w, budget=args.ball_budget))
    return 0


def _distance_record(out, res, T, key="sigma"):
    from .words import format_word

    rec = {key: res.sigma, "log": log12(res.sigma), "witness": format_word(T, res.witness.candidate)}
    if res.candidate_max is not None:
        rec.update(label=res.label, candidates=res.candidate_count, budget=res.budget)
    rec.update(legal=res.witness.legal, in_forest=res.witness.in_forest)
    emit(out, **rec)


def cmd_distance(args, out) -> int:
    from .lipschitz import distance

    T, T2 = load_gog(args.source), load_gog(args.target)
    m = load_marking(args.marking, T, T2)
    jobs = jobs_from(args)
    res = distance(T, T2, m, budget=args.budget, cross_check=not args.no_check, jobs=jobs)
    _distance_record(out, res, T)
    if args.sym:
        back = distance(T2, T, m.inverse(), budget=args.budget, cross_check=not args.no_check, jobs=jobs)
        _distance_record(out, back, T2, key="sigma_back")
        emit(out, sym=res.sigma * back.sigma, log_sym=log12(res.sigma * back.sigma))
    return 0


def cmd_witness(args, out) -> int:
    from .lipschitz import distance
    from .words import format_word

    T, T2 = load_gog(args.source), load_gog(args.target)
    m = load_marking(args.marking, T, T2)
    res = distance(T, T2, m, cross_check=False)
    c = res.witness
    emit(out, witness=format_word(T, c.candidate), ratio=c.ratio, sigma=c.sigma, legal=c.legal,
         in_forest=c.in_forest, valid=c.valid)
    emit(out, tension=",".join(res.optimal.tension_edges()))
    emit(out, gates=res.optimal.gates().format())
    return 0


def cmd_geodesic(args, out) -> int:
    from .geodesics import geodesic
    from .words import format_word

    T, T2 = load_gog(args.source), load_gog(args.target)
    m = load_marking(args.marking, T, T2)
    path = geodesic(T, T2, m, samples=args.samples, jobs=jobs_from(args))
    check = path.verify(jobs=jobs_from(args)) if args.verify else None
    for k, s in enumerate(path.samples):
        lengths = ",".join(f"{e.id}:{format_rational(e.length)}" for e in s.gog.edges)
        sig = check.sigmas[(0, k)] if check and k else (Fraction(1) if k == 0 else path.sigma_from_start(k))
        emit(out, t=s.t, phase=s.phase, lengths=lengths, sigma_from_start=sig)
        if args.dot:
            d = Path(args.dot)
            d.mkdir(parents=True, exist_ok=True)
            (d / f"sample{k:03d}.dot").write_text(to_dot(s.gog, f"sample{k}"))
    rec = dict(sigma=path.sigma, witness=format_word(T, path.witness), samples=len(path.samples),
               fold_events=len(path.fold_events))
    if check is not None:
        rec.update(additive=check.additive, witness_persistent=check.witness_persistent,
                   endpoint=check.endpoint_lengths_match)
    emit(out, **rec)
    return 0 if check is None or check.ok else 4


def cmd_collapse(args, out) -> int:
    from .deformation import collapse

    g = load_gog(args.gog)
    new, m = collapse(g, args.edge)
    out.write(new.to_text())
    out.write(m.to_text())
    return 0


def _parse_inclusion(text: str) -> Inclusion:
    return Inclusion.from_text(text)


def cmd_expand(args, out) -> int:
    from .deformation import expand

    g = load_gog(args.gog)
    group = _parse_group(args.group.split(), 0)
    moved = []
    for item in args.move or []:
        if ":" not in item:
            raise ParseError(f"--move expects edge:src or edge:dst, got {item!r}")
        e, end = item.split(":", 1)
        moved.append((e, end))
    new, m = expand(g, args.vertex, args.new_vertex, group, _parse_inclusion(args.inc_old),
                    _parse_inclusion(args.inc_new), moved, parse_rational(args.length), args.edge_name)
    out.write(new.to_text())
    out.write(m.to_text())
    return 0


def cmd_fold_iia(args, out) -> int:
    from .deformation import index_invariant, type_IIA_fold

    g = load_gog(args.gog)
    new, f = type_IIA_fold(g, args.edge, args.element, reverse=args.reverse)
    emit(out, lipschitz=f.lipschitz_constant(), index_before=index_invariant(g).value,
         index_after=index_invariant(new).value)
    out.write(new.to_text())
    return 0


def cmd_modulus(args, out) -> int:
    from .deformation import has_nontrivial_integral_modulus, modulus
    from .words import parse_word

    g = load_gog(args.gog)
    if args.word:
        emit(out, modulus=modulus(g, parse_word(g, args.word)))
    emit(out, nontrivial_integral=has_nontrivial_integral_modulus(g))
    return 0


def cmd_index_invariant(args, out) -> int:
    from .deformation import index_invariant

    g = load_gog(args.gog)
    inv = index_invariant(g)
    emit(out, index=inv.value, edges=",".join(f"{e}:{v}" for e, v in inv.breakdown))
    return 0


def cmd_displacement(args, out) -> int:
    from .dynamics import displacement
    from .words import format_word

    g = load_gog(args.gog)
    phi = load_marking(args.automorphism, g)
    sig, xi = displacement(g, phi, budget=args.budget)
    emit(out, sigma=sig, log=log12(sig), witness=format_word(g, xi))
    return 0


def cmd_classify(args, out) -> int:
    from .dynamics import classify

    g = load_gog(args.gog)
    phi = load_marking(args.automorphism, g)
    rep = classify(g, phi, budget=args.budget)
    rec = dict(classification=rep.classification, sigma=rep.best_sigma)
    ev = rep.evidence
    if "lambda" in ev:
        rec["lambda"] = f"{ev['lambda']:.12f}"
    if "reduction" in ev:
        rec["S"] = "{" + ",".join(ev["reduction"].invariant) + "}"
    if "fixed_point" in ev:
        rec["fixed_point"] = ev["fixed_point"]
    emit(out, **rec)
    if args.trace:
        for r in rep.trace:
            emit(out, **r)
    return 3 if rep.classification == "Unknown" else 0


def cmd_traintrack(args, out) -> int:
    from .dynamics import ReductionCertificate, TrainTrackMap, find_train_track, verify_train_track
    from .words import format_word

    g = load_gog(args.gog)
    phi = load_marking(args.automorphism, g)
    trace: list = []
    res = find_train_track(g, phi, budget=args.budget, trace=trace)
    code = 0
    if isinstance(res, TrainTrackMap):
        chk = verify_train_track(res)
        if res.lam_exact is not None:
            out.write(f"traintrack lambda={format_rational(res.lam_exact)}\n")
        else:
            out.write(f"traintrack lambda≈{res.lam:.12f}\n")
        emit(out, gates=res.gate_text().replace(" ", ""), conditions=",".join(fmt(x) for x in chk.as_tuple()),
             sigma=res.sigma, error_bound=f"{res.error_bound:.3g}")
        if args.dot:
            Path(args.dot).write_text(to_dot(res.gog, "traintrack"))
    elif isinstance(res, ReductionCertificate):
        out.write("reduction S={" + ",".join(res.invariant) + "}\n")
        emit(out, witness=format_word(res.gog, res.witness), replays=res.replay())
    else:
        out.write("unknown\n")
        emit(out, reason=res.reason.replace(" ", "_"))
        code = 3
    if args.trace:
        for r in trace:
            emit(out, **r)
    return code


def cmd_export_dot(args, out) -> int:
    out.write(to_dot(load_gog(args.gog)))
    return 0


# --- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gogmetric", description="Lipschitz metrics on deformation spaces of graphs of groups")
    p.add_argument("--jobs", type=int, default=None, help="worker threads (default: $GOGMETRIC_JOBS or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=func)
        return sp

    sp = add("validate", cmd_validate, "parse, validate and print the normalized graph of groups")
    sp.add_argument("gog")
    for name, func in (("tl", cmd_tl), ("oracle-tl", cmd_oracle_tl)):
        sp = add(name, func, "translation length of a loop word" + (" by ball search" if name == "oracle-tl" else ""))
        sp.add_argument("gog")
        sp.add_argument("word")
        if name == "oracle-tl":
            sp.add_argument("--ball-budget", type=int, default=100_000)
    sp = add("distance", cmd_distance, "sigma(T, T') with a witness")
    for a in ("source", "target", "marking"):
        sp.add_argument(a)
    sp.add_argument("--budget", type=int, default=None, help="candidate visit budget for the cross-check")
    sp.add_argument("--no-check", action="store_true", help="skip the candidate cross-check")
    sp.add_argument("--sym", action="store_true", help="also report the reverse direction")
    sp = add("witness", cmd_witness, "witness certificate, tension forest and gates of an optimal map")
    for a in ("source", "target", "marking"):
        sp.add_argument(a)
    sp = add("geodesic", cmd_geodesic, "sampled geodesic from T to T'")
    for a in ("source", "target", "marking"):
        sp.add_argument(a)
    sp.add_argument("--samples", type=int, default=4)
    sp.add_argument("--verify", action="store_true", help="check additivity over all sampled triples")
    sp.add_argument("--dot", default=None, help="directory for one DOT file per sample")
    sp = add("collapse", cmd_collapse, "collapse an edge")
    sp.add_argument("gog")
    sp.add_argument("edge")
    sp = add("expand", cmd_expand, "elementary expansion at a vertex")
    sp.add_argument("gog")
    sp.add_argument("vertex")
    sp.add_argument("new_vertex")
    sp.add_argument("--group", required=True, help='group of the new vertex, e.g. "trivial" or "finite n=2 table=0,1,1,0"')
    sp.add_argument("--inc-old", required=True)
    sp.add_argument("--inc-new", required=True)
    sp.add_argument("--move", action="append", help="edge end to re-attach, as edge:src or edge:dst")
    sp.add_argument("--length", default="1")
    sp.add_argument("--edge-name", default=None)
    sp = add("fold-iia", cmd_fold_iia, "type IIA fold of a vertex group element along an edge")
    sp.add_argument("gog")
    sp.add_argument("edge")
    sp.add_argument("element", type=int)
    sp.add_argument("--reverse", action="store_true")
    sp = add("modulus", cmd_modulus, "modular homomorphism")
    sp.add_argument("gog")
    sp.add_argument("word", nargs="?")
    sp = add("index-invariant", cmd_index_invariant, "length-weighted maximal elliptic index sum")
    sp.add_argument("gog")
    for name, func, h in (
        ("displacement", cmd_displacement, "sigma(T, T phi)"),
        ("classify", cmd_classify, "elliptic / hyperbolic / parabolic classification"),
        ("traintrack", cmd_traintrack, "train track map or reduction certificate"),
    ):
        sp = add(name, func, h)
        sp.add_argument("gog")
        sp.add_argument("automorphism")
        sp.add_argument("--budget", type=int, default=None)
        if name != "displacement":
            sp.add_argument("--trace", action="store_true")
        if name == "traintrack":
            sp.add_argument("--dot", default=None, help="write the train track graph as DOT")
    sp = add("export-dot", cmd_export_dot, "DOT rendering of a graph of groups")
    sp.add_argument("gog")
    return p


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except GogError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
