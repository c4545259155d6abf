"""Command line entry point ``qc``.

Exit codes: 0 success / check passed, 1 check failed, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import qgf
from .axioms import box_volume, is_copula, is_quasi_copula
from .examples import (
    make_example_old3d,
    make_frechet_M,
    make_frechet_W,
    make_product_Pi,
    reproduce_counterexample,
)
from .extension import (
    DomainError,
    ExtensionError,
    ProductDomain,
    SubQuasiCopula,
    SubQuasiCopulaError,
    extend_sub_quasi_copula,
)
from .grid import GridError, Mesh, NBox
from .patchwork import (
    BoundarySet,
    PatchError,
    conjectured_patch_P,
    local_patch_bounds,
    patch_difference_G,
    sklar_factorize,
    stepI_lower,
    stepI_upper,
)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# boundary directories: F1.qgf, F1p.qgf, ..., Fn.qgf, Fnp.qgf and box.json


def write_boundary(bs: BoundarySet, directory: str | os.PathLike) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for k in range(bs.n):
        qgf.write(bs.lower[k], d / f"F{k + 1}.qgf")
        qgf.write(bs.upper[k], d / f"F{k + 1}p.qgf")
    with open(d / "box.json", "w") as fh:
        json.dump({"a": bs.box.a.tolist(), "b": bs.box.b.tolist()}, fh)
        fh.write("\n")


def read_boundary(directory: str | os.PathLike) -> BoundarySet:
    d = Path(directory)
    try:
        with open(d / "box.json") as fh:
            doc = json.load(fh)
        box = NBox(doc["a"], doc["b"])
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"{d / 'box.json'}: malformed box ({exc})") from exc
    n = box.n
    lower = [qgf.read(d / f"F{k + 1}.qgf") for k in range(n)]
    upper = [qgf.read(d / f"F{k + 1}p.qgf") for k in range(n)]
    axes = []
    for j in range(n):
        k = 1 if j == 0 else 0
        if lower[k].n != n - 1:
            raise UsageError(f"face files must be {n - 1}-dimensional")
        axes.append(lower[k].mesh.axes[j if j < k else j - 1])
    mesh = Mesh(axes)
    if not (np.array_equal(mesh.lower, box.a) and np.array_equal(mesh.upper, box.b)):
        raise UsageError("face meshes do not span the box in box.json")
    return BoundarySet(mesh, tuple(lower), tuple(upper))


# ---------------------------------------------------------------------------


def _paired(path: str, tag: str) -> str:
    p = Path(path)
    return str(p.with_name(f"{p.stem}.{tag}{p.suffix or '.qgf'}"))


def _emit(args, doc: dict, text: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(doc))
    else:
        print(text)


def cmd_check(args) -> int:
    f = qgf.read(args.file)
    rep = (is_copula if args.copula else is_quasi_copula)(f, args.tol)
    _emit(args, rep.to_dict(), rep.summary())
    return 0 if rep.passed else 1


def cmd_volume(args) -> int:
    f = qgf.read(args.file)
    try:
        nums = [float(t) for t in args.box.split(",")]
    except ValueError as exc:
        raise UsageError(f"--box: {exc}") from exc
    if len(nums) != 2 * f.n:
        raise UsageError(f"--box needs {2 * f.n} numbers a1,b1,...,an,bn")
    box = NBox(nums[0::2], nums[1::2])
    print(repr(box_volume(f, box)))
    return 0


def cmd_stepI(args) -> int:
    cs = [qgf.read(p) for p in args.faces.split(",")]
    outs = []
    if args.mode in ("upper", "both"):
        outs.append(("upper", stepI_upper(cs)))
    if args.mode in ("lower", "both"):
        outs.append(("lower", stepI_lower(cs)))
    for tag, g in outs:
        path = args.output if args.mode != "both" else _paired(args.output, tag)
        qgf.write(g, path)
        print(f"wrote {tag} bound to {path}")
    return 0


def cmd_patch(args) -> int:
    bs = read_boundary(args.boundary)
    if args.emit == "bounds":
        up, lo = local_patch_bounds(bs)
        for tag, g in (("upper", up), ("lower", lo)):
            path = _paired(args.output, tag)
            qgf.write(g, path)
            print(f"wrote {tag} local bound to {path}")
        return 0
    pc = patch_difference_G(bs)
    if args.emit == "P":
        sf = sklar_factorize(pc, mode=args.q)
        out = conjectured_patch_P(pc, sf.combined_at)
    else:
        out = {"A": pc.A, "B": pc.B, "G": pc.G}[args.emit]
    qgf.write(out, args.output)
    print(f"wrote {args.emit} to {args.output} (V = {pc.V!r})")
    return 0


def cmd_sklar(args) -> int:
    bs = read_boundary(args.boundary)
    sf = sklar_factorize(patch_difference_G(bs), mode=args.mode, nodes=args.nodes)
    d = Path(args.output)
    d.mkdir(parents=True, exist_ok=True)
    for k, q in enumerate(sf.factors):
        qgf.write(q, d / f"Q{k + 1}.qgf")
    for k, m in enumerate(sf.margins):
        qgf.write(m, d / f"margin{k + 1}.qgf")
    qgf.write(sf.combined, d / "combined.qgf")
    ok = all(r.passed for r in sf.reports)
    for k, r in enumerate(sf.reports):
        print(f"Q{k + 1}: quasi-copula {'PASS' if r.passed else 'FAIL'}")
    print(f"wrote factors to {d}")
    return 0 if ok else 1


def cmd_extend(args) -> int:
    domain = ProductDomain.read(args.domain)
    sq = SubQuasiCopula(domain, qgf.read(args.subqc))
    modes = ["upper", "lower"] if args.mode == "both" else [args.mode]
    results = {}
    for i, mode in enumerate(modes):
        results[mode] = extend_sub_quasi_copula(sq, mode, args.refine, check_input=(i == 0), tol=args.tol)
    if len(results) == 2:
        excess = float(np.max(results["lower"].values - results["upper"].values))
        if excess > args.tol:
            print(f"lower extension exceeds the upper one by {excess!r}", file=sys.stderr)
            return 1
    status = 0
    for mode, g in results.items():
        path = args.output if len(modes) == 1 else _paired(args.output, mode)
        qgf.write(g, path)
        rep = is_quasi_copula(g, args.tol)
        print(f"{mode} extension -> {path}: quasi-copula {'PASS' if rep.passed else 'FAIL'}")
        status |= 0 if rep.passed else 1
    return status


def cmd_example(args) -> int:
    if args.name == "counterexample":
        rep = reproduce_counterexample(args.grid)
        _emit(args, rep.to_dict(), rep.summary())
        return 0 if rep.passed else 1
    if args.output is None:
        raise UsageError("-o/--output is required")
    n = 3 if args.name == "old3d" else args.n
    mesh = Mesh.uniform(n, args.grid)
    make = {
        "W": lambda: make_frechet_W(n, mesh),
        "M": lambda: make_frechet_M(n, mesh),
        "Pi": lambda: make_product_Pi(n, mesh),
        "old3d": lambda: make_example_old3d(mesh),
    }[args.name]
    qgf.write(make(), args.output)
    print(f"wrote {args.name} (n={n}, {args.grid} nodes per axis) to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qc", description="Quasi-copula patchwork and extension tools")
    p.add_argument("--threads", type=int, default=os.cpu_count(), help="cap on worker threads")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check", help="verify quasi-copula (or copula) axioms")
    s.add_argument("file")
    s.add_argument("--copula", action="store_true", help="also require nonnegative cell volumes")
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("volume", help="signed volume of a box")
    s.add_argument("file")
    s.add_argument("--box", required=True, help="a1,b1,a2,b2,...")
    s.set_defaults(func=cmd_volume)

    s = sub.add_parser("stepI", help="Step-I bounds from n upper-face quasi-copulas")
    s.add_argument("--faces", required=True, help="comma-separated QGF files C1,...,Cn")
    s.add_argument("--mode", choices=["upper", "lower", "both"], default="both")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_stepI)

    s = sub.add_parser("patch", help="additive patches, difference, conjectured patch or local bounds")
    s.add_argument("--boundary", required=True, help="directory with F1.qgf, F1p.qgf, ..., box.json")
    s.add_argument("--emit", choices=["A", "B", "G", "P", "bounds"], required=True)
    s.add_argument("--q", choices=["lower", "upper"], default="lower", help="Step-I bound used for P")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_patch)

    s = sub.add_parser("sklar", help="factor the patch difference into margins and quasi-copulas")
    s.add_argument("--boundary", required=True)
    s.add_argument("--mode", choices=["lower", "upper"], default="lower")
    s.add_argument("--nodes", type=int, default=None, help="tabulate factors on a uniform mesh")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_sklar)

    s = sub.add_parser("extend", help="extend a sub-quasi-copula to [0,1]^n")
    s.add_argument("domain")
    s.add_argument("subqc")
    s.add_argument("--mode", choices=["upper", "lower", "both"], default="both")
    s.add_argument("--refine", type=int, default=8)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_extend)

    s = sub.add_parser("example", help="reference quasi-copulas and the 3-d counterexample")
    s.add_argument("name", choices=["W", "M", "Pi", "old3d", "counterexample"])
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--grid", type=int, default=33)
    s.add_argument("--json", action="store_true")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_example)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    if args.threads is not None and args.threads < 1:
        print("qc: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ExtensionError as exc:
        print(f"qc {args.command}: {exc}", file=sys.stderr)
        return 1
    except (UsageError, OSError, GridError, PatchError, DomainError, SubQuasiCopulaError, ValueError) as exc:
        print(f"qc {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
