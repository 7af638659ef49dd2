"""Command-line interface.

One executable, one subcommand per pipeline.  Every run writes a manifest
JSON next to its outputs echoing the resolved parameters, the seed, the
library version and the exact argv, so a run can be reproduced
byte-for-byte.  Numeric grids go to CSV with full-precision floats.

Exit codes: 0 success, 1 numerical failure, 2 input error, 3 internal
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, acceptance, bessel, dyson, ensemble, geometry, \
    kernel, montecarlo, quadrature
from ._config import set_max_workers
from .errors import NumericalError, ProfileError

FLOAT_FMT = "%.17g"


def _fmt(x) -> str:
    return FLOAT_FMT % float(x)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


_current_argv: list = []
_current_seed: int = 0


def _write_manifest(out_dir: Path, name: str, params: dict, outputs) -> None:
    doc = {
        "subcommand": name,
        "parameters": params,
        "seed": _current_seed,
        "version": __version__,
        "argv": list(_current_argv),
        "outputs": [str(p) for p in outputs],
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_complex(text: str) -> complex:
    if "," in text:
        re_s, im_s = text.split(",", 1)
        return complex(float(re_s), float(im_s))
    return complex(float(text), 0.0)


def _load_source(args):
    """Profile or elliptic parameters from --profile / --rho [--n]."""
    if getattr(args, "profile", None):
        return ensemble.load_profile(args.profile)
    if getattr(args, "rho", None) is not None:
        n = getattr(args, "n", None) or 200
        return ensemble.constant_profiles(n, _parse_complex(args.rho))
    raise ProfileError("need either --profile FILE or --rho R[,IM]")


def _resolve_coupling(args, profile) -> float:
    if getattr(args, "critical", False):
        if isinstance(profile, ensemble.CorrelationProfile):
            st = profile.structure
            if profile.t_is_real_nonneg:
                return 1.0 / geometry.find_zeta_star(profile)
            if st is not None and st.k == 1:
                rho = complex(st.t_red[0, 0])
                return 1.0 / float(np.sqrt(1 + abs(rho) ** 2 + 2 * rho.real))
            raise ProfileError("--critical needs nonnegative T or a "
                               "constant profile")
        rho = complex(profile.rho)
        return 1.0 / float(np.sqrt(1 + abs(rho) ** 2 + 2 * rho.real))
    if getattr(args, "g", None) is None:
        raise ProfileError("need --g G or --critical")
    return float(args.g)


def _tgrid(args) -> np.ndarray:
    return np.linspace(args.tmin, args.tmax, args.tsteps)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_sample(args, out_dir: Path) -> int:
    src = _load_source(args)
    if isinstance(src, ensemble.CorrelationProfile):
        m = ensemble.sample_elliptic_type(src, args.seed,
                                          gaussian=not args.bernoulli)
    else:  # pragma: no cover - _load_source only returns profiles
        m = ensemble.sample_elliptic(src, args.seed)
    path = out_dir / "matrix.elxm"
    ensemble.save_matrix(m, path)
    _write_manifest(out_dir, "sample",
                    {"seed": args.seed, "n": m.n, "tag": m.profile_tag,
                     "bernoulli": bool(args.bernoulli)}, [path])
    return 0


def cmd_validate(args, out_dir: Path) -> int:
    p = _load_source(args)
    rep = ensemble.validate_profile(p, primitivity_l=args.primitivity_l)
    path = out_dir / "validation.json"
    with open(path, "w") as fh:
        json.dump({"rho_hat": rep.rho_hat, "c0_s": rep.c0_s,
                   "c0_ss": rep.c0_ss, "primitivity_l": rep.primitivity_l,
                   "passes_nonhermitian": rep.passes_nonhermitian,
                   "passes_primitivity": rep.passes_primitivity,
                   "ok": rep.ok}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out_dir, "validate",
                    {"primitivity_l": args.primitivity_l}, [path])
    print(f"rho_hat={rep.rho_hat:.6g} c0_s={rep.c0_s:.6g} "
          f"c0_ss={rep.c0_ss:.6g} ok={rep.ok}")
    return 0


def cmd_dyson(args, out_dir: Path) -> int:
    p = _load_source(args)
    pr = dyson.solve_b(_parse_complex(args.zeta), p, tol=args.tol)
    path = out_dir / "pseudoresolvent.json"
    with open(path, "w") as fh:
        json.dump(pr.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out_dir, "dyson",
                    {"zeta": args.zeta, "tol": args.tol}, [path])
    print(f"delta={pr.delta:.6g} member={pr.member} residual={pr.residual:.3g}")
    return 0


def cmd_pseudospectrum(args, out_dir: Path) -> int:
    p = _load_source(args)
    dom = geometry.trace_level_set(p, level=args.level,
                                   resolution=args.resolution)
    level_path = out_dir / "level_set.csv"
    _write_csv(level_path, ["re", "im"],
               [(z.real, z.imag) for z in dom.boundary])
    raster_path = out_dir / "raster.csv"
    rows = []
    half = dom.metadata["half_width"]
    res = args.raster_resolution
    for y in np.linspace(-half, half, res):
        for x in np.linspace(-half, half, res):
            z = complex(x, y)
            try:
                delta = dyson.solve_b(z, p).delta if z != 0 else -1.0
            except NumericalError:
                delta = -1.0
            rows.append((x, y, delta))
    _write_csv(raster_path, ["re", "im", "delta"], rows)
    _write_manifest(out_dir, "pseudospectrum",
                    {"level": args.level, "resolution": args.resolution,
                     "raster_resolution": res},
                    [level_path, raster_path])
    return 0


def cmd_kernel(args, out_dir: Path) -> int:
    p = _load_source(args)
    pairs = []
    if args.pairs_file:
        data = np.loadtxt(args.pairs_file, delimiter=",", ndmin=2)
        for row in data:
            pairs.append((complex(row[0], row[1]), complex(row[2], row[3])))
    else:
        if args.zeta1 is None or args.zeta2 is None:
            raise ProfileError("need --pairs-file or both --zeta1/--zeta2")
        pairs.append((_parse_complex(args.zeta1), _parse_complex(args.zeta2)))
    rows = []
    for z1, z2 in pairs:
        ke = kernel.kernel_general(z1, z2, p)
        rows.append((z1.real, z1.imag, z2.real, z2.imag,
                     ke.value.real, ke.value.imag, ke.min_sing))
    path = out_dir / "kernel.csv"
    _write_csv(path, ["re1", "im1", "re2", "im2", "reK", "imK", "min_sing"],
               rows)
    _write_manifest(out_dir, "kernel", {"pairs": len(rows)}, [path])
    return 0


def cmd_decay(args, out_dir: Path) -> int:
    p = _load_source(args)
    g = _resolve_coupling(args, p)
    times = _tgrid(args)
    dc = quadrature.decay_curve(p, g, times)
    path = Path(args.out) if args.out else out_dir / "decay.csv"
    _write_csv(path, ["t", "deterministic", "quad_err", "asymptotic"],
               zip(dc.times, dc.deterministic, dc.quad_err, dc.asymptotic))
    _write_manifest(out_dir, "decay",
                    {"g": g, "tmin": args.tmin, "tmax": args.tmax,
                     "tsteps": args.tsteps, "zeta_star": dc.zeta_star},
                    [path])
    return 0


def cmd_elliptic_decay(args, out_dir: Path) -> int:
    rho = _parse_complex(args.rho)
    zs = float(np.sqrt(1 + abs(rho) ** 2 + 2 * rho.real))
    g = 1.0 / zs if args.critical else float(args.g)
    rows = []
    for t in _tgrid(args):
        series = bessel.decay_series(rho, g, t).value if t > 0 else 1.0
        asym = bessel.decay_asymptotic(rho, g, t) if t > 0 else float("nan")
        rows.append((t, series, asym, bessel.negative_tail_bound(rho, g, t)))
    path = Path(args.out) if args.out else out_dir / "elliptic_decay.csv"
    _write_csv(path, ["t", "series", "asymptotic", "neg_tail_bound"], rows)
    _write_manifest(out_dir, "elliptic-decay",
                    {"rho": [rho.real, rho.imag], "g": g,
                     "tmin": args.tmin, "tmax": args.tmax,
                     "tsteps": args.tsteps}, [path])
    return 0


def cmd_montecarlo(args, out_dir: Path) -> int:
    if args.profile:
        src = ensemble.load_profile(args.profile)
    elif args.rho is not None:
        src = ensemble.EllipticParams(n=args.n, rho=_parse_complex(args.rho),
                                      gaussian=not args.bernoulli)
    else:
        raise ProfileError("need --profile FILE or --rho R[,IM]")
    g = _resolve_coupling(args, src)
    study = montecarlo.McStudy(
        source=src, g=g, times=tuple(_tgrid(args)), replicas=args.replicas,
        base_seed=args.seed, gaussian=not args.bernoulli,
        collect_spectra=bool(args.spectrum_out))
    res = montecarlo.run_study(study)
    path = Path(args.out) if args.out else out_dir / "montecarlo.csv"
    _write_csv(path, ["t", "mc_mean", "mc_stderr", "reference", "z"],
               zip(res.times, res.mc_mean, res.mc_stderr, res.reference,
                   res.z_scores))
    outputs = [path]
    if args.spectrum_out:
        spath = Path(args.spectrum_out)
        rows = []
        for r, spec in enumerate(res.spectra):
            rows.extend((r, ev.real, ev.imag) for ev in spec)
        _write_csv(spath, ["replica", "re", "im"], rows)
        outputs.append(spath)
    _write_manifest(out_dir, "montecarlo",
                    {"g": g, "replicas": args.replicas, "seed": args.seed,
                     "tmin": args.tmin, "tmax": args.tmax,
                     "tsteps": args.tsteps,
                     "failures": res.failures}, outputs)
    return 0


def cmd_verify(args, out_dir: Path) -> int:
    results = acceptance.run_tier(args.tier)
    path = out_dir / "verify.json"
    with open(path, "w") as fh:
        json.dump([{"number": r.number, "name": r.name, "passed": r.passed,
                    "detail": r.detail, "seconds": round(r.seconds, 3)}
                   for r in results], fh, indent=2)
        fh.write("\n")
    _write_manifest(out_dir, "verify", {"tier": args.tier}, [path])
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"FAILED: criterion {failed[0].number} ({failed[0].name})"
              + (f" and {len(failed) - 1} more" if len(failed) > 1 else ""))
        return 1
    print("all criteria passed")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_source_args(sp, with_n=True):
    sp.add_argument("--profile", help="profile JSON file")
    sp.add_argument("--rho", help="constant-profile correlation RE[,IM]")
    if with_n:
        sp.add_argument("--n", type=int, default=200, help="dimension")


def _add_tgrid_args(sp):
    sp.add_argument("--tmin", type=float, default=0.0)
    sp.add_argument("--tmax", type=float, default=10.0)
    sp.add_argument("--tsteps", type=int, default=21)


def _add_coupling_args(sp):
    sp.add_argument("--g", type=float, help="coupling strength")
    sp.add_argument("--critical", action="store_true",
                    help="use the critical coupling 1/zeta*")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ellspec",
        description="Deterministic spectral theory of elliptic-type "
                    "non-Hermitian random matrices, with Monte Carlo "
                    "verification.")
    ap.add_argument("--out-dir", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=0, help="base seed")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker pool size (default: logical cores)")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("sample", help="draw one matrix, write ELXM binary")
    _add_source_args(sp)
    sp.add_argument("--bernoulli", action="store_true",
                    help="signed-Bernoulli surrogate instead of Gaussian")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("validate", help="check a profile against the "
                                         "standing assumptions")
    _add_source_args(sp)
    sp.add_argument("--primitivity-l", type=int, default=4)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("dyson", help="solve the pseudo-resolvent at one zeta")
    _add_source_args(sp)
    sp.add_argument("--zeta", required=True, help="RE[,IM]")
    sp.add_argument("--tol", type=float, default=1e-12)
    sp.set_defaults(func=cmd_dyson)

    sp = sub.add_parser("pseudospectrum", help="trace a gap level set and "
                                               "rasterize the gap field")
    _add_source_args(sp)
    sp.add_argument("--level", type=float, default=0.05)
    sp.add_argument("--resolution", type=int, default=65)
    sp.add_argument("--raster-resolution", type=int, default=33)
    sp.set_defaults(func=cmd_pseudospectrum)

    sp = sub.add_parser("kernel", help="evaluate K(zeta1, zeta2)")
    _add_source_args(sp)
    sp.add_argument("--zeta1", help="RE[,IM]")
    sp.add_argument("--zeta2", help="RE[,IM]")
    sp.add_argument("--pairs-file", help="CSV with re1,im1,re2,im2 rows")
    sp.set_defaults(func=cmd_kernel)

    sp = sub.add_parser("decay", help="deterministic decay curve")
    _add_source_args(sp)
    _add_coupling_args(sp)
    _add_tgrid_args(sp)
    sp.add_argument("--out", help="output CSV path")
    sp.set_defaults(func=cmd_decay)

    sp = sub.add_parser("elliptic-decay", help="constant-profile closed forms")
    sp.add_argument("--rho", required=True, help="RE[,IM]")
    _add_coupling_args(sp)
    _add_tgrid_args(sp)
    sp.add_argument("--out", help="output CSV path")
    sp.set_defaults(func=cmd_elliptic_decay)

    sp = sub.add_parser("montecarlo", help="sampled-matrix verification")
    _add_source_args(sp)
    _add_coupling_args(sp)
    _add_tgrid_args(sp)
    sp.add_argument("--replicas", type=int, default=10)
    sp.add_argument("--bernoulli", action="store_true")
    sp.add_argument("--out", help="output CSV path")
    sp.add_argument("--spectrum-out", help="optional eigenvalue CSV path")
    sp.set_defaults(func=cmd_montecarlo)

    sp = sub.add_parser("verify", help="run the acceptance suite")
    sp.add_argument("--tier", choices=("quick", "full"), default="quick")
    sp.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    global _current_argv, _current_seed
    ap = build_parser()
    _current_argv = list(argv) if argv is not None else sys.argv[1:]
    args = ap.parse_args(argv)
    _current_seed = args.seed
    if args.threads is not None:
        set_max_workers(args.threads)
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        return args.func(args, out_dir)
    except (ProfileError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
