"""``sbattn`` command line: sweep, dist, verify, convert."""
from __future__ import annotations

import argparse
import os
import sys

from . import bench
from .io import MatrixFormatError, load_matrix, save_matrix
from .support_basis import sample_subgaussian

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _err(msg: str):
    print(f"sbattn: {msg}", file=sys.stderr)


def _default_seed() -> int:
    raw = os.environ.get("SBATTN_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"SBATTN_SEED must be an integer, got {raw!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"could not parse number list {text!r}") from None


def read_config(path) -> dict[str, str]:
    """key=value lines; blank lines and '#' comments ignored."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


_KEYS = {
    "n": int,
    "d": int,
    "sigma": float,
    "seed": int,
    "thresholds": _floats,
    "eps0": float,
    "engines": lambda s: [e.strip() for e in s.split(",") if e.strip()],
    "repeats": int,
    "eps_B": float,
    "eps_sk": float,
    "delta": float,
}


def sweep_config(args) -> bench.SweepConfig:
    cfg = bench.SweepConfig(seed=_default_seed())
    values = {}
    if args.config:
        values.update(read_config(args.config))
    for k in _KEYS:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    for k, v in values.items():
        if k not in _KEYS:
            raise UsageError(f"unknown config key {k!r}")
        try:
            setattr(cfg, k, _KEYS[k](v) if isinstance(v, str) else v)
        except ValueError:
            raise UsageError(f"bad value for {k}: {v!r}") from None
    try:
        return cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w"), True


def cmd_sweep(args) -> int:
    cfg = sweep_config(args)
    rows = bench.run_sweep(cfg, log=lambda s: print(s, file=sys.stderr))
    fh, close = _open_out(args.out)
    try:
        bench.write_sweep_csv(rows, fh, timing=not args.no_timing)
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_dist(args) -> int:
    if args.input:
        M = load_matrix(args.input)
    else:
        seed = args.seed if args.seed is not None else _default_seed()
        n = args.n if args.n is not None else 1024
        d = args.d if args.d is not None else 64
        sigma = args.sigma if args.sigma is not None else 0.1
        M = sample_subgaussian(n, d, sigma, seed)
    hist, summary = bench.entry_distribution(M, args.bins)
    fh, close = _open_out(args.out)
    try:
        bench.write_distribution_csv(hist, summary, fh)
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    checks = bench.run_verify(args.suite, seed, inject_fault=args.inject_fault)
    fh, close = _open_out(args.out)
    try:
        for c in checks:
            fh.write(f"{'PASS' if c.passed else 'FAIL'} {c.name} {c.measured}\n")
    finally:
        if close:
            fh.close()
    failed = [c.name for c in checks if not c.passed]
    if failed:
        _err(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_CHECK
    return EXIT_OK


def cmd_convert(args) -> int:
    M = load_matrix(args.input)
    save_matrix(args.output, M, args.to)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sbattn", description="attention approximation benchmarks")
    ap.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1)")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--n", type=int)
        p.add_argument("--d", type=int)
        p.add_argument("--sigma", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--threads", type=int, default=argparse.SUPPRESS)

    p = sub.add_parser("sweep", help="threshold sweep CSV")
    common(p)
    p.add_argument("--thresholds")
    p.add_argument("--eps0", type=float)
    p.add_argument("--engines")
    p.add_argument("--repeats", type=int)
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--no-timing", action="store_true", help="write 0 for wall time (byte-stable output)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dist", help="entry histogram of a matrix file or a Gaussian sample")
    common(p)
    p.add_argument("--input")
    p.add_argument("--bins", type=int, default=50)
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("verify", help="run the invariant suite")
    p.add_argument("suite", nargs="?", choices=("fast", "full"), default="fast")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--inject-fault", action="store_true", help="corrupt one factor entry by 1e-3")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("convert", help="convert between text and binary matrix files")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--to", choices=("text", "binary"), required=True)
    p.set_defaults(func=cmd_convert)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=max(1, args.threads)):
            return args.func(args)
    except UsageError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except MatrixFormatError as exc:
        _err(str(exc))
        return EXIT_IO
    except OSError as exc:
        _err(str(exc))
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
