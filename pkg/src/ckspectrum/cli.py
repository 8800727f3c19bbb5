"""Command-line front end.

One binary, four subcommands:

  moments    closed/sampled moment tables for a chosen engine
  simulate   finite-size spectrum runs with histogram and moment CSVs
  compare    theory vs simulation with a z-score gate on low moments
  selftest   fast cross-checks of every layer at small sizes

Settings come from flags, or from a flat TOML file via --config with
flags taking precedence. Every run writes a manifest.json into the
output directory recording the command, the fully resolved settings,
the seed actually used, the package version and the emitted files, so
a run can be reproduced exactly. The only environment variable the
package reads is CK_WORKERS.
"""

import argparse
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from importlib import metadata

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .activations import builtin, theta1, theta2
from .graphs import classify, cycle_graph, quotient
from .moments import (
    ModelParams,
    _gauss_sigma,
    hankel_check,
    moments_gauss,
    moments_main,
    moments_oracle,
    partition_stats,
)
from .partitions import (
    EnumerationLimitError,
    Partition,
    enumerate_noncrossing,
    enumerate_set_partitions,
)
from .simulate import (
    CapacityError,
    SimConfig,
    gram_eigenvalues,
    moments_csv,
    run_trials,
)
from .weightlaws import GaussianWeights, SparseWigner, Stable


class UsageError(ValueError):
    """Bad settings: wrong flag combination or malformed config."""


# name -> (type, default); None means the setting must be supplied
# explicitly when a command needs it.
_SETTINGS = {
    "law": (str, None),
    "alpha": (float, None),
    "sigma": (float, 1.0),
    "q": (float, 0.5),
    "sigma_w": (float, 1.0),
    "sigma_x": (float, 1.0),
    "activation": (str, None),
    "cutoff": (float, 8.0),
    "phi": (float, 1.0),
    "psi": (float, 1.0),
    "kmax": (int, 4),
    "engine": (str, "auto"),
    "n": (int, None),
    "m": (int, None),
    "p": (int, None),
    "trials": (int, 8),
    "bins": (int, 64),
    "seed": (int, None),
    "out_dir": (str, "."),
}

_COMMAND_DEFAULTS = {
    "compare": {"kmax": 3, "trials": 64},
}


def _fmt(x):
    return "%.17g" % float(x)


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ckspec",
        description="Moment theory and spectrum simulation for random "
                    "feature Gram matrices.",
    )
    sub = parser.add_subparsers(dest="command")

    def add_settings(sp):
        sp.add_argument("--config", help="flat TOML settings file")
        sp.add_argument("--law", choices=["gauss", "stable", "sparse"])
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--sigma", type=float)
        sp.add_argument("--q", type=float)
        sp.add_argument("--sigma-w", type=float, dest="sigma_w")
        sp.add_argument("--sigma-x", type=float, dest="sigma_x")
        sp.add_argument("--activation")
        sp.add_argument("--cutoff", type=float)
        sp.add_argument("--phi", type=float)
        sp.add_argument("--psi", type=float)
        sp.add_argument("--kmax", type=int)
        sp.add_argument("--engine",
                        choices=["auto", "main", "gauss", "oracle", "all"])
        sp.add_argument("--n", type=int)
        sp.add_argument("--m", type=int)
        sp.add_argument("--p", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--bins", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir", dest="out_dir")

    add_settings(sub.add_parser("moments", help="tabulate limit moments"))
    add_settings(sub.add_parser("simulate", help="run finite-size spectra"))
    add_settings(sub.add_parser("compare",
                                help="check simulation against theory"))
    sub.add_parser("selftest", help="run built-in cross-checks")
    return parser


def _load_config(path):
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}")
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"malformed config file: {exc}")
    out = {}
    for key, value in raw.items():
        if key not in _SETTINGS:
            raise UsageError(f"unknown config key: {key}")
        want, _ = _SETTINGS[key]
        if want is float and isinstance(value, int):
            value = float(value)
        if not isinstance(value, want) or isinstance(value, bool):
            raise UsageError(
                f"config key {key} expects {want.__name__}, "
                f"got {type(value).__name__}"
            )
        out[key] = value
    return out


def _resolve_settings(args):
    """Defaults, then config file, then flags. Returns the merged dict
    plus the set of keys the user supplied explicitly."""
    merged = {k: d for k, (_, d) in _SETTINGS.items()}
    merged.update(_COMMAND_DEFAULTS.get(args.command, {}))
    file_cfg = _load_config(args.config) if args.config else {}
    merged.update(file_cfg)
    explicit = set(file_cfg)
    for key in _SETTINGS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
            explicit.add(key)
    if merged["seed"] is None:
        merged["seed"] = int.from_bytes(os.urandom(8), "big")
    return merged, explicit


def _make_law(s):
    name = s["law"]
    if name is None:
        raise UsageError("--law is required (gauss, stable or sparse)")
    try:
        if name == "gauss":
            return GaussianWeights(s["sigma_w"])
        if name == "stable":
            if s["alpha"] is None:
                raise UsageError("the stable law requires --alpha")
            return Stable(s["alpha"], s["sigma"])
        if name == "sparse":
            return SparseWigner(s["q"])
    except ValueError as exc:
        raise UsageError(str(exc))
    raise UsageError(f"unknown law {name!r}")


def _make_activation(s):
    if s["activation"] is None:
        raise UsageError("--activation is required")
    try:
        return builtin(s["activation"], cutoff=s["cutoff"])
    except ValueError as exc:
        raise UsageError(str(exc))


def _require(s, *keys):
    for key in keys:
        if s[key] is None:
            raise UsageError(f"--{key} is required for this command")


def _echo_config(s):
    return {k: v for k, v in s.items() if v is not None and k != "out_dir"}


class _OutDir:
    """Output directory that tracks what was written for the manifest."""

    def __init__(self, path):
        self.path = path
        self.artifacts = []
        os.makedirs(path, exist_ok=True)

    def write(self, name, text):
        with open(os.path.join(self.path, name), "w") as fh:
            fh.write(text)
        self.artifacts.append(name)

    def finish(self, command, settings, seed):
        doc = {
            "command": command,
            "config": _echo_config(settings),
            "seed": seed,
            "version": _version(),
            "created": datetime.now(timezone.utc).isoformat(),
            "artifacts": sorted(self.artifacts + ["manifest.json"]),
        }
        self.write("manifest.json", json.dumps(doc, indent=2,
                                               sort_keys=True) + "\n")


def _single_report(engine, params, kmax, seed):
    if engine == "auto":
        engine = "gauss" if _gauss_sigma(params.law) is not None else "main"
    if engine == "gauss":
        try:
            return moments_gauss(params, kmax)
        except ValueError as exc:
            if isinstance(exc, EnumerationLimitError):
                raise
            raise UsageError(str(exc))
    if engine == "main":
        return moments_main(params, kmax, seed=seed)
    if engine == "oracle":
        return moments_oracle(params, kmax, seed=seed)
    raise UsageError(f"unknown engine {engine!r}")


def cmd_moments(s, explicit):
    law = _make_law(s)
    act = _make_activation(s)
    params = ModelParams(phi=s["phi"], psi=s["psi"], activation=act,
                         law=law, sigma_x=s["sigma_x"])
    kmax, seed = s["kmax"], s["seed"]
    out = _OutDir(s["out_dir"])

    if s["engine"] == "all":
        reports = {"main": moments_main(params, kmax, seed=seed)}
        if _gauss_sigma(law) is not None:
            reports["gauss"] = moments_gauss(params, kmax)
        reports["oracle"] = moments_oracle(params, kmax, seed=seed)
        lines = ["k,m_main,err_main,m_gauss,err_gauss,"
                 "m_oracle,err_oracle,max_dev"]
        overall = 0.0
        for k in range(1, kmax + 1):
            cells, values = [str(k)], []
            for name in ("main", "gauss", "oracle"):
                rep = reports.get(name)
                if rep is None:
                    cells += ["", ""]
                else:
                    values.append(rep.moment(k))
                    cells += [_fmt(rep.moment(k)), _fmt(rep.errors[k - 1])]
            dev = max(values) - min(values)
            overall = max(overall, dev)
            lines.append(",".join(cells + [_fmt(dev)]))
        out.write("moments_all.csv", "\n".join(lines) + "\n")
        doc = {
            "engines": {name: json.loads(rep.to_json())
                        for name, rep in reports.items()},
            "max_dev": overall,
        }
        out.write("moments_all.json", json.dumps(doc, indent=2,
                                                 sort_keys=True) + "\n")
        print(f"engines: {', '.join(sorted(reports))}  "
              f"max pairwise deviation {overall:.3e}")
    else:
        rep = _single_report(s["engine"], params, kmax, seed)
        out.write("moments.csv", rep.to_csv())
        out.write("moments.json", rep.to_json() + "\n")
        print(f"engine {rep.engine}")
        for k in rep.k_values:
            print(f"  m_{k} = {rep.moment(k):.12g} "
                  f"(err {rep.errors[k - 1]:.3e})")

    out.finish("moments", s, seed)
    print(f"wrote {', '.join(sorted(out.artifacts))} to {out.path}")
    return 0


def _sim_config(s, kmax=None):
    _require(s, "n", "m", "p")
    law = _make_law(s)
    act = _make_activation(s)
    try:
        return SimConfig(
            n=s["n"], m=s["m"], p=s["p"], law=law, activation=act,
            sigma_x=s["sigma_x"], trials=s["trials"], seed=s["seed"],
            histogram_bins=s["bins"], k_max=kmax or s["kmax"],
        )
    except CapacityError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc))


def cmd_simulate(s, explicit):
    cfg = _sim_config(s)
    report = run_trials(cfg)
    out = _OutDir(s["out_dir"])
    out.write("histogram.csv", report.histogram.to_csv())
    out.write("sim_moments.csv", moments_csv(report))
    out.finish("simulate", s, s["seed"])
    top = report.samples[-1].eigenvalues[-1]
    print(f"{cfg.trials} trial(s) at n={cfg.n} m={cfg.m} p={cfg.p}, "
          f"largest eigenvalue {top:.6g}")
    print(f"wrote {', '.join(sorted(out.artifacts))} to {out.path}")
    return 0


def cmd_compare(s, explicit):
    if s["engine"] == "all":
        raise UsageError("compare uses a single theory engine, not 'all'")
    cfg = _sim_config(s)
    phi = s["phi"] if "phi" in explicit else cfg.n / cfg.m
    psi = s["psi"] if "psi" in explicit else cfg.n / cfg.p
    params = ModelParams(phi=phi, psi=psi, activation=cfg.activation,
                         law=cfg.law, sigma_x=cfg.sigma_x)
    theory = _single_report(s["engine"], params, s["kmax"], s["seed"])
    report = run_trials(cfg)

    rows, gate_failed = [], False
    for st in report.moment_stats:
        k = st["k"]
        tv, te = theory.moment(k), theory.errors[k - 1]
        diff = abs(st["mean"] - tv)
        denom = math.hypot(te, st["stderr"])
        z = 0.0 if diff == 0.0 else (diff / denom if denom else math.inf)
        if k <= 3 and z > 4.0:
            gate_failed = True
        rows.append((k, tv, te, st["mean"], st["stderr"], z))

    lines = ["k,theory,theory_err,empirical,emp_stderr,z_score"]
    for row in rows:
        lines.append(",".join([str(row[0])] + [_fmt(v) for v in row[1:]]))
    out = _OutDir(s["out_dir"])
    out.write("compare.csv", "\n".join(lines) + "\n")
    out.finish("compare", s, s["seed"])

    print(f"{'k':>2} {'theory':>14} {'theory_err':>12} "
          f"{'empirical':>14} {'emp_stderr':>12} {'z_score':>10}")
    for k, tv, te, mean, se, z in rows:
        print(f"{k:>2} {tv:>14.6g} {te:>12.3e} "
              f"{mean:>14.6g} {se:>12.3e} {z:>10.3g}")
    if gate_failed:
        print("FAIL: a moment with k <= 3 deviates by more than 4 "
              "combined standard errors", file=sys.stderr)
        return 1
    print("all moments with k <= 3 within 4 combined standard errors")
    return 0


# ---------------------------------------------------------------------------
# selftest suites. Each returns None on success and raises on failure;
# small sizes only, the whole battery stays well under a minute.

def _close(a, b, tol, what):
    if not math.isclose(a, b, rel_tol=tol, abs_tol=tol):
        raise AssertionError(f"{what}: {a!r} vs {b!r}")


def _suite_partition_counts():
    bell = [1]
    for row in range(1, 8):
        bell.append(sum(math.comb(row - 1, j) * bell[j]
                        for j in range(row)))
    for k in range(1, 7):
        found = len(enumerate_set_partitions(k))
        if found != bell[k]:
            raise AssertionError(f"set partition count at {k}: {found}")
    for k in range(1, 8):
        catalan = math.comb(2 * k, k) // (k + 1)
        found = len(enumerate_noncrossing(k))
        if found != catalan:
            raise AssertionError(f"noncrossing count at {k}: {found}")


def _suite_closed_moment_forms():
    # m_1 and m_2 against hand closed forms; exercises the cyclic
    # nearest-neighbour pair counts inside both engines.
    act = builtin("gauss_odd")
    th1 = theta1(act, 1.0)
    tau2 = theta2(act, 1.0)
    phi, psi = 2.0, 0.5
    want2 = th1 * th1 * (1 + phi / psi) + tau2 * tau2 / psi
    for engine in (moments_gauss, lambda p, k: moments_main(p, k, seed=0)):
        rep = engine(ModelParams(phi=phi, psi=psi, activation=act,
                                 law=GaussianWeights(1.0)), 2)
        _close(rep.moment(1), th1, 1e-9, "m_1 closed form")
        _close(rep.moment(2), want2, 1e-9, "m_2 closed form")


def _suite_route_agreement():
    params = ModelParams(phi=1.0, psi=1.0, activation=builtin("identity"),
                         law=GaussianWeights(1.0))
    main = moments_main(params, 4, seed=0)
    shortcut = moments_gauss(params, 4)
    oracle = moments_oracle(params, 2, seed=0)
    for k in range(1, 5):
        want = math.comb(3 * k, k) / (2 * k + 1)
        _close(main.moment(k), want, 1e-9, f"main m_{k}")
        _close(shortcut.moment(k), want, 1e-9, f"shortcut m_{k}")
    for k in (1, 2):
        _close(oracle.moment(k), main.moment(k), 1e-8, f"oracle m_{k}")
    if not hankel_check(shortcut):
        raise AssertionError("moment sequence fails Hankel positivity")


def _suite_quotient_admissibility():
    g = cycle_graph(4)
    single = Partition.from_blocks(4, [{i} for i in range(1, 5)])
    crossing = Partition.from_blocks(4, [{1, 3}, {2, 4}])
    if not classify(quotient(g, single, single)).admissible:
        raise AssertionError("plain cycle should be admissible")
    if classify(quotient(g, crossing, single)).admissible:
        raise AssertionError("crossing contraction should be rejected")


def _suite_activation_functionals():
    act = builtin("gauss_odd")
    _close(theta1(act, 1.0), 5.0 ** -1.5, 1e-12, "theta1 at unit scale")
    _close(theta2(act, 1.0), 1.0 / 27.0, 1e-12, "theta2 at unit scale")
    ident = builtin("identity")
    _close(theta1(ident, 1.7), 1.7 ** 2, 1e-12, "identity theta1")
    _close(theta2(ident, 1.7), 1.0, 1e-12, "identity theta2")


def _suite_weight_law_bridge():
    act = builtin("gauss_odd")
    a = moments_gauss(ModelParams(phi=1.0, psi=1.0, activation=act,
                                  law=GaussianWeights(1.0)), 3)
    b = moments_gauss(ModelParams(phi=1.0, psi=1.0, activation=act,
                                  law=Stable(2.0, 2.0 ** -0.5)), 3)
    for k in (1, 2, 3):
        _close(a.moment(k), b.moment(k), 1e-12, f"bridge m_{k}")


def _suite_simulator_invariants():
    import numpy as np

    ev = gram_eigenvalues(np.array([[1.0, 0.0], [0.0, 2.0]]))
    _close(ev[0], 1.0, 1e-10, "diagonal eigenvalue")
    _close(ev[1], 4.0, 1e-10, "diagonal eigenvalue")
    cfg = SimConfig(n=24, m=28, p=20, law=GaussianWeights(1.0),
                    activation=builtin("gauss_odd"), sigma_x=1.0,
                    trials=2, seed=123, histogram_bins=8, k_max=3)
    report = run_trials(cfg)
    widths = [hi - lo for lo, hi in
              zip(report.histogram.bin_lo, report.histogram.bin_hi)]
    mass = sum(d * w for d, w in zip(report.histogram.density, widths))
    _close(mass, 1.0, 1e-9, "histogram mass")
    for sample in report.samples:
        if sample.eigenvalues[0] < -1e-8 * max(sample.eigenvalues[-1], 1.0):
            raise AssertionError("negative eigenvalue past the PSD floor")


_SUITES = (
    ("partition-counts", _suite_partition_counts),
    ("closed-moment-forms", _suite_closed_moment_forms),
    ("route-agreement", _suite_route_agreement),
    ("quotient-admissibility", _suite_quotient_admissibility),
    ("activation-functionals", _suite_activation_functionals),
    ("weight-law-bridge", _suite_weight_law_bridge),
    ("simulator-invariants", _suite_simulator_invariants),
)


def cmd_selftest():
    failures = 0
    start = time.monotonic()
    for name, fn in _SUITES:
        try:
            fn()
        except Exception as exc:
            failures += 1
            detail = str(exc).splitlines()[0] if str(exc) else repr(exc)
            print(f"{name}: FAIL ({detail})")
        else:
            print(f"{name}: PASS")
    elapsed = time.monotonic() - start
    print(f"selftest: {len(_SUITES) - failures}/{len(_SUITES)} suites "
          f"passed in {elapsed:.1f}s")
    return 1 if failures else 0


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    if args.command == "selftest":
        return cmd_selftest()
    handler = {"moments": cmd_moments, "simulate": cmd_simulate,
               "compare": cmd_compare}[args.command]
    try:
        settings, explicit = _resolve_settings(args)
        return handler(settings, explicit)
    except UsageError as exc:
        print(f"ckspec: {exc}", file=sys.stderr)
        return 2
    except (EnumerationLimitError, CapacityError) as exc:
        print(f"ckspec: capability: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
