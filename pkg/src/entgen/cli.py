"""Command-line front end.

Subcommands: ``simulate``, ``gap``, ``evolve``, ``sweep``, ``fit``,
``reference`` and ``replay``. Every file written with ``--out`` gets a
``<out>.manifest.json`` next to it holding the resolved configuration, code
version, wall time and SHA-256 digests; ``replay`` re-runs a manifest.

Exit codes: 0 ok, 2 usage/domain error, 3 capacity error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    fit_degenerate_decay,
    fit_gap_scaling,
    fit_kappa,
    fit_tau,
    sweep_canonical,
)
from .coupling import normalize_coupling
from .entmeas import asymptotic_entropy, asymptotic_purity, random_schmidt_squares
from .errors import DomainError, EntgenError
from .gatelib import parse_gate_spec
from .paulichain import (
    MAX_FULL_QUBITS,
    chain_operator,
    evolve,
    initial_dist_product_state,
    initial_lumped_product_state,
    kernel_for_gate,
    kernel_report_json,
    lump,
    lumped_chain,
)
from .protocol import ProtocolConfig, run_protocol
from .spectral import degeneracy_profile, dense_spectrum, gap, top_eigenvalues

AUTO_FULL_MAX_N = 10
FLOAT_FMT = "%.15g"

# per-command defaults; a flag left unset falls back to the --config file,
# then to these values
DEFAULTS = {
    "simulate": {"n": None, "gate": "xy", "coupling": "random", "steps": 50,
                 "replicas": 1000, "seed": 0, "measures": "purity,entropy",
                 "record_every": 1, "first_stream": 0, "format": "csv", "out": None,
                 "threads": None},
    "gap": {"gate": None, "coupling": "random", "n_range": None, "mode": "auto", "topk": 6,
            "dump_kernel": False, "out": None, "threads": None},
    "evolve": {"n": None, "gate": None, "coupling": "random", "steps": 50, "mode": "full",
               "out": None, "threads": None},
    "sweep": {"n": None, "coupling": "random", "grid_step": 0.1, "T": 30, "replicas": 1000,
              "seed": 0, "out": None, "threads": None},
    "fit": {"model": None, "input": None, "n": None, "i_inf": None, "tau": None,
            "window": None, "out": None, "threads": None},
    "reference": {"n": None, "out": None, "threads": None},
}


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return "nan"
    return FLOAT_FMT % v if isinstance(v, (float, np.floating)) else str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None, written: list):
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    written.append(path)


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(command: str, config: dict, written: list, wall_time: float, extra=None):
    """Write ``<first output>.manifest.json`` describing the run."""
    if not written:
        return None
    manifest = {
        "command": command,
        "config": config,
        "seed": config.get("seed"),
        "version": __version__,
        "wall_time": wall_time,
        "outputs": {p.name: _digest(p) for p in written},
    }
    if extra:
        manifest.update(extra)
    path = written[0].with_name(written[0].name + ".manifest.json")
    path.write_text(_json_text(manifest))
    return path


# ---------------------------------------------------------------------------
# subcommands; each takes the resolved config dict and returns extra manifest data
# ---------------------------------------------------------------------------


def _parse_range(text: str) -> list[int]:
    try:
        if ":" in text:
            a, b = (int(v) for v in text.split(":"))
            return list(range(a, b + 1))
        return [int(text)]
    except ValueError:
        raise DomainError(f"bad n range {text!r}; expected a:b") from None


def _parse_window(text):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    try:
        lo, hi = (float(v) for v in str(text).split(":"))
    except ValueError:
        raise DomainError(f"bad window {text!r}; expected lo:hi") from None
    return lo, hi


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise DomainError("missing required option(s): " + ", ".join("--" + k.replace("_", "-")
                                                                     for k in missing))


def cmd_simulate(cfg: dict, written: list):
    _require(cfg, "n")
    measures = [m.strip() for m in str(cfg["measures"]).split(",") if m.strip()]
    pc = ProtocolConfig(
        n=int(cfg["n"]), gate=cfg["gate"], coupling=cfg["coupling"], steps=int(cfg["steps"]),
        replicas=int(cfg["replicas"]), seed=int(cfg["seed"]), measures=tuple(measures),
        first_stream=int(cfg["first_stream"]), threads=cfg["threads"],
        record_every=int(cfg["record_every"]),
    )
    tr = run_protocol(pc)
    nt = len(tr.t)
    nan = np.full(nt, np.nan)
    ent_m = tr.entropy_mean if tr.entropy_mean is not None else nan
    ent_s = tr.entropy_se if tr.entropy_se is not None else nan
    mu2 = tr.mu2_mean
    K = 0 if mu2 is None else mu2.shape[1]
    if cfg["format"] == "json":
        obj = {
            "config": pc.to_dict(),
            "t": tr.t.tolist(),
            "purity_mean": tr.purity_mean.tolist(),
            "purity_se": tr.purity_se.tolist(),
            "entropy_mean": None if tr.entropy_mean is None else ent_m.tolist(),
            "entropy_se": None if tr.entropy_se is None else ent_s.tolist(),
            "mu2_mean": None if mu2 is None else mu2.tolist(),
        }
        _emit(_json_text(obj), cfg["out"], written)
    elif cfg["format"] == "csv":
        header = ["t", "purity_mean", "purity_se", "entropy_mean", "entropy_se"]
        header += [f"mu2_{k + 1}" for k in range(K)]
        rows = []
        for a in range(nt):
            row = [int(tr.t[a]), float(tr.purity_mean[a]), float(tr.purity_se[a]),
                   float(ent_m[a]), float(ent_s[a])]
            if K:
                row += [float(v) for v in mu2[a]]
            rows.append(row)
        _emit(_csv_text(header, rows), cfg["out"], written)
    else:
        raise DomainError(f"unknown format {cfg['format']!r}")
    return {}


def _gap_report(spec, n, coupling, mode, topk):
    kernel = kernel_for_gate(spec)
    if mode == "auto":
        mode = "full" if n <= AUTO_FULL_MAX_N else "lumped"
    if mode not in ("full", "lumped"):
        raise DomainError(f"unknown mode {mode!r}")
    op = chain_operator(kernel, n, coupling) if mode == "full" else lumped_chain(kernel, n, coupling)
    if op.dim <= 256:
        res = dense_spectrum(op)
    else:
        res = top_eigenvalues(op, k=min(int(topk), 12), tol=1e-12)
    d = gap(res)
    return {
        "n": n,
        "mode": mode,
        "dim": op.dim,
        "method": res.method,
        "eigenvalues": [[float(v.real), float(v.imag)] for v in res.eigenvalues[:topk]],
        "gap": d,
        "tau": 1.0 / d,
        "degeneracy_profile": [m for _, m in degeneracy_profile(res)],
        "unit_multiplicity": res.unit_multiplicity,
        "max_residual": res.max_residual,
    }


def cmd_gap(cfg: dict, written: list):
    _require(cfg, "gate")
    spec = parse_gate_spec(cfg["gate"])
    kernel = kernel_for_gate(spec)
    if cfg["dump_kernel"]:
        _emit(kernel_report_json(kernel) + "\n", cfg["out"], written)
        return {}
    _require(cfg, "n_range")
    coupling = normalize_coupling(cfg["coupling"])
    reports = [_gap_report(spec, n, coupling, cfg["mode"], int(cfg["topk"]))
               for n in _parse_range(str(cfg["n_range"]))]
    _emit(_json_text({"gate": spec.label(), "coupling": coupling, "results": reports}),
          cfg["out"], written)
    return {}


def cmd_evolve(cfg: dict, written: list):
    _require(cfg, "n", "gate")
    n = int(cfg["n"])
    if n > MAX_FULL_QUBITS:
        raise DomainError(f"evolve supports n <= {MAX_FULL_QUBITS}")
    spec = parse_gate_spec(cfg["gate"])
    kernel = kernel_for_gate(spec)
    coupling = normalize_coupling(cfg["coupling"])
    if cfg["mode"] == "lumped":
        # the product state is only class-uniform under a strongly lumpable kernel
        if not lump(kernel).lumpable:
            raise DomainError(f"lumped evolution is exact only for lumpable kernels; "
                              f"{spec.label()} needs --mode full")
        op = lumped_chain(kernel, n, coupling)
        p0 = initial_lumped_product_state(n)
    elif cfg["mode"] == "full":
        op = chain_operator(kernel, n, coupling)
        p0 = initial_dist_product_state(n)
    else:
        raise DomainError(f"unknown mode {cfg['mode']!r}")
    I = evolve(op, p0, int(cfg["steps"]))
    _emit(_csv_text(["t", "purity"], [(t, float(v)) for t, v in enumerate(I)]), cfg["out"],
          written)
    return {}


def cmd_sweep(cfg: dict, written: list):
    _require(cfg, "n")
    base = ProtocolConfig(n=int(cfg["n"]), gate="identity", coupling=cfg["coupling"],
                          steps=int(cfg["T"]), replicas=int(cfg["replicas"]),
                          seed=int(cfg["seed"]), threads=cfg["threads"])
    grid = sweep_canonical(base, float(cfg["grid_step"]))
    _emit(_csv_text(["ax", "ay", "az", "kappa", "kappa_se"], grid.rows()), cfg["out"], written)
    best = grid.argmax()
    summary = {"ax": best.params.ax, "ay": best.params.ay, "az": best.params.az,
               "kappa": best.kappa, "kappa_se": best.kappa_se}
    line = "argmax " + " ".join(f"{k}={_fmt(v)}" for k, v in summary.items())
    print(line, file=sys.stderr if cfg["out"] is None else sys.stdout)
    return {"argmax": summary}


def read_trace_csv(path) -> dict:
    """Columns of a ``simulate`` or ``evolve`` CSV as float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DomainError(f"{path}: no data rows")
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return {h: data[:, k] for k, h in enumerate(header)}


def _gap_points(path):
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return [(r["n"], r["gap"]) for r in json.loads(text)["results"]]
    cols = read_trace_csv(path)
    return list(zip(cols["n"], cols["gap"]))


def cmd_fit(cfg: dict, written: list):
    _require(cfg, "model", "input")
    model = cfg["model"]
    if model in ("gap-linear", "gap-log"):
        res = fit_gap_scaling(_gap_points(cfg["input"]), model.split("-")[1])
        _emit(_json_text(res.to_dict()), cfg["out"], written)
        return {}
    cols = read_trace_csv(cfg["input"])
    if "purity_mean" in cols:
        trace = (cols["t"], cols["purity_mean"], cols["purity_se"])
    elif "purity" in cols:
        trace = (cols["t"], cols["purity"])
    else:
        raise DomainError(f"{cfg['input']}: no purity column")
    if cfg["i_inf"] is not None:
        I_inf = float(cfg["i_inf"])
    else:
        _require(cfg, "n")
        I_inf = asymptotic_purity(int(cfg["n"]))
    window = _parse_window(cfg["window"])
    if model == "kappa":
        _require(cfg, "n")
        res = fit_kappa(trace, int(cfg["n"]), I_inf, window)
    elif model == "tau":
        res = fit_tau(trace, I_inf, window)
    elif model == "degenerate":
        _require(cfg, "tau")
        res = fit_degenerate_decay(trace, float(cfg["tau"]), I_inf, window)
    else:
        raise DomainError(f"unknown model {model!r}")
    out = res.to_dict()
    out["I_inf"] = I_inf
    _emit(_json_text(out), cfg["out"], written)
    return {}


def cmd_reference(cfg: dict, written: list):
    _require(cfg, "n")
    n = int(cfg["n"])
    obj = {
        "n": n,
        "purity_inf": asymptotic_purity(n),
        "entropy_inf": asymptotic_entropy(n),
        "mu2": random_schmidt_squares(n).tolist(),
    }
    _emit(_json_text(obj), cfg["out"], written)
    return {}


COMMANDS = {
    "simulate": cmd_simulate,
    "gap": cmd_gap,
    "evolve": cmd_evolve,
    "sweep": cmd_sweep,
    "fit": cmd_fit,
    "reference": cmd_reference,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="entgen", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    # every default is None so that unset flags can fall back to --config
    def common(sp):
        sp.add_argument("--config", help="TOML file with option values (flags win)")
        sp.add_argument("--out", help="output file (default: stdout, no manifest)")
        sp.add_argument("--threads", type=int, help="worker threads (default: all cores)")

    s = sub.add_parser("simulate", help="Monte Carlo protocol run")
    s.add_argument("--n", type=int)
    s.add_argument("--gate")
    s.add_argument("--coupling")
    s.add_argument("--steps", type=int)
    s.add_argument("--replicas", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--measures", help="comma list of purity,entropy,schmidt")
    s.add_argument("--record-every", type=int)
    s.add_argument("--first-stream", type=int)
    s.add_argument("--format", choices=["csv", "json"])
    common(s)

    g = sub.add_parser("gap", help="spectral gap of the Pauli-weight chain")
    g.add_argument("--gate")
    g.add_argument("--coupling")
    g.add_argument("--n-range", help="inclusive range a:b")
    g.add_argument("--mode", choices=["full", "lumped", "auto"])
    g.add_argument("--topk", type=int)
    g.add_argument("--dump-kernel", action="store_true", default=None)
    common(g)

    e = sub.add_parser("evolve", help="exact ensemble purity from the chain")
    e.add_argument("--n", type=int)
    e.add_argument("--gate")
    e.add_argument("--coupling")
    e.add_argument("--steps", type=int)
    e.add_argument("--mode", choices=["full", "lumped"])
    common(e)

    w = sub.add_parser("sweep", help="kappa over the canonical-parameter grid")
    w.add_argument("--n", type=int)
    w.add_argument("--coupling")
    w.add_argument("--grid-step", type=float)
    w.add_argument("--T", type=int)
    w.add_argument("--replicas", type=int)
    w.add_argument("--seed", type=int)
    common(w)

    f = sub.add_parser("fit", help="fit a trace or gap table")
    f.add_argument("--model", choices=["kappa", "tau", "degenerate", "gap-linear", "gap-log"])
    f.add_argument("--input")
    f.add_argument("--n", type=int)
    f.add_argument("--i-inf", type=float)
    f.add_argument("--tau", type=float)
    f.add_argument("--window", help="lo:hi in steps")
    common(f)

    r = sub.add_parser("reference", help="random-state reference values")
    r.add_argument("--n", type=int)
    common(r)

    rp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    rp.add_argument("manifest")
    rp.add_argument("--out", help="output file (default: the recorded name next to the manifest)")
    return p


def _load_config(path) -> dict:
    try:
        import tomllib as toml  # Python >= 3.11
    except ModuleNotFoundError:
        import tomli as toml
    try:
        with open(path, "rb") as fh:
            data = toml.load(fh)
    except (OSError, toml.TOMLDecodeError) as exc:
        raise DomainError(f"cannot read config {path}: {exc}") from None
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, ``--config`` values and explicit flags (in that precedence order)."""
    cfg = dict(DEFAULTS[command])
    if getattr(args, "config", None):
        file_cfg = _load_config(args.config)
        # a [command] table overrides top-level keys
        section = file_cfg.pop(command, {})
        for src in (file_cfg, section):
            for k, v in src.items():
                if isinstance(v, dict):
                    continue
                if k not in cfg:
                    raise DomainError(f"unknown option {k!r} for {command}")
                cfg[k] = v
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def run(command: str, cfg: dict) -> int:
    written: list = []
    t0 = time.perf_counter()
    extra = COMMANDS[command](cfg, written)
    write_manifest(command, cfg, written, time.perf_counter() - t0, extra)
    return 0


def _replay(args) -> int:
    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text())
        command, cfg = manifest["command"], dict(manifest["config"])
    except (OSError, ValueError, KeyError) as exc:
        raise DomainError(f"cannot read manifest {path}: {exc}") from None
    if command not in COMMANDS:
        raise DomainError(f"manifest names unknown command {command!r}")
    if args.out is not None:
        cfg["out"] = args.out
    elif cfg.get("out") is not None:
        cfg["out"] = str(path.with_name(Path(cfg["out"]).name))
    return run(command, cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            return _replay(args)
        return run(args.command, resolve_config(args.command, args))
    except EntgenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
