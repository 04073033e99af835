"""Command-line front end: one subcommand per module, JSON configs in, CSV/JSON/SVG out, plus a run manifest."""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import json
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .capacity import encoder_capacity, fano_sandwich
from .encoders import (
    DropoutEncoderSpec, GanModel, SoftmaxDecoderSpec, bernoulli_ic_bound, dropout_cost_scan, ff_clt_channel,
    gan_objective, rbm_ic_bound,
)
from .gap_bounds import _jsonable, misclass_sandwich, gap_bound
from .ib import IbConfig, ib_optimize
from .prob import (
    Channel, JointPmf, LabeledDataset, ModelAssumptions, channel_or_array, conditional_entropy, entropy,
    kl_divergence, mutual_information, pmf_or_array, push_forward,
)
from .rate_distortion import (
    RdConvergenceError, RdProblem, binary_hamming_problem, distortion_rate_inverse, rd_curve,
    rd_inverse_derivative,
)
from .trainer import (
    DataSplits, LabelCorruption, NetConfig, SweepBase, SynthConfig, TrainingDiverged, load_idx, sweep,
    synth_splits, train_mlp,
)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
MANIFEST = "manifest.json"
SVG_SALT = "infocomplex"


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- output helpers ------------------------------------------------------------

def _csv_to_rows(text: str) -> list:
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        out = {}
        for k, v in r.items():
            try:
                out[k] = float(v) if any(c in v for c in ".eEn") else int(v)
            except ValueError:
                out[k] = v
        rows.append(out)
    return rows


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n"


class Outputs:
    def __init__(self, out_dir: Path, fmt: str):
        self.dir = out_dir
        self.fmt = fmt
        self.written = []

    def text(self, name: str, text: str):
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / name).write_text(text, encoding="utf-8", newline="")
        self.written.append(name)

    def table(self, stem: str, csv_text: str):
        if self.fmt == "json":
            self.text(stem + ".json", _dump(_csv_to_rows(csv_text)))
        else:
            self.text(stem + ".csv", csv_text)

    def report(self, stem: str, obj):
        self.text(stem + ".json", _dump(obj))


# -- config readers ------------------------------------------------------------

def _need(cfg: dict, key: str):
    if key not in cfg:
        raise UsageError(f"config is missing '{key}'")
    return cfg[key]


def _dataset(d) -> LabeledDataset:
    if isinstance(d, dict) and "pairs" in d:
        return LabeledDataset.from_dict(d)
    raise UsageError("dataset must be {'x_alphabet', 'y_alphabet', 'pairs'}")


def _assumptions(cfg: dict):
    return ModelAssumptions(float(cfg["eta"])) if "eta" in cfg else None


def _delta(args, cfg) -> float:
    return float(args.delta if args.delta is not None else cfg.get("delta", 0.05))


# -- subcommands -----------------------------------------------------------------

def cmd_measures(args, cfg, out: Outputs):
    px = pmf_or_array(_need(cfg, "px"))
    rep = {"entropy": entropy(px)}
    if "qx" in cfg:
        rep["kl_divergence"] = kl_divergence(px, pmf_or_array(cfg["qx"]))
    if "channel" in cfg:
        ch = channel_or_array(cfg["channel"])
        pf = push_forward(px, ch)
        rep["mutual_information"] = mutual_information(px, ch)
        rep["conditional_entropy"] = conditional_entropy(px, ch)
        rep["output_entropy"] = entropy(pf.marginal)
        rep["output_marginal"] = pf.marginal.probs.tolist()
    out.report("measures", rep)


def _rd_problem(cfg: dict) -> RdProblem:
    if cfg.get("problem") == "binary_hamming":
        return binary_hamming_problem()
    return RdProblem(pmf_or_array(_need(cfg, "py")), channel_or_array(_need(cfg, "decoder")))


def cmd_rd(args, cfg, out: Outputs):
    points = args.points if args.points is not None else int(cfg.get("points", 65))
    curve = rd_curve(_rd_problem(cfg), num_points=points)
    out.table("rd_curve", curve.to_csv())
    queries = cfg.get("queries", [])
    if queries:
        rows = []
        for r in queries:
            row = {"rate": float(r), "distortion": distortion_rate_inverse(curve, float(r))}
            try:
                row["derivative"] = rd_inverse_derivative(curve, float(r))
            except ValueError:
                row["derivative"] = None
            rows.append(row)
        out.report("rd_inverse", rows)


def cmd_capacity(args, cfg, out: Outputs):
    enc = channel_or_array(_need(cfg, "encoder"))
    if "px_hat" in cfg:
        rep = fano_sandwich(enc, pmf_or_array(cfg["px_hat"]))
    else:
        rep = encoder_capacity(enc, cfg.get("sample_set", list(range(enc.shape[0]))))
    out.report("capacity", asdict(rep))


def cmd_gap_bound(args, cfg, out: Outputs):
    delta = _delta(args, cfg)
    if not 0.0 < delta < 1.0:
        raise UsageError("delta must lie in (0,1)")
    enc = channel_or_array(_need(cfg, "encoder"))
    data = _dataset(_need(cfg, "dataset"))
    dec = channel_or_array(cfg["decoder"]) if "decoder" in cfg else None
    true_joint = JointPmf.from_dict(cfg["true_joint"]) if "true_joint" in cfg else None
    rep = gap_bound(enc, dec, data, delta, _assumptions(cfg), true_joint)
    out.report("gap_bound", rep.to_dict())
    if cfg.get("misclass") and dec is not None:
        from .prob import empirical_joint
        py_hat = empirical_joint(data).marginal_y()
        curve = rd_curve(RdProblem(py_hat, dec), num_points=int(cfg.get("points", 65)))
        ms = misclass_sandwich(enc, dec, data, delta, curve, _assumptions(cfg))
        out.report("misclass_sandwich", asdict(ms))


def cmd_ib(args, cfg, out: Outputs):
    data = _dataset(_need(cfg, "dataset"))
    conf = IbConfig(lam=float(_need(cfg, "lam")), u_size=cfg.get("u_size"), init_seed=int(args.seed),
                    max_iter=int(cfg.get("max_iter", 500)), tol=float(cfg.get("tol", 1e-10)),
                    restarts=int(cfg.get("restarts", 8)))
    res = ib_optimize(data, conf)
    out.table("ib_trace", res.trace_csv())
    out.report("ib_result", {"value": res.value, "converged": res.converged, "seed": res.seed,
                             "restart_values": res.restart_values, "encoder": res.encoder.matrix.tolist()})


def cmd_dropout_ic(args, cfg, out: Outputs):
    spec = DropoutEncoderSpec.from_dict(_need(cfg, "spec"))
    inputs = np.asarray(_need(cfg, "inputs"), dtype=float)
    pmf = np.asarray(cfg.get("input_pmf", np.full(inputs.shape[0], 1.0 / inputs.shape[0])), dtype=float)
    rep = {"rbm_ic_bound": rbm_ic_bound(spec, inputs, pmf),
           "ff_clt_ic_bound": bernoulli_ic_bound(ff_clt_channel(spec, inputs), pmf)}
    if "decoder" in cfg:
        dec = SoftmaxDecoderSpec(np.asarray(cfg["decoder"]["a"], dtype=float))
        scan = dropout_cost_scan(spec, dec, inputs, np.asarray(_need(cfg, "joint"), dtype=float),
                                 float(cfg.get("lam", 1.0)))
        out.table("dropout_scan", scan.to_csv())
        rep.update(p_grid=scan.p_grid, p_star=scan.p_star, J_star=scan.J_star, interior=scan.interior,
                   condition_ok=scan.condition_ok)
    out.report("dropout_ic", rep)


def cmd_gan(args, cfg, out: Outputs):
    res = gan_objective(GanModel.from_dict(cfg), float(cfg.get("lam", 0.0)))
    out.report("gan", {"loss": res.loss, "ic_bound": res.ic_bound, "penalized": res.penalized})


def _net_and_data(args, cfg):
    net = NetConfig.from_dict(cfg.get("net", {}))
    data = SynthConfig(**cfg.get("data", {}))
    if args.seed is not None:
        net, data = replace(net, seed=int(args.seed)), replace(data, seed=int(args.seed))
    return net, data


def cmd_train(args, cfg, out: Outputs):
    net, data = _net_and_data(args, cfg)
    if "idx" in cfg:
        idx = cfg["idx"]
        full = load_idx(idx["images"], idx["labels"], idx.get("limit"))
        n = full.features.shape[0]
        order = np.random.default_rng(net.seed).permutation(n)
        n_val = int(idx.get("n_val", n // 10))
        n_test = int(idx.get("n_test", n // 5))
        splits = DataSplits(full.subset(order[n_val + n_test:]), full.subset(order[:n_val]) if n_val else None,
                            full.subset(order[n_val:n_val + n_test]))
    else:
        splits = synth_splits(data)
    corr = LabelCorruption(**cfg.get("corruption", {}))
    hist = train_mlp(net, splits, corr)
    out.table("history", hist.to_csv())
    out.report("summary", {"net": net.to_dict(), "data": asdict(data), **hist.summary()})


def cmd_sweep(args, cfg, out: Outputs):
    net, data = _net_and_data(args, cfg)
    base = SweepBase(net=net, data=data, phase_epochs=int(cfg.get("phase_epochs", 30)),
                     workers=int(cfg.get("workers", 1)))
    tab = sweep(_need(cfg, "axis"), _need(cfg, "values"), base, int(cfg.get("repeats", 1)))
    out.table("sweep", tab.to_csv())
    out.table("sweep_trace", tab.trace_csv())


def plot_svg(csv_text: str, x: str, ys: list, title: str = "") -> str:
    """Minimal deterministic line chart of CSV columns."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = list(csv.DictReader(io.StringIO(csv_text)))
    if not rows:
        raise UsageError("plot input has no data rows")
    for col in [x] + ys:
        if col not in rows[0]:
            raise UsageError(f"column '{col}' not in plot input")
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        xs = [float(r[x]) for r in rows]
        for col in ys:
            ax.plot(xs, [float(r[col]) for r in rows], marker="o", ms=3, label=col)
        ax.set_xlabel(x)
        if title:
            ax.set_title(title)
        ax.legend()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def cmd_plot(args, cfg, out: Outputs):
    src = args.input or cfg.get("input")
    x = args.x or cfg.get("x")
    ys = args.y or cfg.get("y")
    if not src or not x or not ys:
        raise UsageError("plot needs --input, --x and --y")
    ys = ys.split(",") if isinstance(ys, str) else list(ys)
    text = Path(src).read_text(encoding="utf-8")
    out.text("plot.svg", plot_svg(text, x, ys, cfg.get("title", "")))


COMMANDS = {
    "measures": cmd_measures, "rd": cmd_rd, "capacity": cmd_capacity, "gap-bound": cmd_gap_bound,
    "ib": cmd_ib, "dropout-ic": cmd_dropout_ic, "gan": cmd_gan, "train": cmd_train, "sweep": cmd_sweep,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="infocomplex", description="Information-complexity toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="cmd", parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--out", default="out", help="output directory")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--format", choices=("csv", "json"), default="csv")
        if name == "gap-bound":
            s.add_argument("--delta", type=float, default=None)
        if name == "rd":
            s.add_argument("--points", type=int, default=None)
        if name == "plot":
            s.add_argument("--input", help="CSV file to plot")
            s.add_argument("--x")
            s.add_argument("--y", help="comma-separated column names")
    r = sub.add_parser("replay", help="re-run a manifest into a new directory")
    r.add_argument("manifest")
    r.add_argument("--out", required=True)
    r.add_argument("--check", action="store_true", help="exit 2 unless outputs match the recorded digests")
    return p


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(cmd: str, args: argparse.Namespace, cfg: dict, config_path) -> Path:
    started = _now()
    out = Outputs(Path(args.out), args.format)
    COMMANDS[cmd](args, cfg, out)
    arg_record = {k: v for k, v in vars(args).items() if k not in ("cmd", "out")}
    manifest = {
        "cmd": cmd, "config": config_path, "seed": args.seed,
        "outputs": [str(out.dir / n) for n in out.written],
        "started": started, "finished": _now(), "version": __version__,
        "args": arg_record, "config_data": cfg,
        "digests": {n: _digest(out.dir / n) for n in out.written},
    }
    out.text(MANIFEST, json.dumps(manifest, indent=2) + "\n")
    return out.dir


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise UsageError(f"config is not valid JSON: {e}")
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def replay(manifest_path, out_dir, check: bool) -> int:
    m = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    args = argparse.Namespace(**m["args"], out=out_dir)
    dest = run(m["cmd"], args, m["config_data"], m["config"])
    if check:
        bad = [n for n, h in m["digests"].items() if _digest(dest / n) != h]
        if bad:
            print("replay mismatch: " + ", ".join(bad), file=sys.stderr)
            return EXIT_NUMERIC
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.cmd is None:
            raise UsageError("a subcommand is required: " + ", ".join(list(COMMANDS) + ["replay"]))
        if args.cmd == "replay":
            return replay(args.manifest, args.out, args.check)
        if args.seed is None and args.cmd in ("ib",):
            args.seed = 0
        run(args.cmd, args, _load_config(args.config), args.config)
        return EXIT_OK
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (RdConvergenceError, TrainingDiverged, FloatingPointError, NumericalFailure) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
