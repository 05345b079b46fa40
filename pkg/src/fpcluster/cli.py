"""Command line interface.

Subcommands: generate, cluster, validate, tune, segment, report.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical/solver error.
Primary outputs are pure functions of the inputs, flags and ``--seed``;
wall-clock timings go to ``timings.log`` in the output directory only.
"""
import argparse
import csv
import glob
import io
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    add_uniform_noise,
    generate_mixture,
    image_to_dataset,
    labels_to_mask,
    load_dataset,
    mixture_spec_from_dict,
    read_image,
    save_dataset,
    standardize,
    write_pgm,
)
from .exceptions import DataError, DegenerateClusterError, SolverError
from .fpcm import SolverConfig, derive_seed, run_fcm, run_fpcm
from .tuning import (
    TABLE2_VALUES,
    ParamGrid,
    default_c_max,
    read_surface_csv,
    run_algorithm1,
    select_params,
)
from .validity import COMPARATORS, INDEX_DIRECTIONS, fp_curve, select_c

logger = logging.getLogger("fpcluster")

EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 2, 3, 4
REPORT_FORMAT = "fpcluster-run-report/1"


class UsageError(Exception):
    pass


def _write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)
    return path


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _clean(obj):
    """Replace NaN by None so reports stay strict JSON."""
    if isinstance(obj, float):
        return None if math.isnan(obj) else obj
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


class _Timer:
    def __init__(self):
        self.marks = []
        self._t0 = time.perf_counter()

    def mark(self, label):
        now = time.perf_counter()
        self.marks.append((label, now - self._t0))
        self._t0 = now

    def write(self, out_dir):
        lines = [f"{label}\t{secs:.3f}s" for label, secs in self.marks]
        _write_atomic(Path(out_dir) / "timings.log", "\n".join(lines) + "\n")


def _parse_floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_indices(text):
    names = [v.strip().upper() for v in text.split(",") if v.strip()]
    if names == ["ALL"]:
        return tuple(COMPARATORS)
    unknown = [n for n in names if n not in COMPARATORS and n != "FP"]
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown index name(s): {', '.join(unknown)}")
    return tuple(n for n in names if n != "FP")


def _common_parser():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--seed", type=int, default=0, help="base seed for every random choice")
    g.add_argument("--threads", type=int, default=1, help="parallel workers (results do not depend on it)")
    g.add_argument("--standardize", action="store_true", help="z-score every feature before clustering")
    g.add_argument("--out-dir", default="out", help="directory for output files")
    g.add_argument("--format", choices=("csv", "json"), default="json", help="partition output format")
    g.add_argument("--config", help="JSON file with defaults for any option")
    g.add_argument("--max-iter", type=int, default=300)
    g.add_argument("--tol", type=float, default=1e-6)
    g.add_argument("--init", choices=("kmeans++", "random-points"), default="kmeans++")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _grid_options(p):
    p.add_argument("--m-values", type=_parse_floats, help="comma-separated m grid")
    p.add_argument("--eta-values", type=_parse_floats, help="comma-separated eta grid")
    p.add_argument("--m-max", type=float, help="stepped grid: largest m")
    p.add_argument("--eta-max", type=float, help="stepped grid: largest eta")
    p.add_argument("--grid-start", type=float, default=1.1)
    p.add_argument("--grid-step", type=float, default=0.1)
    p.add_argument("--allow-partial", action="store_true",
                   help="exclude grid cells where the solver failed")


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="fpcluster", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="sample a synthetic dataset from a JSON spec")
    p.add_argument("spec", help="JSON mixture spec, optionally with a 'noise' block")
    p.add_argument("-o", "--output", help="CSV path (default: <out-dir>/<name>.csv)")

    p = sub.add_parser("cluster", parents=[common], help="run FPCM or FCM once")
    p.add_argument("dataset", help="CSV file or bundled dataset name")
    p.add_argument("-c", "--clusters", type=int, required=True)
    p.add_argument("--m", type=float, default=2.0)
    p.add_argument("--eta", type=float, default=2.0)
    p.add_argument("--algorithm", choices=("fpcm", "fcm"), default="fpcm")

    p = sub.add_parser("validate", parents=[common], help="validity curves over c = 2..c_max")
    p.add_argument("dataset")
    p.add_argument("--m", type=float, default=2.0)
    p.add_argument("--eta", type=float, default=2.0)
    p.add_argument("--c-max", type=int, help="default ceil(sqrt(N))")
    p.add_argument("--indices", type=_parse_indices, default=tuple(COMPARATORS),
                   help="comma-separated comparator names or 'all' (FP is always computed)")

    p = sub.add_parser("tune", parents=[common], help="select m, eta and c (grid search + FP curve)")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--c-max", type=int)
    p.add_argument("--indices", type=_parse_indices, default=tuple(COMPARATORS))
    p.add_argument("--surface-fixture", help="skip clustering; select (m, eta) from a saved surface CSV")
    _grid_options(p)

    p = sub.add_parser("segment", parents=[common], help="segment a grayscale image")
    p.add_argument("image")
    p.add_argument("--mask", help="output mask path (default: <out-dir>/mask.pgm)")
    p.add_argument("--include-coords", action="store_true")
    p.add_argument("--coord-weight", type=float, default=1.0)
    p.add_argument("--m", type=float, default=2.0)
    p.add_argument("--eta", type=float, default=2.0)
    p.add_argument("--tune", action="store_true", help="pick m and eta by grid search first")
    p.add_argument("--c-max", type=int, default=8)
    p.add_argument("--indices", type=_parse_indices, default=tuple(COMPARATORS))
    _grid_options(p)

    p = sub.add_parser("report", parents=[common], help="combine run reports into one table")
    p.add_argument("reports", nargs="+", help="report.json files or glob patterns")
    return parser


def _template(args):
    return SolverConfig(max_iter=args.max_iter, tol=args.tol, seed=args.seed, init=args.init)


def _load(args):
    data = load_dataset(args.dataset)
    if args.standardize:
        data = standardize(data)
    return data


def _grid(args, c_max):
    if args.m_max is not None or args.eta_max is not None:
        grid = ParamGrid.stepped(c_max, args.m_max or 5.0, args.eta_max or 5.0,
                                 start=args.grid_start, step=args.grid_step)
        if args.m_values or args.eta_values:
            grid = ParamGrid.with_c_max(c_max, args.m_values or grid.m_values,
                                        args.eta_values or grid.eta_values)
        return grid
    return ParamGrid.with_c_max(c_max, args.m_values or TABLE2_VALUES,
                                args.eta_values or TABLE2_VALUES)


def _selections_block(curve, data):
    sel = curve.selections()
    accepted = data.meta.get("accepted_c") or ([data.true_c] if data.true_c else [])
    return {
        "selected_c": sel,
        "true_c": data.true_c,
        "accepted_c": accepted,
        "correct": {k: (v in accepted) if accepted and v is not None else None
                    for k, v in sel.items()},
    }


def _base_report(args, data, command):
    return {
        "format": REPORT_FORMAT,
        "tool_version": __version__,
        "command": command,
        "dataset": data.descriptor(),
        "source": data.meta.get("source"),
        "seed": args.seed,
        "solver": {k: v for k, v in _template(args).to_dict().items() if k not in ("c", "m", "eta")},
        "seed_derivation": "run seed = SeedSequence([seed, c, round(m*1e9), round(eta*1e9)])",
    }


def _write_curve_files(out, curve):
    _write_atomic(out / "curve_long.csv", curve.to_long_csv())
    _write_atomic(out / "curve_summary.json", _dump(_clean(curve.selections())))
    _write_atomic(out / "fp_plot.csv", curve.plot_data_csv())


def cmd_generate(args, timer):
    try:
        spec_obj = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"{args.spec}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.spec}: invalid JSON ({exc})") from None
    spec = mixture_spec_from_dict(spec_obj)
    name = spec_obj.get("name") or Path(args.spec).stem
    data = generate_mixture(spec, name=name)
    noise = spec_obj.get("noise")
    if noise is not None:
        if not isinstance(noise, dict) or not isinstance(noise.get("count"), int):
            raise DataError("spec.noise.count: expected an integer")
        data = add_uniform_noise(data, noise["count"], bounds=noise.get("bounds"),
                                 seed=noise.get("seed", spec.seed))
    out_path = Path(args.output) if args.output else Path(args.out_dir) / f"{name}.csv"
    try:
        save_dataset(data, out_path)
    except OSError as exc:
        raise DataError(f"cannot write {out_path}: {exc.strerror}") from None
    timer.mark("generate")
    print(f"wrote {out_path}: n={data.n} dim={data.dim} true_c={data.true_c}")


def cmd_cluster(args, timer):
    data = _load(args)
    cfg = _template(args).with_(c=args.clusters, m=args.m, eta=args.eta)
    part = (run_fpcm if args.algorithm == "fpcm" else run_fcm)(data, cfg)
    timer.mark("cluster")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        part.save_json(out / "partition.json")
    else:
        part.save_csv(out / "partition")
    print(f"c={part.c} iterations={part.iterations} converged={part.converged} "
          f"objective={part.objective!r}")


def cmd_validate(args, timer):
    data = _load(args)
    c_max = args.c_max if args.c_max is not None else default_c_max(data.n)
    if c_max < 3:
        raise UsageError("--c-max must be at least 3 so that two candidates are compared")
    curve = fp_curve(data, c_max, args.m, args.eta, _template(args), indices=args.indices,
                     n_jobs=args.threads)
    timer.mark("fp_curve")
    out = Path(args.out_dir)
    _write_curve_files(out, curve)
    report = _base_report(args, data, "validate")
    report.update({"m": args.m, "eta": args.eta, "c_values": [int(c) for c in curve.c_values],
                   "fp_curve": curve.to_dict(), "crmse": None})
    report.update(_selections_block(curve, data))
    _write_atomic(out / "report.json", _dump(_clean(report)))
    _print_selection(curve)


def _print_selection(curve):
    sel = curve.selections()
    print("  ".join(f"{k}={v}" for k, v in sel.items()))


def cmd_tune(args, timer):
    out = Path(args.out_dir)
    if args.surface_fixture:
        surface = read_surface_csv(args.surface_fixture)
        m_star, eta_star = select_params(surface, allow_partial=args.allow_partial)
        summary = surface.summary(allow_partial=args.allow_partial)
        _write_atomic(out / "crmse_summary.json", _dump(_clean(summary)))
        print(f"m*={m_star} eta*={eta_star} crmse={summary['crmse_min']!r}")
        return
    if not args.dataset:
        raise UsageError("tune needs a dataset unless --surface-fixture is given")
    data = _load(args)
    c_max = args.c_max if args.c_max is not None else default_c_max(data.n)
    if c_max < 3:
        raise UsageError("--c-max must be at least 3 so that two candidates are compared")
    grid = _grid(args, c_max)
    res = run_algorithm1(data, grid, _template(args), n_jobs=args.threads,
                         allow_partial=args.allow_partial, indices=args.indices)
    timer.mark("algorithm1")
    _write_atomic(out / "crmse_surface.csv", res.surface.to_csv())
    _write_atomic(out / "crmse_summary.json",
                  _dump(_clean(res.surface.summary(allow_partial=args.allow_partial))))
    _write_curve_files(out, res.curve)
    report = _base_report(args, data, "tune")
    report.update({
        "m": res.m_star, "eta": res.eta_star, "c_star": res.c_star,
        "c_values": [int(c) for c in res.curve.c_values],
        "fp_curve": res.curve.to_dict(),
        "crmse": {"surface_file": "crmse_surface.csv",
                  **res.surface.summary(allow_partial=args.allow_partial)},
    })
    report.update(_selections_block(res.curve, data))
    _write_atomic(out / "report.json", _dump(_clean(report)))
    print(f"m*={res.m_star} eta*={res.eta_star} c*={res.c_star}")
    _print_selection(res.curve)


def cmd_segment(args, timer):
    img = read_image(args.image)
    if np.unique(img).size < 2:
        raise DegenerateClusterError(
            "image has a single gray level, so every cluster would collapse; "
            "nothing to segment (check the input file)")
    data = image_to_dataset(img, include_coords=args.include_coords,
                            coord_weight=args.coord_weight, name=Path(args.image).stem)
    if args.standardize:
        data = standardize(data)
    c_max = args.c_max
    if c_max < 3:
        raise UsageError("--c-max must be at least 3 so that two candidates are compared")
    # Clean images have few distinct gray levels; c beyond that cannot be initialised.
    distinct = np.unique(data.points, axis=0).shape[0]
    if c_max > distinct:
        logger.warning("capping --c-max at %d distinct feature rows", distinct)
        c_max = distinct
    template = _template(args)
    crmse = None
    m, eta = args.m, args.eta
    if args.tune:
        res = run_algorithm1(data, _grid(args, c_max), template, n_jobs=args.threads,
                             allow_partial=args.allow_partial, indices=args.indices)
        curve, m, eta = res.curve, res.m_star, res.eta_star
        crmse = res.surface.summary(allow_partial=args.allow_partial)
    else:
        curve = fp_curve(data, c_max, m, eta, template, indices=args.indices, n_jobs=args.threads)
    timer.mark("fp_curve")
    c_star = select_c(curve, "FP")
    part = curve.partitions[list(curve.c_values).index(c_star)]
    # darkest cluster -> gray 0, brightest -> 255
    order = np.argsort(part.V[:, 0], kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    labels = rank[part.labels]
    mask = labels_to_mask(labels, img.shape,
                          levels=np.round(np.linspace(0, 255, c_star)).astype(np.uint8))
    out = Path(args.out_dir)
    mask_path = Path(args.mask) if args.mask else out / "mask.pgm"
    write_pgm(mask_path, mask)
    _write_curve_files(out, curve)
    report = _base_report(args, data, "segment")
    report["dataset"]["image_shape"] = list(img.shape)
    report.update({"m": m, "eta": eta, "c_star": c_star,
                   "c_values": [int(c) for c in curve.c_values],
                   "fp_curve": curve.to_dict(), "crmse": crmse,
                   "mask_file": mask_path.name})
    report.update(_selections_block(curve, data))
    _write_atomic(out / "report.json", _dump(_clean(report)))
    print(f"c*={c_star} mask={mask_path}")


def _load_reports(patterns):
    paths = []
    for pat in patterns:
        hits = sorted(glob.glob(pat, recursive=True))
        paths.extend(hits if hits else ([pat] if Path(pat).is_file() else []))
    if not paths:
        raise DataError("no report files matched")
    reports = []
    for path in paths:
        try:
            rep = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: unreadable report ({exc})") from None
        if not isinstance(rep, dict) or rep.get("format") != REPORT_FORMAT:
            raise DataError(f"{path}: not a {REPORT_FORMAT} file")
        reports.append(rep)
    versions = {r.get("tool_version") for r in reports}
    if len(versions) > 1:
        raise DataError(f"reports come from different tool versions: {sorted(versions)}")
    return reports


def render_table(reports):
    """Return ``(csv_text, aligned_text)``; wrong selections are starred in the text view."""
    order = ["FP"] + [k for k in INDEX_DIRECTIONS if k != "FP"]
    present = [k for k in order if any(k in r.get("selected_c", {}) for r in reports)]
    rows = []
    for rep in reports:
        sel = rep.get("selected_c", {})
        accepted = rep.get("accepted_c") or []
        cells = []
        for k in present:
            v = sel.get(k)
            wrong = bool(accepted) and v is not None and v not in accepted
            cells.append((v, wrong))
        true_c = ",".join(str(a) for a in accepted) if accepted else ""
        rows.append((rep["dataset"]["name"], true_c, cells))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", "true_c"] + present + ["incorrect"])
    for name, true_c, cells in rows:
        bad = [k for k, (_, wrong) in zip(present, cells) if wrong]
        w.writerow([name, true_c] + ["" if v is None else v for v, _ in cells] + [";".join(bad)])
    header = ["dataset", "c*"] + present
    body = [[name, true_c] + [("-" if v is None else str(v)) + ("*" if wrong else "")
                              for v, wrong in cells] for name, true_c, cells in rows]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(wd) for cell, wd in zip(r, widths)).rstrip() for r in [header] + body]
    lines.append("(* = differs from the known number of clusters)")
    return buf.getvalue(), "\n".join(lines) + "\n"


def cmd_report(args, timer):
    reports = _load_reports(args.reports)
    csv_text, text = render_table(reports)
    out = Path(args.out_dir)
    _write_atomic(out / "comparison.csv", csv_text)
    _write_atomic(out / "comparison.txt", text)
    sys.stdout.write(text)


COMMANDS = {
    "generate": cmd_generate,
    "cluster": cmd_cluster,
    "validate": cmd_validate,
    "tune": cmd_tune,
    "segment": cmd_segment,
    "report": cmd_report,
}


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        cfg = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {known.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    for action in parser._subparsers._group_actions:
        for sub in action.choices.values():
            sub.set_defaults(**cfg)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fpcluster: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    timer = _Timer()
    try:
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        COMMANDS[args.command](args, timer)
    except UsageError as exc:
        print(f"fpcluster {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"fpcluster {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"fpcluster {args.command}: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if args.command != "generate" or args.output is None:
        try:
            timer.write(args.out_dir)
        except OSError:
            logger.warning("could not write timings.log")
    return 0


if __name__ == "__main__":
    sys.exit(main())
