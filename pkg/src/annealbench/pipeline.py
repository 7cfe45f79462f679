"""generate -> solve -> analyze pipeline behind the command-line harness.

Output directory layout::

    instances/index.csv, instances/<class>_n<N>_i<k>.ising
    runs.csv                      run log
    curves.csv, envelope.csv      per-cell success/TTS and lower envelopes
    postproc.csv, gaps.csv        best-batch factors and solver gaps
    fits.txt, report.md           regression fits and the summary
    plots/<solver>_<class>.svg
"""
import csv
import logging
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field

from .exceptions import DataError, InsufficientDataError, InvalidArgumentError, RefusalToFitError
from .instances import ProblemClass, load, save
from .metrics import (
    HARDWARE_GAP_READINGS,
    HARDWARE_SUCCESS_READINGS,
    best_batch,
    hardness_report,
    normalize_gap,
    postproc_speedup,
    resolve_ground_truth,
    success_curves,
    tts,
    write_curves,
)
from .scaling import (
    REFUSAL_MESSAGE,
    TTSSurface,
    detect_fake_speedup,
    evaluate_fit,
    fit_scaling_model,
    format_fit,
    lower_envelope,
    success_decay_table,
    write_envelopes,
)
from .solvers import Solver, make_solver, plan_instances, read_run_log, run_sweep, write_run_log

logger = logging.getLogger(__name__)


def _g(x, digits=4):
    """Stable short float formatting for reports."""
    if x is None:
        return "n/a"
    x = float(x)
    if math.isinf(x):
        return "inf"
    if math.isnan(x):
        return "n/a"
    return f"{x:.{digits}g}"


def _csv_num(x):
    if x is None:
        return ""
    x = float(x)
    if math.isinf(x):
        return "inf"
    if math.isnan(x):
        return ""
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


# --- generate ---------------------------------------------------------------


def instance_path(out, cls, n, k):
    return os.path.join(out, "instances", f"{ProblemClass(cls).value.lower()}_n{n}_i{k}.ising")


def cmd_generate(cfg, out):
    plan = cfg.to_plan()
    try:
        os.makedirs(os.path.join(out, "instances"), exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = []
    rows = []
    for (c, a, k), p in sorted(plan_instances(plan).items()):
        path = instance_path(out, plan.problem_classes[c], p.n, k)
        save(p, path)
        paths.append(path)
        truth = "brute-force" if p.n <= cfg.brute_force_cap else "deferred"
        rows.append([p.problem_class.value, p.n, k, p.instance_seed, os.path.basename(path), truth])
    with open(os.path.join(out, "instances", "index.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["problem_class", "n", "instance_index", "instance_seed", "file", "ground_truth"])
        w.writerows(rows)
    return paths


def load_plan_instances(cfg, out):
    """Read every instance the plan needs; all missing files are reported at once."""
    plan = cfg.to_plan()
    loaded, missing = {}, []
    for c, cls in enumerate(plan.problem_classes):
        for a, n in enumerate(plan.n_grid):
            for k in range(plan.instances_per_n):
                path = instance_path(out, cls, n, k)
                if not os.path.exists(path):
                    missing.append(path)
                    continue
                loaded[c, a, k] = load(path)
    if missing:
        raise DataError("missing instance file(s): " + ", ".join(missing) + " (run 'generate' first)")
    return plan, loaded


# --- solve ------------------------------------------------------------------


def cmd_solve(cfg, out, threads=None):
    plan, instances = load_plan_instances(cfg, out)
    log = run_sweep(plan, instances, threads=threads)
    by_key = {(p.problem_class, p.n, p.instance_seed): p for p in instances.values()}
    resolved = resolve_ground_truth(log, by_key, cfg.brute_force_cap, cfg.tolerance)
    path = os.path.join(out, "runs.csv")
    write_run_log(path, resolved, truncated=log.truncated, reason=log.reason)
    return path, log


# --- analyze ----------------------------------------------------------------


@dataclass
class PostprocRow:
    solver: Solver
    problem_class: ProblemClass
    n: int
    t_effort: float
    batches: int
    p_raw: float = None
    p_post: float = None
    speedup_factor: float = None
    note: str = ""


@dataclass
class GapRow:
    problem_class: ProblemClass
    n: int
    reference_solver: Solver
    postproc_solver: Solver
    time_basis: str
    t_reference: float = None
    tts_reference: float = None
    t_postproc: float = None
    p_raw: float = None
    p_post: float = None
    tts_raw: float = None
    tts_post: float = None
    speedup_factor: float = None
    measured_gap: float = None
    corrected_gap: float = None
    note: str = ""


@dataclass
class SliceAnalysis:
    solver: Solver
    problem_class: ProblemClass
    surface: TTSSurface
    envelope: object
    selection: object = None
    refusal: str = None
    fake_speedup: object = None
    decay_table: dict = field(default_factory=dict)
    evaluations: list = field(default_factory=list)


@dataclass
class AnalysisReport:
    slices: list
    postproc: list
    gaps: list
    hardness: list
    n_instances_exact: int
    n_instances_proxy: int
    time_basis: str
    batch_accounting: str
    p_target: float
    truncated: bool = False

    @property
    def refused(self):
        return [s for s in self.slices if s.refusal]


def _cell_times(records, cfg):
    """Per-run time for each (solver, class, n, t) cell in the configured basis."""
    groups = defaultdict(list)
    for r in records:
        groups[Solver(r.solver), ProblemClass(r.problem_class), r.n, r.t_effort].append(r)
    out = {}
    for (solver, cls, n, t), recs in groups.items():
        if cfg.time_basis == "ops":
            out[solver, cls, n, t] = make_solver(solver).ops_per_run(n, t)
        else:
            out[solver, cls, n, t] = sum(r.wall_ns for r in recs) / len(recs) / 1e9
    return out, groups


def _postproc_at(recs, per_run, cfg):
    """(p_raw, p_post, TTS_raw, TTS_post, factor, note) for one cell."""
    p_raw, p_post = best_batch(recs)
    n_batches = len({r.batch_id for r in recs})
    scale = n_batches if cfg.batch_accounting == "strict" else 1
    t_raw = tts(per_run, p_raw, cfg.p_target, cfg.integer_repetitions).tts
    t_post = tts(per_run * scale, p_post, cfg.p_target, cfg.integer_repetitions).tts
    note = ""
    if 0 < p_raw <= p_post < cfg.p_target and not cfg.integer_repetitions:
        factor = postproc_speedup(p_raw, p_post) / scale
    elif p_post == 0:
        factor, note = None, "no successes"
    else:
        factor = t_raw / t_post
        note = "factor from clamped TTS ratio"
    return p_raw, p_post, t_raw, t_post, factor, note


def _postproc_rows(groups, times, curves, cfg):
    rows = []
    if cfg.batches < 2:
        return rows
    by_slice = defaultdict(list)
    for pt in curves:
        by_slice[pt.solver, pt.problem_class].append(pt)
    for (solver, cls), pts in sorted(by_slice.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        n_max = max(p.n for p in pts)
        at_max = [p for p in pts if p.n == n_max]
        finite = [p for p in at_max if math.isfinite(p.tts.tts)]
        if not finite:
            rows.append(PostprocRow(solver, cls, n_max, None, cfg.batches, note="no successes at largest N"))
            continue
        best = min(finite, key=lambda p: (p.tts.tts, p.t_effort))
        recs = groups[solver, cls, n_max, best.t_effort]
        try:
            p_raw, p_post, _, _, factor, note = _postproc_at(recs, times[solver, cls, n_max, best.t_effort], cfg)
        except InvalidArgumentError as exc:
            rows.append(PostprocRow(solver, cls, n_max, best.t_effort, cfg.batches, note=str(exc)))
            continue
        rows.append(PostprocRow(solver, cls, n_max, best.t_effort, cfg.batches, p_raw, p_post, factor, note))
    return rows


def _gap_rows(groups, times, curves, cfg):
    rows = []
    solvers = list(cfg.solvers)
    if cfg.postproc_solver not in solvers or len(solvers) < 2:
        return rows
    pp = cfg.postproc_solver
    ref = next(s for s in solvers if s is not pp)
    for cls in cfg.problem_classes:
        finite = defaultdict(set)
        for pt in curves:
            if pt.problem_class is cls and math.isfinite(pt.tts.tts):
                finite[pt.solver].add(pt.n)
        common = finite[pp] & finite[ref]
        if not common:
            rows.append(GapRow(cls, None, ref, pp, cfg.time_basis, note="no common N with successes for both solvers"))
            continue
        n = max(common)
        ref_opts = []
        for pt in curves:
            if pt.solver is ref and pt.problem_class is cls and pt.n == n:
                v = tts(times[ref, cls, n, pt.t_effort], pt.estimate, cfg.p_target, cfg.integer_repetitions).tts
                ref_opts.append((v, pt.t_effort))
        tts_ref, t_ref = min(ref_opts)
        row = GapRow(cls, n, ref, pp, cfg.time_basis, t_ref, tts_ref)
        if cfg.batches < 2:
            row.note = "single batch: post-processing undefined"
            rows.append(row)
            continue
        best = None
        for pt in curves:
            if pt.solver is pp and pt.problem_class is cls and pt.n == n:
                try:
                    res = _postproc_at(groups[pp, cls, n, pt.t_effort], times[pp, cls, n, pt.t_effort], cfg)
                except InvalidArgumentError as exc:
                    row.note = str(exc)
                    continue
                if math.isfinite(res[3]) and (best is None or (res[3], pt.t_effort) < (best[1][3], best[0])):
                    best = (pt.t_effort, res)
        if best is None:
            rows.append(row)
            continue
        t_pp, (p_raw, p_post, t_raw, t_post, factor, note) = best
        row.t_postproc, row.p_raw, row.p_post, row.tts_raw, row.tts_post = t_pp, p_raw, p_post, t_raw, t_post
        row.measured_gap = tts_ref / t_post
        row.note = note
        if factor is not None and math.isfinite(t_raw):
            row.speedup_factor = factor
            row.corrected_gap = normalize_gap(row.measured_gap, factor)
        else:
            row.note = (note + "; " if note else "") + "raw success is zero: corrected gap undefined"
        rows.append(row)
    return rows


def _analyze_slice(solver, cls, pts, cfg):
    surface = TTSSurface.from_points(pts)
    try:
        envelope = lower_envelope(surface)
    except InsufficientDataError as exc:
        return SliceAnalysis(solver, cls, surface, None, refusal=f"{REFUSAL_MESSAGE}: {exc}")
    sa = SliceAnalysis(solver, cls, surface, envelope)
    sa.fake_speedup = detect_fake_speedup(surface, cfg.p_target)
    sa.decay_table = success_decay_table(surface)
    try:
        sa.selection = fit_scaling_model(envelope)
        lo, hi = sa.selection.best.n_range
        for n in (hi, 2 * hi):
            sa.evaluations.append((n,) + evaluate_fit(sa.selection.best, n))
    except RefusalToFitError as exc:
        sa.refusal = str(exc)
    return sa


def load_logs(paths):
    records, truncated = [], False
    for path in paths:
        log = read_run_log(path)
        records.extend(log)
        truncated |= log.truncated
    return records, truncated


def cmd_analyze(cfg, out, log_paths=None):
    log_paths = log_paths or [os.path.join(out, "runs.csv")]
    records, truncated = load_logs(log_paths)
    if not records:
        raise DataError("run log contains no records", log_paths[0])
    if any(r.success is None or r.ground_energy is None for r in records):
        try:
            _, loaded = load_plan_instances(cfg, out)
            instances = {(p.problem_class, p.n, p.instance_seed): p for p in loaded.values()}
        except DataError:
            instances = {}
        records = resolve_ground_truth(records, instances, cfg.brute_force_cap, cfg.tolerance)
    tol = cfg.tolerance if cfg.tolerance is not None else cfg.relative_tolerance
    curves = success_curves(records, cfg.p_target, cfg.bootstrap_resamples, cfg.master_seed, tol,
                            cfg.integer_repetitions)
    times, groups = _cell_times(records, cfg)

    by_slice = defaultdict(list)
    for pt in curves:
        by_slice[pt.solver, pt.problem_class].append(pt)
    slices = [_analyze_slice(s, c, pts, cfg) for (s, c), pts in
              sorted(by_slice.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value))]

    instances_seen = {}
    for r in records:
        instances_seen[r.problem_class, r.n, r.instance_seed] = bool(r.ground_exact)
    report = AnalysisReport(
        slices=slices,
        postproc=_postproc_rows(groups, times, curves, cfg),
        gaps=_gap_rows(groups, times, curves, cfg),
        hardness=hardness_report(records, cfg.p_target),
        n_instances_exact=sum(instances_seen.values()),
        n_instances_proxy=sum(not v for v in instances_seen.values()),
        time_basis=cfg.time_basis,
        batch_accounting=cfg.batch_accounting,
        p_target=cfg.p_target,
        truncated=truncated,
    )

    os.makedirs(out, exist_ok=True)
    write_curves(os.path.join(out, "curves.csv"), curves)
    write_envelopes(os.path.join(out, "envelope.csv"), [s.envelope for s in slices if s.envelope is not None])
    _write_postproc(os.path.join(out, "postproc.csv"), report.postproc)
    _write_gaps(os.path.join(out, "gaps.csv"), report.gaps)
    with open(os.path.join(out, "fits.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_fits(report))
    with open(os.path.join(out, "report.md"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_markdown(report))
    return report


POSTPROC_COLUMNS = ("solver", "problem_class", "n", "t_effort", "batches", "p_raw", "p_post", "speedup_factor", "note")
GAP_COLUMNS = (
    "problem_class", "n", "reference_solver", "postproc_solver", "time_basis", "t_reference", "tts_reference",
    "t_postproc", "p_raw", "p_post", "tts_raw", "tts_post", "speedup_factor", "measured_gap", "corrected_gap", "note",
)


def _write_postproc(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POSTPROC_COLUMNS)
        for r in rows:
            w.writerow([r.solver.value, r.problem_class.value, r.n, _csv_num(r.t_effort), r.batches,
                        _csv_num(r.p_raw), _csv_num(r.p_post), _csv_num(r.speedup_factor), r.note])


def _write_gaps(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GAP_COLUMNS)
        for r in rows:
            w.writerow([
                r.problem_class.value, _csv_num(r.n), r.reference_solver.value, r.postproc_solver.value, r.time_basis,
                _csv_num(r.t_reference), _csv_num(r.tts_reference), _csv_num(r.t_postproc), _csv_num(r.p_raw),
                _csv_num(r.p_post), _csv_num(r.tts_raw), _csv_num(r.tts_post), _csv_num(r.speedup_factor),
                _csv_num(r.measured_gap), _csv_num(r.corrected_gap), r.note,
            ])


# --- fits report ------------------------------------------------------------


def render_fits(report):
    lines = []
    for s in report.slices:
        lines.append(f"[{s.solver.value} {s.problem_class.value}]")
        if s.surface.proxy:
            lines.append("proxy = true")
        if s.refusal:
            lines.append("status = refused")
            lines.append(f"reason = {s.refusal}")
        else:
            best = s.selection.best
            lines.append("status = fitted")
            lines.append(f"family = {best.family.value}")
            for k, v in best.params.items():
                lines.append(f"param {k} = {v!r} +/- {best.stderr[k]!r}")
            lines.append(f"score = {best.score!r}")
            lines.append(f"residual_ss = {best.residual_ss!r}")
            lines.append(f"fitted_range = {_csv_num(best.n_range[0])} {_csv_num(best.n_range[1])}")
            lines.append(f"excluded_points = {s.selection.excluded}")
            for fam, cand in s.selection.candidates.items():
                lines.append(f"candidate {fam.value} score = {cand.score!r} ({format_fit(cand)})")
            for n, value, status in s.evaluations:
                lines.append(f"evaluate N={_csv_num(n)} -> {value!r} {status.value}")
        for t, entry in sorted(s.decay_table.items()):
            if isinstance(entry, str):
                lines.append(f"success_decay t={t}: not fitted ({entry})")
            else:
                n0 = entry.params["N0"]
                lo, hi = entry.ci95["N0"]
                lines.append(f"success_decay t={t}: N0 = {n0!r} +/- {entry.stderr['N0']!r} "
                             f"(95% CI {lo!r} .. {hi!r}; fitted N {_csv_num(entry.n_range[0])}.."
                             f"{_csv_num(entry.n_range[1])})")
        lines.append("")
    return "\n".join(lines)


def read_fits(path):
    """Parse fits.txt back into ``{(solver, class): dict}`` for plotting."""
    out, cur = {}, None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                solver, cls = line[1:-1].split()
                cur = out.setdefault((solver, cls), {"params": {}})
                continue
            if cur is None:
                raise DataError("entry outside a [solver class] block", path, lineno)
            key, _, value = line.partition(" = ")
            if key.startswith("param "):
                cur["params"][key[6:]] = float(value.split(" +/- ")[0])
            elif key == "fitted_range":
                lo, hi = value.split()
                cur["fitted_range"] = (float(lo), float(hi))
            elif key in ("status", "family", "reason"):
                cur[key] = value
    return out


# --- markdown report --------------------------------------------------------


def render_markdown(report):
    L = ["# Annealing benchmark report", ""]
    L.append(f"- success target p_target = {_g(report.p_target)}; TTS in curves.csv and envelope.csv is in "
             "effort units (sweeps for SA, steps for NMFA).")
    basis = ("measured wall-clock seconds (not byte-reproducible)" if report.time_basis == "wall"
             else "spin-coupling operation counts (deterministic)")
    L.append(f"- cross-solver time basis: {basis}.")
    L.append(f"- best-batch accounting: {report.batch_accounting}.")
    L.append(f"- instances with exact (brute-force) ground truth: {report.n_instances_exact}; "
             f"with best-found proxy: {report.n_instances_proxy}.")
    if report.n_instances_proxy:
        L.append("- WARNING: proxy ground truths are unproven optima; every estimate marked `proxy` may "
                 "overstate success.")
    if report.truncated:
        L.append("- WARNING: the run log is truncated; the sweep did not finish.")
    L.append("")

    L.append("## Lower envelopes")
    L.append("")
    for s in report.slices:
        tag = " (proxy)" if s.surface.proxy else ""
        L.append(f"### {s.solver.value} / {s.problem_class.value}{tag}")
        L.append("")
        if s.envelope is None:
            L.append(f"No envelope: {s.refusal}")
            L.append("")
            continue
        L.append("| N | min TTS | argmin t | flag |")
        L.append("|---|---|---|---|")
        for n in sorted(s.envelope.points):
            pt = s.envelope.points[n]
            L.append(f"| {n} | {_g(pt.tts_min)} | {_g(pt.argmin_t)} | {pt.boundary_flag.value} |")
        if s.envelope.unsolved:
            L.append("")
            L.append(f"No tested effort succeeded at N = {', '.join(map(str, s.envelope.unsolved))}.")
        L.append("")

    L.append("## Scaling fits")
    L.append("")
    for s in report.slices:
        head = f"- {s.solver.value} / {s.problem_class.value}: "
        if s.refusal:
            L.append(head + f"REFUSED ({s.refusal}).")
            continue
        best = s.selection.best
        L.append(head + f"{best.family.value} selected, {format_fit(best)}; fitted N range "
                 f"{_g(best.n_range[0])}..{_g(best.n_range[1])}; {s.selection.excluded} boundary point(s) excluded.")
        for n, value, status in s.evaluations:
            L.append(f"  - TTS(N={_g(n)}) = {_g(value)} [{status.value}]")
    L.append("")

    L.append("## Fake-speedup check")
    L.append("")
    for s in report.slices:
        if s.fake_speedup is None:
            continue
        fs = s.fake_speedup
        flagged = [f"N={n}: {'+'.join(sorted(f.value for f in fl))}" for n, fl in sorted(fs.flags.items()) if fl]
        verdict = "fake-speedup risk" if fs.verdict else "no fake-speedup signal"
        L.append(f"- {s.solver.value} / {s.problem_class.value}: {verdict}"
                 + (f" ({'; '.join(flagged)})" if flagged else ""))
        for fc in fs.flatness:
            if fc.suspiciously_flat:
                L.append(f"  - fixed t={_g(fc.t)} curve is suspiciously flat: ratio {_g(fc.ratio)} over "
                         f"N {_g(fc.n_lo)}..{_g(fc.n_hi)} vs envelope ratio {_g(fc.envelope_ratio)}; "
                         f"intercept {_g(fc.intercept)}")
    L.append("")

    L.append("## Best-batch post-processing")
    L.append("")
    if report.postproc:
        L.append("| solver | class | N | t | batches | p_raw | p_post | TTS factor |")
        L.append("|---|---|---|---|---|---|---|---|")
        for r in report.postproc:
            L.append(f"| {r.solver.value} | {r.problem_class.value} | {r.n} | {_g(r.t_effort)} | {r.batches} | "
                     f"{_g(r.p_raw)} | {_g(r.p_post)} | {_g(r.speedup_factor)} |" + (f" {r.note}" if r.note else ""))
    else:
        L.append("Single batch per cell: post-processing factors undefined.")
    L.append("")

    L.append("## Solver gaps (measured vs post-processing corrected)")
    L.append("")
    if report.gaps:
        L.append("| class | N | reference | post-processed | measured gap | factor | corrected gap | note |")
        L.append("|---|---|---|---|---|---|---|---|")
        for r in report.gaps:
            L.append(f"| {r.problem_class.value} | {_g(r.n)} | {r.reference_solver.value} | "
                     f"{r.postproc_solver.value} | {_g(r.measured_gap)} | {_g(r.speedup_factor)} | "
                     f"{_g(r.corrected_gap)} | {r.note} |")
        L.append("")
        L.append("Gap = TTS(reference, raw) / TTS(post-processed solver, best batch); corrected gap divides out "
                 "the best-batch factor. Source: gaps.csv.")
    else:
        L.append("Needs two solvers including the post-processed one.")
    L.append("")

    L.append("## Published hardware readings, re-normalized")
    L.append("")
    f = postproc_speedup(HARDWARE_SUCCESS_READINGS["p_raw"], HARDWARE_SUCCESS_READINGS["p_post"])
    L.append(f"- best-batch factor at p_raw = {HARDWARE_SUCCESS_READINGS['p_raw']}, p_post = "
             f"{HARDWARE_SUCCESS_READINGS['p_post']}: {f:.3f} (~{round(f)}x)")
    for cls, reading in HARDWARE_GAP_READINGS.items():
        g = reading["measured_gap"]
        L.append(f"- {cls.value} (N = {reading['n']}): measured {_g(g)}x -> {normalize_gap(g, f):.3g}x "
                 f"(factor {f:.3f}) / {normalize_gap(g, round(f)):.4g}x (factor {round(f)})")
    L.append("- hardware TTS curves themselves are not reproducible here (no data).")
    L.append("")

    L.append("## Hardness indicators")
    L.append("")
    for d in report.hardness:
        if d.solver is None:
            L.append(f"- {'; '.join(d.notes)}")
            continue
        easy = "n/a" if d.easy is None else ("yes" if d.easy else "no")
        bits = "n/a" if d.step_bits is None else f"{d.search_bits} : {d.step_bits:.2f}"
        L.append(f"- {d.solver.value} / {d.problem_class.value}: largest N {d.largest_n}; min t with p_hat >= 0.5: "
                 f"{_g(d.min_t_half)}; search bits : effort bits = {bits}; growth per decade of N: "
                 f"{_g(d.growth_per_decade)}; easy indicator: {easy}"
                 + (f" ({'; '.join(d.notes)})" if d.notes else ""))
    L.append("")
    return "\n".join(L)
