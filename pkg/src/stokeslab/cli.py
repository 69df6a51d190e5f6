"""Command-line orchestration: inner solves, stokes extraction, splitting
sweeps and verification against the predicted law.

Exit codes: 0 success, 1 usage/config error, 2 numerical failure,
3 partial success (some mu failed, run continued).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import gmpy2
from gmpy2 import mpc, mpfr

from .config import ConfigError, RunConfig
from .inner import (ContractionError, FourierOnPath, InnerDomainSpec, InnerSolveResult,
                    InnerSolverError, BranchPath, build_branch_path, solve_inner,
                    UNSTABLE, STABLE)
from .model import ModelError
from .numerics.quadrature import PanelPath
from .numerics.extrapolation import fit_log_slope
from .precision import PrecisionCtx, fmt, num_str
from .splitting import (SectionSpec, SplittingError, FoldDetected, find_nu0,
                        measure_splitting, precision_for_delta)
from .stokes import StokesData, stokes_pipeline
from .asymptotics import PredictedLaw, fit_exponential_law, FitError


def _ctx_from_config(cfg: RunConfig) -> PrecisionCtx:
    p = cfg.raw["precision"]
    return PrecisionCtx(int(p["mantissa_bits"]), p["abs_tol"], p["rel_tol"])


def _out_dir(cfg: RunConfig) -> str:
    d = cfg.get("output", "directory")
    os.makedirs(d, exist_ok=True)
    os.makedirs(os.path.join(d, "cache"), exist_ok=True)
    return d


# --------------------------------------------------------------------------
# inner-solution caching
# --------------------------------------------------------------------------

def _cache_paths(cfg: RunConfig, branch: str, angle=0):
    h = cfg.content_hash(("precision", "inner"))
    base = os.path.join(_out_dir(cfg), "cache", f"psi_{branch}_a{angle}_{h}")
    return base + ".dat", base + ".json"


def _save_inner(cfg: RunConfig, res: InnerSolveResult, angle=0):
    dat, meta = _cache_paths(cfg, res.branch, angle)
    with open(dat, "w") as fh:
        res.psi.dump(fh)
    bp = res.bpath
    with open(meta, "w") as fh:
        json.dump({
            "branch": res.branch,
            "ray_start_index": bp.ray_start_index,
            "tail_sign": bp.tail_sign,
            "rho_in": num_str(bp.rho_in),
            "y0": num_str(bp.y0),
            "ray_dir": [num_str(bp.ray_dir.real), num_str(bp.ray_dir.imag)],
            "corrections": [num_str(c) for c in res.corrections],
            "ratios": [num_str(r) for r in res.ratios],
            "mode_spill": num_str(res.mode_spill) if res.mode_spill is not None else None,
            "decay_slope": num_str(res.decay_slope) if res.decay_slope is not None else None,
            "remainder_slope": (num_str(res.remainder_slope)
                                if res.remainder_slope is not None else None),
        }, fh, sort_keys=True, indent=1)


def _load_inner(cfg: RunConfig, branch: str, ctx: PrecisionCtx, angle=0):
    dat, meta = _cache_paths(cfg, branch, angle)
    if not (os.path.exists(dat) and os.path.exists(meta)):
        return None
    with ctx.active():
        with open(dat) as fh:
            psi = FourierOnPath.load(fh, ctx)
        with open(meta) as fh:
            m = json.load(fh)
        bp = BranchPath(m["branch"], psi.path, int(m["ray_start_index"]),
                        int(m["tail_sign"]), mpfr(m["rho_in"]), mpfr(m["y0"]),
                        mpc(mpfr(m["ray_dir"][0]), mpfr(m["ray_dir"][1])))
        res = InnerSolveResult(psi, None, [mpfr(c) for c in m["corrections"]],
                               [mpfr(r) for r in m["ratios"]], branch, bp)
        res.mode_spill = mpfr(m["mode_spill"]) if m["mode_spill"] else None
        res.decay_slope = mpfr(m["decay_slope"]) if m["decay_slope"] else None
        res.remainder_slope = mpfr(m["remainder_slope"]) if m["remainder_slope"] else None
        return res


def _decay_report(res: InnerSolveResult, ctx: PrecisionCtx):
    with ctx.active():
        nodes = res.bpath.path.nodes
        nn = res.psi.node_norms()
        rho = res.bpath.rho_in
        xs, vs = [], []
        for i, s in enumerate(nodes):
            a = abs(s)
            if 2 * rho <= a <= 20 * rho and i < res.bpath.ray_start_index:
                xs.append(a)
                vs.append(nn[i])
        res.decay_slope, _ = fit_log_slope(xs, vs, ctx)
        if res.first_iterate is not None:
            rem = res.psi.axpy(-1, res.first_iterate)
            rn = rem.node_norms()
            vs2 = []
            for i, s in enumerate(nodes):
                a = abs(s)
                if 2 * rho <= a <= 20 * rho and i < res.bpath.ray_start_index:
                    vs2.append(rn[i])
            res.remainder_slope, _ = fit_log_slope(xs, vs2, ctx)


def solve_both_branches(cfg: RunConfig, ctx: PrecisionCtx, angle=0,
                        use_cache: bool = True, log=print):
    inner = cfg.raw["inner"]
    out = []
    for branch in (UNSTABLE, STABLE):
        res = _load_inner(cfg, branch, ctx, angle) if use_cache else None
        if res is None:
            t0 = time.time()
            dom = InnerDomainSpec(inner["beta0"], inner["rho_in"], branch)
            res = solve_inner(branch, cfg.spec, dom, int(inner["n_theta"]), ctx,
                              tol=inner["tol"], max_iter=int(inner["max_iter"]),
                              r_max_factor=float(inner["r_max_factor"]),
                              y_deep_factor=float(inner["y_deep_factor"]),
                              panel_order=int(inner["panel_order"]),
                              ray_angle_deg=angle, strip=inner["strip"])
            _decay_report(res, ctx)
            _save_inner(cfg, res, angle)
            log(f"  solved {branch} (angle {angle}): {len(res.corrections)} iterations "
                f"in {time.time() - t0:.1f}s")
        else:
            log(f"  loaded cached {branch} (angle {angle})")
        out.append(res)
    return out


def contraction_probe(spec, rho, n_theta, ctx, beta0="0.6", n_iter: int = 6):
    """Correction ratio after a few iterations on a reduced geometry; the
    first transient ratio is discarded."""
    from .inner import (build_branch_path, FourierOnPath, RightInverseG, apply_M,
                        ThetaGrid, diff_norm)
    from .model import InnerNonlinearity
    with ctx.active():
        bp = build_branch_path(UNSTABLE, rho, ctx, r_max_factor=100, y_deep_factor=5,
                               order_tail=14, order_ray=14)
        grid = ThetaGrid(n_theta, max(4 * n_theta, 16), ctx)
        fgh = InnerNonlinearity(spec, ctx).at(0, 0)
        ginv = RightInverseG(bp, spec.alpha_of(0, 0), spec.d, n_theta, ctx)
        psi = FourierOnPath(bp.path, n_theta, "0.4", ctx)
        corrs = []
        for _ in range(n_iter):
            new = ginv.apply(apply_M(psi, 0, 0, fgh, spec, grid, overflow_tol=None))
            corrs.append(diff_norm(new, psi))
            psi = new
        ratios = [corrs[i + 1] / corrs[i] for i in range(len(corrs) - 1) if corrs[i] > 0]
        return max(ratios[1:]) if len(ratios) > 1 else (ratios[0] if ratios else mpfr(0))


def find_rho_contract(spec, ctx, n_theta: int = 8, target=0.5, lo=0.5, hi=16.0,
                      step=0.25):
    """Smallest rho_in (to within one bisection step) with probe ratio < target."""
    with ctx.active():
        lo, hi = mpfr(lo), mpfr(hi)
        if contraction_probe(spec, hi, n_theta, ctx) >= mpfr(target):
            raise ContractionError("no contraction even at the largest probed rho_in")
        while hi - lo > mpfr(step):
            mid = (lo + hi) / 2
            try:
                r = contraction_probe(spec, mid, n_theta, ctx)
            except Exception:
                r = mpfr(2)
            if r < mpfr(target):
                hi = mid
            else:
                lo = mid
        return hi


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_inner(cfg: RunConfig, args) -> int:
    ctx = _ctx_from_config(cfg)
    out = _out_dir(cfg)
    try:
        res_u, res_s = solve_both_branches(cfg, ctx, use_cache=not args.no_cache)
    except ContractionError as e:
        try:
            sugg = find_rho_contract(cfg.spec, ctx, n_theta=int(cfg.get("inner", "n_theta")))
            extra = f"; suggested rho_in >= {float(sugg):.2f} (bisection)"
        except Exception:
            extra = ""
        print(f"numerical failure: {e}{extra}", file=sys.stderr)
        return 2
    except (InnerSolverError, ModelError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2
    lines = ["# stokes-splitting-lab v1", "# inner decay/contraction report"]
    zero = all(c == 0 for c in res_u.corrections[1:])
    for res in (res_u, res_s):
        lines.append(f"branch {res.branch}")
        lines.append(f"  iterations {len(res.corrections)}")
        lines.append(f"  final_correction {fmt(res.corrections[-1])}")
        if res.ratios:
            lines.append(f"  max_ratio {fmt(max(res.ratios))}")
        if res.mode_spill is not None:
            lines.append(f"  mode_spill {fmt(res.mode_spill)}")
        if res.decay_slope is not None:
            lines.append(f"  decay_slope {fmt(res.decay_slope, 6)}")
        if res.remainder_slope is not None:
            lines.append(f"  remainder_slope {fmt(res.remainder_slope, 6)}")
    if zero:
        lines.append("degenerate: psi_in == 0 (zero perturbation), one iteration")
    lines.append("config " + json.dumps(cfg.resolved(), sort_keys=True, default=str))
    path = os.path.join(out, "inner_report.txt")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines[:len(lines) - 1]))
    print(f"wrote {path}")
    return 0


def _run_stokes(cfg: RunConfig, ctx: PrecisionCtx, log=print) -> tuple[StokesData, dict]:
    res_u, res_s = solve_both_branches(cfg, ctx, log=log)
    st = cfg.raw["stokes"]
    depths = [float(x) for x in st["extraction_depths"].split()]
    l_list = tuple(int(x) for x in st["l_list"].split())
    l_plus = st["l_plus"].strip() or None
    rho = float(cfg.get("inner", "rho_in"))
    sd = stokes_pipeline(res_u, res_s, cfg.spec, ctx, l_plus=l_plus,
                         l_list=l_list, depth_start_factor=depths[0], rho_in=rho)
    variants = {}
    for dep in depths[1:]:
        sd2 = stokes_pipeline(res_u, res_s, cfg.spec, ctx, l_plus=l_plus,
                              l_list=(-1,), depth_start_factor=dep, rho_in=rho)
        variants[f"depth_{dep:g}"] = sd2
    return sd, variants


def cmd_stokes(cfg: RunConfig, args) -> int:
    ctx = _ctx_from_config(cfg)
    out = _out_dir(cfg)
    try:
        sd, variants = _run_stokes(cfg, ctx)
    except (ContractionError, InnerSolverError, ModelError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2
    lines = ["# stokes-splitting-lab v1", "# stokes report"]
    lines.append(f"a0 {fmt(sd.a0)}")
    lines.append(f"L0 {fmt(sd.L0)} indicator {fmt(sd.L0_indicator, 6)}")
    for l in sorted(sd.upsilon_in, reverse=True):
        lines.append(f"upsilon_in[{l}] {fmt(sd.upsilon_in[l])} "
                     f"indicator {fmt(sd.upsilon_ind[l], 6)}")
    lines.append(f"onesided_ratio {fmt(sd.onesided_ratio, 6)}")
    lines.append(f"abs_c_star {fmt(sd.c_star_abs)}")
    if sd.c_star is not None:
        lines.append(f"c1_star {fmt(sd.c_star.real)}")
        lines.append(f"c2_star {fmt(sd.c_star.imag)}")
    else:
        lines.append("phase to-be-fitted (L_plus not supplied)")
    lines.append(f"pde_residual {fmt(sd.pde_residual, 6)}")
    warn = False
    for name, sd2 in variants.items():
        rel = abs(sd2.upsilon_in[-1] - sd.upsilon_in[-1]) / abs(sd.upsilon_in[-1]) \
            if abs(sd.upsilon_in[-1]) > 0 else mpfr(0)
        lines.append(f"variant {name} upsilon_in[-1] {fmt(sd2.upsilon_in[-1])} "
                     f"rel_dev {fmt(rel, 6)}")
        if rel > mpfr("0.01"):
            warn = True
    if warn:
        lines.append("WARNING two-depth disagreement > 1%")
    lines.append("config " + json.dumps(cfg.resolved(), sort_keys=True, default=str))
    path = os.path.join(out, "stokes_report.txt")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines[:-1]))
    print(f"wrote {path}")
    return 0


def _entry_json(e) -> dict:
    return {
        "mu": num_str(e.mu), "nu": num_str(e.nu), "delta": num_str(e.delta),
        "v": num_str(e.v), "upsilon0_hat": num_str(e.upsilon0_hat),
        "amp1": num_str(e.amp1), "phase_d1": num_str(e.phase1),
        "err_bar": num_str(e.err_bar), "reality_defect": num_str(e.reality_defect),
        "n_sec": e.n_sec, "bits": e.bits, "seed_radius": num_str(e.seed_radius),
    }


def _write_entry_csv(out_dir: str, e) -> str:
    name = f"split_mu{float(e.mu):.6g}_nu{float(e.nu):.6g}.csv"
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        fh.write("# stokes-splitting-lab v1\n")
        fh.write("theta,r_u,r_s,D\n")
        for th, ru, rs, dv in zip(e.theta, e.r_u, e.r_s, e.d_vals):
            fh.write(f"{fmt(th)},{fmt(ru)},{fmt(rs)},{fmt(dv)}\n")
    return path


def _run_split(cfg: RunConfig, args, log=print):
    sp = cfg.raw["splitting"]
    mus = cfg.floats("splitting", "mu_list")
    vs = cfg.floats("splitting", "v_list")
    n_sec = int(sp["n_sec"])
    mode = sp["nu_mode"]
    jobs = args.jobs
    entries, failures = [], []
    for mu in mus:
        delta = mu ** 0.5
        bits = precision_for_delta(delta, int(sp["base_bits"]))
        ctx_mu = PrecisionCtx(bits, f"1e-{max(36, bits // 6)}", f"1e-{max(36, bits // 6)}")
        for v in vs:
            section = SectionSpec(v, n_sec)
            try:
                t0 = time.time()
                if mode == "nu0-search" and not cfg.spec.conservative:
                    nu0, entry, nev = find_nu0(cfg.spec, mu, section, ctx_mu,
                                               seed_radius=sp["seed_radius"], jobs=jobs)
                    entry_nu0 = nu0
                elif mode == "fixed":
                    entry = measure_splitting(cfg.spec, mu, float(sp["nu_fixed"]),
                                              section, ctx_mu,
                                              seed_radius=sp["seed_radius"], jobs=jobs)
                    entry_nu0 = None
                else:
                    entry = measure_splitting(cfg.spec, mu, 0, section, ctx_mu,
                                              seed_radius=sp["seed_radius"], jobs=jobs)
                    entry_nu0 = None
                entry.nu0 = entry_nu0
                entries.append(entry)
                log(f"  mu={mu:g} v={v:g}: amp1={float(entry.amp1):.4e} "
                    f"ups0={float(entry.upsilon0_hat):.3e} [{time.time() - t0:.1f}s]")
            except (FoldDetected, SplittingError, ModelError) as e:
                failures.append({"mu": mu, "v": v, "error": str(e)})
                log(f"  mu={mu:g} v={v:g}: FAILED ({e})")
    return entries, failures


def cmd_split(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    entries, failures = _run_split(cfg, args)
    summary = {"entries": [], "failures": failures,
               "config": cfg.resolved()}
    for e in entries:
        _write_entry_csv(out, e)
        d = _entry_json(e)
        if getattr(e, "nu0", None) is not None:
            d["nu0"] = num_str(e.nu0)
        summary["entries"].append(d)
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1, default=str)
    print(f"wrote {len(entries)} CSVs + summary.json to {out}")
    if failures and not entries:
        return 2
    return 3 if failures else 0


def cmd_verify(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    ctx = _ctx_from_config(cfg)
    mus = cfg.floats("splitting", "mu_list")
    if len(mus) < 4:
        print("config error: verify needs >= 4 mu values", file=sys.stderr)
        return 1
    checks = []

    def check(name, ok, detail):
        checks.append((name, bool(ok), detail))

    try:
        sd, _ = _run_stokes(cfg, ctx)
    except (ContractionError, InnerSolverError, ModelError) as e:
        print(f"numerical failure in stokes stage: {e}", file=sys.stderr)
        return 2
    entries, failures = _run_split(cfg, args)
    if not entries:
        print("numerical failure: all mu values failed", file=sys.stderr)
        return 2
    with ctx.active():
        law = PredictedLaw.from_stokes(cfg.spec, sd, ctx)
        degenerate = all(float(e.amp1) < 1e-25 for e in entries)
        rows = []
        if degenerate:
            ok0 = sd.c_star_abs < mpfr("1e-12")
            check("degenerate", ok0, "C*=0 consistent" if ok0 else "C* != 0 but D == 0")
            report = None
        else:
            try:
                report = fit_exponential_law(entries, law, cfg.spec, ctx)
            except FitError as e:
                print(f"fit failed: {e}", file=sys.stderr)
                return 2
            check("rate_within_10pct", report.rate_rel_err <= mpfr("0.10"),
                  f"rate_hat={fmt(report.rate_hat, 8)} ref={fmt(report.rate_ref, 8)} "
                  f"rel_err={fmt(report.rate_rel_err, 4)} threshold=0.10")
            check("power_within_20pct", report.power_rel_err <= mpfr("0.20"),
                  f"power_hat={fmt(report.power_hat, 8)} ref={fmt(report.power_ref, 8)} "
                  f"rel_err={fmt(report.power_rel_err, 4)} threshold=0.20")
            if cfg.spec.conservative:
                worst = max((abs(e.dhat[0]) / e.amp1 for e in entries
                             if float(e.delta) <= 0.151 and e.amp1 > 0), default=mpfr(0))
                check("conservative_average", worst <= mpfr("0.05"),
                      f"max |D0|/amp1 = {fmt(worst, 4)} threshold=0.05 (delta <= 0.15)")
            if report.ratio_band_A is not None:
                ok = report.ratio_band_A <= 5
                widths = report.band_widths
                shrink = all(widths[i + 1] <= widths[i] + mpfr("1e-30")
                             for i in range(max(0, len(widths) - 3), len(widths) - 1))
                check("amplitude_band", ok and shrink,
                      f"A={fmt(report.ratio_band_A, 4)} threshold=5; widths "
                      + " ".join(fmt(w, 3) for w in widths))
            if cfg.raw["splitting"]["nu_mode"] == "nu0-search":
                nus = [R_over_mu for R_over_mu in
                       [float(getattr(e, "nu0", 0) or 0) / float(e.mu) for e in entries]]
                if len(nus) >= 2 and all(n != 0 for n in nus):
                    spread = (max(nus) - min(nus)) / abs(sum(nus) / len(nus))
                    check("nu0_over_mu_stable", abs(spread) <= 0.4,
                          f"nu0/mu values {['%.4f' % n for n in nus]}")
            for e in entries:
                rows.append({"inv_delta": num_str(1 / e.delta),
                             "ln_amp1": num_str(gmpy2.log(e.amp1)) if e.amp1 > 0 else "-inf",
                             "amp1": num_str(e.amp1)})
        lines = ["# stokes-splitting-lab v1", "# verify report"]
        npass = 0
        for name, ok, detail in checks:
            lines.append(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
            npass += ok
        lines.append(f"{npass}/{len(checks)} checks passed; "
                     f"{len(failures)} mu-point failures")
        body = "\n".join(lines)
        print(body)
        fit_json = {
            "checks": [{"name": n, "pass": ok, "detail": d} for n, ok, d in checks],
            "entries": [_entry_json(e) for e in entries],
            "stokes": {"L0": num_str(sd.L0), "abs_c_star": num_str(sd.c_star_abs),
                       "upsilon_in_m1": num_str(sd.upsilon_in[-1])},
            "failures": failures,
            "config": cfg.resolved(),
        }
        if not degenerate and report is not None:
            fit_json["fit"] = {
                "rate_hat": num_str(report.rate_hat), "power_hat": num_str(report.power_hat),
                "rate_ref": num_str(report.rate_ref), "power_ref": num_str(report.power_ref),
                "phase_hat": num_str(report.phase_hat) if report.phase_hat is not None else None,
                "band_A": num_str(report.ratio_band_A) if report.ratio_band_A is not None else None,
            }
            with open(os.path.join(out, "fit_points.csv"), "w") as fh:
                fh.write("# stokes-splitting-lab v1\n")
                fh.write("inv_delta,ln_amp_phys,predicted_ln,residual\n")
                for r in report.rows:
                    if "ratio" in r:
                        pred = r["ln_amp_phys"] - gmpy2.log(r["ratio"])
                        resid = gmpy2.log(r["ratio"])
                    else:
                        pred, resid = r["ln_amp_phys"], mpfr(0)
                    fh.write(f"{fmt(r['inv_delta'])},{fmt(r['ln_amp_phys'])},"
                             f"{fmt(pred)},{fmt(resid)}\n")
        with open(os.path.join(out, "fit_report.json"), "w") as fh:
            json.dump(fit_json, fh, sort_keys=True, indent=1, default=str)
        with open(os.path.join(out, "verify.txt"), "w") as fh:
            fh.write(body + "\nconfig "
                     + json.dumps(cfg.resolved(), sort_keys=True, default=str) + "\n")
        for e in entries:
            _write_entry_csv(out, e)
    if failures:
        return 3
    if any(not ok for _, ok, _ in checks):
        return 2
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    """Reference page: all defaults materialized plus the resolved config."""
    from .config import DEFAULTS
    print("# stokes-splitting-lab v1 -- configuration reference")
    for sec, vals in sorted(DEFAULTS.items()):
        print(f"[{sec}]")
        for k, v in sorted(vals.items()):
            print(f"  {k} = {v}")
    print("\n# resolved configuration for this run")
    print(json.dumps(cfg.resolved(), sort_keys=True, indent=1, default=str))
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="stokeslab",
                                 description="Hopf-zero manifold-splitting laboratory")
    ap.add_argument("command", choices=["inner", "stokes", "split", "verify", "report"])
    ap.add_argument("--config", required=True, help="run configuration file")
    ap.add_argument("--precision", type=int, default=None, help="override mantissa bits")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes")
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--set", action="append", default=[], dest="overrides",
                    metavar="SEC.KEY=VALUE", help="config override")
    ap.add_argument("--no-cache", action="store_true", help="ignore cached inner solutions")
    args = ap.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, args.overrides, args.precision, args.out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    try:
        return {"inner": cmd_inner, "stokes": cmd_stokes, "split": cmd_split,
                "verify": cmd_verify, "report": cmd_report}[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
