"""Command-line experiment drivers.

Subcommands:

* ``spectrum``: dense eigenvalues of the damped-plate block against the
  per-mode quadratic prediction, plus a damping sweep of the spectral ray
  angle.
* ``lincheck``: self-adjointness/positivity hypotheses, resolvent-decay
  probe, lower-order coupling bounds, and the generator norm equivalence.
* ``simulate``: nonlinear window-chained run with snapshots and diagnostics.
* ``contraction``: contraction-factor ladder over halved Picard windows.

Exit code 0 iff every hard assertion passed.
"""

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import diagnostics, fields as fd, linop, model, picard, snapshots
from ._kernels import smooth_clamp


def _outdir(cfg, override):
    path = Path(override) if override else Path(cfg["output.dir"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _constant_coefficient_setup(cfg):
    """Frozen constant coefficients at the configured reference value."""
    grid = cfgmod.grid_from_config(cfg)
    alpha, beta, eps = cfg["params.alpha"], cfg["params.beta"], cfg["params.epsilon"]
    eps0 = cfg["params.eps0"]
    c_star = cfg["init.amplitude"] if cfg["init.kind"] == "equilibrium" else 0.0
    ch = float(smooth_clamp(np.array([c_star]), 1.0 + eps0, 0.5 * eps0)[0])
    denom = alpha + beta * ch
    if denom <= 0:
        raise cfgmod.ConfigError("density is not positive at the reference state")
    rho0 = 1.0 / denom
    nu_c = 0.5 * (cfg["closures.nu1"] + cfg["closures.nu2"]) \
        + 0.5 * (cfg["closures.nu1"] - cfg["closures.nu2"]) * ch
    eta_c = 0.5 * (cfg["closures.eta1"] + cfg["closures.eta2"]) \
        + 0.5 * (cfg["closures.eta1"] - cfg["closures.eta2"]) * ch
    scalars = linop.OperatorScalars(alpha, beta, eps)
    coeff = linop.constant_coefficients(
        grid, scalars, nu_t=nu_c / rho0, eta_t=eta_c / rho0, rho0=rho0, c_star=c_star
    )
    return grid, scalars, coeff


def _measured_ray_angle(eigs):
    cplx = eigs[np.abs(eigs.imag) > 1e-10]
    if cplx.size == 0:
        return float("nan")
    return float(np.median(np.abs(np.angle(cplx))))


def cmd_spectrum(args):
    cfg = cfgmod.parse_config(args.config)
    out = _outdir(cfg, args.out)
    grid, scalars, coeff = _constant_coefficient_setup(cfg)

    eigs = linop.spectrum_numeric(coeff)
    pred, qs = linop.predicted_plate_spectrum(coeff)
    perm, abs_err = linop.match_spectra(eigs, pred)
    rel_err = abs_err / np.maximum(np.abs(pred), 1e-30)

    rows = []
    for q in sorted(set(np.round(qs[qs > 0], 12))):
        sel = np.where(np.isclose(qs, q))[0]
        plus = [j for j in sel if pred[j].imag >= 0]
        minus = [j for j in sel if pred[j].imag < 0] or plus
        jp, jm = plus[0], minus[0]
        rows.append((
            q,
            eigs[perm[jp]].real, eigs[perm[jp]].imag,
            eigs[perm[jm]].real, eigs[perm[jm]].imag,
            pred[jp].real, pred[jp].imag,
            float(abs_err[sel].max()),
        ))
    _write_csv(out / "spectrum.csv",
               ("mode_k2", "re_lambda_plus", "im_lambda_plus", "re_lambda_minus",
                "im_lambda_minus", "predicted_re", "predicted_im", "abs_err"),
               rows)

    max_rel = float(rel_err[qs > 0].max())
    stiff = scalars.epsilon / (scalars.alpha * scalars.beta**2)
    overdamped = coeff.a0_mean >= 2.0 * np.sqrt(stiff)
    print(f"spectrum: {len(eigs)} eigenvalues, max relative error {max_rel:.3e}"
          + (" [overdamped]" if overdamped else ""))

    sweep = [float(s) for s in args.a0_sweep.split(",")] if args.a0_sweep else []
    angle_rows = []
    angles = []
    for scale in sweep:
        cs = linop.constant_coefficients(
            grid, scalars, nu_t=scale * coeff.nu_t_mean,
            eta_t=scale * float(coeff.eta_t.mean()), rho0=float(coeff.rho0.mean()),
        )
        measured = _measured_ray_angle(linop.spectrum_numeric(cs))
        try:
            predicted = linop.ray_angle(scalars, cs.a0_mean)
        except ValueError:
            predicted = float("nan")
        angle_rows.append((scale, cs.a0_mean, measured, predicted))
        angles.append(measured)
        print(f"  damping scale {scale}: a0 = {cs.a0_mean:.4g}, "
              f"ray angle {measured:.6f} (predicted {predicted:.6f})")
    if angle_rows:
        _write_csv(out / "ray_angles.csv",
                   ("a0_scale", "a0", "measured_angle", "predicted_angle"),
                   angle_rows)

    ok = max_rel < 1e-8
    if angles:
        finite = [a for a in angles if np.isfinite(a)]
        decreasing = all(b <= a + 1e-12 for a, b in zip(finite, finite[1:]))
        in_sector = all(np.pi / 2 < a < np.pi for a in finite)
        ok = ok and decreasing and in_sector
        print(f"ray-angle trend: decreasing={decreasing} within (pi/2, pi)={in_sector}")
    return 0 if ok else 1


def cmd_lincheck(args):
    cfg = cfgmod.parse_config(args.config)
    out = _outdir(cfg, args.out)
    grid, scalars, coeff = _constant_coefficient_setup(cfg)
    rng = np.random.default_rng(cfg["seed"])
    failures = []
    rows = []

    if args.negate_a0:
        coeff = replace(coeff, a0=-coeff.a0)

    rep = linop.check_H1_H2(coeff)
    rho_pred = coeff.a0_mean * np.sqrt(
        scalars.alpha * scalars.beta / scalars.epsilon
    ) if scalars.beta > 0 else float("nan")
    rows.append(("constant", rep.symmetry_err_A, rep.symmetry_err_B,
                 rep.min_eig_A, rep.min_eig_B, rep.rho1, rep.rho2))
    print(f"constant coefficients: sym errs ({rep.symmetry_err_A:.2e}, "
          f"{rep.symmetry_err_B:.2e}), min eigs ({rep.min_eig_A:.3e}, "
          f"{rep.min_eig_B:.3e}), rho = [{rep.rho1:.8f}, {rep.rho2:.8f}]")
    if rep.symmetry_err_A > 1e-10 or rep.symmetry_err_B > 1e-10:
        failures.append("constant-coefficient symmetry")
    if not rep.positive:
        failures.append("constant-coefficient positivity")
    elif np.isfinite(rho_pred):
        if abs(rep.rho1 - rho_pred) > 1e-8 or abs(rep.rho2 - rho_pred) > 1e-8:
            failures.append("constant-coefficient rho identity")

    p = model.make_params(
        alpha=max(cfg["params.alpha"], abs(cfg["params.beta"]) * 1.3 + 0.1),
        beta=abs(cfg["params.beta"]), epsilon=cfg["params.epsilon"],
        eps0=cfg["params.eps0"],
        nu1=cfg["closures.nu1"], nu2=0.8 * cfg["closures.nu2"],
        eta1=cfg["closures.eta1"], eta2=1.2 * cfg["closures.eta2"],
    )
    for i in range(args.samples):
        c0 = fd.random_scalar(grid, rng, kmax=3, amplitude=0.3)
        cv = linop.freeze_coefficients(c0, p)
        r = linop.check_H1_H2(cv)
        rows.append((f"random_{i}", r.symmetry_err_A, r.symmetry_err_B,
                     r.min_eig_A, r.min_eig_B, r.rho1, r.rho2))
        if r.symmetry_err_A > 1e-10 or r.symmetry_err_B > 1e-10:
            failures.append(f"random {i} symmetry")
        if not (r.positive and 0 < r.rho1 <= r.rho2 < np.inf):
            failures.append(f"random {i} positivity")
    _write_csv(out / "h1h2.csv",
               ("case", "symmetry_err_A", "symmetry_err_B", "min_eig_A",
                "min_eig_B", "rho1", "rho2"), rows)

    probe = linop.resolvent_probe(coeff, angles=[0.0, np.pi / 4, -np.pi / 4],
                                  radii=list(np.logspace(-2, 2, 9)))
    real_axis = [r["product"] for r in probe
                 if r["angle"] == 0.0 and not r["flagged"]]
    print(f"resolvent probe along the positive real axis: "
          f"max |lambda| ||R(lambda)|| = {max(real_axis):.3f}")
    if max(real_axis) > 50.0:
        failures.append("resolvent growth on the real axis")
    _write_csv(out / "resolvent.csv", ("angle", "radius", "product", "flagged"),
               [(r["angle"], r["radius"], r["product"], r["flagged"]) for r in probe])

    cvar = linop.freeze_coefficients(
        fd.random_scalar(grid, rng, kmax=3, amplitude=0.3), p)
    bb = linop.b_bound_sample(cvar, rng, nsamples=50)
    print(f"coupling bounds: max ||B1 g||/||g||_H1 = {bb[:, 0].max():.4f}, "
          f"max ||B2 g||_Hm1/||g||_H1 = {bb[:, 1].max():.4f}, "
          f"max ||B1 g||/||g||_H3/4 = {bb[:, 2].max():.4f}")
    if not np.all(np.isfinite(bb)):
        failures.append("coupling bounds not finite")

    ratios = linop.norm_equivalence_sample(cvar, rng, nsamples=50)
    print(f"norm equivalence ratios in [{ratios.min():.4f}, {ratios.max():.4f}]")
    if not (np.all(np.isfinite(ratios)) and ratios.min() > 0
            and ratios.max() / ratios.min() < 1e3):
        failures.append("norm equivalence spread")

    for f in failures:
        print(f"FAILED: {f}")
    return 0 if not failures else 1


def cmd_simulate(args):
    cfg = cfgmod.parse_config(args.config)
    out = _outdir(cfg, args.out)
    grid = cfgmod.grid_from_config(cfg)
    p = cfgmod.params_from_config(cfg)
    pcfg = cfgmod.picard_from_config(cfg)
    initial = cfgmod.initial_state_from_config(cfg, grid)

    result = picard.simulate(initial, cfg["time.total"], pcfg, p)
    traj = result.trajectory

    stride = max(cfg["output.stride"], 1)
    index_rows = []
    for k in range(0, len(traj.times), stride):
        name = f"snapshot_{k:06d}.qins"
        snapshots.write_snapshot(out / name, traj.states[k])
        index_rows.append((k, float(traj.times[k]), name))
    if (len(traj.times) - 1) % stride:
        k = len(traj.times) - 1
        name = f"snapshot_{k:06d}.qins"
        snapshots.write_snapshot(out / name, traj.states[k])
        index_rows.append((k, float(traj.times[k]), name))
    _write_csv(out / "snapshots.csv", ("step", "time", "snapshot_file"), index_rows)

    _write_csv(out / "diagnostics.csv", diagnostics.DIAG_COLUMNS,
               diagnostics.trajectory_rows(traj, p))

    rep_rows = []
    for widx, rep in enumerate(result.window_reports):
        for it in rep.iterations:
            rep_rows.append((widx, it.iteration, it.distance, it.q_hat,
                             rep.residual_lt1, rep.residual_lt2))
    _write_csv(out / "picard_report.csv",
               ("window_index", "iteration", "xt_distance",
                "contraction_estimate", "residual_LT1", "residual_LT2"),
               rep_rows)

    drift = diagnostics.mass_drift(traj, p) if len(traj.states) > 1 else 0.0
    print(f"simulate: {'ok' if result.success else 'FAILED'}, "
          f"{len(traj.times) - 1} steps over {len(result.window_reports)} windows, "
          f"mass drift {drift:.3e}")
    if not result.success:
        print(result.message)
    return 0 if result.success else 1


def cmd_contraction(args):
    cfg = cfgmod.parse_config(args.config)
    out = _outdir(cfg, args.out)
    grid = cfgmod.grid_from_config(cfg)
    p = cfgmod.params_from_config(cfg)
    pcfg = cfgmod.picard_from_config(cfg)
    initial = cfgmod.initial_state_from_config(cfg, grid)

    dt = cfg["time.dt"]
    windows = []
    for j in range(args.levels):
        w = max(round(cfg["picard.window"] / 2**j / dt), 1) * dt
        if w not in windows:
            windows.append(w)
    rows = []
    qhats = []
    for w in windows:
        try:
            _, rep = picard.fixed_point_solve(initial, pcfg, p, window=w)
            rows.append((w, rep.n_iterations, rep.q_hat, True))
            qhats.append(rep.q_hat)
            print(f"window {w:g}: {rep.n_iterations} iterations, "
                  f"q_hat = {rep.q_hat:.5f}")
        except picard.PicardError as exc:
            rows.append((w, -1, float("nan"), False))
            print(f"window {w:g}: no convergence ({exc})")
    _write_csv(out / "contraction.csv",
               ("window_T", "iterations", "q_hat", "converged"), rows)
    finite = [q for q in qhats if np.isfinite(q)]
    monotone = all(b <= a + 1e-12 for a, b in zip(finite, finite[1:]))
    print(f"contraction trend non-increasing: {monotone}")
    return 0 if (monotone and len(finite) == len(windows)) else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="qins",
                                 description="spectral mixture-flow solver and checks")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="key=value config file")
        sp.add_argument("--out", default=None, help="output directory override")

    sp = sub.add_parser("spectrum", help="plate-block eigenvalues vs prediction")
    common(sp)
    sp.add_argument("--a0-sweep", default="1,0.5,0.25,0.125",
                    help="comma list of damping scales for the ray-angle sweep"
                         " (empty to skip)")
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("lincheck", help="linearized-operator hypothesis checks")
    common(sp)
    sp.add_argument("--samples", type=int, default=5,
                    help="number of random coefficient fields")
    sp.add_argument("--negate-a0", action="store_true",
                    help="negative control: flip the damping coefficient sign")
    sp.set_defaults(func=cmd_lincheck)

    sp = sub.add_parser("simulate", help="nonlinear window-chained run")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("contraction", help="Picard contraction ladder")
    common(sp)
    sp.add_argument("--levels", type=int, default=3,
                    help="number of window halvings to probe")
    sp.set_defaults(func=cmd_contraction)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
