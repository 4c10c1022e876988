//! Batch front-end. One command per experiment, one JSON config, deterministic
//! CSV/JSON artifacts in the output directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Parser;
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde_json::json;

use kglab::config::RunConfig;
use kglab::error::{Error, Result};
use kglab::evolution::{self, fixtures, EvolveOpts};
use kglab::geometry::{self, RWMap, SpacetimeParams};
use kglab::kg::{energy_norms, resolvent, KGSystem, KOp, State};
use kglab::modeops::{Cutoffs, OperatorBundle};
use kglab::report::{write_json, Csv};
use kglab::scattering::{
    self, inout_split, inverse_wave_operator, separable_wave_operator, wave_operator,
    ProfileDatum, Side, WaveOpReport, WaveOpts,
};
use kglab::spectral::{eig_hamiltonian, glued_resolvent_check, riesz_projector,
    weighted_resolvent_scan};
use kglab::linalg;

#[derive(Parser)]
#[command(name = "kglab", about = "Klein-Gordon laboratory on De Sitter Kerr")]
struct Cli {
    /// geometry | assemble | spectrum | resonance-scan | evolve |
    /// superradiance | scatter | selftest
    command: String,
    /// JSON configuration; defaults apply when absent.
    #[arg(long)]
    config: Option<String>,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = "out")]
    out: String,
    /// Worker cap for the linear-algebra backend (default 1, deterministic).
    #[arg(long)]
    threads: Option<usize>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn error_name(e: &Error) -> &'static str {
    match e {
        Error::NoPositivityInterval => "NoPositivityInterval",
        Error::QuadratureFailure(_) => "QuadratureFailure",
        Error::NoErgoregion => "NoErgoregion",
        Error::DimensionMismatch { .. } => "DimensionMismatch",
        Error::PencilSingular(_) => "PencilSingular",
        Error::AssemblyDomainError => "AssemblyDomainError",
        Error::SupportOverflow => "SupportOverflow",
        Error::PositivityViolation { .. } => "PositivityViolation",
        Error::BudgetExceeded(_, _) => "BudgetExceeded",
        Error::SolverFailure(_) => "SolverFailure",
        Error::IllConditioned(_) => "IllConditioned",
        Error::SpectrumOnContour => "SpectrumOnContour",
        Error::DefectiveCluster(_) => "DefectiveCluster",
        Error::NotInL => "NotInL",
        Error::NotInFin => "NotInFin",
        Error::CausalWindowExceeded => "CausalWindowExceeded",
        Error::ConfigInvalid(_) => "ConfigInvalid",
        Error::Io(_) => "Io",
        Error::Json(_) => "Json",
    }
}

fn main() {
    let cli = Cli::parse();
    let threads = cli.threads.unwrap_or(1).max(1).to_string();
    // serialized BLAS keeps runs byte-reproducible at the default
    std::env::set_var("OPENBLAS_NUM_THREADS", &threads);
    std::env::set_var("OMP_NUM_THREADS", &threads);
    let out = PathBuf::from(&cli.out);

    let mut cfg = match cli.config.as_deref().map(RunConfig::load).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => {
            report_error(&out, &e);
            eprintln!("config error: {e}");
            std::process::exit(2);
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Err(e) = cfg.validate() {
        report_error(&out, &e);
        eprintln!("config error: {e}");
        std::process::exit(2);
    }

    match run(&cli.command, &cfg, &out) {
        Ok(()) => {}
        Err(e @ Error::ConfigInvalid(_)) => {
            report_error(&out, &e);
            eprintln!("config error: {e}");
            std::process::exit(2);
        }
        Err(e) => {
            report_error(&out, &e);
            eprintln!("numerical failure: {e}");
            std::process::exit(3);
        }
    }
}

fn report_error(out: &Path, e: &Error) {
    let v = json!({ "error": error_name(e), "detail": e.to_string() });
    let _ = write_json(out, "error.json", &v);
}

fn run(command: &str, cfg: &RunConfig, out: &Path) -> Result<()> {
    // the resolved config makes every run self-describing
    write_json(out, "config.json", &serde_json::to_value(cfg)?)?;
    match command {
        "geometry" => cmd_geometry(cfg, out),
        "assemble" => cmd_assemble(cfg, out),
        "spectrum" => cmd_spectrum(cfg, out),
        "resonance-scan" => cmd_resonance_scan(cfg, out),
        "evolve" => cmd_evolve(cfg, out),
        "superradiance" => cmd_superradiance(cfg, out),
        "scatter" => cmd_scatter(cfg, out),
        "selftest" => cmd_selftest(cfg, out),
        other => Err(Error::ConfigInvalid(format!("unknown command `{other}`"))),
    }
}

fn params_of(cfg: &RunConfig) -> Result<SpacetimeParams> {
    SpacetimeParams::new(cfg.lambda, cfg.mass, cfg.a, cfg.field_mass)
}

fn bundle_of(cfg: &RunConfig) -> Result<OperatorBundle> {
    let params = params_of(cfg)?;
    OperatorBundle::build(&params, cfg.n, cfg.nx, cfg.ntheta, cfg.x_span, cfg.q_count)
}

fn side_of(cfg: &RunConfig) -> Side {
    if cfg.side == "left" {
        Side::Left
    } else {
        Side::Right
    }
}

/// Smooth exponentially decaying weight w^{−ε} = cosh(x)^{−ε}, lifted over θ.
fn weight_2d(bundle: &OperatorBundle, eps: f64) -> Array1<f64> {
    let vals: Vec<f64> = bundle
        .grid
        .x_nodes
        .iter()
        .map(|&x| x.cosh().powf(-eps))
        .collect();
    Array1::from_vec(Cutoffs::lift(&vals, bundle.grid.ntheta))
}

fn lifted_coords(bundle: &OperatorBundle) -> Vec<f64> {
    Cutoffs::lift(&bundle.grid.x_nodes, bundle.grid.ntheta)
}

fn fixture_of(cfg: &RunConfig, bundle: &OperatorBundle) -> Result<State> {
    match cfg.fixture.as_str() {
        "gaussian" => Ok(fixtures::gaussian_2d(
            &bundle.grid,
            cfg.fixture_center,
            cfg.fixture_width,
            cfg.fixture_omega.unwrap_or(0.0),
        )),
        "ergo-bump" => fixtures::ergo_bump(bundle, cfg.fixture_width, cfg.fixture_omega),
        "ingoing-packet" => Ok(fixtures::ingoing_packet(
            &bundle.grid,
            cfg.fixture_center,
            cfg.fixture_width,
            cfg.fixture_omega.unwrap_or(0.2),
        )),
        "random-window" => Ok(fixtures::random_window(
            &bundle.grid,
            cfg.fixture_width,
            cfg.seed,
        )),
        other => Err(Error::ConfigInvalid(format!("unknown fixture `{other}`"))),
    }
}

fn monitored_ells(cfg: &RunConfig, ell: f64) -> Vec<f64> {
    cfg.ell_values.clone().unwrap_or_else(|| {
        if ell == 0.0 {
            vec![0.0]
        } else {
            vec![0.0, ell]
        }
    })
}

// ---------------------------------------------------------------- commands

fn cmd_geometry(cfg: &RunConfig, out: &Path) -> Result<()> {
    let params = params_of(cfg)?;
    let hor = geometry::find_horizons(&params)?;
    let ell = kglab::modeops::asymptotic_rotation(&hor, cfg.n);
    let ergo = match geometry::ergo_bounds(&params, &hor, std::f64::consts::PI / 2.0) {
        Ok((r1, r2)) => json!([r1, r2]),
        Err(Error::NoErgoregion) => json!(null),
        Err(e) => return Err(e),
    };
    let res_minus = geometry::delta_r(&params, hor.r_minus).abs();
    let res_plus = geometry::delta_r(&params, hor.r_plus).abs();

    let map = RWMap::build(&params, &hor, 257, cfg.x_span)?;
    let mut csv = Csv::new(&["x", "r"]);
    for (x, r) in map.x_nodes.iter().zip(&map.r_nodes) {
        csv.row(&[*x, *r]);
    }
    csv.write(out, "rw_map.csv")?;

    write_json(
        out,
        "geometry.json",
        &json!({
            "rMinus": hor.r_minus,
            "rPlus": hor.r_plus,
            "rMax": hor.r_max,
            "omegaMinus": hor.omega_minus,
            "omegaPlus": hor.omega_plus,
            "kappaMinus": hor.kappa_minus,
            "kappaPlus": hor.kappa_plus,
            "ell": ell,
            "ergoEquatorBounds": ergo,
            "horizonResiduals": [res_minus, res_plus],
        }),
    )
}

fn cmd_assemble(cfg: &RunConfig, out: &Path) -> Result<()> {
    let bundle = bundle_of(cfg)?;
    let grid = &bundle.grid;
    let full = &bundle.full;
    let h0_floor = bundle.h0_floor();
    let h0_asym = linalg::asymmetry(&full.h0, &full.mass);
    // asymptotic values of the rotation coefficient at the outermost nodes
    let (k_left, k_right) = match &full.k {
        KOp::Diag(d) => {
            let mut l = 0.0_f64;
            let mut r = 0.0_f64;
            for j in 0..grid.ntheta {
                l = l.max((d[grid.idx(0, j)] - bundle.ell).abs());
                r = r.max(d[grid.idx(grid.nx - 1, j)].abs());
            }
            (l, r)
        }
        KOp::Dense(_) => (f64::NAN, f64::NAN),
    };
    let eigs: Vec<f64> = bundle.angular_eigs.iter().copied().collect();
    let ordered = eigs.windows(2).all(|w| w[1] >= w[0]);
    let checks = json!({
        "h0Positive": h0_floor >= -1e-8,
        "h0Symmetric": h0_asym <= 1e-10,
        "kMatchesLeftRotation": k_left <= 1e-3,
        "kVanishesRight": k_right <= 1e-3,
        "angularEigsOrdered": ordered,
    });
    write_json(
        out,
        "assemble.json",
        &json!({
            "dim": grid.dim(),
            "ell": bundle.ell,
            "h0Floor": h0_floor,
            "h0Asymmetry": h0_asym,
            "kNorm": full.k_norm,
            "kLeftDefect": k_left,
            "kRightDefect": k_right,
            "angularEigs": eigs,
            "hypothesisChecks": checks,
        }),
    )
}

fn cmd_spectrum(cfg: &RunConfig, out: &Path) -> Result<()> {
    let bundle = bundle_of(cfg)?;
    let report = eig_hamiltonian(&bundle.full)?;
    let mut pairs: Vec<(f64, f64, f64)> = report
        .eigenvalues
        .iter()
        .map(|p| (p.z.re, p.z.im, p.residual))
        .collect();
    pairs.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
    let mut csv = Csv::new(&["re", "im", "residual"]);
    for (re, im, res) in &pairs {
        csv.row(&[*re, *im, *res]);
    }
    csv.write(out, "spectrum.csv")?;
    let max_im = pairs.iter().fold(0.0_f64, |m, p| m.max(p.1.abs()));
    write_json(
        out,
        "spectrum.json",
        &json!({
            "dim": 2 * bundle.grid.dim(),
            "complexCount": report.complex_count,
            "maxAbsIm": max_im,
            "conjugationPairingError": report.conjugation_pairing_error,
            "pencilCrossCheck": report.pencil_cross_check,
        }),
    )
}

fn cmd_resonance_scan(cfg: &RunConfig, out: &Path) -> Result<()> {
    let bundle = bundle_of(cfg)?;
    let weight = weight_2d(&bundle, cfg.weight_eps);
    let mut grid = Vec::new();
    for i in 0..cfg.lambda_count {
        let l = cfg.lambda_min
            + (cfg.lambda_max - cfg.lambda_min) * i as f64 / (cfg.lambda_count - 1) as f64;
        if l.abs() > 1e-12 {
            grid.push(l);
        }
    }
    let scan = weighted_resolvent_scan(&bundle.full, &weight, &grid, &cfg.delta_list, cfg.seed)?;
    let headers: Vec<String> = std::iter::once("lambda".to_string())
        .chain(cfg.delta_list.iter().map(|d| format!("delta={d}")))
        .collect();
    let refs: Vec<&str> = headers.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&refs);
    for (i, &l) in scan.lambda_grid.iter().enumerate() {
        let mut row = vec![l];
        for j in 0..cfg.delta_list.len() {
            row.push(scan.norm_table[[i, j]]);
        }
        csv.row(&row);
    }
    csv.write(out, "resonance_scan.csv")?;
    write_json(
        out,
        "resonance_scan.json",
        &json!({
            "growthThreshold": scan.growth_threshold,
            "peakCandidates": scan.peak_candidates,
            "deltaList": scan.delta_list,
            "weightEps": cfg.weight_eps,
        }),
    )
}

fn cmd_evolve(cfg: &RunConfig, out: &Path) -> Result<()> {
    let bundle = bundle_of(cfg)?;
    let psi0 = fixture_of(cfg, &bundle)?;
    let ells = monitored_ells(cfg, bundle.ell);
    let nsteps = (cfg.t_final / cfg.dt).ceil() as usize;
    let opts = EvolveOpts {
        ell_values: ells.clone(),
        weight: Some(weight_2d(&bundle, cfg.weight_eps)),
        window: Some((lifted_coords(&bundle), cfg.x_span)),
        store_all: false,
        stride: (nsteps / 1000).max(1),
    };
    let run = evolution::evolve(&bundle.full, &psi0, cfg.t_final, cfg.dt, &opts)?;
    write_evolution_artifacts(&run, &ells, out, "evolve")?;
    let q0 = run.charge[0].norm().max(1e-300);
    let charge_drift = run
        .charge
        .iter()
        .fold(0.0_f64, |m, q| m.max((q - run.charge[0]).norm()))
        / q0;
    let sup_max = run.sup_ratio.iter().fold(0.0_f64, |m, &v| m.max(v));
    write_json(
        out,
        "evolve.json",
        &json!({
            "dt": run.dt,
            "tFinal": run.t_final,
            "ellValues": ells,
            "chargeDrift": charge_drift,
            "homEnergyRatio": run.hom_energy.last().unwrap() / run.hom_energy[0].max(1e-300),
            "supRatioMax": sup_max,
        }),
    )
}

fn write_evolution_artifacts(
    run: &evolution::EvolutionRun,
    ells: &[f64],
    out: &Path,
    stem: &str,
) -> Result<()> {
    let mut headers = vec![
        "t".to_string(),
        "chargeRe".to_string(),
        "chargeIm".to_string(),
        "homEnergy".to_string(),
        "inhomEnergy".to_string(),
        "weightedEnergy".to_string(),
        "supRatio".to_string(),
    ];
    for ell in ells {
        headers.push(format!("ellForm[{ell}]"));
    }
    let refs: Vec<&str> = headers.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&refs);
    for (i, &t) in run.times.iter().enumerate() {
        let mut row = vec![
            t,
            run.charge[i].re,
            run.charge[i].im,
            run.hom_energy[i],
            run.inhom_energy[i],
            run.weighted_energy[i],
            run.sup_ratio[i],
        ];
        for series in &run.ell_forms {
            row.push(series[i]);
        }
        csv.row(&row);
    }
    csv.write(out, &format!("{stem}.csv"))
}

fn cmd_superradiance(cfg: &RunConfig, out: &Path) -> Result<()> {
    let bundle = bundle_of(cfg)?;
    // energy-extracting in-going packet; carrier sign opposite the rotation ℓ
    let omega = cfg
        .fixture_omega
        .unwrap_or(if bundle.ell == 0.0 { 0.2 } else { -4.0 * bundle.ell });
    let psi0 = fixtures::ingoing_packet(&bundle.grid, cfg.fixture_center, cfg.fixture_width, omega);
    let ells = monitored_ells(cfg, bundle.ell);
    let opts = EvolveOpts {
        ell_values: ells.clone(),
        weight: Some(weight_2d(&bundle, cfg.weight_eps)),
        window: Some((lifted_coords(&bundle), cfg.x_span)),
        store_all: false,
        stride: ((cfg.t_final / cfg.dt).ceil() as usize / 1000).max(1),
    };
    let run = evolution::evolve(&bundle.full, &psi0, cfg.t_final, cfg.dt, &opts)?;
    write_evolution_artifacts(&run, &ells, out, "superradiance")?;
    let growth = run.hom_energy.last().unwrap() / run.hom_energy[0].max(1e-300);
    let q0 = run.charge[0].norm().max(1e-300);
    let charge_drift = run
        .charge
        .iter()
        .fold(0.0_f64, |m, q| m.max((q - run.charge[0]).norm()))
        / q0;
    // order-2 convergence of the energy-derivative identity defect
    let t_short = cfg.t_final.min(5.0);
    let d1 = evolution::energy_derivative_check(&bundle.full, &psi0, t_short, cfg.dt)?;
    let d2 = evolution::energy_derivative_check(&bundle.full, &psi0, t_short, cfg.dt / 2.0)?;
    write_json(
        out,
        "superradiance.json",
        &json!({
            "ell": bundle.ell,
            "fixtureOmega": omega,
            "homEnergyGrowth": growth,
            "chargeDrift": charge_drift,
            "energyDerivativeDefect": d1,
            "energyDerivativeDefectHalfDt": d2,
            "defectRatio": d1 / d2.max(1e-300),
        }),
    )
}

/// In-going profile pulse on the chosen end: u(t,x) = e^{iℓt}g(x ± t) with g
/// a Gaussian, mean-repaired so the datum lies in the homogeneous space.
fn ingoing_datum(cfg: &RunConfig, bundle: &OperatorBundle, side: Side) -> ProfileDatum {
    let xs = &bundle.grid.x_nodes;
    let nx = bundle.grid.nx;
    let dx = bundle.grid.dx;
    let ell = side.ell(bundle);
    let sign = match side {
        Side::Left => 1.0,
        Side::Right => -1.0,
    };
    let g: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let s = (x - cfg.fixture_center) / cfg.fixture_width;
            (-s * s).exp()
        })
        .collect();
    let mut u0 = Array1::<C64>::zeros(nx);
    let mut u1 = Array1::<C64>::zeros(nx);
    for i in 0..nx {
        let gp = if i == 0 || i == nx - 1 {
            0.0
        } else {
            (g[i + 1] - g[i - 1]) / (2.0 * dx)
        };
        u0[i] = C64::new(g[i], 0.0);
        u1[i] = C64::new(sign * gp, 0.0) + C64::new(0.0, ell * g[i]);
    }
    let mut d = ProfileDatum::new(u0, u1, ell);
    d.mean_subtract(&bundle.cutoffs.bump, dx);
    d.fin_q = Some(0);
    d
}

fn wave_report_artifacts(rep: &WaveOpReport, out: &Path, stem: &str) -> Result<()> {
    let mut csv = Csv::new(&["t", "gap", "normRatio"]);
    for (i, &t) in rep.t_schedule.iter().enumerate() {
        let gap = if i == 0 { f64::NAN } else { rep.cauchy_gaps[i - 1] };
        csv.row(&[t, gap, rep.norm_ratios[i]]);
    }
    csv.write(out, &format!("{stem}.csv"))
}

fn wave_report_json(rep: &WaveOpReport, limit_norm: f64, kappa_ref: f64) -> serde_json::Value {
    json!({
        "schedule": rep.t_schedule,
        "cauchyGaps": rep.cauchy_gaps,
        "limitNorm": limit_norm,
        "extrapolatedError": rep.extrapolated_error,
        "kappaFit": rep.kappa_fit,
        "kappaReference": kappa_ref,
    })
}

fn cmd_scatter(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut bundle = bundle_of(cfg)?;
    if cfg.cutoff_eps.is_some() || cfg.cutoff_scale.is_some() {
        let eps = cfg.cutoff_eps.unwrap_or(cfg.x_span / 8.0);
        let scale = cfg.cutoff_scale.unwrap_or(cfg.x_span / 4.0);
        bundle.cutoffs = Cutoffs::build(&bundle.grid.x_nodes, cfg.x_span, eps, scale)?;
    }
    let side = side_of(cfg);
    let kappa_ref = match side {
        Side::Left => bundle.horizons.kappa_minus,
        Side::Right => bundle.horizons.kappa_plus,
    };
    let datum = ingoing_datum(cfg, &bundle, side);
    let state = scattering::fin_assemble(&bundle, &[datum]);
    let opts = WaveOpts {
        cutoff_power: 2,
        fin_q: Some(cfg.q_count),
        store_approximants: false,
    };
    let forward = match cfg.comparison.as_str() {
        "separable" => separable_wave_operator(&bundle, side, &state, &cfg.schedule, cfg.dt, &opts)?,
        _ => wave_operator(&bundle, side, &state, &cfg.schedule, cfg.dt, &opts)?,
    };
    wave_report_artifacts(&forward, out, "scatter_wave")?;
    let fwd_norm = energy_norms(&bundle.full, &forward.limit).hom.sqrt();
    let mut summary = json!({
        "side": cfg.side,
        "comparison": cfg.comparison,
        "forward": wave_report_json(&forward, fwd_norm, kappa_ref),
    });
    if cfg.comparison == "profile" {
        let inverse =
            inverse_wave_operator(&bundle, side, &forward.limit, &cfg.schedule, cfg.dt, &opts)?;
        wave_report_artifacts(&inverse, out, "scatter_inverse")?;
        let inv_norm = scattering::profile_hom_energy(&bundle, side, &inverse.limit).sqrt();
        summary["inverse"] = wave_report_json(&inverse, inv_norm, kappa_ref);
    }
    write_json(out, "scatter.json", &summary)
}

// ---------------------------------------------------------------- selftest

fn selftest_system(n: usize, seed: u64) -> Result<KGSystem> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut a = Array2::<f64>::zeros((n, n));
    for v in a.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let mut h0 = a.t().dot(&a);
    let sym = 0.5 * (&h0 + &h0.t());
    h0 = sym;
    for i in 0..n {
        h0[[i, i]] += 1.0;
    }
    let k = Array1::from_iter((0..n).map(|_| rng.gen_range(-0.5..0.5)));
    KGSystem::new(
        Arc::new(h0),
        KOp::Diag(k),
        Array1::ones(n),
        Array1::ones(n),
    )
}

fn cmd_selftest(cfg: &RunConfig, out: &Path) -> Result<()> {
    struct Check {
        name: &'static str,
        value: f64,
        threshold: f64,
    }
    let mut checks: Vec<Check> = Vec::new();

    // geometry: horizon roots of the metric quartic
    let params = SpacetimeParams::new(0.03, 1.0, 0.1, 0.0)?;
    let hor = geometry::find_horizons(&params)?;
    let hres = geometry::delta_r(&params, hor.r_minus)
        .abs()
        .max(geometry::delta_r(&params, hor.r_plus).abs());
    checks.push(Check { name: "horizon-residual", value: hres, threshold: 1e-9 });

    // algebra: (H − z)R(z) = I on a random system
    let sys = selftest_system(40, cfg.seed)?;
    let z = C64::new(1.3, 0.7);
    let r = resolvent(&sys, z)?;
    let hc = linalg::to_complex(&sys.hamiltonian_matrix());
    let mut lhs = hc.dot(&r);
    lhs.scaled_add(-z, &r);
    for i in 0..2 * sys.dim {
        lhs[[i, i]] -= C64::new(1.0, 0.0);
    }
    let rid = linalg::fro(&lhs) / (2 * sys.dim) as f64;
    checks.push(Check { name: "resolvent-identity", value: rid, threshold: 1e-10 });

    // spectrum: every eigenpair annihilated by the quadratic pencil
    let spec = eig_hamiltonian(&sys)?;
    checks.push(Check {
        name: "pencil-consistency",
        value: spec.pencil_cross_check,
        threshold: 1e-8,
    });

    // Riesz projector over a contour enclosing the whole spectrum
    let zmax = spec
        .eigenvalues
        .iter()
        .fold(0.0_f64, |m, p| m.max(p.z.norm()));
    let (proj, _) = riesz_projector(&sys, C64::new(0.0, 0.0), 2.0 * zmax + 1.0, 64)?;
    let mut idem = proj.dot(&proj);
    idem.scaled_add(C64::new(-1.0, 0.0), &proj);
    let pval = linalg::fro(&idem) / linalg::fro(&proj).max(1e-300);
    checks.push(Check { name: "riesz-idempotency", value: pval, threshold: 1e-7 });

    // conservation on the full mode operator
    let bundle = OperatorBundle::build(&params, 1, 48, 4, 30.0, 2)?;
    let psi0 = fixtures::gaussian_2d(&bundle.grid, 0.0, 2.0, 0.3);
    let opts = EvolveOpts { ell_values: vec![bundle.ell], ..Default::default() };
    let run = evolution::evolve(&bundle.full, &psi0, 5.0, 0.1, &opts)?;
    let q0 = run.charge[0].norm().max(1e-300);
    let qdrift = run
        .charge
        .iter()
        .fold(0.0_f64, |m, q| m.max((q - run.charge[0]).norm()))
        / q0;
    checks.push(Check { name: "charge-conservation", value: qdrift, threshold: 1e-9 });

    // glued-resolvent identity on the same bundle
    let glued = glued_resolvent_check(&bundle, C64::new(0.0, 2.0))?;
    checks.push(Check { name: "glued-residual", value: glued.residual, threshold: 1e-8 });

    // profile calculus: the in/out split reconstructs the datum
    let scfg = RunConfig { fixture_center: 0.0, fixture_width: 2.0, ..cfg.clone() };
    let datum = ingoing_datum(&scfg, &bundle, Side::Left);
    let (din, dout) = inout_split(&datum, bundle.grid.dx)?;
    let mut err2 = 0.0_f64;
    let mut nrm2 = 0.0_f64;
    for i in 0..bundle.grid.nx {
        err2 += (din.u0[i] + dout.u0[i] - datum.u0[i]).norm_sqr()
            + (din.u1[i] + dout.u1[i] - datum.u1[i]).norm_sqr();
        nrm2 += datum.u0[i].norm_sqr() + datum.u1[i].norm_sqr();
    }
    let sval = (err2 / nrm2.max(1e-300)).sqrt();
    checks.push(Check { name: "split-reconstruction", value: sval, threshold: 1e-12 });

    let mut csv = Csv::new(&["check", "value", "threshold", "pass"]);
    let mut map = serde_json::Map::new();
    let mut all = true;
    for c in &checks {
        let pass = c.value <= c.threshold;
        all &= pass;
        csv.labeled_row(c.name, &[c.value, c.threshold, if pass { 1.0 } else { 0.0 }]);
        map.insert(
            c.name.to_string(),
            json!({ "value": c.value, "threshold": c.threshold, "pass": pass }),
        );
    }
    csv.write(out, "selftest.csv")?;
    write_json(
        out,
        "selftest.json",
        &json!({ "allPass": all, "checks": serde_json::Value::Object(map) }),
    )?;
    if !all {
        return Err(Error::SolverFailure("selftest checks failed".to_string()));
    }
    Ok(())
}
