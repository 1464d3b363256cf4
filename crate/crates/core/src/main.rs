//! Command-line front end for the thermo-visco-elastic Galerkin simulator.
//!
//! Exit codes: 0 on success, 2 for invalid configuration or data, 1 for
//! runtime failures (solver breakdown, I/O).

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::time::Instant;
use tvesim::constitutive::{check_assumption, ConstitutiveLaw};
use tvesim::energy::{collect_bounds, compare_variants, energy_report, weak_residuals};
use tvesim::output::{
    fields_file_name, write_bounds_csv, write_energy_csv, write_fields_bin, write_report,
    write_table_csv, FieldsHeader,
};
use tvesim::scenario::{Scenario, VariantKind};
use tvesim::solver::Workspace;
use tvesim::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tvesim",
    version,
    about = "Spectral-Galerkin simulator for a quasi-static thermo-visco-elastic solid"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spot-check the flow law's monotonicity, coercivity, and growth
    /// numerically on random samples.
    CheckConstitutive {
        /// Flow exponent p (≥ 2).
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Constant part κ₀ of the temperature modulation.
        #[arg(long, default_value_t = 1.0)]
        kappa0: f64,
        /// Amplitude κ₁ of the temperature-dependent part.
        #[arg(long, default_value_t = 1.0)]
        kappa1: f64,
        /// Number of random sample triples.
        #[arg(long, default_value_t = 20000)]
        samples: usize,
        /// Sampling radius for θ and tensor entries.
        #[arg(long, default_value_t = 3.0)]
        radius: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Build the spectral bases for a scenario and report orthonormality,
    /// eigen-residual, and coupling diagnostics.
    Basis {
        #[arg(long)]
        scenario: PathBuf,
        /// Override the displacement mode count.
        #[arg(long)]
        k: Option<usize>,
        /// Override the temperature mode count.
        #[arg(long)]
        l: Option<usize>,
        /// Write the basis to a binary cache file.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Directory for basis_report.txt (defaults to no file output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate a scenario and write the energy series, bound monitors,
    /// report, and any requested field snapshots.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory (overrides the scenario's).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        l: Option<usize>,
        /// Override the heat-source truncation level.
        #[arg(long = "k-trunc")]
        k_trunc: Option<f64>,
        /// Override the coupling variant (symmetric | broken | nonlinear).
        #[arg(long)]
        variant: Option<VariantKind>,
        /// Override both integrator tolerances.
        #[arg(long)]
        tol: Option<f64>,
        /// Override the seed of a random initial plastic strain.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the same data under the symmetric and broken coupling variants
    /// and compare their energy-balance residuals.
    CompareVariants {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a scenario over ladders of spectral resolutions and tabulate
    /// the stability of the balance residual and bound monitors.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated displacement mode counts (default: scenario k).
        #[arg(long)]
        ks: Option<String>,
        /// Comma-separated temperature mode counts (default: scenario l).
        #[arg(long)]
        ls: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Manufactured-solution convergence studies.
    Mms {
        /// Which study: heat | coupled | both.
        #[arg(long, default_value = "both")]
        case: String,
        /// Comma-separated mesh resolutions.
        #[arg(long, default_value = "2,4,8")]
        cells: String,
        #[arg(long = "t-end", default_value_t = 0.25)]
        t_end: f64,
        /// Time-integration tolerance (well below the spatial error).
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        /// Directory for the convergence CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(if e.is_validation() { 2 } else { 1 });
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::CheckConstitutive {
            p,
            kappa0,
            kappa1,
            samples,
            radius,
            seed,
        } => cmd_check_constitutive(p, kappa0, kappa1, samples, radius, seed),
        Command::Basis {
            scenario,
            k,
            l,
            cache,
            out,
        } => cmd_basis(&scenario, k, l, cache.as_deref(), out.as_deref()),
        Command::Run {
            scenario,
            out,
            k,
            l,
            k_trunc,
            variant,
            tol,
            seed,
        } => cmd_run(&scenario, out.as_deref(), k, l, k_trunc, variant, tol, seed),
        Command::CompareVariants { scenario, out } => {
            cmd_compare(&scenario, out.as_deref())
        }
        Command::Sweep {
            scenario,
            ks,
            ls,
            out,
        } => cmd_sweep(&scenario, ks.as_deref(), ls.as_deref(), out.as_deref()),
        Command::Mms {
            case,
            cells,
            t_end,
            tol,
            out,
        } => cmd_mms(&case, &cells, t_end, tol, out.as_deref()),
    }
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>> {
    let vals: std::result::Result<Vec<usize>, _> =
        text.split(',').map(|s| s.trim().parse::<usize>()).collect();
    let vals = vals.map_err(|e| Error::Parse(format!("invalid {what} list {text:?}: {e}")))?;
    if vals.is_empty() {
        return Err(Error::Parse(format!("empty {what} list")));
    }
    Ok(vals)
}

fn cmd_check_constitutive(
    p: f64,
    kappa0: f64,
    kappa1: f64,
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<()> {
    let law = ConstitutiveLaw::new(p, kappa0, kappa1)?;
    let report = check_assumption(&law, samples, radius, seed);
    print!("{}", report.to_text());
    if report.admissible() {
        println!("verdict = admissible");
        Ok(())
    } else {
        Err(Error::Constitutive(
            "flow law failed the structural spot checks".into(),
        ))
    }
}

fn cmd_basis(
    scenario_path: &Path,
    k: Option<usize>,
    l: Option<usize>,
    cache: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let mut scenario = Scenario::from_path(scenario_path)?;
    scenario.apply_overrides(k, l, None, None, None, None)?;
    let started = Instant::now();
    let ws = Workspace::build(&scenario)?;
    let entries = basis_diagnostics(&ws);
    println!(
        "basis for {} ({}^3-type mesh, k = {}, l = {}, complement = {}) built in {:.2} s",
        scenario_path.display(),
        ws.assembly.mesh().cells_per_axis()[0],
        ws.basis.k(),
        ws.basis.l_temperature(),
        ws.basis.l_complement(),
        started.elapsed().as_secs_f64()
    );
    for (key, value) in &entries {
        println!("{key} = {value}");
    }
    if let Some(dir) = out {
        let path = dir.join("basis_report.txt");
        write_report(&path, &entries)?;
        println!("wrote {}", path.display());
    }
    if let Some(path) = cache {
        tvesim::basis::save_cache(path, &ws.assembly, &ws.basis)?;
        println!("cached basis at {}", path.display());
    }
    Ok(())
}

/// Orthonormality, eigen-residual, and coupling diagnostics of a built
/// basis, as report entries.
fn basis_diagnostics(ws: &Workspace) -> Vec<(String, String)> {
    let asm = &ws.assembly;
    let basis = &ws.basis;
    let k = basis.k();
    let lt = basis.l_temperature();
    let lc = basis.l_complement();
    let w = asm.qp_weight();

    // Displacement strain Gram against δ_ij in the D-inner product.
    let mut disp_gram: f64 = 0.0;
    for i in 0..k {
        for j in i..k {
            let g = asm.inner_d_qp(
                &basis.displacement.modes[i].strain,
                &basis.displacement.modes[j].strain,
            );
            let target = if i == j { 1.0 } else { 0.0 };
            disp_gram = disp_gram.max((g - target).abs());
        }
    }
    // Temperature L² Gram.
    let mut temp_gram: f64 = 0.0;
    for i in 0..lt {
        for j in i..lt {
            let mut s = 0.0;
            for (a, b) in basis.temperature.modes[i]
                .values
                .iter()
                .zip(&basis.temperature.modes[j].values)
            {
                s += a * b;
            }
            let target = if i == j { 1.0 } else { 0.0 };
            temp_gram = temp_gram.max((w * s - target).abs());
        }
    }
    // Joint plastic-span Gram: strains then complement fields.
    let mut joint_gram: f64 = 0.0;
    let field = |idx: usize| -> &tvesim::assembly::QPTensorField {
        if idx < k {
            &basis.displacement.modes[idx].strain
        } else {
            &basis.complement.fields[idx - k]
        }
    };
    for i in 0..k + lc {
        for j in i..k + lc {
            let g = asm.inner_d_qp(field(i), field(j));
            let target = if i == j { 1.0 } else { 0.0 };
            joint_gram = joint_gram.max((g - target).abs());
        }
    }
    // Eigen-residuals ‖Kx − λMx‖/‖Kx‖ of the first few pairs of each family.
    let mut disp_resid: f64 = 0.0;
    for mode in basis.displacement.modes.iter().take(4) {
        let kx = asm.vector_stiffness() * &mode.reduced;
        let mx = asm.vector_mass() * &mode.reduced;
        let r = (&kx - &mx * mode.eigenvalue).norm() / kx.norm().max(1e-300);
        disp_resid = disp_resid.max(r);
    }
    let mut temp_resid: f64 = 0.0;
    for mode in basis.temperature.modes.iter().skip(1).take(4) {
        let kx = asm.scalar_stiffness() * &mode.nodal;
        let mx = asm.scalar_mass() * &mode.nodal;
        let r = (&kx - &mx * mode.eigenvalue).norm() / kx.norm().max(1e-300);
        temp_resid = temp_resid.max(r);
    }
    // The coupling column against the constant mode is the discrete
    // divergence theorem.
    let mut const_col: f64 = 0.0;
    for n in 0..k {
        const_col = const_col.max(basis.div_coupling[(n, 0)].abs());
    }
    let mut entries = vec![
        ("k".to_string(), k.to_string()),
        ("l".to_string(), lt.to_string()),
        ("l_complement".to_string(), lc.to_string()),
        (
            "displacement_gram_dev".to_string(),
            format!("{disp_gram:.3e}"),
        ),
        ("temperature_gram_dev".to_string(), format!("{temp_gram:.3e}")),
        ("joint_gram_dev".to_string(), format!("{joint_gram:.3e}")),
        (
            "displacement_eigen_residual".to_string(),
            format!("{disp_resid:.3e}"),
        ),
        (
            "temperature_eigen_residual".to_string(),
            format!("{temp_resid:.3e}"),
        ),
        (
            "div_coupling_constant_column".to_string(),
            format!("{const_col:.3e}"),
        ),
    ];
    for (i, mode) in basis.displacement.modes.iter().take(4).enumerate() {
        entries.push((format!("lambda_{}", i + 1), format!("{:.12e}", mode.eigenvalue)));
    }
    for (i, mode) in basis.temperature.modes.iter().take(4).enumerate() {
        entries.push((format!("mu_{}", i + 1), format!("{:.12e}", mode.eigenvalue)));
    }
    entries
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    scenario_path: &Path,
    out: Option<&Path>,
    k: Option<usize>,
    l: Option<usize>,
    k_trunc: Option<f64>,
    variant: Option<VariantKind>,
    tol: Option<f64>,
    seed: Option<u64>,
) -> Result<()> {
    let mut scenario = Scenario::from_path(scenario_path)?;
    scenario.apply_overrides(k, l, k_trunc, variant, tol, seed)?;
    let out_dir = out
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from(&scenario.output.directory));

    let started = Instant::now();
    let ws = Workspace::build(&scenario)?;
    let system = ws.system(&scenario)?;
    println!(
        "{}: variant = {}, k = {}, l = {}, complement = {}, qps = {}",
        scenario_path.display(),
        scenario.variant.kind,
        system.k(),
        system.l_temperature(),
        system.l_complement(),
        ws.assembly.qp_count()
    );
    let y0 = system.initial_state(&scenario.data.theta0, &scenario.data.epsp0)?;
    let times = scenario.sample_times();
    let trajectory = system.integrate(&y0, &times, &scenario.integrator)?;
    let integrated = started.elapsed().as_secs_f64();
    println!(
        "integrated {} samples over [0, {}] in {:.2} s",
        times.len(),
        scenario.integrator.t_end,
        integrated
    );

    let report = energy_report(&system, &trajectory)?;
    let bounds = collect_bounds(&system, &trajectory)?;
    let gap = system.max_alpha_gamma_gap(&trajectory);
    let recovery = system.recover_plastic_strain(&trajectory, &scenario.data.epsp0)?;
    let weak = weak_residuals(
        &system,
        &trajectory,
        &scenario.data.f,
        &scenario.data.g_theta,
        2024,
    )?;

    write_energy_csv(&out_dir.join("energy.csv"), &report.rows)?;
    write_bounds_csv(&out_dir.join("bounds.csv"), &bounds.entries())?;

    // Field snapshots at the requested times, snapped to samples.
    for &ft in &scenario.output.field_times {
        let idx = times
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - ft).abs().partial_cmp(&(b.1 - ft).abs()).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        let state = system.state_at(&trajectory, idx);
        let fields = system.reconstruct(&state);
        let header = FieldsHeader {
            mesh_hash: ws.assembly.mesh().descriptor_hash(),
            k: system.k() as u32,
            l: system.l_temperature() as u32,
            l_complement: system.l_complement() as u32,
            variant: scenario.variant.kind,
            t: state.t,
            qp_count: ws.assembly.qp_count() as u64,
        };
        write_fields_bin(
            &out_dir.join(fields_file_name(state.t)),
            &header,
            &fields.eps_p,
            &fields.stress,
            &fields.stress_dev,
            &fields.sigma,
        )?;
    }

    let mut entries: Vec<(String, String)> = vec![
        ("scenario".into(), scenario_path.display().to_string()),
        ("variant".into(), scenario.variant.kind.to_string()),
        (
            "existence_theory".into(),
            if system.variant.has_existence_theory() {
                "yes".into()
            } else {
                "no (pointwise coupling is outside the proved class)".into()
            },
        ),
        ("k".into(), system.k().to_string()),
        ("l".into(), system.l_temperature().to_string()),
        ("l_complement".into(), system.l_complement().to_string()),
        ("samples".into(), times.len().to_string()),
        ("t_end".into(), format!("{}", scenario.integrator.t_end)),
        ("max_balance_residual".into(), format!("{:.17e}", report.max_residual)),
        ("residual_scale".into(), format!("{:.17e}", report.scale)),
        (
            "max_dissipation_identity_gap".into(),
            format!("{:.17e}", report.max_dissipation_identity_gap),
        ),
        ("max_alpha_gamma_gap".into(), format!("{gap:.17e}")),
        (
            "plastic_recovery_deviation".into(),
            format!("{:.17e}", recovery.max_deviation),
        ),
        (
            "weak_residual_in_span".into(),
            format!("{:.17e}", weak.max_in_span()),
        ),
        ("wall_seconds".into(), format!("{:.3}", started.elapsed().as_secs_f64())),
    ];
    for (name, value) in bounds.entries() {
        entries.push((format!("bound_{name}"), format!("{value:.17e}")));
    }
    for (name, value) in weak.entries() {
        entries.push((format!("weak_{name}"), format!("{value:.3e}")));
    }
    write_report(&out_dir.join("report.txt"), &entries)?;

    println!("max |R| = {:.3e} (scale {:.3e})", report.max_residual, report.scale);
    println!("max |alpha - gamma| = {gap:.3e}");
    println!(
        "plastic recovery deviation = {:.3e}",
        recovery.max_deviation
    );
    println!("weak residual (in-span probes) = {:.3e}", weak.max_in_span());
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn cmd_compare(scenario_path: &Path, out: Option<&Path>) -> Result<()> {
    let scenario = Scenario::from_path(scenario_path)?;
    let started = Instant::now();
    let cmp = compare_variants(&scenario)?;
    println!(
        "symmetric max |R| = {:.6e}\nbroken    max |R| = {:.6e}\nratio = {:.3e}",
        cmp.symmetric_max_residual, cmp.broken_max_residual, cmp.ratio
    );
    println!("compared in {:.2} s", started.elapsed().as_secs_f64());
    if let Some(dir) = out {
        write_report(
            &dir.join("compare_report.txt"),
            &[
                (
                    "symmetric_max_residual".into(),
                    format!("{:.17e}", cmp.symmetric_max_residual),
                ),
                (
                    "broken_max_residual".into(),
                    format!("{:.17e}", cmp.broken_max_residual),
                ),
                ("ratio".into(), format!("{:.17e}", cmp.ratio)),
            ],
        )?;
    }
    Ok(())
}

fn cmd_sweep(
    scenario_path: &Path,
    ks: Option<&str>,
    ls: Option<&str>,
    out: Option<&Path>,
) -> Result<()> {
    let base = Scenario::from_path(scenario_path)?;
    let k_list = match ks {
        Some(text) => parse_usize_list(text, "k")?,
        None => vec![base.galerkin.k],
    };
    let l_list = match ls {
        Some(text) => parse_usize_list(text, "l")?,
        None => vec![base.galerkin.l],
    };
    println!("k,l,max_residual,sup_E,dissipation_L1,alpha_gamma_gap,seconds");
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for &kk in &k_list {
        for &ll in &l_list {
            let mut s = base.clone();
            s.apply_overrides(Some(kk), Some(ll), None, None, None, None)?;
            let started = Instant::now();
            let ws = Workspace::build(&s)?;
            let system = ws.system(&s)?;
            let y0 = system.initial_state(&s.data.theta0, &s.data.epsp0)?;
            let traj = system.integrate(&y0, &s.sample_times(), &s.integrator)?;
            let report = energy_report(&system, &traj)?;
            let bounds = collect_bounds(&system, &traj)?;
            let gap = system.max_alpha_gamma_gap(&traj);
            let secs = started.elapsed().as_secs_f64();
            println!(
                "{},{},{:.6e},{:.6e},{:.6e},{:.3e},{:.2}",
                system.k(),
                system.l_temperature(),
                report.max_residual,
                bounds.sup_potential,
                bounds.dissipation_l1,
                gap,
                secs
            );
            rows.push(vec![
                system.k() as f64,
                system.l_temperature() as f64,
                report.max_residual,
                bounds.sup_potential,
                bounds.dissipation_l1,
                gap,
            ]);
        }
    }
    if let Some(dir) = out {
        write_table_csv(
            &dir.join("sweep.csv"),
            "k,l,max_residual,sup_E,dissipation_L1,alpha_gamma_gap",
            &rows,
        )?;
    }
    Ok(())
}

fn cmd_mms(case: &str, cells: &str, t_end: f64, tol: f64, out: Option<&Path>) -> Result<()> {
    let ladder = parse_usize_list(cells, "cells")?;
    let mut reports = Vec::new();
    match case {
        "heat" => reports.push(tvesim::mms::heat_case(&ladder, t_end, tol)?),
        "coupled" => reports.push(tvesim::mms::coupled_case(&ladder, t_end, tol)?),
        "both" => {
            reports.push(tvesim::mms::heat_case(&ladder, t_end, tol)?);
            reports.push(tvesim::mms::coupled_case(&ladder, t_end, tol)?);
        }
        other => {
            return Err(Error::InvalidScenario(format!(
                "unknown mms case {other:?} (expected heat, coupled, or both)"
            )))
        }
    }
    for report in &reports {
        println!("case = {}", report.label);
        println!("cells,h,theta_error,u_error");
        for r in &report.rungs {
            println!(
                "{},{:.6e},{:.6e},{:.6e}",
                r.cells, r.h, r.theta_error, r.u_error
            );
        }
        match report.u_rate {
            Some(u) => println!(
                "theta_rate = {:.3}, u_rate = {:.3}",
                report.theta_rate, u
            ),
            None => println!("theta_rate = {:.3}", report.theta_rate),
        }
        if let Some(dir) = out {
            let path = dir.join(format!("mms_{}.csv", report.label));
            write_table_csv(&path, "cells,h,theta_error,u_error", &report.table_rows())?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
