//! Mode runners: glue between the configuration, the core library and the
//! run directory.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::Context;

use wavelab_core::control::{self, ControlTarget};
use wavelab_core::grid::{DomainConfig, Side};
use wavelab_core::inversion::{self, InverseProblemSetup};
use wavelab_core::quadmin;
use wavelab_core::synth::{self, AnalyticTestFunction};
use wavelab_core::verify::{self, DecompositionMode, InequalityVariant};
use wavelab_core::wave::{self, FluxTrace, LeapfrogOptions, Potential, WaveData};
use wavelab_core::weights::{make_weights, validate_geometry};

use crate::config::{ExperimentConfig, Mode, SpatialExpr};
use crate::output::{spatial_csv, trace_csv, Csv, CsvField, RunDir};

/// Exit-code classes: configuration/validation problems exit with 1,
/// numerical failures with 2.
pub enum RunFailure {
    Validation(String),
    Numerical(String),
}

impl From<wavelab_core::Error> for RunFailure {
    fn from(e: wavelab_core::Error) -> Self {
        use wavelab_core::Error::*;
        match e {
            InvalidConfig(_) | InvalidGeometry(_) | ParameterRange(_) => {
                RunFailure::Validation(e.to_string())
            }
            _ => RunFailure::Numerical(e.to_string()),
        }
    }
}

impl From<anyhow::Error> for RunFailure {
    fn from(e: anyhow::Error) -> Self {
        RunFailure::Numerical(format!("{e:#}"))
    }
}

impl From<String> for RunFailure {
    fn from(e: String) -> Self {
        RunFailure::Validation(e)
    }
}

type RunResult = std::result::Result<(), RunFailure>;

/// Order-preserving parallel map over independent cells.
fn parallel_map<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.into_iter().map(f).collect();
    }
    let n = items.len();
    let slots: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let inputs: Vec<Mutex<Option<T>>> = items.into_iter().map(|t| Mutex::new(Some(t))).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let item = inputs[i].lock().unwrap().take().unwrap();
                *slots[i].lock().unwrap() = Some(f(item));
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().unwrap())
        .collect()
}

fn cg_budget(cfg: &ExperimentConfig, n_unknowns: usize) -> usize {
    if cfg.cg_max_iter > 0 {
        cfg.cg_max_iter
    } else {
        quadmin::default_max_iter(n_unknowns)
    }
}

/// Dispatches one run; writes every artifact into the run directory.
pub fn run(mode: Mode, cfg: &ExperimentConfig, dir: &RunDir) -> RunResult {
    let started = std::time::Instant::now();
    let outcome = match mode {
        Mode::Validate => run_validate(cfg, dir),
        Mode::Forward => run_forward(cfg, dir),
        Mode::Control => run_control(cfg, dir),
        Mode::Invert => run_invert(cfg, dir),
        Mode::Verify => run_verify(cfg, dir),
    };
    let wall = started.elapsed().as_secs_f64();
    dir.write_manifest(&cfg.echo, cfg.seed, wall)
        .map_err(RunFailure::from)?;
    outcome
}

fn run_validate(cfg: &ExperimentConfig, dir: &RunDir) -> RunResult {
    let report = validate_geometry(&cfg.domain, &cfg.params);
    let mut csv = Csv::new(&["condition", "satisfied", "margin", "detail"]);
    for c in &report.conditions {
        println!(
            "{:40} {}  margin = {:+.6e}  ({})",
            c.name,
            if c.satisfied { "ok  " } else { "FAIL" },
            c.margin,
            c.detail
        );
        csv.row(&[
            CsvField::Str(c.name),
            CsvField::Str(if c.satisfied { "yes" } else { "no" }),
            CsvField::Float(c.margin),
            CsvField::Str(&c.detail),
        ]);
    }
    dir.write_csv("geometry_report.csv", &csv)
        .map_err(RunFailure::from)?;
    if report.valid() {
        println!("geometry: all conditions hold");
        Ok(())
    } else {
        Err(RunFailure::Validation(
            "one or more geometry conditions are violated (see geometry_report.csv)".into(),
        ))
    }
}

fn build_wave_data(
    domain: &DomainConfig,
    w0: &SpatialExpr,
    w1: &SpatialExpr,
    bc_left: f64,
    bc_right: f64,
) -> std::result::Result<WaveData, String> {
    let mut data = WaveData::zero(domain);
    data.init_pos = w0.sample(domain)?;
    data.init_vel = w1.sample(domain)?;
    for it in 0..domain.n_time() {
        data.bc_left[it] = bc_left;
        data.bc_right[it] = bc_right;
    }
    Ok(data)
}

fn run_forward(cfg: &ExperimentConfig, dir: &RunDir) -> RunResult {
    let d = &cfg.domain;
    let q = cfg
        .forward
        .q
        .into_potential(d, cfg.params.m)
        .map_err(RunFailure::from)?;
    let data = build_wave_data(
        d,
        &cfg.forward.w0,
        &cfg.forward.w1,
        cfg.forward.bc_left,
        cfg.forward.bc_right,
    )
    .map_err(RunFailure::from)?;
    let (field, fluxes) = wave::leapfrog_solve(d, &data, &q, &LeapfrogOptions::default())?;
    dir.write_field("solution", &field, d)
        .map_err(RunFailure::from)?;
    for flux in &fluxes {
        let name = match flux.side {
            Side::Left => "flux_left.csv",
            Side::Right => "flux_right.csv",
        };
        dir.write_csv(name, &trace_csv(d, &flux.values))
            .map_err(RunFailure::from)?;
    }
    let energy: Vec<f64> = (0..d.n_time())
        .map(|it| wave::discrete_energy(&field, d, it))
        .collect();
    dir.write_csv("energy.csv", &trace_csv(d, &energy))
        .map_err(RunFailure::from)?;
    println!(
        "forward solve complete: max |w| = {:.6e}, artifacts in {}",
        field.max_abs(),
        dir.path().display()
    );
    Ok(())
}

fn run_control(cfg: &ExperimentConfig, dir: &RunDir) -> RunResult {
    let d = &cfg.domain;
    let target = ControlTarget {
        y0: cfg.control.y0.sample(d).map_err(RunFailure::from)?,
        y1: cfg.control.y1.sample(d).map_err(RunFailure::from)?,
    };
    let p = cfg
        .control
        .p
        .into_potential(d, cfg.params.m)
        .map_err(RunFailure::from)?;
    let budget = cg_budget(cfg, d.nx * d.n_time());

    let pair = control::solve_control(d, &cfg.params, &target, &p, cfg.cg_tol, budget)?;
    let mut summary = Csv::new(&[
        "s",
        "cg_iterations",
        "converged",
        "obs_norm_sq",
        "log10_obs_norm_sq",
        "functional_value",
        "initial_energy",
        "terminal_energy",
    ]);
    summary.row(&[
        CsvField::Float(pair.s),
        CsvField::Int(pair.report.cg_iterations as i64),
        CsvField::Str(if pair.report.converged { "yes" } else { "no" }),
        CsvField::Float(pair.report.obs_norm_sq),
        CsvField::Float(pair.report.log10_obs_norm_sq),
        CsvField::Float(pair.report.functional_value),
        CsvField::Float(pair.initial_energy),
        CsvField::Float(pair.terminal_energy),
    ]);
    dir.write_csv("control_summary.csv", &summary)
        .map_err(RunFailure::from)?;
    for u in &pair.controls {
        let name = match u.side {
            Side::Left => "control_left.csv",
            Side::Right => "control_right.csv",
        };
        dir.write_csv(name, &trace_csv(d, &u.values))
            .map_err(RunFailure::from)?;
    }
    dir.write_field("trajectory", &pair.trajectory, d)
        .map_err(RunFailure::from)?;
    dir.write_field("closed_loop", &pair.closed_loop, d)
        .map_err(RunFailure::from)?;
    println!(
        "control at s = {}: terminal/initial energy = {:.6e}",
        pair.s,
        pair.terminal_energy / pair.initial_energy.max(f64::MIN_POSITIVE)
    );

    if let Some(pb_expr) = &cfg.control.pb {
        let pb = pb_expr
            .into_potential(d, cfg.params.m)
            .map_err(RunFailure::from)?;
        let cells: Vec<f64> = cfg.control.s_list.clone();
        let rows = parallel_map(cells, cfg.workers, |s| {
            control::sensitivity_experiment(
                d,
                &cfg.params,
                &target,
                &p,
                &pb,
                &[s],
                cfg.cg_tol,
                budget,
            )
            .remove(0)
        });
        let mut csv = Csv::new(&[
            "s",
            "ratio",
            "numerator",
            "denominator",
            "cg_iters_a",
            "cg_iters_b",
            "terminal_energy_a",
            "terminal_energy_b",
        ]);
        for (s, row) in rows {
            match row {
                Ok(r) => csv.row(&[
                    CsvField::Float(r.s),
                    CsvField::Float(r.ratio),
                    CsvField::Float(r.numerator),
                    CsvField::Float(r.denominator),
                    CsvField::Int(r.cg_iterations.0 as i64),
                    CsvField::Int(r.cg_iterations.1 as i64),
                    CsvField::Float(r.terminal_energy.0),
                    CsvField::Float(r.terminal_energy.1),
                ]),
                Err(e) => {
                    eprintln!("sensitivity row s = {s} failed: {e}");
                }
            }
        }
        dir.write_csv("sensitivity.csv", &csv)
            .map_err(RunFailure::from)?;
    }
    Ok(())
}

fn run_invert(cfg: &ExperimentConfig, dir: &RunDir) -> RunResult {
    let d = &cfg.domain;
    let blk = &cfg.invert;
    let data = build_wave_data(d, &blk.w0, &blk.w1, blk.bc_left, blk.bc_right)
        .map_err(RunFailure::from)?;

    let (true_q, measured) = match (&blk.true_q, &blk.flux_file) {
        (Some(expr), _) => {
            let q = expr
                .into_potential(d, cfg.params.m)
                .map_err(RunFailure::from)?;
            let measured = inversion::generate_measurement(d, &data, &q, blk.fine_factor)?;
            (Some(q), measured)
        }
        (None, Some(path)) => {
            let values = crate::config::load_csv_column(path).map_err(RunFailure::from)?;
            if values.len() != d.n_time() {
                return Err(RunFailure::Validation(format!(
                    "{}: flux file has {} samples, expected {}",
                    path.display(),
                    values.len(),
                    d.n_time()
                )));
            }
            let side = match d.gamma0 {
                wavelab_core::Gamma0::Left => Side::Left,
                wavelab_core::Gamma0::Right => Side::Right,
                wavelab_core::Gamma0::Both => {
                    return Err(RunFailure::Validation(
                        "flux files require a single observed side".into(),
                    ))
                }
            };
            (None, vec![FluxTrace { side, values }])
        }
        (None, None) => {
            return Err(RunFailure::Validation(
                "invert mode needs invert.true_q (synthetic) or invert.flux_file".into(),
            ))
        }
    };

    let setup = InverseProblemSetup {
        domain: *d,
        params: cfg.params,
        true_q,
        data,
        measured_flux: measured,
        m: cfg.params.m,
        alpha_pos: blk.alpha_pos,
    };
    let budget = cg_budget(cfg, d.nx * d.nt);
    let records = inversion::run_algorithm1(&setup, blk.max_iter, blk.stop_rel, cfg.cg_tol, budget)?;

    let mut csv = Csv::new(&[
        "k",
        "weighted_error_sq",
        "contraction_ratio",
        "flux_misfit",
        "cg_iterations",
    ]);
    for r in &records {
        csv.row(&[
            CsvField::Int(r.k as i64),
            CsvField::Float(r.weighted_error_sq),
            CsvField::Float(r.contraction_ratio),
            CsvField::Float(r.flux_misfit),
            CsvField::Int(r.cg_iterations as i64),
        ]);
    }
    dir.write_csv("iterations.csv", &csv)
        .map_err(RunFailure::from)?;

    let last = records
        .last()
        .ok_or_else(|| RunFailure::Numerical("no iterations recorded".into()))?;
    let reference = setup.true_q.as_ref().map(|q| q.values.as_slice());
    dir.write_csv(
        "recovered_potential.csv",
        &spatial_csv(d, &last.q.values, reference),
    )
    .map_err(RunFailure::from)?;
    println!(
        "reconstruction: {} iterates, final flux misfit = {:.6e}",
        records.len(),
        last.flux_misfit
    );
    Ok(())
}

fn run_verify(cfg: &ExperimentConfig, dir: &RunDir) -> RunResult {
    let d = &cfg.domain;
    let vb = &cfg.verify;
    let mut summary = String::new();

    // Conjugated-operator decomposition: analytic identity plus one grid
    // consistency row per family member.
    let family = AnalyticTestFunction::standard_family(d, 6.max(5));
    {
        let mut csv = Csv::new(&["family_id", "s", "lambda", "mode", "residual"]);
        let mut worst_analytic = 0.0_f64;
        for f in &family {
            for &s in &vb.s_list {
                for lambda in [0.2, cfg.params.lambda] {
                    let mut pr = cfg.params;
                    pr.s = s;
                    pr.lambda = lambda;
                    pr.alpha = wavelab_core::CarlemanParams::alpha_midpoint(pr.beta);
                    let res = verify::conjugate_decomposition_residual(
                        f,
                        d,
                        &pr,
                        DecompositionMode::Analytic,
                    )?;
                    worst_analytic = worst_analytic.max(res);
                    csv.row(&[
                        CsvField::Int(f.family_id as i64),
                        CsvField::Float(s),
                        CsvField::Float(lambda),
                        CsvField::Str("analytic"),
                        CsvField::Float(res),
                    ]);
                }
            }
            let res =
                verify::conjugate_decomposition_residual(f, d, &cfg.params, DecompositionMode::Grid)?;
            csv.row(&[
                CsvField::Int(f.family_id as i64),
                CsvField::Float(cfg.params.s),
                CsvField::Float(cfg.params.lambda),
                CsvField::Str("grid"),
                CsvField::Float(res),
            ]);
        }
        dir.write_csv("decomposition.csv", &csv)
            .map_err(RunFailure::from)?;
        let ok = worst_analytic <= 1e-10;
        summary.push_str(&format!(
            "decomposition_identity: {} (worst analytic residual {:.3e})\n",
            if ok { "pass" } else { "FAIL" },
            worst_analytic
        ));
    }

    // Inequality sweeps: family-max empirical constant per s.
    let half_domain = DomainConfig {
        t_lo: if d.t_lo < 0.0 { 0.0 } else { d.t_lo },
        nt: if d.t_lo < 0.0 { d.nt / 2 } else { d.nt },
        ..*d
    };
    let variants: [(InequalityVariant, &DomainConfig, bool, &str); 3] = [
        (InequalityVariant::Interval, d, false, "interval"),
        (
            InequalityVariant::HalfWithInitialVelocity,
            &half_domain,
            true,
            "half_window",
        ),
        (InequalityVariant::EndpointInitial, d, false, "endpoint"),
    ];
    for (variant, dd, zero_t0, label) in variants {
        let cells: Vec<f64> = vb.s_list.clone();
        let rows = parallel_map(cells, cfg.workers, |s| -> anyhow::Result<(f64, Vec<(u64, f64, f64)>)> {
            let mut pr = cfg.params;
            pr.s = s;
            let w = make_weights(dd, &pr)?;
            let p0 = Potential::zero(dd);
            let mut members = Vec::new();
            for i in 0..vb.n_fields as u64 {
                let seed = cfg.seed ^ (i.wrapping_mul(0x9e37_79b9)) ^ i;
                let base = synth::band_limited_field(dd, seed, vb.max_mode, zero_t0);
                let z = verify::apply_cutoff(&base, &w);
                let sides = verify::carleman_ratio(&z, &p0, &w, variant)?;
                members.push((seed, sides.lhs, sides.rhs));
            }
            Ok((s, members))
        });
        let mut csv = Csv::new(&["s", "field_seed", "lhs", "rhs", "empirical_m"]);
        let mut max_per_s = Vec::new();
        for row in rows {
            let (s, members) = row.context("inequality sweep cell")?;
            let mut max_m = f64::NEG_INFINITY;
            for (seed, lhs, rhs) in members {
                let m = if rhs > 0.0 { lhs / rhs } else { f64::NAN };
                max_m = max_m.max(m);
                csv.row(&[
                    CsvField::Float(s),
                    CsvField::Int(seed as i64),
                    CsvField::Float(lhs),
                    CsvField::Float(rhs),
                    CsvField::Float(m),
                ]);
            }
            max_per_s.push((s, max_m));
        }
        dir.write_csv(&format!("inequality_{label}.csv"), &csv)
            .map_err(RunFailure::from)?;
        let upper = &max_per_s[max_per_s.len() / 2..];
        let hi = upper.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        let lo = upper.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        let spread = hi / lo;
        summary.push_str(&format!(
            "{label}: family-max M per s = {:?}; upper-half spread = {:.3e}; stable(<=2) = {}\n",
            max_per_s
                .iter()
                .map(|r| format!("{:.3e}", r.1))
                .collect::<Vec<_>>(),
            spread,
            spread.is_finite() && spread <= 2.0
        ));
    }

    // Weighted Poincaré sweep on the central time slice.
    {
        let it0 = d.time_index(0.0).unwrap_or(0);
        let mut csv = Csv::new(&["s", "lhs", "rhs", "empirical_m"]);
        let mut ms = Vec::new();
        for &s in &vb.s_list {
            let mut pr = cfg.params;
            pr.s = s;
            let w = make_weights(d, &pr)?;
            let profile: Vec<f64> = (0..d.n_space())
                .map(|ix| {
                    let xs = (d.x(ix) - d.x_lo) / (d.x_hi - d.x_lo);
                    (std::f64::consts::PI * xs).sin()
                })
                .collect();
            let sides = verify::poincare_ratio(&profile, &w, it0)?;
            ms.push(sides.ratio());
            csv.row(&[
                CsvField::Float(s),
                CsvField::Float(sides.lhs),
                CsvField::Float(sides.rhs),
                CsvField::Float(sides.ratio()),
            ]);
        }
        dir.write_csv("poincare.csv", &csv)
            .map_err(RunFailure::from)?;
        let upper = &ms[ms.len() / 2..];
        let hi = upper.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = upper.iter().cloned().fold(f64::INFINITY, f64::min);
        summary.push_str(&format!(
            "poincare: M per s = {:?}; upper-half spread = {:.3e}\n",
            ms.iter().map(|m| format!("{m:.3e}")).collect::<Vec<_>>(),
            hi / lo
        ));
    }

    // Uniformity of the interval constant across bounded potentials.
    {
        let mut pr = cfg.params;
        pr.s = *vb.s_list.last().unwrap_or(&cfg.params.s);
        let w = make_weights(d, &pr)?;
        let base = synth::band_limited_field(d, cfg.seed ^ 0x51ed_2705, vb.max_mode, false);
        let z = verify::apply_cutoff(&base, &w);
        let mut csv = Csv::new(&["potential_seed", "empirical_m"]);
        let mut ratios = Vec::new();
        for seed in 0..vb.n_potentials as u64 {
            let p = synth::seeded_potential(d, cfg.seed ^ seed, cfg.params.m);
            let sides = verify::carleman_ratio(&z, &p, &w, InequalityVariant::Interval)?;
            ratios.push(sides.ratio());
            csv.row(&[CsvField::Int(seed as i64), CsvField::Float(sides.ratio())]);
        }
        dir.write_csv("potential_uniformity.csv", &csv)
            .map_err(RunFailure::from)?;
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        summary.push_str(&format!(
            "potential_uniformity: spread over {} potentials = {:.4} (<= 2: {})\n",
            vb.n_potentials,
            hi / lo,
            hi / lo <= 2.0
        ));
    }

    dir.write_text("verify_summary.txt", &summary)
        .map_err(RunFailure::from)?;
    print!("{summary}");
    Ok(())
}

