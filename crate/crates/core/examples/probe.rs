// temporary probe: criteria 6 and 7 at pinned parameters
use wavelab_core::control::*;
use wavelab_core::inversion::source_stability_constant;
use wavelab_core::synth;
use wavelab_core::wave::{FluxTrace, Potential};
use wavelab_core::weights::CarlemanParams;
use wavelab_core::grid::{DomainConfig, Gamma0, Side};
use std::f64::consts::PI;

fn main() {
    // Criterion 6: sensitivity decay on the default control grid.
    let d = DomainConfig { x_lo: 0.0, x_hi: 1.0, nx: 100, t_lo: -2.0, t_hi: 2.0, nt: 400, gamma0: Gamma0::Right };
    let base = CarlemanParams::default_for(&d);
    let target = ControlTarget::from_fns(&d, |x| (PI * x).sin(), |_| 0.0);
    let pa = Potential::zero(&d);
    let pb = Potential::from_fn(&d, 1.0, |x| 0.5 * (2.0 * PI * x).sin());
    let t0 = std::time::Instant::now();
    let rows = sensitivity_experiment(&d, &base, &target, &pa, &pb, &[40.0, 80.0, 160.0], 1e-10, 45000);
    for (s, row) in &rows {
        match row {
            Ok(r) => println!("s={s}: ratio={:.6e} num={:.3e} den={:.3e} cg=({},{})",
                r.ratio, r.numerator, r.denominator, r.cg_iterations.0, r.cg_iterations.1),
            Err(e) => println!("s={s}: ERROR {e}"),
        }
    }
    let r: Vec<f64> = rows.iter().filter_map(|(_, x)| x.as_ref().ok().map(|r| r.ratio)).collect();
    if r.len() == 3 {
        let slope = (r[2] / r[0]).ln() / (160.0_f64 / 40.0).ln();
        println!("slope = {slope:.3} (t={:.1}s)", t0.elapsed().as_secs_f64());
    }

    // Criterion 7: source-stability constant over s in {80, 160, 320}.
    let dh = DomainConfig { t_lo: 0.0, nt: 200, ..d };
    let q = synth::seeded_potential(&dh, 3, 1.0);
    let ga = synth::band_limited_field(&dh, 11, 5, false);
    let gb = synth::band_limited_field(&dh, 12, 5, false);
    let mut mu = FluxTrace::zeros(&dh, Side::Right);
    for (it, v) in mu.values.iter_mut().enumerate() { *v = 0.3 * (0.05 * it as f64).sin(); }
    let t1 = std::time::Instant::now();
    for s in [80.0, 160.0, 320.0] {
        let mut pr = base;
        pr.s = s;
        let c = source_stability_constant(&dh, &pr, &q, &[mu.clone()], &ga, &gb, 1e-10, 45000).unwrap();
        println!("thm14 M({s}) = {c:.6e}");
    }
    println!("t={:.1}s", t1.elapsed().as_secs_f64());
}
