//! Property tests for the structural invariants of the core operations.

use proptest::prelude::*;

use wavelab_core::grid::{DomainConfig, Gamma0, SpaceTimeField};
use wavelab_core::inversion::truncate;
use wavelab_core::wave::{apply_adjoint, apply_wave_operator, Potential};
use wavelab_core::weights::{make_weights, smoothstep, CarlemanParams};
use wavelab_core::{Region, WeightField};

fn domain(nx: usize, nt: usize, symmetric: bool) -> DomainConfig {
    DomainConfig {
        x_lo: 0.0,
        x_hi: 1.0,
        nx,
        t_lo: if symmetric { -2.0 } else { 0.0 },
        t_hi: 2.0,
        nt,
        gamma0: Gamma0::Right,
    }
}

fn weights_for(d: &DomainConfig, s: f64, beta: f64, lambda: f64) -> WeightField {
    let mut p = CarlemanParams::default_for(d);
    p.s = s;
    p.beta = beta;
    p.lambda = lambda;
    make_weights(d, &p).expect("valid geometry")
}

proptest! {
    #[test]
    fn truncation_clamps_and_contracts(
        values in proptest::collection::vec(-10.0_f64..10.0, 6..40),
        m in 0.0_f64..5.0,
    ) {
        let q = Potential { values: values.clone(), m: 10.0, time_dependent: None };
        let t = truncate(&q, m);
        for (&orig, &clamped) in values.iter().zip(&t.values) {
            prop_assert!(clamped.abs() <= m + 1e-15);
            // 1-Lipschitz against the identity on in-ball points.
            prop_assert!((clamped - orig.clamp(-m, m)).abs() == 0.0);
        }
        // Idempotent.
        let tt = truncate(&t, m);
        prop_assert_eq!(&tt.values, &t.values);
    }

    #[test]
    fn weight_exponent_is_time_symmetric(
        // The cut-off margin (1-eps)(T-eta)beta >= sup|x-x0| = 1.3 needs
        // beta >= 0.72 at the default eta, eps, T.
        beta in 0.73_f64..0.9,
        lambda in 0.1_f64..0.5,
        s in 1.0_f64..60.0,
        nx in 4_usize..12,
        nt in 4_usize..12,
    ) {
        let d = domain(nx, 2 * nt, true);
        let w = weights_for(&d, s, beta, lambda);
        for it in 0..=d.nt {
            for ix in 0..=d.nx + 1 {
                let mirrored = d.nt - it;
                prop_assert!((w.psi.at(ix, it) - w.psi.at(ix, mirrored)).abs() < 1e-12);
            }
        }
        // Normalized weight peaks at exactly 1.
        let max = w.weight.values().iter().cloned().fold(0.0_f64, f64::max);
        prop_assert_eq!(max, 1.0);
    }

    #[test]
    fn adjoint_identity_on_random_grids(
        nx in 4_usize..12,
        nt in 4_usize..12,
        seed in 0_u64..1000,
        qc in -1.0_f64..1.0,
    ) {
        use rand_core::{RngCore, SeedableRng};
        let d = domain(nx, nt, false);
        let q = Potential::from_fn(&d, 1.0, |x| qc * (3.0 * x).cos());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = || (rng.next_u64() >> 11) as f64 / (1u64 << 52) as f64 - 1.0;
        let mut z = SpaceTimeField::zeros(&d);
        for it in 0..=d.nt {
            for ix in 1..=d.nx {
                z.set(ix, it, uniform());
            }
        }
        let mut r = SpaceTimeField::zeros(&d);
        for it in 0..=d.nt {
            for ix in 0..=d.nx + 1 {
                r.set(ix, it, uniform());
            }
        }
        let lz = apply_wave_operator(&z, &q, &d).unwrap();
        let ltr = apply_adjoint(&r, &q, &d).unwrap();
        let mut lhs = 0.0;
        for it in 1..d.nt {
            for ix in 1..=d.nx {
                lhs += lz.at(ix, it) * r.at(ix, it);
            }
        }
        let rhs = z.dot(&ltr);
        let scale = (nx * nt) as f64 * lz.max_abs().max(1.0) * r.max_abs().max(1.0);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }

    #[test]
    fn quadrature_is_quadratically_homogeneous(
        seed in 0_u64..500,
        c in -4.0_f64..4.0,
        s in 0.5_f64..30.0,
    ) {
        let d = domain(8, 10, true);
        let w = weights_for(&d, s, 0.75, 0.3);
        let z = wavelab_core::synth::band_limited_field(&d, seed, 3, false);
        let mut scaled = z.clone();
        scaled.scale(c);
        let base = wavelab_core::weights::weighted_l2(&z, &w, Region::Interior).unwrap();
        let big = wavelab_core::weights::weighted_l2(&scaled, &w, Region::Interior).unwrap();
        prop_assert!((big - c * c * base).abs() <= 1e-12 * base.max(1e-30) * (1.0 + c * c));
    }

    #[test]
    fn smoothstep_is_monotone_in_range(a in -0.5_f64..1.5, b in -0.5_f64..1.5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (sl, sh) = (smoothstep(lo), smoothstep(hi));
        prop_assert!((0.0..=1.0).contains(&sl));
        prop_assert!((0.0..=1.0).contains(&sh));
        prop_assert!(sl <= sh + 1e-15);
    }
}
