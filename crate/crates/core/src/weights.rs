//! Multiplier weight functions and the admissibility conditions attached to
//! them.
//!
//! The weight is `exp(2sφ)` with `φ = exp(λψ)` and
//! `ψ(x,t) = |x − x0|² − βt² + C0`, for a multiplier point `x0` outside the
//! closed spatial interval. `C0` is chosen (by default automatically) so that
//! `min ψ = 1`. Weights are stored normalized as `exp(2s(φ − φ_max))`
//! together with the exact log-weight `2s(φ − φ_max)`; the normalization
//! multiplies every functional by a positive constant and changes no
//! minimizer and no reported ratio.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Error;
use crate::fp;
use crate::grid::{DomainConfig, Region, Side, SpaceTimeField};
use crate::Result;

/// Largest admissible value of `2s(φ_max − φ_min)`.
///
/// Beyond roughly the f64 exponent range the far tail of the weight
/// underflows to zero, which every functional tolerates; but once the range
/// exceeds this limit the weight support collapses to a few grid cells and
/// the weighted problems degenerate, so construction refuses.
pub const MAX_LOG_WEIGHT_RANGE: f64 = 6000.0;

/// Scalar parameters of the weight and of the admissibility conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarlemanParams {
    /// Multiplier point, outside the closed spatial interval.
    pub x0: f64,
    /// Time decay coefficient, in (0, 1).
    pub beta: f64,
    /// Exponent steepness in `φ = exp(λψ)`.
    pub lambda: f64,
    /// Large parameter of the weight `exp(2sφ)`.
    pub s: f64,
    /// Additive constant in ψ; `None` selects the value pinning `min ψ = 1`.
    pub c0: Option<f64>,
    /// Conjugation exponent; must lie in `(2β/(β+1), 2/(β+1))`.
    pub alpha: f64,
    /// Cut-off ramp width, in (0, T).
    pub eta: f64,
    /// Cut-off slack factor, in (0, 1).
    pub eps: f64,
    /// Bound on admissible potentials.
    pub m: f64,
}

impl CarlemanParams {
    /// Midpoint of the admissible interval for the conjugation exponent.
    pub fn alpha_midpoint(beta: f64) -> f64 {
        (2.0 * beta / (beta + 1.0) + 2.0 / (beta + 1.0)) / 2.0
    }

    /// Default parameter set for the unit interval with right-hand
    /// observation; satisfies every condition with margin.
    pub fn default_for(domain: &DomainConfig) -> CarlemanParams {
        let _ = domain;
        CarlemanParams {
            x0: -0.3,
            beta: 0.75,
            lambda: 0.3,
            s: 80.0,
            c0: None,
            alpha: 1.0,
            eta: 0.1,
            eps: 0.05,
            m: 1.0,
        }
    }

    /// Structural range checks that do not involve the domain geometry.
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.s > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "s must be positive, got {}",
                self.s
            )));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eps must lie in (0, 1), got {}",
                self.eps
            )));
        }
        if !(self.eta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.m >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "m must be non-negative, got {}",
                self.m
            )));
        }
        Ok(())
    }

    /// Effective time horizon entering ψ and the admissibility conditions.
    pub fn horizon(domain: &DomainConfig) -> f64 {
        fp::abs(domain.t_lo).max(fp::abs(domain.t_hi))
    }

    /// The constant that pins `min ψ = 1` over the closed space-time
    /// rectangle (closed-form: the minimum sits at the nearest spatial
    /// endpoint and the largest |t|).
    pub fn auto_c0(&self, domain: &DomainConfig) -> f64 {
        let d_lo = fp::abs(domain.x_lo - self.x0);
        let d_hi = fp::abs(domain.x_hi - self.x0);
        let min_dist_sq = fp::sq(d_lo.min(d_hi));
        let t_max = Self::horizon(domain);
        1.0 - (min_dist_sq - self.beta * fp::sq(t_max))
    }

    /// Value of `c0` actually used (explicit or automatic).
    pub fn effective_c0(&self, domain: &DomainConfig) -> f64 {
        self.c0.unwrap_or_else(|| self.auto_c0(domain))
    }

    /// `ψ(x, t)`
    pub fn psi(&self, domain: &DomainConfig, x: f64, t: f64) -> f64 {
        fp::sq(x - self.x0) - self.beta * fp::sq(t) + self.effective_c0(domain)
    }

    /// `φ(x, t) = exp(λ ψ(x, t))`
    pub fn phi(&self, domain: &DomainConfig, x: f64, t: f64) -> f64 {
        fp::exp(self.lambda * self.psi(domain, x, t))
    }
}

/// One admissibility condition with its measured margin.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub satisfied: bool,
    /// Distance to violation; non-negative when satisfied.
    pub margin: f64,
    pub detail: String,
}

/// Outcome of [`validate_geometry`]: one row per condition.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryReport {
    pub conditions: Vec<ConditionCheck>,
}

impl GeometryReport {
    pub fn valid(&self) -> bool {
        self.conditions.iter().all(|c| c.satisfied)
    }

    pub fn first_failure(&self) -> Option<&ConditionCheck> {
        self.conditions.iter().find(|c| !c.satisfied)
    }

    /// Error carrying the first failed condition, if any.
    pub fn into_result(self) -> Result<GeometryReport> {
        if let Some(fail) = self.first_failure() {
            return Err(Error::InvalidGeometry(format!(
                "{}: {} (margin {:.6e})",
                fail.name, fail.detail, fail.margin
            )));
        }
        Ok(self)
    }
}

/// Checks the multiplier, horizon, exponent and cut-off conditions and the
/// weight lower bound, reporting the measured margin of each.
pub fn validate_geometry(domain: &DomainConfig, params: &CarlemanParams) -> GeometryReport {
    let mut conditions = Vec::new();
    let t_max = CarlemanParams::horizon(domain);
    let sup = domain.sup_dist(params.x0);

    // Multiplier point strictly outside the closed spatial interval.
    let outside_margin = if params.x0 < domain.x_lo {
        domain.x_lo - params.x0
    } else if params.x0 > domain.x_hi {
        params.x0 - domain.x_hi
    } else {
        -(params.x0 - domain.x_lo).min(domain.x_hi - params.x0)
    };
    conditions.push(ConditionCheck {
        name: "multiplier_point_outside",
        satisfied: outside_margin > 0.0,
        margin: outside_margin,
        detail: format!(
            "x0 = {} vs spatial interval [{}, {}]",
            params.x0, domain.x_lo, domain.x_hi
        ),
    });

    // Every endpoint with (x − x0)·ν ≥ 0 must be observed.
    let mut boundary_margin = f64::INFINITY;
    let mut missing: Option<Side> = None;
    for side in [Side::Left, Side::Right] {
        let outflow = (match side {
            Side::Left => domain.x_lo,
            Side::Right => domain.x_hi,
        } - params.x0)
            * side.normal();
        if domain.gamma0.contains(side) {
            continue;
        }
        // Unobserved endpoints need strictly inward multiplier flow.
        boundary_margin = boundary_margin.min(-outflow);
        if outflow >= 0.0 {
            missing = Some(side);
        }
    }
    conditions.push(ConditionCheck {
        name: "observed_boundary_covers_outflow",
        satisfied: missing.is_none(),
        margin: boundary_margin,
        detail: match missing {
            Some(side) => format!("endpoint {side:?} has (x - x0)·ν >= 0 but is not observed"),
            None => String::from("all endpoints with (x - x0)·ν >= 0 are observed"),
        },
    });

    // Horizon exceeds the largest distance to the multiplier point.
    conditions.push(ConditionCheck {
        name: "horizon_exceeds_distance",
        satisfied: t_max > sup,
        margin: t_max - sup,
        detail: format!("T = {t_max} vs sup |x - x0| = {sup}"),
    });

    // Weighted horizon condition: sup |x − x0| < β T.
    conditions.push(ConditionCheck {
        name: "beta_horizon",
        satisfied: sup < params.beta * t_max,
        margin: params.beta * t_max - sup,
        detail: format!("beta*T = {} vs sup |x - x0| = {sup}", params.beta * t_max),
    });

    // Conjugation exponent inside its admissible interval (n = 1).
    let lo = 2.0 * params.beta / (params.beta + 1.0);
    let hi = 2.0 / (params.beta + 1.0);
    let alpha_margin = (params.alpha - lo).min(hi - params.alpha);
    conditions.push(ConditionCheck {
        name: "conjugation_exponent_interval",
        satisfied: alpha_margin > 0.0,
        margin: alpha_margin,
        detail: format!("alpha = {} vs ({lo}, {hi})", params.alpha),
    });

    // Cut-off margin: (1 − ε)(T − η)β ≥ sup |x − x0|.
    let cutoff_lhs = (1.0 - params.eps) * (t_max - params.eta) * params.beta;
    conditions.push(ConditionCheck {
        name: "cutoff_margin",
        satisfied: cutoff_lhs >= sup && params.eta < t_max,
        margin: cutoff_lhs - sup,
        detail: format!("(1 - eps)(T - eta)beta = {cutoff_lhs} vs sup |x - x0| = {sup}"),
    });

    // ψ ≥ 1 over the grid (exact equality with the automatic constant).
    let c0 = params.effective_c0(domain);
    let d_lo = fp::abs(domain.x_lo - params.x0);
    let d_hi = fp::abs(domain.x_hi - params.x0);
    let psi_min = fp::sq(d_lo.min(d_hi)) - params.beta * fp::sq(t_max) + c0;
    conditions.push(ConditionCheck {
        name: "weight_exponent_at_least_one",
        satisfied: psi_min >= 1.0 - 1e-12,
        margin: psi_min - 1.0,
        detail: format!("min psi = {psi_min} with c0 = {c0}"),
    });

    GeometryReport { conditions }
}

/// Precomputed weight data on the full space-time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    domain: DomainConfig,
    /// Parameters the field was built from (with `c0` resolved).
    pub params: CarlemanParams,
    /// `ψ(x, t)`
    pub psi: SpaceTimeField,
    /// `φ(x, t) = exp(λψ)`
    pub phi: SpaceTimeField,
    /// `2s(φ − φ_max)`, exact in the log domain.
    pub log_weight: SpaceTimeField,
    /// `exp(2s(φ − φ_max)) ∈ [0, 1]`, exactly 1 at every argmax of φ.
    pub weight: SpaceTimeField,
    pub phi_max: f64,
    pub phi_min: f64,
    /// Cut-off χ(t) per time level: quintic ramps of width η inside the
    /// horizon ends, plateau 1 in between.
    pub cutoff: Vec<f64>,
}

/// Quintic smoothstep: 0 for u ≤ 0, 1 for u ≥ 1, C² across both ends.
pub fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

/// Builds the weight field; fails on invalid geometry and when the log-weight
/// range leaves [`MAX_LOG_WEIGHT_RANGE`].
pub fn make_weights(domain: &DomainConfig, params: &CarlemanParams) -> Result<WeightField> {
    domain.validate()?;
    params.validate()?;
    validate_geometry(domain, params).into_result()?;

    let mut resolved = *params;
    resolved.c0 = Some(params.effective_c0(domain));

    let psi = SpaceTimeField::from_fn(domain, |x, t| resolved.psi(domain, x, t));
    let phi = SpaceTimeField::from_fn(domain, |x, t| resolved.phi(domain, x, t));
    let (mut phi_max, mut phi_min) = (f64::NEG_INFINITY, f64::INFINITY);
    for &v in phi.values() {
        phi_max = phi_max.max(v);
        phi_min = phi_min.min(v);
    }

    let log_range = 2.0 * resolved.s * (phi_max - phi_min);
    if !log_range.is_finite() {
        return Err(Error::NonFinite("weight exponent"));
    }
    if log_range > MAX_LOG_WEIGHT_RANGE {
        return Err(Error::ParameterRange(format!(
            "2s(phi_max - phi_min) = {log_range:.3e} exceeds the supported range \
             {MAX_LOG_WEIGHT_RANGE:.1e}; reduce s or lambda"
        )));
    }

    let mut log_weight = SpaceTimeField::zeros(domain);
    let mut weight = SpaceTimeField::zeros(domain);
    for it in 0..=domain.nt {
        for ix in 0..=domain.nx + 1 {
            let lw = 2.0 * resolved.s * (phi.at(ix, it) - phi_max);
            log_weight.set(ix, it, lw);
            weight.set(ix, it, fp::exp(lw));
        }
    }

    let t_max = CarlemanParams::horizon(domain);
    let cutoff = (0..=domain.nt)
        .map(|it| {
            let t = domain.t(it);
            smoothstep((t_max + t) / resolved.eta) * smoothstep((t_max - t) / resolved.eta)
        })
        .collect();

    Ok(WeightField {
        domain: *domain,
        params: resolved,
        psi,
        phi,
        log_weight,
        weight,
        phi_max,
        phi_min,
        cutoff,
    })
}

impl WeightField {
    pub fn domain(&self) -> &DomainConfig {
        &self.domain
    }

    pub fn s(&self) -> f64 {
        self.params.s
    }

    /// Log-weight at the boundary node of `side`.
    pub fn boundary_log_weight(&self, side: Side, it: usize) -> f64 {
        self.log_weight.at(self.domain.boundary_ix(side), it)
    }

    /// Log-weight interpolated to the spatial edge between `ix` and `ix+1`.
    pub fn edge_log_weight(&self, ix: usize, it: usize) -> f64 {
        0.5 * (self.log_weight.at(ix, it) + self.log_weight.at(ix + 1, it))
    }
}

/// Rectangle-rule quadrature of `weight · field²` over a region.
pub fn weighted_l2(
    field: &SpaceTimeField,
    weights: &WeightField,
    region: Region,
) -> Result<f64> {
    field.same_shape(&weights.weight)?;
    let d = &weights.domain;
    let (dx, dt) = (d.dx(), d.dt());
    match region {
        Region::Interior => {
            let mut acc = 0.0;
            for it in 0..=d.nt {
                for ix in 1..=d.nx {
                    acc += weights.weight.at(ix, it) * fp::sq(field.at(ix, it));
                }
            }
            Ok(acc * dx * dt)
        }
        Region::Gamma0 => {
            let mut acc = 0.0;
            for side in d.gamma0.sides() {
                let bx = d.boundary_ix(side);
                for it in 0..=d.nt {
                    acc += weights.weight.at(bx, it) * fp::sq(field.at(bx, it));
                }
            }
            Ok(acc * dt)
        }
        Region::TimeSlice(it) => {
            if it > d.nt {
                return Err(Error::RegionOutOfRange(format!(
                    "time slice {it} outside 0..={}",
                    d.nt
                )));
            }
            let mut acc = 0.0;
            for ix in 1..=d.nx {
                acc += weights.weight.at(ix, it) * fp::sq(field.at(ix, it));
            }
            Ok(acc * dx)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Gamma0;

    fn default_domain(nx: usize, nt: usize) -> DomainConfig {
        DomainConfig {
            x_lo: 0.0,
            x_hi: 1.0,
            nx,
            t_lo: -2.0,
            t_hi: 2.0,
            nt,
            gamma0: Gamma0::Right,
        }
    }

    fn default_params() -> CarlemanParams {
        CarlemanParams::default_for(&default_domain(10, 10))
    }

    #[test]
    fn default_geometry_is_valid_with_expected_margins() {
        let d = default_domain(10, 10);
        let p = default_params();
        let report = validate_geometry(&d, &p);
        assert!(report.valid(), "{report:?}");
        // sup |x - x0| = 1.3, beta*T = 1.5, T = 2.
        let beta = report
            .conditions
            .iter()
            .find(|c| c.name == "beta_horizon")
            .unwrap();
        assert!((beta.margin - 0.2).abs() < 1e-12);
        let horizon = report
            .conditions
            .iter()
            .find(|c| c.name == "horizon_exceeds_distance")
            .unwrap();
        assert!((horizon.margin - 0.7).abs() < 1e-12);
    }

    #[test]
    fn right_endpoint_must_be_observed() {
        let mut d = default_domain(10, 10);
        d.gamma0 = Gamma0::Left;
        let report = validate_geometry(&d, &default_params());
        assert!(!report.valid());
        let cond = report
            .conditions
            .iter()
            .find(|c| c.name == "observed_boundary_covers_outflow")
            .unwrap();
        assert!(!cond.satisfied);
        // Left-only observation is fine once the multiplier sits right of the interval.
        let mut p = default_params();
        p.x0 = 1.3;
        let report = validate_geometry(&d, &p);
        assert!(report
            .conditions
            .iter()
            .find(|c| c.name == "observed_boundary_covers_outflow")
            .unwrap()
            .satisfied);
    }

    #[test]
    fn small_beta_violates_horizon_condition() {
        let mut p = default_params();
        p.beta = 0.6;
        let report = validate_geometry(&default_domain(10, 10), &p);
        assert!(!report.valid());
        let cond = report
            .conditions
            .iter()
            .find(|c| c.name == "beta_horizon")
            .unwrap();
        assert!(!cond.satisfied);
        // 1.3 >= 0.6*2 = 1.2, margin -0.1.
        assert!((cond.margin + 0.1).abs() < 1e-12);
    }

    #[test]
    fn interior_multiplier_point_is_rejected() {
        let mut p = default_params();
        p.x0 = 0.5;
        let report = validate_geometry(&default_domain(10, 10), &p);
        assert!(!report.valid());
        assert!(!report
            .conditions
            .iter()
            .find(|c| c.name == "multiplier_point_outside")
            .unwrap()
            .satisfied);
        assert!(make_weights(&default_domain(10, 10), &p).is_err());
    }

    #[test]
    fn auto_c0_pins_min_psi_to_one() {
        let d = default_domain(20, 40);
        let p = default_params();
        // min(|x - x0|^2 - beta t^2) = 0.09 - 3 = -2.91, so c0 = 3.91.
        assert!((p.auto_c0(&d) - 3.91).abs() < 1e-12);
        let w = make_weights(&d, &p).unwrap();
        let psi_min = w.psi.values().iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((psi_min - 1.0).abs() < 1e-12);
        // psi at (x = 1, t = 0): 1.69 + 3.91 = 5.6.
        let it0 = d.time_index(0.0).unwrap();
        assert!((w.psi.at(d.nx + 1, it0) - 5.6).abs() < 1e-12);
    }

    #[test]
    fn weight_is_normalized_to_one_at_argmax() {
        let d = default_domain(14, 10);
        let w = make_weights(&d, &default_params()).unwrap();
        let max_w = w.weight.values().iter().cloned().fold(0.0_f64, f64::max);
        assert_eq!(max_w, 1.0);
        assert!(w.weight.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        // phi >= e^lambda everywhere since psi >= 1.
        let phi_floor = fp::exp(w.params.lambda);
        assert!(w.phi.values().iter().all(|&v| v >= phi_floor - 1e-12));
    }

    #[test]
    fn psi_is_even_in_time_and_phi_peaks_at_zero() {
        let d = default_domain(8, 16);
        let w = make_weights(&d, &default_params()).unwrap();
        for ix in 0..=d.nx + 1 {
            for it in 0..=d.nt {
                let mirrored = d.nt - it;
                assert!((w.psi.at(ix, it) - w.psi.at(ix, mirrored)).abs() < 1e-12);
            }
            let it0 = d.time_index(0.0).unwrap();
            for it in 0..=d.nt {
                assert!(w.phi.at(ix, it) <= w.phi.at(ix, it0) + 1e-15);
            }
        }
    }

    #[test]
    fn cutoff_has_plateau_and_vanishing_ends() {
        let d = default_domain(6, 400);
        let w = make_weights(&d, &default_params()).unwrap();
        assert_eq!(w.cutoff[0], 0.0);
        assert_eq!(w.cutoff[d.nt], 0.0);
        // Plateau on [-T + eta, T - eta].
        for it in 0..=d.nt {
            let t = d.t(it);
            if t >= -2.0 + 0.1 && t <= 2.0 - 0.1 {
                assert_eq!(w.cutoff[it], 1.0, "t = {t}");
            }
            assert!((0.0..=1.0).contains(&w.cutoff[it]));
        }
    }

    #[test]
    fn excessive_weight_range_is_refused() {
        let d = default_domain(10, 10);
        let mut p = default_params();
        p.lambda = 5.0; // phi range becomes astronomically wide
        p.s = 80.0;
        match make_weights(&d, &p) {
            Err(Error::ParameterRange(_)) => {}
            other => panic!("expected a parameter-range error, got {other:?}"),
        }
    }

    #[test]
    fn quadrature_matches_known_integrals() {
        let d = DomainConfig {
            x_lo: 0.0,
            x_hi: 1.0,
            nx: 200,
            t_lo: -4.0,
            t_hi: 4.0,
            nt: 50,
            gamma0: Gamma0::Right,
        };
        // Valid geometry (sup |x - x0| = 3 < beta*T = 3.6) with s so small
        // the weight is 1 to machine precision.
        let mut p = default_params();
        p.x0 = -2.0;
        p.beta = 0.9;
        p.s = 1e-300;
        let w = make_weights(&d, &p).unwrap();

        let ones = SpaceTimeField::from_fn(&d, |_, _| 1.0);
        let v = weighted_l2(&ones, &w, Region::Interior).unwrap();
        let measure = (d.x_hi - d.x_lo) * (d.t_hi - d.t_lo);
        assert!(
            (v - measure).abs() / measure < 1.0 / d.nx as f64 + 1.0 / d.nt as f64,
            "v = {v}"
        );

        let zero = SpaceTimeField::zeros(&d);
        assert_eq!(weighted_l2(&zero, &w, Region::Interior).unwrap(), 0.0);

        // sin^2(pi x) integrates to 1/2 on a slice.
        let sinx = SpaceTimeField::from_fn(&d, |x, _| fp::sin(core::f64::consts::PI * x));
        let slice = weighted_l2(&sinx, &w, Region::TimeSlice(0)).unwrap();
        assert!((slice - 0.5).abs() < 1e-3, "slice = {slice}");

        assert!(weighted_l2(&sinx, &w, Region::TimeSlice(d.nt + 1)).is_err());
    }

    #[test]
    fn alpha_midpoint_is_one_in_dimension_one() {
        for beta in [0.3, 0.5, 0.75, 0.9] {
            assert!((CarlemanParams::alpha_midpoint(beta) - 1.0).abs() < 1e-15);
        }
    }
}
