//! Discrete wave operator `∂t² − Δ + q`, its exact algebraic transpose, and
//! an explicit leapfrog forward solver with boundary-flux extraction.
//!
//! The space-time operator uses centered second differences in both
//! directions; residuals live on interior space nodes and interior time
//! levels. The boundary flux is the one-sided first-order normal difference,
//! which is the discrete object the minimization modules pair against.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::fp;
use crate::grid::{DomainConfig, Side, SpaceTimeField};
use crate::Result;

/// Potential `q(x)` (optionally `p(x, t)`) together with its claimed bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    /// Values on all spatial nodes (boundary entries unused by the stencil).
    pub values: Vec<f64>,
    /// Claimed uniform bound.
    pub m: f64,
    /// Optional time-dependent values; when present they override `values`.
    pub time_dependent: Option<SpaceTimeField>,
}

impl Potential {
    pub fn zero(domain: &DomainConfig) -> Potential {
        Potential {
            values: vec![0.0; domain.n_space()],
            m: 0.0,
            time_dependent: None,
        }
    }

    pub fn from_fn(domain: &DomainConfig, m: f64, mut f: impl FnMut(f64) -> f64) -> Potential {
        Potential {
            values: (0..domain.n_space()).map(|ix| f(domain.x(ix))).collect(),
            m,
            time_dependent: None,
        }
    }

    pub fn from_fn_xt(
        domain: &DomainConfig,
        m: f64,
        f: impl FnMut(f64, f64) -> f64,
    ) -> Potential {
        Potential {
            values: vec![0.0; domain.n_space()],
            m,
            time_dependent: Some(SpaceTimeField::from_fn(domain, f)),
        }
    }

    #[inline(always)]
    pub fn at(&self, ix: usize, it: usize) -> f64 {
        match &self.time_dependent {
            Some(g) => g.at(ix, it),
            None => self.values[ix],
        }
    }

    pub fn max_abs(&self) -> f64 {
        match &self.time_dependent {
            Some(g) => g.max_abs(),
            None => self.values.iter().fold(0.0_f64, |m, &v| m.max(fp::abs(v))),
        }
    }

    /// True when the values actually stay inside the claimed ball.
    pub fn in_ball(&self) -> bool {
        self.max_abs() <= self.m + 1e-12
    }

    pub fn matches(&self, domain: &DomainConfig) -> Result<()> {
        let ok = match &self.time_dependent {
            Some(g) => g.shape() == (domain.nx, domain.nt),
            None => self.values.len() == domain.n_space(),
        };
        if !ok {
            return Err(Error::InvalidConfig(alloc::format!(
                "potential does not match the grid (need {} spatial nodes)",
                domain.n_space()
            )));
        }
        Ok(())
    }
}

/// Boundary normal-derivative time series on one side (units: field per length).
#[derive(Debug, Clone, PartialEq)]
pub struct FluxTrace {
    pub side: Side,
    /// One value per time level (`nt + 1` entries).
    pub values: Vec<f64>,
}

impl FluxTrace {
    pub fn zeros(domain: &DomainConfig, side: Side) -> FluxTrace {
        FluxTrace {
            side,
            values: vec![0.0; domain.n_time()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, &v| m.max(fp::abs(v)))
    }

    /// `self − other`, matching sides required.
    pub fn diff(&self, other: &FluxTrace) -> Result<FluxTrace> {
        if self.side != other.side || self.len() != other.len() {
            return Err(Error::InvalidConfig(alloc::format!(
                "flux traces incompatible: {:?}/{} vs {:?}/{}",
                self.side,
                self.len(),
                other.side,
                other.len()
            )));
        }
        Ok(FluxTrace {
            side: self.side,
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(a, b)| a - b)
                .collect(),
        })
    }
}

/// Initial and boundary data for the forward problem.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveData {
    /// Initial position on all spatial nodes.
    pub init_pos: Vec<f64>,
    /// Initial velocity on all spatial nodes.
    pub init_vel: Vec<f64>,
    /// Interior source term; `None` means zero.
    pub source: Option<SpaceTimeField>,
    /// Dirichlet values on the left endpoint per time level.
    pub bc_left: Vec<f64>,
    /// Dirichlet values on the right endpoint per time level.
    pub bc_right: Vec<f64>,
}

impl WaveData {
    pub fn zero(domain: &DomainConfig) -> WaveData {
        WaveData {
            init_pos: vec![0.0; domain.n_space()],
            init_vel: vec![0.0; domain.n_space()],
            source: None,
            bc_left: vec![0.0; domain.n_time()],
            bc_right: vec![0.0; domain.n_time()],
        }
    }

    pub fn validate(&self, domain: &DomainConfig) -> Result<()> {
        if self.init_pos.len() != domain.n_space()
            || self.init_vel.len() != domain.n_space()
            || self.bc_left.len() != domain.n_time()
            || self.bc_right.len() != domain.n_time()
        {
            return Err(Error::InvalidConfig(alloc::format!(
                "wave data arrays do not match the grid ({} spatial nodes, {} time levels)",
                domain.n_space(),
                domain.n_time()
            )));
        }
        if let Some(src) = &self.source {
            src.matches_domain(domain)?;
        }
        // Corner compatibility between initial position and boundary data.
        let cl = fp::abs(self.init_pos[0] - self.bc_left[0]);
        let cr = fp::abs(self.init_pos[domain.nx + 1] - self.bc_right[0]);
        let scale = 1.0 + self.init_pos.iter().fold(0.0_f64, |m, &v| m.max(fp::abs(v)));
        if cl > 1e-12 * scale || cr > 1e-12 * scale {
            return Err(Error::InvalidConfig(alloc::format!(
                "initial position and boundary data disagree at the corners \
                 (left {cl:.3e}, right {cr:.3e})"
            )));
        }
        Ok(())
    }
}

/// Residual of the space-time operator: centered second differences plus the
/// potential term, defined on `ix ∈ 1..=nx`, `it ∈ 1..=nt−1`, zero elsewhere.
pub fn apply_wave_operator(
    z: &SpaceTimeField,
    q: &Potential,
    domain: &DomainConfig,
) -> Result<SpaceTimeField> {
    z.matches_domain(domain)?;
    q.matches(domain)?;
    let (dx, dt) = (domain.dx(), domain.dt());
    let (idt2, idx2) = (1.0 / (dt * dt), 1.0 / (dx * dx));
    let mut out = SpaceTimeField::zeros(domain);
    for it in 1..domain.nt {
        for ix in 1..=domain.nx {
            let utt = (z.at(ix, it + 1) - 2.0 * z.at(ix, it) + z.at(ix, it - 1)) * idt2;
            let uxx = (z.at(ix + 1, it) - 2.0 * z.at(ix, it) + z.at(ix - 1, it)) * idx2;
            out.set(ix, it, utt - uxx + q.at(ix, it) * z.at(ix, it));
        }
    }
    Ok(out)
}

/// Exact algebraic transpose of [`apply_wave_operator`] as a linear map on
/// Dirichlet-homogeneous fields, for the plain (unweighted) inner product of
/// the raw storage: `⟨L z, r⟩ = ⟨z, Lᵀ r⟩`.
pub fn apply_adjoint(
    r: &SpaceTimeField,
    q: &Potential,
    domain: &DomainConfig,
) -> Result<SpaceTimeField> {
    r.matches_domain(domain)?;
    q.matches(domain)?;
    let (dx, dt) = (domain.dx(), domain.dt());
    let (idt2, idx2) = (1.0 / (dt * dt), 1.0 / (dx * dx));
    // Residual support is the interior stencil range; everything else is 0.
    let rr = |ix: usize, it: usize| -> f64 {
        if ix >= 1 && ix <= domain.nx && it >= 1 && it < domain.nt {
            r.at(ix, it)
        } else {
            0.0
        }
    };
    let mut out = SpaceTimeField::zeros(domain);
    for it in 0..=domain.nt {
        for ix in 1..=domain.nx {
            let t_part = (rr(ix, it.wrapping_sub(1)) + rr(ix, it + 1)) * idt2;
            let x_part = (rr(ix.wrapping_sub(1), it) + rr(ix + 1, it)) * idx2;
            let center = if it >= 1 && it < domain.nt {
                (-2.0 * idt2 + 2.0 * idx2 + q.at(ix, it)) * r.at(ix, it)
            } else {
                0.0
            };
            out.set(ix, it, t_part - x_part + center);
        }
    }
    Ok(out)
}

/// One-sided first-order discrete normal derivative of a solution field.
pub fn extract_flux(w: &SpaceTimeField, domain: &DomainConfig, side: Side) -> FluxTrace {
    let dx = domain.dx();
    let values = (0..=domain.nt)
        .map(|it| match side {
            Side::Right => (w.at(domain.nx + 1, it) - w.at(domain.nx, it)) / dx,
            Side::Left => (w.at(0, it) - w.at(1, it)) / dx,
        })
        .collect();
    FluxTrace { side, values }
}

/// Time derivative of a trace: centered differences at interior indices,
/// one-sided at the ends. Exact on affine series.
pub fn time_derivative_trace(f: &FluxTrace, dt: f64) -> FluxTrace {
    let n = f.values.len();
    assert!(n >= 3, "trace must have at least 3 samples");
    let v = &f.values;
    let mut out = Vec::with_capacity(n);
    out.push((v[1] - v[0]) / dt);
    for i in 1..n - 1 {
        out.push((v[i + 1] - v[i - 1]) / (2.0 * dt));
    }
    out.push((v[n - 1] - v[n - 2]) / dt);
    FluxTrace {
        side: f.side,
        values: out,
    }
}

/// Options for the explicit time stepper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeapfrogOptions {
    /// Required margin below the stability limit `dt ≤ cfl_safety · dx`.
    pub cfl_safety: f64,
    /// Subdivide the time step to satisfy the stability bound instead of
    /// failing; the returned field lives on the configured grid either way.
    pub auto_subcycle: bool,
    /// Abort threshold on `max |field|`.
    pub blowup_threshold: f64,
    /// Start with `w(dt) = w0 + dt·w1` instead of the second-order Taylor
    /// step. This matches the forward-difference convention of the duality
    /// pairing and makes the control closed loop exact at the discrete level.
    pub first_order_init: bool,
}

impl Default for LeapfrogOptions {
    fn default() -> Self {
        LeapfrogOptions {
            cfl_safety: 0.9,
            auto_subcycle: true,
            blowup_threshold: 1e12,
            first_order_init: false,
        }
    }
}

/// Explicit second-order leapfrog march for
/// `∂t²w − Δw + q w = h`, `w = bc` on the boundary, from `(w0, w1)`.
///
/// The first step is the Taylor start
/// `w(dt) = w0 + dt·w1 + dt²/2·(Δw0 − q w0 + h(0))`. When the configured
/// `dt` violates the stability bound the march subdivides each step (the
/// stored solution still lives on the configured levels); boundary data,
/// sources and time-dependent potentials are interpolated linearly in time.
/// Returns the solution and the flux trace on each observed side.
pub fn leapfrog_solve(
    domain: &DomainConfig,
    data: &WaveData,
    q: &Potential,
    opts: &LeapfrogOptions,
) -> Result<(SpaceTimeField, Vec<FluxTrace>)> {
    domain.validate()?;
    data.validate(domain)?;
    q.matches(domain)?;
    let (dx, dt) = (domain.dx(), domain.dt());
    let limit = opts.cfl_safety * dx;
    let sub = if dt <= limit {
        1
    } else if opts.auto_subcycle {
        let k = (dt / limit) as usize + 1;
        k.max(2)
    } else {
        return Err(Error::CflViolation { dt, dx, limit });
    };
    let dtf = dt / sub as f64;
    let n = domain.n_space();
    let (idx2, half_dtf2) = (1.0 / (dx * dx), 0.5 * dtf * dtf);

    // Linear interpolation helpers on the coarse time axis.
    let frac_of = |step: usize| -> (usize, usize, f64) {
        let j = step / sub;
        let r = step % sub;
        if r == 0 || j + 1 > domain.nt {
            (j.min(domain.nt), j.min(domain.nt), 0.0)
        } else {
            (j, j + 1, r as f64 / sub as f64)
        }
    };
    let q_at = |ix: usize, step: usize| -> f64 {
        match &q.time_dependent {
            None => q.values[ix],
            Some(_) => {
                let (j0, j1, f) = frac_of(step);
                (1.0 - f) * q.at(ix, j0) + f * q.at(ix, j1)
            }
        }
    };
    let h_at = |ix: usize, step: usize| -> f64 {
        match &data.source {
            None => 0.0,
            Some(h) => {
                let (j0, j1, f) = frac_of(step);
                (1.0 - f) * h.at(ix, j0) + f * h.at(ix, j1)
            }
        }
    };
    let bc_at = |bc: &[f64], step: usize| -> f64 {
        let (j0, j1, f) = frac_of(step);
        (1.0 - f) * bc[j0] + f * bc[j1]
    };

    let mut field = SpaceTimeField::zeros(domain);
    let mut prev: Vec<f64> = data.init_pos.clone();
    for ix in 0..n {
        field.set(ix, 0, prev[ix]);
    }

    // First (possibly subdivided) step: Taylor start by default.
    let mut cur = vec![0.0; n];
    for ix in 1..=domain.nx {
        cur[ix] = if opts.first_order_init {
            prev[ix] + dtf * data.init_vel[ix]
        } else {
            let lap = (prev[ix + 1] - 2.0 * prev[ix] + prev[ix - 1]) * idx2;
            prev[ix]
                + dtf * data.init_vel[ix]
                + half_dtf2 * (lap - q_at(ix, 0) * prev[ix] + h_at(ix, 0))
        };
    }
    cur[0] = bc_at(&data.bc_left, 1);
    cur[n - 1] = bc_at(&data.bc_right, 1);

    let total_steps = domain.nt * sub;
    let mut next = vec![0.0; n];
    for step in 1..=total_steps {
        if step % sub == 0 {
            let it = step / sub;
            let mut max_abs = 0.0_f64;
            for ix in 0..n {
                field.set(ix, it, cur[ix]);
                max_abs = max_abs.max(fp::abs(cur[ix]));
            }
            if !(max_abs <= opts.blowup_threshold) {
                return Err(Error::BlowUp {
                    max_abs,
                    step: it,
                });
            }
            if it == domain.nt {
                break;
            }
        }
        let dtf2 = dtf * dtf;
        for ix in 1..=domain.nx {
            let lap = (cur[ix + 1] - 2.0 * cur[ix] + cur[ix - 1]) * idx2;
            next[ix] =
                2.0 * cur[ix] - prev[ix] + dtf2 * (lap - q_at(ix, step) * cur[ix] + h_at(ix, step));
        }
        next[0] = bc_at(&data.bc_left, step + 1);
        next[n - 1] = bc_at(&data.bc_right, step + 1);
        core::mem::swap(&mut prev, &mut cur);
        core::mem::swap(&mut cur, &mut next);
    }

    let fluxes = domain
        .gamma0
        .sides()
        .map(|side| extract_flux(&field, domain, side))
        .collect();
    Ok((field, fluxes))
}

/// Discrete energy `½ Σ (∂t w)² dx + ½ Σ_edges (∂x w)² dx` at one time level
/// (centered time derivative inside, one-sided at the ends).
pub fn discrete_energy(w: &SpaceTimeField, domain: &DomainConfig, it: usize) -> f64 {
    let (dx, dt) = (domain.dx(), domain.dt());
    let mut kin = 0.0;
    for ix in 1..=domain.nx {
        let wt = if it == 0 {
            (w.at(ix, 1) - w.at(ix, 0)) / dt
        } else if it == domain.nt {
            (w.at(ix, it) - w.at(ix, it - 1)) / dt
        } else {
            (w.at(ix, it + 1) - w.at(ix, it - 1)) / (2.0 * dt)
        };
        kin += wt * wt;
    }
    let mut pot = 0.0;
    for ix in 0..=domain.nx {
        let wx = (w.at(ix + 1, it) - w.at(ix, it)) / dx;
        pot += wx * wx;
    }
    0.5 * (kin + pot) * dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Gamma0;
    use core::f64::consts::PI;
    use rand_core::{RngCore, SeedableRng};

    fn dom(nx: usize, nt: usize) -> DomainConfig {
        DomainConfig {
            x_lo: 0.0,
            x_hi: 1.0,
            nx,
            t_lo: 0.0,
            t_hi: 1.0,
            nt,
            gamma0: Gamma0::Both,
        }
    }

    fn uniform(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    fn random_field(domain: &DomainConfig, seed: u64, dirichlet: bool) -> SpaceTimeField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut f = SpaceTimeField::zeros(domain);
        for it in 0..=domain.nt {
            for ix in 0..=domain.nx + 1 {
                let boundary = ix == 0 || ix == domain.nx + 1;
                if !(dirichlet && boundary) {
                    f.set(ix, it, uniform(&mut rng));
                }
            }
        }
        f
    }

    #[test]
    fn operator_is_zero_on_zero_field() {
        let d = dom(8, 10);
        let z = SpaceTimeField::zeros(&d);
        let r = apply_wave_operator(&z, &Potential::zero(&d), &d).unwrap();
        assert_eq!(r.max_abs(), 0.0);
    }

    #[test]
    fn operator_residual_converges_at_second_order() {
        // dt must differ from dx, otherwise the two truncation errors of the
        // standing wave cancel each other.
        let residual = |nx: usize, nt: usize| -> f64 {
            let d = dom(nx, nt);
            let z = SpaceTimeField::from_fn(&d, |x, t| fp::sin(PI * x) * fp::cos(PI * t));
            apply_wave_operator(&z, &Potential::zero(&d), &d)
                .unwrap()
                .max_abs()
        };
        let r1 = residual(49, 80);
        let r2 = residual(99, 160);
        let ratio = r1 / r2;
        assert!((3.5..=4.5).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn unit_potential_reproduces_the_field() {
        // sin(pi x) cos(pi t) is annihilated by the continuous d'Alembertian,
        // so with q = 1 the operator returns the field to scheme accuracy.
        let d = dom(99, 100);
        let z = SpaceTimeField::from_fn(&d, |x, t| fp::sin(PI * x) * fp::cos(PI * t));
        let q = Potential::from_fn(&d, 1.0, |_| 1.0);
        let r = apply_wave_operator(&z, &q, &d).unwrap();
        let mut err = 0.0_f64;
        for it in 1..d.nt {
            for ix in 1..=d.nx {
                err = err.max(fp::abs(r.at(ix, it) - z.at(ix, it)));
            }
        }
        assert!(err < 5e-3, "err = {err}");
    }

    #[test]
    fn adjoint_identity_holds_to_roundoff() {
        for seed in 0..4u64 {
            let d = dom(7 + seed as usize, 9 + (seed % 3) as usize);
            let q = Potential::from_fn(&d, 1.0, |x| fp::sin(3.0 * x) * 0.8);
            let z = random_field(&d, seed, true);
            let r = random_field(&d, seed + 100, false);
            let lz = apply_wave_operator(&z, &q, &d).unwrap();
            let ltr = apply_adjoint(&r, &q, &d).unwrap();
            // Restrict the pairing of r to the residual support.
            let mut lhs = 0.0;
            for it in 1..d.nt {
                for ix in 1..=d.nx {
                    lhs += lz.at(ix, it) * r.at(ix, it);
                }
            }
            let rhs = z.dot(&ltr);
            let scale = lz.max_abs() * r.max_abs() * (d.nx * d.nt) as f64;
            assert!(
                fp::abs(lhs - rhs) <= 1e-12 * scale,
                "seed {seed}: lhs = {lhs}, rhs = {rhs}"
            );
        }
    }

    #[test]
    fn adjoint_mass_term_is_diagonal() {
        let d = dom(9, 11);
        let r = random_field(&d, 5, false);
        let a0 = apply_adjoint(&r, &Potential::zero(&d), &d).unwrap();
        let c = 0.7;
        let ac = apply_adjoint(&r, &Potential::from_fn(&d, c, |_| c), &d).unwrap();
        for it in 1..d.nt {
            for ix in 1..=d.nx {
                let diff = ac.at(ix, it) - a0.at(ix, it);
                assert!(fp::abs(diff - c * r.at(ix, it)) < 1e-12);
            }
        }
    }

    #[test]
    fn leapfrog_zero_data_gives_zero() {
        let d = dom(16, 40);
        let (w, fluxes) = leapfrog_solve(
            &d,
            &WaveData::zero(&d),
            &Potential::zero(&d),
            &LeapfrogOptions::default(),
        )
        .unwrap();
        assert_eq!(w.max_abs(), 0.0);
        for f in fluxes {
            assert_eq!(f.max_abs(), 0.0);
        }
    }

    fn standing_wave_error(nx: usize, nt: usize) -> (f64, f64) {
        let d = dom(nx, nt);
        let mut data = WaveData::zero(&d);
        for ix in 0..d.n_space() {
            data.init_pos[ix] = fp::sin(PI * d.x(ix));
        }
        let (w, fluxes) = leapfrog_solve(
            &d,
            &data,
            &Potential::zero(&d),
            &LeapfrogOptions::default(),
        )
        .unwrap();
        let mut err = 0.0_f64;
        for it in 0..=d.nt {
            for ix in 0..=d.nx + 1 {
                let exact = fp::sin(PI * d.x(ix)) * fp::cos(PI * d.t(it));
                err = err.max(fp::abs(w.at(ix, it) - exact));
            }
        }
        let right = fluxes.iter().find(|f| f.side == Side::Right).unwrap();
        let mut flux_err = 0.0_f64;
        for it in 0..=d.nt {
            let exact = -PI * fp::cos(PI * d.t(it));
            flux_err = flux_err.max(fp::abs(right.values[it] - exact));
        }
        (err, flux_err)
    }

    /// cos(pi x) cos(pi t): a free wave with nonzero boundary data, whose
    /// second x-derivative does not vanish at the endpoints (so the one-sided
    /// flux stencil shows its true first order).
    fn traveling_wave_flux_error(nx: usize, nt: usize) -> f64 {
        let d = dom(nx, nt);
        let mut data = WaveData::zero(&d);
        for ix in 0..d.n_space() {
            data.init_pos[ix] = fp::cos(PI * d.x(ix));
        }
        for it in 0..=d.nt {
            data.bc_left[it] = fp::cos(PI * d.t(it));
            data.bc_right[it] = -fp::cos(PI * d.t(it));
        }
        let (_, fluxes) = leapfrog_solve(
            &d,
            &data,
            &Potential::zero(&d),
            &LeapfrogOptions::default(),
        )
        .unwrap();
        let right = fluxes.iter().find(|f| f.side == Side::Right).unwrap();
        let mut flux_err = 0.0_f64;
        for it in 0..=d.nt {
            // d/dx cos(pi x) at x = 1 is -pi sin(pi) = 0... use exact value:
            // flux = -pi sin(pi x_hi) cos(pi t) = 0; the one-sided stencil
            // reads (w(1) - w(1 - dx))/dx instead.
            let exact = -PI * fp::sin(PI * d.x(d.nx + 1)) * fp::cos(PI * d.t(it));
            flux_err = flux_err.max(fp::abs(right.values[it] - exact));
        }
        flux_err
    }

    #[test]
    fn manufactured_solution_orders() {
        let (e1, _) = standing_wave_error(49, 100);
        let (e2, _) = standing_wave_error(99, 200);
        let field_ratio = e1 / e2;
        assert!(
            (3.5..=4.5).contains(&field_ratio),
            "field ratio = {field_ratio} ({e1} / {e2})"
        );
        // One-sided flux stencil is first order on a solution with curvature
        // at the boundary.
        let f1 = traveling_wave_flux_error(49, 100);
        let f2 = traveling_wave_flux_error(99, 200);
        let flux_ratio = f1 / f2;
        assert!(
            (1.6..=2.6).contains(&flux_ratio),
            "flux ratio = {flux_ratio} ({f1} / {f2})"
        );
    }

    #[test]
    fn manufactured_source_with_potential() {
        // With q = 1 and h = sin(pi x) cos(pi t), the standing wave solves
        // the forced equation exactly (box w = 0 and q w = h).
        let d = dom(99, 200);
        let mut data = WaveData::zero(&d);
        for ix in 0..d.n_space() {
            data.init_pos[ix] = fp::sin(PI * d.x(ix));
        }
        data.source = Some(SpaceTimeField::from_fn(&d, |x, t| {
            fp::sin(PI * x) * fp::cos(PI * t)
        }));
        let q = Potential::from_fn(&d, 1.0, |_| 1.0);
        let (w, _) = leapfrog_solve(&d, &data, &q, &LeapfrogOptions::default()).unwrap();
        let mut err = 0.0_f64;
        for it in 0..=d.nt {
            for ix in 0..=d.nx + 1 {
                let exact = fp::sin(PI * d.x(ix)) * fp::cos(PI * d.t(it));
                err = err.max(fp::abs(w.at(ix, it) - exact));
            }
        }
        assert!(err < 2e-3, "err = {err}");
    }

    #[test]
    fn leapfrog_is_linear_in_data() {
        let d = dom(13, 30);
        let q = Potential::from_fn(&d, 1.0, |x| 0.5 * fp::cos(2.0 * x));
        let mk = |seed: u64| -> WaveData {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut data = WaveData::zero(&d);
            for ix in 1..=d.nx {
                data.init_pos[ix] = uniform(&mut rng);
                data.init_vel[ix] = uniform(&mut rng);
            }
            data.source = Some(random_field(&d, seed + 7, false));
            data
        };
        let (a, b) = (mk(1), mk(2));
        let (ca, cb) = (1.3, -0.4);
        let mut combined = WaveData::zero(&d);
        for ix in 0..d.n_space() {
            combined.init_pos[ix] = ca * a.init_pos[ix] + cb * b.init_pos[ix];
            combined.init_vel[ix] = ca * a.init_vel[ix] + cb * b.init_vel[ix];
        }
        let mut src = a.source.clone().unwrap();
        src.scale(ca);
        src.axpy(cb, b.source.as_ref().unwrap());
        combined.source = Some(src);

        let opts = LeapfrogOptions::default();
        let (wa, _) = leapfrog_solve(&d, &a, &q, &opts).unwrap();
        let (wb, _) = leapfrog_solve(&d, &b, &q, &opts).unwrap();
        let (wc, _) = leapfrog_solve(&d, &combined, &q, &opts).unwrap();
        let mut lin = wa.clone();
        lin.scale(ca);
        lin.axpy(cb, &wb);
        let mut err = 0.0_f64;
        for (u, v) in wc.values().iter().zip(lin.values().iter()) {
            err = err.max(fp::abs(u - v));
        }
        assert!(err < 1e-11 * wc.max_abs().max(1.0), "err = {err}");
    }

    #[test]
    fn free_wave_energy_drift_is_small() {
        let d = dom(50, 120);
        let mut data = WaveData::zero(&d);
        for ix in 0..d.n_space() {
            let x = d.x(ix);
            data.init_pos[ix] = fp::sin(PI * x) + 0.3 * fp::sin(3.0 * PI * x);
        }
        let (w, _) = leapfrog_solve(
            &d,
            &data,
            &Potential::zero(&d),
            &LeapfrogOptions::default(),
        )
        .unwrap();
        let e0 = discrete_energy(&w, &d, 1);
        for it in 1..d.nt {
            let e = discrete_energy(&w, &d, it);
            assert!(fp::abs(e - e0) / e0 < 0.01, "it = {it}: {e} vs {e0}");
        }
    }

    #[test]
    fn cfl_violation_subcycles_or_fails() {
        // dt = 0.05 > dx = 1/31 violates the bound.
        let d = dom(30, 20);
        let mut strict = LeapfrogOptions::default();
        strict.auto_subcycle = false;
        let r = leapfrog_solve(&d, &WaveData::zero(&d), &Potential::zero(&d), &strict);
        assert!(matches!(r, Err(Error::CflViolation { .. })));

        // Subcycled run stays accurate on the manufactured solution.
        let mut data = WaveData::zero(&d);
        for ix in 0..d.n_space() {
            data.init_pos[ix] = fp::sin(PI * d.x(ix));
        }
        let (w, _) = leapfrog_solve(
            &d,
            &data,
            &Potential::zero(&d),
            &LeapfrogOptions::default(),
        )
        .unwrap();
        let mut err = 0.0_f64;
        for it in 0..=d.nt {
            for ix in 0..=d.nx + 1 {
                let exact = fp::sin(PI * d.x(ix)) * fp::cos(PI * d.t(it));
                err = err.max(fp::abs(w.at(ix, it) - exact));
            }
        }
        assert!(err < 5e-3, "err = {err}");
    }

    #[test]
    fn trace_time_derivative() {
        let d = dom(4, 40);
        let dt = d.dt();
        let constant = FluxTrace {
            side: Side::Right,
            values: vec![3.7; d.n_time()],
        };
        assert_eq!(time_derivative_trace(&constant, dt).max_abs(), 0.0);

        let affine = FluxTrace {
            side: Side::Right,
            values: (0..=d.nt).map(|it| 2.0 + 5.0 * d.t(it)).collect(),
        };
        let da = time_derivative_trace(&affine, dt);
        for i in 1..d.nt {
            assert!(fp::abs(da.values[i] - 5.0) < 1e-12);
        }

        let cosine = FluxTrace {
            side: Side::Right,
            values: (0..=d.nt).map(|it| fp::cos(PI * d.t(it))).collect(),
        };
        let dc = time_derivative_trace(&cosine, dt);
        for i in 1..d.nt {
            let exact = -PI * fp::sin(PI * d.t(i));
            assert!(fp::abs(dc.values[i] - exact) < PI * PI * PI * dt * dt);
        }
    }

    #[test]
    fn blow_up_is_detected() {
        let d = dom(30, 40);
        let mut data = WaveData::zero(&d);
        for ix in 0..d.n_space() {
            data.init_pos[ix] = 1e11 * fp::sin(PI * d.x(ix));
        }
        // Forcing dt above the stability bound without subcycling is not
        // possible through the public API; instead drive the amplitude past
        // the sentinel with a huge source.
        data.source = Some(SpaceTimeField::from_fn(&d, |x, _| 1e14 * x * (1.0 - x)));
        let r = leapfrog_solve(
            &d,
            &data,
            &Potential::zero(&d),
            &LeapfrogOptions::default(),
        );
        assert!(matches!(r, Err(Error::BlowUp { .. })), "{r:?}");
    }
}
