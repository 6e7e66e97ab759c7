//! Minimization of weighted quadratic functionals of the shape
//!
//! ```text
//!   F(z) = 1/(2s) Σ w_r (Lz − g)² dxdt  +  1/2 Σ_Γ0 w_Γ (Bz − μ)² dt  +  ℓ·z
//! ```
//!
//! over constrained space-time fields, where `L` is the wave operator with
//! potential, `B` the one-sided boundary flux, `w = exp(2s(φ − φ_max))` and
//! `ℓ` an optional linear term. The minimizer solves the normal equations
//! `A z = b` with `A = s⁻¹LᵀWL + BᵀW_ΓB (+ reg·penalty)`, symmetric positive
//! definite on the constrained subspace.
//!
//! # Conjugated solve
//!
//! The weight spans hundreds of orders of magnitude, and the raw minimizer
//! of the control functional grows like `exp(2s(φ_max − φ))`: its entries
//! are not representable in f64 for large `s`. The solver therefore works in
//! conjugated variables `ŵ_u = exp(s(φ_u − φ_max))·z_u`, in which every
//! stencil factor carries only a *local* weight ratio
//! `exp(s(φ_row − φ_unknown))` — bounded on any grid — and the system stays
//! symmetric positive definite with a well-scaled diagonal. This is exactly
//! the same normal system under an exact diagonal reparameterization, so the
//! minimizer, all functional values and all reported ratios are unchanged.
//! Jacobi preconditioning on top absorbs the remaining (polynomial in `s`)
//! diagonal variation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::fp;
use crate::grid::{DomainConfig, Side, SpaceTimeField};
use crate::wave::{FluxTrace, Potential};
use crate::weights::WeightField;
use crate::Result;

/// Constraint set of the minimization space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// `z(·, t_lo) = 0`; unknowns start at the second time level.
    ZeroInitial,
    /// No constraints at the time endpoints.
    FreeEndpoints,
}

/// One weighted least-squares problem.
#[derive(Debug, Clone)]
pub struct QuadProblem {
    pub q: Potential,
    pub weights: WeightField,
    /// Large parameter; must agree with the one the weights were built with.
    pub s: f64,
    /// Interior target `g` (defaults to zero).
    pub source_target: Option<SpaceTimeField>,
    /// Flux targets per observed side (missing side means zero target).
    pub flux_target: Vec<FluxTrace>,
    /// Coefficients of the linear term against the raw field values.
    pub linear_term: Option<SpaceTimeField>,
    pub constraint: Constraint,
    /// Coefficient of the weighted second-time-difference penalty.
    pub regularization: f64,
}

impl QuadProblem {
    pub fn new(q: Potential, weights: WeightField, constraint: Constraint) -> QuadProblem {
        let s = weights.s();
        QuadProblem {
            q,
            weights,
            s,
            source_target: None,
            flux_target: Vec::new(),
            linear_term: None,
            constraint,
            regularization: 0.0,
        }
    }

    pub fn domain(&self) -> &DomainConfig {
        self.weights.domain()
    }

    fn validate(&self) -> Result<()> {
        let d = self.domain();
        self.q.matches(d)?;
        if !(self.s > 0.0) || self.s != self.weights.s() {
            return Err(Error::InvalidConfig(format!(
                "problem s = {} must be positive and match the weight field s = {}",
                self.s,
                self.weights.s()
            )));
        }
        if let Some(g) = &self.source_target {
            g.matches_domain(d)?;
        }
        if let Some(l) = &self.linear_term {
            l.matches_domain(d)?;
        }
        for trace in &self.flux_target {
            if trace.len() != d.n_time() {
                return Err(Error::InvalidConfig(format!(
                    "flux target on {:?} has {} samples, expected {}",
                    trace.side,
                    trace.len(),
                    d.n_time()
                )));
            }
            if !d.gamma0.contains(trace.side) {
                return Err(Error::InvalidConfig(format!(
                    "flux target given on unobserved side {:?}",
                    trace.side
                )));
            }
        }
        if !(self.regularization >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "regularization must be non-negative, got {}",
                self.regularization
            )));
        }
        Ok(())
    }
}

/// Unknown-vector layout: interior space nodes over the free time levels.
#[derive(Debug, Clone, Copy)]
struct Layout {
    nx: usize,
    nt: usize,
    /// First free time level (0 or 1).
    it0: usize,
}

impl Layout {
    fn n_unknowns(&self) -> usize {
        self.nx * (self.nt + 1 - self.it0)
    }

    #[inline(always)]
    fn idx(&self, ix: usize, it: usize) -> usize {
        (it - self.it0) * self.nx + ix - 1
    }
}

struct FluxBlock {
    side: Side,
    /// Innermost interior node read by the one-sided stencil.
    inner_ix: usize,
    /// Row factor per time level (conjugated, measure folded in).
    factors: Vec<f64>,
}

/// Matrix-free conjugated normal operator with Jacobi diagonal.
pub struct NormalOperator {
    layout: Layout,
    domain: DomainConfig,
    /// Residual-row stencil factors, indexed `(it−1)·nx + ix−1`.
    f_c: Vec<f64>,
    f_tm: Vec<f64>,
    f_tp: Vec<f64>,
    f_xm: Vec<f64>,
    f_xp: Vec<f64>,
    flux: Vec<FluxBlock>,
    /// Weighted second-time-difference penalty factors (empty when off).
    reg_c: Vec<f64>,
    reg_tm: Vec<f64>,
    reg_tp: Vec<f64>,
    /// Diagonal of the conjugated operator (strictly positive).
    diag: Vec<f64>,
    /// `s(φ − φ_max)` per grid node, for moving between `z` and `ŵ`.
    half_lw: SpaceTimeField,
}

/// Reusable buffers for matrix-free applications.
pub struct Scratch {
    grid_a: Vec<f64>,
    grid_b: Vec<f64>,
    res: Vec<f64>,
    reg: Vec<f64>,
    flux: Vec<Vec<f64>>,
}

impl Scratch {
    pub fn new(op: &NormalOperator) -> Scratch {
        let grid_len = (op.layout.nx + 2) * (op.layout.nt + 1);
        Scratch {
            grid_a: vec![0.0; grid_len],
            grid_b: vec![0.0; grid_len],
            res: vec![0.0; op.f_c.len()],
            reg: vec![0.0; op.reg_c.len()],
            flux: op.flux.iter().map(|b| vec![0.0; b.factors.len()]).collect(),
        }
    }
}

impl NormalOperator {
    pub fn n_unknowns(&self) -> usize {
        self.layout.n_unknowns()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    fn width(&self) -> usize {
        self.layout.nx + 2
    }

    /// Scatters an unknown vector into a zero-padded full grid buffer.
    fn pad(&self, x: &[f64], grid: &mut [f64]) {
        grid.fill(0.0);
        let w = self.width();
        let l = self.layout;
        for it in l.it0..=l.nt {
            let row = it * w;
            let base = (it - l.it0) * l.nx;
            grid[row + 1..row + 1 + l.nx].copy_from_slice(&x[base..base + l.nx]);
        }
    }

    /// Gathers the interior unknowns out of a full grid buffer.
    fn unpad(&self, grid: &[f64], x: &mut [f64]) {
        let w = self.width();
        let l = self.layout;
        for it in l.it0..=l.nt {
            let row = it * w;
            let base = (it - l.it0) * l.nx;
            x[base..base + l.nx].copy_from_slice(&grid[row + 1..row + 1 + l.nx]);
        }
    }

    /// Scaled residual image `L̂ ŵ` from a padded grid buffer.
    fn apply_l(&self, grid: &[f64], out: &mut [f64]) {
        let w = self.width();
        let l = self.layout;
        for it in 1..l.nt {
            let r0 = (it - 1) * l.nx;
            let g0 = it * w;
            for ix in 1..=l.nx {
                let rid = r0 + ix - 1;
                out[rid] = self.f_c[rid] * grid[g0 + ix]
                    + self.f_tm[rid] * grid[g0 - w + ix]
                    + self.f_tp[rid] * grid[g0 + w + ix]
                    + self.f_xm[rid] * grid[g0 + ix - 1]
                    + self.f_xp[rid] * grid[g0 + ix + 1];
            }
        }
    }

    /// Transpose of [`Self::apply_l`], accumulated into a padded grid buffer.
    fn apply_lt(&self, res: &[f64], grid: &mut [f64]) {
        grid.fill(0.0);
        let w = self.width();
        let l = self.layout;
        for it in 1..l.nt {
            let r0 = (it - 1) * l.nx;
            let g0 = it * w;
            for ix in 1..=l.nx {
                let rid = r0 + ix - 1;
                let v = res[rid];
                grid[g0 + ix] += self.f_c[rid] * v;
                grid[g0 - w + ix] += self.f_tm[rid] * v;
                grid[g0 + w + ix] += self.f_tp[rid] * v;
                grid[g0 + ix - 1] += self.f_xm[rid] * v;
                grid[g0 + ix + 1] += self.f_xp[rid] * v;
            }
        }
    }

    fn apply_reg(&self, grid: &[f64], out: &mut [f64]) {
        if self.reg_c.is_empty() {
            return;
        }
        let w = self.width();
        let l = self.layout;
        for it in 1..l.nt {
            let r0 = (it - 1) * l.nx;
            let g0 = it * w;
            for ix in 1..=l.nx {
                let rid = r0 + ix - 1;
                out[rid] = self.reg_c[rid] * grid[g0 + ix]
                    + self.reg_tm[rid] * grid[g0 - w + ix]
                    + self.reg_tp[rid] * grid[g0 + w + ix];
            }
        }
    }

    fn apply_reg_t(&self, res: &[f64], grid: &mut [f64]) {
        let w = self.width();
        let l = self.layout;
        for it in 1..l.nt {
            let r0 = (it - 1) * l.nx;
            let g0 = it * w;
            for ix in 1..=l.nx {
                let rid = r0 + ix - 1;
                let v = res[rid];
                grid[g0 + ix] += self.reg_c[rid] * v;
                grid[g0 - w + ix] += self.reg_tm[rid] * v;
                grid[g0 + w + ix] += self.reg_tp[rid] * v;
            }
        }
    }

    fn apply_flux(&self, block_id: usize, grid: &[f64], out: &mut [f64]) {
        let block = &self.flux[block_id];
        let w = self.width();
        for (it, o) in out.iter_mut().enumerate() {
            *o = block.factors[it] * grid[it * w + block.inner_ix];
        }
    }

    fn apply_flux_t(&self, block_id: usize, trace: &[f64], grid: &mut [f64]) {
        let block = &self.flux[block_id];
        let w = self.width();
        for (it, v) in trace.iter().enumerate() {
            grid[it * w + block.inner_ix] += block.factors[it] * v;
        }
    }

    /// `out = Â x` on the conjugated unknowns.
    pub fn apply_into(&self, x: &[f64], scratch: &mut Scratch, out: &mut [f64]) {
        self.pad(x, &mut scratch.grid_a);
        self.apply_l(&scratch.grid_a, &mut scratch.res);
        self.apply_lt(&scratch.res, &mut scratch.grid_b);
        for i in 0..self.flux.len() {
            let mut buf = core::mem::take(&mut scratch.flux[i]);
            self.apply_flux(i, &scratch.grid_a, &mut buf);
            self.apply_flux_t(i, &buf, &mut scratch.grid_b);
            scratch.flux[i] = buf;
        }
        if !self.reg_c.is_empty() {
            let mut buf = core::mem::take(&mut scratch.reg);
            self.apply_reg(&scratch.grid_a, &mut buf);
            self.apply_reg_t(&buf, &mut scratch.grid_b);
            scratch.reg = buf;
        }
        self.unpad(&scratch.grid_b, out);
    }

    /// Convenience allocation-per-call variant of [`Self::apply_into`].
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut scratch = Scratch::new(self);
        let mut out = vec![0.0; self.n_unknowns()];
        self.apply_into(x, &mut scratch, &mut out);
        out
    }

    /// Largest relative symmetry defect `|⟨Ax, y⟩ − ⟨x, Ay⟩| / scale` over
    /// seeded random vector pairs.
    pub fn symmetry_defect(&self, seed: u64, pairs: usize) -> f64 {
        use rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = self.n_unknowns();
        let mut scratch = Scratch::new(self);
        let mut worst = 0.0_f64;
        let mut ax = vec![0.0; n];
        let mut ay = vec![0.0; n];
        for _ in 0..pairs {
            let x: Vec<f64> = (0..n).map(|_| crate::synth::uniform_pm1(&mut rng)).collect();
            let y: Vec<f64> = (0..n).map(|_| crate::synth::uniform_pm1(&mut rng)).collect();
            self.apply_into(&x, &mut scratch, &mut ax);
            self.apply_into(&y, &mut scratch, &mut ay);
            let axy: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
            let xay: f64 = x.iter().zip(&ay).map(|(a, b)| a * b).sum();
            let scale: f64 = ax.iter().map(|v| fp::abs(*v)).sum::<f64>().max(1e-300);
            worst = worst.max(fp::abs(axy - xay) / scale);
        }
        worst
    }

    /// Smallest Rayleigh quotient `⟨Ax, x⟩ / ⟨x, x⟩` over seeded samples.
    pub fn definiteness_probe(&self, seed: u64, samples: usize) -> f64 {
        use rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = self.n_unknowns();
        let mut scratch = Scratch::new(self);
        let mut ax = vec![0.0; n];
        let mut min_q = f64::INFINITY;
        for _ in 0..samples {
            let x: Vec<f64> = (0..n).map(|_| crate::synth::uniform_pm1(&mut rng)).collect();
            self.apply_into(&x, &mut scratch, &mut ax);
            let num: f64 = ax.iter().zip(&x).map(|(a, b)| a * b).sum();
            let den: f64 = x.iter().map(|v| v * v).sum();
            min_q = min_q.min(num / den);
        }
        min_q
    }
}

/// Builds the conjugated normal operator for a problem.
pub fn assemble_normal_operator(prob: &QuadProblem) -> Result<NormalOperator> {
    prob.validate()?;
    let d = *prob.domain();
    let (nx, nt) = (d.nx, d.nt);
    let layout = Layout {
        nx,
        nt,
        it0: match prob.constraint {
            Constraint::ZeroInitial => 1,
            Constraint::FreeEndpoints => 0,
        },
    };
    let (dx, dt) = (d.dx(), d.dt());
    let (idx2, idt2) = (1.0 / (dx * dx), 1.0 / (dt * dt));
    let lw = &prob.weights.log_weight;
    let row_scale = fp::sqrt(dx * dt / prob.s);

    let n_res = nx * (nt - 1);
    let mut f_c = vec![0.0; n_res];
    let mut f_tm = vec![0.0; n_res];
    let mut f_tp = vec![0.0; n_res];
    let mut f_xm = vec![0.0; n_res];
    let mut f_xp = vec![0.0; n_res];
    for it in 1..nt {
        for ix in 1..=nx {
            let rid = (it - 1) * nx + ix - 1;
            let lw_r = lw.at(ix, it);
            let conj = |lw_u: f64| fp::exp(0.5 * (lw_r - lw_u));
            f_c[rid] = (-2.0 * idt2 + 2.0 * idx2 + prob.q.at(ix, it)) * row_scale;
            f_tm[rid] = idt2 * conj(lw.at(ix, it - 1)) * row_scale;
            f_tp[rid] = idt2 * conj(lw.at(ix, it + 1)) * row_scale;
            f_xm[rid] = -idx2 * conj(lw.at(ix - 1, it)) * row_scale;
            f_xp[rid] = -idx2 * conj(lw.at(ix + 1, it)) * row_scale;
        }
    }

    let flux = d
        .gamma0
        .sides()
        .map(|side| {
            let bx = d.boundary_ix(side);
            let inner_ix = match side {
                Side::Left => 1,
                Side::Right => nx,
            };
            let factors = (0..=nt)
                .map(|it| {
                    let lw_g = lw.at(bx, it);
                    -(1.0 / dx) * fp::exp(0.5 * (lw_g - lw.at(inner_ix, it))) * fp::sqrt(dt)
                })
                .collect();
            FluxBlock {
                side,
                inner_ix,
                factors,
            }
        })
        .collect::<Vec<_>>();

    let (mut reg_c, mut reg_tm, mut reg_tp) = (Vec::new(), Vec::new(), Vec::new());
    if prob.regularization > 0.0 {
        let reg_scale = fp::sqrt(prob.regularization * dx * dt);
        reg_c = vec![0.0; n_res];
        reg_tm = vec![0.0; n_res];
        reg_tp = vec![0.0; n_res];
        for it in 1..nt {
            for ix in 1..=nx {
                let rid = (it - 1) * nx + ix - 1;
                let lw_r = lw.at(ix, it);
                reg_c[rid] = -2.0 * idt2 * reg_scale;
                reg_tm[rid] = idt2 * fp::exp(0.5 * (lw_r - lw.at(ix, it - 1))) * reg_scale;
                reg_tp[rid] = idt2 * fp::exp(0.5 * (lw_r - lw.at(ix, it + 1))) * reg_scale;
            }
        }
    }

    // Diagonal by scattering squared factors onto the padded grid.
    let width = nx + 2;
    let mut diag_grid = vec![0.0; width * (nt + 1)];
    for it in 1..nt {
        let g0 = it * width;
        for ix in 1..=nx {
            let rid = (it - 1) * nx + ix - 1;
            diag_grid[g0 + ix] += fp::sq(f_c[rid]);
            diag_grid[g0 - width + ix] += fp::sq(f_tm[rid]);
            diag_grid[g0 + width + ix] += fp::sq(f_tp[rid]);
            diag_grid[g0 + ix - 1] += fp::sq(f_xm[rid]);
            diag_grid[g0 + ix + 1] += fp::sq(f_xp[rid]);
            if !reg_c.is_empty() {
                diag_grid[g0 + ix] += fp::sq(reg_c[rid]);
                diag_grid[g0 - width + ix] += fp::sq(reg_tm[rid]);
                diag_grid[g0 + width + ix] += fp::sq(reg_tp[rid]);
            }
        }
    }
    for block in &flux {
        for it in 0..=nt {
            diag_grid[it * width + block.inner_ix] += fp::sq(block.factors[it]);
        }
    }
    let mut diag = vec![0.0; layout.n_unknowns()];
    for it in layout.it0..=nt {
        let row = it * width;
        let base = (it - layout.it0) * nx;
        diag[base..base + nx].copy_from_slice(&diag_grid[row + 1..row + 1 + nx]);
    }
    if diag.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::NonFinite("normal operator diagonal"));
    }

    let mut half_lw = SpaceTimeField::zeros(&d);
    for it in 0..=nt {
        for ix in 0..=nx + 1 {
            half_lw.set(ix, it, 0.5 * lw.at(ix, it));
        }
    }

    Ok(NormalOperator {
        layout,
        domain: d,
        f_c,
        f_tm,
        f_tp,
        f_xm,
        f_xp,
        flux,
        reg_c,
        reg_tm,
        reg_tp,
        diag,
        half_lw,
    })
}

/// Minimizer in conjugated coordinates, with enough metadata to evaluate
/// the raw field and the weighted images without leaving the float range.
#[derive(Debug, Clone)]
pub struct Minimizer {
    domain: DomainConfig,
    constraint: Constraint,
    /// Conjugated unknowns `ŵ_u = exp(s(φ_u − φ_max)) z_u`.
    w_hat: Vec<f64>,
    /// `s(φ − φ_max)` per node.
    half_lw: SpaceTimeField,
}

impl Minimizer {
    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn domain(&self) -> &DomainConfig {
        &self.domain
    }

    /// Conjugated coefficient vector (interior nodes, free time levels).
    pub fn scaled_values(&self) -> &[f64] {
        &self.w_hat
    }

    fn layout(&self) -> Layout {
        Layout {
            nx: self.domain.nx,
            nt: self.domain.nt,
            it0: match self.constraint {
                Constraint::ZeroInitial => 1,
                Constraint::FreeEndpoints => 0,
            },
        }
    }

    /// Materializes the raw field `z`. For control-type problems at very
    /// large `s` the far-field entries exceed the f64 range by construction;
    /// entries are then `±inf` (weighted images remain finite).
    pub fn field(&self) -> SpaceTimeField {
        let l = self.layout();
        let mut out = SpaceTimeField::zeros(&self.domain);
        for it in l.it0..=l.nt {
            for ix in 1..=l.nx {
                let u = l.idx(ix, it);
                out.set(ix, it, fp::exp(-self.half_lw.at(ix, it)) * self.w_hat[u]);
            }
        }
        out
    }

    /// Raw field value at one node (zero on constrained nodes).
    pub fn field_at(&self, ix: usize, it: usize) -> f64 {
        let l = self.layout();
        if ix == 0 || ix > l.nx || it < l.it0 {
            return 0.0;
        }
        fp::exp(-self.half_lw.at(ix, it)) * self.w_hat[l.idx(ix, it)]
    }
}

/// Outcome of [`minimize`].
#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub minimizer: Minimizer,
    pub cg_iterations: usize,
    pub final_relative_residual: f64,
    /// False when the iteration cap was hit before reaching the tolerance.
    pub converged: bool,
    /// Value of the full functional at the minimizer (may overflow to ±inf
    /// for control problems at extreme `s`; see the log field).
    pub functional_value: f64,
    /// Squared observation norm of the minimizer: `s⁻¹Σw(Lz)² + Σw_Γ(Bz)²`.
    pub obs_norm_sq: f64,
    /// `log10` of `obs_norm_sq`, finite whenever the norm is positive.
    pub log10_obs_norm_sq: f64,
}

/// Default iteration cap used by the experiment runners.
pub fn default_max_iter(n_unknowns: usize) -> usize {
    (20.0 * fp::sqrt(n_unknowns as f64)) as usize + 5000
}

/// Default relative residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm with overflow-safe rescaling (entries may sit near the
/// top of the f64 range for control problems at large `s`).
fn scaled_norm(v: &[f64]) -> f64 {
    let m = v.iter().fold(0.0_f64, |acc, x| acc.max(fp::abs(*x)));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    let sum: f64 = v.iter().map(|x| fp::sq(x / m)).sum();
    m * fp::sqrt(sum)
}

/// `log10(a² + b²)` without forming the squares.
fn log10_sq_sum(a: f64, b: f64) -> f64 {
    let m = fp::abs(a).max(fp::abs(b));
    if m == 0.0 {
        return f64::NEG_INFINITY;
    }
    let (ra, rb) = (a / m, b / m);
    2.0 * fp::ln(m) / core::f64::consts::LN_10
        + fp::ln(ra * ra + rb * rb) / core::f64::consts::LN_10
}

struct Targets {
    /// `sqrt(w_r dxdt / s) g_r` on residual rows.
    g_hat: Vec<f64>,
    /// `sqrt(w_Γ dt) μ` per flux block.
    mu_hat: Vec<Vec<f64>>,
    /// Conjugated linear coefficients on the unknowns.
    ell_hat: Option<Vec<f64>>,
}

fn build_targets(prob: &QuadProblem, op: &NormalOperator) -> Result<Targets> {
    let d = prob.domain();
    let (nx, nt) = (d.nx, d.nt);
    let dt = d.dt();
    let lw = &prob.weights.log_weight;
    let row_scale = fp::sqrt(d.dx() * dt / prob.s);

    let mut g_hat = vec![0.0; nx * (nt - 1)];
    if let Some(g) = &prob.source_target {
        for it in 1..nt {
            for ix in 1..=nx {
                g_hat[(it - 1) * nx + ix - 1] =
                    fp::exp(0.5 * lw.at(ix, it)) * row_scale * g.at(ix, it);
            }
        }
    }

    let mut mu_hat = Vec::with_capacity(op.flux.len());
    for block in &op.flux {
        let trace = prob.flux_target.iter().find(|t| t.side == block.side);
        let bx = d.boundary_ix(block.side);
        let mut v = vec![0.0; nt + 1];
        if let Some(trace) = trace {
            for (it, vi) in v.iter_mut().enumerate() {
                *vi = fp::exp(0.5 * lw.at(bx, it)) * fp::sqrt(dt) * trace.values[it];
            }
        }
        mu_hat.push(v);
    }

    let ell_hat = match &prob.linear_term {
        None => None,
        Some(l) => {
            let layout = op.layout;
            let mut v = vec![0.0; layout.n_unknowns()];
            for it in layout.it0..=nt {
                for ix in 1..=nx {
                    let c = l.at(ix, it);
                    if c == 0.0 {
                        continue;
                    }
                    let expo = -0.5 * lw.at(ix, it);
                    if expo + fp::ln(fp::abs(c)) > 705.0 {
                        return Err(Error::ParameterRange(format!(
                            "linear term at node ({ix}, {it}) needs exp({expo:.1}) and \
                             leaves the f64 range; reduce s"
                        )));
                    }
                    v[layout.idx(ix, it)] = fp::exp(expo) * c;
                }
            }
            Some(v)
        }
    };

    Ok(Targets {
        g_hat,
        mu_hat,
        ell_hat,
    })
}

/// Minimizes the functional by Jacobi-preconditioned conjugate gradients on
/// the conjugated normal equations, optionally warm-started.
pub fn minimize_with(
    prob: &QuadProblem,
    tol: f64,
    max_iter: usize,
    warm_start: Option<&SpaceTimeField>,
) -> Result<MinimizeReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let op = assemble_normal_operator(prob)?;
    let targets = build_targets(prob, &op)?;
    let n = op.n_unknowns();
    let mut scratch = Scratch::new(&op);

    // b̂ = L̂ᵀ ĝ + Σ B̂ᵀ μ̂ − ℓ̂
    let mut b = vec![0.0; n];
    {
        op.apply_lt(&targets.g_hat, &mut scratch.grid_b);
        for (i, mu) in targets.mu_hat.iter().enumerate() {
            op.apply_flux_t(i, mu, &mut scratch.grid_b);
        }
        op.unpad(&scratch.grid_b, &mut b);
        if let Some(ell) = &targets.ell_hat {
            for (bi, li) in b.iter_mut().zip(ell) {
                *bi -= li;
            }
        }
    }

    let b_norm = scaled_norm(&b);
    if !b_norm.is_finite() {
        return Err(Error::NonFinite("normal equations right-hand side"));
    }

    let mut x = vec![0.0; n];
    let mut iterations = 0;
    let mut rel = 0.0;
    let mut converged = true;

    if b_norm > 0.0 {
        // Solve Â x' = b̂ / ‖b̂‖ so CG inner products stay well inside range.
        let inv_m: Vec<f64> = op.diag.iter().map(|d| 1.0 / d).collect();
        let mut r = vec![0.0; n];
        if let Some(w) = warm_start {
            w.matches_domain(prob.domain())?;
            let l = op.layout;
            for it in l.it0..=l.nt {
                for ix in 1..=l.nx {
                    x[l.idx(ix, it)] = fp::exp(op.half_lw.at(ix, it)) * w.at(ix, it) / b_norm;
                }
            }
            op.apply_into(&x, &mut scratch, &mut r);
            for i in 0..n {
                r[i] = b[i] / b_norm - r[i];
            }
        } else {
            for i in 0..n {
                r[i] = b[i] / b_norm;
            }
        }
        let mut z: Vec<f64> = r.iter().zip(&inv_m).map(|(ri, mi)| ri * mi).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let denom = {
            let bz: f64 = b
                .iter()
                .zip(&inv_m)
                .map(|(bi, mi)| (bi / b_norm) * (bi / b_norm) * mi)
                .sum();
            fp::sqrt(bz)
        };
        let mut ap = vec![0.0; n];
        rel = fp::sqrt(rz.max(0.0)) / denom;
        if rel > tol {
            converged = false;
            for k in 0..max_iter {
                op.apply_into(&p, &mut scratch, &mut ap);
                let pap = dot(&p, &ap);
                if !pap.is_finite() || !rz.is_finite() {
                    return Err(Error::NonFinite("conjugate gradient inner product"));
                }
                if pap <= 0.0 {
                    // Numerical loss of definiteness; stop with what we have.
                    iterations = k;
                    break;
                }
                let alpha = rz / pap;
                for i in 0..n {
                    x[i] += alpha * p[i];
                    r[i] -= alpha * ap[i];
                }
                for i in 0..n {
                    z[i] = r[i] * inv_m[i];
                }
                let rz_new = dot(&r, &z);
                rel = fp::sqrt(rz_new.max(0.0)) / denom;
                iterations = k + 1;
                if rel <= tol {
                    converged = true;
                    break;
                }
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..n {
                    p[i] = z[i] + beta * p[i];
                }
            }
        }
        for xi in x.iter_mut() {
            *xi *= b_norm;
        }
    }

    // Functional pieces at the minimizer, all in conjugated space. Norms are
    // accumulated with rescaling: the conjugated images sit near the top of
    // the float range for control problems at large s, where the squared
    // quantities overflow but the norms themselves do not.
    op.pad(&x, &mut scratch.grid_a);
    op.apply_l(&scratch.grid_a, &mut scratch.res);
    let obs_l_norm = scaled_norm(&scratch.res);
    let res_min: Vec<f64> = scratch
        .res
        .iter()
        .zip(&targets.g_hat)
        .map(|(ri, gi)| ri - gi)
        .collect();
    let res_norm_min = scaled_norm(&res_min);
    let res_norm_sq_min = res_norm_min * res_norm_min;
    let mut flux_norm_sq_min = 0.0;
    let mut block_norms = Vec::with_capacity(targets.mu_hat.len());
    for (i, mu) in targets.mu_hat.iter().enumerate() {
        op.apply_flux(i, &scratch.grid_a, &mut scratch.flux[i]);
        let diffs: Vec<f64> = scratch.flux[i].iter().zip(mu).map(|(bi, mi)| bi - mi).collect();
        let dn = scaled_norm(&diffs);
        flux_norm_sq_min += dn * dn;
        block_norms.push(scaled_norm(&scratch.flux[i]));
    }
    let obs_b_norm = scaled_norm(&block_norms);
    let mut reg_value = 0.0;
    if !op.reg_c.is_empty() {
        op.apply_reg(&scratch.grid_a, &mut scratch.reg);
        reg_value = dot(&scratch.reg, &scratch.reg);
    }
    let linear_value = match &targets.ell_hat {
        Some(ell) => dot(ell, &x),
        None => 0.0,
    };
    let functional_value = 0.5 * (res_norm_sq_min + flux_norm_sq_min + reg_value) + linear_value;
    let obs_norm_sq = obs_l_norm * obs_l_norm + obs_b_norm * obs_b_norm;
    let log10_obs_norm_sq = log10_sq_sum(obs_l_norm, obs_b_norm);

    Ok(MinimizeReport {
        minimizer: Minimizer {
            domain: op.domain,
            constraint: prob.constraint,
            w_hat: x,
            half_lw: op.half_lw,
        },
        cg_iterations: iterations,
        final_relative_residual: rel,
        converged,
        functional_value,
        obs_norm_sq,
        log10_obs_norm_sq,
    })
}

/// Minimization from the zero initial guess.
pub fn minimize(prob: &QuadProblem, tol: f64, max_iter: usize) -> Result<MinimizeReport> {
    minimize_with(prob, tol, max_iter, None)
}

/// Squared observation norm `s⁻¹ ∫∫ w |Lz|² + ∫_Γ0 w |∂νz|²` of a raw field
/// (normalized weight convention).
pub fn obs_norm_sq(z: &SpaceTimeField, q: &Potential, weights: &WeightField) -> Result<f64> {
    let d = weights.domain();
    z.matches_domain(d)?;
    let r = crate::wave::apply_wave_operator(z, q, d)?;
    let s = weights.s();
    let mut acc = crate::weights::weighted_l2(&r, weights, crate::grid::Region::Interior)? / s;
    let dt = d.dt();
    for side in d.gamma0.sides() {
        let flux = crate::wave::extract_flux(z, d, side);
        let bx = d.boundary_ix(side);
        for it in 0..=d.nt {
            acc += weights.weight.at(bx, it) * fp::sq(flux.values[it]) * dt;
        }
    }
    Ok(acc)
}

/// Directional derivative of the functional at a reported minimizer along an
/// admissible direction (gradient test for the optimality system).
pub fn directional_derivative(
    prob: &QuadProblem,
    report: &MinimizeReport,
    direction: &SpaceTimeField,
) -> Result<f64> {
    let op = assemble_normal_operator(prob)?;
    let targets = build_targets(prob, &op)?;
    let n = op.n_unknowns();
    let mut scratch = Scratch::new(&op);

    let mut b = vec![0.0; n];
    op.apply_lt(&targets.g_hat, &mut scratch.grid_b);
    for (i, mu) in targets.mu_hat.iter().enumerate() {
        op.apply_flux_t(i, mu, &mut scratch.grid_b);
    }
    op.unpad(&scratch.grid_b, &mut b);
    if let Some(ell) = &targets.ell_hat {
        for (bi, li) in b.iter_mut().zip(ell) {
            *bi -= li;
        }
    }

    let mut grad = vec![0.0; n];
    op.apply_into(report.minimizer.scaled_values(), &mut scratch, &mut grad);
    for (gi, bi) in grad.iter_mut().zip(&b) {
        *gi -= bi;
    }
    // ⟨grad_z, d⟩ = ⟨Âŵ − b̂, C d⟩ with C = diag(exp(s(φ−φ_max))) ≤ 1.
    direction.matches_domain(prob.domain())?;
    let l = op.layout;
    let mut acc = 0.0;
    for it in l.it0..=l.nt {
        for ix in 1..=l.nx {
            acc += grad[l.idx(ix, it)] * fp::exp(op.half_lw.at(ix, it)) * direction.at(ix, it);
        }
    }
    Ok(acc)
}

/// Weighted operator image `s⁻¹ w ∘ (L z)` of a minimizer, evaluated without
/// materializing the raw field (stays in range at any admissible `s`).
pub fn weighted_operator_image(
    prob: &QuadProblem,
    minimizer: &Minimizer,
) -> Result<SpaceTimeField> {
    let op = assemble_normal_operator(prob)?;
    let d = prob.domain();
    let mut scratch = Scratch::new(&op);
    op.pad(minimizer.scaled_values(), &mut scratch.grid_a);
    op.apply_l(&scratch.grid_a, &mut scratch.res);
    // (Lz)_r = (L̂ŵ)_r / sqrt(w_r dxdt / s); multiply by s⁻¹ w_r.
    let unscale = 1.0 / fp::sqrt(prob.s * d.dx() * d.dt());
    let lw = &prob.weights.log_weight;
    let mut out = SpaceTimeField::zeros(d);
    for it in 1..d.nt {
        for ix in 1..=d.nx {
            let rid = (it - 1) * d.nx + ix - 1;
            out.set(
                ix,
                it,
                scratch.res[rid] * fp::exp(0.5 * lw.at(ix, it)) * unscale,
            );
        }
    }
    Ok(out)
}

/// Weighted flux image `w_Γ ∘ (B z)` of a minimizer on one observed side.
pub fn weighted_flux_image(
    prob: &QuadProblem,
    minimizer: &Minimizer,
    side: Side,
) -> Result<FluxTrace> {
    let op = assemble_normal_operator(prob)?;
    let d = prob.domain();
    let block_id = op
        .flux
        .iter()
        .position(|b| b.side == side)
        .ok_or_else(|| Error::InvalidConfig(format!("side {side:?} is not observed")))?;
    let mut scratch = Scratch::new(&op);
    op.pad(minimizer.scaled_values(), &mut scratch.grid_a);
    let mut buf = vec![0.0; d.n_time()];
    op.apply_flux(block_id, &scratch.grid_a, &mut buf);
    let bx = d.boundary_ix(side);
    let lw = &prob.weights.log_weight;
    let inv_sqrt_dt = 1.0 / fp::sqrt(d.dt());
    let values = buf
        .iter()
        .enumerate()
        .map(|(it, v)| v * fp::exp(0.5 * lw.at(bx, it)) * inv_sqrt_dt)
        .collect();
    Ok(FluxTrace { side, values })
}
