//! Integrals over the complex plane with power-function integrands: the
//! classical chain and star-triangle relations, the N-fold power integrals
//! they generalize, the Dotsenko-Fateev duality, the large-L comparison
//! with the field-point identities, and the exact algebraic checks behind
//! the duality.

use crate::error::{Error, Result};
use crate::gamma_core::{bgamma, Index};
use crate::identity_suite::{self as suite, json_digest, residual, IdentityCase, IdentityKind, IdentityTag, Params, Strategy, VerificationReport};
use crate::mb_quadrature::{GaussRule, MeasureSector, MeasureSpec, ValueWithError};
use crate::propagators::{plane_power, plane_to_field, PlanePoint};
use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::{Num, Signed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

type C = Complex64;

const GL_FINE: usize = 16;
const GL_COARSE: usize = 10;
/// Geometric grading ratio of the radial panels.
const RADIAL_RATIO: f64 = 0.5;
/// Geometric radial panels on each side of r_max.
const RADIAL_LEVELS: i32 = 40;
/// Independent random shifts of the QMC point set.
const QMC_SHIFTS: usize = 16;
const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PlaneMethod {
    PolarGrid,
    Qmc,
}

impl FromStr for PlaneMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "POLAR_GRID" => Ok(PlaneMethod::PolarGrid),
            "QMC" => Ok(PlaneMethod::Qmc),
            _ => Err(Error::Config(format!("unknown plane method '{s}'"))),
        }
    }
}

/// How a plane integral is discretized. Each integration variable sees the
/// same centers; `center_exponents[i]` is the power e with |f| ~ |z − c_i|^e
/// and `far_exponent` the power of |f| at infinity in one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneScheme {
    pub method: PlaneMethod,
    pub r_max: f64,
    /// Angular panels and radial levels per center for POLAR_GRID; total
    /// sample count for QMC.
    pub cells_or_samples: u64,
    pub singularity_centers: Vec<PlanePoint>,
    pub center_exponents: Vec<f64>,
    pub far_exponent: f64,
    pub seed: u64,
}

impl PlaneScheme {
    pub const DEFAULT_CELLS: u64 = 24;
    pub const DEFAULT_SAMPLES: u64 = 1 << 20;

    /// A scheme with default resolution and r_max for the given centers.
    pub fn new(method: PlaneMethod, centers: Vec<PlanePoint>, center_exponents: Vec<f64>, far_exponent: f64) -> Self {
        let cells = match method {
            PlaneMethod::PolarGrid => Self::DEFAULT_CELLS,
            PlaneMethod::Qmc => Self::DEFAULT_SAMPLES,
        };
        let r_max = default_r_max(&centers);
        PlaneScheme {
            method,
            r_max,
            cells_or_samples: cells,
            singularity_centers: centers,
            center_exponents,
            far_exponent,
            seed: 0,
        }
    }

    pub fn with_cells(mut self, cells: u64) -> Self {
        self.cells_or_samples = cells;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells_or_samples == 0 {
            return Err(Error::Config("cells_or_samples must be positive".into()));
        }
        if self.singularity_centers.is_empty() {
            return Err(Error::Config("at least one singularity center is required".into()));
        }
        if self.center_exponents.len() != self.singularity_centers.len() {
            return Err(Error::Config("one exponent per singularity center".into()));
        }
        let reach = self.singularity_centers.iter().map(|c| c.z.norm()).fold(0.0, f64::max);
        if !(self.r_max >= reach + 2.0) {
            return Err(Error::Config(format!("r_max = {} must exceed max |center| = {reach} by at least 2", self.r_max)));
        }
        for (c, e) in self.singularity_centers.iter().zip(&self.center_exponents) {
            if !(*e > -2.0) {
                return Err(Error::NonIntegrable(format!("exponent {e} at center {} is not above -2", c.z)));
            }
        }
        if !(self.far_exponent < -2.0) {
            return Err(Error::NonIntegrable(format!(
                "far-field exponent {} does not decay faster than |z|^-2",
                self.far_exponent
            )));
        }
        Ok(())
    }

    fn spread(&self) -> f64 {
        let cs = &self.singularity_centers;
        let mut d: f64 = 0.0;
        for a in cs {
            for b in cs {
                d = d.max((a.z - b.z).norm());
            }
        }
        d
    }
}

fn default_r_max(centers: &[PlanePoint]) -> f64 {
    let reach = centers.iter().map(|c| c.z.norm()).fold(0.0, f64::max);
    let mut spread: f64 = 0.0;
    for a in centers {
        for b in centers {
            spread = spread.max((a.z - b.z).norm());
        }
    }
    reach + 2.0 + 2.0 * spread
}

/// A node of the plane discretization, also given relative to the
/// singularity center it was generated around. Integrands singular at a
/// center should use `minus` rather than `z − c`: nodes can sit far closer
/// to a center than the spacing of doubles near it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPoint {
    pub z: C,
    pub center: usize,
    pub offset: C,
}

impl LocalPoint {
    fn new(centers: &[C], center: usize, offset: C) -> Self {
        LocalPoint {
            z: centers[center] + offset,
            center,
            offset,
        }
    }

    /// z − centers[j], exact for the generating center.
    pub fn minus(&self, centers: &[C], j: usize) -> C {
        if j == self.center {
            self.offset
        } else {
            (centers[self.center] - centers[j]) + self.offset
        }
    }
}

/// ∫ f(z₁,…,z_k) d²z₁⋯d²z_k with the plain Lebesgue measure.
pub fn integrate_c2<F>(f: F, k: usize, scheme: &PlaneScheme) -> Result<ValueWithError>
where
    F: Fn(&[PlanePoint]) -> C + Sync,
{
    integrate_c2_local(
        |pts: &[LocalPoint]| {
            let zs: Vec<PlanePoint> = pts.iter().map(|p| PlanePoint::from_complex(p.z)).collect();
            f(&zs)
        },
        k,
        scheme,
    )
}

/// As `integrate_c2`, with the nodes handed over as local points.
pub fn integrate_c2_local<F>(f: F, k: usize, scheme: &PlaneScheme) -> Result<ValueWithError>
where
    F: Fn(&[LocalPoint]) -> C + Sync,
{
    scheme.validate()?;
    if k == 0 {
        return Ok(ValueWithError::exact(f(&[])));
    }
    match scheme.method {
        PlaneMethod::PolarGrid if k == 1 => {
            let g = |p: &LocalPoint, out: &mut [C]| out[0] = f(std::slice::from_ref(p));
            Ok(polar_vec(&g, 1, scheme)?.remove(0))
        }
        PlaneMethod::PolarGrid => polar_tensor(&f, k, scheme),
        PlaneMethod::Qmc => qmc(&f, k, scheme),
    }
}

/// Several 1-fold integrals ∫ f_c(z) d²z on one polar grid.
pub fn integrate_c2_vec<F>(f: F, dim: usize, scheme: &PlaneScheme) -> Result<Vec<ValueWithError>>
where
    F: Fn(&LocalPoint, &mut [C]) + Sync,
{
    scheme.validate()?;
    if scheme.method != PlaneMethod::PolarGrid {
        return Err(Error::Config("vector-valued plane integrals use POLAR_GRID".into()));
    }
    polar_vec(&f, dim, scheme)
}

// ------------------------------------------------------------- polar grid

/// One radial node: offset from the center and r·dr weight.
#[derive(Clone, Copy)]
struct RadialNode {
    r: f64,
    w: f64,
}

/// Radial nodes for one center, grouped by panel. Between r_max·2^{−L} and
/// r_max·2^{L} the panels are geometric with ratio 2, split further into
/// `sub` pieces where they meet the distance to another center; the
/// innermost panel uses r ∝ ρ^{1/a} (a = 2 + e) and the unbounded outer
/// panel r ∝ ρ^{−1/b} (b = −far − 2), which absorb the power laws exactly.
fn radial_panels(split: f64, e_in: f64, far: f64, near: (f64, f64), sub: usize, rule: &GaussRule) -> Vec<Vec<RadialNode>> {
    let a = 2.0 + e_in;
    let b = -far - 2.0;
    let r_in = split * RADIAL_RATIO.powi(RADIAL_LEVELS);
    let r_out = split / RADIAL_RATIO.powi(RADIAL_LEVELS);
    let mapped = |inner: bool| {
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, wt)| {
                let rho = 0.5 * (1.0 + x);
                let (r, dr) = if inner {
                    (r_in * rho.powf(1.0 / a), r_in / a * rho.powf(1.0 / a - 1.0))
                } else {
                    (r_out * rho.powf(-1.0 / b), r_out / b * rho.powf(-1.0 / b - 1.0))
                };
                RadialNode { r, w: 0.5 * wt * dr * r }
            })
            .collect::<Vec<_>>()
    };
    let panel = |lo: f64, hi: f64| -> Vec<RadialNode> {
        let (c, h) = (0.5 * (hi + lo), 0.5 * (hi - lo));
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, wt)| {
                let r = c + h * x;
                RadialNode { r, w: wt * h * r }
            })
            .collect()
    };
    let mut out = vec![mapped(true)];
    let mut lo = r_in;
    for _ in 0..2 * RADIAL_LEVELS {
        let hi = lo / RADIAL_RATIO;
        let pieces = if hi > 0.25 * near.0 && lo < 4.0 * near.1 { sub } else { 1 };
        let step = (hi - lo) / pieces as f64;
        for k in 0..pieces {
            out.push(panel(lo + k as f64 * step, lo + (k + 1) as f64 * step));
        }
        lo = hi;
    }
    out.push(mapped(false));
    out
}

/// Nearest and farthest distance from center i to the other centers.
fn neighbor_range(centers: &[C], i: usize) -> (f64, f64) {
    let mut near = (f64::INFINITY, 0.0f64);
    for (j, c) in centers.iter().enumerate() {
        if j != i {
            let d = (c - centers[i]).norm();
            near = (near.0.min(d), near.1.max(d));
        }
    }
    near
}

/// Radial subdivision near the other centers.
fn sub_panels(cells: usize) -> usize {
    cells.div_ceil(4)
}

fn angular_nodes(panels: usize, rule: &GaussRule) -> Vec<(C, f64)> {
    let width = 2.0 * PI / panels as f64;
    let mut out = Vec::with_capacity(panels * rule.nodes.len());
    for p in 0..panels {
        let c = width * (p as f64 + 0.5);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let th = c + 0.5 * width * x;
            out.push((C::from_polar(1.0, th), 0.5 * width * w));
        }
    }
    out
}

/// C^∞ step from 0 at x = 1/2 to 1 at x = 1.
fn smooth_step(x: f64) -> f64 {
    if x <= 0.5 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / (x - 0.5)).exp();
        let b = (-1.0 / (1.0 - x)).exp();
        a / (a + b)
    }
}

/// Weight of the generating center in a smooth partition of unity. The
/// center c_i has raw weight ∏_{j≠i} step(|z − c_j| / |z − c_i|), which
/// vanishes identically near every other center.
fn partition(centers: &[C], p: &LocalPoint) -> f64 {
    let n = centers.len();
    if n == 1 {
        return 1.0;
    }
    let d: Vec<f64> = (0..n).map(|j| p.minus(centers, j).norm()).collect();
    let raw = |i: usize| -> f64 {
        if d[i] == 0.0 {
            return 1.0;
        }
        (0..n).filter(|&j| j != i).map(|j| smooth_step(d[j] / d[i])).product()
    };
    let own = raw(p.center);
    if own == 0.0 {
        return 0.0;
    }
    own / (0..n).map(raw).sum::<f64>()
}

fn polar_pass<F>(f: &F, dim: usize, scheme: &PlaneScheme, gl: usize) -> Result<Vec<C>>
where
    F: Fn(&LocalPoint, &mut [C]) + Sync,
{
    let rule = GaussRule::new(gl);
    let cells = scheme.cells_or_samples as usize;
    let ang = angular_nodes(cells, &rule);
    let centers: Vec<C> = scheme.singularity_centers.iter().map(|p| p.z).collect();
    let split = scheme.r_max;
    let mut jobs = Vec::new();
    for (ci, e) in scheme.center_exponents.iter().enumerate() {
        for panel in radial_panels(split, *e, scheme.far_exponent, neighbor_range(&centers, ci), sub_panels(cells), &rule) {
            jobs.push((ci, panel));
        }
    }
    let parts: Vec<Result<Vec<C>>> = jobs
        .par_iter()
        .map(|(ci, panel)| {
            let mut acc = vec![C::new(0.0, 0.0); dim];
            let mut buf = vec![C::new(0.0, 0.0); dim];
            for node in panel {
                if node.r == 0.0 || !node.r.is_finite() || node.w == 0.0 {
                    continue;
                }
                for (dir, wt) in &ang {
                    let p = LocalPoint::new(&centers, *ci, dir * node.r);
                    let psi = partition(&centers, &p);
                    if psi == 0.0 {
                        continue;
                    }
                    buf.iter_mut().for_each(|v| *v = C::new(0.0, 0.0));
                    f(&p, &mut buf);
                    let w = psi * node.w * wt;
                    for (a, v) in acc.iter_mut().zip(&buf) {
                        *a += v * w;
                    }
                }
            }
            if acc.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::NaN(format!("plane integrand near center {}", centers[*ci])));
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![C::new(0.0, 0.0); dim];
    for p in parts {
        for (t, v) in total.iter_mut().zip(p?) {
            *t += v;
        }
    }
    Ok(total)
}

fn polar_vec<F>(f: &F, dim: usize, scheme: &PlaneScheme) -> Result<Vec<ValueWithError>>
where
    F: Fn(&LocalPoint, &mut [C]) + Sync,
{
    let fine = polar_pass(f, dim, scheme, GL_FINE)?;
    let coarse = polar_pass(f, dim, scheme, GL_COARSE)?;
    Ok(fine
        .iter()
        .zip(&coarse)
        .map(|(a, b)| ValueWithError {
            value: *a,
            tail_bound: 0.0,
            quad_error: (a - b).norm(),
        })
        .collect())
}

/// Tensor product of 1-fold polar grids; feasible only for small grids.
fn polar_tensor<F>(f: &F, k: usize, scheme: &PlaneScheme) -> Result<ValueWithError>
where
    F: Fn(&[LocalPoint]) -> C + Sync,
{
    let rule = GaussRule::new(GL_FINE);
    let cells = scheme.cells_or_samples as usize;
    let ang = angular_nodes(cells, &rule);
    let centers: Vec<C> = scheme.singularity_centers.iter().map(|p| p.z).collect();
    let mut nodes: Vec<(LocalPoint, f64)> = Vec::new();
    for (ci, e) in scheme.center_exponents.iter().enumerate() {
        for panel in radial_panels(scheme.r_max, *e, scheme.far_exponent, neighbor_range(&centers, ci), sub_panels(cells), &rule) {
            for node in panel {
                if node.r == 0.0 || !node.r.is_finite() {
                    continue;
                }
                for (dir, wt) in &ang {
                    let p = LocalPoint::new(&centers, ci, dir * node.r);
                    nodes.push((p, partition(&centers, &p) * node.w * wt));
                }
            }
        }
    }
    let needed = (nodes.len() as f64).powi(k as i32);
    let budget = crate::mb_quadrature::evaluation_budget();
    if needed > budget {
        return Err(Error::Budget { needed, budget });
    }
    let len = nodes.len();
    let parts: Vec<C> = (0..len)
        .into_par_iter()
        .map(|i0| {
            let mut idx = vec![0usize; k];
            idx[0] = i0;
            let mut pts = vec![nodes[i0].0; k];
            let mut acc = C::new(0.0, 0.0);
            loop {
                let mut w = 1.0;
                for j in 0..k {
                    pts[j] = nodes[idx[j]].0;
                    w *= nodes[idx[j]].1;
                }
                acc += f(&pts) * w;
                let mut j = k - 1;
                loop {
                    if j == 0 {
                        return acc;
                    }
                    idx[j] += 1;
                    if idx[j] < len {
                        break;
                    }
                    idx[j] = 0;
                    j -= 1;
                }
            }
        })
        .collect();
    let value: C = parts.iter().sum();
    Ok(ValueWithError {
        value,
        tail_bound: 0.0,
        quad_error: f64::NAN,
    })
}

// -------------------------------------------------------------------- QMC

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// Mixture density over the centers: near c_j it behaves like
/// |z − c_j|^{e_j}, far away like |z|^{far}.
struct Sampler {
    centers: Vec<C>,
    a: Vec<f64>,
    b: f64,
    r0: f64,
    norm: Vec<f64>,
    p_in: Vec<f64>,
}

impl Sampler {
    fn new(scheme: &PlaneScheme) -> Self {
        let centers: Vec<C> = scheme.singularity_centers.iter().map(|p| p.z).collect();
        let a: Vec<f64> = scheme.center_exponents.iter().map(|e| 2.0 + e).collect();
        let b = -scheme.far_exponent - 2.0;
        let r0 = (0.5 * scheme.spread()).max(0.25);
        let norm = a.iter().map(|ai| 1.0 / (2.0 * PI * r0 * r0 * (1.0 / ai + 1.0 / b))).collect();
        let p_in = a.iter().map(|ai| (1.0 / ai) / (1.0 / ai + 1.0 / b)).collect();
        Sampler {
            centers,
            a,
            b,
            r0,
            norm,
            p_in,
        }
    }

    fn draw(&self, u0: f64, u1: f64) -> LocalPoint {
        let n = self.centers.len();
        let x = u0 * n as f64;
        let j = (x as usize).min(n - 1);
        let rho = x - j as f64;
        let r = if rho < self.p_in[j] {
            self.r0 * (rho / self.p_in[j]).powf(1.0 / self.a[j])
        } else {
            let t = (rho - self.p_in[j]) / (1.0 - self.p_in[j]);
            self.r0 * (1.0 - t).powf(-1.0 / self.b)
        };
        LocalPoint::new(&self.centers, j, C::from_polar(r, 2.0 * PI * u1))
    }

    fn density(&self, p: &LocalPoint) -> f64 {
        let n = self.centers.len() as f64;
        let mut q = 0.0;
        for j in 0..self.centers.len() {
            let r = p.minus(&self.centers, j).norm() / self.r0;
            q += self.norm[j] * if r < 1.0 { r.powf(self.a[j] - 2.0) } else { r.powf(-self.b - 2.0) };
        }
        q / n
    }
}

fn qmc<F>(f: &F, k: usize, scheme: &PlaneScheme) -> Result<ValueWithError>
where
    F: Fn(&[LocalPoint]) -> C + Sync,
{
    let dims = 2 * k;
    if dims > PRIMES.len() {
        return Err(Error::Config(format!("QMC supports at most {} variables", PRIMES.len() / 2)));
    }
    let sampler = Sampler::new(scheme);
    let mut rng = ChaCha8Rng::seed_from_u64(scheme.seed);
    let shifts: Vec<Vec<f64>> = (0..QMC_SHIFTS).map(|_| (0..dims).map(|_| rng.gen::<f64>()).collect()).collect();
    let per = (scheme.cells_or_samples / QMC_SHIFTS as u64).max(1);
    let means: Vec<C> = shifts
        .par_iter()
        .map(|shift| {
            let mut acc = C::new(0.0, 0.0);
            let mut pts = vec![sampler.draw(0.5, 0.0); k];
            let mut u = vec![0.0; dims];
            for i in 1..=per {
                for d in 0..dims {
                    let v = radical_inverse(i, PRIMES[d]) + shift[d];
                    u[d] = v - v.floor();
                }
                let mut q = 1.0;
                for j in 0..k {
                    let z = sampler.draw(u[2 * j], u[2 * j + 1]);
                    q *= sampler.density(&z);
                    pts[j] = z;
                }
                if !(q > 0.0) || !q.is_finite() {
                    continue;
                }
                let v = f(&pts) / q;
                if v.re.is_finite() && v.im.is_finite() {
                    acc += v;
                }
            }
            acc / per as f64
        })
        .collect();
    let mean: C = means.iter().sum::<C>() / QMC_SHIFTS as f64;
    let var: f64 = means.iter().map(|m| (m - mean).norm_sqr()).sum::<f64>() / (QMC_SHIFTS - 1) as f64;
    Ok(ValueWithError {
        value: mean,
        tail_bound: 0.0,
        quad_error: (var / QMC_SHIFTS as f64).sqrt(),
    })
}

// ------------------------------------------------------ classical identities

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClassicalKind {
    ChainC,
    StarTriangleC,
    Lf,
    Lf1,
    DfDuality,
}

impl ClassicalKind {
    pub const ALL: [ClassicalKind; 5] = [
        ClassicalKind::ChainC,
        ClassicalKind::StarTriangleC,
        ClassicalKind::Lf,
        ClassicalKind::Lf1,
        ClassicalKind::DfDuality,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassicalKind::ChainC => "CHAIN_C",
            ClassicalKind::StarTriangleC => "STAR_TRIANGLE_C",
            ClassicalKind::Lf => "LF",
            ClassicalKind::Lf1 => "LF1",
            ClassicalKind::DfDuality => "DF_DUALITY",
        }
    }
}

impl fmt::Display for ClassicalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassicalKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ClassicalKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown plane identity '{s}'")))
    }
}

/// External points and indices. `n` is N for LF/LF1 and the fold of the
/// left side for DF_DUALITY, whose right side has fold `m`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassicalParams {
    pub z: Vec<PlanePoint>,
    pub alpha: Vec<Index>,
    pub n: usize,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalCase {
    pub kind: ClassicalKind,
    pub params: ClassicalParams,
    /// Method, resolution, r_max and seed; centers and exponents are
    /// derived from the parameters.
    pub scheme: PlaneScheme,
    pub tolerance: f64,
}

impl ClassicalCase {
    /// Case with the default method for its fold (POLAR_GRID) and a 1e-3
    /// tolerance, 1e-2 for DF_DUALITY.
    pub fn new(kind: ClassicalKind, params: ClassicalParams) -> Self {
        let scheme = PlaneScheme::new(PlaneMethod::PolarGrid, params.z.clone(), vec![0.0; params.z.len()], -4.0);
        let tolerance = if kind == ClassicalKind::DfDuality { 1e-2 } else { 1e-3 };
        ClassicalCase {
            kind,
            params,
            scheme,
            tolerance,
        }
    }

    pub fn with_method(mut self, method: PlaneMethod, cells_or_samples: u64) -> Self {
        self.scheme.method = method;
        self.scheme.cells_or_samples = cells_or_samples;
        self
    }

    pub fn digest(&self) -> String {
        json_digest(self)
    }
}

fn one() -> Index {
    Index::real(0, 1.0)
}

fn idx_sum(a: &[Index]) -> Index {
    a.iter().fold(Index::new(0, C::new(0.0, 0.0)), |s, x| s + *x)
}

/// Complex-field **Γ** of an index, **Γ**(α) with α = ([α]/2 + σ, −[α]/2 + σ).
fn gamma_of(a: Index) -> Result<C> {
    bgamma(a.as_field_point()).get()
}

fn pw(x: C, beta: Index) -> Result<C> {
    plane_power(x, beta)
}

/// s_α(z) = [z]^{−α}.
fn s_plane(z: C, a: Index) -> Result<C> {
    pw(z, Index::new(-a.twice_m, -a.sigma))
}

/// (−1)^{Σ_k k[α_{k+1}]} over all indices but the first.
fn alternating_sign(alpha: &[Index]) -> Result<f64> {
    let mut s = 0i64;
    for (k, a) in alpha.iter().enumerate().skip(1) {
        s += k as i64 * a.disc_int()?;
    }
    Ok(if s.rem_euclid(2) == 0 { 1.0 } else { -1.0 })
}

fn expect_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Config(format!("params.{name}: expected {want} entries, got {got}")));
    }
    Ok(())
}

fn expect_index_sum(alpha: &[Index], target: f64) -> Result<()> {
    let s = idx_sum(alpha);
    if s.twice_m != 0 || (s.sigma - target).norm() > suite::CONSTRAINT_TOL {
        return Err(Error::Constraint(format!(
            "params.alpha: sum(alpha) = ([a] = {}, {}) must equal {target} on both sides",
            s.discrete(),
            s.sigma
        )));
    }
    Ok(())
}

/// Fold of the left-hand integral.
pub fn classical_fold(kind: ClassicalKind, p: &ClassicalParams) -> usize {
    match kind {
        ClassicalKind::ChainC | ClassicalKind::StarTriangleC => 1,
        ClassicalKind::Lf | ClassicalKind::DfDuality => p.n,
        ClassicalKind::Lf1 => p.n.saturating_sub(1),
    }
}

pub fn check_classical(kind: ClassicalKind, p: &ClassicalParams) -> Result<()> {
    for (i, a) in p.alpha.iter().enumerate() {
        a.disc_int().map_err(|_| Error::Sector(format!("params.alpha[{i}] needs an integer [alpha]")))?;
    }
    for i in 0..p.z.len() {
        for j in i + 1..p.z.len() {
            if p.z[i].z == p.z[j].z {
                return Err(Error::Degenerate(format!("params.z[{i}] and params.z[{j}] coincide")));
            }
        }
    }
    match kind {
        ClassicalKind::ChainC => {
            expect_len("z", p.z.len(), 2)?;
            expect_len("alpha", p.alpha.len(), 2)?;
            if p.alpha.iter().any(|a| a.sigma.re >= 1.0) {
                return Err(Error::Constraint("params.alpha: each Re<alpha> must be below 1".into()));
            }
            if (p.alpha[0].sigma + p.alpha[1].sigma).re <= 1.0 {
                return Err(Error::Constraint("params.alpha: Re<alpha1 + alpha2> must exceed 1".into()));
            }
        }
        ClassicalKind::StarTriangleC => {
            expect_len("z", p.z.len(), 3)?;
            expect_len("alpha", p.alpha.len(), 3)?;
            expect_index_sum(&p.alpha, 2.0)?;
        }
        ClassicalKind::Lf => {
            if p.n == 0 {
                return Err(Error::Config("LF needs N >= 1".into()));
            }
            expect_len("z", p.z.len(), p.n + 1)?;
            expect_len("alpha", p.alpha.len(), p.n + 1)?;
        }
        ClassicalKind::Lf1 => {
            if p.n < 2 {
                return Err(Error::Config("LF1 needs N >= 2".into()));
            }
            expect_len("z", p.z.len(), p.n + 1)?;
            expect_len("alpha", p.alpha.len(), p.n + 1)?;
            expect_index_sum(&p.alpha, p.n as f64)?;
        }
        ClassicalKind::DfDuality => {
            expect_len("z", p.z.len(), p.n + p.m + 1)?;
            expect_len("alpha", p.alpha.len(), p.n + p.m + 1)?;
        }
    }
    Ok(())
}

/// A product of powers ∏_j [o_j(y − z_j)]^{β_j}, with orientation o_j = ±1.
#[derive(Debug, Clone)]
struct PowerProduct {
    centers: Vec<C>,
    betas: Vec<Index>,
    flip: bool,
}

impl PowerProduct {
    /// Evaluated at a node generated around one of `self.centers`.
    fn eval(&self, y: &LocalPoint) -> Result<C> {
        let mut v = C::new(1.0, 0.0);
        for (j, b) in self.betas.iter().enumerate() {
            let d = y.minus(&self.centers, j);
            v *= pw(if self.flip { -d } else { d }, *b)?;
        }
        Ok(v)
    }

    fn center_exponents(&self) -> Vec<f64> {
        self.betas.iter().map(|b| 2.0 * b.sigma.re).collect()
    }

    fn far_exponent(&self) -> f64 {
        2.0 * self.betas.iter().map(|b| b.sigma.re).sum::<f64>()
    }
}

/// (1/(π^k k!)) ∫ ∏_{i<j}|y_i − y_j|² ∏_i F(y_i) d²y₁⋯d²y_k.
fn coulomb_integral(f: &PowerProduct, k: usize, base: &PlaneScheme) -> Result<ValueWithError> {
    if k == 0 {
        return Ok(ValueWithError::exact(C::new(1.0, 0.0)));
    }
    let mut scheme = base.clone();
    scheme.singularity_centers = f.centers.iter().map(|c| PlanePoint::from_complex(*c)).collect();
    scheme.center_exponents = f.center_exponents();
    scheme.far_exponent = f.far_exponent() + 2.0 * (k as f64 - 1.0);
    scheme.r_max = scheme.r_max.max(default_r_max(&scheme.singularity_centers));
    scheme.validate()?;
    let norm = 1.0 / (PI.powi(k as i32) * (1..=k).map(|x| x as f64).product::<f64>());
    let nan = C::new(f64::NAN, 0.0);
    match scheme.method {
        PlaneMethod::PolarGrid if k >= 2 => {
            // Andréief: (1/k!)∫|Δ|²∏F = det[∫ y^a ȳ^b F]
            let g = |p: &LocalPoint, out: &mut [C]| {
                let y = p.z;
                let v = f.eval(p).unwrap_or(nan) / PI;
                let mut ya = C::new(1.0, 0.0);
                for a in 0..k {
                    let mut yb = C::new(1.0, 0.0);
                    for b in 0..k {
                        out[a * k + b] = v * ya * yb;
                        yb *= y.conj();
                    }
                    ya *= y;
                }
            };
            let moments = polar_vec(&g, k * k, &scheme)?;
            Ok(determinant_with_error(k, &moments))
        }
        _ => {
            let g = |ys: &[LocalPoint]| {
                let mut v = C::new(1.0, 0.0);
                for (i, y) in ys.iter().enumerate() {
                    v *= f.eval(y).unwrap_or(nan);
                    for x in &ys[i + 1..] {
                        v *= (y.z - x.z).norm_sqr();
                    }
                }
                v
            };
            Ok(integrate_c2_local(g, k, &scheme)?.scale(C::new(norm, 0.0)))
        }
    }
}

/// det M with first-order error propagation through the cofactors.
fn determinant_with_error(k: usize, entries: &[ValueWithError]) -> ValueWithError {
    let m = DMatrix::from_fn(k, k, |i, j| entries[i * k + j].value);
    let det = m.determinant();
    let mut err = 0.0;
    if let Some(inv) = m.clone().try_inverse() {
        for i in 0..k {
            for j in 0..k {
                err += (det * inv[(j, i)]).norm() * entries[i * k + j].total_error();
            }
        }
    } else {
        err = f64::INFINITY;
    }
    ValueWithError {
        value: det,
        tail_bound: 0.0,
        quad_error: err,
    }
}

fn pair_powers(z: &[PlanePoint], alpha: &[Index], reversed: bool) -> Result<C> {
    let mut v = C::new(1.0, 0.0);
    for i in 0..z.len() {
        for k in i + 1..z.len() {
            let beta = one() - alpha[i] - alpha[k];
            let d = if reversed { z[k].z - z[i].z } else { z[i].z - z[k].z };
            v *= pw(d, beta)?;
        }
    }
    Ok(v)
}

fn gamma_product(alpha: &[Index]) -> Result<C> {
    alpha.iter().map(|a| gamma_of(one() - *a)).product()
}

/// Closed form of CHAIN_C, STAR_TRIANGLE_C, LF or LF1.
pub fn classical_closed_form(kind: ClassicalKind, p: &ClassicalParams) -> Result<C> {
    check_classical(kind, p)?;
    let a = &p.alpha;
    let z: Vec<C> = p.z.iter().map(|x| x.z).collect();
    match kind {
        ClassicalKind::ChainC => {
            let s = a[0] + a[1] - one();
            Ok(gamma_product(a)? / gamma_of(one() - s)? * s_plane(z[0] - z[1], s)?)
        }
        ClassicalKind::StarTriangleC => Ok(gamma_product(a)?
            * s_plane(z[1] - z[2], one() - a[0])?
            * s_plane(z[2] - z[0], one() - a[1])?
            * s_plane(z[0] - z[1], one() - a[2])?),
        ClassicalKind::Lf => {
            let top = Index::real(0, p.n as f64 + 1.0) - idx_sum(a);
            Ok(alternating_sign(a)? * gamma_product(a)? / gamma_of(top)? * pair_powers(&p.z, a, false)?)
        }
        ClassicalKind::Lf1 => Ok(alternating_sign(a)? * gamma_product(a)? * pair_powers(&p.z, a, false)?),
        ClassicalKind::DfDuality => Err(Error::Config("DF_DUALITY compares two integrals".into())),
    }
}

/// Prefactor of the m-fold side of the duality.
pub fn df_prefactor(p: &ClassicalParams) -> Result<C> {
    let a = &p.alpha;
    let top = Index::real(0, p.n as f64 + 1.0) - idx_sum(a);
    Ok(alternating_sign(a)? * gamma_product(a)? / gamma_of(top)? * pair_powers(&p.z, a, true)?)
}

/// Left-hand integral of a classical identity, normalized by 1/π per fold
/// (and 1/k! for the multi-fold forms).
pub fn classical_lhs(kind: ClassicalKind, p: &ClassicalParams, scheme: &PlaneScheme) -> Result<ValueWithError> {
    check_classical(kind, p)?;
    let z: Vec<C> = p.z.iter().map(|x| x.z).collect();
    let neg: Vec<Index> = p.alpha.iter().map(|a| Index::new(-a.twice_m, -a.sigma)).collect();
    let fold = classical_fold(kind, p);
    match kind {
        ClassicalKind::ChainC => {
            // s_α₂(y − z₂) = [y − z₂]^{−α₂}, s_α₁(z₁ − y) = (−1)^{[α₁]}[y − z₁]^{−α₁}
            let f = PowerProduct {
                centers: z.clone(),
                betas: neg,
                flip: false,
            };
            let sign = if p.alpha[0].disc_int()?.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            Ok(coulomb_integral(&f, 1, scheme)?.scale(C::new(sign, 0.0)))
        }
        ClassicalKind::StarTriangleC | ClassicalKind::Lf | ClassicalKind::Lf1 => {
            let f = PowerProduct {
                centers: z,
                betas: neg,
                flip: true,
            };
            coulomb_integral(&f, fold, scheme)
        }
        ClassicalKind::DfDuality => {
            let f = PowerProduct {
                centers: z,
                betas: neg,
                flip: false,
            };
            coulomb_integral(&f, fold, scheme)
        }
    }
}

/// The m-fold side of the duality, without its prefactor.
pub fn df_dual_integral(p: &ClassicalParams, scheme: &PlaneScheme) -> Result<ValueWithError> {
    let f = PowerProduct {
        centers: p.z.iter().map(|x| x.z).collect(),
        betas: p.alpha.iter().map(|a| *a - one()).collect(),
        flip: false,
    };
    coulomb_integral(&f, p.m, scheme)
}

pub fn eval_classical(case: &ClassicalCase) -> Result<VerificationReport> {
    let start = Instant::now();
    let p = &case.params;
    let lhs = classical_lhs(case.kind, p, &case.scheme)?;
    let (rhs, alternates) = match case.kind {
        ClassicalKind::DfDuality => {
            let dual = df_dual_integral(p, &case.scheme)?;
            let rhs = dual.scale(df_prefactor(p)?);
            (rhs, vec![("dual_integral".to_string(), dual)])
        }
        k => (ValueWithError::exact(classical_closed_form(k, p)?), vec![]),
    };
    let res = residual(lhs.value, rhs.value);
    let mut notes = Vec::new();
    let scale = rhs.value.norm().max(1e-10);
    let err = lhs.total_error() + rhs.total_error();
    if err > case.tolerance * scale {
        notes.push(format!("error estimate {:.3e} exceeds tolerance", err / scale));
    }
    let flags = if res.is_finite() { vec![] } else { vec!["non-finite residual".to_string()] };
    Ok(VerificationReport {
        lhs,
        rhs,
        residual: res,
        passed: res <= case.tolerance && flags.is_empty(),
        case_digest: case.digest(),
        wall_time: start.elapsed().as_secs_f64(),
        alternates,
        flags,
        notes,
    })
}

// ------------------------------------------------------ quasi-classical

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QuasiIdentity {
    Chain,
    StarTriangle,
}

impl FromStr for QuasiIdentity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CHAIN" | "CHAIN_S" | "CHAIN_C" => Ok(QuasiIdentity::Chain),
            "STAR_TRIANGLE" | "STAR_TRIANGLE_S" | "STAR_TRIANGLE_C" => Ok(QuasiIdentity::StarTriangle),
            _ => Err(Error::Config(format!("no quasi-classical limit for '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiPoint {
    pub l: f64,
    /// The field-point integral at the rescaled external points.
    pub field_lhs: ValueWithError,
    /// field_lhs · L^{2Σ⟨α⟩ − 2}.
    pub rescaled: C,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiReport {
    pub identity: QuasiIdentity,
    pub plane_rhs: C,
    pub points: Vec<QuasiPoint>,
    /// Slope of ln(deviation) against ln L.
    pub exponent: f64,
    pub monotone: bool,
}

/// The measure spec used at scale L: the discrete range and the contour
/// window grow with the rescaled external points.
pub fn quasi_spec(base: &MeasureSpec, l: f64, reach: f64) -> MeasureSpec {
    let span = (4.0 * l * reach).ceil();
    MeasureSpec {
        n_max: base.n_max.max(span as u32),
        t_max: base.t_max.max(span),
        panels: base.panels.max((span / 2.0).ceil() as u32),
        ..*base
    }
}

/// Field-point chain or star-triangle integral at external points L·z.
pub fn field_case_at_scale(identity: QuasiIdentity, z: &[PlanePoint], alpha: &[Index], l: f64, base: &MeasureSpec) -> Result<IdentityCase> {
    let pts = z.iter().map(|p| plane_to_field(*p, l)).collect::<Result<Vec<_>>>()?;
    let odd0 = (pts[0].twice_n + alpha[0].disc_int()?).rem_euclid(2) == 1;
    for (i, (p, a)) in pts.iter().zip(alpha).enumerate() {
        if ((p.twice_n + a.disc_int()?).rem_euclid(2) == 1) != odd0 {
            return Err(Error::SectorMismatch(format!("L = {l}: point {i} and index {i} fix a different sector than point 0")));
        }
    }
    let sector = if odd0 { MeasureSector::HalfInteger } else { MeasureSector::Integer };
    let tag = match identity {
        QuasiIdentity::Chain => IdentityTag::ChainS,
        QuasiIdentity::StarTriangle => IdentityTag::StarTriangleS,
    };
    let kind = IdentityKind::new(tag, 1, sector);
    let params = Params {
        z: pts,
        alpha: alpha.to_vec(),
        ..Params::default()
    };
    let reach = z.iter().map(|p| p.z.norm()).fold(0.0, f64::max) + 1.0;
    let mut case = IdentityCase::new(kind, params, Strategy::Quadrature);
    case.spec = quasi_spec(base, l, reach).with_sector(sector);
    Ok(case)
}

/// Compares the rescaled field-point identity with its plane limit along
/// the scales in `l_list`.
pub fn quasiclassical_check(
    identity: QuasiIdentity,
    z: &[PlanePoint],
    alpha: &[Index],
    l_list: &[f64],
    base: &MeasureSpec,
) -> Result<QuasiReport> {
    if l_list.len() < 2 || l_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("L list must be increasing with at least two entries".into()));
    }
    let kind = match identity {
        QuasiIdentity::Chain => ClassicalKind::ChainC,
        QuasiIdentity::StarTriangle => ClassicalKind::StarTriangleC,
    };
    let cp = ClassicalParams {
        z: z.to_vec(),
        alpha: alpha.to_vec(),
        n: 1,
        m: 0,
    };
    let plane_rhs = classical_closed_form(kind, &cp)?;
    let power: C = alpha.iter().map(|a| 2.0 * a.sigma).sum::<C>() - 2.0;
    let mut points = Vec::new();
    for &l in l_list {
        let case = field_case_at_scale(identity, z, alpha, l, base)?;
        let field_lhs = suite::lhs_value(&case)?;
        let rescaled = field_lhs.value * (power * l.ln()).exp();
        points.push(QuasiPoint {
            l,
            field_lhs,
            rescaled,
            deviation: (rescaled / plane_rhs - 1.0).norm(),
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.l.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.deviation.max(1e-300).ln()).collect();
    let exponent = slope(&xs, &ys);
    let monotone = points.windows(2).all(|w| w[1].deviation < w[0].deviation);
    Ok(QuasiReport {
        identity,
        plane_rhs,
        points,
        exponent,
        monotone,
    })
}

/// Least-squares slope of y against x.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

// ------------------------------------------------------- exact checks

/// Both sides of Σ_k ∏_i(b_i − t_k) / (t_k ∏_{j≠k}(t_j − t_k)) = ∏b/∏t − 1.
/// Works in any exact or floating field.
pub fn milne_partial_fraction_check<T>(t: &[T], b: &[T]) -> Result<(T, T)>
where
    T: Clone + Num,
{
    if t.len() != b.len() || t.is_empty() {
        return Err(Error::Config("t and b need the same positive length".into()));
    }
    check_distinct(t)?;
    if t.iter().any(|x| x.is_zero()) {
        return Err(Error::Degenerate("t contains zero".into()));
    }
    let mut lhs = T::zero();
    for (k, tk) in t.iter().enumerate() {
        let mut num = T::one();
        for bi in b {
            num = num * (bi.clone() - tk.clone());
        }
        let mut den = tk.clone();
        for (j, tj) in t.iter().enumerate() {
            if j != k {
                den = den * (tj.clone() - tk.clone());
            }
        }
        lhs = lhs + num / den;
    }
    let pb = b.iter().cloned().fold(T::one(), |a, x| a * x);
    let pt = t.iter().cloned().fold(T::one(), |a, x| a * x);
    Ok((lhs, pb / pt - T::one()))
}

fn check_distinct<T: Clone + Num>(t: &[T]) -> Result<()> {
    for i in 0..t.len() {
        for j in i + 1..t.len() {
            if t[i] == t[j] {
                return Err(Error::Degenerate(format!("t[{i}] and t[{j}] coincide")));
            }
        }
    }
    Ok(())
}

/// p_j = λ_j ∏_k (u_k + t_j) with λ_j = ∏_{k≠j} (t_j − t_k)^{−1}.
pub fn df_p<T: Clone + Num>(t: &[T], u: &[T]) -> Result<Vec<T>> {
    check_distinct(t)?;
    Ok(t
        .iter()
        .enumerate()
        .map(|(j, tj)| {
            let mut lam = T::one();
            for (k, tk) in t.iter().enumerate() {
                if k != j {
                    lam = lam * (tj.clone() - tk.clone());
                }
            }
            let mut prod = T::one();
            for uk in u {
                prod = prod * (uk.clone() + tj.clone());
            }
            prod / lam
        })
        .collect())
}

/// Largest absolute residual of Σ_j p_j t_j^{k−1} = 0 (k ≤ n) and
/// Σ_j p_j t_j^n = 1, with n = |t| − |u| − 1.
pub fn df_linear_system_check<T>(t: &[T], u: &[T]) -> Result<T>
where
    T: Clone + Num + Signed + PartialOrd,
{
    if t.len() < u.len() + 1 {
        return Err(Error::Config(format!("need |t| = n + m + 1 > |u| = {}", u.len())));
    }
    let n = t.len() - u.len() - 1;
    let p = df_p(t, u)?;
    let mut worst = T::zero();
    let mut powers: Vec<T> = vec![T::one(); t.len()];
    for k in 0..=n {
        let mut s = T::zero();
        for (pj, tk) in p.iter().zip(&powers) {
            s = s + pj.clone() * tk.clone();
        }
        if k == n {
            s = s - T::one();
        }
        let r = s.abs();
        if r > worst {
            worst = r;
        }
        for (pw, tj) in powers.iter_mut().zip(t) {
            *pw = pw.clone() * tj.clone();
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn r(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    fn pt(x: f64, y: f64) -> PlanePoint {
        PlanePoint::new(x, y)
    }

    #[test]
    fn gaussian_calibration() {
        let scheme = PlaneScheme::new(PlaneMethod::PolarGrid, vec![pt(0.0, 0.0)], vec![0.0], -4.0);
        let v = integrate_c2(|z| C::new((-z[0].z.norm_sqr()).exp(), 0.0), 1, &scheme).unwrap();
        assert!((v.value - PI).norm() < 1e-6 * PI, "{v:?}");
        // off-center bump with a second declared center
        let scheme = PlaneScheme::new(PlaneMethod::PolarGrid, vec![pt(0.5, 0.0), pt(-1.0, 0.3)], vec![0.0, 0.0], -4.0);
        let v = integrate_c2(|z| C::new((-(z[0].z - 0.2).norm_sqr()).exp(), 0.0), 1, &scheme).unwrap();
        assert!((v.value - PI).norm() < 1e-6 * PI, "{v:?}");
    }

    #[test]
    fn chain_example_matches_frozen_value() {
        let a = Index::real(0, 0.75);
        let p = ClassicalParams {
            z: vec![pt(0.5, 0.0), pt(-0.5, 0.0)],
            alpha: vec![a, a],
            n: 1,
            m: 0,
        };
        let rhs = classical_closed_form(ClassicalKind::ChainC, &p).unwrap();
        // (Γ(1/4)/Γ(3/4))², an independent scipy evaluation
        assert!((rhs - 8.753758460905908).norm() < 1e-12);
        let r = eval_classical(&ClassicalCase::new(ClassicalKind::ChainC, p)).unwrap();
        assert!(r.residual < 1e-6, "{r:?}");
    }

    #[test]
    fn refinement_approaches_reference() {
        let a = Index::real(1, 0.7);
        let b = Index::int(-1, C::new(0.6, 0.1));
        let p = ClassicalParams {
            z: vec![pt(0.3, 0.2), pt(-0.5, 0.1)],
            alpha: vec![a, b],
            n: 1,
            m: 0,
        };
        let rhs = classical_closed_form(ClassicalKind::ChainC, &p).unwrap();
        let mut last = f64::INFINITY;
        for cells in [6, 12, 24] {
            let case = ClassicalCase::new(ClassicalKind::ChainC, p.clone()).with_method(PlaneMethod::PolarGrid, cells);
            let v = classical_lhs(ClassicalKind::ChainC, &p, &case.scheme).unwrap();
            let d = (v.value - rhs).norm();
            assert!(d < last, "cells {cells}: {d} vs {last}");
            last = d;
        }
    }

    #[test]
    fn lf_n1_agrees_with_chain() {
        let a1 = Index::real(1, 0.7);
        let a2 = Index::int(-2, C::new(0.6, 0.1));
        let p = ClassicalParams {
            z: vec![pt(0.3, 0.2), pt(-0.5, 0.1)],
            alpha: vec![a1, a2],
            n: 1,
            m: 0,
        };
        let scheme = ClassicalCase::new(ClassicalKind::Lf, p.clone()).scheme;
        let lf = classical_lhs(ClassicalKind::Lf, &p, &scheme).unwrap();
        let chain = classical_lhs(ClassicalKind::ChainC, &p, &scheme).unwrap();
        // [z − u]^{−α₂} = (−1)^{[α₂]} [u − z]^{−α₂}
        assert!((lf.value - chain.value).norm() < 1e-10 * lf.value.norm());
        let r = eval_classical(&ClassicalCase::new(ClassicalKind::Lf, p)).unwrap();
        assert!(r.residual < 1e-6, "{r:?}");
    }

    #[test]
    fn df_sign_matches_ratio() {
        let p = ClassicalParams {
            z: vec![pt(0.2, 0.1), pt(-0.4, 0.3), pt(0.5, -0.6)],
            alpha: vec![Index::real(0, 0.5), Index::int(1, C::new(0.6, 0.0)), Index::real(-1, 0.55)],
            n: 1,
            m: 1,
        };
        let case = ClassicalCase::new(ClassicalKind::DfDuality, p.clone());
        let r = eval_classical(&case).unwrap();
        assert!(r.residual < 1e-5, "{r:?}");
        let sign = alternating_sign(&p.alpha).unwrap();
        assert!(sign == 1.0 || sign == -1.0);
        let unsigned = r.alternates[0].1.value * (df_prefactor(&p).unwrap() * sign);
        let ratio = r.lhs.value / unsigned;
        assert!((ratio - sign).norm() < 1e-4, "{ratio}");
    }

    #[test]
    fn non_integrable_exponent_is_rejected() {
        let scheme = PlaneScheme::new(PlaneMethod::PolarGrid, vec![pt(0.0, 0.0)], vec![-2.0], -4.0);
        assert!(matches!(integrate_c2(|_| C::new(1.0, 0.0), 1, &scheme), Err(Error::NonIntegrable(_))));
        let scheme = PlaneScheme::new(PlaneMethod::PolarGrid, vec![pt(0.0, 0.0)], vec![0.0], -1.5);
        assert!(matches!(integrate_c2(|_| C::new(1.0, 0.0), 1, &scheme), Err(Error::NonIntegrable(_))));
    }

    #[test]
    fn milne_examples() {
        let (l, rr) = milne_partial_fraction_check(&[r(1, 1), r(2, 1)], &[r(3, 1), r(5, 1)]).unwrap();
        assert_eq!(l, r(13, 2));
        assert_eq!(rr, r(13, 2));
        let (l, rr) = milne_partial_fraction_check(&[r(3, 7)], &[r(-2, 5)]).unwrap();
        assert_eq!(l, rr);
        let t = [r(1, 2), r(-3, 4), r(5, 3)];
        let b = [r(-3, 4), r(5, 3), r(1, 2)];
        let (l, rr) = milne_partial_fraction_check(&t, &b).unwrap();
        assert_eq!(l, r(0, 1));
        assert_eq!(rr, r(0, 1));
        assert!(matches!(milne_partial_fraction_check(&[r(1, 1), r(1, 1)], &[r(0, 1), r(0, 1)]), Err(Error::Degenerate(_))));
        assert!(matches!(milne_partial_fraction_check(&[r(0, 1)], &[r(1, 1)]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn df_system_examples() {
        let p = df_p(&[r(1, 1), r(-1, 1)], &[]).unwrap();
        assert_eq!(p, vec![r(1, 2), r(-1, 2)]);
        assert_eq!(df_linear_system_check(&[r(1, 1), r(-1, 1)], &[]).unwrap(), r(0, 1));
        let t = [r(1, 3), r(2, 1), r(-5, 2), r(7, 4)];
        let u = [r(3, 5), r(-1, 6)];
        assert_eq!(df_linear_system_check(&t, &u).unwrap(), r(0, 1));
        let tf = [1.1, 1.37, 1.52, 1.83, 1.99];
        let uf = [0.3, -0.7];
        assert!(df_linear_system_check(&tf, &uf).unwrap() < 1e-12);
    }

    #[test]
    fn halton_is_low_discrepancy() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(5, 3) - (2.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn two_strong_singularities_to_machine_precision() {
        // (1/π)∫|z|^e |z − s|^e d²z against the chain closed form
        for (e, sep) in [(-1.2, 1.0), (-1.9, 0.3), (-1.9, 3.0)] {
            let cs = [C::new(0.0, 0.0), C::new(sep, 0.0)];
            let scheme = PlaneScheme::new(PlaneMethod::PolarGrid, vec![pt(0.0, 0.0), pt(sep, 0.0)], vec![e, e], 2.0 * e);
            let v = integrate_c2_local(
                |z| C::new(z[0].minus(&cs, 0).norm().powf(e) * z[0].minus(&cs, 1).norm().powf(e) / PI * sep.powf(-2.0 - 2.0 * e), 0.0),
                1,
                &scheme,
            )
            .unwrap();
            let a = Index::real(0, -e / 2.0);
            let exact = gamma_of(one() - a).unwrap().powi(2) / gamma_of(Index::real(0, 2.0) - a - a).unwrap();
            assert!((v.value - exact).norm() < 1e-11 * exact.norm(), "e={e} sep={sep}: {} vs {exact}", v.value);
        }
    }

    #[test]
    fn df_with_empty_dual_is_lf() {
        let p = ClassicalParams {
            z: vec![pt(0.3, 0.2), pt(-0.5, 0.1)],
            alpha: vec![Index::real(1, 0.7), Index::int(-1, C::new(0.6, 0.1))],
            n: 1,
            m: 0,
        };
        let df = eval_classical(&ClassicalCase::new(ClassicalKind::DfDuality, p.clone())).unwrap();
        let lf = eval_classical(&ClassicalCase::new(ClassicalKind::Lf, p)).unwrap();
        assert!(df.residual < 1e-6, "{df:?}");
        assert!((df.lhs.value - lf.lhs.value).norm() < 1e-12 * lf.lhs.value.norm());
    }

    #[test]
    fn distant_star_vertex_reduces_to_chain() {
        let a = [Index::int(1, C::new(0.7, 0.1)), Index::int(-1, C::new(0.6, -0.3))];
        let a3 = Index::real(0, 2.0) - a[0] - a[1];
        let z3 = C::new(600.0, 800.0);
        let z = vec![pt(0.3, 0.2), pt(-0.5, 0.1), PlanePoint::from_complex(z3)];
        let star = ClassicalParams {
            z: z.clone(),
            alpha: vec![a[0], a[1], a3],
            n: 1,
            m: 0,
        };
        let star_v = classical_lhs(ClassicalKind::StarTriangleC, &star, &ClassicalCase::new(ClassicalKind::StarTriangleC, star.clone()).scheme).unwrap();
        let chain = ClassicalParams {
            z: z[..2].to_vec(),
            alpha: a.to_vec(),
            n: 1,
            m: 0,
        };
        // s_{α3}(z3 − z) → s_{α3}(z3) for |z3| ≫ |z|, and s_{α1}(z1 − z) = (−1)^{[α1]} s_{α1}(z − z1)
        let expected = classical_closed_form(ClassicalKind::ChainC, &chain).unwrap() * s_plane(z3, a3).unwrap() * -1.0;
        assert!((star_v.value / expected - 1.0).norm() < 1e-2, "{} vs {expected}", star_v.value);
    }

    #[test]
    fn qmc_is_seed_deterministic() {
        let a = Index::real(0, 0.75);
        let p = ClassicalParams {
            z: vec![pt(0.5, 0.0), pt(-0.5, 0.0)],
            alpha: vec![a, a],
            n: 1,
            m: 0,
        };
        let case = ClassicalCase::new(ClassicalKind::ChainC, p).with_method(PlaneMethod::Qmc, 1 << 16);
        let a1 = eval_classical(&case).unwrap();
        let a2 = eval_classical(&case).unwrap();
        assert_eq!(a1.lhs, a2.lhs);
        assert!(a1.residual < 1e-2, "{a1:?}");
    }
}
