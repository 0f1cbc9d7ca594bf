//! Numerical realization of the measure ∫Du = Σ_n ∫ dν/(2πi) on the contour
//! ν = it, its N-fold tensor products, and the convergence / pole-separation
//! diagnostics for the Gamma-integral families.
//!
//! Each fixed-n line integral is done with adaptive Gauss–Legendre panels on
//! [−t_max, t_max] and two mapped tails t = ±t_max/s. The sum over n is
//! accelerated by fitting the shell partial sums S(M) = Σ_{|n|≤M} to
//! S∞ − Σ_j e_j M^{2+p−j}, where p is the integrand's (complex) power law.

use crate::error::{Error, Result};
use crate::gamma_core::FieldPoint;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Contour margin below which a configuration counts as pinched.
pub const TAU_MARGIN: f64 = 1e-3;
/// Default cap on integrand calls for tensor-product quadrature.
pub const DEFAULT_BUDGET: f64 = 5e8;

const TAIL_RATIO: f64 = 0.25;
const TAIL_LEVELS: usize = 20;
const MAX_DEPTH: usize = 24;
const PRUNE_REL: f64 = 1e-16;
// floor on the extrapolation error, relative to the extrapolated tail
const TAIL_FLOOR: f64 = 1e-5;

/// Which discrete parts the measure sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MeasureSector {
    Integer,
    HalfInteger,
}

/// Truncation and quadrature parameters of a numerical ∫Du.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub sector: MeasureSector,
    /// Largest |[u]| summed explicitly before extrapolation.
    pub n_max: u32,
    /// Half-width of the panelled t-window; beyond it the mapped tails apply.
    pub t_max: f64,
    pub panels: u32,
    pub nodes_per_panel: u32,
    /// Relative tolerance of the adaptive panel refinement.
    pub rel_tol: f64,
}

impl Default for MeasureSpec {
    fn default() -> Self {
        MeasureSpec {
            sector: MeasureSector::Integer,
            n_max: 48,
            t_max: 48.0,
            panels: 64,
            nodes_per_panel: 16,
            rel_tol: 1e-12,
        }
    }
}

impl MeasureSpec {
    pub fn with_sector(mut self, sector: MeasureSector) -> Self {
        self.sector = sector;
        self
    }

    /// A lighter spec for tensor-product (multi-fold) quadrature.
    pub fn coarse() -> Self {
        MeasureSpec {
            sector: MeasureSector::Integer,
            n_max: 20,
            t_max: 20.0,
            panels: 20,
            nodes_per_panel: 8,
            rel_tol: 1e-7,
        }
    }

    /// Every size parameter doubled.
    pub fn doubled(&self) -> Self {
        MeasureSpec {
            n_max: self.n_max * 2,
            t_max: self.t_max * 2.0,
            panels: self.panels * 2,
            nodes_per_panel: self.nodes_per_panel * 2,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0
            || self.panels == 0
            || self.nodes_per_panel < 2
            || !(self.t_max > 0.0)
            || !(self.rel_tol > 0.0)
        {
            return Err(Error::Config(format!("invalid measure spec {self:?}")));
        }
        Ok(())
    }

    /// All twice_n values with |[u]| ≤ n_max in the spec's sector, ascending.
    pub fn twice_ns(&self) -> Vec<i64> {
        let m = self.n_max as i64;
        match self.sector {
            MeasureSector::Integer => (-m..=m).map(|k| 2 * k).collect(),
            MeasureSector::HalfInteger => (-m..m).map(|k| 2 * k + 1).collect(),
        }
    }

    pub fn total_nodes(&self) -> u64 {
        self.panels as u64 * self.nodes_per_panel as u64
    }
}

/// A value with absolute error estimates for truncation and quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueWithError {
    pub value: Complex64,
    pub tail_bound: f64,
    pub quad_error: f64,
}

impl ValueWithError {
    pub fn exact(value: Complex64) -> Self {
        ValueWithError {
            value,
            tail_bound: 0.0,
            quad_error: 0.0,
        }
    }

    pub fn total_error(&self) -> f64 {
        self.tail_bound + self.quad_error
    }

    pub fn scale(&self, c: Complex64) -> Self {
        ValueWithError {
            value: self.value * c,
            tail_bound: self.tail_bound * c.norm(),
            quad_error: self.quad_error * c.norm(),
        }
    }
}

/// Large-‖u‖ behaviour |f| ~ ‖u‖^p of an integrand (per integration
/// variable); the imaginary part of p tracks log-periodic oscillation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decay {
    pub power: Complex64,
}

impl Decay {
    pub fn power(p: Complex64) -> Self {
        Decay { power: p }
    }

    /// Decay exponent δ as returned by [`decay_exponent`]: p = −2(1+δ).
    pub fn from_exponent(delta: f64) -> Self {
        Decay {
            power: Complex64::new(-2.0 * (1.0 + delta), 0.0),
        }
    }

    /// δ with |f| ~ ‖u‖^{−2(1+δ)}; absolute convergence iff δ > 0.
    pub fn exponent(&self) -> f64 {
        -self.power.re / 2.0 - 1.0
    }
}

/// Gauss–Legendre rule on [−1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussRule { nodes, weights }
    }

    /// ∫_a^b g by this rule.
    pub fn integrate<G: FnMut(f64) -> Complex64>(&self, a: f64, b: f64, mut g: G) -> Complex64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += g(c + h * x) * *w;
        }
        acc * h
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Maps a panel coordinate to the contour parameter t and its Jacobian.
#[derive(Debug, Clone, Copy)]
enum Chart {
    Central,
    Upper(f64),
    Lower(f64),
}

impl Chart {
    #[inline]
    fn map(&self, s: f64) -> (f64, f64) {
        match *self {
            Chart::Central => (s, 1.0),
            Chart::Upper(tm) => (tm / s, tm / (s * s)),
            Chart::Lower(tm) => (-tm / s, tm / (s * s)),
        }
    }
}

/// One accepted quadrature node of a line integral: t, weight (including the
/// chart Jacobian) and the first integrand component there.
#[derive(Debug, Clone, Copy)]
pub struct LineNode {
    pub t: f64,
    pub weight: f64,
    pub value: Complex64,
}

/// Result of the adaptive ∫ f(n/2 + it) dt over the real line, per
/// integrand component.
#[derive(Debug, Clone)]
pub struct LineIntegral {
    pub values: Vec<Complex64>,
    pub quad_errors: Vec<f64>,
    pub tail_errors: Vec<f64>,
    pub nodes: Vec<LineNode>,
    pub evaluations: usize,
}

struct LineWork<'a, F> {
    f: &'a F,
    twice_n: i64,
    dim: usize,
    full: &'a GaussRule,
    half: &'a GaussRule,
    record: bool,
    nodes: Vec<LineNode>,
    evaluations: usize,
    buf: Vec<Complex64>,
}

struct PanelEval {
    fine: Vec<Complex64>,
    coarse: Vec<Complex64>,
    nodes: Vec<LineNode>,
}

impl<'a, F: Fn(FieldPoint, &mut [Complex64])> LineWork<'a, F> {
    fn eval(&mut self, chart: Chart, s: f64) -> Result<(f64, f64)> {
        let (t, jac) = chart.map(s);
        self.buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        (self.f)(FieldPoint::on_contour(self.twice_n, t), &mut self.buf);
        self.evaluations += 1;
        if self.buf.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NaN(format!("twice_n={}, t={t}", self.twice_n)));
        }
        Ok((t, jac))
    }

    fn panel(&mut self, chart: Chart, a: f64, b: f64) -> Result<PanelEval> {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        let zero = Complex64::new(0.0, 0.0);
        let mut fine = vec![zero; self.dim];
        let mut nodes = Vec::with_capacity(if self.record { self.full.nodes.len() } else { 0 });
        for (x, w) in self.full.nodes.iter().zip(&self.full.weights) {
            let (t, jac) = self.eval(chart, c + h * x)?;
            for (acc, v) in fine.iter_mut().zip(&self.buf) {
                *acc += v * (w * jac);
            }
            if self.record {
                nodes.push(LineNode {
                    t,
                    weight: w * jac * h,
                    value: self.buf[0],
                });
            }
        }
        let mut coarse = vec![zero; self.dim];
        for (x, w) in self.half.nodes.iter().zip(&self.half.weights) {
            let (_, jac) = self.eval(chart, c + h * x)?;
            for (acc, v) in coarse.iter_mut().zip(&self.buf) {
                *acc += v * (w * jac);
            }
        }
        fine.iter_mut().chain(coarse.iter_mut()).for_each(|v| *v *= h);
        Ok(PanelEval { fine, coarse, nodes })
    }

    fn adapt(
        &mut self,
        chart: Chart,
        a: f64,
        b: f64,
        p: PanelEval,
        tol: &[f64],
        depth: usize,
    ) -> Result<(Vec<Complex64>, Vec<f64>)> {
        let errs: Vec<f64> = p.fine.iter().zip(&p.coarse).map(|(f, c)| (f - c).norm()).collect();
        // kernel rounding puts a floor under the fine/coarse difference
        let noise = noise_floor(chart.map(0.5 * (a + b)).0, self.twice_n);
        let floor = |c: usize| noise * p.fine[c].norm();
        if errs.iter().zip(tol).enumerate().all(|(c, (e, t))| *e <= t.max(floor(c))) || depth >= MAX_DEPTH {
            if self.record {
                self.nodes.extend(p.nodes);
            }
            return Ok((p.fine, errs));
        }
        let m = 0.5 * (a + b);
        let left = self.panel(chart, a, m)?;
        let right = self.panel(chart, m, b)?;
        let half_tol: Vec<f64> = tol.iter().map(|t| 0.5 * t).collect();
        let (mut v, mut e) = self.adapt(chart, a, m, left, &half_tol, depth + 1)?;
        let (vr, er) = self.adapt(chart, m, b, right, &half_tol, depth + 1)?;
        for c in 0..self.dim {
            v[c] += vr[c];
            e[c] += er[c];
        }
        Ok((v, e))
    }
}

/// Relative accuracy of a panel value below which refinement stops. Exp of
/// log-gamma differences loses about ε·|u|·ln|u| relative accuracy.
fn noise_floor(t: f64, twice_n: i64) -> f64 {
    let r = t.hypot(0.25 * twice_n as f64);
    (1e-15 * (1.0 + r * (2.0 + r).ln())).min(1.0)
}

/// Adaptive ∫_{−∞}^{∞} f(n/2 + it) dt for one discrete part.
pub fn integrate_line<F>(f: &F, twice_n: i64, spec: &MeasureSpec, decay: Decay, record: bool) -> Result<LineIntegral>
where
    F: Fn(FieldPoint) -> Complex64,
{
    let rules = Rules::new(spec);
    let g = |u: FieldPoint, out: &mut [Complex64]| out[0] = f(u);
    integrate_line_with(&g, twice_n, spec, &[decay], record, &rules)
}

struct Rules {
    full: GaussRule,
    half: GaussRule,
}

impl Rules {
    fn new(spec: &MeasureSpec) -> Self {
        Rules {
            full: GaussRule::new(spec.nodes_per_panel as usize),
            half: GaussRule::new((spec.nodes_per_panel as usize / 2).max(1)),
        }
    }
}

fn integrate_line_with<F>(
    f: &F,
    twice_n: i64,
    spec: &MeasureSpec,
    decays: &[Decay],
    record: bool,
    rules: &Rules,
) -> Result<LineIntegral>
where
    F: Fn(FieldPoint, &mut [Complex64]),
{
    let dim = decays.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut work = LineWork {
        f,
        twice_n,
        dim,
        full: &rules.full,
        half: &rules.half,
        record,
        nodes: Vec::new(),
        evaluations: 0,
        buf: vec![zero; dim],
    };
    let tm = spec.t_max;
    let np = spec.panels as usize;
    let width = 2.0 * tm / np as f64;
    let mut pieces: Vec<(Chart, f64, f64)> = (0..np)
        .map(|k| {
            let a = -tm + width * k as f64;
            let b = if k + 1 == np { tm } else { a + width };
            (Chart::Central, a, b)
        })
        .collect();
    let mut s_hi = 1.0;
    for _ in 0..TAIL_LEVELS {
        let s_lo = s_hi * TAIL_RATIO;
        pieces.push((Chart::Upper(tm), s_lo, s_hi));
        pieces.push((Chart::Lower(tm), s_lo, s_hi));
        s_hi = s_lo;
    }
    let s_end = s_hi;

    let mut first = Vec::with_capacity(pieces.len());
    let mut scale = vec![0.0; dim];
    for &(chart, a, b) in &pieces {
        let p = work.panel(chart, a, b)?;
        for (sc, v) in scale.iter_mut().zip(&p.fine) {
            *sc += v.norm();
        }
        first.push(p);
    }
    let tol: Vec<f64> = scale.iter().map(|sc| spec.rel_tol * sc / pieces.len() as f64).collect();
    let mut values = vec![zero; dim];
    let mut quad_errors = vec![0.0; dim];
    for (&(chart, a, b), p) in pieces.iter().zip(first) {
        let (v, e) = work.adapt(chart, a, b, p, &tol, 0)?;
        for c in 0..dim {
            values[c] += v[c];
            quad_errors[c] += e[c];
        }
    }

    // remaining 0 < s < s_end on each side: g(s) ≈ c s^{−p−2}
    let mut tails = vec![zero; dim];
    for chart in [Chart::Upper(tm), Chart::Lower(tm)] {
        let (_, jac) = work.eval(chart, s_end)?;
        for c in 0..dim {
            let q = -decays[c].power - 1.0;
            if q.re > 0.0 {
                tails[c] += work.buf[c] * jac * s_end / q;
            }
        }
    }
    for c in 0..dim {
        values[c] += tails[c];
    }
    Ok(LineIntegral {
        values,
        quad_errors,
        tail_errors: tails.iter().map(|t| t.norm()).collect(),
        nodes: work.nodes,
        evaluations: work.evaluations,
    })
}

/// Limit of a sequence s(x) as x → ∞ from the model s∞ + Σ_k c_k x^{e_k}
/// (all Re e_k < 0), by least squares over the supplied points. The error is
/// the spread against refits with one basis term fewer and with the first
/// quarter of the points dropped.
pub fn extrapolate(x: &[f64], s: &[Complex64], exps: &[Complex64]) -> Result<(Complex64, f64)> {
    if x.len() != s.len() || x.is_empty() {
        return Err(Error::Fit("mismatched extrapolation data".into()));
    }
    let last = *s.last().unwrap();
    if s.iter().all(|v| *v == last) {
        return Ok((last, 0.0));
    }
    let main = lsq_limit(x, s, exps)?;
    let mut err: f64 = 0.0;
    if exps.len() > 1 {
        let fewer = lsq_limit(x, s, &exps[..exps.len() - 1])?;
        err = err.max((fewer - main).norm());
    }
    let drop = x.len() / 4;
    if x.len() - drop > exps.len() + 2 {
        let late = lsq_limit(&x[drop..], &s[drop..], exps)?;
        err = err.max((late - main).norm());
    }
    Ok((main, err))
}

fn lsq_limit(x: &[f64], s: &[Complex64], exps: &[Complex64]) -> Result<Complex64> {
    let rows = x.len();
    let cols = exps.len() + 1;
    if rows < cols {
        return Err(Error::Fit(format!("{rows} points for {cols} unknowns")));
    }
    let xmax = x.iter().cloned().fold(f64::MIN, f64::max);
    let a = DMatrix::from_fn(rows, cols, |i, j| {
        if j == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(x[i] / xmax, 0.0).powc(exps[j - 1])
        }
    });
    let b = DVector::from_iterator(rows, s.iter().cloned());
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-15)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let v = sol[0];
    if !v.re.is_finite() || !v.im.is_finite() {
        return Err(Error::Fit("non-finite extrapolation".into()));
    }
    Ok(v)
}

/// Limit of shell partial sums S(M) for a per-shell tail ~ M^{1+p}.
fn shell_limit(radii: &[f64], partial: &[Complex64], families: &[(Complex64, usize)]) -> Result<(Complex64, f64)> {
    let m = radii.len();
    let rmax = *radii.last().unwrap();
    let start = radii.iter().position(|r| *r >= 0.6 * rmax).unwrap_or(0);
    let mut exps = Vec::new();
    for &(lead, count) in families {
        for j in 0..count {
            exps.push(lead - j as f64);
        }
    }
    let start = start.min(m.saturating_sub(exps.len() + 6));
    extrapolate(&radii[start..], &partial[start..], &exps)
}

/// Partial sums over shells |[u]| ≤ r, in ascending r.
fn shell_sums(items: &[(i64, Complex64)]) -> (Vec<f64>, Vec<Complex64>) {
    let mut radii: Vec<i64> = items.iter().map(|(tn, _)| tn.abs()).collect();
    radii.sort_unstable();
    radii.dedup();
    let mut partial = Vec::with_capacity(radii.len());
    let mut acc = Complex64::new(0.0, 0.0);
    for r in &radii {
        for (tn, v) in items {
            if tn.abs() == *r {
                acc += *v;
            }
        }
        partial.push(acc);
    }
    (radii.iter().map(|r| *r as f64 * 0.5).collect(), partial)
}

/// ∫Du f = Σ_n (1/2π) ∫ f(n/2 + it) dt with extrapolated n-tail. `decay`
/// gives the integrand's power law; the integral must converge absolutely.
pub fn integrate_du<F>(f: F, spec: &MeasureSpec, decay: Decay) -> Result<ValueWithError>
where
    F: Fn(FieldPoint) -> Complex64 + Sync,
{
    let g = |u: FieldPoint, out: &mut [Complex64]| out[0] = f(u);
    Ok(integrate_du_vec(g, spec, &[decay])?[0])
}

/// Several integrals ∫Du f_c sharing one set of contour evaluations; `f`
/// fills one output slot per entry of `decays`. Adaptive refinement runs
/// until every component meets the tolerance.
pub fn integrate_du_vec<F>(f: F, spec: &MeasureSpec, decays: &[Decay]) -> Result<Vec<ValueWithError>>
where
    F: Fn(FieldPoint, &mut [Complex64]) + Sync,
{
    spec.validate()?;
    if decays.is_empty() {
        return Ok(Vec::new());
    }
    for d in decays {
        if d.exponent() <= 0.0 {
            return Err(Error::Divergent(format!(
                "integrand power {} does not decay faster than ‖u‖^-2",
                d.power
            )));
        }
    }
    let rules = Rules::new(spec);
    let lines: Vec<(i64, LineIntegral)> = spec
        .twice_ns()
        .into_par_iter()
        .map(|tn| integrate_line_with(&f, tn, spec, decays, false, &rules).map(|l| (tn, l)))
        .collect::<Result<Vec<_>>>()?;
    let scale = 1.0 / (2.0 * PI);
    let mut out = Vec::with_capacity(decays.len());
    for (c, decay) in decays.iter().enumerate() {
        let items: Vec<(i64, Complex64)> = lines.iter().map(|(tn, l)| (*tn, l.values[c] * scale)).collect();
        let quad_error = lines
            .iter()
            .map(|(_, l)| l.quad_errors[c] + l.tail_errors[c])
            .sum::<f64>()
            * scale;
        let (radii, partial) = shell_sums(&items);
        let (value, fit_err) = shell_limit(&radii, &partial, &[(decay.power + 2.0, 6)])?;
        let raw_tail = (value - *partial.last().unwrap()).norm();
        out.push(ValueWithError {
            value,
            tail_bound: fit_err.max(TAIL_FLOOR * raw_tail),
            quad_error,
        });
    }
    Ok(out)
}

/// The 1-fold node set of a measure: adaptive nodes per discrete part,
/// refined on a probe function, with the probe values cached.
#[derive(Debug, Clone)]
pub struct NodeSet {
    pub lines: Vec<(i64, Vec<LineNode>)>,
}

impl NodeSet {
    /// Adaptive nodes refined on `probe`.
    pub fn adaptive<F>(probe: &F, spec: &MeasureSpec, decay: Decay) -> Result<NodeSet>
    where
        F: Fn(FieldPoint) -> Complex64 + Sync,
    {
        let rules = Rules::new(spec);
        let g = |u: FieldPoint, out: &mut [Complex64]| out[0] = probe(u);
        let lines = spec
            .twice_ns()
            .into_par_iter()
            .map(|tn| integrate_line_with(&g, tn, spec, &[decay], true, &rules).map(|l| (tn, l.nodes)))
            .collect::<Result<Vec<_>>>()?;
        Ok(NodeSet { lines })
    }

    /// Fixed panels from the spec plus the mapped tails, no refinement.
    pub fn fixed(spec: &MeasureSpec) -> NodeSet {
        let rule = GaussRule::new(spec.nodes_per_panel as usize);
        let tm = spec.t_max;
        let np = spec.panels as usize;
        let width = 2.0 * tm / np as f64;
        let mut base = Vec::new();
        let mut push = |chart: Chart, a: f64, b: f64| {
            let h = 0.5 * (b - a);
            let c = 0.5 * (b + a);
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let (t, jac) = chart.map(c + h * x);
                base.push(LineNode {
                    t,
                    weight: w * jac * h,
                    value: Complex64::new(1.0, 0.0),
                });
            }
        };
        for k in 0..np {
            let a = -tm + width * k as f64;
            push(Chart::Central, a, a + width);
        }
        let mut s_hi = 1.0;
        for _ in 0..TAIL_LEVELS {
            let s_lo = s_hi * TAIL_RATIO;
            push(Chart::Upper(tm), s_lo, s_hi);
            push(Chart::Lower(tm), s_lo, s_hi);
            s_hi = s_lo;
        }
        NodeSet {
            lines: spec.twice_ns().into_iter().map(|tn| (tn, base.clone())).collect(),
        }
    }

    /// Drops nodes whose |weight·value| is below `rel` times the total.
    pub fn prune(&mut self, rel: f64) {
        let total: f64 = self
            .lines
            .iter()
            .flat_map(|(_, l)| l.iter())
            .map(|nd| (nd.value * nd.weight).norm())
            .sum();
        let cut = rel * total;
        for (_, nodes) in self.lines.iter_mut() {
            nodes.retain(|nd| (nd.value * nd.weight).norm() >= cut);
        }
    }

    pub fn len(&self) -> usize {
        self.lines.iter().map(|(_, l)| l.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened nodes: (point, weight·probe value / 2π, shell radius index).
    fn flatten(&self) -> (Vec<FieldPoint>, Vec<Complex64>, Vec<usize>, Vec<f64>) {
        let mut radii: Vec<i64> = self.lines.iter().map(|(tn, _)| tn.abs()).collect();
        radii.sort_unstable();
        radii.dedup();
        let mut pts = Vec::new();
        let mut wts = Vec::new();
        let mut shell = Vec::new();
        let scale = 1.0 / (2.0 * PI);
        for (tn, nodes) in &self.lines {
            let r = radii.binary_search(&tn.abs()).unwrap();
            for nd in nodes {
                pts.push(FieldPoint::on_contour(*tn, nd.t));
                wts.push(nd.value * nd.weight * scale);
                shell.push(r);
            }
        }
        (pts, wts, shell, radii.iter().map(|r| *r as f64 * 0.5).collect())
    }
}

/// Integrand-call budget, overridable through GAMMABARNES_BUDGET.
pub fn evaluation_budget() -> f64 {
    std::env::var("GAMMABARNES_BUDGET")
        .ok()
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|v| *v > 0.0)
        .unwrap_or(DEFAULT_BUDGET)
}

fn check_budget(nodes: usize, n: usize) -> Result<()> {
    let needed = (nodes as f64).powi(n as i32);
    let budget = evaluation_budget();
    if needed > budget {
        return Err(Error::Budget { needed, budget });
    }
    Ok(())
}

/// Tensor-product sum over `n` copies of a node set, bucketed by the shell
/// max_i |[u_i]|, followed by shell extrapolation.
fn tensor_sum<G>(set: &NodeSet, n: usize, decay: Decay, eval: G) -> Result<ValueWithError>
where
    G: Fn(&[FieldPoint], &[usize]) -> Complex64 + Sync,
{
    let (pts, wts, shell, radii) = set.flatten();
    let len = pts.len();
    let nshell = radii.len();
    let per_first: Vec<Vec<Complex64>> = (0..len)
        .into_par_iter()
        .map(|i0| {
            let mut buckets = vec![Complex64::new(0.0, 0.0); nshell];
            let mut idx = vec![0usize; n];
            idx[0] = i0;
            let mut tuple = vec![pts[i0]; n];
            let mut shells = vec![0usize; n];
            loop {
                let mut w = Complex64::new(1.0, 0.0);
                let mut top = 0;
                for k in 0..n {
                    tuple[k] = pts[idx[k]];
                    shells[k] = shell[idx[k]];
                    w *= wts[idx[k]];
                    top = top.max(shell[idx[k]]);
                }
                buckets[top] += w * eval(&tuple, &shells);
                // advance the odometer over positions 1..n
                let mut k = n - 1;
                loop {
                    if k == 0 {
                        return buckets;
                    }
                    idx[k] += 1;
                    if idx[k] < len {
                        break;
                    }
                    idx[k] = 0;
                    k -= 1;
                }
            }
        })
        .collect();
    let mut per_shell = vec![Complex64::new(0.0, 0.0); nshell];
    for b in &per_first {
        for (acc, v) in per_shell.iter_mut().zip(b) {
            *acc += *v;
        }
    }
    if per_shell.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NaN("tensor-product accumulation".into()));
    }
    let mut partial = Vec::with_capacity(nshell);
    let mut acc = Complex64::new(0.0, 0.0);
    for v in &per_shell {
        acc += *v;
        partial.push(acc);
    }
    let lead = decay.power + 2.0;
    let mut families = vec![(lead, 5)];
    if n >= 2 {
        families.push((lead * 2.0, 3));
    }
    let (value, fit_err) = shell_limit(&radii, &partial, &families)?;
    let raw_tail = (value - *partial.last().unwrap()).norm();
    Ok(ValueWithError {
        value,
        tail_bound: fit_err.max(TAIL_FLOOR * raw_tail),
        quad_error: 0.0,
    })
}

/// N-fold ∫Du₁⋯Du_N f over the tensor product of the fixed 1-fold node set.
/// `decay` is the power law in any single variable; the 1/N! is left to the
/// caller. N = 1 is [`integrate_du`].
pub fn integrate_du_multi<F>(f: F, n: usize, spec: &MeasureSpec, decay: Decay) -> Result<ValueWithError>
where
    F: Fn(&[FieldPoint]) -> Complex64 + Sync,
{
    spec.validate()?;
    if n == 0 {
        return Err(Error::Config("N must be positive".into()));
    }
    if n == 1 {
        return integrate_du(|u| f(&[u]), spec, decay);
    }
    if decay.exponent() <= 0.0 {
        return Err(Error::Divergent(format!("per-variable power {}", decay.power)));
    }
    let set = NodeSet::fixed(spec);
    check_budget(set.len(), n)?;
    let v = tensor_sum(&set, n, decay, |us, _| f(us))?;
    if !v.value.re.is_finite() || !v.value.im.is_finite() {
        return Err(Error::NaN("multi-fold integrand".into()));
    }
    Ok(v)
}

/// N-fold quadrature for integrands ∏_i g(u_i) · c(u_1, …, u_N) with an
/// expensive per-variable weight g and a cheap coupling c. Nodes are refined
/// on |g|·(1+‖u‖²)^{N−1} and g is evaluated once per node.
pub fn integrate_du_separable<G, C>(weight: G, coupling: C, n: usize, spec: &MeasureSpec, decay: Decay) -> Result<ValueWithError>
where
    G: Fn(FieldPoint) -> Complex64 + Sync,
    C: Fn(&[FieldPoint]) -> Complex64 + Sync,
{
    spec.validate()?;
    if n == 0 {
        return Err(Error::Config("N must be positive".into()));
    }
    if decay.exponent() <= 0.0 {
        return Err(Error::Divergent(format!("per-variable power {}", decay.power)));
    }
    let k = (n - 1) as i32;
    let probe = |u: FieldPoint| weight(u) * (1.0 + u.norm_sq().norm()).powi(k);
    let mut set = NodeSet::adaptive(&probe, spec, decay)?;
    set.prune(PRUNE_REL);
    // undo the probe's polynomial factor so cached values are g itself
    for (tn, nodes) in set.lines.iter_mut() {
        for nd in nodes.iter_mut() {
            let u = FieldPoint::on_contour(*tn, nd.t);
            nd.value /= (1.0 + u.norm_sq().norm()).powi(k);
        }
    }
    check_budget(set.len(), n)?;
    tensor_sum(&set, n, decay, |us, _| coupling(us))
}

/// The Gamma-integral family underlying an identity, as the list of
/// numerator **Γ** parameters: type I has factors **Γ**(z_j − u)**Γ**(u + w_j),
/// type II has **Γ**(z_j ± u) with the ‖u‖² weight. `fold` is the number of
/// integration variables.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaFamily {
    TypeI {
        z: Vec<FieldPoint>,
        w: Vec<FieldPoint>,
        fold: usize,
    },
    TypeII {
        z: Vec<FieldPoint>,
        fold: usize,
    },
}

impl GammaFamily {
    /// Per-variable power law of the integrand, including the coupling
    /// factors ‖u_i − u_j‖² (type I) or ‖u_i ± u_j‖² (type II).
    pub fn power(&self) -> Complex64 {
        match self {
            GammaFamily::TypeI { z, w, fold } => {
                let s: Complex64 = z.iter().chain(w).map(|p| p.nu).sum();
                s * 2.0 - 2.0 * z.len() as f64 + 2.0 * (*fold as f64 - 1.0)
            }
            GammaFamily::TypeII { z, fold } => {
                let s: Complex64 = z.iter().map(|p| p.nu).sum();
                s * 4.0 + 2.0 - 2.0 * z.len() as f64 + 4.0 * (*fold as f64 - 1.0)
            }
        }
    }

    pub fn decay(&self) -> Decay {
        Decay::power(self.power())
    }
}

/// Convergence margin: 1 − Σ Re(x_j + y_j) for type I and 1 − Σ Re x_j for
/// type II in the Gustafson normalization, generalized through the integrand
/// power law for reduced variants. Positive iff absolutely convergent.
pub fn decay_exponent(family: &GammaFamily) -> f64 {
    let p = family.power().re;
    match family {
        GammaFamily::TypeI { .. } => (-2.0 - p) / 2.0,
        GammaFamily::TypeII { .. } => (-2.0 - p) / 4.0,
    }
}

/// Minimum distance between the contour Re ν = 0 and the nearest p = 0 pole
/// over the truncated discrete range; errors when below [`TAU_MARGIN`].
pub fn contour_margin(family: &GammaFamily, spec: &MeasureSpec) -> Result<f64> {
    let mut margin = f64::INFINITY;
    let dist = |x: &FieldPoint, tn: i64, sign: i64| -> f64 {
        // |[x] ∓ n|/2 + Re x
        (x.twice_n - sign * tn).abs() as f64 * 0.25 + x.nu.re
    };
    for tn in spec.twice_ns() {
        match family {
            GammaFamily::TypeI { z, w, .. } => {
                for x in z {
                    margin = margin.min(dist(x, tn, 1));
                }
                for y in w {
                    margin = margin.min(dist(y, tn, -1));
                }
            }
            GammaFamily::TypeII { z, .. } => {
                for x in z {
                    margin = margin.min(dist(x, tn, 1)).min(dist(x, tn, -1));
                }
            }
        }
    }
    if margin < TAU_MARGIN {
        return Err(Error::Pinched {
            margin,
            threshold: TAU_MARGIN,
        });
    }
    Ok(margin)
}
