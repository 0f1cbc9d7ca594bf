//! Mellin moments of the type-I core integrand, their determinant
//! representation of the N-fold integrals, the factorized residue series,
//! Milne's U(n) Gauss sum, and the two trigonometric permutation sums that
//! close the evaluation.

use crate::error::{Error, Result};
use crate::gamma_core::{bgamma, log_gamma, nonpositive_integer, sign_pow, FieldPoint};
use crate::mb_quadrature::{extrapolate, integrate_du_vec, Decay, MeasureSector, MeasureSpec, ValueWithError};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const DEGENERATE_EPS: f64 = 1e-9;

/// (a)_p = a(a+1)⋯(a+p−1).
pub fn pochhammer(a: Complex64, p: u32) -> Complex64 {
    (0..p).fold(Complex64::new(1.0, 0.0), |acc, j| acc * (a + j as f64))
}

fn gamma(z: Complex64) -> Result<Complex64> {
    Ok(log_gamma(z)?.exp())
}

/// 1/Γ(z), zero at the poles of Γ.
fn rgamma(z: Complex64) -> Complex64 {
    if nonpositive_integer(z).is_some() {
        return Complex64::new(0.0, 0.0);
    }
    (-log_gamma(z).expect("non-pole")).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MomentMethod {
    Quadrature,
    ResidueSeries,
}

/// Truncation controls for moment evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentOptions {
    pub spec: MeasureSpec,
    /// Terms kept in the holomorphic p-sums.
    pub p_max: usize,
    /// Terms kept in the antiholomorphic p̄-sums.
    pub p_max_bar: usize,
    /// Relative tolerance above which a series raises a truncation error.
    pub tol: f64,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions {
            spec: MeasureSpec::default(),
            p_max: 4000,
            p_max_bar: 4000,
            tol: 1e-7,
        }
    }
}

/// The N×N matrix of Mellin moments Q_ik with per-entry error estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix {
    pub n: usize,
    pub entries: Vec<Vec<Complex64>>,
    pub errors: Vec<Vec<f64>>,
    pub method: MomentMethod,
}

impl MomentMatrix {
    fn matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n, self.n, |i, k| self.entries[i][k])
    }

    /// Determinant by LU with partial pivoting; the error is first-order
    /// propagation of the entry errors through the cofactors.
    pub fn determinant(&self) -> ValueWithError {
        let a = self.matrix();
        let det = a.clone().lu().determinant();
        let mut err = 0.0;
        for i in 0..self.n {
            for k in 0..self.n {
                let minor = a.clone().remove_row(i).remove_column(k);
                let cof = if self.n == 1 {
                    Complex64::new(1.0, 0.0)
                } else {
                    minor.lu().determinant()
                };
                err += cof.norm() * self.errors[i][k];
            }
        }
        ValueWithError {
            value: det,
            tail_bound: 0.0,
            quad_error: err,
        }
    }

    /// The leading (n−1)×(n−1) minor.
    pub fn leading_minor(&self) -> MomentMatrix {
        let m = self.n - 1;
        MomentMatrix {
            n: m,
            entries: self.entries[..m].iter().map(|r| r[..m].to_vec()).collect(),
            errors: self.errors[..m].iter().map(|r| r[..m].to_vec()).collect(),
            method: self.method,
        }
    }
}

/// 𝓠(u|z,w) = ∏_m (−1)^{[u]} **Γ**(z_m − u)**Γ**(u + w_m).
pub fn q_function(u: FieldPoint, z: &[FieldPoint], w: &[FieldPoint]) -> Complex64 {
    let mut v = Complex64::new(sign_pow((z.len() as i64) * (u.twice_n / 2)), 0.0);
    for (a, b) in z.iter().zip(w) {
        v *= bgamma(*a - u).value * bgamma(u + *b).value;
    }
    v
}

/// 𝓠̃(u,z) = ∏_j **Γ**(z_j ± u).
pub fn q_tilde_function(u: FieldPoint, z: &[FieldPoint]) -> Complex64 {
    let mut v = Complex64::new(1.0, 0.0);
    for a in z {
        v *= bgamma(*a + u).value * bgamma(*a - u).value;
    }
    v
}

fn check_lists(z: &[FieldPoint], w: &[FieldPoint], n: usize) -> Result<()> {
    if z.len() != n + 1 || w.len() != n + 1 {
        return Err(Error::Config(format!(
            "need N+1 = {} parameters, got {} and {}",
            n + 1,
            z.len(),
            w.len()
        )));
    }
    if z.iter().chain(w).any(|p| p.twice_n % 2 != 0) {
        return Err(Error::Sector("type-I moments use integer discrete parts".into()));
    }
    Ok(())
}

fn sum_nu(ps: &[FieldPoint]) -> Complex64 {
    ps.iter().map(|p| p.nu).sum()
}

/// Q_ik = ∫Du u^{i−1}(−ū)^{k−1} 𝓠(u|z,w) for 1 ≤ i, k ≤ N with N+1 = z.len().
pub fn moment_matrix(z: &[FieldPoint], w: &[FieldPoint], n: usize, method: MomentMethod, opts: &MomentOptions) -> Result<MomentMatrix> {
    check_lists(z, w, n)?;
    match method {
        MomentMethod::Quadrature => quadrature_moments(z, w, n, opts),
        MomentMethod::ResidueSeries => residue_moments(z, w, n, opts),
    }
}

/// A single Mellin moment Q_ik (1-based indices).
pub fn mellin_moment(
    i: usize,
    k: usize,
    z: &[FieldPoint],
    w: &[FieldPoint],
    method: MomentMethod,
    opts: &MomentOptions,
) -> Result<ValueWithError> {
    let n = z.len().saturating_sub(1);
    if i == 0 || k == 0 || i > n || k > n {
        return Err(Error::Config(format!("moment index ({i},{k}) outside 1..={n}")));
    }
    let m = moment_matrix(z, w, n, method, opts)?;
    Ok(ValueWithError {
        value: m.entries[i - 1][k - 1],
        tail_bound: 0.0,
        quad_error: m.errors[i - 1][k - 1],
    })
}

fn quadrature_moments(z: &[FieldPoint], w: &[FieldPoint], n: usize, opts: &MomentOptions) -> Result<MomentMatrix> {
    let base = Complex64::new(0.0, 0.0) + (sum_nu(z) + sum_nu(w)) * 2.0 - 2.0 * z.len() as f64;
    let mut decays = Vec::with_capacity(n * n);
    for i in 0..n {
        for k in 0..n {
            decays.push(Decay::power(base + (i + k) as f64));
        }
    }
    let spec = MeasureSpec {
        sector: MeasureSector::Integer,
        ..opts.spec
    };
    let f = |u: FieldPoint, out: &mut [Complex64]| {
        let q = q_function(u, z, w);
        let a = u.u();
        let b = -u.ubar();
        let mut pa = q;
        for i in 0..n {
            let mut v = pa;
            for k in 0..n {
                out[i * n + k] = v;
                v *= b;
            }
            pa *= a;
        }
    };
    let vals = integrate_du_vec(f, &spec, &decays)?;
    Ok(MomentMatrix {
        n,
        entries: (0..n).map(|i| (0..n).map(|k| vals[i * n + k].value).collect()).collect(),
        errors: (0..n).map(|i| (0..n).map(|k| vals[i * n + k].total_error()).collect()).collect(),
        method: MomentMethod::Quadrature,
    })
}

/// Σ_{p≥0} poly(p) ∏_m (a_m)_p/(b_m)_p with the algebraic tail removed by
/// extrapolation in the truncation point. Returns (value, error).
fn hypergeometric_sum(a: &[Complex64], b: &[Complex64], degree: usize, poly: impl Fn(f64) -> Complex64, p_max: usize) -> Result<(Complex64, f64)> {
    let e: Complex64 = a.iter().zip(b).map(|(x, y)| x - y).sum::<Complex64>() + degree as f64;
    if e.re >= -1.0 {
        return Err(Error::Divergent(format!("p-sum terms decay like p^{e}")));
    }
    let p_max = p_max.max(64);
    let start = p_max / 2;
    let step = (p_max / 96).max(1);
    let mut ratio = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut xs = Vec::new();
    let mut sums = Vec::new();
    for p in 0..=p_max {
        acc += ratio * poly(p as f64);
        if p >= start && (p - start) % step == 0 {
            xs.push(p as f64 + 1.0);
            sums.push(acc);
        }
        let pf = p as f64;
        for (x, y) in a.iter().zip(b) {
            let den = y + pf;
            if den.norm() == 0.0 {
                return Err(Error::Degenerate(format!("Pochhammer denominator ({y})_p vanishes")));
            }
            ratio *= (x + pf) / den;
        }
        if ratio.norm() == 0.0 {
            return Ok((acc, 0.0));
        }
    }
    let lead = e + 1.0;
    let exps: Vec<Complex64> = (0..6).map(|j| lead - j as f64).collect();
    extrapolate(&xs, &sums, &exps)
}

fn residue_moments(z: &[FieldPoint], w: &[FieldPoint], n: usize, opts: &MomentOptions) -> Result<MomentMatrix> {
    let np1 = n + 1;
    let s_holo: Complex64 = z.iter().chain(w).map(|p| p.u()).sum();
    let s_anti: Complex64 = z.iter().chain(w).map(|p| p.ubar()).sum();
    if s_holo.re >= 1.0 || s_anti.re >= 1.0 {
        return Err(Error::Divergent(format!(
            "residue series needs Re Σ(z+w) < 1 on both sides, got {s_holo} and {s_anti}"
        )));
    }
    for j in 0..np1 {
        for m in 0..np1 {
            if m != j {
                let d = w[m].u() - w[j].u();
                if (d - d.re.round()).norm() < DEGENERATE_EPS {
                    return Err(Error::Degenerate(format!("w_{} and w_{} coincide mod 1", m + 1, j + 1)));
                }
            }
        }
    }
    let one = Complex64::new(1.0, 0.0);
    let mut entries = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let mut errors = vec![vec![0.0; n]; n];
    for j in 0..np1 {
        let wj = w[j].u();
        let wbj = w[j].ubar();
        // prefactor through log Γ differences
        let mut log_pre = Complex64::new(0.0, 0.0);
        let mut zero = false;
        for m in 0..np1 {
            log_pre += log_gamma(z[m].u() + wj)?;
            let d = one - z[m].ubar() - wbj;
            if nonpositive_integer(d).is_some() {
                zero = true;
            } else {
                log_pre -= log_gamma(d)?;
            }
            if m != j {
                log_pre += log_gamma(w[m].u() - wj)?;
                let d = one - w[m].ubar() + wbj;
                if nonpositive_integer(d).is_some() {
                    zero = true;
                } else {
                    log_pre -= log_gamma(d)?;
                }
            }
        }
        if zero {
            continue;
        }
        let pre = log_pre.exp() * sign_pow((np1 as i64) * (w[j].twice_n / 2));
        let a: Vec<Complex64> = z.iter().map(|zm| zm.u() + wj).collect();
        let b: Vec<Complex64> = w.iter().map(|wm| one - wm.u() + wj).collect();
        let ab: Vec<Complex64> = z.iter().map(|zm| zm.ubar() + wbj).collect();
        let bb: Vec<Complex64> = w.iter().map(|wm| one - wm.ubar() + wbj).collect();
        let mut h = Vec::with_capacity(n);
        let mut hb = Vec::with_capacity(n);
        for i in 0..n {
            h.push(hypergeometric_sum(&a, &b, i, |p| (-wj - p).powu(i as u32), opts.p_max)?);
            hb.push(hypergeometric_sum(&ab, &bb, i, |p| (wbj + p).powu(i as u32), opts.p_max_bar)?);
        }
        for (i, (hv, he)) in h.iter().enumerate() {
            if *he > opts.tol * hv.norm().max(f64::MIN_POSITIVE) {
                return Err(Error::Truncation(format!("p-sum j={} i={} error {he:e}", j + 1, i + 1)));
            }
        }
        for (k, (hv, he)) in hb.iter().enumerate() {
            if *he > opts.tol * hv.norm().max(f64::MIN_POSITIVE) {
                return Err(Error::Truncation(format!("p̄-sum j={} k={} error {he:e}", j + 1, k + 1)));
            }
        }
        for i in 0..n {
            for k in 0..n {
                entries[i][k] += pre * h[i].0 * hb[k].0;
                errors[i][k] += pre.norm() * (h[i].1 * hb[k].0.norm() + h[i].0.norm() * hb[k].1);
            }
        }
    }
    Ok(MomentMatrix {
        n,
        entries,
        errors,
        method: MomentMethod::ResidueSeries,
    })
}

/// I_N^(1) = det 𝓠_N(z, w).
pub fn det_q(z: &[FieldPoint], w: &[FieldPoint], n: usize, method: MomentMethod, opts: &MomentOptions) -> Result<ValueWithError> {
    Ok(moment_matrix(z, w, n, method, opts)?.determinant())
}

/// κ_N: 1 in the integer sector, (−1)^{N(N+1)/2} in the half-integer one.
pub fn kappa(n: usize, sector: MeasureSector) -> f64 {
    match sector {
        MeasureSector::Integer => 1.0,
        MeasureSector::HalfInteger => sign_pow((n * (n + 1) / 2) as i64),
    }
}

/// Q̃_ik = 2∫Du u^{2i−1}(−ū)^{2k−1} 𝓠̃(u,z) with 2N+2 = z.len().
pub fn moment_matrix_tilde(z: &[FieldPoint], n: usize, sector: MeasureSector, spec: &MeasureSpec) -> Result<MomentMatrix> {
    if z.len() != 2 * n + 2 {
        return Err(Error::Config(format!("need 2N+2 = {} parameters, got {}", 2 * n + 2, z.len())));
    }
    let half = sector == MeasureSector::HalfInteger;
    if z.iter().any(|p| (p.twice_n.rem_euclid(2) == 1) != half) {
        return Err(Error::SectorMismatch("parameters and measure sector differ".into()));
    }
    let base = Complex64::new(0.0, 0.0) + sum_nu(z) * 4.0 - 2.0 * z.len() as f64;
    let mut decays = Vec::with_capacity(n * n);
    for i in 0..n {
        for k in 0..n {
            decays.push(Decay::power(base + (2 * i + 2 * k + 2) as f64));
        }
    }
    let f = |u: FieldPoint, out: &mut [Complex64]| {
        let q = q_tilde_function(u, z) * 2.0;
        let a = u.u();
        let b = -u.ubar();
        let (a2, b2) = (a * a, b * b);
        let mut pa = q * a;
        for i in 0..n {
            let mut v = pa * b;
            for k in 0..n {
                out[i * n + k] = v;
                v *= b2;
            }
            pa *= a2;
        }
    };
    let spec = MeasureSpec { sector, ..*spec };
    let vals = integrate_du_vec(f, &spec, &decays)?;
    Ok(MomentMatrix {
        n,
        entries: (0..n).map(|i| (0..n).map(|k| vals[i * n + k].value).collect()).collect(),
        errors: (0..n).map(|i| (0..n).map(|k| vals[i * n + k].total_error()).collect()).collect(),
        method: MomentMethod::Quadrature,
    })
}

/// I_N^(2) = κ_N det 𝓠̃_N(z).
pub fn det_q_tilde(z: &[FieldPoint], n: usize, sector: MeasureSector, spec: &MeasureSpec) -> Result<ValueWithError> {
    let d = moment_matrix_tilde(z, n, sector, spec)?.determinant();
    Ok(d.scale(Complex64::new(kappa(n, sector), 0.0)))
}

/// Milne's U(n) Gauss sum for permutation σ of {0..N}: the truncated N-fold
/// series (tail extrapolated over shells max p_k ≤ P) and the closed form,
/// which carries the p = 0 Vandermonde product ∏_{k<m}(α_σ(k) − α_σ(m)).
pub fn milne_gauss_check(alpha: &[Complex64], beta: &[Complex64], sigma: &[usize], p_max: usize) -> Result<(Complex64, Complex64)> {
    let np1 = alpha.len();
    if np1 < 2 || beta.len() != np1 || sigma.len() != np1 {
        return Err(Error::Config("α, β and σ need length N+1 ≥ 2".into()));
    }
    let mut seen = vec![false; np1];
    for &s in sigma {
        if s >= np1 || seen[s] {
            return Err(Error::Config("σ is not a permutation".into()));
        }
        seen[s] = true;
    }
    let n = np1 - 1;
    let total: Complex64 = alpha.iter().chain(beta).sum();
    if total.re >= 1.0 {
        return Err(Error::Divergent(format!("Re Σ(α+β) = {} ≥ 1", total.re)));
    }
    let one = Complex64::new(1.0, 0.0);
    let sa: Vec<Complex64> = sigma.iter().map(|&s| alpha[s]).collect();
    // per-variable Pochhammer ratios A_k(p)
    let mut tables = Vec::with_capacity(n);
    for k in 0..n {
        let mut row = Vec::with_capacity(p_max + 1);
        let mut r = one;
        for p in 0..=p_max {
            row.push(r);
            let pf = p as f64;
            for i in 0..np1 {
                let den = one - alpha[i] + sa[k] + pf;
                if den.norm() == 0.0 {
                    return Err(Error::Degenerate("Pochhammer denominator vanishes".into()));
                }
                r *= (beta[i] + sa[k] + pf) / den;
            }
        }
        tables.push(row);
    }
    let term = |p: &[usize]| -> Complex64 {
        let mut v = one;
        for k in 0..n {
            v *= tables[k][p[k]];
        }
        for k in 0..n {
            for m in k + 1..n {
                v *= sa[k] + p[k] as f64 - sa[m] - p[m] as f64;
            }
        }
        v
    };
    // shell sums over max_k p_k = P
    let mut partial = Vec::with_capacity(p_max + 1);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut idx = vec![0usize; n];
    for shell in 0..=p_max {
        let mut s = Complex64::new(0.0, 0.0);
        // enumerate tuples in [0, shell]^n with at least one coordinate = shell
        idx.iter_mut().for_each(|x| *x = 0);
        loop {
            if idx.iter().any(|&x| x == shell) {
                s += term(&idx);
            }
            let mut k = 0;
            loop {
                if k == n {
                    break;
                }
                idx[k] += 1;
                if idx[k] <= shell {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
        acc += s;
        partial.push(acc);
    }
    let start = p_max / 2;
    let xs: Vec<f64> = (start..=p_max).map(|p| p as f64 + 1.0).collect();
    let e = total - np1 as f64;
    let mut exps = Vec::new();
    for fam in 1..=n {
        let lead = (e + 1.0) * fam as f64 + (n - 1) as f64;
        let count = if fam == 1 { 6 } else { 3 };
        for j in 0..count {
            exps.push(lead - j as f64);
        }
    }
    let (lhs, _) = extrapolate(&xs, &partial[start..], &exps)?;

    let last = sa[n];
    let mut rhs = gamma(one - total)?;
    for k in 0..n {
        rhs *= gamma(one + sa[k] - last)?;
    }
    for b in beta {
        rhs *= rgamma(one - b - last);
    }
    for k in 0..n {
        for m in k + 1..n {
            rhs *= sa[k] - sa[m];
        }
    }
    Ok((lhs, rhs))
}

fn sin_pi(z: Complex64) -> Complex64 {
    (z * PI).sin()
}

fn checked_sin(z: Complex64, what: &str) -> Result<Complex64> {
    let s = sin_pi(z);
    if s.norm() < DEGENERATE_EPS {
        return Err(Error::Degenerate(format!("sin π({what}) vanishes")));
    }
    Ok(s)
}

/// All permutations of 0..n in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    injective_maps(n, n)
}

/// All injective maps {0..k} → {0..m} as sequences, lexicographic.
pub fn injective_maps(k: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(k: usize, m: usize, cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(k, m, cur, used, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(k, m, &mut Vec::with_capacity(k), &mut vec![false; m], &mut out);
    out
}

/// The permutation sum R_N over S_{N+1} and its closed form N!·sin πΣ(z+w).
pub fn r_n(z: &[FieldPoint], w: &[FieldPoint], n: usize) -> Result<(Complex64, Complex64)> {
    if z.len() != n + 1 || w.len() != n + 1 {
        return Err(Error::Config("R_N needs N+1 pairs".into()));
    }
    if w.iter().any(|p| p.twice_n % 2 != 0) {
        return Err(Error::Sector("R_N uses integer [w]".into()));
    }
    for i in 0..=n {
        for j in i + 1..=n {
            checked_sin(w[i].u() - w[j].u(), "w_i − w_j")?;
        }
    }
    let mut sum = Complex64::new(0.0, 0.0);
    for sg in permutations(n + 1) {
        let last = w[sg[n]];
        let mut v = Complex64::new(1.0, 0.0);
        for zk in z {
            v *= sin_pi(zk.u() + last.u());
        }
        for k in 0..n {
            v /= sin_pi(last.u() - w[sg[k]].u());
        }
        let disc: i64 = (0..n).map(|s| w[sg[s]].twice_n / 2).sum();
        v *= sign_pow((n as i64 + 1) * disc);
        for k in 0..n {
            for j in k + 1..n {
                let (a, b) = (w[sg[j]], w[sg[k]]);
                v *= sin_pi(a.ubar() - b.ubar()) / sin_pi(a.u() - b.u());
            }
        }
        sum += v;
    }
    let total: Complex64 = z.iter().chain(w).map(|p| p.u()).sum();
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    Ok((sum, sin_pi(total) * fact))
}

/// The injective-map sine sum T_N for 2N+2 values z (expected to equal 1).
pub fn t_n(z: &[Complex64], n: usize) -> Result<Complex64> {
    let m = 2 * n + 2;
    if z.len() != m {
        return Err(Error::Config(format!("T_N needs 2N+2 = {m} values")));
    }
    for i in 0..m {
        checked_sin(z[i] * 2.0, "2z")?;
        for j in i + 1..m {
            checked_sin(z[i] + z[j], "z_i + z_j")?;
            checked_sin(z[i] - z[j], "z_i − z_j")?;
        }
    }
    let total: Complex64 = z.iter().sum();
    let mut pre = Complex64::new(sign_pow(n as i64), 0.0) / (2f64.powi(n as i32) * (1..=n).map(|k| k as f64).product::<f64>());
    for i in 0..m {
        for j in i + 1..m {
            pre *= sin_pi(z[i] + z[j]);
        }
    }
    pre /= checked_sin(total, "Σz")?;
    let mut sum = Complex64::new(0.0, 0.0);
    for pi in injective_maps(n, m) {
        let mut a = Complex64::new(1.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let s = sin_pi(z[pi[i]] + z[pi[j]]) * sin_pi(z[pi[i]] - z[pi[j]]);
                a *= s * s;
            }
            a *= sin_pi(z[pi[i]] * 2.0);
        }
        let mut b = Complex64::new(1.0, 0.0);
        for j in 0..n {
            for (i, zi) in z.iter().enumerate() {
                if i != pi[j] {
                    b *= sin_pi(zi + z[pi[j]]) * sin_pi(zi - z[pi[j]]);
                }
            }
        }
        sum += a / b;
    }
    Ok(pre * sum)
}
