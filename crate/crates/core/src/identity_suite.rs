//! Seeded parameter sampling and two-sided numerical verification of the
//! field-point integral identities: the Gustafson-type integrals, their
//! reduced forms, chain and star-triangle relations, the quantized dualities
//! and the ζ → 1 residue limit.

use crate::error::{Error, Result};
use crate::gamma_core::{bgamma, sign_pow, FieldPoint, Index};
use crate::mb_quadrature::{
    self as mb, integrate_du, integrate_du_separable, GammaFamily, MeasureSector, MeasureSpec, ValueWithError,
};
use crate::propagators::{d_prop, s_prop_field};
use crate::residue_engine::{det_q, det_q_tilde, kappa, moment_matrix, MomentMethod, MomentOptions};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

type C = Complex64;

/// Exact-constraint tolerance on continuous parts.
pub const CONSTRAINT_TOL: f64 = 1e-12;
/// Sampling floor on the convergence margin.
pub const SAMPLE_DECAY_MARGIN: f64 = 0.1;
/// Sampling floor on the contour margin.
pub const SAMPLE_CONTOUR_MARGIN: f64 = 0.05;
/// Largest |twice_n| drawn for discrete parts.
pub const SAMPLE_TWICE_MAX: i64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IdentityTag {
    GustafsonI,
    #[serde(rename = "GUSTAFSON_II")]
    GustafsonII,
    ReducedI,
    #[serde(rename = "REDUCED_I_GAMMA")]
    ReducedIGamma,
    #[serde(rename = "REDUCED_II")]
    ReducedII,
    #[serde(rename = "REDUCED_II_GAMMA")]
    ReducedIIGamma,
    ChainS,
    StarTriangleS,
    ChainD,
    StarTriangleD,
    DualQuantizedI,
    #[serde(rename = "DUAL_QUANTIZED_II")]
    DualQuantizedII,
    ZetaPole,
}

impl IdentityTag {
    pub const ALL: [IdentityTag; 13] = [
        IdentityTag::GustafsonI,
        IdentityTag::GustafsonII,
        IdentityTag::ReducedI,
        IdentityTag::ReducedIGamma,
        IdentityTag::ReducedII,
        IdentityTag::ReducedIIGamma,
        IdentityTag::ChainS,
        IdentityTag::StarTriangleS,
        IdentityTag::ChainD,
        IdentityTag::StarTriangleD,
        IdentityTag::DualQuantizedI,
        IdentityTag::DualQuantizedII,
        IdentityTag::ZetaPole,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            IdentityTag::GustafsonI => "GUSTAFSON_I",
            IdentityTag::GustafsonII => "GUSTAFSON_II",
            IdentityTag::ReducedI => "REDUCED_I",
            IdentityTag::ReducedIGamma => "REDUCED_I_GAMMA",
            IdentityTag::ReducedII => "REDUCED_II",
            IdentityTag::ReducedIIGamma => "REDUCED_II_GAMMA",
            IdentityTag::ChainS => "CHAIN_S",
            IdentityTag::StarTriangleS => "STAR_TRIANGLE_S",
            IdentityTag::ChainD => "CHAIN_D",
            IdentityTag::StarTriangleD => "STAR_TRIANGLE_D",
            IdentityTag::DualQuantizedI => "DUAL_QUANTIZED_I",
            IdentityTag::DualQuantizedII => "DUAL_QUANTIZED_II",
            IdentityTag::ZetaPole => "ZETA_POLE",
        }
    }
}

impl fmt::Display for IdentityTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IdentityTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        IdentityTag::ALL
            .iter()
            .copied()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown identity tag '{s}'")))
    }
}

/// The four parity assignments of the D star-triangle relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParityVariant {
    /// All α even; u and the z's even.
    V1A,
    /// All α even; u and the z's odd.
    V1B,
    /// α₁ even, α₂ and α₃ odd; u and z₁ even, z₂ and z₃ odd.
    V2A,
    /// α₁ even, α₂ and α₃ odd; u and z₁ odd, z₂ and z₃ even.
    V2B,
}

impl ParityVariant {
    pub const ALL: [ParityVariant; 4] = [ParityVariant::V1A, ParityVariant::V1B, ParityVariant::V2A, ParityVariant::V2B];

    pub fn sector(&self) -> MeasureSector {
        match self {
            ParityVariant::V1A | ParityVariant::V2A => MeasureSector::Integer,
            ParityVariant::V1B | ParityVariant::V2B => MeasureSector::HalfInteger,
        }
    }

    /// Oddness of (α₁, α₂, α₃) as m = [α]/2 parities.
    fn alpha_odd(&self) -> [bool; 3] {
        match self {
            ParityVariant::V1A | ParityVariant::V1B => [false; 3],
            ParityVariant::V2A | ParityVariant::V2B => [false, true, true],
        }
    }

    /// Oddness of (z₁, z₂, z₃), i.e. whether [z] is a half-integer.
    fn z_odd(&self) -> [bool; 3] {
        match self {
            ParityVariant::V1A => [false; 3],
            ParityVariant::V1B => [true; 3],
            ParityVariant::V2A => [false, true, true],
            ParityVariant::V2B => [true, false, false],
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ParityVariant::V1A => "V1A",
            ParityVariant::V1B => "V1B",
            ParityVariant::V2A => "V2A",
            ParityVariant::V2B => "V2B",
        }
    }
}

impl FromStr for ParityVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ParityVariant::ALL
            .iter()
            .copied()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown parity variant '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IdentityKind {
    pub tag: IdentityTag,
    pub n: usize,
    pub sector: MeasureSector,
    pub parity_variant: Option<ParityVariant>,
}

impl IdentityKind {
    pub fn new(tag: IdentityTag, n: usize, sector: MeasureSector) -> Self {
        IdentityKind {
            tag,
            n,
            sector,
            parity_variant: None,
        }
    }

    pub fn star_d(variant: ParityVariant) -> Self {
        IdentityKind {
            tag: IdentityTag::StarTriangleD,
            n: 2,
            sector: variant.sector(),
            parity_variant: Some(variant),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("N must be positive".into()));
        }
        match (self.tag, self.parity_variant) {
            (IdentityTag::StarTriangleD, None) => Err(Error::Config("STAR_TRIANGLE_D needs a parity variant".into())),
            (IdentityTag::StarTriangleD, Some(v)) if v.sector() != self.sector => Err(Error::Config(format!(
                "variant {} fixes the sector to {:?}",
                v.as_str(),
                v.sector()
            ))),
            (IdentityTag::StarTriangleD, Some(_)) => Ok(()),
            (_, Some(_)) => Err(Error::Config("parity_variant only applies to STAR_TRIANGLE_D".into())),
            _ => Ok(()),
        }
    }
}

/// Named parameter lists. Chains and star-triangles keep the external
/// points in `z` and the indices in `alpha`; `m` is the fold of the dual
/// side of the quantized dualities.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Params {
    pub z: Vec<FieldPoint>,
    pub w: Vec<FieldPoint>,
    pub alpha: Vec<Index>,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    Quadrature,
    Determinant,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCase {
    pub kind: IdentityKind,
    pub params: Params,
    pub spec: MeasureSpec,
    pub strategy: Strategy,
    pub tolerance: f64,
}

impl IdentityCase {
    /// A case with the default spec and tolerance for its fold and strategy.
    pub fn new(kind: IdentityKind, params: Params, strategy: Strategy) -> Self {
        let fold = lhs_fold(&kind, &params);
        let sector = measure_sector(&kind);
        let quad_fold = if strategy == Strategy::Determinant { 1 } else { fold };
        let spec = if quad_fold >= 2 {
            MeasureSpec::coarse().with_sector(sector)
        } else {
            MeasureSpec::default().with_sector(sector)
        };
        let tolerance = match strategy {
            _ if kind.tag == IdentityTag::ZetaPole => 1e-3,
            Strategy::Determinant => 1e-5,
            _ if fold >= 2 => 1e-4,
            _ => 1e-6,
        };
        IdentityCase {
            kind,
            params,
            spec,
            strategy,
            tolerance,
        }
    }

    pub fn sampled(kind: IdentityKind, seed: u64, strategy: Strategy) -> Result<Self> {
        Ok(IdentityCase::new(kind, sample_params(&kind, seed)?, strategy))
    }

    /// A stable hexadecimal digest of the full case definition.
    pub fn digest(&self) -> String {
        json_digest(self)
    }
}

/// FNV-1a over the JSON form of a value, as 16 hex digits.
pub fn json_digest<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("value serializes");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub lhs: ValueWithError,
    pub rhs: ValueWithError,
    /// Relative where |rhs| > 1e-10, absolute otherwise.
    pub residual: f64,
    pub passed: bool,
    pub case_digest: String,
    pub wall_time: f64,
    /// Further evaluations of the same quantity, e.g. the determinant side
    /// under [`Strategy::Both`].
    pub alternates: Vec<(String, ValueWithError)>,
    pub flags: Vec<String>,
    /// Diagnostics that do not affect `passed`.
    pub notes: Vec<String>,
}

/// Residual convention shared by all reports.
pub fn residual(lhs: C, rhs: C) -> f64 {
    let d = (lhs - rhs).norm();
    if rhs.norm() > 1e-10 {
        d / rhs.norm()
    } else {
        d
    }
}

fn g(x: FieldPoint) -> C {
    bgamma(x).value
}

fn one() -> FieldPoint {
    FieldPoint::scalar(1.0)
}

fn half_pt() -> FieldPoint {
    FieldPoint::scalar(0.5)
}

fn sum_pts(ps: &[FieldPoint]) -> FieldPoint {
    ps.iter().fold(FieldPoint::scalar(0.0), |a, b| a + *b)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn is_odd(twice: i64) -> bool {
    twice.rem_euclid(2) == 1
}

fn sector_odd(s: MeasureSector) -> bool {
    s == MeasureSector::HalfInteger
}

/// The measure sector the lhs integral runs over.
pub fn measure_sector(kind: &IdentityKind) -> MeasureSector {
    match kind.parity_variant {
        Some(v) => v.sector(),
        None => kind.sector,
    }
}

/// Number of integration variables on the lhs.
pub fn lhs_fold(kind: &IdentityKind, params: &Params) -> usize {
    match kind.tag {
        IdentityTag::GustafsonI | IdentityTag::GustafsonII => kind.n,
        IdentityTag::ReducedI | IdentityTag::ReducedIGamma | IdentityTag::ReducedII | IdentityTag::ReducedIIGamma => {
            kind.n.saturating_sub(1)
        }
        IdentityTag::DualQuantizedI | IdentityTag::DualQuantizedII => kind.n.max(params.m),
        _ => 1,
    }
}

fn vandermonde(us: &[FieldPoint]) -> C {
    let mut v = C::new(1.0, 0.0);
    for i in 0..us.len() {
        for j in i + 1..us.len() {
            v *= (us[i] - us[j]).norm_sq();
        }
    }
    v
}

/// ∏_{i<k} 1/(**Γ**(u_i − u_k)**Γ**(u_k − u_i)) = ∏ (−1)^{[u_i]−[u_k]}‖u_i − u_k‖².
fn vandermonde_signed(us: &[FieldPoint]) -> C {
    let mut v = C::new(1.0, 0.0);
    for i in 0..us.len() {
        for j in i + 1..us.len() {
            v *= (us[i] - us[j]).norm_sq() * sign_pow((us[i].twice_n - us[j].twice_n) / 2);
        }
    }
    v
}

fn vandermonde_pm(us: &[FieldPoint]) -> C {
    let mut v = C::new(1.0, 0.0);
    for i in 0..us.len() {
        for j in i + 1..us.len() {
            v *= (us[i] - us[j]).norm_sq() * (us[i] + us[j]).norm_sq();
        }
    }
    v
}

/// ∫Du₁⋯Du_fold ∏ weight(u_i) · coupling(u); fold 0 is the empty integral 1.
fn fold_integral<G, Cp>(weight: G, coupling: Cp, fold: usize, spec: &MeasureSpec, family: &GammaFamily) -> Result<ValueWithError>
where
    G: Fn(FieldPoint) -> C + Sync,
    Cp: Fn(&[FieldPoint]) -> C + Sync,
{
    let decay = family.decay();
    match fold {
        0 => Ok(ValueWithError::exact(C::new(1.0, 0.0))),
        1 => integrate_du(weight, spec, decay),
        _ => integrate_du_separable(weight, coupling, fold, spec, decay),
    }
}

fn expect_len(name: &str, v: usize, want: usize) -> Result<()> {
    if v != want {
        return Err(Error::Config(format!("params.{name}: expected {want} entries, got {v}")));
    }
    Ok(())
}

fn expect_sector(name: &str, ps: &[FieldPoint], sector: MeasureSector) -> Result<()> {
    for (i, p) in ps.iter().enumerate() {
        if is_odd(p.twice_n) != sector_odd(sector) {
            return Err(Error::SectorMismatch(format!(
                "params.{name}[{i}] has [.] = {} outside the {:?} sector",
                p.discrete(),
                sector
            )));
        }
    }
    Ok(())
}

fn expect_sum(name: &str, s: FieldPoint, target: f64) -> Result<()> {
    if s.twice_n != 0 || (s.nu - target).norm() > CONSTRAINT_TOL {
        return Err(Error::Constraint(format!(
            "{name} = ([.] = {}, {}) must equal {target} on both sides",
            s.discrete(),
            s.nu
        )));
    }
    Ok(())
}

fn alpha_c(a: &Index) -> Result<FieldPoint> {
    a.half_complement()
}

/// Gamma family whose power law and pole structure govern the lhs integrand.
pub fn lhs_family(kind: &IdentityKind, params: &Params) -> Result<GammaFamily> {
    let fold = lhs_fold(kind, params);
    let p = params;
    Ok(match kind.tag {
        IdentityTag::GustafsonI | IdentityTag::ReducedI | IdentityTag::ZetaPole => GammaFamily::TypeI {
            z: p.z.clone(),
            w: p.w.clone(),
            fold: fold.max(1),
        },
        IdentityTag::DualQuantizedI => GammaFamily::TypeI {
            z: p.z.clone(),
            w: p.w.clone(),
            fold: kind.n,
        },
        IdentityTag::ReducedIGamma => {
            let gamma = sum_pts(&p.z) + sum_pts(&p.w);
            let mut z = p.z.clone();
            z.push(one() - gamma);
            GammaFamily::TypeI {
                z,
                w: p.w.clone(),
                fold,
            }
        }
        IdentityTag::GustafsonII | IdentityTag::ReducedII => GammaFamily::TypeII { z: p.z.clone(), fold: fold.max(1) },
        IdentityTag::DualQuantizedII => GammaFamily::TypeII { z: p.z.clone(), fold: kind.n },
        IdentityTag::ReducedIIGamma => {
            let gamma = sum_pts(&p.z);
            let mut z = p.z.clone();
            z.push(one() - gamma);
            GammaFamily::TypeII { z, fold }
        }
        IdentityTag::ChainS | IdentityTag::StarTriangleS => {
            let mut z = Vec::new();
            let mut w = Vec::new();
            if kind.tag == IdentityTag::ChainS {
                // S_α₁(z − u) S_α₂(u − w)
                let c1 = alpha_c(&p.alpha[0])?;
                let c2 = alpha_c(&p.alpha[1])?;
                z.extend([c1 + p.z[0], c2 + p.z[1]]);
                w.extend([c1 - p.z[0], c2 - p.z[1]]);
            } else {
                for (a, x) in p.alpha.iter().zip(&p.z) {
                    let c = alpha_c(a)?;
                    z.push(c + *x);
                    w.push(c - *x);
                }
            }
            GammaFamily::TypeI { z, w, fold: 1 }
        }
        IdentityTag::ChainD | IdentityTag::StarTriangleD => {
            let mut z = Vec::new();
            for (a, x) in p.alpha.iter().zip(&p.z) {
                let c = alpha_c(a)?;
                z.push(c + *x);
                z.push(c - *x);
            }
            GammaFamily::TypeII { z, fold: 1 }
        }
    })
}

/// Checks list lengths, sectors and the exact constraint surface of a case.
pub fn check_constraints(kind: &IdentityKind, p: &Params) -> Result<()> {
    kind.validate()?;
    let n = kind.n;
    let sector = measure_sector(kind);
    match kind.tag {
        IdentityTag::GustafsonI => {
            expect_len("z", p.z.len(), n + 1)?;
            expect_len("w", p.w.len(), n + 1)?;
            // type I shares one sector among u, z and w
            expect_sector("z", &p.z, sector)?;
            let wshift: Vec<FieldPoint> = p.w.iter().map(|x| FieldPoint::new(-x.twice_n, x.nu)).collect();
            expect_sector("w", &wshift, sector)?;
        }
        IdentityTag::ReducedI | IdentityTag::ZetaPole => {
            if kind.tag == IdentityTag::ReducedI && n < 2 {
                return Err(Error::Config("REDUCED_I needs N ≥ 2".into()));
            }
            expect_len("z", p.z.len(), n + 1)?;
            expect_len("w", p.w.len(), n + 1)?;
            if sector != MeasureSector::Integer {
                return Err(Error::Sector(format!("{} uses the integer sector", kind.tag)));
            }
            expect_sector("z", &p.z, sector)?;
            expect_sector("w", &p.w, sector)?;
            let s = sum_pts(&p.z) + sum_pts(&p.w);
            expect_sum("sum(z + w)", s, 1.0)?;
        }
        IdentityTag::ReducedIGamma => {
            if n < 2 {
                return Err(Error::Config("REDUCED_I_GAMMA needs N ≥ 2".into()));
            }
            expect_len("z", p.z.len(), n)?;
            expect_len("w", p.w.len(), n + 1)?;
            if sector != MeasureSector::Integer {
                return Err(Error::Sector("REDUCED_I_GAMMA uses the integer sector".into()));
            }
            expect_sector("z", &p.z, sector)?;
            expect_sector("w", &p.w, sector)?;
        }
        IdentityTag::GustafsonII => {
            expect_len("z", p.z.len(), 2 * n + 2)?;
            expect_sector("z", &p.z, sector)?;
        }
        IdentityTag::ReducedII => {
            if n < 2 {
                return Err(Error::Config("REDUCED_II needs N ≥ 2".into()));
            }
            expect_len("z", p.z.len(), 2 * n + 2)?;
            expect_sector("z", &p.z, sector)?;
            expect_sum("sum(z)", sum_pts(&p.z), 1.0)?;
        }
        IdentityTag::ReducedIIGamma => {
            if n < 2 {
                return Err(Error::Config("REDUCED_II_GAMMA needs N ≥ 2".into()));
            }
            expect_len("z", p.z.len(), 2 * n + 1)?;
            expect_sector("z", &p.z, sector)?;
        }
        IdentityTag::ChainS | IdentityTag::ChainD => {
            expect_len("z", p.z.len(), 2)?;
            expect_len("alpha", p.alpha.len(), 2)?;
            for (i, a) in p.alpha.iter().enumerate() {
                a.disc_int()?;
                if a.sigma.re >= 1.0 {
                    return Err(Error::Constraint(format!("params.alpha[{i}]: Re<alpha> must be below 1")));
                }
            }
            if (p.alpha[0].sigma + p.alpha[1].sigma).re <= 1.0 {
                return Err(Error::Constraint("params.alpha: Re<alpha1 + alpha2> must exceed 1".into()));
            }
            check_propagator_parity(kind, p, sector)?;
        }
        IdentityTag::StarTriangleS | IdentityTag::StarTriangleD => {
            expect_len("z", p.z.len(), 3)?;
            expect_len("alpha", p.alpha.len(), 3)?;
            let s = p.alpha.iter().fold(Index::new(0, C::new(0.0, 0.0)), |a, b| a + *b);
            if s.twice_m != 0 || (s.sigma - 2.0).norm() > CONSTRAINT_TOL {
                return Err(Error::Constraint(format!(
                    "params.alpha: sum(alpha) = ([a] = {}, {}) must equal 2 on both sides",
                    s.discrete(),
                    s.sigma
                )));
            }
            if let Some(v) = kind.parity_variant {
                for i in 0..3 {
                    let m_odd = p.alpha[i].disc_int()?.rem_euclid(2) == 1;
                    if m_odd != v.alpha_odd()[i] {
                        return Err(Error::SectorMismatch(format!(
                            "params.alpha[{i}] parity does not match variant {}",
                            v.as_str()
                        )));
                    }
                    if is_odd(p.z[i].twice_n) != v.z_odd()[i] {
                        return Err(Error::SectorMismatch(format!(
                            "params.z[{i}] parity does not match variant {}",
                            v.as_str()
                        )));
                    }
                }
            }
            check_propagator_parity(kind, p, sector)?;
        }
        IdentityTag::DualQuantizedI => {
            expect_len("z", p.z.len(), n + p.m + 1)?;
            expect_len("w", p.w.len(), n + p.m + 1)?;
            expect_sector("z", &p.z, sector)?;
            expect_sector("w", &p.w, sector)?;
        }
        IdentityTag::DualQuantizedII => {
            expect_len("z", p.z.len(), 2 * (n + p.m + 1))?;
            expect_sector("z", &p.z, sector)?;
        }
    }
    Ok(())
}

fn check_propagator_parity(kind: &IdentityKind, p: &Params, sector: MeasureSector) -> Result<()> {
    let u = FieldPoint::on_contour(if sector_odd(sector) { 1 } else { 0 }, 0.37);
    match kind.tag {
        IdentityTag::ChainS => {
            s_prop_field(p.z[0] - u, p.alpha[0])?;
            s_prop_field(u - p.z[1], p.alpha[1])?;
        }
        IdentityTag::StarTriangleS => {
            for (a, x) in p.alpha.iter().zip(&p.z) {
                s_prop_field(*x - u, *a)?;
            }
        }
        IdentityTag::ChainD => {
            d_prop(p.z[0], u, p.alpha[0])?;
            d_prop(u, p.z[1], p.alpha[1])?;
        }
        IdentityTag::StarTriangleD => {
            for (a, x) in p.alpha.iter().zip(&p.z) {
                d_prop(*x, u, *a)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn gamma_index(a: Index) -> C {
    g(a.as_field_point())
}

fn one_index() -> Index {
    Index::real(0, 1.0)
}

// ---------------------------------------------------------------- Gustafson

fn gustafson_i_quadrature(z: &[FieldPoint], w: &[FieldPoint], n: usize, spec: &MeasureSpec) -> Result<ValueWithError> {
    let family = GammaFamily::TypeI {
        z: z.to_vec(),
        w: w.to_vec(),
        fold: n,
    };
    let weight = |u: FieldPoint| {
        let mut v = C::new(1.0, 0.0);
        for (a, b) in z.iter().zip(w) {
            v *= g(*a - u) * g(u + *b);
        }
        v
    };
    let v = fold_integral(weight, vandermonde_signed, n, spec, &family)?;
    Ok(v.scale(C::new(1.0 / factorial(n), 0.0)))
}

/// Moment method for the determinant strategy: the residue series when both
/// of its sums converge comfortably, quadrature moments otherwise.
fn moment_method(z: &[FieldPoint], w: &[FieldPoint]) -> MomentMethod {
    let s: C = z.iter().chain(w).map(|p| p.u()).sum();
    let sb: C = z.iter().chain(w).map(|p| p.ubar()).sum();
    if s.re < 0.9 && sb.re < 0.9 {
        MomentMethod::ResidueSeries
    } else {
        MomentMethod::Quadrature
    }
}

fn gustafson_i_determinant(z: &[FieldPoint], w: &[FieldPoint], n: usize, spec: &MeasureSpec) -> Result<(ValueWithError, MomentMethod)> {
    // the half-integer case maps to the integer one by shifting [z], [w]
    let (z, w): (Vec<FieldPoint>, Vec<FieldPoint>) = if spec.sector == MeasureSector::HalfInteger {
        (
            z.iter().map(|x| FieldPoint::new(x.twice_n - 1, x.nu)).collect(),
            w.iter().map(|x| FieldPoint::new(x.twice_n + 1, x.nu)).collect(),
        )
    } else {
        (z.to_vec(), w.to_vec())
    };
    let method = moment_method(&z, &w);
    let opts = MomentOptions {
        spec: spec.with_sector(MeasureSector::Integer),
        ..MomentOptions::default()
    };
    match det_q(&z, &w, n, method, &opts) {
        Ok(v) => Ok((v, method)),
        Err(Error::Truncation(_)) | Err(Error::Divergent(_)) if method == MomentMethod::ResidueSeries => {
            Ok((det_q(&z, &w, n, MomentMethod::Quadrature, &opts)?, MomentMethod::Quadrature))
        }
        Err(e) => Err(e),
    }
}

fn gustafson_i_rhs(z: &[FieldPoint], w: &[FieldPoint]) -> C {
    let mut v = C::new(1.0, 0.0);
    for a in z {
        for b in w {
            v *= g(*a + *b);
        }
    }
    v / g(sum_pts(z) + sum_pts(w))
}

fn gustafson_ii_quadrature(z: &[FieldPoint], n: usize, spec: &MeasureSpec) -> Result<ValueWithError> {
    let family = GammaFamily::TypeII { z: z.to_vec(), fold: n };
    let weight = |u: FieldPoint| {
        let mut v = u.norm_sq();
        for a in z {
            v *= g(*a + u) * g(*a - u);
        }
        v
    };
    let v = fold_integral(weight, vandermonde_pm, n, spec, &family)?;
    let pre = kappa(n, spec.sector) * 2f64.powi(n as i32) / factorial(n);
    Ok(v.scale(C::new(pre, 0.0)))
}

fn pair_product(z: &[FieldPoint]) -> C {
    let mut v = C::new(1.0, 0.0);
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            v *= g(z[i] + z[j]);
        }
    }
    v
}

fn gustafson_ii_rhs(z: &[FieldPoint]) -> C {
    pair_product(z) / g(sum_pts(z))
}

fn start_report(case: &IdentityCase) -> Result<(Instant, usize)> {
    check_constraints(&case.kind, &case.params)?;
    case.spec.validate()?;
    Ok((Instant::now(), lhs_fold(&case.kind, &case.params)))
}

fn finish(
    case: &IdentityCase,
    start: Instant,
    lhs: ValueWithError,
    rhs: ValueWithError,
    alternates: Vec<(String, ValueWithError)>,
    mut flags: Vec<String>,
) -> VerificationReport {
    let mut res = residual(lhs.value, rhs.value);
    for (_, alt) in &alternates {
        res = res.max(residual(alt.value, rhs.value)).max(residual(lhs.value, alt.value));
    }
    let scale = rhs.value.norm().max(1e-10);
    let mut notes = vec![];
    if lhs.total_error() > case.tolerance * scale {
        notes.push(format!("lhs error estimate {:.3e} exceeds tolerance", lhs.total_error() / scale));
    }
    if !res.is_finite() {
        flags.push("non-finite residual".into());
    }
    VerificationReport {
        lhs,
        rhs,
        residual: res,
        passed: res <= case.tolerance && flags.is_empty(),
        case_digest: case.digest(),
        wall_time: start.elapsed().as_secs_f64(),
        alternates,
        flags,
        notes,
    }
}

/// Both Gustafson integrals by quadrature, moment determinants, or both.
pub fn eval_gustafson(case: &IdentityCase) -> Result<VerificationReport> {
    let (start, _) = start_report(case)?;
    let IdentityCase { kind, params, spec, .. } = case;
    let n = kind.n;
    let (quad, det, rhs) = match kind.tag {
        IdentityTag::GustafsonI => {
            let quad = || gustafson_i_quadrature(&params.z, &params.w, n, spec);
            let det = || gustafson_i_determinant(&params.z, &params.w, n, spec).map(|(v, _)| v);
            let (q, d) = run_strategy(case.strategy, n, quad, det)?;
            (q, d, gustafson_i_rhs(&params.z, &params.w))
        }
        IdentityTag::GustafsonII => {
            let quad = || gustafson_ii_quadrature(&params.z, n, spec);
            let det = || det_q_tilde(&params.z, n, spec.sector, &spec.with_sector(spec.sector).coarse_if(n > 3));
            let (q, d) = run_strategy(case.strategy, n, quad, det)?;
            (q, d, gustafson_ii_rhs(&params.z))
        }
        _ => return Err(Error::Config(format!("{} is not a Gustafson identity", kind.tag))),
    };
    let rhs = ValueWithError::exact(rhs);
    let (lhs, alternates) = match (quad, det) {
        (Some(q), Some(d)) => (q, vec![("determinant".to_string(), d)]),
        (Some(q), None) => (q, vec![]),
        (None, Some(d)) => (d, vec![]),
        (None, None) => unreachable!(),
    };
    Ok(finish(case, start, lhs, rhs, alternates, vec![]))
}

trait CoarseIf {
    fn coarse_if(self, c: bool) -> Self;
}

impl CoarseIf for MeasureSpec {
    fn coarse_if(self, c: bool) -> Self {
        if c {
            MeasureSpec::coarse().with_sector(self.sector)
        } else {
            self
        }
    }
}

type Pair = (Option<ValueWithError>, Option<ValueWithError>);

fn run_strategy<Q, D>(strategy: Strategy, n: usize, quad: Q, det: D) -> Result<Pair>
where
    Q: FnOnce() -> Result<ValueWithError>,
    D: FnOnce() -> Result<ValueWithError>,
{
    let want_quad = matches!(strategy, Strategy::Quadrature | Strategy::Both);
    let want_det = matches!(strategy, Strategy::Determinant | Strategy::Both);
    if want_quad && n > 2 {
        return Err(Error::Config(format!("quadrature strategy supports N ≤ 2, got {n}")));
    }
    if want_det && n > 3 {
        return Err(Error::Config(format!("determinant strategy supports N ≤ 3, got {n}")));
    }
    let q = if want_quad { Some(quad()?) } else { None };
    let d = if want_det { Some(det()?) } else { None };
    Ok((q, d))
}

// ------------------------------------------------------------------ reduced

fn reduced_lhs(kind: &IdentityKind, p: &Params, spec: &MeasureSpec) -> Result<ValueWithError> {
    let fold = kind.n - 1;
    if fold > 2 {
        return Err(Error::Config(format!("reduced integrals are evaluated for N ≤ 3, got {}", kind.n)));
    }
    let family = lhs_family(kind, p)?;
    match kind.tag {
        IdentityTag::ReducedI => {
            let weight = |u: FieldPoint| {
                let mut v = C::new(sign_pow(u.twice_n / 2), 0.0);
                for (a, b) in p.z.iter().zip(&p.w) {
                    v *= g(*a - u) * g(u + *b);
                }
                v
            };
            Ok(fold_integral(weight, vandermonde_signed, fold, spec, &family)?.scale(C::new(1.0 / factorial(fold), 0.0)))
        }
        IdentityTag::ReducedIGamma => {
            let gamma = sum_pts(&p.z) + sum_pts(&p.w);
            let weight = |u: FieldPoint| {
                let mut v = C::new(1.0, 0.0) / g(gamma + u);
                for a in &p.z {
                    v *= g(*a - u);
                }
                for b in &p.w {
                    v *= g(u + *b);
                }
                v
            };
            Ok(fold_integral(weight, vandermonde_signed, fold, spec, &family)?.scale(C::new(1.0 / factorial(fold), 0.0)))
        }
        IdentityTag::ReducedII | IdentityTag::ReducedIIGamma => {
            let gamma = sum_pts(&p.z);
            let with_gamma = kind.tag == IdentityTag::ReducedIIGamma;
            let weight = |u: FieldPoint| {
                let mut v = u.norm_sq();
                for a in &p.z {
                    v *= g(*a + u) * g(*a - u);
                }
                if with_gamma {
                    v /= g(gamma + u) * g(gamma - u);
                }
                v
            };
            // 1/(2^{N−1}(N−1)!) times the simplified denominators κ 4^{N−1}
            let pre = kappa(fold, spec.sector) * 2f64.powi(fold as i32) / factorial(fold);
            Ok(fold_integral(weight, vandermonde_pm, fold, spec, &family)?.scale(C::new(pre, 0.0)))
        }
        _ => Err(Error::Config(format!("{} is not a reduced integral", kind.tag))),
    }
}

fn reduced_rhs(kind: &IdentityKind, p: &Params, sector: MeasureSector) -> C {
    match kind.tag {
        IdentityTag::ReducedI => {
            let disc: i64 = p.z.iter().map(|x| x.twice_n / 2).sum();
            let mut v = C::new(sign_pow(disc), 0.0);
            for a in &p.z {
                for b in &p.w {
                    v *= g(*a + *b);
                }
            }
            v
        }
        IdentityTag::ReducedIGamma => {
            let gamma = sum_pts(&p.z) + sum_pts(&p.w);
            let mut v = C::new(1.0, 0.0);
            for a in &p.z {
                for b in &p.w {
                    v *= g(*a + *b);
                }
            }
            for b in &p.w {
                v /= g(gamma - *b);
            }
            v
        }
        IdentityTag::ReducedII => pair_product(&p.z) * if sector_odd(sector) { -1.0 } else { 1.0 },
        IdentityTag::ReducedIIGamma => {
            let gamma = sum_pts(&p.z);
            let mut v = pair_product(&p.z);
            for a in &p.z {
                v /= g(gamma - *a);
            }
            v
        }
        _ => C::new(f64::NAN, 0.0),
    }
}

/// The four reduced integrals against their closed forms.
pub fn eval_reduced(case: &IdentityCase) -> Result<VerificationReport> {
    let (start, _) = start_report(case)?;
    let lhs = reduced_lhs(&case.kind, &case.params, &case.spec)?;
    let rhs = ValueWithError::exact(reduced_rhs(&case.kind, &case.params, case.spec.sector));
    Ok(finish(case, start, lhs, rhs, vec![], vec![]))
}

// ------------------------------------------------------- chains and stars

fn propagator_lhs(kind: &IdentityKind, p: &Params, spec: &MeasureSpec) -> Result<ValueWithError> {
    let family = lhs_family(kind, p)?;
    let decay = family.decay();
    let nan = C::new(f64::NAN, 0.0);
    let s = |x: FieldPoint, a: Index| s_prop_field(x, a).map(|v| v.value).unwrap_or(nan);
    let d = |x: FieldPoint, y: FieldPoint, a: Index| d_prop(x, y, a).map(|v| v.value).unwrap_or(nan);
    match kind.tag {
        IdentityTag::ChainS => integrate_du(|u| s(p.z[0] - u, p.alpha[0]) * s(u - p.z[1], p.alpha[1]), spec, decay),
        IdentityTag::StarTriangleS => integrate_du(
            |u| (0..3).map(|k| s(p.z[k] - u, p.alpha[k])).product(),
            spec,
            decay,
        ),
        IdentityTag::ChainD => integrate_du(
            |u| u.norm_sq() * 2.0 * d(p.z[0], u, p.alpha[0]) * d(u, p.z[1], p.alpha[1]),
            spec,
            decay,
        ),
        IdentityTag::StarTriangleD => integrate_du(
            |u| u.norm_sq() * 2.0 * (0..3).map(|k| d(p.z[k], u, p.alpha[k])).product::<C>(),
            spec,
            decay,
        ),
        _ => Err(Error::Config(format!("{} is not a propagator identity", kind.tag))),
    }
}

fn propagator_rhs(kind: &IdentityKind, p: &Params, sector: MeasureSector) -> Result<C> {
    let a = &p.alpha;
    let z = &p.z;
    let gam: C = a.iter().map(|x| gamma_index(x.complement())).product();
    Ok(match kind.tag {
        IdentityTag::ChainS | IdentityTag::ChainD => {
            let s = a[0] + a[1] - one_index();
            let ratio = gam / gamma_index(s.complement());
            if kind.tag == IdentityTag::ChainS {
                ratio * s_prop_field(z[0] - z[1], s)?.get()?
            } else {
                ratio * kappa(1, sector) * d_prop(z[0], z[1], s)?.get()?
            }
        }
        IdentityTag::StarTriangleS => {
            gam * s_prop_field(z[1] - z[2], a[0].complement())?.get()?
                * s_prop_field(z[2] - z[0], a[1].complement())?.get()?
                * s_prop_field(z[0] - z[1], a[2].complement())?.get()?
        }
        IdentityTag::StarTriangleD => {
            gam * d_prop(z[1], z[2], a[0].complement())?.get()?
                * d_prop(z[0], z[2], a[1].complement())?.get()?
                * d_prop(z[0], z[1], a[2].complement())?.get()?
        }
        _ => return Err(Error::Config(format!("{} is not a propagator identity", kind.tag))),
    })
}

/// Reality and sign of the D propagators in the all-even-α variants with
/// real 0 < α = ᾱ < 1: D > 0 for even, −D > 0 for odd arguments. Returns
/// the list of violations (empty when the property holds or is inapplicable).
pub fn star_d_sign_violations(kind: &IdentityKind, p: &Params) -> Vec<String> {
    let odd = match kind.parity_variant {
        Some(ParityVariant::V1A) => false,
        Some(ParityVariant::V1B) => true,
        _ => return vec![],
    };
    let real_alpha = |a: &Index| a.twice_m == 0 && a.sigma.im == 0.0 && a.sigma.re > 0.0 && a.sigma.re < 1.0;
    let on_axis = |x: &FieldPoint| x.nu.re == 0.0;
    if !p.alpha.iter().all(real_alpha) || !p.z.iter().all(on_axis) {
        return vec![];
    }
    let sign = if odd { -1.0 } else { 1.0 };
    let mut out = Vec::new();
    let pairs = [(1usize, 2usize, 0usize), (0, 2, 1), (0, 1, 2)];
    for (i, j, k) in pairs {
        for (label, idx) in [("alpha", p.alpha[k]), ("1-alpha", p.alpha[k].complement())] {
            if let Ok(v) = d_prop(p.z[i], p.z[j], idx).and_then(|v| v.get()) {
                let s = v * sign;
                if !(s.re > 0.0) || s.im.abs() > 1e-12 * s.re {
                    out.push(format!("D_{label}{k}(z{i}, z{j}) = {v} violates the sign rule"));
                }
            }
        }
    }
    out
}

/// Chain and star-triangle relations for the S and D propagators.
pub fn eval_star_triangle(case: &IdentityCase) -> Result<VerificationReport> {
    let (start, _) = start_report(case)?;
    let sector = measure_sector(&case.kind);
    let spec = case.spec.with_sector(sector);
    let lhs = propagator_lhs(&case.kind, &case.params, &spec)?;
    let rhs = ValueWithError::exact(propagator_rhs(&case.kind, &case.params, sector)?);
    let mut flags = star_d_sign_violations(&case.kind, &case.params);
    if case.kind.tag == IdentityTag::StarTriangleD && matches!(case.kind.parity_variant, Some(ParityVariant::V1A | ParityVariant::V1B)) {
        let sign = if case.kind.parity_variant == Some(ParityVariant::V1B) { -1.0 } else { 1.0 };
        let real_case = case.params.alpha.iter().all(|a| a.twice_m == 0 && a.sigma.im == 0.0) && case.params.z.iter().all(|x| x.nu.re == 0.0);
        // the triple product of odd D's is negative, that of even D's positive
        if real_case && !(rhs.value.re * sign > 0.0) {
            flags.push(format!("rhs {} has the wrong sign", rhs.value));
        }
    }
    Ok(finish(case, start, lhs, rhs, vec![], flags))
}

// --------------------------------------------------------- dual relations

fn dual_i_side(z: &[FieldPoint], w: &[FieldPoint], fold: usize, spec: &MeasureSpec) -> Result<ValueWithError> {
    let family = GammaFamily::TypeI {
        z: z.to_vec(),
        w: w.to_vec(),
        fold: fold.max(1),
    };
    let k = z.len() as i64;
    // in the half-integer sector the sign runs over [u] − 1/2
    let weight = |u: FieldPoint| {
        let mut v = C::new(sign_pow(k * u.twice_n.div_euclid(2)), 0.0);
        for (a, b) in z.iter().zip(w) {
            v *= g(*a - u) * g(u + *b);
        }
        v
    };
    Ok(fold_integral(weight, vandermonde, fold, spec, &family)?.scale(C::new(1.0 / factorial(fold), 0.0)))
}

fn dual_ii_side(z: &[FieldPoint], fold: usize, spec: &MeasureSpec) -> Result<ValueWithError> {
    let family = GammaFamily::TypeII {
        z: z.to_vec(),
        fold: fold.max(1),
    };
    let weight = |u: FieldPoint| {
        let mut v = u.norm_sq();
        for a in z {
            v *= g(*a + u) * g(*a - u);
        }
        v
    };
    let pre = 2f64.powi(fold as i32) / factorial(fold);
    Ok(fold_integral(weight, vandermonde_pm, fold, spec, &family)?.scale(C::new(pre, 0.0)))
}

fn spec_for_fold(spec: &MeasureSpec, fold: usize) -> MeasureSpec {
    if fold >= 2 && spec.total_nodes() > MeasureSpec::coarse().total_nodes() {
        MeasureSpec::coarse().with_sector(spec.sector)
    } else {
        *spec
    }
}

/// The quantized duality between n-fold and m-fold integrals.
pub fn eval_dual_quantized(case: &IdentityCase) -> Result<VerificationReport> {
    let (start, _) = start_report(case)?;
    let IdentityCase { kind, params: p, spec, .. } = case;
    let (n, m) = (kind.n, p.m);
    let spec_n = spec_for_fold(spec, n);
    let spec_m = spec_for_fold(spec, m);
    let (lhs, rhs) = match kind.tag {
        IdentityTag::DualQuantizedI => {
            let lhs = dual_i_side(&p.z, &p.w, n, &spec_n)?;
            let zp: Vec<FieldPoint> = p.w.iter().map(|b| half_pt() - *b).collect();
            let wp: Vec<FieldPoint> = p.z.iter().map(|a| half_pt() - *a).collect();
            let side = dual_i_side(&zp, &wp, m, &spec_m)?;
            let total = sum_pts(&p.z) + sum_pts(&p.w);
            let mut pre = C::new(1.0, 0.0);
            for a in &p.z {
                for b in &p.w {
                    pre *= g(*a + *b);
                }
            }
            pre /= g(total - FieldPoint::scalar(m as f64));
            let shift = if sector_odd(spec.sector) { 1 } else { 0 };
            let disc: i64 = p.z.iter().zip(&p.w).map(|(a, b)| (a.twice_n - b.twice_n) / 2 - shift).sum();
            pre *= sign_pow(m as i64 * disc);
            (lhs, side.scale(pre))
        }
        IdentityTag::DualQuantizedII => {
            let lhs = dual_ii_side(&p.z, n, &spec_n)?;
            let zp: Vec<FieldPoint> = p.z.iter().map(|a| half_pt() - *a).collect();
            let side = dual_ii_side(&zp, m, &spec_m)?;
            let pre = pair_product(&p.z) / g(sum_pts(&p.z) - FieldPoint::scalar(m as f64)) * kappa(n + m, spec.sector);
            (lhs, side.scale(pre))
        }
        _ => return Err(Error::Config(format!("{} is not a quantized duality", kind.tag))),
    };
    Ok(finish(case, start, lhs, rhs, vec![], vec![]))
}

// ------------------------------------------------------------- ζ-pole limit

/// Default approach sequence ε for ζ = 1 − ε.
pub const ZETA_EPS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaPoleReport {
    pub eps: Vec<f64>,
    pub zeta: Vec<f64>,
    /// I_N^(1) at each ζ.
    pub integrals: Vec<ValueWithError>,
    /// (1 − ζ)·Q_NN at each ζ.
    pub scaled_q: Vec<C>,
    /// Extrapolated residue of (1 − ζ)·I and the product it should equal.
    pub residue: C,
    pub residue_error: f64,
    pub product: C,
    pub residue_residual: f64,
    /// Limit of (1 − ζ)·Q_NN against (−1)^{Σ[z]}.
    pub q_limit: C,
    pub q_sign: f64,
    pub q_residual: f64,
    /// Fraction of the variance of I explained by the pole model.
    pub r_squared: f64,
}

/// Least-squares polynomial in ε; returns coefficients, lowest first.
fn poly_fit(eps: &[f64], y: &[C], degree: usize) -> Result<Vec<C>> {
    let rows = eps.len();
    let cols = degree + 1;
    if rows < cols {
        return Err(Error::Fit(format!("{rows} points cannot fix {cols} coefficients")));
    }
    let a = DMatrix::from_fn(rows, cols, |i, j| eps[i].powi(j as i32));
    let svd = a.svd(true, true);
    let solve = |b: DVector<f64>| -> Result<DVector<f64>> { svd.solve(&b, 1e-14).map_err(|e| Error::Fit(e.to_string())) };
    let re = solve(DVector::from_iterator(rows, y.iter().map(|v| v.re)))?;
    let im = solve(DVector::from_iterator(rows, y.iter().map(|v| v.im)))?;
    Ok((0..cols).map(|j| C::new(re[j], im[j])).collect())
}

fn eval_poly(c: &[C], x: f64) -> C {
    c.iter().rev().fold(C::new(0.0, 0.0), |acc, v| acc * x + *v)
}

/// Approaches the constraint surface Σ(z+w) = 1 from ζ = 1 − ε by lowering
/// the continuous part of the last w, fits (1 − ζ)·I_N^(1) = r₀ + r₁ε + r₂ε²,
/// and compares r₀ with ∏**Γ**(z_k + w_j). Also tracks (1 − ζ)·Q_NN.
pub fn zeta_pole_check(case: &IdentityCase, eps: &[f64]) -> Result<ZetaPoleReport> {
    let kind = IdentityKind {
        tag: IdentityTag::ZetaPole,
        ..case.kind
    };
    check_constraints(&kind, &case.params)?;
    if eps.len() < 3 || eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::Config("ε sequence needs at least 3 values in (0, 1)".into()));
    }
    let n = kind.n;
    let p = &case.params;
    let spec = case.spec.with_sector(MeasureSector::Integer);
    let opts = MomentOptions {
        spec,
        ..MomentOptions::default()
    };
    let mut integrals = Vec::new();
    let mut scaled_i = Vec::new();
    let mut scaled_q = Vec::new();
    for &e in eps {
        let mut w = p.w.clone();
        let last = w.len() - 1;
        w[last] = w[last].shift(C::new(-e, 0.0));
        let mm = moment_matrix(&p.z, &w, n, MomentMethod::Quadrature, &opts)?;
        let det = mm.determinant();
        scaled_i.push(det.value * e);
        scaled_q.push(mm.entries[n - 1][n - 1] * e);
        integrals.push(det);
    }
    // quadratic pole model for the variance test; the residue itself comes
    // from the full-degree fit, with the quadratic spread as its error
    let coef = poly_fit(eps, &scaled_i, 2)?;
    let full = poly_fit(eps, &scaled_i, eps.len() - 1)?;
    let residue = full[0];
    let residue_error = (coef[0] - residue).norm();
    let mean: C = integrals.iter().map(|v| v.value).sum::<C>() / eps.len() as f64;
    let ss_tot: f64 = integrals.iter().map(|v| (v.value - mean).norm_sqr()).sum();
    let ss_res: f64 = integrals
        .iter()
        .zip(eps)
        .map(|(v, &e)| (v.value - eval_poly(&coef, e) / e).norm_sqr())
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    if r_squared < 0.99 {
        return Err(Error::Fit(format!("pole model explains only {:.2}% of the variance", 100.0 * r_squared)));
    }
    let qcoef = poly_fit(eps, &scaled_q, eps.len() - 1)?;
    let disc: i64 = p.z.iter().map(|x| x.twice_n / 2).sum();
    let q_sign = sign_pow(disc);
    let mut product = C::new(1.0, 0.0);
    for a in &p.z {
        for b in &p.w {
            product *= g(*a + *b);
        }
    }
    Ok(ZetaPoleReport {
        eps: eps.to_vec(),
        zeta: eps.iter().map(|e| 1.0 - e).collect(),
        integrals,
        scaled_q,
        residue,
        residue_error,
        product,
        residue_residual: residual(residue, product),
        q_limit: qcoef[0],
        q_sign,
        q_residual: (qcoef[0] - q_sign).norm(),
        r_squared,
    })
}

fn eval_zeta(case: &IdentityCase) -> Result<VerificationReport> {
    let start = Instant::now();
    let z = zeta_pole_check(case, &ZETA_EPS)?;
    let lhs = ValueWithError {
        value: z.residue,
        tail_bound: z.residue_error,
        quad_error: 0.0,
    };
    let mut flags = vec![];
    if z.q_residual > 1e-2 {
        flags.push(format!("(1 - zeta) Q_NN limit {} misses {}", z.q_limit, z.q_sign));
    }
    let mut r = finish(case, start, lhs, ValueWithError::exact(z.product), vec![], flags);
    r.alternates.push(("q_limit".into(), ValueWithError::exact(z.q_limit)));
    // the alternate is compared with the sign, not the product
    r.residual = z.residue_residual;
    r.passed = r.residual <= case.tolerance && r.flags.is_empty();
    Ok(r)
}

/// Runs the evaluator matching the case's tag.
pub fn verify(case: &IdentityCase) -> Result<VerificationReport> {
    // a negative margin means poles sit on the wrong side of the contour and
    // the quadrature would converge to a different function
    case_contour_margin(&case.kind, &case.params)?;
    match case.kind.tag {
        IdentityTag::GustafsonI | IdentityTag::GustafsonII => eval_gustafson(case),
        IdentityTag::ReducedI | IdentityTag::ReducedIGamma | IdentityTag::ReducedII | IdentityTag::ReducedIIGamma => {
            eval_reduced(case)
        }
        IdentityTag::ChainS | IdentityTag::StarTriangleS | IdentityTag::ChainD | IdentityTag::StarTriangleD => {
            eval_star_triangle(case)
        }
        IdentityTag::DualQuantizedI | IdentityTag::DualQuantizedII => eval_dual_quantized(case),
        IdentityTag::ZetaPole => eval_zeta(case),
    }
}

/// The lhs integral alone (no closed form), for limit studies.
pub fn lhs_value(case: &IdentityCase) -> Result<ValueWithError> {
    check_constraints(&case.kind, &case.params)?;
    match case.kind.tag {
        IdentityTag::ChainS | IdentityTag::StarTriangleS | IdentityTag::ChainD | IdentityTag::StarTriangleD => {
            let spec = case.spec.with_sector(measure_sector(&case.kind));
            propagator_lhs(&case.kind, &case.params, &spec)
        }
        _ => Ok(verify(case)?.lhs),
    }
}

/// The closed-form side of a propagator identity.
pub fn propagator_closed_form(case: &IdentityCase) -> Result<C> {
    check_constraints(&case.kind, &case.params)?;
    propagator_rhs(&case.kind, &case.params, measure_sector(&case.kind))
}

/// Convergence margin of the case's lhs integrand.
pub fn case_decay_exponent(kind: &IdentityKind, params: &Params) -> Result<f64> {
    Ok(mb::decay_exponent(&lhs_family(kind, params)?))
}

/// Contour margin of the case's lhs integrand over the default spec.
pub fn case_contour_margin(kind: &IdentityKind, params: &Params) -> Result<f64> {
    let spec = MeasureSpec::default().with_sector(measure_sector(kind));
    // 1/Γ(γ + u) = ±Γ(1 − γ − u) has poles too, so 1 − γ stays in the family
    let family = lhs_family(kind, params)?;
    let mut margin = mb::contour_margin(&family, &spec)?;
    // the dual side runs over the primed parameters
    if matches!(kind.tag, IdentityTag::DualQuantizedI | IdentityTag::DualQuantizedII) && params.m > 0 {
        let primed = match kind.tag {
            IdentityTag::DualQuantizedI => GammaFamily::TypeI {
                z: params.w.iter().map(|b| half_pt() - *b).collect(),
                w: params.z.iter().map(|a| half_pt() - *a).collect(),
                fold: params.m,
            },
            _ => GammaFamily::TypeII {
                z: params.z.iter().map(|a| half_pt() - *a).collect(),
                fold: params.m,
            },
        };
        margin = margin.min(mb::contour_margin(&primed, &spec)?);
    }
    Ok(margin)
}

fn dual_decay_exponent(kind: &IdentityKind, params: &Params) -> Result<f64> {
    let mut d = case_decay_exponent(kind, params)?;
    if params.m > 0 {
        let primed = match kind.tag {
            IdentityTag::DualQuantizedI => GammaFamily::TypeI {
                z: params.w.iter().map(|b| half_pt() - *b).collect(),
                w: params.z.iter().map(|a| half_pt() - *a).collect(),
                fold: params.m,
            },
            _ => GammaFamily::TypeII {
                z: params.z.iter().map(|a| half_pt() - *a).collect(),
                fold: params.m,
            },
        };
        d = d.min(mb::decay_exponent(&primed));
    }
    Ok(d)
}

// ----------------------------------------------------------------- sampling

struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(kind: &IdentityKind, seed: u64) -> Self {
        let tag = IdentityTag::ALL.iter().position(|t| *t == kind.tag).unwrap() as u64;
        let variant = kind.parity_variant.map(|v| v as u64 + 1).unwrap_or(0);
        let mix = seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(tag << 40)
            .wrapping_add((kind.n as u64) << 32)
            .wrapping_add(variant << 28)
            .wrapping_add(sector_odd(kind.sector) as u64);
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(mix),
        }
    }

    /// twice_n with |twice_n| ≤ 6 and the requested parity.
    fn twice(&mut self, odd: bool) -> i64 {
        loop {
            let t = self.rng.gen_range(-SAMPLE_TWICE_MAX..=SAMPLE_TWICE_MAX);
            if is_odd(t) == odd {
                return t;
            }
        }
    }

    fn cont(&mut self, lo: f64, hi: f64, im: f64) -> C {
        C::new(self.rng.gen_range(lo..hi), if im > 0.0 { self.rng.gen_range(-im..im) } else { 0.0 })
    }

    fn point(&mut self, odd: bool, lo: f64, hi: f64) -> FieldPoint {
        let t = self.twice(odd);
        FieldPoint::new(t, self.cont(lo, hi, 0.25))
    }

    fn points(&mut self, k: usize, odd: bool, lo: f64, hi: f64) -> Vec<FieldPoint> {
        (0..k).map(|_| self.point(odd, lo, hi)).collect()
    }

    /// External point for a propagator identity: imaginary continuous part.
    fn external(&mut self, odd: bool) -> FieldPoint {
        let t = self.twice(odd);
        FieldPoint::new(t, C::new(0.0, self.rng.gen_range(-1.0..1.0)))
    }

    fn index_any(&mut self, lo: f64, hi: f64, complex: bool) -> Index {
        let odd = self.rng.gen_bool(0.5);
        self.index(odd, lo, hi, complex)
    }

    /// Index with [α] of the requested parity and σ drawn from the range.
    fn index(&mut self, m_odd: bool, lo: f64, hi: f64, complex: bool) -> Index {
        let m = loop {
            let m = self.rng.gen_range(-3i64..=3);
            if (m.rem_euclid(2) == 1) == m_odd {
                break m;
            }
        };
        Index::new(2 * m, self.cont(lo, hi, if complex { 0.15 } else { 0.0 }))
    }
}

/// Deterministic parameters on the constraint surface of `kind`, with
/// convergence margin ≥ 0.1 and contour margin ≥ 0.05. The quantized
/// dualities use m = 1.
pub fn sample_params(kind: &IdentityKind, seed: u64) -> Result<Params> {
    sample_params_with_m(kind, 1, seed)
}

/// As [`sample_params`] with an explicit dual fold m.
pub fn sample_params_with_m(kind: &IdentityKind, m: usize, seed: u64) -> Result<Params> {
    kind.validate()?;
    let mut s = Sampler::new(kind, seed);
    let mut last = None;
    for _ in 0..2000 {
        let p = draw(kind, m, &mut s)?;
        if check_constraints(kind, &p).is_err() {
            continue;
        }
        let in_range = |x: &FieldPoint| x.twice_n.abs() <= SAMPLE_TWICE_MAX;
        if !p.z.iter().chain(&p.w).all(in_range) {
            continue;
        }
        let decay = if matches!(kind.tag, IdentityTag::DualQuantizedI | IdentityTag::DualQuantizedII) {
            dual_decay_exponent(kind, &p)?
        } else {
            case_decay_exponent(kind, &p)?
        };
        let margin = case_contour_margin(kind, &p).unwrap_or(0.0);
        if decay >= SAMPLE_DECAY_MARGIN && margin >= SAMPLE_CONTOUR_MARGIN {
            return Ok(p);
        }
        last = Some(p);
    }
    last.ok_or_else(|| Error::Config(format!("could not sample {}", kind.tag)))
}

fn draw(kind: &IdentityKind, m: usize, s: &mut Sampler) -> Result<Params> {
    let n = kind.n;
    let odd = sector_odd(measure_sector(kind));
    let mut p = Params::default();
    match kind.tag {
        IdentityTag::GustafsonI => {
            let hi = 0.9 / (2 * n + 2) as f64;
            p.z = s.points(n + 1, odd, 0.06, hi);
            p.w = s.points(n + 1, odd, 0.06, hi);
        }
        IdentityTag::GustafsonII => {
            let hi = 0.9 / (2 * n + 2) as f64;
            p.z = s.points(2 * n + 2, odd, 0.06, hi);
        }
        IdentityTag::ReducedI | IdentityTag::ZetaPole => {
            let k = 2 * n + 1;
            let hi = if kind.tag == IdentityTag::ZetaPole { 0.5 / k as f64 } else { 0.9 / k as f64 };
            p.z = s.points(n + 1, false, 0.06, hi);
            p.w = s.points(n, false, 0.06, hi);
            let rest = sum_pts(&p.z) + sum_pts(&p.w);
            p.w.push(one() - rest);
        }
        IdentityTag::ReducedIGamma => {
            p.z = s.points(n, false, 0.06, 0.9 / (2 * n + 1) as f64);
            p.w = s.points(n + 1, false, 0.06, 0.9 / (2 * n + 1) as f64);
        }
        IdentityTag::ReducedII => {
            let k = 2 * n + 1;
            p.z = s.points(k, odd, 0.06, 0.9 / k as f64);
            let rest = sum_pts(&p.z);
            p.z.push(one() - rest);
        }
        IdentityTag::ReducedIIGamma => {
            p.z = s.points(2 * n + 1, odd, 0.06, 0.9 / (2 * n + 1) as f64);
        }
        IdentityTag::ChainS | IdentityTag::ChainD => {
            let a1 = s.index_any( 0.58, 0.88, true);
            let a2 = s.index_any( 0.58, 0.88, true);
            p.alpha = vec![a1, a2];
            // parity of z follows from the index and the sector of u
            let za = (a1.twice_m / 2).rem_euclid(2) == 1;
            let wa = (a2.twice_m / 2).rem_euclid(2) == 1;
            p.z = vec![s.external(za != odd), s.external(wa != odd)];
        }
        IdentityTag::StarTriangleS => {
            let a1 = s.index_any( 0.3, 0.85, true);
            let a2 = s.index_any( 0.3, 0.85, true);
            let a3 = Index::real(0, 2.0) - a1 - a2;
            p.alpha = vec![a1, a2, a3];
            p.z = p
                .alpha
                .iter()
                .map(|a| (a.twice_m / 2).rem_euclid(2) == 1)
                .collect::<Vec<_>>()
                .into_iter()
                .map(|ao| s.external(ao != odd))
                .collect();
        }
        IdentityTag::StarTriangleD => {
            let v = kind.parity_variant.expect("validated");
            let ao = v.alpha_odd();
            let real = matches!(v, ParityVariant::V1A | ParityVariant::V1B);
            let (a1, a2) = if real {
                (
                    Index::new(0, s.cont(0.3, 0.85, 0.0)),
                    Index::new(0, s.cont(0.3, 0.85, 0.0)),
                )
            } else {
                (s.index(ao[0], 0.3, 0.85, true), s.index(ao[1], 0.3, 0.85, true))
            };
            let a3 = Index::real(0, 2.0) - a1 - a2;
            p.alpha = vec![a1, a2, a3];
            p.z = v.z_odd().iter().map(|&zo| s.external(zo)).collect();
        }
        IdentityTag::DualQuantizedI => {
            let k = n + m + 1;
            p.m = m;
            p.z = s.points(k, odd, 0.06, 0.44);
            p.w = s.points(k, odd, 0.06, 0.44);
        }
        IdentityTag::DualQuantizedII => {
            let k = 2 * (n + m + 1);
            p.m = m;
            p.z = s.points(k, odd, 0.06, 0.44);
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(kind: IdentityKind, seed: u64, strategy: Strategy) -> VerificationReport {
        let case = IdentityCase::sampled(kind, seed, strategy).unwrap();
        verify(&case).unwrap()
    }

    #[test]
    fn tags_round_trip() {
        for t in IdentityTag::ALL {
            assert_eq!(t.as_str().parse::<IdentityTag>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.as_str()));
        }
        assert!("NOPE".parse::<IdentityTag>().is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_constrained() {
        let kind = IdentityKind::new(IdentityTag::ChainS, 1, MeasureSector::Integer);
        let a = sample_params(&kind, 1).unwrap();
        assert_eq!(a, sample_params(&kind, 1).unwrap());
        assert!(check_constraints(&kind, &a).is_ok());
        for tag in IdentityTag::ALL {
            let kind = match tag {
                IdentityTag::StarTriangleD => IdentityKind::star_d(ParityVariant::V2B),
                _ => IdentityKind::new(tag, 2, MeasureSector::Integer),
            };
            let p = sample_params(&kind, 3).unwrap();
            check_constraints(&kind, &p).unwrap();
        }
    }

    #[test]
    fn v2a_parities() {
        let kind = IdentityKind::star_d(ParityVariant::V2A);
        let p = sample_params(&kind, 7).unwrap();
        assert_eq!(measure_sector(&kind), MeasureSector::Integer);
        assert!(!is_odd(p.z[0].twice_n));
        assert!(is_odd(p.z[1].twice_n) && is_odd(p.z[2].twice_n));
        let m: Vec<i64> = p.alpha.iter().map(|a| (a.twice_m / 2).rem_euclid(2)).collect();
        assert_eq!(m, vec![0, 1, 1]);
    }

    #[test]
    fn gustafson_i_n1() {
        let r = run(IdentityKind::new(IdentityTag::GustafsonI, 1, MeasureSector::Integer), 11, Strategy::Quadrature);
        assert!(r.residual < 1e-7, "{r:?}");
        let r = run(IdentityKind::new(IdentityTag::GustafsonI, 1, MeasureSector::Integer), 11, Strategy::Determinant);
        assert!(r.residual < 1e-7, "{r:?}");
    }

    #[test]
    fn gustafson_ii_n1_half_sector() {
        let r = run(IdentityKind::new(IdentityTag::GustafsonII, 1, MeasureSector::HalfInteger), 5, Strategy::Quadrature);
        assert!(r.residual < 1e-6, "{r:?}");
    }

    #[test]
    fn gustafson_i_half_sector_matches_shifted_integer_case() {
        let kind = IdentityKind::new(IdentityTag::GustafsonI, 1, MeasureSector::Integer);
        let p = sample_params(&kind, 4).unwrap();
        let shifted = Params {
            z: p.z.iter().map(|x| FieldPoint::new(x.twice_n + 1, x.nu)).collect(),
            w: p.w.iter().map(|x| FieldPoint::new(x.twice_n - 1, x.nu)).collect(),
            ..p.clone()
        };
        let half = IdentityKind::new(IdentityTag::GustafsonI, 1, MeasureSector::HalfInteger);
        let a = verify(&IdentityCase::new(kind, p, Strategy::Quadrature)).unwrap();
        let b = verify(&IdentityCase::new(half, shifted, Strategy::Quadrature)).unwrap();
        assert!((a.lhs.value - b.lhs.value).norm() < 1e-8 * a.lhs.value.norm());
        assert!(b.passed, "{b:?}");
    }

    #[test]
    fn reduced_ii_signs() {
        for sector in [MeasureSector::Integer, MeasureSector::HalfInteger] {
            let r = run(IdentityKind::new(IdentityTag::ReducedII, 2, sector), 2, Strategy::Quadrature);
            assert!(r.residual < 1e-6, "{sector:?} {r:?}");
        }
    }

    #[test]
    fn chain_s_example() {
        let a = Index::real(0, 0.7);
        let kind = IdentityKind::new(IdentityTag::ChainS, 1, MeasureSector::Integer);
        let p = Params {
            z: vec![FieldPoint::new(0, C::new(0.0, 1.0)), FieldPoint::new(0, C::new(0.0, 0.0))],
            alpha: vec![a, a],
            ..Params::default()
        };
        let r = verify(&IdentityCase::new(kind, p, Strategy::Quadrature)).unwrap();
        assert!(r.residual < 1e-7, "{r:?}");
    }

    #[test]
    fn star_triangle_d_v1b_is_negative_real() {
        let r = run(IdentityKind::star_d(ParityVariant::V1B), 3, Strategy::Quadrature);
        assert!(r.residual < 1e-6, "{r:?}");
        assert!(r.rhs.value.re < 0.0 && r.lhs.value.re < 0.0);
        assert!(r.flags.is_empty());
    }

    #[test]
    fn constraint_violation_is_named() {
        let kind = IdentityKind::new(IdentityTag::StarTriangleS, 2, MeasureSector::Integer);
        let mut p = sample_params(&kind, 1).unwrap();
        p.alpha[2].sigma += 0.01;
        match check_constraints(&kind, &p) {
            Err(Error::Constraint(msg)) => assert!(msg.contains("alpha")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn residual_convention() {
        assert_eq!(residual(C::new(1.0, 0.0), C::new(2.0, 0.0)), 0.5);
        assert_eq!(residual(C::new(1e-12, 0.0), C::new(0.0, 0.0)), 1e-12);
    }
}
