//! Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
//! as arguments to run a subset, e.g. `cargo test --test acceptance -- 1 11`.

use gammabarnes::cli_report::{cmd_verify, random_distinct_rationals, RunOptions};
use gammabarnes::gamma_core::{bgamma, sign_pow, FieldPoint, Index};
use gammabarnes::identity_suite::{
    sample_params_with_m, verify, zeta_pole_check, IdentityCase, IdentityKind, IdentityTag,
    ParityVariant, Strategy, ZETA_EPS,
};
use gammabarnes::mb_quadrature::{MeasureSector, MeasureSpec};
use gammabarnes::plane_integrals::{
    df_linear_system_check, eval_classical, milne_partial_fraction_check, quasiclassical_check, ClassicalCase,
    ClassicalKind, ClassicalParams, PlaneMethod, QuasiIdentity,
};
use gammabarnes::propagators::PlanePoint;
use gammabarnes::residue_engine::{milne_gauss_check, moment_matrix, permutations, r_n, t_n, MomentMethod, MomentOptions};
use num_bigint::BigInt;
use num_complex::Complex64 as C;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

type Outcome = Result<String, String>;

fn rel(a: C, b: C) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// Runs `count` sampled cases of one kind and reports the worst residual.
fn suite(kind: IdentityKind, seeds: std::ops::Range<u64>, strategy: Strategy, tol: f64) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for seed in seeds {
        let case = IdentityCase::sampled(kind, seed, strategy).map_err(|e| format!("{} seed {seed}: {e}", kind.tag))?;
        let r = verify(&case).map_err(|e| format!("{} seed {seed}: {e}", kind.tag))?;
        worst = worst.max(r.residual);
        if !(r.residual <= tol) {
            return Err(format!("{} {:?} seed {seed}: residual {:.3e} > {tol:.0e}", kind.tag, kind.sector, r.residual));
        }
    }
    Ok(worst)
}

fn crit1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let one = FieldPoint::scalar(1.0);
    let (mut worst, mut points) = (0.0f64, 0usize);
    while points < 10_000 {
        let u = FieldPoint::new(2 * rng.gen_range(-4i64..=4), c(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)));
        if u.nu.norm() > 5.0 {
            continue;
        }
        let (Ok(a), Ok(b), Ok(up)) = (bgamma(u).get(), bgamma(one - u).get(), bgamma(u + one).get()) else {
            continue;
        };
        let e1 = rel(a * b, c(sign_pow(u.twice_n / 2), 0.0));
        let e2 = rel(up, -u.u() * u.ubar() * a);
        worst = worst.max(e1).max(e2);
        points += 1;
        if !(e1 <= 1e-11 && e2 <= 1e-11) {
            return Err(format!("u = {u}: reflection {e1:.2e}, recurrence {e2:.2e}"));
        }
    }
    Ok(format!("{points} points, worst relative error {worst:.2e}"))
}

fn crit2() -> Outcome {
    let w = suite(IdentityKind::new(IdentityTag::GustafsonI, 1, MeasureSector::Integer), 0..50, Strategy::Quadrature, 1e-6)?;
    Ok(format!("50 cases, worst residual {w:.2e}"))
}

fn crit3() -> Outcome {
    let a = suite(IdentityKind::new(IdentityTag::GustafsonII, 1, MeasureSector::Integer), 0..25, Strategy::Quadrature, 1e-6)?;
    let b = suite(IdentityKind::new(IdentityTag::GustafsonII, 1, MeasureSector::HalfInteger), 0..25, Strategy::Quadrature, 1e-6)?;
    Ok(format!("25 + 25 cases, worst residual {a:.2e} (integer), {b:.2e} (half-integer)"))
}

fn crit4() -> Outcome {
    let kind = IdentityKind::new(IdentityTag::GustafsonI, 2, MeasureSector::Integer);
    let worst = suite(kind, 0..10, Strategy::Determinant, 1e-5)?;
    let mut gap = 0.0f64;
    for seed in 0..3 {
        let case = IdentityCase::sampled(kind, seed, Strategy::Both).map_err(|e| e.to_string())?;
        let r = verify(&case).map_err(|e| e.to_string())?;
        let det = &r.alternates[0].1;
        let diff = (r.lhs.value - det.value).norm();
        let bar = r.lhs.total_error() + det.total_error();
        gap = gap.max(diff / bar);
        if diff > bar {
            return Err(format!("seed {seed}: |quad - det| = {diff:.2e} exceeds combined error {bar:.2e}"));
        }
    }
    Ok(format!("10 cases, worst residual {worst:.2e}; 3 cross-checks, worst gap {gap:.2} error bars"))
}

fn crit5() -> Outcome {
    let opts = MomentOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_q = 0.0f64;
    for k in 0..20 {
        let n = 1 + k % 2;
        // the residue series needs Re Σ(z+w) < 1 on both sides, so the
        // discrete parts sum to zero
        let hi = 0.9 / (2 * n + 2) as f64;
        let (z, w) = loop {
            let mut pts: Vec<FieldPoint> = (0..2 * n + 2)
                .map(|_| FieldPoint::int(rng.gen_range(-2..=2), c(rng.gen_range(0.06..hi), rng.gen_range(-0.3..0.3))))
                .collect();
            let total: i64 = pts[..2 * n + 1].iter().map(|p| p.twice_n / 2).sum();
            if total.abs() <= 2 {
                pts[2 * n + 1] = FieldPoint::int(-total, pts[2 * n + 1].nu);
                let w = pts.split_off(n + 1);
                break (pts, w);
            }
        };
        let q = moment_matrix(&z, &w, n, MomentMethod::Quadrature, &opts).map_err(|e| format!("N={n} set {k}: {e}"))?;
        let r = moment_matrix(&z, &w, n, MomentMethod::ResidueSeries, &opts).map_err(|e| format!("N={n} set {k}: {e}"))?;
        let scale = q.entries.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max);
        for (a, b) in q.entries.iter().flatten().zip(r.entries.iter().flatten()) {
            let e = (a - b).norm() / scale;
            worst_q = worst_q.max(e);
            if !(e <= 1e-8) {
                return Err(format!("moments N={n} set {k}: methods differ by {e:.2e}"));
            }
        }
    }
    let mut cbox = |lo: f64, hi: f64| c(rng.gen_range(lo..hi), rng.gen_range(-0.2..0.2));
    let mut worst_m = 0.0f64;
    for k in 0..20 {
        let np1 = 2 + k % 2;
        let alpha: Vec<C> = (0..np1).map(|_| cbox(-0.3, 0.3)).collect();
        let beta: Vec<C> = (0..np1).map(|_| cbox(-0.45, -0.15)).collect();
        for sg in permutations(np1) {
            let (l, r) = milne_gauss_check(&alpha, &beta, &sg, if np1 == 2 { 400 } else { 200 }).map_err(|e| e.to_string())?;
            worst_m = worst_m.max(rel(l, r));
            if !(rel(l, r) <= 1e-5) {
                return Err(format!("Milne N={} set {k}: {:.2e}", np1 - 1, rel(l, r)));
            }
        }
    }
    let mut worst_rt = 0.0f64;
    for k in 0..20 {
        let n = 1 + k % 2;
        let pt = |rng: &mut ChaCha8Rng| FieldPoint::int(rng.gen_range(-2..=2), c(rng.gen_range(0.02..0.3), rng.gen_range(-0.3..0.3)));
        let z: Vec<FieldPoint> = (0..=n).map(|_| pt(&mut rng)).collect();
        let w: Vec<FieldPoint> = (0..=n).map(|_| pt(&mut rng)).collect();
        let (s, closed) = r_n(&z, &w, n).map_err(|e| e.to_string())?;
        let zs: Vec<C> = (0..2 * n + 2).map(|_| c(rng.gen_range(-0.45..0.45), rng.gen_range(-0.3..0.3))).collect();
        let t = t_n(&zs, n).map_err(|e| e.to_string())?;
        let (er, et) = ((s - closed).norm() / closed.norm().max(1.0), (t - 1.0).norm());
        worst_rt = worst_rt.max(er).max(et);
        if !(er <= 1e-8 && et <= 1e-8) {
            return Err(format!("set {k} (N={n}): R_N error {er:.2e}, T_N error {et:.2e}"));
        }
    }
    Ok(format!(
        "moments {worst_q:.2e} over 20 cases; Milne {worst_m:.2e}; R_N/T_N {worst_rt:.2e} over 20 sets"
    ))
}

fn crit6() -> Outcome {
    let mut parts = Vec::new();
    for tag in [IdentityTag::ReducedI, IdentityTag::ReducedIGamma, IdentityTag::ReducedII, IdentityTag::ReducedIIGamma] {
        let sectors: &[MeasureSector] = match tag {
            IdentityTag::ReducedII | IdentityTag::ReducedIIGamma => &[MeasureSector::Integer, MeasureSector::HalfInteger],
            _ => &[MeasureSector::Integer],
        };
        let per = 20 / sectors.len() as u64;
        let mut worst = 0.0f64;
        for &s in sectors {
            worst = worst.max(suite(IdentityKind::new(tag, 2, s), 0..per, Strategy::Quadrature, 1e-6)?);
        }
        parts.push(format!("{tag} {worst:.1e}"));
    }
    Ok(format!("20 cases each, worst residual: {}", parts.join(", ")))
}

fn crit7() -> Outcome {
    let mut kinds = vec![
        IdentityKind::new(IdentityTag::ChainS, 1, MeasureSector::Integer),
        IdentityKind::new(IdentityTag::StarTriangleS, 1, MeasureSector::Integer),
        IdentityKind::new(IdentityTag::ChainD, 1, MeasureSector::Integer),
    ];
    kinds.extend(ParityVariant::ALL.iter().map(|&v| IdentityKind::star_d(v)));
    let mut worst = 0.0f64;
    let mut signed = 0;
    for kind in kinds {
        for seed in 0..10 {
            let case = IdentityCase::sampled(kind, seed, Strategy::Quadrature).map_err(|e| e.to_string())?;
            let r = verify(&case).map_err(|e| format!("{} seed {seed}: {e}", kind.tag))?;
            worst = worst.max(r.residual);
            if !(r.residual <= 1e-6) {
                return Err(format!("{} {:?} seed {seed}: residual {:.2e}", kind.tag, kind.parity_variant, r.residual));
            }
            let sign = match kind.parity_variant {
                Some(ParityVariant::V1A) => 1.0,
                Some(ParityVariant::V1B) => -1.0,
                _ => continue,
            };
            // both sides real with the variant's sign
            for (side, v) in [("lhs", r.lhs.value), ("rhs", r.rhs.value)] {
                if !(v.re * sign > 0.0) || v.im.abs() > 1e-6 * v.re.abs() {
                    return Err(format!("{:?} seed {seed}: {side} = {v} breaks the sign rule", kind.parity_variant));
                }
            }
            if !r.flags.is_empty() {
                return Err(format!("{:?} seed {seed}: {:?}", kind.parity_variant, r.flags));
            }
            signed += 1;
        }
    }
    Ok(format!("70 cases, worst residual {worst:.2e}; sign rule held on {signed} real-index samples"))
}

fn crit8() -> Outcome {
    let kind = IdentityKind::new(IdentityTag::ZetaPole, 1, MeasureSector::Integer);
    let case = IdentityCase::sampled(kind, 0, Strategy::Quadrature).map_err(|e| e.to_string())?;
    let r = zeta_pole_check(&case, &ZETA_EPS).map_err(|e| e.to_string())?;
    if !(r.residue_residual <= 1e-3) {
        return Err(format!("extrapolated residue off by {:.2e}", r.residue_residual));
    }
    Ok(format!("residue matches the Gamma product to {:.2e}", r.residue_residual))
}

fn crit9() -> Outcome {
    let l = [16.0, 32.0, 64.0, 128.0];
    let chain = quasiclassical_check(
        QuasiIdentity::Chain,
        &[PlanePoint::new(0.5, 0.25), PlanePoint::new(-0.5, -0.25)],
        &[Index::real(0, 0.7), Index::int(2, c(0.6, 0.1))],
        &l,
        &MeasureSpec::default(),
    )
    .map_err(|e| e.to_string())?;
    let star = quasiclassical_check(
        QuasiIdentity::StarTriangle,
        &[PlanePoint::new(0.5, 0.25), PlanePoint::new(-0.5, 0.0), PlanePoint::new(0.0, -0.75)],
        &[Index::int(2, c(0.7, 0.1)), Index::int(-2, c(0.6, -0.3)), Index::int(0, c(0.7, 0.2))],
        &l,
        &MeasureSpec::default(),
    )
    .map_err(|e| e.to_string())?;
    for (name, r) in [("chain", &chain), ("star-triangle", &star)] {
        if !(r.exponent <= -0.8) || !r.monotone {
            return Err(format!("{name}: exponent {:.3}, monotone {}", r.exponent, r.monotone));
        }
    }
    Ok(format!("fitted exponents {:.2} (chain), {:.2} (star-triangle)", chain.exponent, star.exponent))
}

fn crit10() -> Outcome {
    let pt = PlanePoint::new;
    let qmc = |kind, z, alpha| {
        let case = ClassicalCase::new(kind, ClassicalParams { z, alpha, n: 1, m: 0 }).with_method(PlaneMethod::Qmc, 10_000_000);
        eval_classical(&case).map(|r| r.residual).map_err(|e| format!("{kind}: {e}"))
    };
    let a34 = Index::real(0, 0.75);
    let chain = qmc(ClassicalKind::ChainC, vec![pt(0.0, 0.0), pt(1.0, 0.0)], vec![a34, a34])?;
    let third = Index::real(0, 2.0 / 3.0);
    let star = qmc(
        ClassicalKind::StarTriangleC,
        vec![pt(0.0, 0.0), pt(1.0, 0.0), pt(0.5, 3f64.sqrt() / 2.0)],
        vec![third, third, Index::real(0, 2.0) - third - third],
    )?;
    if !(chain <= 1e-3 && star <= 1e-3) {
        return Err(format!("QMC residuals {chain:.2e} (chain), {star:.2e} (star)"));
    }
    let z = vec![pt(0.2, 0.1), pt(-0.4, 0.3), pt(0.5, -0.6)];
    // convergence needs n < Σ Re α < n + 1 on the n-fold side
    let one_fold = vec![Index::real(0, 0.5), Index::int(1, c(0.6, 0.0)), Index::real(-1, 0.55)];
    let two_fold = vec![Index::int(1, c(0.75, 0.1)), Index::int(0, c(0.7, -0.3)), Index::real(-1, 0.8)];
    let mut df = Vec::new();
    for (n, m) in [(1, 0), (1, 1), (2, 0)] {
        let k = n + m + 1;
        let alpha = if n == 2 { &two_fold } else { &one_fold };
        let p = ClassicalParams {
            z: z[..k].to_vec(),
            alpha: alpha[..k].to_vec(),
            n,
            m,
        };
        let r = eval_classical(&ClassicalCase::new(ClassicalKind::DfDuality, p)).map_err(|e| format!("DF ({n},{m}): {e}"))?;
        if !(r.residual <= 1e-2) {
            return Err(format!("DF ({n},{m}): residual {:.2e}", r.residual));
        }
        df.push(format!("({n},{m}) {:.1e}", r.residual));
    }
    Ok(format!("QMC 1e7: chain {chain:.2e}, star {star:.2e}; duality {}", df.join(", ")))
}

fn crit11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let zero = BigRational::from_integer(BigInt::from(0));
    for k in 0..100 {
        let n = 1 + k % 5;
        let t = random_distinct_rationals(&mut rng, n);
        let b = random_distinct_rationals(&mut rng, n);
        let (l, r) = milne_partial_fraction_check(&t, &b).map_err(|e| e.to_string())?;
        if l != r {
            return Err(format!("Milne instance {k}: {l} != {r}"));
        }
        let m = k % n;
        let t = random_distinct_rationals(&mut rng, n + 1);
        let u = random_distinct_rationals(&mut rng, m);
        let res = df_linear_system_check(&t, &u).map_err(|e| e.to_string())?;
        if res != zero {
            return Err(format!("linear system instance {k}: residual {res}"));
        }
    }
    Ok("100 Milne and 100 linear-system instances exact".into())
}

fn crit12() -> Outcome {
    let mut worst = 0.0f64;
    for tag in [IdentityTag::DualQuantizedI, IdentityTag::DualQuantizedII] {
        for sector in [MeasureSector::Integer, MeasureSector::HalfInteger] {
            let kind = IdentityKind::new(tag, 1, sector);
            for seed in 0..5 {
                let p = sample_params_with_m(&kind, 1, seed).map_err(|e| format!("{tag} {sector:?}: {e}"))?;
                let r = verify(&IdentityCase::new(kind, p, Strategy::Quadrature)).map_err(|e| format!("{tag} {sector:?} seed {seed}: {e}"))?;
                worst = worst.max(r.residual);
                if !(r.residual <= 1e-4) {
                    return Err(format!("{tag} {sector:?} seed {seed}: residual {:.2e}", r.residual));
                }
            }
        }
    }
    Ok(format!("20 cases, worst residual {worst:.2e}"))
}

const SUITE: &str = "
seed = 13
case {
  identity = GUSTAFSON_I
  sample = 0
  count = 3
}
case {
  identity = GUSTAFSON_II
  sector = HALF_INTEGER
  sample = 1
  count = 2
}
case {
  identity = STAR_TRIANGLE_D
  variant = V2A
  sample = 2
}
case {
  identity = CHAIN_S
  z = (0, i) ; (0, 0)
  alpha = (0, 0.7) ; (0, 0.7)
}
plane {
  identity = STAR_TRIANGLE_C
  z = 0 ; 1 ; 0.5+0.8660254037844386i
  alpha = (0, 0.6666666666666666) ; (0, 0.6666666666666666) ; (0, 0.6666666666666668)
  method = QMC
  samples = 100000
}
";

fn crit13() -> Outcome {
    let (a, _) = cmd_verify(SUITE, &RunOptions::default());
    let (b, _) = cmd_verify(SUITE, &RunOptions { workers: Some(1), ..RunOptions::default() });
    if a.code != 0 {
        return Err(format!("suite did not pass: {}", a.stderr));
    }
    if a.stdout != b.stdout {
        return Err("JSONL output differs between runs".into());
    }
    Ok(format!("{} records, {} bytes identical across runs", a.stdout.lines().count(), a.stdout.len()))
}

fn main() {
    let all: [(u32, &str, fn() -> Outcome); 13] = [
        (1, "functional relations", crit1),
        (2, "Gustafson I, N=1", crit2),
        (3, "Gustafson II, N=1", crit3),
        (4, "Gustafson I, N=2", crit4),
        (5, "residue series vs quadrature", crit5),
        (6, "reduced integrals, N=2", crit6),
        (7, "star-triangle suites", crit7),
        (8, "zeta-pole limit", crit8),
        (9, "quasi-classical limit", crit9),
        (10, "plane identities", crit10),
        (11, "exact rational checks", crit11),
        (12, "conjectured dualities", crit12),
        (13, "determinism", crit13),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (k, name, run) in all {
        if !wanted.is_empty() && !wanted.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {k:>2} PASS  {name}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                println!("criterion {k:>2} FAIL  {name}: {detail} ({secs:.1} s)");
                failed.push(k);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
