use gammabarnes::cli_report::{parse_complex, Json};
use gammabarnes::gamma_core::{bgamma, sign_pow, FieldPoint, Index};
use gammabarnes::identity_suite::{sample_params, verify, IdentityCase, IdentityKind, IdentityTag, Strategy as Eval};
use gammabarnes::mb_quadrature::MeasureSector;
use gammabarnes::plane_integrals::{df_linear_system_check, milne_partial_fraction_check};
use gammabarnes::propagators::{d_prop, plane_power, s_prop, PlanePoint};
use num_bigint::BigInt;
use num_complex::Complex64 as C;
use num_rational::BigRational;
use proptest::prelude::*;

fn rel(a: C, b: C) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn even_point() -> impl Strategy<Value = FieldPoint> {
    (-4i64..=4, -4.5f64..4.5, -4.5f64..4.5).prop_map(|(n, x, y)| FieldPoint::new(2 * n, C::new(x, y)))
}

fn index() -> impl Strategy<Value = Index> {
    (-3i64..=3, -1.0f64..1.0, -1.0f64..1.0).prop_map(|(m, x, y)| Index::int(m, C::new(x, y)))
}

fn plane_point() -> impl Strategy<Value = PlanePoint> {
    (-3.0f64..3.0, -3.0f64..3.0)
        .prop_filter("away from the origin", |(x, y)| x * x + y * y > 1e-6)
        .prop_map(|(x, y)| PlanePoint::new(x, y))
}

fn rationals(n: usize) -> impl Strategy<Value = Vec<BigRational>> {
    prop::collection::btree_set((-60i64..=60, 1i64..=9).prop_filter("nonzero", |(p, _)| *p != 0), n).prop_map(|set| {
        let mut out: Vec<BigRational> = Vec::new();
        for (p, q) in set {
            let r = BigRational::new(BigInt::from(p), BigInt::from(q));
            if !out.contains(&r) {
                out.push(r);
            }
        }
        out
    })
}

proptest! {
    #[test]
    fn gamma_reflection(u in even_point()) {
        let one = FieldPoint::scalar(1.0);
        if let (Ok(a), Ok(b)) = (bgamma(u).get(), bgamma(one - u).get()) {
            prop_assert!(rel(a * b, C::new(sign_pow(u.twice_n / 2), 0.0)) < 1e-11);
        }
    }

    #[test]
    fn gamma_recurrence(u in even_point()) {
        let one = FieldPoint::scalar(1.0);
        if let (Ok(a), Ok(b)) = (bgamma(u + one).get(), bgamma(u).get()) {
            prop_assert!(rel(a, -u.u() * u.ubar() * b) < 1e-11);
        }
    }

    #[test]
    fn s_prop_parity(z in plane_point(), a in index()) {
        let p = s_prop(z, a).unwrap();
        let m = s_prop(PlanePoint::from_complex(-z.z), a).unwrap();
        prop_assert!(rel(m, p * sign_pow(a.twice_m / 2)) < 1e-13);
    }

    #[test]
    fn plane_power_is_multiplicative(z in plane_point(), a in index(), b in index()) {
        let lhs = plane_power(z.z, a).unwrap() * plane_power(z.z, b).unwrap();
        prop_assert!(rel(lhs, plane_power(z.z, a + b).unwrap()) < 1e-12);
    }

    #[test]
    fn d_prop_is_symmetric(n1 in -3i64..=3, n2 in -3i64..=3, t1 in -3.0f64..3.0, t2 in -3.0f64..3.0, s in 0.1f64..0.9) {
        let z1 = FieldPoint::new(2 * n1, C::new(0.0, t1));
        let z2 = FieldPoint::new(2 * n2, C::new(0.0, t2));
        let a = Index::real(0, s);
        if let Ok(d) = d_prop(z1, z2, a) {
            prop_assert_eq!(d_prop(z2, z1, a).unwrap(), d);
        }
    }

    #[test]
    fn milne_identity_is_exact(t in rationals(5), b in rationals(5)) {
        let n = t.len().min(b.len());
        let (l, r) = milne_partial_fraction_check(&t[..n], &b[..n]).unwrap();
        prop_assert_eq!(l, r);
    }

    #[test]
    fn duality_linear_system_is_exact(t in rationals(6), m in 0usize..4) {
        let m = m.min(t.len() - 1);
        let u: Vec<BigRational> = t.iter().take(m).map(|x| x + BigRational::from_integer(BigInt::from(1))).collect();
        let res = df_linear_system_check(&t, &u).unwrap();
        prop_assert_eq!(res, BigRational::from_integer(BigInt::from(0)));
    }

    #[test]
    fn reals_round_trip_through_json(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let s = Json::Real(x).to_line();
        prop_assert_eq!(s.parse::<f64>().unwrap(), x);
    }

    #[test]
    fn complex_literals_round_trip(re in -1e6f64..1e6, im in -1e6f64..1e6) {
        let text = format!("{re}{im:+}i");
        prop_assert_eq!(parse_complex(&text).unwrap(), C::new(re, im));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn gustafson_i_is_symmetric_in_z(seed in 0u64..1000) {
        let kind = IdentityKind::new(IdentityTag::GustafsonI, 1, MeasureSector::Integer);
        let p = sample_params(&kind, seed).unwrap();
        let mut q = p.clone();
        q.z.reverse();
        let a = verify(&IdentityCase::new(kind, p, Eval::Quadrature)).unwrap();
        let b = verify(&IdentityCase::new(kind, q, Eval::Quadrature)).unwrap();
        prop_assert!((a.residual - b.residual).abs() < 1e-9, "{} {}", a.residual, b.residual);
    }

    #[test]
    fn chain_is_translation_covariant(seed in 0u64..1000, shift in -2.0f64..2.0) {
        let kind = IdentityKind::new(IdentityTag::ChainS, 1, MeasureSector::Integer);
        let p = sample_params(&kind, seed).unwrap();
        let mut q = p.clone();
        for z in &mut q.z {
            *z = z.shift(C::new(0.0, shift));
        }
        let a = verify(&IdentityCase::new(kind, p, Eval::Quadrature)).unwrap();
        let b = verify(&IdentityCase::new(kind, q, Eval::Quadrature)).unwrap();
        prop_assert!(a.residual < 1e-6 && b.residual < 1e-6);
        prop_assert!(rel(b.rhs.value, a.rhs.value) < 1e-12);
        prop_assert!(rel(b.lhs.value, a.lhs.value) < 1e-8, "{} {}", a.lhs.value, b.lhs.value);
    }
}
