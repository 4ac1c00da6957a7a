use koopman_laplace::dynsys::{self, Signal};
use koopman_laplace::limit_cycle::LimitCycleInfo;
use koopman_laplace::modes;
use koopman_laplace::resolvent::{self, ModeTag, PoleEntry, PoleResidueSet};
use koopman_laplace::Error;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn vdp() -> dynsys::DynSystem {
    dynsys::builtin_vdp(0.3)
}

// Conjugate pairs with frequencies at least 0.3 apart, plus an optional real pole.
fn exp_terms() -> impl Strategy<Value = Vec<(Complex64, Complex64)>> {
    (
        prop::collection::vec((-0.4..0.0f64, 0.5..2.0f64, -3.0..3.0f64), 1..=2),
        0.3..0.9f64,
        prop::option::of((-0.8..-0.1f64, 0.3..2.0f64)),
    )
        .prop_map(|(pairs, base, real)| {
            let mut terms = Vec::new();
            for (k, (decay, mag, arg)) in pairs.into_iter().enumerate() {
                let p = c(decay, base + 1.1 * k as f64);
                let r = Complex64::from_polar(mag, arg);
                terms.push((p, r));
                terms.push((p.conj(), r.conj()));
            }
            if let Some((p, r)) = real {
                terms.push((c(p, 0.0), c(r, 0.0)));
            }
            terms
        })
}

fn nearest(found: &[(Complex64, Complex64)], p: Complex64) -> (Complex64, Complex64) {
    *found.iter().min_by(|a, b| (a.0 - p).norm().total_cmp(&(b.0 - p).norm())).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flow_is_a_semigroup(x in -3.0..3.0f64, v in -3.0..3.0f64, s in 0.0..4.0f64, t in 0.0..4.0f64) {
        let sys = vdp();
        let tol = 1e-11;
        let a = dynsys::flow(&sys, &dynsys::flow(&sys, &[x, v], s, tol).unwrap(), t, tol).unwrap();
        let b = dynsys::flow(&sys, &[x, v], s + t, tol).unwrap();
        for i in 0..2 {
            prop_assert!((a[i] - b[i]).abs() < 1e-7 * (1.0 + b[i].abs()));
        }
    }

    #[test]
    fn variational_matches_finite_differences(x in -2.5..2.5f64, v in -2.5..2.5f64, t in 0.1..5.0f64) {
        let sys = vdp();
        let tol = 1e-11;
        let (_, phi) = dynsys::integrate_variational(&sys, &[x, v], t, tol).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            let mut xp = [x, v];
            let mut xm = [x, v];
            xp[j] += h;
            xm[j] -= h;
            let fp = dynsys::flow(&sys, &xp, t, tol).unwrap();
            let fm = dynsys::flow(&sys, &xm, t, tol).unwrap();
            for i in 0..2 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                prop_assert!((fd - phi[(i, j)]).abs() < 1e-5 * phi.abs().max().max(1.0));
            }
        }
    }

    #[test]
    fn laplace_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, re in 0.05..3.0f64, im in -8.0..8.0f64) {
        let dt = 0.01;
        let y1 = Signal::from_fn(dt, 1501, |t| c((-0.2 * t).exp() * (1.7 * t).sin(), 0.0)).unwrap();
        let y2 = Signal::from_fn(dt, 1501, |t| c(t.cos(), 1.0 / (1.0 + t))).unwrap();
        let mix = y1.combine(c(a, 0.0), &y2, c(b, 0.0)).unwrap();
        let s = c(re, im);
        let lhs = resolvent::laplace_numeric(&mix, s, 15.0).unwrap().value[0];
        let rhs = a * resolvent::laplace_numeric(&y1, s, 15.0).unwrap().value[0]
            + b * resolvent::laplace_numeric(&y2, s, 15.0).unwrap().value[0];
        prop_assert!((lhs - rhs).norm() < 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn transforms_reject_outside_roc(re in -5.0..=0.0f64, im in -5.0..5.0f64) {
        let y = Signal::from_fn(0.01, 101, |t| c(t, 0.0)).unwrap();
        let s = c(re, im);
        let numeric = resolvent::laplace_numeric(&y, s, 1.0);
        let rejected = matches!(numeric, Err(Error::RocViolation { .. }));
        prop_assert!(rejected);
        let set = PoleResidueSet::new(
            vec![PoleEntry { pole: c(-1.0, 0.0), residue: vec![c(1.0, 0.0)], tag: ModeTag::Identified, indices: vec![] }],
            0.0,
        ).unwrap();
        let eval = resolvent::expansion_eval(&set, s);
        let rejected = matches!(eval, Err(Error::RocViolation { .. }));
        prop_assert!(rejected);
    }

    #[test]
    fn linear_expansion_equals_resolvent(a11 in -2.0..-0.1f64, a12 in -1.0..1.0f64, a21 in -1.0..1.0f64, a22 in -2.0..-0.1f64,
                                         re in 0.1..3.0f64, im in -4.0..4.0f64) {
        let a = DMatrix::from_row_slice(2, 2, &[a11, a12, a21, a22]);
        let x0 = [1.0, -0.5];
        let cv = [0.3, 1.0];
        let set = match resolvent::linear_expansion(&a, &cv, &x0) {
            Ok(set) => set,
            // Defective matrices have no eigen-expansion.
            Err(_) => return Ok(()),
        };
        let s = c(re, im);
        prop_assume!(s.re > set.roc_abscissa);
        let exact = resolvent::laplace_linear_analytic(&a, &cv, &x0, s).unwrap();
        let model = resolvent::expansion_eval(&set, s).unwrap()[0];
        prop_assert!((exact - model).norm() < 1e-8 * (1.0 + exact.norm()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn prony_and_dmd_recover_exponentials(terms in exp_terms()) {
        let dt = 0.05;
        let len = 240;
        let y = Signal::from_fn(dt, len, |t| terms.iter().map(|(p, r)| r * (p * t).exp()).sum()).unwrap();

        let prony = modes::prony(&y.component(0), dt, terms.len()).unwrap();
        prop_assert!(prony.is_conjugate_closed(1e-8));
        let found: Vec<_> = prony.entries.iter().map(|e| (e.pole, e.residue[0])).collect();
        for &(p, r) in &terms {
            let (fp, fr) = nearest(&found, p);
            prop_assert!((fp - p).norm() < 1e-8, "prony pole {fp} vs {p}");
            prop_assert!((fr - r).norm() < 1e-8 * r.norm(), "prony residue {fr} vs {r}");
        }
        for k in 0..len {
            prop_assert!((prony.time_response(k as f64 * dt)[0] - y.sample(k)[0]).norm() < 1e-8);
        }

        let est = modes::dmd(&modes::delay_embed(&modes::snapshot_matrix(&y), 40).unwrap(), dt, 1e-10).unwrap();
        prop_assert_eq!(est.rank, terms.len());
        prop_assert!(est.reconstruction_error < 1e-8);
        prop_assert!(est.to_pole_residue_set(1).is_conjugate_closed(1e-8));
        let found: Vec<_> = est.cont_eigs.iter().copied().zip(est.residues(0)).collect();
        for &(p, r) in &terms {
            let (fp, fr) = nearest(&found, p);
            prop_assert!((fp - p).norm() < 1e-8, "dmd pole {fp} vs {p}");
            prop_assert!((fr - r).norm() < 1e-8 * r.norm(), "dmd residue {fr} vs {r}");
        }
    }
}

#[test]
fn trivial_multiplier_is_one() {
    for eps in [0.1, 0.3, 0.8, 1.5] {
        let info = LimitCycleInfo::locate(&dynsys::builtin_vdp(eps), &[2.0, 0.0], 200.0, 1e-11).unwrap();
        assert!((info.trivial_multiplier - 1.0).norm() < 1e-4, "eps {eps}: {}", info.trivial_multiplier);
        assert!(info.multipliers.iter().all(|m| m.norm() < 1.0));
    }
}

#[test]
fn dmd_and_prony_agree_on_three_terms() {
    let dt = 0.02;
    let terms = [(c(-0.1, 1.0), c(0.5, 0.2)), (c(-0.1, -1.0), c(0.5, -0.2)), (c(-0.6, 0.0), c(1.0, 0.0))];
    let y = Signal::from_fn(dt, 400, |t| terms.iter().map(|(p, r)| r * (p * t).exp()).sum()).unwrap();
    let prony = modes::prony(&y.component(0), dt, 3).unwrap();
    let est = modes::dmd(&modes::delay_embed(&modes::snapshot_matrix(&y), 8).unwrap(), dt, 1e-10).unwrap();
    for e in &prony.entries {
        let d = est.cont_eigs.iter().map(|z| (z - e.pole).norm()).fold(f64::INFINITY, f64::min);
        assert!(d < 1e-8, "{}", e.pole);
    }
}
