//! Seeded property tests over random instances.

use fockcm::cm::{from_cm, mixed_norm, mixed_norm_swapped, to_cm};
use fockcm::fock::{annihilate, create, number_weight, permutations, symmetrize, FockVector};
use fockcm::grid::{inner, lp_norm, GridSpec, C64};
use fockcm::norms::{alpha_prime_schedule, dyadic_partition, kappa_band, n_norm, PartitionMode};
use fockcm::propagator::{dispersive_ratio, evolve_free, wrap_time};
use fockcm::rng;
use fockcm::semiclassics::{coherent_overlap_exact, coherent_state, husimi};
use fockcm::solver::Chi;
use proptest::prelude::*;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(cfg(32))]

    #[test]
    fn symmetrize_is_projection(seed in any::<u64>(), n in 2usize..=3) {
        let b = 4usize;
        let mut r = rng::stream(seed, 0);
        let x = rng::complex_vec(&mut r, b.pow(n as u32));
        let s = symmetrize(&x, n, b);
        let ss = symmetrize(&s, n, b);
        let nx = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let ns = s.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(ns <= nx * (1.0 + 1e-12));
        let gap = s.iter().zip(&ss).map(|(a, c)| (a - c).norm()).fold(0.0, f64::max);
        prop_assert!(gap < 1e-12);
        // invariance under every block permutation
        for p in permutations(n) {
            for idx in 0..s.len() {
                let mut digits = vec![0; n];
                let mut rem = idx;
                for k in (0..n).rev() {
                    digits[k] = rem % b;
                    rem /= b;
                }
                let j = p.iter().fold(0, |acc, &k| acc * b + digits[k]);
                prop_assert!((s[idx] - s[j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn creation_is_adjoint_of_annihilation(seed in any::<u64>()) {
        let g = GridSpec::new(1, 8, 0.5).unwrap();
        let mut r = rng::stream(seed, 1);
        let f = rng::complex_vec(&mut r, 8);
        let u = FockVector::random(&g, 3, 2, None, &mut r);
        let v = FockVector::random(&g, 3, 3, None, &mut r);
        let lhs = create(&f, &u).inner(&v);
        let rhs = u.inner(&annihilate(&f, &v));
        prop_assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn canonical_commutation(seed in any::<u64>()) {
        let g = GridSpec::new(1, 8, 0.5).unwrap();
        let mut r = rng::stream(seed, 2);
        let f = rng::complex_vec(&mut r, 8);
        let h = rng::complex_vec(&mut r, 8);
        let u = FockVector::random(&g, 3, 2, None, &mut r);
        let lhs = annihilate(&h, &create(&f, &u)).sub(&create(&f, &annihilate(&h, &u)));
        let c = inner(&h, &f, g.cell());
        prop_assert!(lhs.sub(&u.scale(c)).norm() < 1e-10 * (1.0 + u.norm() * c.norm()));
    }

    #[test]
    fn number_weight_is_additive(seed in any::<u64>(), a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let g = GridSpec::new(1, 4, 0.5).unwrap();
        let mut r = rng::stream(seed, 3);
        let u = FockVector::random(&g, 3, 3, None, &mut r);
        let two = number_weight(a, &number_weight(b, &u).unwrap()).unwrap();
        let one = number_weight(a + b, &u).unwrap();
        prop_assert!(two.sub(&one).norm() <= 1e-12 * one.norm());
    }

    #[test]
    fn cm_frame_is_unitary_on_band_limited_states(seed in any::<u64>()) {
        let g = GridSpec::new(1, 16, 0.5).unwrap();
        let mut r = rng::stream(seed, 4);
        let u = FockVector::random(&g, 2, 2, Some(3), &mut r);
        let v = to_cm(&u, 2).unwrap();
        prop_assert!(close(v.norm(), u.norm(), 1e-10));
        prop_assert!(from_cm(&v).sub(&u).norm() < 1e-10 * u.norm());
        prop_assert!(close(mixed_norm(&v, 2.0, 2.0), v.norm(), 1e-12));
    }

    #[test]
    fn minkowski_order(seed in any::<u64>(), q in 1.0f64..2.0, extra in 0.0f64..2.0) {
        let g = GridSpec::new(1, 16, 0.5).unwrap();
        let mut r = rng::stream(seed, 5);
        let u = FockVector::random(&g, 2, 2, Some(3), &mut r);
        let v = to_cm(&u, 2).unwrap();
        let p = q + extra;
        // ‖v‖_{L^p_{Y'} L^q_{y_G}} ≤ ‖v‖_{L^q_{y_G} L^p_{Y'}} for q ≤ p
        let lhs = fockcm::cm::mixed_norm_sectors(&v, p, q, [2]);
        let rhs = mixed_norm_swapped(&v, 0, 2, p, q);
        prop_assert!(lhs <= rhs * (1.0 + 1e-10));
    }

    #[test]
    fn free_flow_is_a_unitary_group(seed in any::<u64>(), t in -2.0f64..2.0, s in -2.0f64..2.0) {
        let g = GridSpec::new(1, 32, 0.5).unwrap();
        let mut r = rng::stream(seed, 6);
        let psi = rng::complex_vec(&mut r, 32);
        let xi = [0.3];
        let a = evolve_free(&g, &evolve_free(&g, &psi, t, &xi), s, &xi);
        let b = evolve_free(&g, &psi, t + s, &xi);
        prop_assert!(a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) < 1e-10);
        let n0 = lp_norm(&psi, g.cell(), 2.0);
        prop_assert!(close(lp_norm(&b, g.cell(), 2.0), n0, 1e-12));
    }

    #[test]
    fn dispersive_ratio_is_homogeneous(seed in any::<u64>(), c in 0.1f64..10.0) {
        let g = GridSpec::new(1, 64, 0.5).unwrap();
        let mut r = rng::stream(seed, 7);
        let psi = rng::complex_vec(&mut r, 64);
        let t = 0.5 * wrap_time(&g);
        let scaled: Vec<C64> = psi.iter().map(|z| z * c).collect();
        prop_assert!(close(dispersive_ratio(&g, &psi, t).unwrap(), dispersive_ratio(&g, &scaled, t).unwrap(), 1e-12));
    }

    #[test]
    fn n_norms_scale_and_stay_in_band(seed in any::<u64>(), c in 0.1f64..5.0) {
        let mut r = rng::stream(seed, 8);
        let prof = fockcm::checks::random_profile(&mut r, 64);
        let scaled: Vec<f64> = prof.iter().map(|x| x * c).collect();
        for p in [1u8, 2] {
            let base = n_norm(&prof, p, 1, 1.0, 0.5);
            for i in 1u8..=4 {
                let v = n_norm(&prof, p, i, 1.0, 0.5);
                prop_assert!(close(n_norm(&scaled, p, i, 1.0, 0.5), c * v, 1e-12));
                let (lo, hi) = kappa_band(p, i);
                prop_assert!(v / base >= lo && v / base <= hi);
            }
        }
    }

    #[test]
    fn dyadic_partition_covers_window(t in 0.1f64..10.0, n in 1usize..12) {
        let p = dyadic_partition(t, PartitionMode::AroundT, n);
        let gap = t - p.measure();
        prop_assert!(gap >= -1e-12 && gap <= 2f64.powi(-(n as i32)) * t + 1e-12);
        for w in p.intervals.windows(2) {
            prop_assert!((w[0].2 - w[1].1).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_prime_lies_between(alpha in -2.0f64..0.9, n in 0u32..8) {
        let a = alpha_prime_schedule(alpha, 1.0, n);
        prop_assert!(a > alpha && a < 1.0);
    }

    #[test]
    fn exp_cutoff_weights_are_monotone(eps in 0.0f64..1.0, n in 0usize..10) {
        let w = Chi::Exp.weight(eps, n);
        prop_assert!(w > 0.0 && w <= 1.0);
        prop_assert!(Chi::Exp.weight(eps, n + 1) <= w);
        if eps > 0.0 && (n as f64) <= 1.0 / eps {
            prop_assert_eq!(Chi::Hard.weight(eps, n), 1.0);
        }
    }
}

proptest! {
    #![proptest_config(cfg(12))]

    #[test]
    fn coherent_overlaps_and_husimi(x in 10.0f64..20.0, k in -2.0f64..2.0, dx in -1.0f64..1.0, dk in -1.0f64..1.0) {
        let g = GridSpec::new(1, 64, 0.5).unwrap();
        let h = 0.2;
        let a = coherent_state(&g, h, &[x], &[k]).unwrap();
        let b = coherent_state(&g, h, &[x + dx], &[k + dk]).unwrap();
        let got = inner(&a.values, &b.values, g.cell()).norm_sqr();
        let want = coherent_overlap_exact(h, (&[x], &[k]), (&[x + dx], &[k + dk]));
        prop_assert!((got - want).abs() < 1e-8);
        let f = husimi(&g, h, &[(0.5, &a.values), (0.5, &b.values)], 4).unwrap();
        prop_assert!(f.min() >= 0.0);
        prop_assert!((f.mass() - 1.0).abs() < 1e-2);
    }
}
