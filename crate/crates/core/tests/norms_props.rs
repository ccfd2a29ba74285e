use neuron_landscape::norms::*;
use neuron_oracle::{dual_norm_bruteforce, weighted_norm_direct};
use proptest::prelude::*;

fn vec_pair(max_d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_d).prop_flat_map(|d| (prop::collection::vec(-10.0..10.0f64, d), prop::collection::vec(-10.0..10.0f64, d)))
}

fn nonzero(w: &[f64]) -> bool {
    w.iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-3
}

fn rel_le(a: f64, b: f64) -> bool {
    a <= b + 1e-10 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn cached_norm_matches((w, _) in vec_pair(16)) {
        prop_assume!(nonzero(&w));
        let wv = WeightVector::new(w.clone()).unwrap();
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((wv.norm() - n).abs() <= 1e-12 * n);
    }

    #[test]
    fn projections_recombine((u, w) in vec_pair(16)) {
        prop_assume!(nonzero(&w));
        let wv = WeightVector::new(w.clone()).unwrap();
        let (par, perp) = proj_split(&u, &wv).unwrap();
        let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let d: f64 = perp.iter().zip(&w).map(|(a, b)| a * b).sum();
        prop_assert!(d.abs() <= 1e-10 * nu.max(1.0) * wv.norm());
        for i in 0..u.len() {
            prop_assert!((par[i] + perp[i] - u[i]).abs() <= 1e-12 * nu.max(1.0));
        }
    }

    #[test]
    fn homogeneity((u, w) in vec_pair(16), s in -100.0..100.0f64) {
        prop_assume!(nonzero(&w));
        let wv = WeightVector::new(w).unwrap();
        let su: Vec<f64> = u.iter().map(|x| s * x).collect();
        let a = weighted_norm(&su, &wv).unwrap();
        let b = s.abs() * weighted_norm(&u, &wv).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(b).max(1e-300));
    }

    #[test]
    fn triangle((u, w) in vec_pair(8), seed in any::<u64>()) {
        prop_assume!(nonzero(&w));
        let wv = WeightVector::new(w).unwrap();
        let v: Vec<f64> = u.iter().enumerate().map(|(i, x)| x * ((seed >> (i % 60)) as f64 % 7.0 - 3.0)).collect();
        let s: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        let lhs = weighted_norm(&s, &wv).unwrap();
        let rhs = weighted_norm(&u, &wv).unwrap() + weighted_norm(&v, &wv).unwrap();
        prop_assert!(rel_le(lhs, rhs));
    }

    #[test]
    fn duality_pairing((u, w) in vec_pair(16), v0 in prop::collection::vec(-10.0..10.0f64, 16)) {
        prop_assume!(nonzero(&w));
        let wv = WeightVector::new(w).unwrap();
        let v = &v0[..u.len()];
        let lhs: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        let rhs = dual_weighted_norm(&u, &wv).unwrap() * weighted_norm(v, &wv).unwrap();
        prop_assert!(lhs <= rhs + 1e-10 * rhs.max(1.0));
    }

    #[test]
    fn sandwich((x, w) in vec_pair(16), s in -3.0..3.0f64) {
        prop_assume!(nonzero(&w));
        let w: Vec<f64> = w.iter().map(|v| v * 10f64.powf(s)).collect();
        let wv = WeightVector::new(w).unwrap();
        let (lo, hi) = norm_sandwich_bounds(&wv);
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let n = weighted_norm(&x, &wv).unwrap();
        prop_assert!(rel_le(lo * nx, n));
        prop_assert!(rel_le(n, hi * nx));
    }

    #[test]
    fn weighted_norm_matches_direct_formula((u, w) in vec_pair(16)) {
        prop_assume!(nonzero(&w));
        let wv = WeightVector::new(w.clone()).unwrap();
        let a = weighted_norm(&u, &wv).unwrap();
        let b = weighted_norm_direct(&u, &w);
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }
}

#[test]
fn base_change_bound_dominates_sampled_ratios() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let q = 3.0;
    for _ in 0..20 {
        let pick = |rng: &mut rand_chacha::ChaCha8Rng| {
            let d: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            let r = rng.gen_range(1.0..q);
            WeightVector::new(d.iter().map(|x| x / n * r).collect()).unwrap()
        };
        let u = pick(&mut rng);
        let v = pick(&mut rng);
        let bound = base_change_ratio_bound(&u, &v, q).unwrap();
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            worst = worst.max(weighted_norm(&x, &u).unwrap() / weighted_norm(&x, &v).unwrap());
        }
        assert!(worst <= bound, "sampled ratio {worst} above bound {bound}");
    }
}

#[test]
fn brute_force_dual_never_exceeds_formula_and_attains_it() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for k in 0..20 {
        let d = 2 + k % 4;
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let exact = dual_weighted_norm(&v, &WeightVector::new(w.clone()).unwrap()).unwrap();
        let brute = dual_norm_bruteforce(&v, &w, 10_000, k as u64);
        assert!(brute <= exact + 1e-10, "{brute} > {exact}");
        assert!((brute - exact).abs() <= 1e-9 * exact.max(1.0), "{brute} vs {exact}");
    }
    assert_eq!(dual_norm_bruteforce(&[0.0, 0.0], &[1.0, 0.0], 10_000, 0), 0.0);
}
