use neuron_landscape::activations::{builtin, normalize_at_zero, Activation};
use neuron_landscape::distributions::MarginalSpec;
use neuron_landscape::instances::{make_realizable, Base, LabelModel, LabeledDataset, Noise};
use neuron_landscape::loss::*;
use neuron_landscape::numeric::{dot, norm2};
use neuron_landscape::quadrature::QuadRule;
use neuron_oracle::{cross_oracle, fd_gradient, grid_loss, mc_gaussian_loss, std_normal_density, vector_rel_diff, Tolerance};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NAMES: [&str; 8] = ["logistic", "tanh", "ramp", "erf", "relu", "softplus", "leaky_relu", "elu"];

fn act(i: usize) -> Activation {
    let n = NAMES[i % NAMES.len()];
    let shape = match n {
        "leaky_relu" => Some(0.2),
        "elu" => Some(1.0),
        _ => None,
    };
    builtin(n, shape).unwrap()
}

fn noisy(ds: &LabeledDataset, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ds.clone();
    for y in out.y.iter_mut() {
        *y += rng.gen_range(-0.5..0.5);
    }
    out
}

proptest! {
    #[test]
    fn truncation_is_clamp(y in prop::collection::vec(-100.0..100.0f64, 1..50), m in 0.01..50.0f64) {
        let t = truncate_labels(&y, m).unwrap();
        for (a, b) in y.iter().zip(&t) {
            prop_assert!(b.abs() <= m);
            prop_assert!(a * b >= 0.0);
            if a.abs() <= m {
                prop_assert_eq!(a, b);
            } else {
                prop_assert_eq!(b.abs(), m);
            }
        }
    }

    #[test]
    fn regularizer_is_additive(seed in any::<u64>(), rho in 0.0..5.0f64, k in 0usize..8) {
        let a = act(k);
        let m = MarginalSpec::gaussian(3);
        let ds = noisy(&make_realizable(&m, &a, &[0.4, -0.3, 0.8], 64, seed).unwrap(), seed);
        let w = [0.3, 0.1, -0.7];
        let plain = LossSpec::plain(a.clone());
        let reg = LossSpec { rho, ..plain.clone() };
        let (l0, g0) = loss_and_gradient(&ds.x, &ds.y, &plain, &w).unwrap();
        let (l1, g1) = loss_and_gradient(&ds.x, &ds.y, &reg, &w).unwrap();
        prop_assert!((l1 - l0 - 0.5 * rho * dot(&w, &w)).abs() <= 1e-12 * l1.max(1.0));
        for j in 0..3 {
            prop_assert!((g1[j] - g0[j] - rho * w[j]).abs() <= 1e-12 * g1[j].abs().max(1.0));
        }
    }

    #[test]
    fn gradient_matches_finite_difference(seed in any::<u64>(), k in 0usize..8, rho in 0.0..1.0f64) {
        let a = act(k);
        let d = 1 + (seed % 4) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ws: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ds = noisy(&make_realizable(&MarginalSpec::gaussian(d), &a, &ws, 200, seed).unwrap(), seed ^ 1);
        let spec = LossSpec { act: a.clone(), rho, trunc_m: Some(3.0) };
        let kink_gap = (0..ds.n())
            .flat_map(|i| a.kinks().iter().map(move |k| (i, *k)))
            .map(|(i, k)| (dot(&w, ds.x.row(i)) - k).abs())
            .fold(f64::INFINITY, f64::min);
        prop_assume!(kink_gap > 1e-4);
        let g = empirical_gradient(&ds, &spec, &w).unwrap();
        let h = 1e-6 * (1.0 + norm2(&w));
        let fd = fd_gradient(|v| empirical_loss(&ds, &spec, v).unwrap(), &w, h);
        prop_assert!(vector_rel_diff(&g, &fd) <= 1e-6, "{:?} vs {:?}", g, fd);
    }

    #[test]
    fn normalization_leaves_loss_unchanged(seed in any::<u64>(), k in 0usize..8) {
        let a = act(k);
        let m = MarginalSpec::gaussian(2);
        let ds = noisy(&make_realizable(&m, &a, &[0.6, 0.2], 128, seed).unwrap(), seed);
        let w = [0.5, -0.4];
        let before = empirical_loss(&ds, &LossSpec::plain(a.clone()), &w).unwrap();
        let (shifted, off) = normalize_at_zero(&a);
        let mut ds2 = ds.clone();
        for y in ds2.y.iter_mut() {
            *y -= off;
        }
        let after = empirical_loss(&ds2, &LossSpec::plain(shifted), &w).unwrap();
        prop_assert!((before - after).abs() <= 1e-12, "{before} vs {after}");
    }
}

#[test]
fn realizable_loss_and_gradient_vanish() {
    for k in 0..8 {
        let a = act(k);
        let ws = [0.5, -1.0, 0.25];
        let ds = make_realizable(&MarginalSpec::gaussian(3), &a, &ws, 500, 3).unwrap();
        let spec = LossSpec::plain(a);
        assert_eq!(empirical_loss(&ds, &spec, &ws).unwrap(), 0.0);
        assert!(empirical_gradient(&ds, &spec, &ws).unwrap().iter().all(|g| *g == 0.0));
    }
}

#[test]
fn zero_weights_give_label_energy() {
    let relu = builtin("relu", None).unwrap();
    let ds = noisy(&make_realizable(&MarginalSpec::gaussian(2), &relu, &[1.0, 0.0], 300, 4).unwrap(), 9);
    let e: f64 = ds.y.iter().map(|y| y * y).sum::<f64>() / (2.0 * ds.n() as f64);
    let l = empirical_loss(&ds, &LossSpec::plain(relu), &[0.0, 0.0]).unwrap();
    assert!((l - e).abs() < 1e-14);
}

#[test]
fn self_consistent_labels_have_zero_mc_loss() {
    let a = act(0);
    let labels = LabelModel::clean(Base::Neuron { act: a.clone(), w_star: vec![0.7, 0.1] });
    let r = population_loss_mc(&MarginalSpec::gaussian(2), &labels, &LossSpec::plain(a), &[0.7, 0.1], 10_000, 1).unwrap();
    assert!(r.estimate <= 3.0 * r.std_err + 1e-15);
}

#[test]
fn mc_std_err_halves_with_four_times_the_samples() {
    let labels = LabelModel::clean(Base::HatRamp { eps: 0.1 });
    let spec = LossSpec::plain(act(2));
    let m = MarginalSpec::gaussian(2);
    let a = population_loss_mc(&m, &labels, &spec, &[-10.0, 0.0], 100_000, 2).unwrap();
    let b = population_loss_mc(&m, &labels, &spec, &[-10.0, 0.0], 200_000, 2).unwrap();
    let ratio = b.std_err / a.std_err;
    assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() <= 0.2 * std::f64::consts::FRAC_1_SQRT_2, "{ratio}");
    assert!(population_loss_mc(&m, &labels, &spec, &[0.0, 0.0], 999, 2).is_err());
}

#[test]
fn steep_ramp_against_zero_labels_tends_to_half() {
    let labels = LabelModel::clean(Base::Neuron { act: act(4), w_star: vec![0.0, 0.0] });
    let m = MarginalSpec::gaussian(2);
    let at = |t: f64| population_loss_quadrature(&m, &labels, &LossSpec::plain(act(2)), &[t, 0.0]).unwrap();
    let exact = |t: f64| 0.5 * (1.0 - 4.0 / (3.0 * t * (2.0 * std::f64::consts::PI).sqrt()));
    assert!((at(1e3) - exact(1e3)).abs() <= 1e-8, "{}", at(1e3));
    assert!((at(1e4) - 0.5).abs() <= 1e-4, "{}", at(1e4));
}

#[test]
fn hat_ramp_label_energy_two_ways() {
    let labels = LabelModel::clean(Base::HatRamp { eps: 0.1 });
    let zero = builtin("relu", None).unwrap();
    let q = population_loss_quadrature(&MarginalSpec::gaussian(2), &labels, &LossSpec::plain(zero.clone()), &[0.0, 0.0]).unwrap();
    let g = grid_loss(&labels, &zero, &[0.0], std_normal_density, 10.0, 400_000);
    let r = cross_oracle("0.5 E[hat^2]", q, g, 1e-6, Tolerance::Absolute);
    assert!(r.pass, "{r:?}");
}

#[test]
fn quadrature_agrees_with_independent_mc_on_random_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let m = MarginalSpec::gaussian(2);
    let mut agree = 0;
    for k in 0..20 {
        let a = act(k);
        let ws: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let w: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let noise = match k % 3 {
            0 => Noise::None,
            1 => Noise::Shift { threshold: 1.0, amount: 0.3 },
            _ => Noise::RandomSign { amp: 0.2, seed: k as u64 },
        };
        let labels = LabelModel { base: Base::Neuron { act: act(k + 3), w_star: ws }, noise };
        let q = population_loss_quadrature(&m, &labels, &LossSpec::plain(a.clone()), &w).unwrap();
        let (mc, se) = mc_gaussian_loss(&labels, &a, &w, 200_000, k as u64);
        if (q - mc).abs() <= 4.0 * se {
            agree += 1;
        }
    }
    assert!(agree >= 19, "only {agree}/20 within 4 standard errors");
}

#[test]
fn quadrature_gradient_matches_finite_difference_of_quadrature_loss() {
    let m = MarginalSpec::gaussian(2);
    let labels = LabelModel::clean(Base::HatRamp { eps: 0.1 });
    let spec = LossSpec { act: act(0), rho: 0.01, trunc_m: None };
    let rule = QuadRule::new(0.25, 10);
    let w = [0.7, -0.4];
    let (_, g) = population_loss_grad_quadrature(&m, &labels, &spec, &w, &rule).unwrap();
    let fd = fd_gradient(|v| population_loss_grad_quadrature(&m, &labels, &spec, v, &rule).unwrap().0, &w, 1e-5);
    assert!(vector_rel_diff(&g, &fd) <= 1e-6, "{g:?} vs {fd:?}");
}

#[test]
fn parameter_distance_bound_dominates_quadrature() {
    let m = MarginalSpec::gaussian(2);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for name in ["logistic", "tanh", "erf", "ramp"] {
        let a = builtin(name, None).unwrap();
        let s = a.as_sigmoidal().unwrap().clone();
        for _ in 0..50 {
            let w: Vec<f64> = (0..2).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let labels = LabelModel::clean(Base::Neuron { act: a.clone(), w_star: v.clone() });
            let exact = 2.0 * population_loss_quadrature(&m, &labels, &LossSpec::plain(a.clone()), &w).unwrap();
            let bound = param_vs_loss_bound(&s, m.l, m.r, &w, &v).unwrap();
            assert!(exact <= bound + 1e-8, "{name}: {exact} > {bound} at w={w:?}, v={v:?}");
        }
    }
}
