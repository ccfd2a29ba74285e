use neuron_landscape::distributions::MarginalSpec;
use neuron_landscape::halfspace::*;
use neuron_landscape::instances::{flip_halfspace_slab, make_halfspace};
use proptest::prelude::*;

fn quick() -> HalfspaceConfig {
    HalfspaceConfig { t: 200, ..HalfspaceConfig::default() }
}

#[test]
fn clean_halfspace_is_learned() {
    let m = MarginalSpec::gaussian(3);
    let ws = [1.0, -2.0, 0.5];
    let train = make_halfspace(&m, &ws, 4000, 1).unwrap();
    let test = make_halfspace(&m, &ws, 20_000, 2).unwrap();
    let r = learn_halfspace(&train, &test, 0.01, 3, &quick()).unwrap();
    assert!(r.misclassification < 0.05, "{}", r.misclassification);
    assert!(r.misclassification <= r.zero_one_bound + 1e-9);
    assert_eq!(r.levels.len(), r.val_losses.len());
}

#[test]
fn slab_noise_respects_the_bound() {
    let m = MarginalSpec::gaussian(2);
    let ws = [0.0, 1.0];
    let train = flip_halfspace_slab(&make_halfspace(&m, &ws, 4000, 5).unwrap(), 0.05).unwrap();
    let test = flip_halfspace_slab(&make_halfspace(&m, &ws, 20_000, 6).unwrap(), 0.05).unwrap();
    let r = learn_halfspace(&train, &test, 0.05, 7, &quick()).unwrap();
    assert!(0.5 * r.misclassification <= r.ramp_loss + 1e-9);
}

#[test]
fn constant_labels_give_constant_classifier() {
    let m = MarginalSpec::gaussian(2);
    let mut train = make_halfspace(&m, &[1.0, 0.0], 100, 1).unwrap();
    train.y.iter_mut().for_each(|y| *y = -1.0);
    let mut test = make_halfspace(&m, &[1.0, 0.0], 100, 2).unwrap();
    test.y.iter_mut().for_each(|y| *y = -1.0);
    let r = learn_halfspace(&train, &test, 0.01, 0, &quick()).unwrap();
    assert_eq!(r.constant_label, Some(-1.0));
    assert_eq!(r.misclassification, 0.0);
    assert_eq!(r.predict(&[5.0, 5.0]), -1.0);
}

#[test]
fn non_binary_labels_rejected() {
    let m = MarginalSpec::gaussian(2);
    let mut train = make_halfspace(&m, &[1.0, 0.0], 100, 1).unwrap();
    let test = train.clone();
    train.y[7] = 0.5;
    assert!(learn_halfspace(&train, &test, 0.01, 0, &quick()).is_err());
    assert!(learn_halfspace(&test, &train, 0.01, 0, &quick()).is_err());
}

proptest! {
    #[test]
    fn sign_is_scale_invariant(
        w in prop::collection::vec(-3.0f64..3.0, 3),
        x in prop::collection::vec(-3.0f64..3.0, 3),
        c in 1e-3f64..1e3,
    ) {
        let cw: Vec<f64> = w.iter().map(|a| a * c).collect();
        let d: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
        prop_assume!(d.abs() > 1e-9);
        prop_assert_eq!(predict_sign(&w, &x), predict_sign(&cw, &x));
    }

    #[test]
    fn half_error_below_ramp_loss(w in prop::collection::vec(-3.0f64..3.0, 2), seed in 0u64..1000, rate in 0.0f64..0.2) {
        let m = MarginalSpec::gaussian(2);
        let ds = make_halfspace(&m, &[1.0, 1.0], 300, seed).unwrap();
        let ds = if rate > 0.0 { flip_halfspace_slab(&ds, rate).unwrap() } else { ds };
        let res = HalfspaceResult {
            w_hat: w, ramp_loss: 0.0, misclassification: 0.0, zero_one_bound: 0.0,
            constant_label: None, levels: vec![], val_losses: vec![],
        };
        let (err, ramp) = evaluate(&res, &ds);
        prop_assert!(0.5 * err <= ramp + 1e-9);
    }
}
