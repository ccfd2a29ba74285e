use neuron_landscape::activations::{builtin, builtin_sigmoidal};
use neuron_landscape::distributions::{Family, MarginalSpec};
use neuron_landscape::instances::{trap_ramp_model, Base, LabelModel};
use neuron_landscape::landscape::*;
use neuron_landscape::loss::{population_loss_quadrature, LossSpec};
use neuron_landscape::numeric::{dot, norm2, sub};
use neuron_landscape::optimizer::{schedule_for, ScheduleConstants};
use proptest::prelude::*;

fn square() -> MarginalSpec {
    MarginalSpec::new(Family::UniformSquare { half_width: 2.0 }, 2)
}

fn hat(eps: f64) -> LabelModel {
    LabelModel::clean(Base::HatRamp { eps })
}

fn ramp_spec(rho: f64) -> LossSpec {
    LossSpec { rho, ..LossSpec::plain(builtin("ramp", None).unwrap()) }
}

#[test]
fn bad_point_is_stationary_without_regularization() {
    let m = MarginalSpec::gaussian(2);
    let u = [-10.0, 0.0];
    let v = check_at(&m, &hat(0.1), &ramp_spec(0.0), &u, 0.1);
    assert!(v.is_approx_stationary, "{v:?}");
    assert!(v.loss >= 0.45);
    assert_eq!(v.regime, Regime::Far);
}

#[test]
fn scheduled_regularization_breaks_the_bad_point() {
    let m = MarginalSpec::gaussian(2);
    let sig = builtin_sigmoidal("ramp").unwrap();
    let s = schedule_for(&sig, m.l, m.r, 0.1, &ScheduleConstants::default()).unwrap();
    let v = check_at(&m, &hat(0.1), &ramp_spec(s.rho), &[-10.0, 0.0], 0.1);
    assert!(!v.is_approx_stationary);
}

#[test]
fn target_of_mild_instance_is_stationary() {
    let m = MarginalSpec::gaussian(2);
    let act = builtin("logistic", None).unwrap();
    let labels = LabelModel::clean(Base::Neuron { act: act.clone(), w_star: vec![1.0, 0.5] });
    let v = check_at(&m, &labels, &LossSpec::plain(act), &[1.0, 0.5], 0.01);
    assert!(v.is_approx_stationary);
    assert!(v.loss < 1e-12);
}

fn check_at(m: &MarginalSpec, labels: &LabelModel, spec: &LossSpec, w: &[f64], eps: f64) -> StationarityVerdict {
    stationarity_check(m, labels, spec, m.r, 1.0, w, eps, &StationarityParams::default(), &Oracle::quadrature()).unwrap()
}

#[test]
fn unbounded_alignment_holds_and_excludes() {
    let m = MarginalSpec::gaussian(2);
    let act = builtin("relu", None).unwrap();
    let ws = vec![0.6, 0.8];
    let labels = LabelModel::clean(Base::Neuron { act: act.clone(), w_star: ws.clone() });
    let spec = LossSpec::plain(act);
    let p = UnboundedAlignmentParams { l: m.l, r: m.r, alpha: 1.0, lambda: 1.0, c_floor: 1.0 };
    let q = Oracle::quadrature();
    for w in [[0.0, 0.1], [1.0, 0.0], [2.0, 2.0], [0.6, 1.2], [-0.3, 1.2]] {
        let rep = alignment_check_unbounded(&m, &labels, &spec, &p, &w, &ws, 1e-4, &q).unwrap();
        assert_eq!(rep.pass, Some(true), "{w:?}: {rep:?}");
        assert!(rep.ratio >= UNBOUNDED_ALIGNMENT - 0.05);
    }
    let opposite = alignment_check_unbounded(&m, &labels, &spec, &p, &[-0.6, -0.8], &ws, 1e-4, &q).unwrap();
    assert_eq!(opposite.pass, None);
    let same = alignment_check_unbounded(&m, &labels, &spec, &p, &ws, &ws, 1e-4, &q).unwrap();
    assert_eq!(same.pass, None);
}

#[test]
fn outer_case_points_downhill_along_w() {
    let m = MarginalSpec::gaussian(2);
    let act = builtin("logistic", None).unwrap();
    let sig = act.as_sigmoidal().unwrap().clone();
    let ws = vec![0.6, 0.8];
    let labels = LabelModel::clean(Base::Neuron { act: act.clone(), w_star: ws.clone() });
    let s = schedule_for(&sig, m.l, m.r, 0.01, &ScheduleConstants::default()).unwrap();
    let p = SigmoidalAlignmentParams { r: m.r, kappa: s.kappa, c_prime: 0.01 };
    let w: Vec<f64> = ws.iter().map(|a| 3.0 * a).collect();
    let rep = alignment_check_sigmoidal(&m, &labels, &LossSpec::plain(act), &p, &w, &ws, 0.01, &Oracle::quadrature())
        .unwrap();
    assert_eq!(rep.case.as_deref(), Some("case3"));
    assert!(rep.inner > 0.0);
}

#[test]
fn radius_scan_finds_the_target_only_along_it() {
    let m = MarginalSpec::gaussian(2);
    let act = builtin("ramp", None).unwrap();
    let labels = LabelModel::clean(Base::Neuron { act: act.clone(), w_star: vec![2.0, 0.0] });
    let spec = LossSpec::plain(act);
    let eps = 0.1;
    let q = Oracle::quadrature();
    let along = radius_scan(&m, &labels, &spec, m.l, 0.01, eps, &[1.0, 0.0], 1.0 / eps, 40, &q).unwrap();
    assert_eq!(along.points.len(), 41);
    let t = along.first_t.expect("target reached");
    assert!(t <= 1.0 / eps);
    let across = radius_scan(&m, &labels, &spec, m.l, 0.01, eps, &[0.0, 1.0], 1.0 / eps, 40, &q).unwrap();
    assert_eq!(across.first_t, None);
}

#[test]
fn coarse_grid_has_res_squared_rows() {
    let act = builtin("ramp", None).unwrap();
    let labels = LabelModel::clean(Base::Neuron { act: act.clone(), w_star: vec![1.0, 0.0] });
    let rows = loss_surface_grid(&square(), &labels, &LossSpec::plain(act), -2.0, 2.0, 3, &Oracle::quadrature()).unwrap();
    assert_eq!(rows.len(), 9);
    assert_eq!(rows[0][..2], [-2.0, -2.0]);
    assert_eq!(rows[1][..2], [-2.0, 0.0]);
    assert_eq!(rows[8][..2], [2.0, 2.0]);
    let mut buf = Vec::new();
    write_grid_csv(&rows, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 10);
}

fn minima(labels: &LabelModel, res: usize) -> (Vec<StationaryCell>, f64) {
    let act = builtin("ramp", None).unwrap();
    let spec = LossSpec::plain(act);
    let q = Oracle::quadrature();
    let g = grid_with_gradients(&square(), labels, &spec, -2.0, 2.0, res, &q).unwrap();
    (grid_stationary_cells(&g, res, &square(), labels, &spec, &q).unwrap(), 4.0 / (res - 1) as f64)
}

#[test]
fn realizable_surface_has_a_single_minimum_at_target() {
    let act = builtin("ramp", None).unwrap();
    let labels = LabelModel::clean(Base::Neuron { act, w_star: vec![1.0, 0.0] });
    let (cells, cell) = minima(&labels, 41);
    assert_eq!(cells.len(), 1, "{cells:?}");
    assert!(norm2(&sub(&cells[0].refined_w, &[1.0, 0.0])) <= cell);
}

#[test]
fn trapped_surface_has_a_minimum_opposite_the_target() {
    let (cells, cell) = minima(&trap_ramp_model(), 41);
    assert!(cells.len() >= 2, "{cells:?}");
    assert!(cells.iter().any(|c| norm2(&sub(&c.refined_w, &[-1.0, 0.0])) <= cell));
}

#[test]
fn hessian_at_bad_point_is_not_negative() {
    let m = MarginalSpec::gaussian(2);
    let labels = hat(0.1);
    let spec = ramp_spec(0.0);
    let h = hessian_probe(|w| population_loss_quadrature(&m, &labels, &spec, w), &[-10.0, 0.0], 1e-3 * 11.0).unwrap();
    assert!(h.asymmetry < 1e-6);
    assert!(h.min_eigenvalue() >= -1e-3, "{h:?}");
}

#[test]
fn hessian_of_half_squared_norm_is_identity() {
    let w = [0.4, -1.2, 2.0];
    let h = hessian_probe(|w| Ok(0.5 * dot(w, w)), &w, 1e-3 * (1.0 + norm2(&w))).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!((h.h[i][j] - if i == j { 1.0 } else { 0.0 }).abs() <= 1e-4);
        }
    }
}

#[test]
fn hessian_of_quadratic_is_exact() {
    let h = hessian_probe(|w| Ok(w[0] * w[0] + 3.0 * w[0] * w[1] - w[1] * w[1]), &[0.3, -0.2], 1e-3).unwrap();
    assert!((h.h[0][1] - 3.0).abs() < 1e-6);
    assert!((h.min_eigenvalue() + 13f64.sqrt()).abs() < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn noiseless_alignment_term_is_nonnegative(
        name in prop::sample::select(vec!["relu", "logistic", "tanh", "softplus", "ramp", "elu"]),
        w in prop::array::uniform2(-3.0f64..3.0),
        ws in prop::array::uniform2(-3.0f64..3.0),
    ) {
        let m = MarginalSpec::gaussian(2);
        let act = builtin(name, (name == "elu").then_some(1.0)).unwrap();
        let labels = LabelModel::clean(Base::Neuron { act: act.clone(), w_star: ws.to_vec() });
        let p = population_point(&m, &labels, &LossSpec::plain(act), &w, &Oracle::quadrature(), None).unwrap();
        let diff = sub(&w, &ws);
        prop_assert!(dot(&p.grad, &diff) >= -1e-9 * (1.0 + norm2(&diff)));
    }
}
