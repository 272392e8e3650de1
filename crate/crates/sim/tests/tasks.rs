use proptest::prelude::*;
use uupl_core::calibration::RewardFunction;
use uupl_core::FeaturePoint;
use uupl_sim::task::{driving_component, tabletop_mahalanobis_sq, TABLETOP_HILLS};
use uupl_sim::{ground_truth_eval, GroundTruthTask, SimError, TaskKind};

fn fp(v: &[f64]) -> FeaturePoint {
    FeaturePoint::new(v.to_vec()).unwrap()
}

#[test]
fn thermal_has_three_peaks_on_fine_grid() {
    let t = GroundTruthTask::new(TaskKind::Thermal).unwrap();
    let v = t.grid_values();
    assert_eq!(v.len(), 161);
    let peaks = (0..v.len()).filter(|&i| (i == 0 || v[i] > v[i - 1]) && (i + 1 == v.len() || v[i] > v[i + 1])).count();
    assert_eq!(peaks, 3);
    let best = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    assert!((t.evaluation_grid()[best].coords()[0] - 18.5).abs() < 1e-9);
}

#[test]
fn tabletop_has_three_peaks() {
    let t = GroundTruthTask::new(TaskKind::Tabletop).unwrap();
    let n = t.grid_points_per_dim();
    let v = t.grid_values();
    let at = |i: isize, j: isize| -> Option<f64> {
        (0..n as isize).contains(&i).then_some(())?;
        (0..n as isize).contains(&j).then_some(())?;
        Some(v[i as usize * n + j as usize])
    };
    let mut peaks = 0;
    for i in 0..n as isize {
        for j in 0..n as isize {
            let c = at(i, j).unwrap();
            let strict = (-1..=1)
                .flat_map(|a| (-1..=1).map(move |b| (a, b)))
                .filter(|&d| d != (0, 0))
                .all(|(a, b)| at(i + a, j + b).is_none_or(|o| c > o));
            peaks += strict as usize;
        }
    }
    assert_eq!(peaks, 3);
}

fn hills_unchecked(x: [f64; 2]) -> f64 {
    tabletop_mahalanobis_sq(x).iter().zip(TABLETOP_HILLS).map(|(m, (_, _, h))| h * (-0.5 * m).exp()).sum()
}

#[test]
fn tabletop_tails_are_small() {
    // the hills are broad, so no point of the box is three bandwidths from
    // all of them; scan the surrounding plane instead
    let t = GroundTruthTask::new(TaskKind::Tabletop).unwrap();
    let peak = t.range().1;
    let (mut worst3, mut worst35) = (0.0f64, 0.0f64);
    for i in 0..=400 {
        for j in 0..=400 {
            let x = [-40.0 + 0.2 * i as f64, -40.0 + 0.2 * j as f64];
            let m = tabletop_mahalanobis_sq(x).into_iter().fold(f64::INFINITY, f64::min).sqrt();
            let v = hills_unchecked(x) / peak;
            if m >= 3.0 {
                worst3 = worst3.max(v);
            }
            if m >= 3.5 {
                worst35 = worst35.max(v);
            }
        }
    }
    assert!(worst35 < 0.01, "{worst35}");
    assert!(worst3 < 0.02, "{worst3}");
}

#[test]
fn evaluation_matches_grid_cache() {
    for kind in TaskKind::ALL {
        let t = GroundTruthTask::new(kind).unwrap();
        for k in [0, 7, t.grid_values().len() / 2, t.grid_values().len() - 1] {
            let x = &t.evaluation_grid()[k];
            assert_eq!(ground_truth_eval(&t, x).unwrap(), t.grid_values()[k]);
        }
    }
}

#[test]
fn grids_have_expected_sizes() {
    let sizes: Vec<usize> =
        TaskKind::ALL.iter().map(|&k| GroundTruthTask::new(k).unwrap().evaluation_grid().len()).collect();
    assert_eq!(sizes, vec![161, 101 * 101, 9usize.pow(4)]);
}

#[test]
fn driving_span_is_sum_of_component_spans() {
    let t = GroundTruthTask::new(TaskKind::Driving).unwrap();
    let (lo, hi) = t.range();
    let grid_max = t.grid_values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let grid_min = t.grid_values().iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(lo <= grid_min && hi >= grid_max);
    assert!(hi - lo < (grid_max - grid_min) * 1.2);
}

#[test]
fn out_of_domain_is_rejected() {
    let t = GroundTruthTask::new(TaskKind::Thermal).unwrap();
    assert!(matches!(ground_truth_eval(&t, &fp(&[9.99])), Err(SimError::OutOfDomain(_))));
    assert!(matches!(ground_truth_eval(&t, &fp(&[26.01])), Err(SimError::OutOfDomain(_))));
    assert!(ground_truth_eval(&t, &fp(&[10.0, 1.0])).is_err());
    let d = GroundTruthTask::new(TaskKind::Driving).unwrap();
    assert!(ground_truth_eval(&d, &fp(&[1.0, 1.0, 1.0, 5.5])).is_err());
    assert!(d.eval(&fp(&[1.0, 1.0, 1.0, -0.1])).is_err());
}

#[test]
fn task_names_parse() {
    for k in TaskKind::ALL {
        assert_eq!(k.name().parse::<TaskKind>().unwrap(), k);
    }
    assert!("kitchen".parse::<TaskKind>().is_err());
}

proptest! {
    #[test]
    fn driving_is_additive(x in prop::array::uniform4(0.0f64..5.0), i in 0usize..4, v in 0.0f64..5.0) {
        let t = GroundTruthTask::new(TaskKind::Driving).unwrap();
        let mut y = x;
        y[i] = v;
        let dv = ground_truth_eval(&t, &fp(&y)).unwrap() - ground_truth_eval(&t, &fp(&x)).unwrap();
        let dc = driving_component(i, v) - driving_component(i, x[i]);
        prop_assert!((dv - dc).abs() < 1e-12);
    }

    #[test]
    fn evaluation_is_deterministic(x in 10.0f64..=26.0) {
        let t = GroundTruthTask::new(TaskKind::Thermal).unwrap();
        prop_assert_eq!(ground_truth_eval(&t, &fp(&[x])).unwrap(), ground_truth_eval(&t, &fp(&[x])).unwrap());
    }
}
