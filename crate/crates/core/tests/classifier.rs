use contramap::classifier::{fit, predict};
use contramap::datasets::{generate_toy, split_train_test, ToyKind};
use contramap::geometry::{default_gamma, grid_hinges, Points};
use contramap::optim::TrainConfig;
use contramap::sampling::{augment_with_noise, LabeledDataset, NoiseSpec, FREE};

fn moons_model() -> (LabeledDataset, contramap::classifier::SoftmaxMapModel) {
    let data = generate_toy(ToyKind::Moons, 600, 0.1, 2).unwrap();
    let hinges = grid_hinges(&data.bounds, 0.3, default_gamma(0.3)).unwrap();
    let aug = augment_with_noise(&data, &NoiseSpec::occupancy(2)).unwrap();
    let model = fit(&aug, &hinges, &TrainConfig::default()).unwrap().model;
    (data, model)
}

#[test]
fn moons_test_accuracy() {
    let data = generate_toy(ToyKind::Moons, 2000, 0.1, 0).unwrap();
    let (train, test) = split_train_test(&data, 0.8, 0).unwrap();
    let hinges = grid_hinges(&train.bounds, 0.25, default_gamma(0.25)).unwrap();
    let aug = augment_with_noise(&train, &NoiseSpec::occupancy(0)).unwrap();
    let model = fit(&aug, &hinges, &TrainConfig::default()).unwrap().model;
    let pred = predict(&model, &test.points).unwrap().argmax_known();
    let acc = pred.iter().zip(&test.labels).filter(|(p, l)| p == l).count() as f64 / test.len() as f64;
    assert!(acc >= 0.97, "accuracy {acc}");
}

#[test]
fn far_queries_are_uncertain() {
    let (data, model) = moons_model();
    let extent = (0..2).map(|a| data.bounds.extent(a)).fold(0.0, f64::max);
    let c = data.bounds.centre();
    let far = Points::from_rows(
        2,
        &[[c[0] + 10.0 * extent, c[1]], [c[0], c[1] - 12.0 * extent], [c[0] - 15.0 * extent, c[1] + 15.0 * extent]],
    )
    .unwrap();
    let p = predict(&model, &far).unwrap();
    for row in p.rows() {
        let (known, noise) = row.split_at(row.len() - 1);
        assert!(noise[0] > known.iter().cloned().fold(0.0, f64::max), "{row:?}");
    }
}

#[test]
fn deep_free_queries_are_free() {
    // A dense ring of free samples around an occupied core.
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for i in 0..40 {
        for j in 0..40 {
            let (x, y) = (-2.0 + 0.1 * i as f64, -2.0 + 0.1 * j as f64);
            pts.push([x, y]);
            labels.push(if x.hypot(y) < 0.5 { 2 } else { FREE });
        }
    }
    let data = LabeledDataset::new(Points::from_rows(2, &pts).unwrap(), labels, 2).unwrap();
    let hinges = grid_hinges(&data.bounds, 0.4, default_gamma(0.4)).unwrap();
    let aug = augment_with_noise(&data, &NoiseSpec::occupancy(1)).unwrap();
    let model = fit(&aug, &hinges, &TrainConfig::default()).unwrap().model;
    let q = Points::from_rows(2, &[[-1.2, -1.2], [1.2, 1.2], [1.2, -1.2]]).unwrap();
    assert_eq!(predict(&model, &q).unwrap().argmax_known(), vec![FREE; 3]);
}

#[test]
fn refits_are_bitwise_identical() {
    let (_, a) = moons_model();
    let (_, b) = moons_model();
    let bits = |m: &contramap::classifier::SoftmaxMapModel| m.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}
