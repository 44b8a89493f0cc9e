use contramap::datasets::{
    generate_toy, load_labeled_points, parse_carmen_log, scans_to_dataset, scene_training_data, simulate_scans,
    write_carmen, write_labeled_ply, FloorPlan, PointFormat, SceneSpec, ToyKind,
};
use contramap::sampling::{FREE, OCCUPIED};

#[test]
fn simulated_log_survives_a_carmen_round_trip() {
    let plan = FloorPlan::office();
    let poses = FloorPlan::office_trajectory(3.0);
    let scans = simulate_scans(&plan, &poses, 45, 40.0, 0.01, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("office.log");
    std::fs::write(&path, write_carmen(&scans)).unwrap();
    let back = parse_carmen_log(&path).unwrap();
    assert_eq!(back.len(), scans.len());
    let a = scans_to_dataset(&scans, 0.75, 1, 9).unwrap();
    let b = scans_to_dataset(&back, 0.75, 1, 9).unwrap();
    assert_eq!(a.labels, b.labels);
    for (p, q) in a.points.iter().zip(b.points.iter()) {
        assert!((p[0] - q[0]).abs() < 1e-6 && (p[1] - q[1]).abs() < 1e-6);
    }
    // Free samples sit in open cells; a few touch wall cell edges.
    let free: Vec<&[f64]> = a.points.iter().zip(&a.labels).filter(|(_, &l)| l == FREE).map(|(p, _)| p).collect();
    let inside = free.iter().filter(|p| plan.occupied(p[0], p[1])).count();
    assert!((inside as f64) < 0.01 * free.len() as f64, "{inside} of {}", free.len());
    assert!(a.labels.contains(&OCCUPIED));
}

#[test]
fn csv_and_ply_files_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_toy(ToyKind::Circles, 50, 0.0, 1).unwrap();
    let csv = dir.path().join("c.csv");
    data.write_csv(&csv).unwrap();
    let back = load_labeled_points(&csv, PointFormat::Csv).unwrap();
    assert_eq!(back.labels, data.labels);
    assert_eq!(back.points, data.points);

    let spec = SceneSpec::random_tabletop(2, 4, 3).unwrap();
    let (scene, _) = scene_training_data(&spec, 300, 0.05, 3).unwrap();
    let ply = dir.path().join("s.ply");
    write_labeled_ply(&scene, &ply).unwrap();
    let back = load_labeled_points(&ply, PointFormat::Ply).unwrap();
    assert_eq!(back.labels, scene.labels);
    assert_eq!(back.len(), scene.len());
}

#[test]
fn scene_data_labels_match_the_oracle() {
    let spec = SceneSpec::random_tabletop(3, 5, 8).unwrap();
    let (data, oracle) = scene_training_data(&spec, 1000, 0.04, 8).unwrap();
    assert_eq!(data.num_known_classes, 5);
    for (p, &l) in data.points.iter().zip(&data.labels) {
        assert!(oracle.workspace().contains(p));
        if l == FREE {
            assert!(!oracle.occupied([p[0], p[1], p[2]]));
        } else {
            assert!(oracle.sdf([p[0], p[1], p[2]]).abs() < 1e-6, "{p:?}");
        }
    }
}
