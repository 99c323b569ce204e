use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relation_discovery::scene::*;

fn families() -> [TaskFamily; 2] {
    [TaskFamily::two_to_three_core(), TaskFamily::two_to_four_core()]
}

fn check_consistent(o: &Observation) {
    let mut painted = [[0u8; GRID]; GRID];
    for (i, a) in o.objects.iter().enumerate() {
        assert!(!a.mask.is_empty());
        assert_eq!(a.mask.bbox(), Some(a.bbox));
        for b in &o.objects[i + 1..] {
            assert!(!a.mask.overlaps(&b.mask), "masks overlap");
        }
        for (r, c) in a.mask.cells() {
            painted[r][c] = a.color;
        }
    }
    assert_eq!(painted, o.grid, "grid differs from the union of masks");
}

#[test]
fn generated_edges_match_the_oracle_and_the_task_closure() {
    for family in families() {
        for spec in &family.tasks {
            let closure = spec.closure();
            for i in 0..1000 / family.tasks.len() + 1 {
                let mut rng = scene_rng(7, spec.task_id, i);
                let o = generate_observation(spec, i % 3, &mut rng).unwrap();
                check_consistent(&o);
                let core = o.core_indices();
                assert_eq!(core.len(), spec.n_core);
                assert_eq!(o.edges, oracle_edges(&o.objects, &core));
                assert_eq!(o.edges.len(), closure.len());
            }
        }
    }
}

#[test]
fn dataset_generation_is_deterministic_and_thread_independent() {
    let family = TaskFamily::two_to_three_core();
    let a = generate_dataset(&family, 5, DistractorPolicy::ZeroToTwo, 3, 1).unwrap();
    let b = generate_dataset(&family, 5, DistractorPolicy::ZeroToTwo, 3, 4).unwrap();
    assert_eq!(a, b);
    let c = generate_dataset(&family, 5, DistractorPolicy::ZeroToTwo, 4, 1).unwrap();
    assert_ne!(a, c);
    assert_eq!(a.len(), 30);
    for (i, o) in a.iter().enumerate() {
        assert_eq!(o.obs_id, i);
        assert_eq!(o.task_id, family.tasks[i / 5].task_id);
    }
}

#[test]
fn distractor_policy_bounds_object_counts() {
    let family = TaskFamily::two_to_four_core();
    for (policy, extra) in [(DistractorPolicy::None, 0..=0), (DistractorPolicy::One, 1..=1), (DistractorPolicy::ZeroToTwo, 0..=2)] {
        for o in generate_dataset(&family, 3, policy, 11, 1).unwrap() {
            let n_core = family.get(o.task_id).unwrap().n_core;
            assert!(extra.contains(&(o.objects.len() - n_core)));
        }
    }
}

#[test]
fn dataset_round_trips_through_jsonl() {
    let family = TaskFamily::two_to_four_core();
    let data = generate_dataset(&family, 2, DistractorPolicy::ZeroToTwo, 5, 1).unwrap();
    let mut buf = Vec::new();
    write_dataset_to(&mut buf, &data).unwrap();
    assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), data.len());
    let back = read_dataset_from(buf.as_slice()).unwrap();
    assert_eq!(back, data);
    let stripped = read_training_records_from(buf.as_slice()).unwrap();
    let expected: Vec<TrainingRecord> = data.iter().map(TrainingRecord::from).collect();
    assert_eq!(stripped, expected);
}

#[test]
fn training_loader_ignores_objects_and_edges() {
    let family = TaskFamily::two_to_three_core();
    let data = generate_dataset(&family, 1, DistractorPolicy::None, 5, 1).unwrap();
    let mut buf = Vec::new();
    write_dataset_to(&mut buf, &data[..1]).unwrap();
    let mut v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
    v["edges"] = serde_json::json!("garbage");
    v["objects"] = serde_json::json!([{"nonsense": true}]);
    let text = serde_json::to_string(&v).unwrap();
    assert!(read_dataset_from(text.as_bytes()).is_err());
    let records = read_training_records_from(text.as_bytes()).unwrap();
    assert_eq!(records[0], TrainingRecord::from(&data[0]));
}

#[test]
fn unknown_schema_version_is_rejected() {
    let family = TaskFamily::two_to_three_core();
    let data = generate_dataset(&family, 1, DistractorPolicy::None, 5, 1).unwrap();
    let mut buf = Vec::new();
    write_dataset_to(&mut buf, &data[..2]).unwrap();
    let text = String::from_utf8(buf).unwrap().replacen("\"schema_version\":1", "\"schema_version\":2", 2);
    let text = text.replacen("\"schema_version\":2", "\"schema_version\":1", 1);
    match read_dataset_from(text.as_bytes()) {
        Err(SceneError::SchemaVersion { line: 2, version: 2 }) => {}
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(
        read_training_records_from(text.as_bytes()),
        Err(SceneError::SchemaVersion { line: 2, .. })
    ));
}

#[test]
fn about_ninety_percent_of_draws_augment() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let applied = (0..1000).filter(|_| Augmentation::sample(&mut rng).is_some()).count();
    assert!((870..=930).contains(&applied), "{applied}");
}

#[test]
fn every_augmentation_kind_is_drawn() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut seen = [false; 7];
    for _ in 0..500 {
        if let Some(a) = Augmentation::sample(&mut rng) {
            let i = match a {
                Augmentation::FlipHorizontal => 0,
                Augmentation::FlipVertical => 1,
                Augmentation::Rotate90 => 2,
                Augmentation::Rotate180 => 3,
                Augmentation::Rotate270 => 4,
                Augmentation::Upscale2 => 5,
                Augmentation::Recolor(_) => 6,
            };
            seen[i] = true;
        }
    }
    assert!(seen.iter().all(|&s| s));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn augmentation_preserves_every_pairwise_relation(
        seed in any::<u64>(), big in any::<bool>(), task in 0usize..13, extra in 0usize..3,
    ) {
        let family = if big { TaskFamily::two_to_four_core() } else { TaskFamily::two_to_three_core() };
        let spec = &family.tasks[task % family.tasks.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let o = generate_observation(spec, extra, &mut rng).unwrap();
        let aug = loop {
            if let Some(a) = Augmentation::sample(&mut rng) {
                break a;
            }
        };
        let t = apply_to_observation(&o, &aug);
        check_consistent(&t);
        prop_assert_eq!(&t.edges, &o.edges);
        for a in 0..o.objects.len() {
            prop_assert_eq!(t.objects[a].mask.count() % o.objects[a].mask.count(), 0);
            for b in 0..o.objects.len() {
                if a != b {
                    prop_assert_eq!(
                        relations_between(&t.objects[a], &t.objects[b]),
                        relations_between(&o.objects[a], &o.objects[b])
                    );
                }
            }
        }
    }

    #[test]
    fn rendering_marks_exactly_each_objects_cells(seed in any::<u64>(), extra in 0usize..3) {
        let family = TaskFamily::two_to_four_core();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = &family.tasks[(seed % 13) as usize];
        let o = generate_observation(spec, extra, &mut rng).unwrap();
        let input = render_input::<f32>(&o.grid, &o.masks(), 6).unwrap();
        prop_assert_eq!(input.present.iter().filter(|&&p| p).count(), o.objects.len());
        let data = input.slabs.data();
        for (i, obj) in o.objects.iter().enumerate() {
            let slab = &data[i * SLAB_LEN..(i + 1) * SLAB_LEN];
            prop_assert_eq!(slab.iter().filter(|&&v| v != 0.0).count(), obj.mask.count());
            for (r, c) in obj.mask.cells() {
                let ch = obj.color as usize - 1;
                prop_assert_eq!(slab[ch * GRID * GRID + r * GRID + c], 1.0);
            }
        }
        prop_assert!(data[o.objects.len() * SLAB_LEN..].iter().all(|&v| v == 0.0));
    }
}
