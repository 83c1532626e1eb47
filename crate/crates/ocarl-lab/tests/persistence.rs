//! Round-trips and rejection paths for every on-disk artifact format.

use std::fs;

use tempfile::TempDir;

use ocarl_core::agent::{Agent, Variant};
use ocarl_core::env::{Action, EnvConfig};
use ocarl_core::ppo::{ppo_update, Adam, Collector, PpoConfig};
use ocarl_core::uod::{fit_uod, UodSettings};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ocarl_lab::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use ocarl_lab::error::LabError;
use ocarl_lab::export::{align_series, read_csv, write_csv};
use ocarl_lab::metrics::{append_jsonl, read_jsonl, CollectRecord, EvalRecord};
use ocarl_lab::spec::ExperimentSpec;
use ocarl_lab::uodstore;

fn small_predictor() -> ocarl_core::uod::CategoryPredictor {
    let cfg = EnvConfig::from_id("Z4C4").unwrap();
    let settings = UodSettings { dataset_steps: 1200, ..UodSettings::default() };
    fit_uod(&cfg, &settings).unwrap()
}

#[test]
fn predictor_roundtrips_through_disk_exactly() {
    let dir = TempDir::new().unwrap();
    let pred = small_predictor();
    let path = dir.path().join("uod.json");
    uodstore::save_predictor(&path, &pred).unwrap();
    let loaded = uodstore::load_predictor(&path).unwrap();
    assert_eq!(loaded, pred);

    let env = EnvConfig::from_id("Z4C4").unwrap();
    let mut e = ocarl_core::env::HunterEnv::new(env, 7).unwrap();
    e.step(Action::from_index(3).unwrap()).unwrap();
    let frame = e.render_bytes();
    let map = pred.presence(&frame).unwrap();
    assert_eq!(
        loaded.extended_categories(&map).unwrap(),
        pred.extended_categories(&map).unwrap()
    );
}

#[test]
fn predictor_loading_rejects_a_foreign_format_tag() {
    let dir = TempDir::new().unwrap();
    let pred = small_predictor();
    let path = dir.path().join("uod.json");
    uodstore::save_predictor(&path, &pred).unwrap();
    let mangled = fs::read_to_string(&path).unwrap().replace("ocarl-uod-v1", "ocarl-uod-v9");
    fs::write(&path, mangled).unwrap();
    assert!(matches!(uodstore::load_predictor(&path), Err(LabError::Format(_))));
}

#[test]
fn fit_or_load_reuses_the_cached_fit() {
    let dir = TempDir::new().unwrap();
    let settings = UodSettings { dataset_steps: 1200, ..UodSettings::default() };
    let first = uodstore::fit_or_load(dir.path(), "Z4C4", &settings).unwrap();
    let cache = uodstore::cache_path(dir.path(), "Z4C4", &settings);
    assert!(cache.exists());
    let before = fs::metadata(&cache).unwrap().modified().unwrap();
    let second = uodstore::fit_or_load(dir.path(), "Z4C4", &settings).unwrap();
    assert_eq!(first, second);
    assert_eq!(before, fs::metadata(&cache).unwrap().modified().unwrap());
}

#[test]
fn checkpoint_roundtrips_parameters_optimizer_and_wiring() {
    let dir = TempDir::new().unwrap();
    let pred = small_predictor();
    let mut agent =
        Agent::<f32>::new(Variant::Ocarl, 4, Action::COUNT, 11, Some(pred), 0.25).unwrap();

    // A couple of optimizer steps so the moments are nontrivial.
    let env = EnvConfig::from_id("Z1C1").unwrap();
    let mut collector = Collector::new(&env, 2, 3).unwrap();
    let buffer = collector.collect(&mut agent, 8).unwrap();
    let mut adam = Adam::new(5e-4).unwrap();
    let cfg = PpoConfig { minibatch: 16, ..PpoConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    ppo_update(&mut agent, &mut adam, &buffer, &cfg, &mut rng).unwrap();

    let ckpt = Checkpoint::from_agent(&agent, "abc123", 11, 16, Some(&adam));
    let path = dir.path().join("ckpt.json");
    save_checkpoint(&path, &ckpt).unwrap();
    let loaded = load_checkpoint(&path).unwrap();

    assert_eq!(loaded.format, "ocarl-ckpt-v1");
    assert_eq!(loaded.spec_hash, "abc123");
    assert_eq!(loaded.step, 16);
    let restored: Agent<f32> = loaded.to_agent().unwrap();
    assert_eq!(restored.variant(), agent.variant());
    assert_eq!(restored.confusion(), agent.confusion());
    for (name, tensor) in agent.params().iter() {
        let other = restored.params().get(name).unwrap();
        assert_eq!(other.shape(), tensor.shape());
        assert_eq!(other.data(), tensor.data(), "parameter {name} changed in flight");
    }
    let restored_adam = loaded.to_adam(5e-4).unwrap().unwrap();
    assert_eq!(restored_adam.state(), adam.state());

    // The confusion stream restarts on load, so behavioral equality is
    // checked between two fresh restores rather than against the original,
    // whose stream already advanced during collection.
    let frame = {
        let mut e = ocarl_core::env::HunterEnv::new(env, 5).unwrap();
        e.step(Action::from_index(1).unwrap()).unwrap();
        e.render_bytes()
    };
    let mut a: Agent<f32> = loaded.to_agent().unwrap();
    let mut b = restored;
    let ea = a.evaluate_frames(&[&frame]).unwrap().pop().unwrap();
    let eb = b.evaluate_frames(&[&frame]).unwrap().pop().unwrap();
    assert_eq!(ea.probs, eb.probs);
    assert_eq!(ea.value, eb.value);
}

#[test]
fn checkpoint_loading_rejects_foreign_formats_and_missing_parameters() {
    let dir = TempDir::new().unwrap();
    let agent = Agent::<f32>::new(Variant::PpoPlain, 4, Action::COUNT, 1, None, 0.0).unwrap();
    let ckpt = Checkpoint::from_agent(&agent, "h", 1, 0, None);
    let path = dir.path().join("ckpt.json");
    save_checkpoint(&path, &ckpt).unwrap();

    let mangled = fs::read_to_string(&path).unwrap().replace("ocarl-ckpt-v1", "other-v1");
    fs::write(&path, mangled).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(LabError::Format(_))));

    let mut truncated = Checkpoint::from_agent(&agent, "h", 1, 0, None);
    let first = truncated.params.keys().next().unwrap().clone();
    truncated.params.remove(&first);
    let r: Result<Agent<f32>, _> = truncated.to_agent();
    assert!(matches!(r, Err(LabError::Format(_))));
}

#[test]
fn metric_records_roundtrip_and_omit_absent_category_loss() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("metrics.jsonl");
    let with_cat = CollectRecord {
        step: 1024,
        mean_return: 1.5,
        policy_loss: -0.01,
        value_loss: 0.4,
        cat_loss: Some(12.5),
        entropy: 2.1,
    };
    let without_cat = CollectRecord { step: 2048, cat_loss: None, ..with_cat.clone() };
    append_jsonl(&path, &with_cat).unwrap();
    append_jsonl(&path, &without_cat).unwrap();

    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().contains("\"cat_loss\""));
    assert!(!lines.next().unwrap().contains("cat_loss"));

    let read: Vec<CollectRecord> = read_jsonl(&path).unwrap();
    assert_eq!(read, vec![with_cat, without_cat]);

    let eval = EvalRecord {
        step: 1024,
        env: String::from("Z1C1"),
        mean_return: 3.25,
        std_return: 0.5,
        episodes: 30,
    };
    let epath = dir.path().join("evals.jsonl");
    append_jsonl(&epath, &eval).unwrap();
    let read: Vec<EvalRecord> = read_jsonl(&epath).unwrap();
    assert_eq!(read, vec![eval]);
}

#[test]
fn spec_files_parse_with_overrides_and_reject_unknown_keys() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("exp.cfg");
    fs::write(
        &path,
        "# comment line\n\
         variant = ocarl_no_ocmr\n\
         train_env = Z1C1\n\
         eval_envs = Z4C4, Z2C2\n\
         seeds = 0, 1, 2\n\
         total_steps = 4096\n\
         confusion_p = 0.5\n",
    )
    .unwrap();
    let mut spec = ExperimentSpec::from_file(&path).unwrap();
    assert_eq!(spec.variant, "ocarl_no_ocmr");
    assert_eq!(spec.eval_envs, vec!["Z4C4", "Z2C2"]);
    assert_eq!(spec.seeds, vec![0, 1, 2]);
    assert_eq!(spec.total_steps, 4096);
    assert_eq!(spec.confusion_p, 0.5);
    assert_eq!(spec.gamma, 0.99);

    spec.set("confusion_p", "0.75").unwrap();
    assert_eq!(spec.confusion_p, 0.75);
    assert!(matches!(spec.set("gamma_typo", "1"), Err(LabError::Config(_))));
    assert!(matches!(spec.set("gamma", "fast"), Err(LabError::Config(_))));

    fs::write(&path, "variant ocarl\n").unwrap();
    assert!(matches!(ExperimentSpec::from_file(&path), Err(LabError::Config(_))));
}

#[test]
fn spec_hash_tracks_run_defining_fields_only() {
    let mut a = ExperimentSpec::default();
    let mut b = a.clone();
    assert_eq!(a.hash(), b.hash());

    b.name = Some(String::from("renamed"));
    b.out = Some(std::path::PathBuf::from("/somewhere/else"));
    assert_eq!(a.hash(), b.hash(), "location and display name must not change identity");

    b.total_steps += 1;
    assert_ne!(a.hash(), b.hash());

    a.total_steps += 1;
    a.confusion_p = 0.5;
    assert_ne!(a.hash(), b.hash());
}

#[test]
fn spec_validation_rejects_bad_variants_envs_and_probabilities() {
    let mut spec = ExperimentSpec::default();
    spec.variant = String::from("ocarl_typo");
    assert!(spec.validate().is_err());

    let mut spec = ExperimentSpec::default();
    spec.train_env = String::from("Q1C1");
    assert!(spec.validate().is_err());

    let mut spec = ExperimentSpec::default();
    spec.eval_envs = vec![String::from("Z1C1"), String::from("bogus")];
    assert!(spec.validate().is_err());

    let mut spec = ExperimentSpec::default();
    spec.confusion_p = 1.5;
    assert!(matches!(spec.validate(), Err(LabError::Config(_))));

    let mut spec = ExperimentSpec::default();
    spec.seeds.clear();
    assert!(matches!(spec.validate(), Err(LabError::Config(_))));

    assert!(ExperimentSpec::default().validate().is_ok());
}

#[test]
fn csv_export_roundtrips_exactly_and_aggregates_seeds() {
    let dir = TempDir::new().unwrap();
    // Irrational-ish values exercise the shortest-roundtrip float printing.
    let series = vec![
        vec![(1024u64, 0.1 + 0.2), (2048, 1.0 / 3.0)],
        vec![(1024, 0.5), (2048, 2.0 / 3.0)],
        vec![(1024, -0.25), (2048, 1.0)],
    ];
    let points = align_series(&series).unwrap();
    assert_eq!(points.len(), 2);
    let expected_mean = (0.1 + 0.2 + 0.5 - 0.25) / 3.0;
    assert!((points[0].mean - expected_mean).abs() < 1e-15);

    let path = dir.path().join("curve.csv");
    write_csv(&path, &points).unwrap();
    let read = read_csv(&path).unwrap();
    assert_eq!(read, points, "reimport must reproduce the in-memory curve exactly");

    let single = align_series(&[vec![(1024, 1.5)]]).unwrap();
    assert_eq!(single[0].stderr, 0.0, "single-seed curves have no spread");

    let ragged = vec![vec![(1024u64, 1.0)], vec![(999, 1.0)]];
    assert!(align_series(&ragged).is_err());
}
