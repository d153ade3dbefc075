use lfvar::harness::{run_study, write_outputs, StudyConfig, StudyKind};

fn config(text: &str) -> StudyConfig {
    StudyConfig::from_toml(text).unwrap()
}

#[test]
fn equivalence_study_is_exact_to_rounding() {
    let table = run_study(&config(
        r#"
kind = "equivalence"
ladder = [8, 16, 32]
t_final = 0.5
initial = { type = "riemann", u_left = 0.5, u_right = -0.5 }
model = { name = "quadratic-forced", c = 0.1, h = 0.02 }
"#,
    ))
    .unwrap();
    assert_eq!(table.kind, StudyKind::Equivalence);
    assert!(table.errors().iter().all(|&e| e <= 1e-11), "{:?}", table.errors());
}

#[test]
fn dispersion_never_exceeds_its_bound() {
    let table = run_study(&config(
        r#"
kind = "dispersion"
ladder = [16, 32, 64]
t_final = 0.25
point = [0.5, 0.25]
initial = { type = "cosine", amplitude = 0.5 }
model = { name = "quadratic-forced" }
"#,
    ))
    .unwrap();
    assert!(table.errors().iter().all(|&e| e <= 1e-12), "{:?}", table.errors());
}

#[test]
fn sampled_characteristic_tracks_the_occupation_result() {
    let base = r#"
kind = "characteristic"
ladder = [16, 32, 64]
t_final = 0.1
point = [0.3, 0.1]
initial = { type = "cosine" }
"#;
    let exact = run_study(&config(base)).unwrap();
    let sampled = run_study(&config(&format!("{base}walk = {{ mode = \"sampled\", n_samples = 40000, seed = 9 }}\n"))).unwrap();
    // Non-increasing up to 5% sampling noise.
    assert!(sampled.errors().windows(2).all(|w| w[1] <= 1.05 * w[0]), "{:?}", sampled.errors());
    for (s, e) in sampled.rows.iter().zip(&exact.rows) {
        assert!((s.error - e.error).abs() <= 4.0 * s.dx, "{} vs {}", s.error, e.error);
    }
}

#[test]
fn outputs_are_named_by_kind_and_hash() {
    let dir = tempfile_dir();
    let mut cfg = config(
        r#"
kind = "v-error"
ladder = [8, 16, 32]
t_final = 0.05
initial = { type = "cosine" }
"#,
    );
    cfg.output_dir = Some(dir.clone());
    let table = run_study(&cfg).unwrap();
    let out = write_outputs(&cfg, &table).unwrap();
    let stem = format!("v-error-{}", cfg.hash());
    assert_eq!(out.table, dir.join(format!("{stem}.csv")));
    let text = std::fs::read_to_string(&out.table).unwrap();
    assert!(text.lines().next().unwrap().ends_with("seed,config_hash"));
    assert_eq!(text.lines().count(), 4);
    std::fs::remove_dir_all(dir).unwrap();
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("lfvar-studies-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
