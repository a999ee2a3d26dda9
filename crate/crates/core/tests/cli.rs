use std::path::Path;
use std::process::{Command, Output};

fn soilmap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soilmap"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn mass_and_diameter() {
    let dir = tempfile::tempdir().unwrap();
    let o = soilmap(dir.path(), &["mass", "--rho", "1.3e-3", "--depth", "200", "--diameter", "19"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "73.7");
    let o = soilmap(dir.path(), &["mass", "--rho", "1.3e-3", "--depth", "200", "--target-mass", "45.2"]);
    assert_eq!(stdout(&o).trim(), "14.88");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(soilmap(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(soilmap(dir.path(), &["bogus"]).status.code(), Some(1));
    assert_eq!(soilmap(dir.path(), &["fit", "--data", "missing.csv", "--out", "m.txt"]).status.code(), Some(2));

    std::fs::write(dir.path().join("empty.csv"), "sample_id,x_m,y_m,task,value\n").unwrap();
    let o = soilmap(dir.path(), &["fit", "--data", "empty.csv", "--out", "m.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty dataset"));
    assert!(!dir.path().join("m.txt").exists());
}

#[test]
fn model_refuses_other_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = |o: Output| assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    ok(soilmap(d, &["synth", "--seed", "4", "--out", "obs.csv"]));
    ok(soilmap(d, &["fit", "--data", "obs.csv", "--out", "model.txt", "--restarts", "2"]));
    std::fs::write(d.join("q.csv"), "task,x_m,y_m\npH,10,10\nK,150,80\n").unwrap();

    let o = soilmap(d, &["predict", "--model", "model.txt", "--data", "obs.csv", "--queries", "q.csv", "--denormalize"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "task,x_m,y_m,mean,variance");
    assert_eq!(lines.len(), 3);

    let obs = std::fs::read_to_string(d.join("obs.csv")).unwrap();
    let mut rows: Vec<String> = obs.lines().map(String::from).collect();
    let last = rows[1].rfind(',').unwrap();
    rows[1] = format!("{},12345", &rows[1][..last]);
    std::fs::write(d.join("tampered.csv"), rows.join("\n") + "\n").unwrap();
    let o = soilmap(d, &["predict", "--model", "model.txt", "--data", "tampered.csv", "--queries", "q.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("digest"));
}

#[test]
fn plan_from_boundary_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("field.csv"),
        "ring,x_m,y_m\n0,0,0\n0,100,0\n0,100,100\n0,0,100\n1,40,40\n1,60,40\n1,60,60\n1,40,60\n",
    )
    .unwrap();
    let o = soilmap(dir.path(), &["plan", "--boundary", "field.csv", "--spacing", "45"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("sample_id,x_m,y_m"));
    // The center point falls in the exclusion zone.
    assert_eq!(text.lines().count(), 1 + 8);
    assert!(!text.contains(",50,50"));
}
