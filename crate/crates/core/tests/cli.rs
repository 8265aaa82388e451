use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dicke_twist(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dicke-twist"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .env_remove("DICKE_TWIST_THREADS")
        .output()
        .expect("binary runs")
}

fn header(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.split("\r\n").next().unwrap().to_string()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn column_schema_is_stable() {
    let golden: &[(&[&str], &str, &str)] = &[
        (
            &["fig1", "--set", "spin=3", "--set", "times.count=5"],
            "fig1.csv",
            "lambda_t[1],pop_up_z[1],pop_down_z[1],pop_cat[1],qfi_over_4s2[1]",
        ),
        (&["fig2", "--set", "spin=2", "--set", "epsilon_ratio.count=3"], "fig2.csv", "epsilon_over_lambda[1],fidelity[1],qfi_over_4s2[1]"),
        (
            &["fig3", "--set", "spins=[3]", "--set", "gamma_ratio.count=4"],
            "fig3.csv",
            "spin[1],gamma_over_lambda[1],nojump_probability[1],plateau[1]",
        ),
        (
            &["fig4", "--set", "spins=[3]", "--set", "gamma_ratio.count=4"],
            "fig4.csv",
            "spin[1],gamma_over_lambda[1],fidelity[1],qfi_over_4s2[1]",
        ),
        (&["fig5", "--set", "spin_max=5"], "fig5.csv", "gamma_over_lambda[1],spin[1],qfi[1],qfi_over_4s2[1],qfi_over_2s2_plus_2s[1]"),
        (
            &["fig6", "--set", "spin=2", "--set", "gamma_eff_ratio.count=3"],
            "fig6.csv",
            "gamma_eff_over_lambda[1],fidelity[1],qfi_over_4s2[1],nojump_norm[1]",
        ),
        (&["fig7", "--set", "spin=3", "--set", "t_final=2.0"], "fig7.csv", "trajectory[1],lambda_t[1],m[1],overlap_re[1],overlap_im[1]"),
        (
            &["fig7", "--set", "spin=3", "--set", "t_final=2.0"],
            "fig7_cycles.csv",
            "trajectory[1],jumps[1],first_jump_lambda_t[1],cycle_m[1],settle_lambda_t[1]",
        ),
        (
            &["nojump", "--set", "spin=3", "--set", "times.count=5"],
            "nojump.csv",
            "lambda_t[1],nojump_probability[1],fidelity[1],qfi_over_4s2[1]",
        ),
        (
            &["mesolve", "--set", "twisting.spin=3", "--set", "twisting.times.count=5"],
            "mesolve.csv",
            "lambda_t[1],pop_up_z[1],pop_down_z[1],pop_cat[1],qfi_over_4s2[1],sz[1],sx2[1]",
        ),
        (
            &["mesolve", "--set", "model=\"elimination\"", "--set", "elimination.spin=1", "--set", "elimination.times.count=3"],
            "elimination.csv",
            "omega_over_lambda[1],lambda_t[1],time[1/lambda],trace_distance[1],nmax[1]",
        ),
        (
            &["trajectories", "--set", "spin=2", "--set", "trajectories=20"],
            "trajectories.csv",
            "lambda_t[1],sz_mean[1],sz_se[1],sx2_mean[1],sx2_se[1],sz_me[1],sx2_me[1]",
        ),
        (
            &["trajectories", "--set", "spin=2", "--set", "trajectories=20"],
            "trajectory_cycles.csv",
            "trajectory[1],jumps[1],first_jump_lambda_t[1],cycle_m[1],settle_lambda_t[1]",
        ),
        (&["params"], "params.csv", "quantity,value"),
        (&["dicke0"], "dicke0.csv", "spin[1],exact[1],stirling[1],relative_difference[1]"),
    ];
    let root = tempfile::tempdir().unwrap();
    for (k, (args, file, expected)) in golden.iter().enumerate() {
        let dir = root.path().join(k.to_string());
        let out = dicke_twist(&dir, args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(header(&dir.join(file)), *expected, "{args:?}");
        assert!(dir.join("config.toml").exists() && dir.join("summary.json").exists());
    }
}

#[test]
fn grid_is_written_in_full() {
    let dir = tempfile::tempdir().unwrap();
    let out = dicke_twist(dir.path(), &["fig3", "--set", "spins=[2, 4, 6]", "--set", "gamma_ratio.count=9"]);
    assert!(out.status.success());
    let s = summary(dir.path());
    assert_eq!(s["grid"]["requested"], 27);
    assert_eq!(s["grid"]["written"], 27);
    let rows = fs::read_to_string(dir.path().join("fig3.csv")).unwrap().split("\r\n").filter(|l| !l.is_empty()).count();
    assert_eq!(rows, 28);
    assert!(s["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true), "{}", s["checks"]);
}

#[test]
fn fig1_summary_reports_the_cat() {
    let dir = tempfile::tempdir().unwrap();
    let out = dicke_twist(dir.path(), &["fig1", "--set", "spin=4", "--seed", "17"]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty(), "data goes to files only");
    let s = summary(dir.path());
    assert_eq!(s["experiment"], "fig1");
    assert_eq!(s["seed"], 17);
    assert!(s["wall_time_s"].as_f64().unwrap() >= 0.0);
    let at = &s["results"]["at_lambda_t_half_pi"];
    assert!((at["pop_up_z"].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert!(s["checks"].as_array().unwrap().iter().any(|c| c["name"] == "cat_reached_at_half_pi" && c["passed"] == true));
}

#[test]
fn resolved_config_reproduces_the_run() {
    let root = tempfile::tempdir().unwrap();
    let (first, second) = (root.path().join("a"), root.path().join("b"));
    let out = dicke_twist(&first, &["trajectories", "--set", "spin=2", "--set", "trajectories=30", "--seed", "4"]);
    assert!(out.status.success());
    let config = first.join("config.toml");
    let out = dicke_twist(&second, &["trajectories", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["trajectories.csv", "trajectory_cycles.csv"] {
        assert_eq!(fs::read(first.join(file)).unwrap(), fs::read(second.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn seeds_change_ensembles() {
    let root = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let dir = root.path().join(seed);
        assert!(dicke_twist(&dir, &["trajectories", "--set", "spin=2", "--set", "trajectories=30", "--seed", seed]).status.success());
        fs::read(dir.join("trajectories.csv")).unwrap()
    };
    assert_ne!(run("1"), run("2"));
}

#[test]
fn json_output_mirrors_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dicke_twist(dir.path(), &["dicke0", "--set", "spins=[1, 30]", "--format", "json"]);
    assert!(out.status.success());
    let table: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("dicke0.json")).unwrap()).unwrap();
    assert_eq!(table["columns"][0], "spin[1]");
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1].as_f64().unwrap(), 0.5);
    assert!((rows[1][1].as_f64().unwrap() - 0.10258).abs() < 1e-5);
}

#[test]
fn exit_codes_name_the_failure() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| {
        let out = dicke_twist(dir.path(), args);
        (out.status.code(), String::from_utf8_lossy(&out.stderr).into_owned())
    };

    let (status, err) = code(&["fig1", "--set", "spn=3"]);
    assert_eq!(status, Some(2));
    assert!(err.contains("error[CONFIG]"), "{err}");

    assert_eq!(code(&["fig3", "--set", "gamma_ratio.count=0"]).0, Some(2));
    assert_eq!(code(&["fig3", "--set", "gamma_ratio.scale=\"log\"", "--set", "gamma_ratio.start=0.0"]).0, Some(2));
    assert_eq!(code(&["nosuch"]).0, Some(2));
    assert_eq!(code(&["fig1", "--threads", "0"]).0, Some(2));

    let (status, err) = code(&["fig1", "--set", "spin=61"]);
    assert_eq!(status, Some(4));
    assert!(err.contains("error[LIMIT]"), "{err}");
}

#[test]
fn config_file_for_another_experiment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    fs::write(&config, "experiment = \"fig3\"\n").unwrap();
    let out = dicke_twist(&dir.path().join("o"), &["fig1", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dicke-twist"))
        .args(["dicke0", "--quiet", "--out"])
        .arg(dir.path())
        .env("DICKE_TWIST_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(summary(dir.path())["threads"], 3);
}
