//! End-to-end checks of the `obtrans` binary: exit codes, run-directory
//! contents, determinism of artifacts, and resume behavior. Everything runs
//! at miniature scale.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use harness::config::parse_config;

fn obtrans() -> Command {
    Command::new(env!("CARGO_BIN_EXE_obtrans"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run_ok(args: &[&str]) -> Output {
    let out = obtrans().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str]) -> i32 {
    obtrans().args(args).output().unwrap().status.code().unwrap()
}

fn tiny_demo_config(out_dir: &Path) -> String {
    format!(
        "task = reach\nseed = 5\nout_dir = {}\ndemo_count = 12\n",
        out_dir.display()
    )
}

fn tiny_train_config(out_dir: &Path) -> String {
    format!(
        "task = reach\nseed = 5\nout_dir = {}\ndemo_count = 12\nepochs = 2\n\
         steps_per_epoch = 3\nbatch_size = 4\nholdout_samples = 6\n",
        out_dir.display()
    )
}

#[test]
fn run_directory_snapshot_is_the_effective_config() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let cfg = write_config(tmp.path(), "cfg.txt", &tiny_demo_config(&run));
    run_ok(&["gen-demos", "--config", cfg.to_str().unwrap()]);

    let snapshot = std::fs::read_to_string(run.join("config.snapshot")).unwrap();
    let reparsed = parse_config(&snapshot).unwrap().resolve(None, None).unwrap();
    assert_eq!(reparsed.snapshot(), snapshot);
    assert!(snapshot.contains("seed = 5"));
    assert!(snapshot.contains("demo_count = 12"));
}

#[test]
fn seed_and_out_flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let other = tmp.path().join("other");
    let cfg = write_config(tmp.path(), "cfg.txt", &tiny_demo_config(&run));
    run_ok(&[
        "gen-demos",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        other.to_str().unwrap(),
    ]);

    assert!(!run.exists());
    let snapshot = std::fs::read_to_string(other.join("config.snapshot")).unwrap();
    assert!(snapshot.contains("seed = 9"));
    assert!(other.join("demos.bin").is_file());
}

#[test]
fn demo_files_are_byte_identical_for_a_seed_and_differ_across_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let cfg = write_config(tmp.path(), "cfg.txt", &tiny_demo_config(&a));
    run_ok(&["gen-demos", "--config", cfg.to_str().unwrap()]);
    run_ok(&["gen-demos", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    run_ok(&[
        "gen-demos",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
        "--seed",
        "6",
    ]);

    let bytes_a = std::fs::read(a.join("demos.bin")).unwrap();
    let bytes_b = std::fs::read(b.join("demos.bin")).unwrap();
    let bytes_c = std::fs::read(c.join("demos.bin")).unwrap();
    assert_eq!(bytes_a, bytes_b);
    assert_ne!(bytes_a, bytes_c);
}

#[test]
fn training_appends_loss_rows_and_resume_continues_the_epoch_counter() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let cfg = write_config(tmp.path(), "cfg.txt", &tiny_train_config(&run));
    run_ok(&["gen-demos", "--config", cfg.to_str().unwrap()]);
    run_ok(&["train-translator", "--config", cfg.to_str().unwrap()]);

    let loss = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    let lines: Vec<&str> = loss.lines().collect();
    assert_eq!(lines[0], "epoch,l_trans,l_rec,l_align,total,holdout_total");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,"));
    assert!(lines[2].starts_with("1,"));
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 6);
        for field in line.split(',') {
            field.parse::<f64>().unwrap();
        }
    }

    let resume_cfg = write_config(
        tmp.path(),
        "resume.txt",
        &format!(
            "task = reach\nseed = 5\nout_dir = {}\ndemo_count = 12\nepochs = 1\n\
             steps_per_epoch = 3\nbatch_size = 4\nholdout_samples = 6\nresume = true\n",
            run.display()
        ),
    );
    run_ok(&["train-translator", "--config", resume_cfg.to_str().unwrap()]);
    let loss = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    let last = loss.lines().last().unwrap();
    assert!(last.starts_with("2,"), "resumed epoch row: {last}");
}

#[test]
fn translate_writes_all_image_rows_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let cfg = write_config(tmp.path(), "cfg.txt", &tiny_train_config(&run));
    run_ok(&["gen-demos", "--config", cfg.to_str().unwrap()]);
    run_ok(&["train-translator", "--config", cfg.to_str().unwrap()]);

    // Translating from another run directory needs the artifact paths
    // pinned, since --out moves the defaults along with the run dir.
    let artifacts = format!(
        "{}checkpoint_file = {}\ndemo_file = {}\n",
        tiny_train_config(&run),
        run.join("checkpoint.bin").display(),
        run.join("demos.bin").display()
    );

    // Demo-indexed target: all four rows, every strip 21 frames wide.
    let t1 = tmp.path().join("t1");
    let cfg_demo = write_config(
        tmp.path(),
        "translate_demo.txt",
        &format!("{artifacts}translate_demo = 1\ntranslate_target = 3\n"),
    );
    run_ok(&[
        "translate",
        "--config",
        cfg_demo.to_str().unwrap(),
        "--out",
        t1.to_str().unwrap(),
    ]);
    for name in ["source.ppm", "context.ppm", "translated.ppm", "truth.ppm"] {
        assert!(t1.join(name).is_file(), "missing {name}");
    }
    let header = |p: &Path| {
        let bytes = std::fs::read(p).unwrap();
        String::from_utf8_lossy(&bytes[..20]).to_string()
    };
    let frames = 21; // horizon 20 plus the initial frame
    assert!(header(&t1.join("source.ppm")).contains(&format!("{} 32", 32 * frames)));
    assert!(header(&t1.join("translated.ppm")).contains(&format!("{} 32", 32 * frames)));
    assert!(header(&t1.join("context.ppm")).contains("32 32"));

    // Sampled target: no truth row; byte-identical on re-run.
    let t2 = tmp.path().join("t2");
    let t3 = tmp.path().join("t3");
    let cfg_sample = write_config(
        tmp.path(),
        "translate_sample.txt",
        &format!("{artifacts}translate_demo = 0\n"),
    );
    for out in [&t2, &t3] {
        run_ok(&[
            "translate",
            "--config",
            cfg_sample.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    assert!(!t2.join("truth.ppm").exists());
    assert_eq!(
        std::fs::read(t2.join("translated.ppm")).unwrap(),
        std::fs::read(t3.join("translated.ppm")).unwrap()
    );
}

#[test]
fn learn_and_evaluate_agree_on_eval_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let body = format!(
        "task = reach\nseed = 2\nout_dir = {}\nlearner = oracle\neval_contexts = 2\n\
         iterations = 3\nrollouts_per_iter = 4\nhidden = 8\n",
        run.display()
    );
    let cfg = write_config(tmp.path(), "learn.txt", &body);
    run_ok(&["learn", "--config", cfg.to_str().unwrap()]);

    let curve = std::fs::read_to_string(run.join("curve.csv")).unwrap();
    assert_eq!(
        curve.lines().next().unwrap(),
        "iteration,mean_reward,mean_norm_distance,success_rate,kl"
    );
    assert!(run.join("policy_00.bin").is_file() && run.join("policy_01.bin").is_file());

    let eval_dir = tmp.path().join("eval");
    let cfg_eval = write_config(
        tmp.path(),
        "eval.txt",
        &format!("{}eval_run = {}\n", body, run.display()),
    );
    run_ok(&[
        "evaluate",
        "--config",
        cfg_eval.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read(run.join("eval.csv")).unwrap(),
        std::fs::read(eval_dir.join("eval.csv")).unwrap()
    );
}

#[test]
fn exit_codes_separate_validation_from_runtime_and_success() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let cfg = write_config(tmp.path(), "cfg.txt", &tiny_demo_config(&run));

    assert_eq!(exit_code(&["--help"]), 0);
    assert_eq!(exit_code(&["gen-demos"]), 1, "missing --config");
    assert_eq!(exit_code(&["gen-demos", "--config", "/nonexistent/cfg.txt"]), 1);
    assert_eq!(exit_code(&["bogus-subcommand", "--config", cfg.to_str().unwrap()]), 1);

    let bad_key = write_config(tmp.path(), "bad_key.txt", "task = reach\nnot_a_key = 1\n");
    assert_eq!(exit_code(&["gen-demos", "--config", bad_key.to_str().unwrap()]), 1);

    let both_rewards = write_config(
        tmp.path(),
        "both.txt",
        "task = reach\ndrop_r_feat = true\ndrop_r_img = true\n",
    );
    assert_eq!(exit_code(&["learn", "--config", both_rewards.to_str().unwrap()]), 1);

    // Referencing demos that were never generated is a validation error.
    assert_eq!(exit_code(&["train-translator", "--config", cfg.to_str().unwrap()]), 1);

    assert_eq!(exit_code(&["gen-demos", "--config", cfg.to_str().unwrap()]), 0);
}

#[test]
fn oracle_learner_rejects_reward_ablations() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let cfg = write_config(
        tmp.path(),
        "cfg.txt",
        &format!(
            "task = reach\nout_dir = {}\nlearner = oracle\ndrop_r_img = true\n",
            run.display()
        ),
    );
    assert_eq!(exit_code(&["learn", "--config", cfg.to_str().unwrap()]), 1);
}
