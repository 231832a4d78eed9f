//! One function per `obtrans` subcommand. Each creates its run directory,
//! writes the configuration snapshot, validates its inputs, then drives the
//! pipeline and prints a one-line summary per major artifact.

use crate::config::{LearnerKind, RunConfig};
use crate::pipeline::{
    build_demos, ensure_dir, load_demos_checked, run_ablate, run_evaluate, run_learn,
    run_translate, train_translator_run, write_snapshot,
};
use crate::{HarnessError, Result};

fn prepare_run_dir(cfg: &RunConfig) -> Result<()> {
    ensure_dir(&cfg.out_dir)?;
    write_snapshot(cfg, &cfg.out_dir)
}

pub fn cmd_gen_demos(cfg: &RunConfig) -> Result<()> {
    prepare_run_dir(cfg)?;
    let set = build_demos(cfg)?;
    let train = set.train_indices().len();
    let holdout = set.holdout_indices().len();
    println!(
        "wrote {} {:?} demos ({} train, {} holdout) to {}",
        set.demos.len(),
        set.task,
        train,
        holdout,
        cfg.demo_file.display()
    );
    Ok(())
}

pub fn cmd_train_translator(cfg: &RunConfig) -> Result<()> {
    prepare_run_dir(cfg)?;
    let set = load_demos_checked(cfg)?;
    let outcome = train_translator_run(cfg, &set, &cfg.out_dir)?;
    println!(
        "trained {} epochs; holdout total {:.5} (copy-context translation baseline {:.5})",
        outcome.rows, outcome.last_holdout, outcome.baseline
    );
    println!("checkpoint: {}", cfg.checkpoint_file.display());
    Ok(())
}

pub fn cmd_translate(cfg: &RunConfig) -> Result<()> {
    prepare_run_dir(cfg)?;
    let outcome = run_translate(cfg, &cfg.out_dir)?;
    println!(
        "translated demo {} ({} frames per row) into {}",
        cfg.translate_demo,
        outcome.frames,
        cfg.out_dir.display()
    );
    if outcome.wrote_truth {
        println!("ground-truth row: truth.ppm");
    }
    Ok(())
}

pub fn cmd_learn(cfg: &RunConfig) -> Result<()> {
    if cfg.learner == LearnerKind::Oracle && (cfg.drop_r_feat || cfg.drop_r_img) {
        return Err(HarnessError::Validation(
            "reward ablations have no effect on the oracle learner".into(),
        ));
    }
    prepare_run_dir(cfg)?;
    let summary = run_learn(cfg, &cfg.out_dir)?;
    println!(
        "{} learner on {} contexts: mean norm distance {:.4}, success rate {:.2}",
        cfg.learner.name(),
        summary.per_context_norm.len(),
        summary.mean_norm,
        summary.success_rate
    );
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    if !cfg.eval_run.is_dir() {
        return Err(HarnessError::Validation(format!(
            "eval_run is not a directory: {}",
            cfg.eval_run.display()
        )));
    }
    prepare_run_dir(cfg)?;
    let summary = run_evaluate(cfg, &cfg.out_dir)?;
    println!(
        "re-evaluated {} artifacts from {}: mean norm distance {:.4}, success rate {:.2}",
        summary.per_context_norm.len(),
        cfg.eval_run.display(),
        summary.mean_norm,
        summary.success_rate
    );
    Ok(())
}

pub fn cmd_ablate(cfg: &RunConfig) -> Result<()> {
    prepare_run_dir(cfg)?;
    let outcome = run_ablate(cfg, &cfg.out_dir)?;
    for row in &outcome.rows {
        println!(
            "{:<12} mean norm distance {:.4} +- {:.4}",
            row.variant, row.mean, row.stddev
        );
    }
    if outcome.failures > 0 {
        println!("{} of {} runs failed; see seeds.csv", outcome.failures, outcome.rows.len() * cfg.ablate_seeds);
    }
    println!("report: {}", cfg.out_dir.join("report.csv").display());
    Ok(())
}
