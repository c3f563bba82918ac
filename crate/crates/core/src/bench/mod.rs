//! Monte-Carlo experiment runner with CSV metrics and the baselines it compares against.

mod config;
mod images;
mod metrics;
mod synthetic;

use std::io::Write;

pub use config::{ExperimentConfig, ExperimentKind, LambdaPolicy};
pub use images::{dct_tc_baseline, read_pgm_dir, terrain_corpus, DctTc, ImageCorpus};
pub use metrics::{est_mse_abs, genie_pca, j_rec_empirical, j_rec_projection, mean_stderr, write_metrics_csv, MetricsRow, CSV_HEADER};

use crate::error::{Error, Result};

/// Runs the experiment, returning all aggregate rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    run_with(cfg, &mut |batch| {
        rows.extend_from_slice(batch);
        Ok(())
    })?;
    Ok(rows)
}

/// Runs the experiment, writing CSV as each sweep point completes.
///
/// Rows finished before a failure stay written.
pub fn run_experiment_csv<W: Write>(cfg: &ExperimentConfig, mut out: W) -> Result<Vec<MetricsRow>> {
    writeln!(out, "{CSV_HEADER}")?;
    let mut rows = Vec::new();
    run_with(cfg, &mut |batch| {
        for row in batch {
            writeln!(out, "{}", row.csv_line())?;
        }
        out.flush()?;
        rows.extend_from_slice(batch);
        Ok(())
    })?;
    Ok(rows)
}

fn run_with(cfg: &ExperimentConfig, emit: &mut dyn FnMut(&[MetricsRow]) -> Result<()>) -> Result<()> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::ImagePipeline => images::run_image_pipeline(cfg, emit),
        _ => synthetic::run_synthetic(cfg, emit),
    }
}

/// Evaluates `f` for every run index on up to `threads` workers; results come back in run order.
pub(crate) fn monte_carlo<T, F>(runs: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let threads = threads.clamp(1, runs.max(1));
    if threads == 1 {
        return (0..runs).map(&f).collect();
    }
    let mut slots: Vec<Option<Result<T>>> = (0..runs).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|tid| {
                let f = &f;
                scope.spawn(move || {
                    (tid..runs)
                        .step_by(threads)
                        .map(|run| (run, f(run)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for handle in handles {
            for (run, result) in handle.join().expect("worker panicked") {
                slots[run] = Some(result);
            }
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.unwrap_or_else(|| Err(Error::Config("missing run".into()))))
        .collect()
}

/// Worker count from the config, falling back to the machine's parallelism.
pub(crate) fn worker_count(cfg: &ExperimentConfig) -> usize {
    cfg.threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}
