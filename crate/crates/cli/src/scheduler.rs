//! Runs jobs on a pool of worker threads. Each worker owns one run at a
//! time; the calling thread is the only writer of the shared results file.

use std::collections::VecDeque;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Mutex};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::run::{run_one, RunRecord};

/// Name of the marker written once a run's record is appended.
pub const DONE_MARKER: &str = "done";

#[derive(Debug, Clone)]
pub struct Job {
    pub cfg: ExperimentConfig,
    pub seed: u64,
    pub dir: PathBuf,
}

#[derive(Debug, Default)]
pub struct Summary {
    pub records: Vec<RunRecord>,
    pub skipped: usize,
    pub failures: Vec<(PathBuf, CliError)>,
}

/// Worker count: `requested` (or the available parallelism), capped by
/// the `SREA_THREADS` environment variable and by the number of jobs.
pub fn worker_count(requested: Option<usize>, jobs: usize) -> usize {
    let base = requested.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let cap = std::env::var("SREA_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&c| c > 0);
    let n = cap.map_or(base, |c| base.min(c));
    n.clamp(1, jobs.max(1))
}

fn append_line(path: &Path, line: &str) -> Result<(), CliError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| CliError::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| CliError::io(path, e))
}

/// Runs `jobs` on `threads` workers, appending each record to `runs_path`.
/// With `resume`, jobs whose directory holds a completion marker are
/// skipped.
pub fn execute(jobs: Vec<Job>, threads: usize, runs_path: &Path, resume: bool) -> Result<Summary, CliError> {
    let mut summary = Summary::default();
    let pending: VecDeque<Job> = jobs
        .into_iter()
        .filter(|j| {
            let done = resume && j.dir.join(DONE_MARKER).is_file();
            if done {
                log::info!("skipping completed run {}", j.dir.display());
                summary.skipped += 1;
            }
            !done
        })
        .collect();
    if pending.is_empty() {
        return Ok(summary);
    }
    let threads = threads.clamp(1, pending.len());
    let queue = Mutex::new(pending);
    let (tx, rx) = mpsc::channel::<(Job, Result<RunRecord, CliError>)>();
    std::thread::scope(|scope| -> Result<(), CliError> {
        for _ in 0..threads {
            let tx = tx.clone();
            let queue = &queue;
            scope.spawn(move || loop {
                let job = queue.lock().expect("job queue").pop_front();
                let Some(job) = job else { break };
                let result = run_one(&job.cfg, job.seed, &job.dir);
                if tx.send((job, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (job, result) in rx {
            match result {
                Ok(record) => {
                    append_line(runs_path, &serde_json::to_string(&record)?)?;
                    let marker = job.dir.join(DONE_MARKER);
                    std::fs::write(&marker, b"").map_err(|e| CliError::io(&marker, e))?;
                    log::info!(
                        "{} seed {}: macro-F1 {:.4} ({:.0} s)",
                        record.metrics.condition,
                        job.seed,
                        record.metrics.test_macro_f1,
                        record.wall_clock_s
                    );
                    summary.records.push(record);
                }
                Err(e) => {
                    log::error!("run {} failed: {e}", job.dir.display());
                    summary.failures.push((job.dir, e));
                }
            }
        }
        Ok(())
    })?;
    Ok(summary)
}
