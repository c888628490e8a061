use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use futures::stream::{self, StreamExt};

use super::journal::{Journal, JournalEntry};
use super::stages::{filter, generate, localize, no_entities, process_image};
use super::{
    ImageState, ManifestEntry, PipelineConfig, PipelineError, RunReport, StageMode, StageTiming, REASON_FILTER_ERROR,
    REASON_LOW_IOU,
};
use crate::datastore::{atomic_write, to_jsonl, write_shards, ShardSet};
use crate::gateway::Gateway;

/// Where a run writes. The output directory receives `shards/`,
/// `rejects.jsonl`, `failures.jsonl` and `report.json`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPaths {
    pub output: PathBuf,
    pub journal: PathBuf,
}

impl RunPaths {
    /// Journal kept inside the output directory.
    pub fn in_dir(output: impl Into<PathBuf>) -> Self {
        let output = output.into();
        Self {
            journal: output.join("journal.jsonl"),
            output,
        }
    }
}

/// Early-stop hooks. A halted run leaves a valid journal and no output.
#[derive(Debug, Clone, Default)]
pub struct RunControl {
    /// Stop once this many images have been journaled by this invocation.
    pub halt_after: Option<usize>,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl RunControl {
    fn should_stop(&self, completed: usize) -> bool {
        self.halt_after.is_some_and(|n| completed >= n)
            || self.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst))
    }
}

/// Run every manifest image not yet in the journal, then write the output
/// tree from the journal.
pub async fn run_pipeline(
    manifest: &[ManifestEntry],
    config: &PipelineConfig,
    gw: &Gateway,
    paths: &RunPaths,
    control: &RunControl,
) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let mut journal = Journal::open(&paths.journal)?;
    let pending: Vec<&ManifestEntry> = manifest.iter().filter(|e| !journal.contains(&e.image_id)).collect();
    tracing::info!(total = manifest.len(), pending = pending.len(), "starting run");
    let mut timing = StageTiming::default();
    let mut completed = 0usize;

    match config.mode {
        StageMode::PerImage => {
            let mut results = stream::iter(pending)
                .map(|e| async move {
                    let mut t = StageTiming::default();
                    let out = process_image(gw, e, config, &mut t).await;
                    (out, t)
                })
                .buffer_unordered(config.concurrency);
            while let Some((entry, t)) = results.next().await {
                timing.localize_secs += t.localize_secs;
                timing.generate_secs += t.generate_secs;
                timing.filter_secs += t.filter_secs;
                journal.append(entry)?;
                completed += 1;
                if control.should_stop(completed) {
                    return Err(PipelineError::Halted { completed });
                }
            }
        }
        StageMode::GlobalPass => {
            let entries = global_pass(gw, config, &pending, &mut timing).await;
            for entry in entries {
                journal.append(entry)?;
                completed += 1;
                if control.should_stop(completed) {
                    return Err(PipelineError::Halted { completed });
                }
            }
        }
    }

    let mut report = finalize(manifest, config, &mut journal, &paths.output)?;
    report.timing = timing;
    Ok(report)
}

async fn global_pass(
    gw: &Gateway,
    config: &PipelineConfig,
    pending: &[&ManifestEntry],
    timing: &mut StageTiming,
) -> Vec<JournalEntry> {
    let t = Instant::now();
    let localized: Vec<_> = stream::iter(pending)
        .map(|e| localize(gw, e))
        .buffered(config.concurrency)
        .collect()
        .await;
    timing.localize_secs += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let generated: Vec<_> = stream::iter(pending.iter().zip(localized))
        .map(|(e, l)| async move {
            match l {
                Ok(l) if l.regions.is_empty() => Err(no_entities(e)),
                Ok(l) => generate(gw, e, l).await,
                Err(f) => Err(f),
            }
        })
        .buffered(config.concurrency)
        .collect()
        .await;
    timing.generate_secs += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let out = stream::iter(pending.iter().zip(generated))
        .map(|(e, g)| async move {
            match g {
                Ok((n, g)) => filter(gw, e, config, n, g).await,
                Err(terminal) => terminal,
            }
        })
        .buffered(config.concurrency)
        .collect()
        .await;
    timing.filter_secs += t.elapsed().as_secs_f64();
    out
}

fn finalize(
    manifest: &[ManifestEntry],
    config: &PipelineConfig,
    journal: &mut Journal,
    output: &Path,
) -> Result<RunReport, PipelineError> {
    let wanted: BTreeSet<&str> = manifest.iter().map(|e| e.image_id.as_str()).collect();
    let entries: Vec<&JournalEntry> = journal
        .entries()
        .filter(|e| wanted.contains(e.image_id.as_str()))
        .collect();

    let mut report = RunReport {
        images: manifest.len() as u64,
        ..RunReport::default()
    };
    for e in &entries {
        match e.state {
            ImageState::Done => report.done += 1,
            ImageState::NoEntities => report.no_entities += 1,
            ImageState::Failed => report.failed += 1,
        }
        report.regions += e.regions;
        report.generated += e.generated;
        report.kept += e.samples.len() as u64;
        for r in &e.rejects {
            match r.reason.as_str() {
                REASON_LOW_IOU => report.dropped += 1,
                REASON_FILTER_ERROR => report.filter_errors += 1,
                _ => {}
            }
        }
    }
    debug_assert_eq!(report.kept + report.dropped + report.filter_errors, report.generated);

    std::fs::create_dir_all(output).map_err(|e| PipelineError::io(output, e))?;
    let shards = output.join("shards");
    let partial = output.join("shards.partial");
    for dir in [&partial, &shards] {
        if dir.exists() {
            std::fs::remove_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
    }
    write_shards(entries.iter().flat_map(|e| &e.samples), &partial, config.shard_size)?;
    std::fs::rename(&partial, &shards).map_err(|e| PipelineError::io(&shards, e))?;
    ShardSet::open(&shards)?.verify()?;

    atomic_write(
        &output.join("rejects.jsonl"),
        &to_jsonl(entries.iter().flat_map(|e| &e.rejects)),
    )?;
    atomic_write(
        &output.join("failures.jsonl"),
        &to_jsonl(entries.iter().filter_map(|e| e.failure.as_ref())),
    )?;
    let mut report_json = serde_json::to_vec_pretty(&report).expect("report serializes");
    report_json.push(b'\n');
    atomic_write(&output.join("report.json"), &report_json)?;
    journal.compact()?;
    Ok(report)
}
