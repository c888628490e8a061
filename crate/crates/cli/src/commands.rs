use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Subcommand};
use groundforge::curation::service::{serve_review, ReviewStore};
use groundforge::curation::{
    assemble_benchmark, classify_and_screen, derive_bbox_benchmark, export_benchmark, refine_all, top_up,
    BenchmarkManifest, BenchmarkRecord, CurationError,
};
use groundforge::datastore::{
    atomic_write, compute_stats, read_jsonl, to_jsonl, write_shards, ReferringSample, ShardSet,
};
use groundforge::evaluation::{evaluate as score, Prediction};
use groundforge::gateway::server::{bind, serve_stub};
use groundforge::gateway::{StubBackend, StubOptions};
use groundforge::metrics::{format_table, Metric};
use groundforge::pipeline::{read_manifest, run_pipeline, PipelineError, RunControl, RunPaths};
use serde_json::json;

use crate::config::{self, build_gateway, Config, ENV_STUB_SEED};
use crate::{ConfigArgs, Failure};

type Result<T = ()> = std::result::Result<T, Failure>;

fn load_config(args: &ConfigArgs) -> Result<Config> {
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("gateway.stub.seed={seed}"));
    }
    config::load(args.config.as_deref(), &overrides)
}

fn pretty(v: &impl serde::Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}

fn read_benchmark_manifest(path: &Path) -> Result<BenchmarkManifest> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Fatal(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Failure::Fatal(format!("{}: {e}", path.display())))
}

/// `bench.json` keeps its audit log in `bench.audit.jsonl` alongside.
fn default_audit_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("audit.jsonl")
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

fn announce(what: &str, addr: SocketAddr) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{what} listening on http://{addr}");
    let _ = out.flush();
}

#[derive(Args, Debug)]
pub struct AnnotateArgs {
    /// JSONL image manifest: one {image_id, uri, width, height} per line
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Output directory for shards, rejects, failures and report.json
    #[arg(long, value_name = "DIR")]
    output: PathBuf,
    /// Journal file; defaults to journal.jsonl in the output directory
    #[arg(long, value_name = "PATH")]
    journal: Option<PathBuf>,
    /// Stop after this many images are journaled; rerun to resume
    #[arg(long, value_name = "N")]
    halt_after: Option<usize>,
    #[command(flatten)]
    config: ConfigArgs,
}

pub async fn annotate(args: AnnotateArgs) -> Result {
    let cfg = load_config(&args.config)?;
    let gw = build_gateway(&cfg.gateway)?;
    let manifest = read_manifest(&args.manifest).map_err(Failure::fatal)?;
    let mut paths = RunPaths::in_dir(&args.output);
    if let Some(j) = args.journal {
        paths.journal = j;
    }
    let cancel = Arc::new(AtomicBool::new(false));
    let flag = cancel.clone();
    tokio::spawn(async move {
        shutdown_signal().await;
        tracing::warn!("interrupt received, stopping after in-flight images");
        flag.store(true, Ordering::SeqCst);
    });
    let control = RunControl {
        halt_after: args.halt_after,
        cancel: Some(cancel),
    };
    let report = match run_pipeline(&manifest, &cfg.pipeline, &gw, &paths, &control).await {
        Ok(r) => r,
        Err(PipelineError::Halted { completed }) => {
            return Err(Failure::Partial(format!(
                "stopped after {completed} images; rerun the same command to resume"
            )))
        }
        Err(e @ PipelineError::Config(_)) => return Err(Failure::Usage(e.to_string())),
        Err(e) => return Err(Failure::fatal(e)),
    };
    tracing::info!(
        localize_secs = report.timing.localize_secs,
        generate_secs = report.timing.generate_secs,
        filter_secs = report.timing.filter_secs,
        "stage timing"
    );
    std::io::stdout().write_all(&pretty(&report)).map_err(Failure::fatal)?;
    if report.errors() > 0 {
        return Err(Failure::Partial(format!(
            "{} images failed and {} samples could not be filtered; see failures.jsonl and rejects.jsonl",
            report.failed, report.filter_errors
        )));
    }
    Ok(())
}

#[derive(Subcommand, Debug)]
pub enum CurateCommand {
    /// Classify, screen and refine annotated samples, then assemble a
    /// benchmark manifest pending review
    Build(CurateBuildArgs),
    /// Add pending items to replace rejected ones
    TopUp(CurateTopUpArgs),
    /// Freeze a fully reviewed manifest and export the benchmark files
    Finalize(CurateFinalizeArgs),
}

#[derive(Args, Debug)]
pub struct CurateBuildArgs {
    /// Shard set written by annotate
    #[arg(long, value_name = "DIR")]
    shards: PathBuf,
    /// Output directory for candidates, rejects and the manifest
    #[arg(long, value_name = "DIR")]
    output: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct CurateTopUpArgs {
    /// Benchmark manifest to extend in place
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Audit log to catch up from; defaults to <manifest>.audit.jsonl
    #[arg(long, value_name = "PATH")]
    audit: Option<PathBuf>,
    /// Candidate shard set written by curate build
    #[arg(long, value_name = "DIR")]
    candidates: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct CurateFinalizeArgs {
    /// Reviewed benchmark manifest
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Audit log to catch up from; defaults to <manifest>.audit.jsonl
    #[arg(long, value_name = "PATH")]
    audit: Option<PathBuf>,
    /// Directory for the finalized manifest and benchmark JSONL files
    #[arg(long, value_name = "DIR")]
    export: PathBuf,
}

fn curation_failure(e: CurationError) -> Failure {
    Failure::Fatal(e.to_string())
}

fn open_store(manifest: &Path, audit: Option<&Path>) -> Result<ReviewStore> {
    let audit = audit
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_audit_path(manifest));
    ReviewStore::open(manifest, &audit).map_err(Failure::fatal)
}

fn read_samples(dir: &Path) -> Result<Vec<ReferringSample>> {
    let set = ShardSet::open(dir).map_err(Failure::fatal)?;
    set.read_all().map_err(Failure::fatal)
}

pub async fn curate(cmd: CurateCommand) -> Result {
    match cmd {
        CurateCommand::Build(a) => curate_build(a).await,
        CurateCommand::TopUp(a) => {
            let cfg = load_config(&a.config)?;
            let store = open_store(&a.manifest, a.audit.as_deref())?;
            let mut manifest = store.manifest().clone();
            let candidates = read_samples(&a.candidates)?;
            let added = top_up(&mut manifest, &candidates, cfg.curate.assemble_options()).map_err(curation_failure)?;
            atomic_write(&a.manifest, &pretty(&manifest)).map_err(Failure::fatal)?;
            println!("added {added} pending items");
            Ok(())
        }
        CurateCommand::Finalize(a) => {
            let store = open_store(&a.manifest, a.audit.as_deref())?;
            let final_manifest = store.manifest().finalize().map_err(curation_failure)?;
            std::fs::create_dir_all(&a.export).map_err(Failure::fatal)?;
            let path = a.export.join(format!("{}.final.json", final_manifest.name));
            atomic_write(&path, &pretty(&final_manifest)).map_err(Failure::fatal)?;
            println!("{}", path.display());
            for p in export_benchmark(&final_manifest, &a.export).map_err(curation_failure)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

async fn curate_build(a: CurateBuildArgs) -> Result {
    let cfg = load_config(&a.config)?;
    let gw = build_gateway(&cfg.gateway)?;
    let samples = read_samples(&a.shards)?;
    let concurrency = cfg.curate.concurrency.max(1);
    let screened = classify_and_screen(&gw, samples, concurrency).await;
    let candidates = if cfg.curate.refine {
        refine_all(&gw, screened.categorized, &cfg.refine, concurrency)
            .await
            .map_err(curation_failure)?
    } else {
        screened.categorized
    };
    let out = &a.output;
    std::fs::create_dir_all(out).map_err(Failure::fatal)?;
    let cand_dir = out.join("candidates");
    if cand_dir.exists() {
        std::fs::remove_dir_all(&cand_dir).map_err(Failure::fatal)?;
    }
    write_shards(&candidates, &cand_dir, cfg.pipeline.shard_size).map_err(Failure::fatal)?;
    atomic_write(&out.join("screen_rejects.jsonl"), &to_jsonl(&screened.rejects)).map_err(Failure::fatal)?;
    atomic_write(&out.join("quarantine.jsonl"), &to_jsonl(&screened.quarantine)).map_err(Failure::fatal)?;
    let manifest = assemble_benchmark(
        &cfg.curate.name,
        &candidates,
        cfg.curate.quotas,
        cfg.curate.assemble_options(),
    )
    .map_err(curation_failure)?;
    let path = out.join(format!("{}.json", cfg.curate.name));
    atomic_write(&path, &pretty(&manifest)).map_err(Failure::fatal)?;
    println!(
        "{} candidates, {} screened out, {} quarantined, {} items in {}",
        candidates.len(),
        screened.rejects.len(),
        screened.quarantine.len(),
        manifest.items.len(),
        path.display()
    );
    if !screened.quarantine.is_empty() {
        return Err(Failure::Partial(format!(
            "{} samples could not be classified; see quarantine.jsonl",
            screened.quarantine.len()
        )));
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct ReviewServeArgs {
    /// Benchmark manifest written by curate build
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Audit log; defaults to <manifest>.audit.jsonl
    #[arg(long, value_name = "PATH")]
    audit: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Port to listen on; 0 picks a free one
    #[arg(long, default_value_t = 8600)]
    port: u16,
    /// Bearer token required by POST /review/reset
    #[arg(long, env = "GF_ADMIN_TOKEN", hide_env_values = true)]
    admin_token: Option<String>,
}

pub async fn review_serve(a: ReviewServeArgs) -> Result {
    let mut store = open_store(&a.manifest, a.audit.as_deref())?;
    if let Some(t) = a.admin_token {
        store = store.with_admin_token(t);
    }
    let (listener, addr) = bind(SocketAddr::new(a.host, a.port)).await.map_err(Failure::fatal)?;
    announce("review service", addr);
    serve_review(store, listener, shutdown_signal())
        .await
        .map_err(Failure::fatal)
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Benchmark JSONL with masks or boxes
    #[arg(long, value_name = "PATH")]
    gt: PathBuf,
    /// Prediction JSONL, one {sample_id, mask|bbox} per line; repeat to
    /// compare methods, each row named after its file stem
    #[arg(long = "predictions", value_name = "PATH", required = true)]
    predictions: Vec<PathBuf>,
    /// giou, ciou or acc@T; repeatable [default: giou ciou]
    #[arg(long = "metric", value_name = "NAME")]
    metrics: Vec<Metric>,
    /// Also write report.json and table.txt here
    #[arg(long, value_name = "DIR")]
    output: Option<PathBuf>,
}

pub fn evaluate(a: EvaluateArgs) -> Result {
    let metrics = if a.metrics.is_empty() {
        vec![Metric::GIoU, Metric::CIoU]
    } else {
        a.metrics
    };
    let gt: Vec<BenchmarkRecord> = read_jsonl(&a.gt).map_err(Failure::fatal)?;
    let mut rows: Vec<Vec<(String, _)>> = vec![Vec::new(); metrics.len()];
    let mut runs = Vec::new();
    for path in &a.predictions {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let preds: Vec<Prediction> = read_jsonl(path).map_err(Failure::fatal)?;
        let ev = score(&gt, &preds, &metrics).map_err(Failure::fatal)?;
        if !ev.missing.is_empty() {
            tracing::warn!(method = %name, missing = ev.missing.len(), "benchmark items without a prediction scored as empty");
        }
        if !ev.extra.is_empty() {
            tracing::warn!(method = %name, extra = ev.extra.len(), "predictions for unknown sample ids ignored");
        }
        for (i, rep) in ev.reports.iter().enumerate() {
            rows[i].push((name.clone(), rep.clone()));
        }
        runs.push(json!({
            "method": name,
            "kind": ev.kind,
            "missing": ev.missing,
            "extra": ev.extra,
            "reports": ev.reports,
        }));
    }
    let table = rows.iter().map(|r| format_table(r)).collect::<Vec<_>>().join("\n");
    print!("{table}");
    if let Some(dir) = a.output {
        std::fs::create_dir_all(&dir).map_err(Failure::fatal)?;
        atomic_write(&dir.join("report.json"), &pretty(&runs)).map_err(Failure::fatal)?;
        atomic_write(&dir.join("table.txt"), table.as_bytes()).map_err(Failure::fatal)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Shard set directory
    shards: PathBuf,
    /// Print the full statistics as JSON
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn stats(a: StatsArgs) -> Result {
    let cfg = load_config(&a.config)?;
    if cfg.stats.area_bins == 0 || cfg.stats.grid_rows == 0 || cfg.stats.grid_cols == 0 {
        return Err(Failure::Usage("stats bins and grid sizes must be at least 1".into()));
    }
    let set = ShardSet::open(&a.shards).map_err(Failure::fatal)?;
    let s = compute_stats(&set, cfg.stats).map_err(Failure::fatal)?;
    if a.json {
        std::io::stdout()
            .write_all(&pretty(&s.summary_json()))
            .map_err(Failure::fatal)?;
        return Ok(());
    }
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
    println!("samples       {}", s.count);
    println!("mean words    {}", fmt(s.mean_words()));
    println!("median words  {}", fmt(s.median_words()));
    println!("empty masks   {}", s.empty_masks);
    Ok(())
}

#[derive(Args, Debug)]
pub struct StubServeArgs {
    /// Stub seed
    #[arg(long, env = ENV_STUB_SEED, default_value_t = 0)]
    seed: u64,
    /// Boxes the grounder reports per phrase
    #[arg(long, default_value_t = 1)]
    boxes_per_phrase: u32,
    /// Report grounder boxes in [0, 1] coordinates
    #[arg(long)]
    normalized_coords: bool,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Port to listen on; 0 picks a free one
    #[arg(long, default_value_t = 0)]
    port: u16,
}

pub async fn stub_serve(a: StubServeArgs) -> Result {
    if a.boxes_per_phrase == 0 {
        return Err(Failure::Usage("--boxes-per-phrase must be at least 1".into()));
    }
    let backend = StubBackend::new(StubOptions {
        seed: a.seed,
        boxes_per_phrase: a.boxes_per_phrase,
        normalized_coords: a.normalized_coords,
        ..Default::default()
    });
    let (listener, addr) = bind(SocketAddr::new(a.host, a.port)).await.map_err(Failure::fatal)?;
    announce("stub backend", addr);
    serve_stub(backend, listener, shutdown_signal())
        .await
        .map_err(Failure::fatal)
}

#[derive(Args, Debug)]
pub struct BboxDeriveArgs {
    /// Finalized benchmark manifest
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Output JSONL of box records
    #[arg(long, value_name = "PATH")]
    output: PathBuf,
}

pub fn bbox_derive(a: BboxDeriveArgs) -> Result {
    let manifest = read_benchmark_manifest(&a.manifest)?;
    let boxes = derive_bbox_benchmark(&manifest).map_err(|e| match e {
        CurationError::NotFinalized => Failure::Usage(format!("{} is not finalized", a.manifest.display())),
        e => curation_failure(e),
    })?;
    atomic_write(&a.output, &to_jsonl(&boxes)).map_err(Failure::fatal)?;
    println!("{} boxes written to {}", boxes.len(), a.output.display());
    Ok(())
}
