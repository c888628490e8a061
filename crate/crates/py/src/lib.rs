//! Python bindings: masks, metrics, evaluation, stats and the stub-backed
//! annotation pipeline.

use std::path::PathBuf;
use std::sync::Arc;

use groundforge::curation::{derive_bbox_benchmark, BenchmarkManifest, BenchmarkRecord};
use groundforge::datastore::{atomic_write, compute_stats, read_jsonl, to_jsonl, ShardSet, StatsConfig};
use groundforge::evaluation::{evaluate as score, Prediction};
use groundforge::gateway::{Gateway, GatewayConfig, StubBackend, StubOptions};
use groundforge::mask::{
    box_iou as bbox_iou, rle_decode, rle_encode, rle_overlap, tight_bbox, BBox, BinaryMask, RleMask,
};
use groundforge::metrics::{self, format_table, BoxPair, MaskInput, MaskPair, Metric};
use groundforge::pipeline::{read_manifest, run_pipeline, PipelineConfig, RunControl, RunPaths};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

type Box4 = (u32, u32, u32, u32);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_bbox(b: Box4) -> PyResult<BBox> {
    BBox::new(b.0, b.1, b.2, b.3).map_err(value_err)
}

fn from_bbox(b: BBox) -> Box4 {
    let [x0, y0, x1, y1] = b.to_array();
    (x0, y0, x1, y1)
}

/// Parse JSON text into Python objects.
fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

/// Column-major run-length encoded binary mask.
#[pyclass(name = "RleMask", module = "groundforge_py", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyRleMask {
    inner: RleMask,
}

#[pymethods]
impl PyRleMask {
    #[new]
    fn new(width: u32, height: u32, runs: Vec<u32>) -> PyResult<Self> {
        Ok(Self {
            inner: RleMask::new(width, height, runs).map_err(value_err)?,
        })
    }

    /// Encode a row-major grid given as a list of rows.
    #[staticmethod]
    fn encode(rows: Vec<Vec<bool>>) -> PyResult<Self> {
        let height = rows.len() as u32;
        let width = rows.first().map_or(0, |r| r.len()) as u32;
        if rows.iter().any(|r| r.len() as u32 != width) {
            return Err(PyValueError::new_err("rows differ in length"));
        }
        let mask = BinaryMask::from_bits(width, height, rows.concat()).map_err(value_err)?;
        Ok(Self {
            inner: rle_encode(&mask),
        })
    }

    #[staticmethod]
    fn from_box(width: u32, height: u32, bbox: Box4) -> PyResult<Self> {
        let mask = BinaryMask::from_box(width, height, &to_bbox(bbox)?).map_err(value_err)?;
        Ok(Self {
            inner: rle_encode(&mask),
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(value_err)?,
        })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("masks serialize")
    }

    /// The mask as a list of rows.
    fn decode(&self) -> PyResult<Vec<Vec<bool>>> {
        let m = rle_decode(&self.inner).map_err(value_err)?;
        Ok(m.bits()
            .chunks(m.width().max(1) as usize)
            .map(<[bool]>::to_vec)
            .collect())
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.height()
    }

    #[getter]
    fn runs(&self) -> Vec<u32> {
        self.inner.runs().to_vec()
    }

    #[getter]
    fn area(&self) -> u64 {
        self.inner.area()
    }

    /// Intersection and union pixel counts against another mask.
    fn overlap(&self, other: &PyRleMask) -> PyResult<(u64, u64)> {
        rle_overlap(&self.inner, &other.inner).map_err(value_err)
    }

    fn iou(&self, other: &PyRleMask) -> PyResult<f64> {
        let (i, u) = self.overlap(other)?;
        Ok(groundforge::mask::iou_from_counts(i, u))
    }

    /// Tight half-open box `(xmin, ymin, xmax, ymax)`, or None when empty.
    fn tight_bbox(&self) -> PyResult<Option<Box4>> {
        let m = rle_decode(&self.inner).map_err(value_err)?;
        Ok(tight_bbox(&m).ok().map(from_bbox))
    }

    fn __repr__(&self) -> String {
        format!(
            "RleMask(width={}, height={}, area={})",
            self.inner.width(),
            self.inner.height(),
            self.inner.area()
        )
    }
}

fn mask_pairs(pairs: Vec<(PyRef<'_, PyRleMask>, PyRef<'_, PyRleMask>)>) -> Vec<MaskPair> {
    pairs
        .into_iter()
        .enumerate()
        .map(|(i, (p, g))| MaskPair {
            sample_id: i.to_string(),
            prediction: MaskInput::Rle(p.inner.clone()),
            ground_truth: MaskInput::Rle(g.inner.clone()),
            category: None,
        })
        .collect()
}

/// Mean per-pair IoU over `(prediction, ground_truth)` mask pairs.
#[pyfunction]
fn giou(pairs: Vec<(PyRef<'_, PyRleMask>, PyRef<'_, PyRleMask>)>) -> PyResult<f64> {
    metrics::giou(&mask_pairs(pairs)).map_err(value_err)
}

/// Total intersection over total union.
#[pyfunction]
fn ciou(pairs: Vec<(PyRef<'_, PyRleMask>, PyRef<'_, PyRleMask>)>) -> PyResult<f64> {
    metrics::ciou(&mask_pairs(pairs)).map_err(value_err)
}

/// Share of `(prediction, ground_truth)` box pairs with IoU at or above
/// `threshold`.
#[pyfunction]
#[pyo3(signature = (pairs, threshold = 0.5))]
fn acc_at(pairs: Vec<(Box4, Box4)>, threshold: f64) -> PyResult<f64> {
    let pairs = pairs
        .into_iter()
        .enumerate()
        .map(|(i, (p, g))| {
            Ok(BoxPair {
                sample_id: i.to_string(),
                prediction: to_bbox(p)?,
                ground_truth: to_bbox(g)?,
                category: None,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    metrics::acc_at(&pairs, threshold).map_err(value_err)
}

#[pyfunction]
fn box_iou(a: Box4, b: Box4) -> PyResult<f64> {
    Ok(bbox_iou(&to_bbox(a)?, &to_bbox(b)?))
}

/// Score a prediction JSONL file against a benchmark JSONL file. Returns
/// a dict with the reports, missing and extra ids, and the printed table.
#[pyfunction]
#[pyo3(signature = (gt, predictions, metrics = vec!["giou".to_string(), "ciou".to_string()]))]
fn evaluate<'py>(
    py: Python<'py>,
    gt: PathBuf,
    predictions: PathBuf,
    metrics: Vec<String>,
) -> PyResult<Bound<'py, PyAny>> {
    let metrics = metrics
        .iter()
        .map(|m| m.parse::<Metric>().map_err(PyValueError::new_err))
        .collect::<PyResult<Vec<_>>>()?;
    let gt: Vec<BenchmarkRecord> = read_jsonl(&gt).map_err(value_err)?;
    let name = predictions
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let preds: Vec<Prediction> = read_jsonl(&predictions).map_err(value_err)?;
    let ev = score(&gt, &preds, &metrics).map_err(value_err)?;
    let table = ev
        .reports
        .iter()
        .map(|r| format_table(&[(name.clone(), r.clone())]))
        .collect::<Vec<_>>()
        .join("\n");
    let v = serde_json::json!({
        "kind": ev.kind,
        "reports": ev.reports,
        "missing": ev.missing,
        "extra": ev.extra,
        "table": table,
    });
    json_to_py(py, &v)
}

/// Word-count, area and centroid statistics of a shard set.
#[pyfunction]
fn dataset_stats<'py>(py: Python<'py>, shards: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let set = ShardSet::open(shards).map_err(value_err)?;
    let stats = py
        .detach(|| compute_stats(&set, StatsConfig::default()))
        .map_err(runtime_err)?;
    json_to_py(py, &stats.summary_json())
}

/// Write the box twin of a finalized benchmark manifest. Returns the
/// number of records written.
#[pyfunction]
fn derive_bboxes(manifest: PathBuf, output: PathBuf) -> PyResult<usize> {
    let bytes = std::fs::read(&manifest).map_err(value_err)?;
    let m: BenchmarkManifest = serde_json::from_slice(&bytes).map_err(value_err)?;
    let boxes = derive_bbox_benchmark(&m).map_err(value_err)?;
    atomic_write(&output, &to_jsonl(&boxes)).map_err(runtime_err)?;
    Ok(boxes.len())
}

/// Run the annotation pipeline against the in-process stub backend.
/// Returns the run report as a dict.
#[pyfunction]
#[pyo3(signature = (manifest, output, seed = 0, concurrency = 8, filter_iou_threshold = 0.5))]
fn annotate<'py>(
    py: Python<'py>,
    manifest: PathBuf,
    output: PathBuf,
    seed: u64,
    concurrency: usize,
    filter_iou_threshold: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let entries = read_manifest(&manifest).map_err(value_err)?;
    let config = PipelineConfig {
        concurrency,
        filter_iou_threshold,
        ..Default::default()
    };
    let report = py.detach(|| {
        let gw = Gateway::new(
            Arc::new(StubBackend::new(StubOptions {
                seed,
                ..Default::default()
            })),
            GatewayConfig::default(),
        );
        let rt = tokio::runtime::Runtime::new().map_err(runtime_err)?;
        rt.block_on(run_pipeline(
            &entries,
            &config,
            &gw,
            &RunPaths::in_dir(&output),
            &RunControl::default(),
        ))
        .map_err(runtime_err)
    })?;
    json_to_py(py, &serde_json::to_value(&report).expect("report serializes"))
}

#[pymodule]
fn groundforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRleMask>()?;
    m.add_function(wrap_pyfunction!(giou, m)?)?;
    m.add_function(wrap_pyfunction!(ciou, m)?)?;
    m.add_function(wrap_pyfunction!(acc_at, m)?)?;
    m.add_function(wrap_pyfunction!(box_iou, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_stats, m)?)?;
    m.add_function(wrap_pyfunction!(derive_bboxes, m)?)?;
    m.add_function(wrap_pyfunction!(annotate, m)?)?;
    Ok(())
}
