//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use groundforge::curation::service::read_audit_log;
use groundforge::curation::{
    assemble_benchmark, derive_bbox_benchmark, replay, AssembleOptions, BenchmarkManifest, BenchmarkRecord, Quotas,
    ReviewItem, ReviewStatus,
};
use groundforge::datastore::{
    compute_stats, stats_of, to_jsonl, write_shards, Provenance, ReferringSample, ShardSet, StatsConfig,
};
use groundforge::evaluation::{evaluate, Prediction};
use groundforge::gateway::{Gateway, GatewayConfig, StubBackend, StubOptions};
use groundforge::mask::{rle_decode, rle_encode, union_masks, BBox, BinaryMask, RleMask};
use groundforge::metrics::{ciou, giou, Category, MaskInput, MaskPair, Metric};
use groundforge::pipeline::{run_pipeline, ManifestEntry, PipelineConfig, RejectRecord, RunControl, RunPaths};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

fn random_mask(rng: &mut StdRng, w: u32, h: u32) -> BinaryMask {
    let density: f64 = rng.random_range(0.0..1.0);
    let bits = (0..w * h).map(|_| rng.random_bool(density)).collect();
    BinaryMask::from_bits(w, h, bits).unwrap()
}

fn counts(a: &BinaryMask, b: &BinaryMask) -> (u64, u64) {
    let (mut i, mut u) = (0, 0);
    for r in 0..a.height() {
        for c in 0..a.width() {
            let (x, y) = (a.get(r, c), b.get(r, c));
            i += (x && y) as u64;
            u += (x || y) as u64;
        }
    }
    (i, u)
}

fn metric_oracle() {
    let t = Instant::now();
    let mut rng = StdRng::seed_from_u64(2024);
    let mut pairs = Vec::new();
    let (mut sum_iou, mut sum_i, mut sum_u) = (0.0, 0u64, 0u64);
    for k in 0..200 {
        let (w, h) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let (a, b) = (random_mask(&mut rng, w, h), random_mask(&mut rng, w, h));
        let (i, u) = counts(&a, &b);
        sum_iou += if u == 0 { 1.0 } else { i as f64 / u as f64 };
        sum_i += i;
        sum_u += u;
        pairs.push(MaskPair {
            sample_id: format!("p{k}"),
            prediction: MaskInput::Dense(a),
            ground_truth: if k % 2 == 0 {
                MaskInput::Dense(b)
            } else {
                MaskInput::Rle(rle_encode(&b))
            },
            category: None,
        });
    }
    let (g, c) = (giou(&pairs).unwrap(), ciou(&pairs).unwrap());
    let (og, oc) = (sum_iou / 200.0, sum_i as f64 / sum_u as f64);
    assert!((g - og).abs() <= 1e-12, "gIoU {g} vs oracle {og}");
    assert!((c - oc).abs() <= 1e-12, "cIoU {c} vs oracle {oc}");
    assert!(t.elapsed() < Duration::from_secs(5), "took {:?}", t.elapsed());
}

fn ciou_bias() {
    let big = BinaryMask::from_box(20, 10, &BBox::new(0, 0, 10, 10).unwrap()).unwrap();
    let small = BinaryMask::from_box(20, 10, &BBox::new(10, 0, 20, 1).unwrap()).unwrap();
    let empty = BinaryMask::empty(20, 10).unwrap();
    assert_eq!(counts(&big, &big), (100, 100));
    assert_eq!(counts(&empty, &small), (0, 10));
    let pairs = vec![
        MaskPair {
            sample_id: "large".into(),
            prediction: MaskInput::Dense(big.clone()),
            ground_truth: MaskInput::Dense(big),
            category: None,
        },
        MaskPair {
            sample_id: "small".into(),
            prediction: MaskInput::Dense(empty),
            ground_truth: MaskInput::Dense(small),
            category: None,
        },
    ];
    assert_eq!(ciou(&pairs).unwrap(), 100.0 / 110.0);
    assert_eq!(giou(&pairs).unwrap(), 0.5);
}

fn filter_threshold() {
    // object boxes span rows 16..116 of a 132-row image, so dropping k
    // bottom rows from the referrer mask gives IoU (100 - k) / 100
    let ids = [("img_a", 51), ("img_b", 50), ("img_c", 49)];
    let manifest: Vec<_> = ids
        .iter()
        .map(|(id, _)| ManifestEntry {
            image_id: id.to_string(),
            uri: format!("mem://{id}"),
            width: 200,
            height: 132,
        })
        .collect();
    let opts = StubOptions {
        seed: 7,
        shrink_rows: ids.iter().map(|(id, k)| (id.to_string(), *k)).collect(),
        ..StubOptions::default()
    };
    let gw = Gateway::new(Arc::new(StubBackend::new(opts)), GatewayConfig::default());
    let tmp = tempfile::tempdir().unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let report = rt
        .block_on(run_pipeline(
            &manifest,
            &PipelineConfig::default(),
            &gw,
            &RunPaths::in_dir(tmp.path()),
            &RunControl::default(),
        ))
        .unwrap();
    let kept: Vec<ReferringSample> = ShardSet::open(tmp.path().join("shards")).unwrap().read_all().unwrap();
    let kept_iou: BTreeMap<&str, BTreeSet<String>> = kept.iter().fold(BTreeMap::new(), |mut m, s| {
        m.entry(s.image_id.as_str())
            .or_default()
            .insert(format!("{:?}", s.filter_iou.unwrap()));
        m
    });
    assert!(!kept_iou.contains_key("img_a"), "0.49 kept");
    assert_eq!(kept_iou["img_b"], BTreeSet::from(["0.5".to_string()]));
    assert_eq!(kept_iou["img_c"], BTreeSet::from(["0.51".to_string()]));
    let rejects: Vec<RejectRecord> = std::fs::read_to_string(tmp.path().join("rejects.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rejects.len() as u64, report.dropped);
    assert!(!rejects.is_empty());
    for r in &rejects {
        let iou = r.filter_iou.expect("low_iou rejects carry an IoU");
        assert!(iou < 0.5, "{} logged with IoU {iou}", r.sample_id);
        assert_eq!(iou, 0.49);
    }
}

fn annotate(manifest: &Path, out: &Path, extra: &[&str]) -> i32 {
    let t = Instant::now();
    let o = bin()
        .args([
            "annotate",
            "--manifest",
            manifest.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ])
        .args(["--seed", "11"])
        .args(extra)
        .output()
        .unwrap();
    assert!(t.elapsed() < Duration::from_secs(30), "annotate took {:?}", t.elapsed());
    code(&o)
}

fn determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("m.jsonl");
    write_manifest(&m, 20);
    let dir = |s: &str| tmp.path().join(s);
    assert_eq!(annotate(&m, &dir("a"), &[]), 0);
    let reference = tree(&dir("a"));
    assert!(reference.keys().any(|k| k.starts_with("shards/")));

    assert_eq!(annotate(&m, &dir("b"), &[]), 0);
    assert!(tree(&dir("b")) == reference, "two fresh runs differ");

    assert_eq!(annotate(&m, &dir("c"), &["--halt-after", "7"]), 3);
    assert_eq!(annotate(&m, &dir("c"), &["--halt-after", "5"]), 3);
    assert_eq!(annotate(&m, &dir("c"), &[]), 0);
    assert!(tree(&dir("c")) == reference, "interrupted and resumed run differs");

    assert_eq!(annotate(&m, &dir("d1"), &["--set", "pipeline.concurrency=1"]), 0);
    assert_eq!(annotate(&m, &dir("d8"), &["--set", "pipeline.concurrency=8"]), 0);
    assert!(tree(&dir("d1")) == reference, "concurrency 1 differs");
    assert!(tree(&dir("d8")) == reference, "concurrency 8 differs");
}

fn rle_round_trip() {
    let mut rng = StdRng::seed_from_u64(99);
    for _ in 0..1000 {
        let (w, h) = (rng.random_range(1..=64), rng.random_range(1..=64));
        let m = random_mask(&mut rng, w, h);
        let rle = rle_encode(&m);
        assert_eq!(rle_decode(&rle).unwrap(), m);
        let text = serde_json::to_string(&rle).unwrap();
        let back: RleMask = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rle);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }
}

fn candidate(i: usize, image: usize, c: Category) -> ReferringSample {
    ReferringSample {
        sample_id: format!("img{image:06}#{:04}@v1", i % 10_000),
        image_id: format!("img{image:06}"),
        image_uri: format!("mem://img{image:06}"),
        width: 4,
        height: 4,
        text: format!("candidate {i}"),
        mask: RleMask::new(4, 4, vec![5, 2, 9]).unwrap(),
        bbox: None,
        category: Some(c),
        filter_iou: Some(1.0),
        refinement: None,
        provenance: Provenance::default(),
    }
}

fn quotas() {
    // categories drawn in proportion 10:5:8:15; about one candidate in
    // six shares its image with the previous one
    let mut rng = StdRng::seed_from_u64(5);
    let mut image = 0;
    let pool: Vec<_> = (0..6000)
        .map(|i| {
            let c = match rng.random_range(0..38) {
                0..=9 => Category::Stuff,
                10..=14 => Category::Part,
                15..=22 => Category::Multi,
                _ => Category::Single,
            };
            if !rng.random_bool(1.0 / 6.0) {
                image += 1;
            }
            candidate(i, image, c)
        })
        .collect();
    let opts = AssembleOptions::default();
    let m = assemble_benchmark("gs", &pool, Quotas::default(), opts).unwrap();
    assert_eq!(m.items.len(), 3800);
    let images: BTreeSet<_> = m.items.iter().map(|i| &i.image_id).collect();
    assert_eq!(images.len(), 3800, "images reused");
    for c in Category::ALL {
        let n = m.items.iter().filter(|i| i.category == c).count();
        assert_eq!(n, Quotas::default().get(c), "{c}");
    }
    let mut shuffled = pool.clone();
    shuffled.reverse();
    assert!(assemble_benchmark("gs", &shuffled, Quotas::default(), opts).unwrap() == m);
    let seeded = AssembleOptions { seed: Some(3), ..opts };
    let s1 = assemble_benchmark("gs", &pool, Quotas::default(), seeded).unwrap();
    assert_eq!(s1.items.len(), 3800);
    assert!(assemble_benchmark("gs", &shuffled, Quotas::default(), seeded).unwrap() == s1);
}

fn review_item(id: String, c: Category, mask: &BinaryMask) -> ReviewItem {
    ReviewItem {
        image_id: id.clone(),
        sample_id: id,
        image_uri: String::new(),
        width: mask.width(),
        height: mask.height(),
        referring_text: "t".into(),
        mask: rle_encode(mask),
        proposed_category: c,
        category: c,
        status: ReviewStatus::Accepted,
        reviewer_id: Some("r".into()),
        decided_at: Some(0),
        version: 1,
    }
}

fn random_box(rng: &mut StdRng, w: u32, h: u32) -> BBox {
    let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
    BBox::new(x0, y0, rng.random_range(x0 + 1..=w), rng.random_range(y0 + 1..=h)).unwrap()
}

fn bbox_derivation() {
    let mut rng = StdRng::seed_from_u64(17);
    let mut items = Vec::new();
    let mut multi_boxes = BTreeMap::new();
    for k in 0..200 {
        let (w, h) = (rng.random_range(4..=48), rng.random_range(4..=48));
        let c = Category::ALL[k % 4];
        let mask = if c == Category::Multi {
            let parts: Vec<BBox> = (0..rng.random_range(2..=4))
                .map(|_| random_box(&mut rng, w, h))
                .collect();
            let masks: Vec<_> = parts.iter().map(|b| BinaryMask::from_box(w, h, b).unwrap()).collect();
            let hull = parts.iter().skip(1).fold(parts[0].to_array(), |a, b| {
                let b = b.to_array();
                [a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])]
            });
            multi_boxes.insert(format!("s{k:03}"), hull);
            union_masks(&masks).unwrap()
        } else {
            let mut m = random_mask(&mut rng, w, h);
            m.set(rng.random_range(0..h), rng.random_range(0..w), true);
            m
        };
        items.push(review_item(format!("s{k:03}"), c, &mask));
    }
    let mut manifest = BenchmarkManifest::new("b", Quotas::default(), items);
    manifest.finalized = true;
    let boxes = derive_bbox_benchmark(&manifest).unwrap();
    for (r, it) in boxes.iter().zip(&manifest.items) {
        let m = rle_decode(&it.mask).unwrap();
        let b = r.bbox.unwrap();
        let fg: Vec<(u32, u32)> = m.foreground().collect();
        assert!(
            fg.iter().all(|&(row, col)| b.contains_pixel(row, col)),
            "{}: box misses a pixel",
            r.sample_id
        );
        // minimal: each edge row or column of the box holds a foreground pixel
        let [x0, y0, x1, y1] = b.to_array();
        assert!(fg.iter().any(|&(row, _)| row == y0) && fg.iter().any(|&(row, _)| row == y1 - 1));
        assert!(fg.iter().any(|&(_, col)| col == x0) && fg.iter().any(|&(_, col)| col == x1 - 1));
        if let Some(hull) = multi_boxes.get(&r.sample_id) {
            assert_eq!(&b.to_array(), hull, "{}", r.sample_id);
        }
    }
    let preds: Vec<Prediction> = boxes
        .iter()
        .map(|r| Prediction {
            sample_id: r.sample_id.clone(),
            mask: None,
            bbox: r.bbox,
        })
        .collect();
    let ev = evaluate(&boxes, &preds, &[Metric::AccAt(0.5)]).unwrap();
    assert_eq!(ev.reports[0].overall, 1.0);
    assert!(ev.reports[0].categories.values().all(|s| s.score == 1.0));
}

fn report_records() -> Vec<BenchmarkRecord> {
    let mut out = Vec::new();
    for (k, c) in Category::ALL.iter().enumerate() {
        for j in 0..3u32 {
            let b = BBox::new(j, k as u32, j + 4 + k as u32, 6 + j).unwrap();
            out.push(BenchmarkRecord {
                sample_id: format!("{c}_{j}"),
                image_id: format!("{c}_{j}"),
                image_uri: String::new(),
                width: 16,
                height: 16,
                text: "t".into(),
                category: *c,
                mask: Some(rle_encode(&BinaryMask::from_box(16, 16, &b).unwrap())),
                bbox: None,
            });
        }
    }
    out
}

fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("GF_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()));
    assert!(actual == expected, "{name} differs:\n{actual}");
}

fn report_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = report_records();
    let gt_path = tmp.path().join("gt.jsonl");
    std::fs::write(&gt_path, to_jsonl(&gt)).unwrap();
    // a second method that shifts every mask one column right
    let shifted: Vec<Value> = gt
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 3 != 2)
        .map(|(_, r)| {
            let m = rle_decode(r.mask.as_ref().unwrap()).unwrap();
            let mut s = BinaryMask::empty(16, 16).unwrap();
            for (row, col) in m.foreground() {
                if col + 1 < 16 {
                    s.set(row, col + 1, true);
                }
            }
            json!({"sample_id": r.sample_id, "mask": rle_encode(&s)})
        })
        .collect();
    let shifted_path = tmp.path().join("shifted.jsonl");
    std::fs::write(&shifted_path, to_jsonl(&shifted)).unwrap();

    let o = run(&[
        "evaluate",
        "--gt",
        gt_path.to_str().unwrap(),
        "--predictions",
        gt_path.to_str().unwrap(),
        "--predictions",
        shifted_path.to_str().unwrap(),
        "--metric",
        "giou",
        "--metric",
        "ciou",
        "--metric",
        "acc@0.5",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    golden("report.txt", &text);
    let headers: Vec<_> = text.lines().filter(|l| l.starts_with("Method")).collect();
    assert_eq!(headers.len(), 3);
    for h in headers {
        assert_eq!(
            h.split_whitespace().collect::<Vec<_>>(),
            ["Method", "Stuff", "Part", "Multi", "Single", "All"]
        );
    }
    let identity: Vec<_> = text.lines().filter(|l| l.starts_with("gt ")).collect();
    assert_eq!(identity.len(), 3);
    for line in identity {
        assert_eq!(
            line.split_whitespace().skip(1).collect::<Vec<_>>(),
            ["100.0"; 5],
            "{line}"
        );
    }
}

fn sample_with_text(id: usize, words: usize, mask: &BinaryMask) -> ReferringSample {
    let mut s = candidate(id, id, Category::Single);
    s.text = vec!["w"; words].join(" ");
    s.width = mask.width();
    s.height = mask.height();
    s.mask = rle_encode(mask);
    s
}

fn stats_monoid() {
    let cfg = StatsConfig::default();
    let m = BinaryMask::from_box(8, 8, &BBox::new(1, 1, 3, 4).unwrap()).unwrap();
    let fixture: Vec<_> = [10, 16, 22]
        .iter()
        .enumerate()
        .map(|(i, &w)| sample_with_text(i, w, &m))
        .collect();
    assert_eq!(stats_of(&fixture, cfg).mean_words(), Some(16.0));
    let odd: Vec<_> = [1, 2, 4]
        .iter()
        .enumerate()
        .map(|(i, &w)| sample_with_text(i, w, &m))
        .collect();
    assert_eq!(stats_of(&odd, cfg).mean_words(), Some(7.0 / 3.0));

    let mut rng = StdRng::seed_from_u64(8);
    let corpus: Vec<_> = (0..10_000)
        .map(|i| {
            let (w, h) = (rng.random_range(2..=24), rng.random_range(2..=24));
            let mask = if i % 97 == 0 {
                BinaryMask::empty(w, h).unwrap()
            } else {
                BinaryMask::from_box(w, h, &random_box(&mut rng, w, h)).unwrap()
            };
            sample_with_text(i, rng.random_range(1..40), &mask)
        })
        .collect();
    let single = stats_of(&corpus, cfg);
    let (a, b) = corpus.split_at(3_517);
    assert_eq!(stats_of(a, cfg).merge(&stats_of(b, cfg)).unwrap(), single);
    assert_eq!(stats_of(b, cfg).merge(&stats_of(a, cfg)).unwrap(), single);
    let tmp = tempfile::tempdir().unwrap();
    let set = write_shards(&corpus, tmp.path().join("s"), 5_000).unwrap();
    assert_eq!(set.entries().len(), 2);
    assert_eq!(compute_stats(&set, cfg).unwrap(), single);

    let big: Vec<_> = (0..100_000)
        .map(|i| {
            let mut s = corpus[i % corpus.len()].clone();
            s.image_id = format!("img{i:06}");
            s.sample_id = format!("img{i:06}#0000@v1");
            s
        })
        .collect();
    let set = write_shards(&big, tmp.path().join("big"), 10_000).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let t = Instant::now();
    let s = pool.install(|| compute_stats(&set, cfg)).unwrap();
    assert!(t.elapsed() < Duration::from_secs(60), "took {:?}", t.elapsed());
    assert_eq!(s.count, 100_000);
}

fn review_protocol() {
    let tmp = tempfile::tempdir().unwrap();
    let mask = BinaryMask::from_box(8, 8, &BBox::new(0, 0, 4, 4).unwrap()).unwrap();
    let items: Vec<_> = (0..6)
        .map(|i| {
            let mut it = review_item(format!("s{i}"), Category::ALL[i % 4], &mask);
            it.status = ReviewStatus::Pending;
            it.reviewer_id = None;
            it.decided_at = None;
            it.version = 0;
            it
        })
        .collect();
    let quotas = Quotas {
        stuff: 2,
        part: 2,
        multi: 1,
        single: 1,
    };
    let initial = BenchmarkManifest::new("rv", quotas, items);
    let manifest_path = tmp.path().join("rv.json");
    std::fs::write(&manifest_path, serde_json::to_vec_pretty(&initial).unwrap()).unwrap();
    let mut cmd = bin();
    cmd.args([
        "review-serve",
        "--manifest",
        manifest_path.to_str().unwrap(),
        "--port",
        "0",
    ])
    .env("GF_ADMIN_TOKEN", "sesame");
    let server = Server::start(cmd);
    let client = reqwest::blocking::Client::new();
    let decide = |id: &str, action: &str, version: u64, cat: Option<&str>| {
        let resp = client
            .post(format!("{}/review/decision", server.base))
            .json(&json!({"sample_id": id, "action": action, "new_category": cat, "reviewer_id": "r", "expected_version": version}))
            .send()
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json::<Value>().unwrap())
    };

    assert_eq!(decide("s0", "accept", 0, None).0, 200);
    let (status, body) = decide("s0", "reject", 0, None);
    assert_eq!(status, 409, "stale version accepted: {body}");
    assert_eq!(body["error"], "version_conflict");
    assert_eq!(body["current_version"], 1);
    let (status, body) = decide("s0", "reject", 1, None);
    assert_eq!(status, 422, "left a terminal state: {body}");
    assert_eq!(decide("s1", "reject", 0, None).0, 200);
    for action in ["accept", "reject"] {
        assert_eq!(decide("s1", action, 1, None).0, 422);
    }
    assert_eq!(decide("s1", "recategorize", 1, Some("part")).0, 422);
    assert_eq!(decide("s1", "reset", 1, None).0, 403, "reviewers cannot reset");
    let resp = client
        .post(format!("{}/review/reset", server.base))
        .json(&json!({"sample_id": "s1", "admin_id": "a", "expected_version": 1}))
        .send()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 403, "reset without token");
    let resp = client
        .post(format!("{}/review/reset", server.base))
        .bearer_auth("sesame")
        .json(&json!({"sample_id": "s1", "admin_id": "a", "expected_version": 1}))
        .send()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 200, "audited admin reset");
    assert_eq!(decide("s1", "accept", 2, None).0, 200);
    assert_eq!(decide("s2", "recategorize", 0, Some("stuff")).0, 200);
    assert_eq!(decide("s3", "accept", 0, None).0, 200);
    assert_eq!(decide("s4", "reject", 0, None).0, 200);
    assert_eq!(decide("s5", "accept", 0, None).0, 200);
    assert_eq!(decide("s9", "accept", 0, None).0, 404);

    let served: BenchmarkManifest = client
        .get(format!("{}/review/manifest", server.base))
        .send()
        .unwrap()
        .json()
        .unwrap();
    drop(server);
    let events = read_audit_log(&tmp.path().join("rv.audit.jsonl")).unwrap();
    assert_eq!(events.len(), 8);
    assert!(events.windows(2).all(|w| w[1].seq == w[0].seq + 1));
    for e in &events {
        assert!(e.to_version > e.from_version);
        assert!(!e.from_status.is_terminal() || e.action == groundforge::curation::Action::Reset);
    }
    assert!(
        replay(initial, &events).unwrap() == served,
        "replay differs from served manifest"
    );
    let on_disk: BenchmarkManifest = serde_json::from_slice(&std::fs::read(&manifest_path).unwrap()).unwrap();
    assert!(on_disk == served);
}

fn panic_message(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() {
    let criteria: [(&str, fn()); 10] = [
        ("metric oracle equivalence", metric_oracle),
        ("cIoU bias fixture", ciou_bias),
        ("filter threshold exactness", filter_threshold),
        ("end-to-end determinism", determinism),
        ("RLE round-trip", rle_round_trip),
        ("benchmark quotas", quotas),
        ("bbox derivation", bbox_derivation),
        ("report shape", report_shape),
        ("stats monoid", stats_monoid),
        ("review protocol", review_protocol),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let t = Instant::now();
        match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(()) => println!("PASS  {name} ({:.2}s)", t.elapsed().as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name}: {}", panic_message(e));
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
