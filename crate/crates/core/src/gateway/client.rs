use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use super::coords::{normalize_boxes, snap_to_pixels};
use super::protocol::*;
use super::template::{TemplateKind, TemplateSet};
use super::transport::{Transport, TransportError};
use super::{GatewayError, Role};
use crate::mask::{rle_decode, AlphaMatte, BBox, BinaryMask, RleMask, Trimap};
use crate::metrics::Category;

/// Per-role limits. `max_in_flight` bounds concurrent requests to the role's
/// backend; waiters are served in arrival order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointSettings {
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
}

impl Default for EndpointSettings {
    fn default() -> Self {
        Self {
            timeout_secs: 60.0,
            max_retries: 3,
            max_in_flight: 8,
        }
    }
}

/// Exponential backoff: the n-th retry waits `base * factor^(n-1)`, scaled
/// by a uniform factor in `[0.5, 1.5)` when jitter is on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backoff {
    pub base_secs: f64,
    pub factor: f64,
    pub jitter: bool,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base_secs: 0.5,
            factor: 2.0,
            jitter: true,
        }
    }
}

impl Backoff {
    pub fn delay(&self, retry: u32) -> Duration {
        let mut secs = self.base_secs * self.factor.powi(retry.saturating_sub(1) as i32);
        if self.jitter {
            secs *= rand::rng().random_range(0.5..1.5);
        }
        Duration::from_secs_f64(secs.max(0.0))
    }
}

#[derive(Debug, Clone, Default)]
pub struct GatewayConfig {
    pub endpoints: BTreeMap<Role, EndpointSettings>,
    pub backoff: Backoff,
    pub templates: TemplateSet,
}

impl GatewayConfig {
    pub fn settings(&self, role: Role) -> EndpointSettings {
        self.endpoints.get(&role).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundedBox {
    pub bbox: BBox,
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundedPhrase {
    pub phrase: String,
    pub boxes: Vec<GroundedBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub category: Category,
    pub referring_correct: bool,
}

#[derive(Default)]
struct Counters {
    calls: AtomicU64,
    attempts: AtomicU64,
    failures: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct RoleStats {
    pub calls: u64,
    pub attempts: u64,
    pub failures: u64,
}

pub struct Gateway {
    transport: Arc<dyn Transport>,
    config: GatewayConfig,
    permits: BTreeMap<Role, Arc<Semaphore>>,
    counters: BTreeMap<Role, Counters>,
}

impl Gateway {
    pub fn new(transport: Arc<dyn Transport>, config: GatewayConfig) -> Self {
        let permits = Role::ALL
            .into_iter()
            .map(|r| (r, Arc::new(Semaphore::new(config.settings(r).max_in_flight.max(1)))))
            .collect();
        let counters = Role::ALL.into_iter().map(|r| (r, Counters::default())).collect();
        Self {
            transport,
            config,
            permits,
            counters,
        }
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.config.templates
    }

    pub fn backend_id(&self, role: Role) -> String {
        self.transport.backend_id(role)
    }

    pub fn stats(&self, role: Role) -> RoleStats {
        let c = &self.counters[&role];
        RoleStats {
            calls: c.calls.load(Ordering::Relaxed),
            attempts: c.attempts.load(Ordering::Relaxed),
            failures: c.failures.load(Ordering::Relaxed),
        }
    }

    async fn call<Req: Serialize, Resp: DeserializeOwned>(&self, role: Role, req: &Req) -> Result<Resp, GatewayError> {
        let body = serde_json::to_value(req).expect("request bodies serialize");
        let settings = self.config.settings(role);
        let counters = &self.counters[&role];
        counters.calls.fetch_add(1, Ordering::Relaxed);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            counters.attempts.fetch_add(1, Ordering::Relaxed);
            let outcome = {
                let _permit = self.permits[&role].acquire().await.expect("semaphore never closed");
                tokio::time::timeout(
                    Duration::from_secs_f64(settings.timeout_secs),
                    self.transport.post(role, body.clone()),
                )
                .await
            };
            let err = match outcome {
                Ok(Ok(value)) => {
                    return serde_json::from_value(value).map_err(|e| {
                        counters.failures.fetch_add(1, Ordering::Relaxed);
                        GatewayError::malformed(role, e)
                    })
                }
                Ok(Err(TransportError::Unavailable(detail))) => GatewayError::BackendUnavailable {
                    role,
                    attempts: attempt,
                    detail,
                },
                Ok(Err(TransportError::Rejected(detail))) => {
                    counters.failures.fetch_add(1, Ordering::Relaxed);
                    return Err(GatewayError::Rejected { role, detail });
                }
                Ok(Err(TransportError::Malformed(detail))) => {
                    counters.failures.fetch_add(1, Ordering::Relaxed);
                    return Err(GatewayError::malformed(role, detail));
                }
                Err(_) => GatewayError::Timeout {
                    role,
                    attempts: attempt,
                },
            };
            if attempt > settings.max_retries {
                counters.failures.fetch_add(1, Ordering::Relaxed);
                return Err(err);
            }
            tracing::debug!(%role, attempt, error = %err, "retrying");
            tokio::time::sleep(self.config.backoff.delay(attempt)).await;
        }
    }

    fn decode_mask(&self, role: Role, image: &ImageRef, mask: RleMask) -> Result<BinaryMask, GatewayError> {
        if mask.width() != image.width || mask.height() != image.height {
            return Err(GatewayError::malformed(
                role,
                format!(
                    "mask is {}x{}, image is {}x{}",
                    mask.width(),
                    mask.height(),
                    image.width,
                    image.height
                ),
            ));
        }
        rle_decode(&mask).map_err(|e| GatewayError::malformed(role, e))
    }

    /// Scene caption for an image.
    pub async fn caption(&self, image: &ImageRef) -> Result<String, GatewayError> {
        let req = CaptionRequest {
            image: image.clone(),
            prompt: Some(self.config.templates.render(TemplateKind::Caption, &[])),
            bbox: None,
        };
        let resp: CaptionResponse = self.call(Role::Captioner, &req).await?;
        let text = resp.text.trim();
        if text.is_empty() {
            return Err(GatewayError::malformed(Role::Captioner, "empty caption"));
        }
        Ok(text.to_string())
    }

    /// Referring expression for one grounded region.
    pub async fn describe_region(
        &self,
        image: &ImageRef,
        caption: &str,
        phrase: &str,
        bbox: &BBox,
    ) -> Result<String, GatewayError> {
        let prompt = self
            .config
            .templates
            .render(TemplateKind::Describe, &[("caption", caption), ("referring", phrase)]);
        let req = CaptionRequest {
            image: image.clone(),
            prompt: Some(prompt),
            bbox: Some(bbox.to_array()),
        };
        let resp: CaptionResponse = self.call(Role::Captioner, &req).await?;
        let text = resp.text.split_whitespace().collect::<Vec<_>>().join(" ");
        if text.is_empty() {
            return Err(GatewayError::EmptyGeneration);
        }
        Ok(text)
    }

    /// Phrases of `caption` with pixel boxes clipped to the image. Boxes that
    /// collapse after clipping are dropped, as are phrases left with none.
    pub async fn ground_phrases(&self, image: &ImageRef, caption: &str) -> Result<Vec<GroundedPhrase>, GatewayError> {
        if caption.trim().is_empty() {
            return Err(GatewayError::Precondition("caption is empty".into()));
        }
        let req = GroundRequest {
            image: image.clone(),
            caption: caption.to_string(),
            prompt: Some(
                self.config
                    .templates
                    .render(TemplateKind::Ground, &[("caption", caption)]),
            ),
        };
        let resp: GroundResponse = self.call(Role::Grounder, &req).await?;
        let role = Role::Grounder;
        let mut all = Vec::new();
        for p in &resp.phrases {
            if p.phrase.trim().is_empty() {
                return Err(GatewayError::malformed(role, "empty phrase"));
            }
            if let Some(scores) = &p.scores {
                if scores.len() != p.boxes.len() {
                    return Err(GatewayError::malformed(role, "scores and boxes differ in length"));
                }
            }
            if p.boxes.iter().flatten().any(|v| !v.is_finite()) {
                return Err(GatewayError::malformed(role, "non-finite coordinate"));
            }
            all.extend_from_slice(&p.boxes);
        }
        let mut scaled = normalize_boxes(&all, image.width, image.height).into_iter();
        let mut out = Vec::new();
        for p in resp.phrases {
            let mut boxes = Vec::new();
            for i in 0..p.boxes.len() {
                let px = scaled.next().expect("one scaled box per raw box");
                if let Some(bbox) = snap_to_pixels(px, image.width, image.height) {
                    boxes.push(GroundedBox {
                        bbox,
                        confidence: p.scores.as_ref().map(|s| s[i]),
                    });
                }
            }
            if !boxes.is_empty() {
                out.push(GroundedPhrase {
                    phrase: p.phrase.trim().to_string(),
                    boxes,
                });
            }
        }
        Ok(out)
    }

    /// Mask for a box prompt. The box is clipped to the image first.
    pub async fn segment_box(&self, image: &ImageRef, bbox: &BBox) -> Result<BinaryMask, GatewayError> {
        let clipped = bbox.clip(image.width, image.height).ok_or_else(|| {
            GatewayError::InvalidPrompt(format!("box {:?} has no area inside the image", bbox.to_array()))
        })?;
        let req = SegmentRequest {
            image: image.clone(),
            bbox: clipped.to_array(),
        };
        let resp: MaskResponse = self.call(Role::Segmenter, &req).await?;
        self.decode_mask(Role::Segmenter, image, resp.mask)
    }

    /// Referring segmentation; the mask may be empty.
    pub async fn refer_segment(&self, image: &ImageRef, text: &str) -> Result<BinaryMask, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::Precondition("referring text is empty".into()));
        }
        let req = ReferRequest {
            image: image.clone(),
            text: text.to_string(),
            prompt: Some(
                self.config
                    .templates
                    .render(TemplateKind::Refer, &[("referring", text)]),
            ),
        };
        let resp: MaskResponse = self.call(Role::Referrer, &req).await?;
        self.decode_mask(Role::Referrer, image, resp.mask)
    }

    pub async fn classify_category(
        &self,
        image: &ImageRef,
        text: &str,
        mask: &RleMask,
    ) -> Result<Verdict, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::Precondition("referring text is empty".into()));
        }
        let list = Category::ALL.map(|c| c.as_str()).join(", ");
        let req = ClassifyRequest {
            image: image.clone(),
            text: text.to_string(),
            mask_rle: mask.clone(),
            prompt: Some(
                self.config
                    .templates
                    .render(TemplateKind::Classify, &[("referring", text), ("category_list", &list)]),
            ),
        };
        let resp: ClassifyResponse = self.call(Role::Classifier, &req).await?;
        let category = resp
            .category
            .parse()
            .map_err(|_| GatewayError::UnparseableVerdict(resp.category.clone()))?;
        Ok(Verdict {
            category,
            referring_correct: resp.referring_correct,
        })
    }

    pub async fn matte(&self, image: &ImageRef, trimap: &Trimap) -> Result<AlphaMatte, GatewayError> {
        if trimap.width() != image.width || trimap.height() != image.height {
            return Err(GatewayError::Precondition(format!(
                "trimap is {}x{}, image is {}x{}",
                trimap.width(),
                trimap.height(),
                image.width,
                image.height
            )));
        }
        let req = MatteRequest {
            image: image.clone(),
            trimap_rle3: trimap.to_runs(),
        };
        let resp: MatteResponse = self.call(Role::Matter, &req).await?;
        let role = Role::Matter;
        let alpha = AlphaMatte::from_runs(&resp.alpha).map_err(|e| GatewayError::malformed(role, e))?;
        if alpha.width() != image.width || alpha.height() != image.height {
            return Err(GatewayError::malformed(role, "alpha matte size differs from image"));
        }
        if alpha.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(GatewayError::malformed(role, "alpha outside [0, 1]"));
        }
        Ok(alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::StubBackend;
    use async_trait::async_trait;
    use serde_json::Value;
    use std::sync::atomic::AtomicU32;

    /// Fails the first `failures` calls, then defers to the stub. With
    /// `hang` set the failing calls never answer.
    struct Flaky {
        inner: StubBackend,
        failures: u32,
        hang: bool,
        seen: AtomicU32,
        in_flight: AtomicU32,
        peak: AtomicU32,
    }

    impl Flaky {
        fn new(failures: u32, hang: bool) -> Self {
            Self {
                inner: StubBackend::with_seed(1),
                failures,
                hang,
                seen: AtomicU32::new(0),
                in_flight: AtomicU32::new(0),
                peak: AtomicU32::new(0),
            }
        }
    }

    #[async_trait]
    impl Transport for Flaky {
        async fn post(&self, role: Role, body: Value) -> Result<Value, TransportError> {
            let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            let n = self.seen.fetch_add(1, Ordering::SeqCst);
            let out = if n < self.failures {
                if self.hang {
                    std::future::pending::<()>().await;
                }
                Err(TransportError::Unavailable("503".into()))
            } else {
                tokio::time::sleep(Duration::from_millis(5)).await;
                self.inner.handle(role, body)
            };
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            out
        }

        fn backend_id(&self, role: Role) -> String {
            self.inner.backend_id(role)
        }
    }

    fn fast_config(timeout_secs: f64, max_retries: u32, max_in_flight: usize) -> GatewayConfig {
        let settings = EndpointSettings {
            timeout_secs,
            max_retries,
            max_in_flight,
        };
        GatewayConfig {
            endpoints: Role::ALL.into_iter().map(|r| (r, settings)).collect(),
            backoff: Backoff {
                base_secs: 0.001,
                factor: 2.0,
                jitter: false,
            },
            templates: TemplateSet::default(),
        }
    }

    fn image() -> ImageRef {
        ImageRef::new("img_r", "mem://r", 64, 64)
    }

    #[tokio::test]
    async fn one_transient_failure_then_success() {
        let gw = Gateway::new(Arc::new(Flaky::new(1, false)), fast_config(5.0, 3, 4));
        gw.caption(&image()).await.unwrap();
        let s = gw.stats(Role::Captioner);
        assert_eq!((s.calls, s.attempts, s.failures), (1, 2, 0));
    }

    #[tokio::test]
    async fn retries_exhausted() {
        let gw = Gateway::new(Arc::new(Flaky::new(10, false)), fast_config(5.0, 2, 4));
        let err = gw.caption(&image()).await.unwrap_err();
        assert!(matches!(err, GatewayError::BackendUnavailable { attempts: 3, .. }));
        assert_eq!(gw.stats(Role::Captioner).failures, 1);
    }

    #[tokio::test]
    async fn hung_backend_times_out() {
        let gw = Gateway::new(Arc::new(Flaky::new(10, true)), fast_config(0.05, 1, 4));
        let err = gw.caption(&image()).await.unwrap_err();
        assert_eq!(
            err,
            GatewayError::Timeout {
                role: Role::Captioner,
                attempts: 2
            }
        );
    }

    #[tokio::test]
    async fn in_flight_is_bounded() {
        let flaky = Arc::new(Flaky::new(0, false));
        let gw = Arc::new(Gateway::new(flaky.clone(), fast_config(5.0, 0, 3)));
        let tasks: Vec<_> = (0..20)
            .map(|_| {
                let gw = gw.clone();
                tokio::spawn(async move { gw.caption(&image()).await })
            })
            .collect();
        for t in tasks {
            t.await.unwrap().unwrap();
        }
        assert!(flaky.peak.load(Ordering::SeqCst) <= 3);
    }

    struct Canned(Value);

    #[async_trait]
    impl Transport for Canned {
        async fn post(&self, _: Role, _: Value) -> Result<Value, TransportError> {
            Ok(self.0.clone())
        }

        fn backend_id(&self, _: Role) -> String {
            "canned".into()
        }
    }

    fn canned(v: Value) -> Gateway {
        Gateway::new(Arc::new(Canned(v)), fast_config(5.0, 0, 1))
    }

    #[tokio::test]
    async fn malformed_replies_are_rejected() {
        let img = image();
        let err = canned(serde_json::json!({"text": "  "}))
            .caption(&img)
            .await
            .unwrap_err();
        assert!(matches!(err, GatewayError::MalformedResponse { .. }));

        let wrong_size = serde_json::json!({"mask": {"size": [2, 2], "counts": [4]}});
        let b = BBox::new(0, 0, 4, 4).unwrap();
        let err = canned(wrong_size).segment_box(&img, &b).await.unwrap_err();
        assert!(matches!(err, GatewayError::MalformedResponse { .. }));

        let err = canned(serde_json::json!({"phrases": [{"phrase": "", "boxes": []}]}))
            .ground_phrases(&img, "c")
            .await
            .unwrap_err();
        assert!(matches!(err, GatewayError::MalformedResponse { .. }));

        let err = canned(serde_json::json!({"referring_correct": true, "category": "animal"}))
            .classify_category(&img, "t", &RleMask::empty(64, 64).unwrap())
            .await
            .unwrap_err();
        assert_eq!(err, GatewayError::UnparseableVerdict("animal".into()));

        let alpha = serde_json::json!({"alpha": {"size": [64, 64], "counts": [4096], "values": [1.5]}});
        let trimap = crate::mask::trimap_from_mask(&BinaryMask::empty(64, 64).unwrap(), 1).unwrap();
        let err = canned(alpha).matte(&img, &trimap).await.unwrap_err();
        assert!(matches!(err, GatewayError::MalformedResponse { .. }));
    }

    #[tokio::test]
    async fn degenerate_boxes_dropped() {
        let reply = serde_json::json!({"phrases": [
            {"phrase": "cat", "boxes": [[10.0, 10.0, 10.0, 30.0], [80.0, 80.0, 90.0, 90.0]]},
            {"phrase": "dog", "boxes": [[-4.0, 2.5, 20.2, 70.0]], "scores": [0.9]},
        ]});
        let out = canned(reply).ground_phrases(&image(), "cat and dog").await.unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].phrase, "dog");
        assert_eq!(out[0].boxes[0].bbox.to_array(), [0, 2, 21, 64]);
        assert_eq!(out[0].boxes[0].confidence, Some(0.9));
    }
}
