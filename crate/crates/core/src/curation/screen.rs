use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::REASON_REFERRING_INCORRECT;
use crate::datastore::ReferringSample;
use crate::gateway::{Gateway, ImageRef};
use crate::metrics::Category;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReject {
    pub sample_id: String,
    pub reason: String,
    /// Category the classifier proposed alongside its negative verdict.
    pub category: Category,
}

/// Samples that need attention because the classifier could not give a
/// usable answer. Kept apart from rejects: nothing was decided about them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quarantined {
    pub sample_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScreenOutcome {
    pub categorized: Vec<ReferringSample>,
    pub rejects: Vec<ScreenReject>,
    pub quarantine: Vec<Quarantined>,
}

/// Ask the classifier whether each text matches its mask and which category
/// it belongs to. Output lists keep input order.
pub async fn classify_and_screen(gw: &Gateway, samples: Vec<ReferringSample>, concurrency: usize) -> ScreenOutcome {
    let verdicts: Vec<_> = stream::iter(samples.iter())
        .map(|s| async move {
            let image = ImageRef::new(&s.image_id, &s.image_uri, s.width, s.height);
            gw.classify_category(&image, &s.text, &s.mask).await
        })
        .buffered(concurrency.max(1))
        .collect()
        .await;
    let mut out = ScreenOutcome::default();
    for (mut s, v) in samples.into_iter().zip(verdicts) {
        match v {
            Ok(v) if v.referring_correct => {
                s.category = Some(v.category);
                out.categorized.push(s);
            }
            Ok(v) => out.rejects.push(ScreenReject {
                sample_id: s.sample_id,
                reason: REASON_REFERRING_INCORRECT.into(),
                category: v.category,
            }),
            Err(e) => out.quarantine.push(Quarantined {
                sample_id: s.sample_id,
                error: e.to_string(),
            }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::Provenance;
    use crate::gateway::{GatewayConfig, Role, StubBackend, Transport, TransportError};
    use crate::mask::{rle_encode, testutil::rect, RleMask};
    use async_trait::async_trait;
    use serde_json::Value;
    use std::sync::Arc;

    pub(crate) fn sample(id: &str, text: &str, mask: RleMask) -> ReferringSample {
        ReferringSample {
            sample_id: id.into(),
            image_id: id.into(),
            image_uri: format!("mem://{id}"),
            width: mask.width(),
            height: mask.height(),
            text: text.into(),
            mask,
            bbox: None,
            category: None,
            filter_iou: None,
            refinement: None,
            provenance: Provenance::default(),
        }
    }

    struct Garbled;

    #[async_trait]
    impl Transport for Garbled {
        async fn post(&self, role: Role, body: Value) -> Result<Value, TransportError> {
            if body["text"].as_str().unwrap_or("").contains("weird") {
                return Ok(serde_json::json!({"referring_correct": true, "category": "maybe stuff?"}));
            }
            StubBackend::with_seed(0).handle(role, body)
        }

        fn backend_id(&self, _: Role) -> String {
            "garbled".into()
        }
    }

    #[tokio::test]
    async fn categorize_reject_quarantine() {
        let gw = Gateway::new(Arc::new(Garbled), GatewayConfig::default());
        let m = rle_encode(&rect(8, 8, 1, 4, 1, 4));
        let empty = RleMask::empty(8, 8).unwrap();
        let samples = vec![
            sample("a", "the blue sky object_a above the hills", m.clone()),
            sample("b", "the dog's tail object_a", empty),
            sample("c", "a weird object_a", m.clone()),
            sample("d", "two dogs object_a playing", m.clone()),
            sample("e", "a cat object_a", m),
        ];
        let out = classify_and_screen(&gw, samples, 3).await;
        let cats: Vec<_> = out
            .categorized
            .iter()
            .map(|s| (s.sample_id.as_str(), s.category.unwrap()))
            .collect();
        assert_eq!(
            cats,
            [("a", Category::Stuff), ("d", Category::Multi), ("e", Category::Single)]
        );
        assert_eq!(
            out.rejects,
            [ScreenReject {
                sample_id: "b".into(),
                reason: "referring_incorrect".into(),
                category: Category::Part
            }]
        );
        assert_eq!(out.quarantine.len(), 1);
        assert_eq!(out.quarantine[0].sample_id, "c");
    }
}
