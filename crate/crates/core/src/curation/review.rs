//! Review state machine with optimistic versioning.
//!
//! Items start `pending` and move once to `accepted`, `rejected` or
//! `recategorized`. Only an admin reset returns a decided item to
//! `pending`. Every successful write bumps the item's version and yields an
//! [`AuditEvent`]; replaying the events over the initial manifest
//! reproduces the final one.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CurationError, Quotas};
use crate::mask::RleMask;
use crate::metrics::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Accepted,
    Rejected,
    Recategorized,
}

impl ReviewStatus {
    pub fn is_terminal(self) -> bool {
        self != ReviewStatus::Pending
    }

    /// Counts toward its category's quota.
    pub fn is_accepted(self) -> bool {
        matches!(self, ReviewStatus::Accepted | ReviewStatus::Recategorized)
    }
}

impl fmt::Display for ReviewStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReviewStatus::Pending => "pending",
            ReviewStatus::Accepted => "accepted",
            ReviewStatus::Rejected => "rejected",
            ReviewStatus::Recategorized => "recategorized",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub sample_id: String,
    pub image_id: String,
    pub image_uri: String,
    pub width: u32,
    pub height: u32,
    pub referring_text: String,
    pub mask: RleMask,
    pub proposed_category: Category,
    /// Bucket the item currently counts in.
    pub category: Category,
    pub status: ReviewStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reviewer_id: Option<String>,
    /// Unix seconds of the last decision.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_at: Option<u64>,
    pub version: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Accept,
    Reject,
    Recategorize,
    /// Admin only: back to pending with the proposed category.
    Reset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub sample_id: String,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_category: Option<Category>,
    pub reviewer_id: String,
    pub expected_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub sample_id: String,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_category: Option<Category>,
    pub actor: String,
    pub from_version: u64,
    pub to_version: u64,
    pub from_status: ReviewStatus,
    pub to_status: ReviewStatus,
    pub at: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReviewError {
    #[error("version conflict on {sample_id}: expected {expected}, current {current}")]
    VersionConflict {
        sample_id: String,
        expected: u64,
        current: u64,
    },
    #[error("unknown sample {0}")]
    UnknownSample(String),
    #[error("cannot {action:?} {sample_id}: item is {from}")]
    InvalidTransition {
        sample_id: String,
        from: ReviewStatus,
        action: Action,
    },
    #[error("recategorize requires new_category")]
    MissingCategory,
    #[error("reset is an admin action")]
    NotAdmin,
    #[error("manifest is finalized")]
    Finalized,
    #[error("audit event {seq} does not apply: {detail}")]
    Replay { seq: u64, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub name: String,
    pub quotas: Quotas,
    pub finalized: bool,
    /// Sorted by sample id.
    pub items: Vec<ReviewItem>,
    /// Sequence number of the next audit event.
    #[serde(default)]
    pub next_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StatusCounts {
    pub quota: usize,
    pub pending: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub recategorized: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub categories: BTreeMap<Category, StatusCounts>,
    pub total: StatusCounts,
}

impl BenchmarkManifest {
    pub fn new(name: impl Into<String>, quotas: Quotas, mut items: Vec<ReviewItem>) -> Self {
        items.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        Self {
            name: name.into(),
            quotas,
            finalized: false,
            items,
            next_seq: 0,
        }
    }

    pub fn get(&self, sample_id: &str) -> Option<&ReviewItem> {
        self.index(sample_id).map(|i| &self.items[i])
    }

    fn index(&self, sample_id: &str) -> Option<usize> {
        self.items
            .binary_search_by(|it| it.sample_id.as_str().cmp(sample_id))
            .ok()
    }

    /// First pending item in sample id order, optionally within a category.
    pub fn next_pending(&self, category: Option<Category>) -> Option<&ReviewItem> {
        self.items
            .iter()
            .find(|it| it.status == ReviewStatus::Pending && category.is_none_or(|c| it.category == c))
    }

    /// Apply a reviewer decision. Resets go through [`Self::admin_reset`].
    pub fn ingest_review(&mut self, decision: &Decision, at: u64) -> Result<AuditEvent, ReviewError> {
        if decision.action == Action::Reset {
            return Err(ReviewError::NotAdmin);
        }
        self.apply(decision, at)
    }

    /// Return a decided item to pending. Audited like any other write.
    pub fn admin_reset(
        &mut self,
        sample_id: &str,
        admin_id: &str,
        expected_version: u64,
        at: u64,
    ) -> Result<AuditEvent, ReviewError> {
        let d = Decision {
            sample_id: sample_id.to_string(),
            action: Action::Reset,
            new_category: None,
            reviewer_id: admin_id.to_string(),
            expected_version,
        };
        self.apply(&d, at)
    }

    fn apply(&mut self, d: &Decision, at: u64) -> Result<AuditEvent, ReviewError> {
        if self.finalized {
            return Err(ReviewError::Finalized);
        }
        let i = self
            .index(&d.sample_id)
            .ok_or_else(|| ReviewError::UnknownSample(d.sample_id.clone()))?;
        let item = &self.items[i];
        if item.version != d.expected_version {
            return Err(ReviewError::VersionConflict {
                sample_id: d.sample_id.clone(),
                expected: d.expected_version,
                current: item.version,
            });
        }
        let from = item.status;
        let legal = match d.action {
            Action::Reset => from.is_terminal(),
            _ => from == ReviewStatus::Pending,
        };
        if !legal {
            return Err(ReviewError::InvalidTransition {
                sample_id: d.sample_id.clone(),
                from,
                action: d.action,
            });
        }
        let (status, category) = match d.action {
            Action::Accept => (ReviewStatus::Accepted, item.category),
            Action::Reject => (ReviewStatus::Rejected, item.category),
            Action::Recategorize => (
                ReviewStatus::Recategorized,
                d.new_category.ok_or(ReviewError::MissingCategory)?,
            ),
            Action::Reset => (ReviewStatus::Pending, item.proposed_category),
        };
        let item = &mut self.items[i];
        item.status = status;
        item.category = category;
        item.version += 1;
        if d.action == Action::Reset {
            item.reviewer_id = None;
            item.decided_at = None;
        } else {
            item.reviewer_id = Some(d.reviewer_id.clone());
            item.decided_at = Some(at);
        }
        let event = AuditEvent {
            seq: self.next_seq,
            sample_id: d.sample_id.clone(),
            action: d.action,
            new_category: (d.action == Action::Recategorize).then_some(category),
            actor: d.reviewer_id.clone(),
            from_version: d.expected_version,
            to_version: item.version,
            from_status: from,
            to_status: status,
            at,
        };
        self.next_seq += 1;
        Ok(event)
    }

    pub fn progress(&self) -> Progress {
        let mut categories: BTreeMap<Category, StatusCounts> = Category::ALL
            .into_iter()
            .map(|c| {
                (
                    c,
                    StatusCounts {
                        quota: self.quotas.get(c),
                        ..StatusCounts::default()
                    },
                )
            })
            .collect();
        for it in &self.items {
            let c = categories.get_mut(&it.category).expect("all categories present");
            match it.status {
                ReviewStatus::Pending => c.pending += 1,
                ReviewStatus::Accepted => c.accepted += 1,
                ReviewStatus::Rejected => c.rejected += 1,
                ReviewStatus::Recategorized => c.recategorized += 1,
            }
        }
        let mut total = StatusCounts::default();
        for c in categories.values() {
            total.quota += c.quota;
            total.pending += c.pending;
            total.accepted += c.accepted;
            total.rejected += c.rejected;
            total.recategorized += c.recategorized;
        }
        Progress { categories, total }
    }

    /// Keep the accepted items, which must fill every quota exactly.
    pub fn finalize(&self) -> Result<BenchmarkManifest, CurationError> {
        if self.finalized {
            return Err(CurationError::AlreadyFinalized);
        }
        let pending = self
            .items
            .iter()
            .filter(|it| it.status == ReviewStatus::Pending)
            .count();
        if pending > 0 {
            return Err(CurationError::Unresolved(pending));
        }
        let progress = self.progress();
        for (c, counts) in &progress.categories {
            let accepted = counts.accepted + counts.recategorized;
            if accepted != counts.quota {
                return Err(CurationError::QuotaMismatch {
                    category: *c,
                    quota: counts.quota,
                    accepted,
                });
            }
        }
        Ok(BenchmarkManifest {
            name: self.name.clone(),
            quotas: self.quotas,
            finalized: true,
            items: self
                .items
                .iter()
                .filter(|it| it.status.is_accepted())
                .cloned()
                .collect(),
            next_seq: self.next_seq,
        })
    }
}

/// Re-apply audit events, in order, to the manifest they were recorded
/// against.
pub fn replay(mut manifest: BenchmarkManifest, events: &[AuditEvent]) -> Result<BenchmarkManifest, ReviewError> {
    for e in events {
        let replay_err = |detail: String| ReviewError::Replay { seq: e.seq, detail };
        if e.seq != manifest.next_seq {
            return Err(replay_err(format!("expected sequence {}", manifest.next_seq)));
        }
        let d = Decision {
            sample_id: e.sample_id.clone(),
            action: e.action,
            new_category: e.new_category,
            reviewer_id: e.actor.clone(),
            expected_version: e.from_version,
        };
        let got = manifest.apply(&d, e.at).map_err(|err| replay_err(err.to_string()))?;
        if &got != e {
            return Err(replay_err("event does not reproduce".into()));
        }
    }
    Ok(manifest)
}
