use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::review::{BenchmarkManifest, ReviewItem, ReviewStatus};
use super::CurationError;
use crate::datastore::ReferringSample;
use crate::gateway::stable_hash;
use crate::metrics::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Quotas {
    pub stuff: usize,
    pub part: usize,
    pub multi: usize,
    pub single: usize,
}

impl Default for Quotas {
    fn default() -> Self {
        Self {
            stuff: 1000,
            part: 500,
            multi: 800,
            single: 1500,
        }
    }
}

impl Quotas {
    pub fn get(&self, c: Category) -> usize {
        match c {
            Category::Stuff => self.stuff,
            Category::Part => self.part,
            Category::Multi => self.multi,
            Category::Single => self.single,
        }
    }

    pub fn total(&self) -> usize {
        Category::ALL.iter().map(|&c| self.get(c)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssembleOptions {
    /// Return a short manifest instead of failing when a category runs out.
    pub allow_short: bool,
    /// Pick candidates in a seeded pseudo-random order instead of by id.
    pub seed: Option<u64>,
}

fn review_item(s: &ReferringSample, category: Category) -> ReviewItem {
    ReviewItem {
        sample_id: s.sample_id.clone(),
        image_id: s.image_id.clone(),
        image_uri: s.image_uri.clone(),
        width: s.width,
        height: s.height,
        referring_text: s.text.clone(),
        mask: s.mask.clone(),
        proposed_category: category,
        category,
        status: ReviewStatus::Pending,
        reviewer_id: None,
        decided_at: None,
        version: 0,
    }
}

fn ordered(
    candidates: &[ReferringSample],
    seed: Option<u64>,
) -> Result<Vec<(&ReferringSample, Category)>, CurationError> {
    let mut out = candidates
        .iter()
        .map(|s| {
            s.category
                .map(|c| (s, c))
                .ok_or_else(|| CurationError::MissingCategory(s.sample_id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    match seed {
        None => out.sort_by(|a, b| a.0.sample_id.cmp(&b.0.sample_id)),
        Some(seed) => out.sort_by_cached_key(|(s, _)| (stable_hash(seed, &s.sample_id, "select"), s.sample_id.clone())),
    }
    Ok(out)
}

/// Walk candidates in a fixed order, taking each one whose category still
/// has room and whose image is not used yet. `need` gives the remaining room.
fn select(
    order: &[(&ReferringSample, Category)],
    mut need: impl FnMut(Category) -> usize,
    used_images: &mut BTreeSet<String>,
    used_ids: &mut BTreeSet<String>,
) -> Vec<ReviewItem> {
    let mut taken = Vec::new();
    let mut counts = [0usize; 4];
    for &(s, c) in order {
        let slot = &mut counts[c as usize];
        if *slot >= need(c) || used_images.contains(&s.image_id) || used_ids.contains(&s.sample_id) {
            continue;
        }
        *slot += 1;
        used_images.insert(s.image_id.clone());
        used_ids.insert(s.sample_id.clone());
        taken.push(review_item(s, c));
    }
    taken
}

/// Build a pending-review manifest holding up to `quotas` items per
/// category, at most one per image.
pub fn assemble_benchmark(
    name: &str,
    candidates: &[ReferringSample],
    quotas: Quotas,
    options: AssembleOptions,
) -> Result<BenchmarkManifest, CurationError> {
    let order = ordered(candidates, options.seed)?;
    let items = select(&order, |c| quotas.get(c), &mut BTreeSet::new(), &mut BTreeSet::new());
    if !options.allow_short {
        for c in Category::ALL {
            let available = items.iter().filter(|it| it.category == c).count();
            if available < quotas.get(c) {
                return Err(CurationError::QuotaUnmet {
                    category: c,
                    quota: quotas.get(c),
                    available,
                });
            }
        }
    }
    Ok(BenchmarkManifest::new(name, quotas, items))
}

/// Add pending items for categories whose accepted plus pending count fell
/// below quota after rejections. Returns the number of items added.
pub fn top_up(
    manifest: &mut BenchmarkManifest,
    candidates: &[ReferringSample],
    options: AssembleOptions,
) -> Result<usize, CurationError> {
    if manifest.finalized {
        return Err(CurationError::AlreadyFinalized);
    }
    let order = ordered(candidates, options.seed)?;
    let mut live = [0usize; 4];
    let mut used_images = BTreeSet::new();
    let mut used_ids = BTreeSet::new();
    for it in &manifest.items {
        used_ids.insert(it.sample_id.clone());
        if it.status != ReviewStatus::Rejected {
            live[it.category as usize] += 1;
            used_images.insert(it.image_id.clone());
        }
    }
    let quotas = manifest.quotas;
    let added = select(
        &order,
        |c| quotas.get(c).saturating_sub(live[c as usize]),
        &mut used_images,
        &mut used_ids,
    );
    let n = added.len();
    let mut items = std::mem::take(&mut manifest.items);
    items.extend(added);
    items.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    manifest.items = items;
    Ok(n)
}
