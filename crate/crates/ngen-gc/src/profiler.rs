//! In-process object-lifetime profiler: records allocation sites and how
//! many collection epochs each object lives, then recommends which sites to
//! pretenure and how to group them into generations.
//!
//! Lifetimes are measured in collection epochs, not wall time: an object's
//! record opens at allocation with the current epoch and closes at the
//! first collection that finds it gone. Sites whose median lifetime reaches
//! the long-lived threshold become pretenure candidates; candidates whose
//! median death epochs fall within the cohort tolerance of each other share
//! a recommended generation.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use crate::collector::CollectionOutcome;
use crate::error::{HeapError, Result};
use crate::object_model::ObjectRef;

/// Counters for one allocation site. Sites are identified by caller-supplied
/// strings standing in for code locations.
#[derive(Debug, Clone, Default)]
pub struct AllocationSite {
    pub site_id: String,
    pub alloc_count: u64,
    pub alloc_bytes: u64,
}

/// One tracked allocation: when it was born and, once observed unreachable,
/// when it died. A missing `death_epoch` means the object was still live at
/// the end of profiling (censored; excluded from medians).
#[derive(Debug, Clone)]
pub struct LifetimeRecord {
    pub site: u32,
    pub birth_epoch: u64,
    pub death_epoch: Option<u64>,
}

/// Pretenuring advice: which sites to annotate and how to group them into
/// generations, with the per-site medians that justify it.
#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub groups: Vec<CohortGroup>,
    pub pretenure_sites: Vec<String>,
    pub rationale: Vec<SiteRationale>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortGroup {
    pub label: String,
    pub sites: Vec<String>,
    pub median_death_epoch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteRationale {
    pub site_id: String,
    pub median_lifetime_epochs: f64,
    pub median_death_epoch: f64,
    pub cohort: String,
    pub closed_records: u64,
}

#[derive(Default)]
struct ProfilerState {
    sites: Vec<AllocationSite>,
    site_index: HashMap<String, u32>,
    records: Vec<LifetimeRecord>,
    /// Tracked live objects: current address → record index.
    tracked: HashMap<ObjectRef, u32>,
    current_epoch: u64,
    observed_collections: u64,
}

/// The profiler observes allocations from mutators and survivor movement
/// from the collector; it never changes heap behavior. Disabled profilers
/// retain nothing.
pub struct Profiler {
    enabled: AtomicBool,
    state: Mutex<ProfilerState>,
}

impl Default for Profiler {
    fn default() -> Self {
        Self::new(true)
    }
}

impl Profiler {
    pub fn new(enabled: bool) -> Profiler {
        Profiler {
            enabled: AtomicBool::new(enabled),
            state: Mutex::new(ProfilerState::default()),
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled.load(Ordering::Relaxed)
    }

    pub fn set_enabled(&self, enabled: bool) {
        self.enabled.store(enabled, Ordering::Relaxed);
    }

    /// Opens a lifetime record for a freshly allocated object and bumps the
    /// site counters. No-op when disabled.
    pub fn record_allocation(&self, site_id: &str, obj: ObjectRef, size_bytes: u64) {
        if !self.enabled() {
            return;
        }
        let mut st = self.state.lock().unwrap();
        let site = match st.site_index.get(site_id) {
            Some(&i) => i,
            None => {
                let i = st.sites.len() as u32;
                st.site_index.insert(site_id.to_owned(), i);
                st.sites.push(AllocationSite {
                    site_id: site_id.to_owned(),
                    ..AllocationSite::default()
                });
                i
            }
        };
        st.sites[site as usize].alloc_count += 1;
        st.sites[site as usize].alloc_bytes += size_bytes;
        let record =st.records.len() as u32;
        let birth_epoch = st.current_epoch;
        st.records.push(LifetimeRecord {
            site,
            birth_epoch,
            death_epoch: None,
        });
        st.tracked.insert(obj, record);
    }

    /// Collector hook, called at the end of every collection. Tracked
    /// objects that were in a collected region either moved (their record is
    /// re-keyed to the forwarded address) or died at this epoch.
    pub fn observe_collection(&self, epoch: u64, outcome: &CollectionOutcome) {
        if !self.enabled() {
            return;
        }
        let mut st = self.state.lock().unwrap();
        st.current_epoch = epoch;
        st.observed_collections += 1;

        let mut moved: Vec<(ObjectRef, ObjectRef, u32)> = Vec::new();
        let mut died: Vec<ObjectRef> = Vec::new();
        for (&obj, &record) in &st.tracked {
            if !outcome.collected_regions.contains(&obj.region)
                && !outcome.marking_released.contains(&obj.region)
            {
                continue;
            }
            match outcome.forwarding.get(&obj) {
                Some(&to) => moved.push((obj, to, record)),
                None => died.push(obj),
            }
        }
        for obj in died {
            let record = st.tracked.remove(&obj).unwrap();
            st.records[record as usize].death_epoch = Some(epoch);
        }
        for (from, _, _) in &moved {
            st.tracked.remove(from);
        }
        for (_, to, record) in moved {
            st.tracked.insert(to, record);
        }
    }

    pub fn site_stats(&self) -> Vec<AllocationSite> {
        self.state.lock().unwrap().sites.clone()
    }

    pub fn records(&self) -> Vec<LifetimeRecord> {
        self.state.lock().unwrap().records.clone()
    }

    pub fn observed_collections(&self) -> u64 {
        self.state.lock().unwrap().observed_collections
    }

    /// Builds the pretenuring recommendation: sites with median lifetime of
    /// at least `long_lived_epochs` are candidates; candidates are grouped
    /// into cohorts by median-death proximity (a gap of more than
    /// `cohort_tolerance` epochs starts a new group). Deterministic for a
    /// given record set.
    pub fn analyze(&self, long_lived_epochs: u64, cohort_tolerance: u64) -> Result<Recommendation> {
        let st = self.state.lock().unwrap();
        if st.observed_collections == 0 {
            return Err(HeapError::InsufficientProfileData);
        }

        // Closed records only: still-live objects are censored.
        let mut lifetimes: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        let mut deaths: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        for r in &st.records {
            if let Some(death) = r.death_epoch {
                lifetimes.entry(r.site).or_default().push(death - r.birth_epoch);
                deaths.entry(r.site).or_default().push(death);
            }
        }

        struct Candidate {
            site_id: String,
            median_lifetime: f64,
            median_death: f64,
            closed: u64,
        }
        let mut candidates: Vec<Candidate> = Vec::new();
        for (site, mut lts) in lifetimes {
            let median_lifetime = median(&mut lts);
            if median_lifetime < long_lived_epochs as f64 {
                continue;
            }
            let mut ds = deaths.remove(&site).unwrap();
            candidates.push(Candidate {
                site_id: st.sites[site as usize].site_id.clone(),
                median_lifetime,
                median_death: median(&mut ds),
                closed: lts.len() as u64,
            });
        }
        candidates.sort_by(|a, b| {
            a.median_death
                .total_cmp(&b.median_death)
                .then_with(|| a.site_id.cmp(&b.site_id))
        });

        let mut groups: Vec<CohortGroup> = Vec::new();
        let mut rationale: Vec<SiteRationale> = Vec::new();
        let mut pretenure_sites: Vec<String> = Vec::new();
        for c in candidates {
            let start_new = match groups.last() {
                None => true,
                Some(g) => {
                    let last_death = rationale
                        .iter()
                        .rev()
                        .find(|r| r.cohort == g.label)
                        .map(|r| r.median_death_epoch)
                        .unwrap_or(g.median_death_epoch);
                    (c.median_death - last_death).abs() > cohort_tolerance as f64
                }
            };
            if start_new {
                groups.push(CohortGroup {
                    label: format!("generation-{}", groups.len() + 1),
                    sites: Vec::new(),
                    median_death_epoch: c.median_death,
                });
            }
            let group = groups.last_mut().unwrap();
            group.sites.push(c.site_id.clone());
            rationale.push(SiteRationale {
                site_id: c.site_id.clone(),
                median_lifetime_epochs: c.median_lifetime,
                median_death_epoch: c.median_death,
                cohort: group.label.clone(),
                closed_records: c.closed,
            });
            pretenure_sites.push(c.site_id);
        }
        for g in &mut groups {
            g.sites.sort();
        }
        pretenure_sites.sort();
        Ok(Recommendation {
            groups,
            pretenure_sites,
            rationale,
        })
    }
}

fn median(values: &mut [u64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

/// Text rendering of a recommendation, listing each suggested generation,
/// its sites, and the code change to make.
pub fn render_recommendation(rec: &Recommendation) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "pretenuring recommendation");
    let _ = writeln!(out, "recommended generations: {}", rec.groups.len());
    for g in &rec.groups {
        let _ = writeln!(
            out,
            "\ngroup {} (median death epoch {:.1})",
            g.label, g.median_death_epoch
        );
        for site in &g.sites {
            let r = rec.rationale.iter().find(|r| &r.site_id == site).unwrap();
            let _ = writeln!(
                out,
                "  site {:<32} median lifetime {:>6.1} epochs over {} records",
                r.site_id, r.median_lifetime_epochs, r.closed_records
            );
        }
        let _ = writeln!(
            out,
            "  action: create a dedicated generation when this cohort starts and allocate the listed sites into it with the pretenure flag",
        );
    }
    if rec.groups.is_empty() {
        let _ = writeln!(out, "no long-lived sites found; no change recommended");
    }
    out
}
