//! Execution instrumentation: multiply-accumulate counting and intermediate
//! buffer high-water tracking.
//!
//! Kernels report the multiply-adds they actually executed through
//! [`record_macs`]; attention kernels report the buffers they materialize through
//! [`produce`] / [`release`]. Both are no-ops unless a probe is active on the
//! current thread (see [`run_probed`]). Counts are attributed to the innermost
//! stage opened with [`stage`].

use std::cell::RefCell;
use std::collections::BTreeMap;

/// How intermediate buffers are retired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Liveness {
    /// Every intermediate stays live until the probe ends, as activations kept
    /// for a backward pass would.
    #[default]
    Retained,
    /// Two-phase accounting: a buffer is live from the stage that produces it
    /// through the last stage that consumes it.
    ProduceConsume,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProbeReport {
    pub macs: BTreeMap<String, u64>,
    /// Peak live intermediate elements per stage.
    pub peak_elements: BTreeMap<String, u64>,
}

impl ProbeReport {
    pub fn total_macs(&self) -> u64 {
        self.macs.values().sum()
    }
}

struct ProbeState {
    liveness: Liveness,
    stage: String,
    macs: BTreeMap<String, u64>,
    live: u64,
    peaks: BTreeMap<String, u64>,
}

thread_local! {
    static PROBE: RefCell<Option<ProbeState>> = const { RefCell::new(None) };
}

pub const UNSTAGED: &str = "(unstaged)";

/// Run `f` with a fresh probe on this thread and return what it recorded.
/// Nested probes are not supported; the inner one shadows the outer.
pub fn run_probed<R>(liveness: Liveness, f: impl FnOnce() -> R) -> (R, ProbeReport) {
    let prev = PROBE.with(|p| {
        p.borrow_mut().replace(ProbeState {
            liveness,
            stage: UNSTAGED.to_string(),
            macs: BTreeMap::new(),
            live: 0,
            peaks: BTreeMap::new(),
        })
    });
    let out = f();
    let state = PROBE.with(|p| std::mem::replace(&mut *p.borrow_mut(), prev)).expect("probe");
    (out, ProbeReport { macs: state.macs, peak_elements: state.peaks })
}

pub fn active() -> bool {
    PROBE.with(|p| p.borrow().is_some())
}

/// Attribute everything recorded inside `f` to `name`. Live-buffer accounting
/// restarts at zero for each stage.
pub fn stage<R>(name: &str, f: impl FnOnce() -> R) -> R {
    let saved = PROBE.with(|p| {
        p.borrow_mut().as_mut().map(|s| {
            let prev = std::mem::replace(&mut s.stage, name.to_string());
            let live = std::mem::replace(&mut s.live, 0);
            (prev, live)
        })
    });
    let out = f();
    if let Some((prev, live)) = saved {
        PROBE.with(|p| {
            if let Some(s) = p.borrow_mut().as_mut() {
                s.stage = prev;
                s.live = live;
            }
        });
    }
    out
}

#[inline]
pub fn record_macs(n: u64) {
    PROBE.with(|p| {
        if let Some(s) = p.borrow_mut().as_mut() {
            *s.macs.entry(s.stage.clone()).or_insert(0) += n;
        }
    });
}

/// A buffer of `elements` values was materialized.
pub fn produce(elements: usize) {
    PROBE.with(|p| {
        if let Some(s) = p.borrow_mut().as_mut() {
            s.live += elements as u64;
            let peak = s.peaks.entry(s.stage.clone()).or_insert(0);
            *peak = (*peak).max(s.live);
        }
    });
}

/// A buffer of `elements` values has had its last use.
pub fn release(elements: usize) {
    PROBE.with(|p| {
        if let Some(s) = p.borrow_mut().as_mut() {
            if s.liveness == Liveness::ProduceConsume {
                s.live -= elements as u64;
            }
        }
    });
}
