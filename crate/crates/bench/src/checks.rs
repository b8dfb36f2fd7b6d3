//! Pool and memory invariants, evaluated against a learner's live state.

use lowmem_experts::{Day, Learner};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckLevel {
    Off,
    /// After every eviction pass.
    #[default]
    Epoch,
    /// After every eviction pass and every day.
    Paranoid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub day: Day,
    pub level: usize,
    pub epoch: Option<u64>,
    pub kind: &'static str,
    pub detail: String,
    pub pool_dump: String,
}

/// Tolerance on consecutive potential differences.
pub const POTENTIAL_TOLERANCE: f64 = 1e-9;

/// Runs the checks on every pool the learner exposes and on its meter.
/// Pool statistics only change at eviction passes, so every check is valid
/// on any day.
pub fn check_learner(
    learner: &dyn Learner,
    day: Day,
    epoch: Option<u64>,
    word_bound: Option<u64>,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for view in learner.pools() {
        let pool = view.pool;
        let mut push = |kind: &'static str, detail: String| {
            out.push(Violation {
                day,
                level: view.level,
                epoch,
                kind,
                detail,
                pool_dump: pool.dump(),
            })
        };
        if pool.len() > view.cap {
            push("pool-cap", format!("{} entries > cap {}", pool.len(), view.cap));
        }
        if !pool.structure_ok() {
            push("structure", "entry epochs or cross table out of order".into());
        }
        let dom = pool.domination_violations(view.threshold);
        if !dom.is_empty() {
            push("domination", format!("{dom:?}"));
        }
        if view.raw_losses {
            let pot = pool.potential_violations(view.threshold, POTENTIAL_TOLERANCE);
            if !pot.is_empty() {
                push("potential", format!("{:?} at {pot:?}", pool.potential()));
            }
            let ll = pool.loss_length_violations(view.threshold);
            if !ll.is_empty() {
                push("loss-length", format!("{ll:?}"));
            }
        }
    }
    let snap = learner.meter();
    let audit = learner.audit_words();
    let meter_issue = |kind: &'static str, detail: String| Violation {
        day,
        level: 0,
        epoch,
        kind,
        detail,
        pool_dump: String::new(),
    };
    if audit != snap.current {
        out.push(meter_issue(
            "meter-audit",
            format!("meter {} != audit {audit}", snap.current),
        ));
    }
    if snap.peak < snap.current {
        out.push(meter_issue("meter-peak", format!("{snap:?}")));
    }
    if let Some(bound) = word_bound {
        if snap.current > bound {
            out.push(meter_issue(
                "memory-cap",
                format!("{} words > bound {bound}", snap.current),
            ));
        }
    }
    out
}
