//! Dialogue funnel over an audit log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::audit::AuditRecord;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FunnelReport {
    /// Distinct sessions with at least one turn.
    pub initiated: usize,
    pub reached_routing: usize,
    pub emergency: usize,
    pub moderated: usize,
    pub routing_rate: f64,
    pub emergency_rate: f64,
    pub moderation_rate: f64,
    pub turns: usize,
    /// Lines that could not be parsed.
    pub skipped: usize,
}

#[derive(Default)]
struct Session {
    routed: bool,
    emergency: bool,
    moderated: bool,
}

pub const ROUTING_STATE: &str = "DiagnosticRouting";
pub const EMERGENCY_STATE: &str = "Emergency";
pub const MODERATION_STATE: &str = "Moderation";

/// Per-session outcomes from audit-log text. A session counts as routed,
/// emergency or moderated when any of its turns visited that state.
pub fn funnel_stats(log: &str) -> FunnelReport {
    let mut sessions: BTreeMap<String, Session> = BTreeMap::new();
    let mut report = FunnelReport::default();
    for line in log.lines().filter(|l| !l.trim().is_empty()) {
        let Ok(rec) = serde_json::from_str::<AuditRecord>(line) else {
            report.skipped += 1;
            continue;
        };
        report.turns += 1;
        let s = sessions.entry(rec.key_hash).or_default();
        let visited = |name: &str| rec.final_state == name || rec.state_path.iter().any(|q| q == name);
        s.routed |= visited(ROUTING_STATE);
        s.emergency |= visited(EMERGENCY_STATE);
        s.moderated |= visited(MODERATION_STATE);
    }
    report.initiated = sessions.len();
    report.reached_routing = sessions.values().filter(|s| s.routed).count();
    report.emergency = sessions.values().filter(|s| s.emergency).count();
    report.moderated = sessions.values().filter(|s| s.moderated).count();
    let rate = |n: usize| if report.initiated == 0 { 0.0 } else { n as f64 / report.initiated as f64 };
    report.routing_rate = rate(report.reached_routing);
    report.emergency_rate = rate(report.emergency);
    report.moderation_rate = rate(report.moderated);
    report
}
