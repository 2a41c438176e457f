//! Optimization history and its serializations.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::LossBreakdown;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    /// Optimization stage (knot rounds advance it).
    pub stage: usize,
    pub l_data: f64,
    pub l_ic: f64,
    pub l_bc: f64,
    pub l_phy: f64,
    pub l1_term: f64,
    pub total: f64,
    pub gamma: f64,
    pub theta: Vec<f64>,
}

impl IterRecord {
    pub fn new(iter: usize, stage: usize, l: &LossBreakdown, gamma: f64, theta: &[f64]) -> Self {
        IterRecord {
            iter,
            stage,
            l_data: l.data,
            l_ic: l.ic,
            l_bc: l.bc,
            l_phy: l.phy,
            l1_term: l.l1,
            total: l.total,
            gamma,
            theta: theta.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotEvent {
    pub round: usize,
    #[serde(default)]
    pub field: usize,
    pub axis: usize,
    /// Iteration count when the event happened.
    pub at_iter: usize,
    pub inserted: Vec<f64>,
    /// Per interior knot displacement from movement.
    pub moved: Vec<f64>,
    pub exhausted: bool,
    pub losses_before: LossBreakdown,
    pub losses_after: LossBreakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMark {
    pub epoch: usize,
    pub batch: usize,
    pub start_iter: usize,
    pub n_data: usize,
    pub n_colloc: usize,
    pub design_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iter: usize,
    pub stage: usize,
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    pub theta_names: Vec<String>,
    pub records: Vec<IterRecord>,
    pub knot_events: Vec<KnotEvent>,
    pub batches: Vec<BatchMark>,
    pub snapshots: Vec<Snapshot>,
    pub peak_design_bytes: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Iter(IterRecord),
    Knot(KnotEvent),
    Batch(BatchMark),
}

/// Final summary; `wall_time` is the only non-deterministic field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub theta_names: Vec<String>,
    pub final_theta: Vec<f64>,
    pub final_losses: Option<IterRecord>,
    pub iters: usize,
    pub knot_rounds: usize,
    pub peak_design_bytes: usize,
    pub wall_time: f64,
}

impl OptTrace {
    pub fn new(theta_names: Vec<String>) -> Self {
        OptTrace {
            theta_names,
            ..Default::default()
        }
    }

    pub fn next_iter(&self) -> usize {
        self.records.last().map_or(1, |r| r.iter + 1)
    }

    pub fn last(&self) -> Option<&IterRecord> {
        self.records.last()
    }

    /// One JSON object per line: iterations, knot events and batch marks in
    /// iteration order.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let mut lines: Vec<(usize, usize, Line)> = Vec::new();
        for r in &self.records {
            lines.push((r.iter, 2, Line::Iter(r.clone())));
        }
        for k in &self.knot_events {
            lines.push((k.at_iter, 3, Line::Knot(k.clone())));
        }
        for b in &self.batches {
            lines.push((b.start_iter, 1, Line::Batch(b.clone())));
        }
        lines.sort_by_key(|(i, o, _)| (*i, *o));
        for (_, _, l) in lines {
            serde_json::to_writer(&mut w, &l)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(text: &str, theta_names: Vec<String>) -> Result<OptTrace> {
        let mut t = OptTrace::new(theta_names);
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str::<Line>(line)? {
                Line::Iter(r) => t.records.push(r),
                Line::Knot(k) => t.knot_events.push(k),
                Line::Batch(b) => t.batches.push(b),
            }
        }
        Ok(t)
    }

    pub fn summary(&self, wall_time: f64) -> Summary {
        Summary {
            theta_names: self.theta_names.clone(),
            final_theta: self.last().map(|r| r.theta.clone()).unwrap_or_default(),
            final_losses: self.last().cloned(),
            iters: self.records.len(),
            knot_rounds: self.knot_events.iter().map(|k| k.round).max().unwrap_or(0),
            peak_design_bytes: self.peak_design_bytes,
            wall_time,
        }
    }

    pub fn loss_csv(&self) -> String {
        let mut s = String::from("iter,stage,l_data,l_ic,l_bc,l_phy,l1_term,total,gamma\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.iter, r.stage, r.l_data, r.l_ic, r.l_bc, r.l_phy, r.l1_term, r.total, r.gamma
            );
        }
        s
    }

    pub fn theta_csv(&self) -> String {
        let mut s = String::from("iter");
        for n in &self.theta_names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.iter.to_string());
            for t in &r.theta {
                let _ = write!(s, ",{t:e}");
            }
            s.push('\n');
        }
        s
    }

    /// One row per inserted or moved knot.
    pub fn events_csv(&self) -> String {
        let mut s = String::from("round,field,axis,at_iter,event,position_or_delta\n");
        for e in &self.knot_events {
            for x in &e.inserted {
                let _ = writeln!(s, "{},{},{},{},insert,{x:e}", e.round, e.field, e.axis, e.at_iter);
            }
            for d in &e.moved {
                let _ = writeln!(s, "{},{},{},{},move,{d:e}", e.round, e.field, e.axis, e.at_iter);
            }
        }
        s
    }
}
