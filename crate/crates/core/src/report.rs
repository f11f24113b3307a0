//! Rendering of cost reports and ranked plans, and rank agreement against the
//! embedded measurement tables.

use std::fmt::Write as _;

use serde::Serialize;

use crate::config::ConfigSet;
use crate::error::{Error, Result};
use crate::planner::{evaluate_all, CostReport, PlanOptions, RankedPlan};
use crate::reference::{reference_table, ReferenceTable};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Table,
    Csv,
    Json,
}

pub const CSV_HEADER: [&str; 12] = [
    "dp",
    "pp",
    "tp",
    "cp",
    "feasible",
    "reason",
    "step_time_s",
    "throughput_tok_s",
    "mfu_pct",
    "weight_bytes",
    "act_bytes",
    "comm_bytes",
];

/// Feasible entries in rank order followed by infeasible ones, cut to `top`.
pub fn plan_rows(plan: &RankedPlan, top: Option<usize>) -> Vec<&CostReport> {
    let rows = plan
        .feasible
        .iter()
        .map(|e| &e.report)
        .chain(plan.infeasible.iter());
    match top {
        Some(k) => rows.take(k).collect(),
        None => rows.collect(),
    }
}

pub fn render_plan(plan: &RankedPlan, top: Option<usize>, format: Format) -> Result<String> {
    let rows = plan_rows(plan, top);
    match format {
        Format::Csv => plan_csv(&rows),
        Format::Json => {
            #[derive(Serialize)]
            struct View<'a> {
                ranking_key: String,
                feasible_count: usize,
                rows: Vec<&'a CostReport>,
            }
            let view = View {
                ranking_key: plan.ranking_key.to_string(),
                feasible_count: plan.feasible.len(),
                rows,
            };
            Ok(serde_json::to_string_pretty(&view).expect("plan serializes") + "\n")
        }
        Format::Table => Ok(plan_table(plan, &rows)),
    }
}

fn plan_csv(rows: &[&CostReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Reference {
        id: "csv".into(),
        message: e.to_string(),
    };
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        let c = r.config;
        w.write_record([
            c.dp.to_string(),
            c.pp.to_string(),
            c.tp.to_string(),
            c.cp.to_string(),
            r.feasible.to_string(),
            r.reason.clone(),
            r.step_time.to_string(),
            r.throughput.to_string(),
            r.mfu.to_string(),
            r.weight_bytes.to_string(),
            r.activation_bytes.to_string(),
            r.comm_bytes().to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Reference {
        id: "csv".into(),
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

const GB: f64 = 1e9;

fn plan_table(plan: &RankedPlan, rows: &[&CostReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4}  {:<12} {:>10} {:>10} {:>6} {:>8} {:>9}  status",
        "rank", "dp,pp,tp,cp", "step (s)", "ktok/s", "MFU %", "mem GB", "comm GB"
    );
    for (i, r) in rows.iter().enumerate() {
        let c = r.config;
        let rank = if i < plan.feasible.len() {
            (i + 1).to_string()
        } else {
            "-".into()
        };
        let status = if r.feasible { "ok".to_string() } else { format!("infeasible ({})", r.reason) };
        let _ = writeln!(
            out,
            "{:>4}  {:<12} {:>10.1} {:>10.1} {:>6.1} {:>8.1} {:>9.1}  {}",
            rank,
            format!("{},{},{},{}", c.dp, c.pp, c.tp, c.cp),
            r.step_time,
            r.throughput / 1e3,
            r.mfu,
            r.memory_bytes() as f64 / GB,
            r.comm_bytes() as f64 / GB,
            status
        );
    }
    let _ = writeln!(
        out,
        "ranked by {}; {} feasible, {} infeasible",
        plan.ranking_key,
        plan.feasible.len(),
        plan.infeasible.len()
    );
    out
}

pub fn render_analysis(set: &ConfigSet, r: &CostReport, format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(r).expect("report serializes") + "\n"),
        Format::Csv => plan_csv(&[r]),
        Format::Table => Ok(analysis_text(set, r)),
    }
}

fn analysis_text(set: &ConfigSet, r: &CostReport) -> String {
    let c = r.config;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} ({}), {} mode, (dp,pp,tp,cp) = ({},{},{},{}), tp flavor {}",
        set.model.name,
        set.model.kind(),
        r.mode,
        c.dp,
        c.pp,
        c.tp,
        c.cp,
        c.tp_flavor
    );
    let _ = writeln!(
        out,
        "micro-batches {}, layers per stage {}{}",
        r.num_microbatches,
        r.layers_per_stage,
        if r.uneven_stages { " (uneven)" } else { "" }
    );
    let _ = writeln!(out, "\nper layer, per micro-batch, per device:");
    let _ = writeln!(
        out,
        "  {:<18} {:>14} {:>14} {:>14} {:>14}",
        "block", "cube FLOPs", "vector FLOPs", "act bytes", "weight bytes"
    );
    for b in &r.blocks {
        let _ = writeln!(
            out,
            "  {:<18} {:>14.4e} {:>14.4e} {:>14} {:>14}",
            b.name, b.cube_flops, b.vector_flops, b.activation_bytes, b.weight_bytes
        );
    }
    let _ = writeln!(out, "\nper step, per device:");
    let _ = writeln!(out, "  cube FLOPs       {:.4e}", r.flops_cube_per_device);
    let _ = writeln!(out, "  vector FLOPs     {:.4e}", r.flops_vector_per_device);
    let _ = writeln!(out, "  weights          {:.2} GB", r.weight_bytes as f64 / GB);
    let _ = writeln!(out, "  activations      {:.2} GB", r.activation_bytes as f64 / GB);
    let _ = writeln!(out, "  training state   {:.2} GB", r.training_state_bytes as f64 / GB);
    let _ = writeln!(
        out,
        "  memory total     {:.2} GB of {:.2} GB",
        r.memory_bytes() as f64 / GB,
        set.cluster.mem_capacity as f64 / GB
    );
    if !r.comm.is_empty() {
        let _ = writeln!(out, "\ncommunication per step:");
        for e in &r.comm {
            let _ = writeln!(
                out,
                "  {:<3} {:<20} {:<6} {:>10.3} GB {:>10.3} s{}",
                e.axis.as_str(),
                e.kind.as_str(),
                match e.fabric {
                    crate::planner::Fabric::Intra => "intra",
                    crate::planner::Fabric::Inter => "inter",
                },
                e.bytes as f64 / GB,
                e.seconds,
                if e.scaling_estimate { "  (scaling estimate)" } else { "" }
            );
        }
    }
    let v = &r.roofline;
    let _ = writeln!(
        out,
        "\nroofline: intensity {:.2} FLOPs/B vs ridge {:.2} -> {}{}",
        v.arithmetic_intensity,
        v.ridge_point,
        match v.bound {
            crate::metrics::Bound::ComputeBound => "compute bound",
            crate::metrics::Bound::MemoryBound => "memory bound",
        },
        if v.on_boundary { " (on boundary)" } else { "" }
    );
    let _ = writeln!(
        out,
        "time: compute {:.2} s + comm {:.2} s, bubble {:.3} -> step {:.2} s",
        r.compute_time, r.comm_time, r.bubble_fraction, r.step_time
    );
    let _ = writeln!(
        out,
        "throughput {:.1} ktok/s, MFU {:.1}%, TTFT {:.3} s",
        r.throughput / 1e3,
        r.mfu,
        r.ttft
    );
    for note in &r.notes {
        let _ = writeln!(out, "note: {note}");
    }
    let _ = writeln!(
        out,
        "{}",
        if r.feasible {
            "feasible".to_string()
        } else {
            format!("infeasible: {}", r.reason)
        }
    );
    out
}

/// Ranks with ties sharing their average position; the largest value gets
/// rank 1.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub config: (u32, u32, u32, u32),
    pub measured_mfu_pct: f64,
    pub measured_mem_gb: f64,
    pub planner_mfu_pct: f64,
    pub planner_mem_gb: f64,
    pub planner_feasible: bool,
    pub planner_reason: String,
    /// 1-based position in the planner ordering restricted to this table.
    pub planner_rank: usize,
    pub measured_rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub reference: String,
    pub rows: Vec<CompareRow>,
    pub spearman_mfu: f64,
    /// Advisory only: the published memory figure is not defined precisely.
    pub spearman_memory: f64,
    pub measured_best: (u32, u32, u32, u32),
    pub measured_worst: (u32, u32, u32, u32),
    pub planner_order: Vec<(u32, u32, u32, u32)>,
    pub best_in_planner_top1: bool,
    pub best_in_planner_top3: bool,
    pub worst_in_planner_bottom4: bool,
}

impl Comparison {
    pub fn planner_rank_of(&self, cfg: (u32, u32, u32, u32)) -> Option<usize> {
        self.planner_order.iter().position(|c| *c == cfg).map(|p| p + 1)
    }
}

/// Planner ordering key: feasible configurations first, then by MFU.
fn planner_key(r: &CostReport) -> f64 {
    if r.feasible {
        1000.0 + r.mfu
    } else {
        r.mfu
    }
}

/// Compare planner estimates with the reference table `id` over the
/// configurations the table lists.
pub fn compare(set: &ConfigSet, opts: &PlanOptions, id: &str) -> Result<Comparison> {
    let table = reference_table(id)?;
    let reports = evaluate_all(set, opts)?;
    compare_with(&table, &reports)
}

pub fn compare_with(table: &ReferenceTable, reports: &[CostReport]) -> Result<Comparison> {
    let mut matched = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let r = reports
            .iter()
            .find(|r| r.parallel().tuple() == row.tuple())
            .ok_or_else(|| Error::Reference {
                id: table.id.into(),
                message: format!("row {:?} has no enumerated configuration", row.tuple()),
            })?;
        matched.push((row, r));
    }
    let measured: Vec<f64> = matched.iter().map(|(row, _)| row.mfu_pct).collect();
    let planner: Vec<f64> = matched.iter().map(|(_, r)| planner_key(r)).collect();
    let measured_mem: Vec<f64> = matched.iter().map(|(row, _)| row.mem_gb).collect();
    let planner_mem: Vec<f64> = matched.iter().map(|(_, r)| r.memory_bytes() as f64).collect();

    let mut order: Vec<usize> = (0..matched.len()).collect();
    order.sort_by(|&a, &b| {
        planner[b]
            .total_cmp(&planner[a])
            .then_with(|| matched[b].0.tuple().cmp(&matched[a].0.tuple()))
    });
    let planner_order: Vec<_> = order.iter().map(|&i| matched[i].0.tuple()).collect();
    let mut measured_order: Vec<usize> = (0..matched.len()).collect();
    measured_order.sort_by(|&a, &b| measured[b].total_cmp(&measured[a]));

    let rows = matched
        .iter()
        .enumerate()
        .map(|(i, (row, r))| CompareRow {
            config: row.tuple(),
            measured_mfu_pct: row.mfu_pct,
            measured_mem_gb: row.mem_gb,
            planner_mfu_pct: r.mfu,
            planner_mem_gb: r.memory_bytes() as f64 / GB,
            planner_feasible: r.feasible,
            planner_reason: r.reason.clone(),
            planner_rank: order.iter().position(|&j| j == i).unwrap() + 1,
            measured_rank: measured_order.iter().position(|&j| j == i).unwrap() + 1,
        })
        .collect();

    let best = table.best().tuple();
    let worst = table.worst().tuple();
    let n = planner_order.len();
    Ok(Comparison {
        reference: table.id.to_string(),
        rows,
        spearman_mfu: spearman(&planner, &measured),
        spearman_memory: spearman(&planner_mem, &measured_mem),
        measured_best: best,
        measured_worst: worst,
        best_in_planner_top1: planner_order.first() == Some(&best),
        best_in_planner_top3: planner_order.iter().take(3).any(|c| *c == best),
        worst_in_planner_bottom4: planner_order.iter().skip(n.saturating_sub(4)).any(|c| *c == worst),
        planner_order,
    })
}

pub fn render_comparison(c: &Comparison, format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(c).expect("comparison serializes") + "\n"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let err = |e: csv::Error| Error::Reference {
                id: c.reference.clone(),
                message: e.to_string(),
            };
            w.write_record([
                "dp",
                "pp",
                "tp",
                "cp",
                "measured_mfu_pct",
                "planner_mfu_pct",
                "measured_rank",
                "planner_rank",
                "measured_mem_gb",
                "planner_mem_gb",
                "planner_feasible",
            ])
            .map_err(err)?;
            for r in &c.rows {
                w.write_record([
                    r.config.0.to_string(),
                    r.config.1.to_string(),
                    r.config.2.to_string(),
                    r.config.3.to_string(),
                    r.measured_mfu_pct.to_string(),
                    r.planner_mfu_pct.to_string(),
                    r.measured_rank.to_string(),
                    r.planner_rank.to_string(),
                    r.measured_mem_gb.to_string(),
                    r.planner_mem_gb.to_string(),
                    r.planner_feasible.to_string(),
                ])
                .map_err(err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Reference {
                id: c.reference.clone(),
                message: e.to_string(),
            })?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        Format::Table => {
            let mut out = String::new();
            let _ = writeln!(out, "reference {}", c.reference);
            let _ = writeln!(
                out,
                "{:<12} {:>9} {:>9} {:>6} {:>6} {:>9} {:>9}  planner",
                "dp,pp,tp,cp", "meas MFU", "plan MFU", "m.rank", "p.rank", "meas GB", "plan GB"
            );
            for r in &c.rows {
                let (a, b, t, d) = r.config;
                let _ = writeln!(
                    out,
                    "{:<12} {:>9.1} {:>9.1} {:>6} {:>6} {:>9.1} {:>9.1}  {}",
                    format!("{a},{b},{t},{d}"),
                    r.measured_mfu_pct,
                    r.planner_mfu_pct,
                    r.measured_rank,
                    r.planner_rank,
                    r.measured_mem_gb,
                    r.planner_mem_gb,
                    if r.planner_feasible {
                        "ok".to_string()
                    } else {
                        format!("infeasible ({})", r.planner_reason)
                    }
                );
            }
            let _ = writeln!(out, "spearman(mfu) = {:.3}", c.spearman_mfu);
            let _ = writeln!(out, "spearman(memory, advisory) = {:.3}", c.spearman_memory);
            let _ = writeln!(
                out,
                "measured best {:?}: planner top-1 {}, top-3 {}",
                c.measured_best, c.best_in_planner_top1, c.best_in_planner_top3
            );
            let _ = writeln!(
                out,
                "measured worst {:?}: planner bottom-4 {}",
                c.measured_worst, c.worst_in_planner_bottom4
            );
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 2.0]), vec![1.0, 3.0, 2.0]);
        assert_eq!(average_ranks(&[5.0, 5.0, 1.0, 7.0]), vec![2.5, 2.5, 4.0, 1.0]);
    }

    #[test]
    fn spearman_basics() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &x) - 1.0).abs() < 1e-12);
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        assert!((spearman(&x, &rev) + 1.0).abs() < 1e-12);
        // Monotone transform keeps rank correlation.
        let sq: Vec<f64> = x.iter().map(|v| v * v * v).collect();
        assert!((spearman(&x, &sq) - 1.0).abs() < 1e-12);
    }
}
