//! The run report and its renderers. Reports are pure functions of the
//! run: regenerating from the same scenario and seed yields identical
//! bytes in every format.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::consensus::TokenAmount;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportHeader {
    pub name: String,
    pub seed: u64,
    pub schema: u32,
    pub hash_scheme: String,
    pub signature_scheme: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionSummary {
    /// (participant, rendered answer), sorted by participant.
    pub rows: Vec<(String, String)>,
    pub count: u64,
    pub mean: Option<f64>,
    pub median: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoiTable {
    pub name: String,
    pub questions: BTreeMap<String, QuestionSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub time_ms: u64,
    pub agent: String,
    pub map: String,
    pub function: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlashEventReport {
    pub height: u64,
    pub validator: String,
    pub beacon_ids: Vec<String>,
    pub exclusion_count: u32,
    pub burned: TokenAmount,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalanceSheet {
    pub initial_supply: TokenAmount,
    pub minted: TokenAmount,
    pub burned: TokenAmount,
    pub fee_pool: TokenAmount,
    pub circulating: TokenAmount,
    pub conserved: bool,
    pub balances: BTreeMap<String, TokenAmount>,
    pub stakes: BTreeMap<String, TokenAmount>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub order: Vec<String>,
    pub means: Vec<f64>,
    pub medians: Vec<f64>,
    pub actuals: Vec<f64>,
    pub pearson_mean: f64,
    pub pearson_median: f64,
    pub spearman_mean: f64,
    pub spearman_median: f64,
    pub note: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub header: ReportHeader,
    pub poi_tables: BTreeMap<String, PoiTable>,
    pub estimates: Vec<EstimateRecord>,
    /// map -> agent -> function -> value at end of run.
    pub final_estimates: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    /// map -> function -> centrally computed value over live inputs.
    pub map_truths: BTreeMap<String, BTreeMap<String, f64>>,
    pub verdict_counts: BTreeMap<String, u64>,
    pub slash_events: Vec<SlashEventReport>,
    pub balance_sheet: BalanceSheet,
    pub correlations: Option<CorrelationReport>,
    pub deliveries_digest: String,
    pub dropped_messages: u64,
    pub chain_height: u64,
    pub config_echo: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    JsonLines,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "text" => Format::Text,
            "csv" => Format::Csv,
            "jsonlines" => Format::JsonLines,
            _ => return None,
        })
    }
}

/// Deterministic rendering of a report in the chosen format.
pub fn report_render(report: &RunReport, format: Format) -> Vec<u8> {
    match format {
        Format::Text => render_text(report).into_bytes(),
        Format::Csv => render_csv(report).into_bytes(),
        Format::JsonLines => render_jsonlines(report).into_bytes(),
    }
}

fn render_text(report: &RunReport) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let h = &report.header;
    writeln!(out, "witnessnet run report").unwrap();
    writeln!(
        out,
        "name: {}  seed: {}  schema: {}",
        h.name, h.seed, h.schema
    )
    .unwrap();
    writeln!(
        out,
        "hash: {}  signatures: {}",
        h.hash_scheme, h.signature_scheme
    )
    .unwrap();
    writeln!(out, "chain height: {}", report.chain_height).unwrap();

    writeln!(out, "\n== answers by point of interest ==").unwrap();
    for (poi_id, table) in &report.poi_tables {
        for (question_id, summary) in &table.questions {
            let mean = summary
                .mean
                .map(|m| format!("{m:.2}"))
                .unwrap_or_else(|| "-".into());
            let median = summary
                .median
                .map(|m| format!("{m:.2}"))
                .unwrap_or_else(|| "-".into());
            writeln!(
                out,
                "poi {poi_id} ({}) question {question_id}: n {} mean {mean} median {median}",
                table.name, summary.count
            )
            .unwrap();
            for (who, answer) in &summary.rows {
                writeln!(out, "  {who}: {answer}").unwrap();
            }
        }
    }

    if !report.final_estimates.is_empty() {
        writeln!(out, "\n== collective measurements at end of run ==").unwrap();
        for (map_id, agents) in &report.final_estimates {
            let truths = report.map_truths.get(map_id);
            let truth_mean = truths
                .and_then(|t| t.get("mean"))
                .map(|v| format!("{v:.9}"))
                .unwrap_or_else(|| "-".into());
            writeln!(
                out,
                "map {map_id}: central mean {truth_mean}, {} agents",
                agents.len()
            )
            .unwrap();
            for (agent, fns) in agents {
                let rendered: Vec<String> =
                    fns.iter().map(|(f, v)| format!("{f} {v:.9}")).collect();
                writeln!(out, "  {agent}: {}", rendered.join(", ")).unwrap();
            }
        }
    }

    writeln!(out, "\n== verdicts ==").unwrap();
    for (label, count) in &report.verdict_counts {
        writeln!(out, "{label}: {count}").unwrap();
    }

    writeln!(out, "\n== slashing ==").unwrap();
    if report.slash_events.is_empty() {
        writeln!(out, "(none)").unwrap();
    }
    for e in &report.slash_events {
        writeln!(
            out,
            "height {}: validator {} slashed, beacons {:?}, exclusions {}, burned {}",
            e.height, e.validator, e.beacon_ids, e.exclusion_count, e.burned
        )
        .unwrap();
    }

    let b = &report.balance_sheet;
    writeln!(out, "\n== token balance sheet ==").unwrap();
    writeln!(
        out,
        "initial {} minted {} burned {} fee-pool {} circulating {} conserved {}",
        b.initial_supply, b.minted, b.burned, b.fee_pool, b.circulating, b.conserved
    )
    .unwrap();
    for (who, amount) in &b.balances {
        let stake = b
            .stakes
            .get(who)
            .map(|s| format!(" stake {s}"))
            .unwrap_or_default();
        writeln!(out, "  {who}: balance {amount}{stake}").unwrap();
    }

    if let Some(c) = &report.correlations {
        writeln!(out, "\n== validation against baseline ==").unwrap();
        for (i, poi) in c.order.iter().enumerate() {
            writeln!(
                out,
                "spot {poi}: mean {:.2} median {:.2} baseline {:.2}",
                c.means[i], c.medians[i], c.actuals[i]
            )
            .unwrap();
        }
        writeln!(out, "pearson(mean, baseline): {:.2}", c.pearson_mean).unwrap();
        writeln!(out, "pearson(median, baseline): {:.2}", c.pearson_median).unwrap();
        writeln!(out, "spearman(mean, baseline): {:.1}", c.spearman_mean).unwrap();
        writeln!(out, "spearman(median, baseline): {:.3}", c.spearman_median).unwrap();
        writeln!(out, "note: {}", c.note).unwrap();
    }

    writeln!(out, "\ndeliveries digest: {}", report.deliveries_digest).unwrap();
    writeln!(out, "dropped messages: {}", report.dropped_messages).unwrap();
    out
}

fn render_csv(report: &RunReport) -> String {
    let mut out = String::from("time_ms,agent,map,function,value\n");
    for e in &report.estimates {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.time_ms, e.agent, e.map, e.function, e.value
        ));
    }
    out
}

fn render_jsonlines(report: &RunReport) -> String {
    let mut out = String::new();
    let mut line = |value: serde_json::Value| {
        out.push_str(&serde_json::to_string(&value).expect("report serializes"));
        out.push('\n');
    };
    line(serde_json::json!({"kind": "header", "data": report.header}));
    for (poi, table) in &report.poi_tables {
        line(serde_json::json!({"kind": "poi_table", "poi": poi, "data": table}));
    }
    for e in &report.estimates {
        line(serde_json::json!({"kind": "estimate", "data": e}));
    }
    line(serde_json::json!({"kind": "final_estimates", "data": report.final_estimates}));
    line(serde_json::json!({"kind": "map_truths", "data": report.map_truths}));
    line(serde_json::json!({"kind": "verdicts", "data": report.verdict_counts}));
    line(serde_json::json!({"kind": "slash_events", "data": report.slash_events}));
    line(serde_json::json!({"kind": "balance_sheet", "data": report.balance_sheet}));
    if let Some(c) = &report.correlations {
        line(serde_json::json!({"kind": "correlations", "data": c}));
    }
    line(serde_json::json!({
        "kind": "footer",
        "deliveries_digest": report.deliveries_digest,
        "dropped_messages": report.dropped_messages,
        "chain_height": report.chain_height,
    }));
    out
}
