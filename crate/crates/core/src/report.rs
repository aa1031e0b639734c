//! Campaign report documents and their text tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::orchestrator::{load_transcript, AttemptSummary, CampaignStats, RunTranscript, Triple};
use crate::synth::Objective;

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("{0}")]
    Io(String),
    #[error("{path}: {msg}")]
    Corrupt { path: String, msg: String },
    #[error("no transcripts under {0}")]
    Empty(String),
    #[error("{attempt}: {msg}")]
    Mismatch { attempt: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub benchmark: String,
    pub objective: Objective,
    pub backend: String,
    pub provider: Option<String>,
    pub stats: CampaignStats,
    pub attempts: Vec<AttemptSummary>,
    pub config: Config,
}

impl ReportDocument {
    pub fn new(
        benchmark: &str,
        objective: Objective,
        backend: &str,
        provider: Option<String>,
        transcripts: &[RunTranscript],
        config: &Config,
    ) -> Self {
        let attempts: Vec<AttemptSummary> = transcripts.iter().map(AttemptSummary::of).collect();
        ReportDocument {
            schema_version: SCHEMA_VERSION,
            benchmark: benchmark.to_string(),
            objective,
            backend: backend.to_string(),
            provider,
            stats: CampaignStats::from_summaries(&attempts),
            attempts,
            config: config.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, ReportError> {
        let doc: ReportDocument =
            serde_json::from_str(text).map_err(|e| ReportError::Corrupt { path: origin.to_string(), msg: e.to_string() })?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(ReportError::Corrupt {
                path: origin.to_string(),
                msg: format!("schema version {} (expected {SCHEMA_VERSION})", doc.schema_version),
            });
        }
        Ok(doc)
    }

    /// Embedded stats must equal a recomputation from the embedded summaries.
    pub fn check(&self) -> Result<(), ReportError> {
        let again = CampaignStats::from_summaries(&self.attempts);
        if again != self.stats {
            return Err(ReportError::Mismatch {
                attempt: "report".to_string(),
                msg: "embedded statistics differ from recomputation over the attempt summaries".to_string(),
            });
        }
        Ok(())
    }

    pub fn table(&self) -> String {
        render_table(&[(self.benchmark.as_str(), &self.stats)])
    }

    pub fn write(&self, dir: &Path) -> Result<(), ReportError> {
        for (name, text) in [(REPORT_JSON, self.to_json()), (REPORT_TXT, self.table())] {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| ReportError::Io(format!("{}: {e}", p.display())))?;
        }
        Ok(())
    }
}

fn triple_cells(t: &Option<Triple>) -> [String; 3] {
    match t {
        Some(t) => t.cells(),
        None => ["-".to_string(), "-".to_string(), "-".to_string()],
    }
}

/// One table row per benchmark. ASIC columns always; FPGA columns when any
/// row carries them.
pub fn render_table(rows: &[(&str, &CampaignStats)]) -> String {
    let fpga = |s: &CampaignStats| [s.luts, s.ffs, s.dsps, s.brams, s.freq_mhz, s.latency_us];
    let with_fpga = rows.iter().any(|(_, s)| fpga(s).iter().any(Option::is_some));
    let mut groups = vec!["#Compile Runs", "#HLS Runs", "Area", "Cycle Count"];
    if with_fpga {
        groups.extend(["LUTs", "FFs", "DSPs", "BRAMs", "Freq [MHz]", "Latency [us]"]);
    }
    let mut header = vec!["Benchmark".to_string(), "Succ.[%]".to_string()];
    for g in &groups {
        header.extend(["Avg", "Min", "Max"].map(|k| format!("{g} {k}")));
    }
    let mut lines = vec![header.join(" | ")];
    for (name, s) in rows {
        let mut cells = vec![name.to_string(), crate::orchestrator::fmt_num(s.success_rate_pct)];
        for t in [&s.compile_runs, &s.hls_runs, &s.area, &s.cycles] {
            cells.extend(triple_cells(t));
        }
        if with_fpga {
            for t in fpga(s) {
                cells.extend(triple_cells(&t));
            }
        }
        lines.push(cells.join(" | "));
    }
    lines.join("\n") + "\n"
}

fn attempt_dirs(dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let root = dir.join("attempts");
    let rd = std::fs::read_dir(&root).map_err(|_| ReportError::Empty(dir.display().to_string()))?;
    let mut dirs: Vec<PathBuf> = rd.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.join("transcript.json").is_file()).collect();
    dirs.sort();
    Ok(dirs)
}

/// All transcripts of a campaign directory, each checked for counter
/// soundness and stage ordering. Cancelled attempts are skipped.
pub fn load_campaign(dir: &Path) -> Result<Vec<RunTranscript>, ReportError> {
    let mut out = Vec::new();
    for d in attempt_dirs(dir)? {
        let path = d.join("transcript.json");
        let t = load_transcript(&path).map_err(|e| ReportError::Corrupt { path: path.display().to_string(), msg: e.to_string() })?;
        t.check().map_err(|msg| ReportError::Mismatch { attempt: t.attempt_id.clone(), msg })?;
        if !t.cancelled {
            out.push(t);
        }
    }
    if out.is_empty() {
        return Err(ReportError::Empty(dir.display().to_string()));
    }
    Ok(out)
}

/// Recompute a campaign's statistics from its transcripts. When the
/// directory also holds a report document, every embedded summary must
/// match its transcript.
pub fn recompute(dir: &Path) -> Result<(CampaignStats, Option<ReportDocument>), ReportError> {
    let transcripts = load_campaign(dir)?;
    let stats = CampaignStats::from_transcripts(&transcripts);
    let doc_path = dir.join(REPORT_JSON);
    if !doc_path.is_file() {
        return Ok((stats, None));
    }
    let text = std::fs::read_to_string(&doc_path).map_err(|e| ReportError::Io(format!("{}: {e}", doc_path.display())))?;
    let doc = ReportDocument::from_json(&text, &doc_path.display().to_string())?;
    doc.check()?;
    for t in &transcripts {
        let fresh = AttemptSummary::of(t);
        match doc.attempts.iter().find(|a| a.attempt_id == t.attempt_id) {
            None => {
                return Err(ReportError::Mismatch { attempt: t.attempt_id.clone(), msg: "missing from report".to_string() })
            }
            Some(a) if *a != fresh => {
                return Err(ReportError::Mismatch {
                    attempt: t.attempt_id.clone(),
                    msg: "report summary differs from transcript".to_string(),
                })
            }
            Some(_) => {}
        }
    }
    if doc.attempts.len() != transcripts.len() {
        return Err(ReportError::Mismatch {
            attempt: "report".to_string(),
            msg: format!("{} summaries but {} transcripts", doc.attempts.len(), transcripts.len()),
        });
    }
    if doc.stats != stats {
        return Err(ReportError::Mismatch { attempt: "report".to_string(), msg: "statistics differ from transcripts".to_string() });
    }
    Ok((stats, Some(doc)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::PpaMetrics;

    fn summary(id: usize, compile: u32, hls: u32, m: Option<PpaMetrics>) -> AttemptSummary {
        AttemptSummary {
            attempt_id: format!("attempt-{id:03}"),
            passed: m.is_some(),
            reason: m.is_none().then(|| "budget exhausted".to_string()),
            compile_runs: compile,
            hls_runs: hls,
            iterations: compile,
            llm_requests: 0,
            metrics: m,
        }
    }

    #[test]
    fn header_and_row_shape() {
        let s = CampaignStats::from_summaries(&[summary(
            1,
            3,
            1,
            Some(PpaMetrics { area_um2: Some(120.0), cycle_count: Some(40), ..Default::default() }),
        )]);
        let t = render_table(&[("toy", &s)]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("Benchmark | Succ.[%] | #Compile Runs Avg | #Compile Runs Min"));
        assert_eq!(lines[1], "toy | 100 | 3 | 3 | 3 | 1 | 1 | 1 | 120 | 120 | 120 | 40 | 40 | 40");
    }

    #[test]
    fn fpga_columns_only_when_present() {
        let m = PpaMetrics { luts: Some(146), ffs: Some(119), dsps: Some(3), brams: Some(1), ..Default::default() };
        let s = CampaignStats::from_summaries(&[summary(1, 2, 1, Some(m))]);
        let t = render_table(&[("k", &s)]);
        assert!(t.contains("LUTs"));
        assert!(t.lines().nth(1).unwrap().contains("| 146 | 146 | 146 | 119 |"));
    }

    #[test]
    fn failing_only_campaign_renders_dashes() {
        let s = CampaignStats::from_summaries(&[summary(1, 12, 0, None)]);
        let row = render_table(&[("k", &s)]).lines().nth(1).unwrap().to_string();
        assert_eq!(row, "k | 0 | 12 | 12 | 12 | 0 | 0 | 0 | - | - | - | - | - | -");
    }

    #[test]
    fn document_round_trip() {
        let attempts = vec![summary(1, 10, 6, Some(PpaMetrics { area_um2: Some(2781.7), ..Default::default() }))];
        let doc = ReportDocument {
            schema_version: SCHEMA_VERSION,
            benchmark: "b".into(),
            objective: Objective::Area,
            backend: "mock".into(),
            provider: None,
            stats: CampaignStats::from_summaries(&attempts),
            attempts,
            config: Config::default(),
        };
        let back = ReportDocument::from_json(&doc.to_json(), "mem").unwrap();
        assert_eq!(back, doc);
        back.check().unwrap();
    }
}
