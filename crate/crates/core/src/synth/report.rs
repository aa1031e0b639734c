//! Metric extraction from synthesis reports.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{PpaMetrics, SynthError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportDialect {
    Asic,
    Fpga,
    Mock,
    /// Field name to regex with one capture group.
    Custom(BTreeMap<String, String>),
}

const NUM: &str = r"([0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?)";

fn builtin(dialect: &ReportDialect) -> Vec<(&'static str, String)> {
    let p = |field: &'static str, re: &str| (field, re.replace("NUM", NUM));
    match dialect {
        ReportDialect::Asic => vec![
            p("area_um2", r"(?im)^\s*Total\s+Area\s*[:=]\s*NUM"),
            p("cycle_count", r"(?im)^\s*(?:Cycle\s+Count|Latency\s*\(cycles\)|Cycles)\s*[:=]\s*NUM"),
            p("freq_mhz", r"(?im)^\s*(?:Clock\s+)?Freq(?:uency)?\s*[:=]\s*NUM\s*MHz"),
            p("latency_us", r"(?im)^\s*Latency\s*[:=]\s*NUM\s*us"),
        ],
        ReportDialect::Fpga => vec![
            p("luts", r"(?im)^\s*LUTs?\s*[:=]\s*NUM"),
            p("ffs", r"(?im)^\s*(?:FFs?|Flip[- ]?Flops?|Registers)\s*[:=]\s*NUM"),
            p("dsps", r"(?im)^\s*DSPs?\s*[:=]\s*NUM"),
            p("brams", r"(?im)^\s*BRAMs?\s*[:=]\s*NUM"),
            p("freq_mhz", r"(?im)^\s*(?:Clock\s+)?Freq(?:uency)?\s*[:=]\s*NUM\s*MHz"),
            p("latency_us", r"(?im)^\s*Latency\s*[:=]\s*NUM\s*us"),
            p("cycle_count", r"(?im)^\s*(?:Cycle\s+Count|Latency\s*\(cycles\)|Cycles)\s*[:=]\s*NUM"),
        ],
        ReportDialect::Mock => vec![p("area_um2", r"(?m)^AREA:\s*NUM"), p("cycle_count", r"(?m)^CYCLES:\s*NUM")],
        ReportDialect::Custom(_) => Vec::new(),
    }
}

const FIELDS: [&str; 8] = ["area_um2", "cycle_count", "luts", "ffs", "dsps", "brams", "freq_mhz", "latency_us"];

fn patterns(dialect: &ReportDialect) -> Result<Vec<(String, Regex)>, SynthError> {
    let raw: Vec<(String, String)> = match dialect {
        ReportDialect::Custom(m) => m.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        d => builtin(d).into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    };
    raw.into_iter()
        .map(|(field, re)| {
            if !FIELDS.contains(&field.as_str()) {
                return Err(SynthError::BadPattern { field, reason: "unknown metric".to_string() });
            }
            let r = Regex::new(&re).map_err(|e| SynthError::BadPattern { field: field.clone(), reason: e.to_string() })?;
            if r.captures_len() < 2 {
                return Err(SynthError::BadPattern { field, reason: "needs one capture group".to_string() });
            }
            Ok((field, r))
        })
        .collect()
}

/// Check a dialect's patterns up front.
pub fn validate_dialect(dialect: &ReportDialect) -> Result<(), SynthError> {
    patterns(dialect).map(|_| ())
}

/// Extract every metric the dialect recognizes. The last occurrence of a
/// metric wins, so summary sections at the end of a log take precedence.
pub fn parse_report(text: &str, dialect: &ReportDialect) -> Result<PpaMetrics, SynthError> {
    let mut m = PpaMetrics::default();
    for (field, re) in patterns(dialect)? {
        let Some(raw) = re.captures_iter(text).filter_map(|c| c.get(1)).last().map(|g| g.as_str().replace(',', "")) else {
            continue;
        };
        let float = raw.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0);
        let int = float.map(|v| v.round() as u64);
        match field.as_str() {
            "area_um2" => m.area_um2 = float,
            "cycle_count" => m.cycle_count = int,
            "luts" => m.luts = int,
            "ffs" => m.ffs = int,
            "dsps" => m.dsps = int,
            "brams" => m.brams = int,
            "freq_mhz" => m.freq_mhz = float.filter(|v| *v > 0.0),
            "latency_us" => m.latency_us = float,
            _ => {}
        }
    }
    if m.is_empty() {
        return Err(SynthError::NoMetricsFound);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asic_area() {
        let m = parse_report("synthesis done\nTotal Area: 2957.54\nfoo: 3\n", &ReportDialect::Asic).unwrap();
        assert_eq!(m.area_um2, Some(2957.54));
        assert_eq!(m.cycle_count, None);
    }

    #[test]
    fn fpga_resources() {
        let rep = "Utilization\nLUT=146\nFF=119\nDSP=3\nBRAM=1\nFrequency: 250 MHz\n";
        let m = parse_report(rep, &ReportDialect::Fpga).unwrap();
        assert_eq!((m.luts, m.ffs, m.dsps, m.brams), (Some(146), Some(119), Some(3), Some(1)));
        assert_eq!(m.freq_mhz, Some(250.0));
    }

    #[test]
    fn empty_report() {
        assert_eq!(parse_report("", &ReportDialect::Asic), Err(SynthError::NoMetricsFound));
        assert_eq!(parse_report("nothing here", &ReportDialect::Fpga), Err(SynthError::NoMetricsFound));
    }

    #[test]
    fn mock_dialect() {
        let m = parse_report("AREA: 120\nCYCLES: 45\n", &ReportDialect::Mock).unwrap();
        assert_eq!((m.area_um2, m.cycle_count), (Some(120.0), Some(45)));
    }

    #[test]
    fn custom_patterns() {
        let d = ReportDialect::Custom([("area_um2".to_string(), r"cells area (\d+)".to_string())].into_iter().collect());
        assert_eq!(parse_report("cells area 77", &d).unwrap().area_um2, Some(77.0));
        let bad = ReportDialect::Custom([("area_um2".to_string(), "no group".to_string())].into_iter().collect());
        assert!(matches!(parse_report("x", &bad), Err(SynthError::BadPattern { .. })));
    }
}
