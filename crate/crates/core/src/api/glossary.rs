use serde::{Deserialize, Serialize};

use crate::dsp::EpochMetrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricInfo {
    pub name: String,
    pub unit: String,
    pub description: String,
}

// (name, unit, description); every entry of EpochMetrics::NAMES appears once.
const ENTRIES: &[(&str, &str, &str)] = &[
    ("relaxation", "score 0-100", "Relative alpha power, scaled by the calibration profile."),
    ("engagement", "score 0-100", "Engagement index beta / (alpha + theta), scaled."),
    ("meditation", "score 0-100", "Alpha plus theta share against a resting baseline; 0 until a baseline is calibrated."),
    ("hr", "bpm", "Heart rate from PPG peaks over a rolling window; 0 without PPG."),
    ("drowsiness", "score 0-100", "(delta + theta) / (alpha + beta), scaled."),
    ("mood", "score 0-100", "Valence proxy mixing frontal alpha asymmetry and engagement."),
    ("snr", "dB", "Power inside the analysis band against power outside it."),
    ("stillness", "score 0-100", "Absence of movement; needs a motion sensor, else 0."),
    ("cognitive_load", "score 0-100", "Frontal theta over posterior alpha; needs 8 or more EXG channels, else 0."),
    ("stress", "score 0-100", "Beta / theta, scaled."),
    ("tar", "ratio", "Theta / alpha band power."),
    ("bar", "ratio", "Beta / alpha band power."),
    ("dtr", "ratio", "Delta / theta band power."),
    ("tbr", "ratio", "Theta / beta band power."),
    ("sef95", "Hz", "Spectral edge: frequency below which 95% of power lies."),
    ("faa", "log ratio", "Frontal alpha asymmetry, ln(right alpha) - ln(left alpha)."),
    ("rmsd", "ms", "RMSSD heart-rate variability from successive inter-beat intervals."),
    ("pse", "0-1", "Normalised Shannon entropy of the power spectrum."),
    ("rel_alpha", "fraction", "Alpha (8-13 Hz) share of total band power."),
    ("rel_beta", "fraction", "Beta (13-30 Hz) share of total band power."),
    ("rel_theta", "fraction", "Theta (4-8 Hz) share of total band power."),
    ("rel_delta", "fraction", "Delta (1-4 Hz) share of total band power."),
    ("rel_gamma", "fraction", "Gamma (30-45 Hz) share of total band power."),
    ("abs_delta", "uV^2", "Absolute delta band power."),
    ("abs_theta", "uV^2", "Absolute theta band power."),
    ("abs_alpha", "uV^2", "Absolute alpha band power."),
    ("abs_beta", "uV^2", "Absolute beta band power."),
    ("abs_gamma", "uV^2", "Absolute gamma band power."),
];

/// Metric glossary in canonical metric order.
pub fn metric_glossary() -> Vec<MetricInfo> {
    EpochMetrics::<f64>::NAMES
        .iter()
        .map(|n| {
            let (_, unit, description) =
                ENTRIES.iter().find(|e| e.0 == *n).copied().unwrap_or((n, "", "No description."));
            MetricInfo { name: n.to_string(), unit: unit.into(), description: description.into() }
        })
        .collect()
}

/// The glossary as a markdown table.
pub fn metrics_markdown() -> String {
    let mut out = String::from("# Metrics\n\nEvery epoch carries the metrics below. A metric whose inputs are missing is exactly 0.\n\n| metric | unit | meaning |\n|---|---|---|\n");
    for m in metric_glossary() {
        out.push_str(&format!("| {} | {} | {} |\n", m.name, m.unit, m.description));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_metric_is_described() {
        let g = metric_glossary();
        assert_eq!(g.len(), EpochMetrics::<f64>::NAMES.len());
        assert!(g.iter().all(|m| m.description != "No description."));
        assert_eq!(ENTRIES.len(), g.len());
    }
}
