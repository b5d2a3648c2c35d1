use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// One loss stage: efficiency and its absolute error, both as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub label: String,
    pub efficiency: f64,
    pub abs_error: f64,
}

impl BudgetEntry {
    pub fn percent(label: &str, value_pct: f64, error_pct: f64) -> Self {
        Self {
            label: label.to_string(),
            efficiency: value_pct / 100.0,
            abs_error: error_pct / 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetTable {
    pub entries: Vec<BudgetEntry>,
    pub measured_rate_khz: f64,
    pub measured_rate_error_khz: f64,
    pub rep_rate_khz: f64,
    pub rep_rate_error_khz: f64,
}

impl BudgetTable {
    /// Calibrated losses and count rate of the reference set-up.
    pub fn reference() -> Self {
        Self {
            entries: vec![
                BudgetEntry::percent("Objective", 22.87, 0.05),
                BudgetEntry::percent("Fiber coupling", 29.29, 0.14),
                BudgetEntry::percent("Setup transmission", 50.4, 1.9),
                BudgetEntry::percent("APD detection", 64.3, 2.2),
            ],
            measured_rate_khz: 1080.0,
            measured_rate_error_khz: 40.0,
            rep_rate_khz: 76_227.93,
            rep_rate_error_khz: 0.18,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetResult {
    pub total_efficiency: f64,
    pub total_error: f64,
    /// Detected photons per laser pulse.
    pub corrected_rate_per_pulse: f64,
    /// Photons per pulse at the first lens.
    pub brightness: f64,
    pub brightness_error: f64,
}

/// Product of the stage efficiencies, with relative errors in quadrature,
/// and the first-lens brightness `rate / (rep_rate · total)`.
pub fn brightness_budget(budget: &BudgetTable) -> Result<BudgetResult, AnalysisError> {
    if budget.entries.is_empty() {
        return Err(AnalysisError::Input("budget has no entries".into()));
    }
    for e in &budget.entries {
        if e.efficiency == 0.0 {
            return Err(AnalysisError::Domain(format!(
                "entry '{}' has zero efficiency",
                e.label
            )));
        }
        if !(e.efficiency > 0.0 && e.efficiency <= 1.0) {
            return Err(AnalysisError::Input(format!(
                "entry '{}': efficiency {} is not in (0, 1]",
                e.label, e.efficiency
            )));
        }
        if !(e.abs_error >= 0.0) {
            return Err(AnalysisError::Input(format!(
                "entry '{}': negative error",
                e.label
            )));
        }
    }
    if !(budget.measured_rate_khz > 0.0 && budget.rep_rate_khz > 0.0) {
        return Err(AnalysisError::Input("count rate and repetition rate must be positive".into()));
    }
    if !(budget.measured_rate_error_khz >= 0.0 && budget.rep_rate_error_khz >= 0.0) {
        return Err(AnalysisError::Input("rate errors must be non-negative".into()));
    }
    let total: f64 = budget.entries.iter().map(|e| e.efficiency).product();
    let rel2: f64 = budget
        .entries
        .iter()
        .map(|e| (e.abs_error / e.efficiency).powi(2))
        .sum();
    let per_pulse = budget.measured_rate_khz / budget.rep_rate_khz;
    let brightness = per_pulse / total;
    let b_rel2 = rel2
        + (budget.measured_rate_error_khz / budget.measured_rate_khz).powi(2)
        + (budget.rep_rate_error_khz / budget.rep_rate_khz).powi(2);
    Ok(BudgetResult {
        total_efficiency: total,
        total_error: total * rel2.sqrt(),
        corrected_rate_per_pulse: per_pulse,
        brightness,
        brightness_error: brightness * b_rel2.sqrt(),
    })
}

/// Non-paralyzable dead-time correction `R / (1 − R·t_d)`.
pub fn deadtime_correct(measured_rate_khz: f64, dead_time_ns: f64) -> Result<f64, AnalysisError> {
    if !(measured_rate_khz >= 0.0) || !(dead_time_ns >= 0.0) {
        return Err(AnalysisError::Input("rate and dead time must be non-negative".into()));
    }
    let occupancy = measured_rate_khz * 1e3 * dead_time_ns * 1e-9;
    if occupancy >= 1.0 {
        return Err(AnalysisError::Domain(format!(
            "detector saturated: rate × dead time = {occupancy:.3} ≥ 1"
        )));
    }
    Ok(measured_rate_khz / (1.0 - occupancy))
}
