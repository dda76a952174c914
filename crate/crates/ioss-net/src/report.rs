//! Machine-readable run report and its derived markdown rendering.
//! The JSON document is the single source of truth; markdown is always
//! rendered from it. No timestamps anywhere — identical runs must
//! produce byte-identical files.

use crate::config::MValue;
use crate::error::{Error, Result};
use crate::smallgain::Verdict;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub version: String,
    pub config_hash: String,
}

/// Per-class LMI verification outcome, per small-gain target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_name: String,
    pub target: String,
    pub certified: bool,
    pub eta_tilde: Option<f64>,
    pub margin: f64,
    pub lambda_min_p: Option<f64>,
    pub lambda_max_g: Option<f64>,
    pub achieved_lambda_max: f64,
    pub solver_iterations: usize,
}

/// Gains of one node toward one neighbor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub node: usize,
    pub neighbor: usize,
    pub gamma: f64,
    pub g_tilde: f64,
    pub g: f64,
    pub decoupled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajConstants {
    pub n_window: usize,
    pub rho_s: f64,
    pub b: f64,
    pub sigma0: f64,
    pub sigma: f64,
    pub g_bar: f64,
    pub b_bar: f64,
    pub h: f64,
    pub disturbance_gain: f64,
    pub output_gain: f64,
}

/// One row of the per-network-size verdict table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MRow {
    pub m: MValue,
    pub rho_g: Option<f64>,
    pub rho_lg: Option<f64>,
    pub verdict_traj: Verdict,
    pub verdict_lyap: Verdict,
    pub mu: Option<Vec<f64>>,
    pub lambda_sigma: Option<f64>,
    pub traj_constants: Option<TrajConstants>,
    pub gains: Vec<GainRow>,
    /// reason a cell is NotRun, keyed by condition name
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsifySummary {
    pub m: usize,
    pub check: String,
    pub checks_run: usize,
    pub violations: usize,
    pub worst_slack: f64,
    pub discarded_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Report {
    pub provenance: Option<Provenance>,
    #[serde(default)]
    pub classes: Vec<ClassReport>,
    #[serde(default)]
    pub m_rows: Vec<MRow>,
    #[serde(default)]
    pub falsification: Vec<FalsifySummary>,
    /// overall disturbance coefficient without the sqrt(M) factor, the
    /// tighter M-independent variant; diagnostic only, not certified
    pub tighter_bound_diagnostic: Option<f64>,
}

/// Six significant digits, stable across platforms.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let formatted = format!("{v:.5e}");
    // keep plain decimal notation for moderate magnitudes
    let abs = v.abs();
    if (1e-4..1e6).contains(&abs) {
        let digits = 5 - abs.log10().floor() as i32;
        return format!("{v:.*}", digits.max(0) as usize);
    }
    formatted
}

fn verdict_cell(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "✓",
        Verdict::Fail => "✗",
        Verdict::Marginal => "~",
        Verdict::NotRun => "–",
    }
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut sorted = self.clone();
        sorted.normalize();
        serde_json::to_string_pretty(&sorted).map_err(Error::from)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut report: Report = serde_json::from_str(text)?;
        report.normalize();
        Ok(report)
    }

    /// Stable ordering regardless of assembly order.
    pub fn normalize(&mut self) {
        self.m_rows.sort_by_key(|r| r.m);
        self.classes
            .sort_by(|a, b| (&a.class_name, &a.target).cmp(&(&b.class_name, &b.target)));
        self.falsification
            .sort_by(|a, b| (a.m, &a.check).cmp(&(b.m, &b.check)));
        for row in &mut self.m_rows {
            row.gains.sort_by_key(|g| (g.node, g.neighbor));
        }
    }

    /// Merge rows of another run (e.g. additional M values); rows for
    /// the same M are replaced by the newer run.
    pub fn merge(&mut self, other: Report) {
        for row in other.m_rows {
            self.m_rows.retain(|r| r.m != row.m);
            self.m_rows.push(row);
        }
        for class in other.classes {
            self.classes
                .retain(|c| (&c.class_name, &c.target) != (&class.class_name, &class.target));
            self.classes.push(class);
        }
        self.falsification.extend(other.falsification);
        if other.provenance.is_some() {
            self.provenance = other.provenance;
        }
        if other.tighter_bound_diagnostic.is_some() {
            self.tighter_bound_diagnostic = other.tighter_bound_diagnostic;
        }
        self.normalize();
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("# Network i-IOSS certification report\n\n");
        if let Some(p) = &self.provenance {
            out.push_str(&format!(
                "seed {} · version {} · config {}\n\n",
                p.seed,
                p.version,
                &p.config_hash[..12.min(p.config_hash.len())]
            ));
        }

        if !self.classes.is_empty() {
            out.push_str("## Per-class LMI verification\n\n");
            out.push_str("| class | target | certified | η̃ | λmin(P̃) | λmax(G̃) | achieved λmax |\n");
            out.push_str("|---|---|---|---|---|---|---|\n");
            for c in &self.classes {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {} | {} |\n",
                    c.class_name,
                    c.target,
                    if c.certified { "yes" } else { "no" },
                    c.eta_tilde.map_or("–".into(), sig6),
                    c.lambda_min_p.map_or("–".into(), sig6),
                    c.lambda_max_g.map_or("–".into(), sig6),
                    sig6(c.achieved_lambda_max),
                ));
            }
            out.push('\n');
        }

        if !self.m_rows.is_empty() {
            out.push_str("## Small-gain conditions\n\n");
            out.push_str("| M | ρ(G) | trajectory | ρ(Λ⁻¹Γ) | Lyapunov |\n");
            out.push_str("|---|---|---|---|---|\n");
            for row in &self.m_rows {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} |\n",
                    row.m,
                    row.rho_g.map_or("–".into(), sig6),
                    verdict_cell(row.verdict_traj),
                    row.rho_lg.map_or("–".into(), sig6),
                    verdict_cell(row.verdict_lyap),
                ));
            }
            out.push('\n');
            for row in &self.m_rows {
                if let Some(ls) = row.lambda_sigma {
                    out.push_str(&format!("- M={}: λ_Σ = {}", row.m, sig6(ls)));
                    if let Some(mu) = &row.mu {
                        let mu_text: Vec<String> = mu.iter().map(|&v| sig6(v)).collect();
                        out.push_str(&format!(", μ = ({})", mu_text.join(", ")));
                    }
                    out.push('\n');
                }
                if let Some(tc) = &row.traj_constants {
                    out.push_str(&format!(
                        "- M={}: N = {}, σ = {}, h = {}, disturbance gain {}, output gain {}\n",
                        row.m,
                        tc.n_window,
                        sig6(tc.sigma),
                        sig6(tc.h),
                        sig6(tc.disturbance_gain),
                        sig6(tc.output_gain),
                    ));
                }
                for (condition, reason) in &row.notes {
                    out.push_str(&format!("- M={}: {} not run: {}\n", row.m, condition, reason));
                }
            }
            out.push('\n');
        }

        if !self.falsification.is_empty() {
            out.push_str("## Falsification\n\n");
            out.push_str("| M | check | checks | violations | worst slack | discarded |\n");
            out.push_str("|---|---|---|---|---|---|\n");
            for f in &self.falsification {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {} |\n",
                    f.m,
                    f.check,
                    f.checks_run,
                    f.violations,
                    sig6(f.worst_slack),
                    f.discarded_pairs,
                ));
            }
            out.push('\n');
        }

        if let Some(d) = self.tighter_bound_diagnostic {
            out.push_str(&format!(
                "M-independent disturbance coefficient (diagnostic, uncertified): {}\n",
                sig6(d)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests;
