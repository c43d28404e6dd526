//! Summaries of nurse/expert Likert ratings of generated reports.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::stats::{mann_whitney_u, shapiro_wilk, ShapiroWilk};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikertDataset {
    pub model_id: String,
    pub dimension: String,
    /// Integers 1-10.
    pub scores: Vec<u8>,
}

impl LikertDataset {
    pub fn validate(&self) -> Result<()> {
        if self.scores.is_empty() {
            return Err(Error::validation(format!("no scores for {} / {}", self.model_id, self.dimension)));
        }
        if let Some(bad) = self.scores.iter().find(|s| !(1..=10).contains(*s)) {
            return Err(Error::validation(format!("score {bad} for {} / {} is outside 1-10", self.model_id, self.dimension)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikertCell {
    pub model_id: String,
    pub dimension: String,
    pub n: usize,
    pub mean: f64,
    /// Population variance (divides by n).
    pub variance: f64,
    /// Absent below three scores.
    pub normality: Option<ShapiroWilk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub enhanced: String,
    pub plain: String,
    pub dimension: String,
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
    /// p < alpha.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikertSummary {
    pub alpha: f64,
    pub models: Vec<String>,
    pub dimensions: Vec<String>,
    pub cells: Vec<LikertCell>,
    pub comparisons: Vec<PairComparison>,
}

/// Mean/variance per (model, dimension) and a two-sided Mann-Whitney test per
/// dimension for each `(enhanced, plain)` model pair.
pub fn likert_summary(datasets: &[LikertDataset], pairs: &[(String, String)], alpha: f64) -> Result<LikertSummary> {
    let mut by_key: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for d in datasets {
        d.validate()?;
        by_key
            .entry((d.model_id.as_str(), d.dimension.as_str()))
            .or_default()
            .extend(d.scores.iter().map(|&s| s as f64));
    }
    let mut models: Vec<String> = Vec::new();
    for d in datasets {
        if !models.contains(&d.model_id) {
            models.push(d.model_id.clone());
        }
    }
    let mut dimensions: Vec<String> = Vec::new();
    for d in datasets {
        if !dimensions.contains(&d.dimension) {
            dimensions.push(d.dimension.clone());
        }
    }
    let dims_of = |m: &str| by_key.keys().filter(|(mm, _)| *mm == m).map(|(_, d)| *d).collect::<BTreeSet<_>>();

    let mut cells = Vec::new();
    for m in &models {
        for d in &dimensions {
            let Some(xs) = by_key.get(&(m.as_str(), d.as_str())) else { continue };
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let variance = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let normality = if xs.len() >= 3 { Some(shapiro_wilk(xs)?) } else { None };
            cells.push(LikertCell { model_id: m.clone(), dimension: d.clone(), n: xs.len(), mean, variance, normality });
        }
    }

    let mut comparisons = Vec::new();
    for (enhanced, plain) in pairs {
        let (de, dp) = (dims_of(enhanced), dims_of(plain));
        if de.is_empty() || dp.is_empty() {
            return Err(Error::validation(format!("pair {enhanced} / {plain} names a model without scores")));
        }
        if de != dp {
            return Err(Error::validation(format!("{enhanced} and {plain} were rated on different dimensions")));
        }
        for d in dimensions.iter().filter(|d| de.contains(d.as_str())) {
            let mw = mann_whitney_u(&by_key[&(enhanced.as_str(), d.as_str())], &by_key[&(plain.as_str(), d.as_str())], true)?;
            comparisons.push(PairComparison {
                enhanced: enhanced.clone(),
                plain: plain.clone(),
                dimension: d.clone(),
                u: mw.u,
                p_value: mw.p_value,
                exact: mw.exact,
                significant: mw.p_value < alpha,
            });
        }
    }
    Ok(LikertSummary { alpha, models, dimensions, cells, comparisons })
}

impl LikertSummary {
    pub fn cell(&self, model: &str, dimension: &str) -> Option<&LikertCell> {
        self.cells.iter().find(|c| c.model_id == model && c.dimension == dimension)
    }

    /// Plot-ready rows: `model,dimension,n,mean,variance,shapiro_w,shapiro_p`.
    pub fn cells_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "dimension", "n", "mean", "variance", "shapiro_w", "shapiro_p"]).map_err(csv_err)?;
        for c in &self.cells {
            let (sw, sp) = c.normality.as_ref().map_or((String::new(), String::new()), |s| (format!("{:.6}", s.w), format!("{:.6}", s.p_value)));
            w.write_record([
                c.model_id.clone(),
                c.dimension.clone(),
                c.n.to_string(),
                format!("{:.6}", c.mean),
                format!("{:.6}", c.variance),
                sw,
                sp,
            ])
            .map_err(csv_err)?;
        }
        finish(w)
    }

    /// `enhanced,plain,dimension,u,p_value,significant`.
    pub fn comparisons_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["enhanced", "plain", "dimension", "u", "p_value", "significant"]).map_err(csv_err)?;
        for c in &self.comparisons {
            w.write_record([
                c.enhanced.clone(),
                c.plain.clone(),
                c.dimension.clone(),
                format!("{}", c.u),
                format!("{:.6}", c.p_value),
                c.significant.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(w)
    }

    /// Models x dimensions table of "mean (variance)", bold (`**`) marking the
    /// enhanced side of a significant comparison.
    pub fn table(&self) -> String {
        let mut out = format!("| model | {} |\n|---|{}\n", self.dimensions.join(" | "), "---|".repeat(self.dimensions.len()));
        for m in &self.models {
            let row: Vec<String> = self
                .dimensions
                .iter()
                .map(|d| match self.cell(m, d) {
                    Some(c) => {
                        let s = format!("{:.2} ({:.2})", c.mean, c.variance);
                        let bold = self.comparisons.iter().any(|p| p.significant && &p.enhanced == m && &p.dimension == d);
                        if bold { format!("**{s}**") } else { s }
                    }
                    None => "-".into(),
                })
                .collect();
            out.push_str(&format!("| {m} | {} |\n", row.join(" | ")));
        }
        out
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::validation(format!("csv: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::validation(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(m: &str, d: &str, s: &[u8]) -> LikertDataset {
        LikertDataset { model_id: m.into(), dimension: d.into(), scores: s.to_vec() }
    }

    #[test]
    fn single_score_has_zero_variance() {
        let s = likert_summary(&[ds("a", "accuracy", &[7])], &[], 0.05).unwrap();
        let c = s.cell("a", "accuracy").unwrap();
        assert_eq!((c.mean, c.variance, c.normality.is_none()), (7.0, 0.0, true));
    }

    #[test]
    fn out_of_range_and_mismatched_dimensions() {
        assert!(likert_summary(&[ds("a", "x", &[11])], &[], 0.05).is_err());
        assert!(likert_summary(&[ds("a", "x", &[])], &[], 0.05).is_err());
        let data = [ds("a", "x", &[5]), ds("b", "y", &[5])];
        assert!(likert_summary(&data, &[("a".into(), "b".into())], 0.05).is_err());
    }

    #[test]
    fn csv_has_a_row_per_cell() {
        let s = likert_summary(&[ds("a", "x", &[7, 8, 9]), ds("b", "x", &[1, 2])], &[], 0.05).unwrap();
        let csv = s.cells_csv().unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("a,x,3,8.000000,0.666667,"));
    }
}
