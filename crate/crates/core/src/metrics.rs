//! Equivalised incomes, weighted Gini, deciles and the redistribution
//! decomposition, plus the report tables.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Modified OECD scale by default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceScale {
    pub first_adult: f64,
    pub other_adult: f64,
    pub child: f64,
    /// Members at or above this age count as adults.
    pub adult_age: u32,
}

impl Default for EquivalenceScale {
    fn default() -> Self {
        EquivalenceScale { first_adult: 1.0, other_adult: 0.5, child: 0.3, adult_age: 14 }
    }
}

impl EquivalenceScale {
    pub fn factor(&self, ages: &[u32]) -> Result<f64> {
        if ages.is_empty() {
            return Err(Error::invalid("cannot equivalise the income of an empty household"));
        }
        let adults = ages.iter().filter(|a| **a >= self.adult_age).count();
        let children = ages.len() - adults;
        // a household of children only is headed by its first member
        let (first, others) = if adults > 0 { (1, adults - 1) } else { (1, 0) };
        let children = if adults > 0 { children } else { children - 1 };
        Ok(self.first_adult * first as f64 + self.other_adult * others as f64 + self.child * children as f64)
    }

    pub fn equivalize(&self, income: f64, ages: &[u32]) -> Result<f64> {
        Ok(income / self.factor(ages)?)
    }
}

/// Weighted Gini in sorted form:
/// `Σ wᵢxᵢ(2Cᵢ − wᵢ − W) / (W Σ wx)` with `Cᵢ` the cumulative weight.
pub fn weighted_gini(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::invalid("Gini needs one weight per value and at least one value"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("Gini needs finite values and positive weights"));
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let w_total: f64 = weights.iter().sum();
    let wx_total: f64 = values.iter().zip(weights).map(|(x, w)| x * w).sum();
    let dispersed = values.iter().any(|v| *v != values[0]);
    if !dispersed {
        return Ok(0.0);
    }
    if wx_total <= 0.0 {
        return Err(Error::invalid(format!("Gini undefined for non-positive mean {}", wx_total / w_total)));
    }
    let mut cum = 0.0;
    let mut num = 0.0;
    for i in idx {
        let (x, w) = (values[i], weights[i]);
        cum += w;
        num += w * x * (2.0 * cum - w - w_total);
    }
    Ok(num / (w_total * wx_total))
}

/// Deciles 1..=10 in input order. Units are ranked by value (ties by id);
/// a unit straddling a cut point falls in the lower decile.
pub fn assign_deciles(units: &[(u64, f64, f64)]) -> Vec<u8> {
    assign_groups(units, 10)
}

/// Quantile groups (1..=n) of the same construction.
pub fn assign_groups(units: &[(u64, f64, f64)], n: u32) -> Vec<u8> {
    let mut idx: Vec<usize> = (0..units.len()).collect();
    idx.sort_by(|&a, &b| units[a].1.total_cmp(&units[b].1).then(units[a].0.cmp(&units[b].0)));
    let total: f64 = units.iter().map(|u| u.2).sum();
    let mut out = vec![0u8; units.len()];
    let mut cum = 0.0;
    for i in idx {
        let g = (n as f64 * cum / total + 1e-9).floor() as i64 + 1;
        out[i] = g.clamp(1, n as i64) as u8;
        cum += units[i].2;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub benefits: f64,
    pub taxes: f64,
    pub expenses: f64,
}

pub fn redistribution_decomposition(market: f64, gross: f64, disposable: f64, adjusted: f64) -> Decomposition {
    Decomposition { benefits: gross - market, taxes: disposable - gross, expenses: adjusted - disposable }
}

pub const DEFINITIONS: [&str; 4] = ["Market Income", "Gross Income", "Disposable Income", "Disposable Income*"];

/// Equivalised monthly incomes of one person, in `DEFINITIONS` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersonIncomes {
    pub person_id: u64,
    pub weight: f64,
    pub incomes: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSummary {
    pub means: [f64; 4],
    pub gini: [f64; 4],
    /// Per-decile weighted means, deciles 1..=10.
    pub deciles: Vec<[f64; 4]>,
    pub decomposition: Decomposition,
}

/// Summary under a fixed decile assignment (one decile per row).
pub fn summarize(rows: &[PersonIncomes], deciles: &[u8]) -> Result<DistributionSummary> {
    if rows.is_empty() || rows.len() != deciles.len() {
        return Err(Error::invalid("summary needs one decile per person"));
    }
    let weights: Vec<f64> = rows.iter().map(|r| r.weight).collect();
    let w: f64 = weights.iter().sum();
    let mut means = [0.0; 4];
    let mut gini = [0.0; 4];
    for k in 0..4 {
        let v: Vec<f64> = rows.iter().map(|r| r.incomes[k]).collect();
        means[k] = v.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>() / w;
        gini[k] = weighted_gini(&v, &weights)?;
    }
    let mut sums = vec![[0.0; 4]; 10];
    let mut ws = [0.0; 10];
    for (r, d) in rows.iter().zip(deciles) {
        let i = (*d as usize).clamp(1, 10) - 1;
        ws[i] += r.weight;
        for k in 0..4 {
            sums[i][k] += r.weight * r.incomes[k];
        }
    }
    let decile_means = sums
        .iter()
        .zip(ws)
        .map(|(s, w)| if w > 0.0 { [s[0] / w, s[1] / w, s[2] / w, s[3] / w] } else { [0.0; 4] })
        .collect();
    Ok(DistributionSummary {
        means,
        gini,
        deciles: decile_means,
        decomposition: redistribution_decomposition(gini[0], gini[1], gini[2], gini[3]),
    })
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Mean income by definition, one column per wave.
pub fn table8(waves: &[(String, DistributionSummary)]) -> String {
    let mut s = String::from("Income");
    for (label, _) in waves {
        write!(s, ",{}", csv_field(label)).unwrap();
    }
    s.push('\n');
    for k in [0, 2, 3] {
        s.push_str(&csv_field(DEFINITIONS[k]));
        for (_, w) in waves {
            write!(s, ",{:.1}", w.means[k]).unwrap();
        }
        s.push('\n');
    }
    s
}

/// Gini by definition and wave, followed by changes against the first wave.
pub fn table9(waves: &[(String, DistributionSummary)]) -> String {
    let mut s = format!("Block,Wave,{}\n", DEFINITIONS.map(csv_field).join(","));
    for (label, w) in waves {
        writeln!(s, "Gini,{},{}", csv_field(label), w.gini.map(|g| format!("{g:.3}")).join(",")).unwrap();
    }
    if let Some((_, base)) = waves.first() {
        for (label, w) in &waves[1..] {
            let d: Vec<String> = (0..4).map(|k| format!("{:.3}", w.gini[k] - base.gini[k])).collect();
            writeln!(s, "Change,{},{}", csv_field(label), d.join(",")).unwrap();
        }
    }
    s
}

pub fn table10(waves: &[(String, DistributionSummary)]) -> String {
    let mut s = String::from("Redistribution,Benefits,Taxes,Work Expenses and Housing Costs\n");
    for (label, w) in waves {
        let d = w.decomposition;
        writeln!(s, "{},{:.3},{:.3},{:.3}", csv_field(label), d.benefits, d.taxes, d.expenses).unwrap();
    }
    s
}

/// Decile means of every definition, long format, with a Total row per wave.
pub fn table_e1(waves: &[(String, DistributionSummary)]) -> String {
    let mut s = format!("Wave,Decile,{}\n", DEFINITIONS.map(csv_field).join(","));
    for (label, w) in waves {
        for (i, d) in w.deciles.iter().enumerate() {
            writeln!(s, "{},{},{}", csv_field(label), i + 1, d.map(|v| format!("{v:.1}")).join(",")).unwrap();
        }
        writeln!(s, "{},Total,{}", csv_field(label), w.means.map(|v| format!("{v:.1}")).join(",")).unwrap();
    }
    s
}

/// One wave's summary: means, Gini and decile means by definition.
pub fn summary_csv(w: &DistributionSummary) -> String {
    let mut s = format!("Statistic,{}\n", DEFINITIONS.map(csv_field).join(","));
    writeln!(s, "Mean,{}", w.means.map(|v| format!("{v:.6}")).join(",")).unwrap();
    writeln!(s, "Gini,{}", w.gini.map(|v| format!("{v:.6}")).join(",")).unwrap();
    for (i, d) in w.deciles.iter().enumerate() {
        writeln!(s, "Decile {},{}", i + 1, d.map(|v| format!("{v:.6}")).join(",")).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_sum(x: &[f64], w: &[f64]) -> f64 {
        let wt: f64 = w.iter().sum();
        let mu = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wt;
        let mut s = 0.0;
        for i in 0..x.len() {
            for j in 0..x.len() {
                s += w[i] * w[j] * (x[i] - x[j]).abs();
            }
        }
        s / (2.0 * wt * wt * mu)
    }

    #[test]
    fn equivalence_examples() {
        let s = EquivalenceScale::default();
        assert_eq!(s.equivalize(1000.0, &[40]).unwrap(), 1000.0);
        assert!((s.equivalize(2100.0, &[40, 38, 5, 9]).unwrap() - 1000.0).abs() < 1e-9);
        assert!((s.factor(&[40, 15]).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(
            s.equivalize(4200.0, &[40, 38, 5, 9]).unwrap(),
            2.0 * s.equivalize(2100.0, &[40, 38, 5, 9]).unwrap()
        );
        assert!(s.equivalize(1.0, &[]).is_err());
    }

    #[test]
    fn gini_examples() {
        assert_eq!(weighted_gini(&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(weighted_gini(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!((weighted_gini(&[1.0, 3.0], &[1.0, 1.0]).unwrap() - 0.25).abs() < 1e-15);
        assert!(weighted_gini(&[-1.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(weighted_gini(&[], &[]).is_err());
        assert!(weighted_gini(&[1.0], &[0.0]).is_err());
        let x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let w = [1.0, 2.0, 0.5, 1.0, 3.0, 1.0, 1.5, 2.0];
        let g = weighted_gini(&x, &w).unwrap();
        assert!((g - double_sum(&x, &w)).abs() < 1e-12);
        let rep_x: Vec<f64> = x.iter().flat_map(|v| [*v, *v, *v]).collect();
        let rep_w: Vec<f64> = w.iter().flat_map(|v| [*v, *v, *v]).collect();
        assert!((weighted_gini(&rep_x, &rep_w).unwrap() - g).abs() < 1e-12);
        let scaled: Vec<f64> = x.iter().map(|v| v * 7.5).collect();
        assert!((weighted_gini(&scaled, &w).unwrap() - g).abs() < 1e-12);
    }

    #[test]
    fn decile_construction() {
        let units: Vec<(u64, f64, f64)> = (0..1000).map(|i| (i, ((i * 7919) % 1000) as f64, 1.0)).collect();
        let d = assign_deciles(&units);
        let mut counts = [0; 10];
        for x in &d {
            counts[*x as usize - 1] += 1;
        }
        assert_eq!(counts, [100; 10]);
        // straddling unit goes to the lower decile
        let d = assign_deciles(&[(1, 1.0, 0.05), (2, 2.0, 0.1), (3, 3.0, 0.85)]);
        assert_eq!(d, vec![1, 1, 2]);
    }

    #[test]
    fn decomposition_examples() {
        let d = redistribution_decomposition(0.490, 0.363, 0.290, 0.308);
        assert!(
            (d.benefits + 0.127).abs() < 1e-9 && (d.taxes + 0.073).abs() < 1e-9 && (d.expenses - 0.018).abs() < 1e-9
        );
        let d = redistribution_decomposition(0.609, 0.349, 0.276, 0.290);
        assert!(
            (d.benefits + 0.260).abs() < 1e-9 && (d.taxes + 0.073).abs() < 1e-9 && (d.expenses - 0.014).abs() < 1e-9
        );
        assert_eq!(
            redistribution_decomposition(0.3, 0.3, 0.3, 0.3),
            Decomposition { benefits: 0.0, taxes: 0.0, expenses: 0.0 }
        );
    }

    #[test]
    fn uniform_population_deciles() {
        let rows: Vec<PersonIncomes> = (0..50)
            .map(|i| PersonIncomes { person_id: i, weight: 1.0, incomes: [100.0, 200.0, 150.0, 120.0] })
            .collect();
        let d = assign_deciles(&rows.iter().map(|r| (r.person_id, r.incomes[3], r.weight)).collect::<Vec<_>>());
        let s = summarize(&rows, &d).unwrap();
        for dm in &s.deciles {
            assert_eq!(*dm, s.means);
        }
        assert_eq!(s.gini, [0.0; 4]);
        let out = table_e1(&[("Before Crisis".into(), s.clone())]);
        assert!(out.starts_with("Wave,Decile,Market Income,Gross Income,Disposable Income,Disposable Income*\n"));
        assert_eq!(out.lines().count(), 12);
        assert!(table9(&[("Before Crisis".into(), s.clone()), ("May 5th".into(), s)]).contains("Change,May 5th,0.000"));
    }
}
