//! Alignment of simulated outcomes to control totals, and two-way IPF.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result, ValidationReport};
use crate::igm::logit;
use crate::rng::KeyedRng;
use crate::table::Table;

pub const IPF_TOL: f64 = 1e-8;
pub const IPF_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unit {
    pub id: u64,
    pub prob: f64,
    pub weight: f64,
}

/// A unit with a precomputed alignment score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub id: u64,
    pub score: f64,
    pub weight: f64,
}

fn slack(total: f64) -> f64 {
    1e-9 * total.abs().max(1.0)
}

fn check_weights<'a>(weights: impl Iterator<Item = &'a f64>) -> Result<f64> {
    let mut total = 0.0;
    for w in weights {
        if !(w.is_finite() && *w >= 0.0) {
            return Err(Error::invalid(format!("alignment weight {w} must be non-negative")));
        }
        total += w;
    }
    Ok(total)
}

/// Selects units in descending score order (ties by ascending id) until the
/// cumulative weight first reaches `target`.
pub fn align_scored(units: &[Scored], target: f64) -> Result<BTreeSet<u64>> {
    if !(target.is_finite() && target >= 0.0) {
        return Err(Error::Infeasible(format!("alignment target {target} must be a non-negative number")));
    }
    let total = check_weights(units.iter().map(|u| &u.weight))?;
    if target > total + slack(total) {
        return Err(Error::Infeasible(format!(
            "alignment target {target} exceeds the available weight {total} of {} units",
            units.len()
        )));
    }
    let mut order: Vec<&Scored> = units.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    let mut selected = BTreeSet::new();
    let mut cum = 0.0;
    let goal = target - slack(target);
    for u in order {
        if cum >= goal {
            break;
        }
        selected.insert(u.id);
        cum += u.weight;
    }
    Ok(selected)
}

/// `q = logit(p) + logistic noise`, with the noise keyed by `(seed, id, key)`.
pub fn alignment_score(prob: f64, rng: &KeyedRng, id: u64, key: &str) -> f64 {
    let u = rng.uniform(id, key).max(f64::MIN_POSITIVE);
    logit(prob) - logit(u)
}

fn check_prob(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("alignment probability {p} must lie in (0,1)")));
    }
    Ok(())
}

pub fn align_binary(units: &[Unit], target: f64, rng: &KeyedRng, key: &str) -> Result<BTreeSet<u64>> {
    let mut scored = Vec::with_capacity(units.len());
    for u in units {
        check_prob(u.prob)?;
        scored.push(Scored { id: u.id, score: alignment_score(u.prob, rng, u.id, key), weight: u.weight });
    }
    align_scored(&scored, target)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiUnit {
    pub id: u64,
    pub probs: Vec<f64>,
    pub weight: f64,
}

/// Sequential binary alignment, outcomes in descending target order; the
/// last outcome takes every unit still unassigned.
pub fn align_multinomial(
    units: &[MultiUnit],
    targets: &[f64],
    rng: &KeyedRng,
    key: &str,
) -> Result<BTreeMap<u64, usize>> {
    let k = targets.len();
    if k == 0 {
        return Err(Error::invalid("multinomial alignment needs at least one outcome"));
    }
    let total = check_weights(units.iter().map(|u| &u.weight))?;
    let max_w = units.iter().map(|u| u.weight).fold(0.0, f64::max);
    let sum_t: f64 = targets.iter().sum();
    if targets.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Infeasible(format!("multinomial targets {targets:?} must be non-negative")));
    }
    if (sum_t - total).abs() > max_w.max(slack(total)) {
        return Err(Error::Infeasible(format!("multinomial targets sum to {sum_t} but the units weigh {total}")));
    }
    for u in units {
        if u.probs.len() != k {
            return Err(Error::invalid(format!("unit {} has {} probabilities for {k} outcomes", u.id, u.probs.len())));
        }
        if u.probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (u.probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("unit {} probabilities do not form a distribution", u.id)));
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| targets[b].partial_cmp(&targets[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));

    let mut out = BTreeMap::new();
    let mut remaining: Vec<&MultiUnit> = units.iter().collect();
    let mut open: Vec<usize> = order.clone();
    for &outcome in &order[..k - 1] {
        let pool: Vec<Scored> = remaining
            .iter()
            .map(|u| {
                let mass: f64 = open.iter().map(|&j| u.probs[j]).sum();
                let p = if mass > 0.0 { u.probs[outcome] / mass } else { 1.0 / open.len() as f64 };
                let p = p.clamp(1e-12, 1.0 - 1e-12);
                Scored { id: u.id, score: alignment_score(p, rng, u.id, &format!("{key}:{outcome}")), weight: u.weight }
            })
            .collect();
        let chosen = align_scored(&pool, targets[outcome])?;
        for id in &chosen {
            out.insert(*id, outcome);
        }
        remaining.retain(|u| !chosen.contains(&u.id));
        open.retain(|&j| j != outcome);
    }
    let last = order[k - 1];
    for u in remaining {
        out.insert(u.id, last);
    }
    Ok(out)
}

pub fn weighted_mean(values: &[(u64, f64, f64)]) -> Result<f64> {
    let w = check_weights(values.iter().map(|v| &v.2))?;
    if w <= 0.0 {
        return Err(Error::invalid("weighted mean of an empty or zero-weight set"));
    }
    Ok(values.iter().map(|v| v.1 * v.2).sum::<f64>() / w)
}

/// Factor that takes the current weighted mean to `target_mean`.
pub fn continuous_factor(values: &[(u64, f64, f64)], target_mean: f64) -> Result<f64> {
    let current = weighted_mean(values)?;
    if current == target_mean {
        return Ok(1.0);
    }
    if current == 0.0 {
        return Err(Error::Infeasible(format!("cannot scale a zero mean to {target_mean}")));
    }
    Ok(target_mean / current)
}

/// Scales every value by `target_mean / current weighted mean`.
pub fn align_continuous(values: &[(u64, f64, f64)], target_mean: f64) -> Result<Vec<f64>> {
    let f = continuous_factor(values, target_mean)?;
    Ok(values.iter().map(|v| v.1 * f).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub cells: Vec<Vec<f64>>,
}

impl SeedMatrix {
    pub fn new(cells: Vec<Vec<f64>>) -> Self {
        let rows = (0..cells.len()).map(|i| i.to_string()).collect();
        let cols = (0..cells.first().map_or(0, Vec::len)).map(|j| j.to_string()).collect();
        SeedMatrix { rows, cols, cells }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.cells.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols.len()).map(|j| self.cells.iter().map(|r| r[j]).sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpfFit {
    pub matrix: SeedMatrix,
    pub iterations: usize,
    pub deviation: f64,
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn ipf(seed: &SeedMatrix, row_targets: &[f64], col_targets: &[f64], tol: f64, max_iter: usize) -> Result<IpfFit> {
    let (n, m) = (seed.rows.len(), seed.cols.len());
    if seed.cells.len() != n || seed.cells.iter().any(|r| r.len() != m) {
        return Err(Error::invalid("seed matrix shape does not match its labels"));
    }
    if row_targets.len() != n || col_targets.len() != m {
        return Err(Error::invalid(format!(
            "targets have shape {}x{} for a {n}x{m} seed",
            row_targets.len(),
            col_targets.len()
        )));
    }
    if seed.cells.iter().flatten().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::invalid("seed cells must be finite and non-negative"));
    }
    if row_targets.iter().chain(col_targets).any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Infeasible("IPF targets must be non-negative".into()));
    }
    let (rs, cs): (f64, f64) = (row_targets.iter().sum(), col_targets.iter().sum());
    if (rs - cs).abs() > 1e-9 * rs.abs().max(cs.abs()).max(1.0) {
        return Err(Error::Infeasible(format!("row targets sum to {rs} but column targets to {cs}")));
    }
    let (row0, col0) = (seed.row_sums(), seed.col_sums());
    for (i, t) in row_targets.iter().enumerate() {
        if *t > 0.0 && row0[i] == 0.0 {
            return Err(Error::Infeasible(format!(
                "row `{}` has a positive target but no positive seed cell",
                seed.rows[i]
            )));
        }
    }
    for (j, t) in col_targets.iter().enumerate() {
        if *t > 0.0 && col0[j] == 0.0 {
            return Err(Error::Infeasible(format!(
                "column `{}` has a positive target but no positive seed cell",
                seed.cols[j]
            )));
        }
    }
    let mut fit = seed.clone();
    let deviation = |f: &SeedMatrix| max_dev(&f.row_sums(), row_targets).max(max_dev(&f.col_sums(), col_targets));
    let mut dev = deviation(&fit);
    let mut iterations = 0;
    while dev >= tol {
        if iterations == max_iter {
            return Err(Error::NonConvergence { iterations, deviation: dev });
        }
        for (row, t) in fit.cells.iter_mut().zip(row_targets) {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|c| *c *= t / s);
            }
        }
        let sums = fit.col_sums();
        for row in fit.cells.iter_mut() {
            for (j, c) in row.iter_mut().enumerate() {
                if sums[j] > 0.0 {
                    *c *= col_targets[j] / sums[j];
                }
            }
        }
        iterations += 1;
        dev = deviation(&fit);
    }
    Ok(IpfFit { matrix: fit, iterations, deviation: dev })
}

/// Reads `(label, target)` rows.
pub fn parse_targets(file: &str, text: &str) -> Result<Vec<(String, f64)>> {
    let t = Table::parse(file, text)?;
    let mut rep = ValidationReport::default();
    if !t.require_columns(&["label", "target"], &mut rep) {
        return Err(Error::Validation(rep));
    }
    let mut out = Vec::new();
    for row in t.rows() {
        if let Some(v) = row.parse::<f64>("target", &mut rep) {
            if v < 0.0 {
                rep.push(row.violation("target", "target must be non-negative"));
            }
            out.push((row.raw("label").to_string(), v));
        }
    }
    rep.into_result(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn units(probs: &[f64]) -> Vec<Unit> {
        probs.iter().enumerate().map(|(i, p)| Unit { id: i as u64, prob: *p, weight: 1.0 }).collect()
    }

    #[test]
    fn binary_trivial_targets() {
        let rng = KeyedRng::new(3);
        let u = units(&[0.2, 0.5, 0.9]);
        assert!(align_binary(&u, 0.0, &rng, "k").unwrap().is_empty());
        assert_eq!(align_binary(&u, 3.0, &rng, "k").unwrap().len(), 3);
        assert!(matches!(align_binary(&u, 3.5, &rng, "k"), Err(Error::Infeasible(_))));
        assert!(align_binary(&[], 1.0, &rng, "k").is_err());
        assert!(align_binary(&units(&[1.0]), 1.0, &rng, "k").is_err());
    }

    #[test]
    fn binary_order_independent() {
        let rng = KeyedRng::new(8);
        let mut u: Vec<Unit> =
            (0..200).map(|i| Unit { id: i, prob: 0.1 + (i % 7) as f64 / 10.0, weight: 1.0 + (i % 3) as f64 }).collect();
        let a = align_binary(&u, 120.0, &rng, "k").unwrap();
        u.reverse();
        assert_eq!(a, align_binary(&u, 120.0, &rng, "k").unwrap());
    }

    #[test]
    fn ties_break_by_id() {
        let s: Vec<Scored> = (0..5).rev().map(|i| Scored { id: i, score: 1.0, weight: 1.0 }).collect();
        assert_eq!(align_scored(&s, 2.0).unwrap(), [0, 1].into_iter().collect());
    }

    #[test]
    fn binary_rank_respecting() {
        let n = 1000;
        let probs: Vec<f64> = (0..n).map(|i| KeyedRng::new(0).uniform(i, "p").clamp(1e-3, 1.0 - 1e-3)).collect();
        let u = units(&probs);
        let mut freq = vec![0.0; n as usize];
        for seed in 0..100 {
            let sel = align_binary(&u, 300.0, &KeyedRng::new(seed), "k").unwrap();
            assert_eq!(sel.len(), 300);
            for id in sel {
                freq[id as usize] += 1.0;
            }
        }
        let rho = spearman(&probs, &freq);
        assert!(rho > 0.5, "{rho}");
    }

    fn ranks(x: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let mut r = vec![0.0; x.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
                j += 1;
            }
            for k in i..=j {
                r[idx[k]] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    }

    fn spearman(a: &[f64], b: &[f64]) -> f64 {
        let (ra, rb) = (ranks(a), ranks(b));
        let n = a.len() as f64;
        let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
        let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn multinomial_examples() {
        let rng = KeyedRng::new(1);
        let mk = |k: usize| -> Vec<MultiUnit> {
            (0..1000).map(|i| MultiUnit { id: i, probs: vec![1.0 / k as f64; k], weight: 1.0 }).collect()
        };
        let a = align_multinomial(&mk(2), &[1000.0, 0.0], &rng, "m").unwrap();
        assert!(a.values().all(|&o| o == 0));
        let a = align_multinomial(&mk(3), &[500.0, 300.0, 200.0], &rng, "m").unwrap();
        let mut counts = [0; 3];
        for o in a.values() {
            counts[*o] += 1;
        }
        assert_eq!(a.len(), 1000);
        assert!(counts.iter().zip([500, 300, 200]).all(|(c, t)| (*c as i64 - t).abs() <= 1), "{counts:?}");
        assert!(matches!(align_multinomial(&mk(3), &[500.0, 300.0, 100.0], &rng, "m"), Err(Error::Infeasible(_))));
    }

    #[test]
    fn continuous_examples() {
        let v = [(1, 10.0, 1.0), (2, 30.0, 1.0)];
        assert_eq!(align_continuous(&v, 40.0).unwrap(), vec![20.0, 60.0]);
        assert_eq!(align_continuous(&v, 20.0).unwrap(), vec![10.0, 30.0]);
        assert!(align_continuous(&[(1, 0.0, 1.0)], 3.0).is_err());
        assert_eq!(align_continuous(&[(1, 0.0, 1.0)], 0.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn ipf_examples() {
        let fit = ipf(
            &SeedMatrix::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]]),
            &[1.0, 3.0],
            &[2.0, 2.0],
            IPF_TOL,
            IPF_MAX_ITER,
        )
        .unwrap();
        assert_eq!(fit.matrix.cells, vec![vec![0.5, 0.5], vec![1.5, 1.5]]);
        assert_eq!(fit.iterations, 1);

        let fixed = SeedMatrix::new(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let fit = ipf(&fixed, &[3.0, 7.0], &[4.0, 6.0], IPF_TOL, IPF_MAX_ITER).unwrap();
        assert_eq!(fit.iterations, 0);
        assert_eq!(fit.matrix, fixed);

        let z = SeedMatrix::new(vec![vec![0.0, 2.0], vec![3.0, 4.0]]);
        let fit = ipf(&z, &[5.0, 5.0], &[4.0, 6.0], IPF_TOL, IPF_MAX_ITER).unwrap();
        assert_eq!(fit.matrix.cells[0][0], 0.0);
    }

    #[test]
    fn ipf_errors() {
        let s = SeedMatrix::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(matches!(ipf(&s, &[1.0, 3.0], &[2.0, 3.0], IPF_TOL, IPF_MAX_ITER), Err(Error::Infeasible(_))));
        let z = SeedMatrix::new(vec![vec![0.0, 0.0], vec![1.0, 1.0]]);
        assert!(matches!(ipf(&z, &[1.0, 1.0], &[1.0, 1.0], IPF_TOL, IPF_MAX_ITER), Err(Error::Infeasible(_))));
        // structurally impossible: the zero pattern forces row 0 = col 1 mass
        let d = SeedMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 1.0]]);
        match ipf(&d, &[3.0, 1.0], &[1.0, 3.0], IPF_TOL, 50) {
            Err(Error::NonConvergence { iterations, deviation }) => {
                assert_eq!(iterations, 50);
                assert!(deviation > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn target_file() {
        let t = parse_targets("r.csv", "label,target\na,1.5\nb,2\n").unwrap();
        assert_eq!(t, vec![("a".into(), 1.5), ("b".into(), 2.0)]);
        assert!(parse_targets("r.csv", "label,target\na,-1\n").is_err());
    }
}
