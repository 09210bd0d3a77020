use super::SurvivalRecord;
use crate::error::{Error, Result};

struct Fenwick(Vec<u64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0; n + 1])
    }

    fn add(&mut self, i: usize) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted positions `< i`.
    fn prefix(&self, i: usize) -> u64 {
        let mut i = i;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Harrell's C. A pair is comparable when the earlier time is an event and
/// the other time is strictly later; higher risk on the earlier event is
/// concordant and tied risks count one half.
pub fn concordance_index(risks: &[f64], records: &[SurvivalRecord]) -> Result<f64> {
    if risks.len() != records.len() {
        return Err(Error::invalid(format!(
            "{} risks for {} records",
            risks.len(),
            records.len()
        )));
    }
    if let Some(r) = risks.iter().find(|r| !r.is_finite()) {
        return Err(Error::invalid(format!("non-finite risk {r}")));
    }
    let mut sorted_risks = risks.to_vec();
    sorted_risks.sort_by(f64::total_cmp);
    sorted_risks.dedup();
    let rank = |r: f64| sorted_risks.partition_point(|&x| x < r);

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[b].time.total_cmp(&records[a].time));

    let mut tree = Fenwick::new(sorted_risks.len());
    let mut inserted = 0u64;
    let (mut concordant, mut ties, mut comparable) = (0u64, 0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let t = records[order[i]].time;
        let mut j = i;
        while j < order.len() && records[order[j]].time == t {
            j += 1;
        }
        for &k in &order[i..j] {
            if records[k].event {
                let r = rank(risks[k]);
                let below = tree.prefix(r);
                let equal = tree.prefix(r + 1) - below;
                concordant += below;
                ties += equal;
                comparable += inserted;
            }
        }
        for &k in &order[i..j] {
            tree.add(rank(risks[k]));
            inserted += 1;
        }
        i = j;
    }
    if comparable == 0 {
        return Err(Error::UndefinedResult(
            "no comparable pairs for the concordance index".into(),
        ));
    }
    Ok((concordant as f64 + 0.5 * ties as f64) / comparable as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_reversed() {
        let recs: Vec<_> = (1..=6)
            .map(|t| SurvivalRecord::new(t as f64, true, vec![]))
            .collect();
        let risks: Vec<f64> = (1..=6).map(|t| -(t as f64)).collect();
        assert_eq!(concordance_index(&risks, &recs).unwrap(), 1.0);
        let rev: Vec<f64> = risks.iter().map(|r| -r).collect();
        assert_eq!(concordance_index(&rev, &recs).unwrap(), 0.0);
        assert_eq!(concordance_index(&[1.0; 6], &recs).unwrap(), 0.5);
    }

    #[test]
    fn undefined_without_pairs() {
        let recs = vec![
            SurvivalRecord::new(1.0, false, vec![]),
            SurvivalRecord::new(2.0, false, vec![]),
        ];
        assert!(matches!(
            concordance_index(&[0.0, 1.0], &recs),
            Err(Error::UndefinedResult(_))
        ));
        assert!(concordance_index(&[0.0], &recs).is_err());
    }
}
