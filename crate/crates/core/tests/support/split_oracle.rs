//! Exact-arithmetic reference for the best Gini split.

#![allow(dead_code)]

use num_rational::Ratio;

pub type Q = Ratio<i128>;

pub fn gini_exact(neg: i128, pos: i128) -> Q {
    let n = neg + pos;
    Q::from_integer(1) - Q::new(neg * neg + pos * pos, n * n)
}

/// Exhaustive search over every feature and every midpoint threshold.
pub fn brute_force_split(rows: &[Vec<f64>], y: &[bool]) -> Option<(usize, f64, Q)> {
    let n = rows.len() as i128;
    let pos = y.iter().filter(|&&l| l).count() as i128;
    let parent = gini_exact(n - pos, pos);
    let mut best: Option<(usize, f64, Q)> = None;
    for f in 0..rows[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (mut ln, mut lp, mut rn, mut rp) = (0, 0, 0, 0);
            for (r, &l) in rows.iter().zip(y) {
                match (r[f] <= t, l) {
                    (true, true) => lp += 1,
                    (true, false) => ln += 1,
                    (false, true) => rp += 1,
                    (false, false) => rn += 1,
                }
            }
            let gain = parent - Q::new(ln + lp, n) * gini_exact(ln, lp) - Q::new(rn + rp, n) * gini_exact(rn, rp);
            if best.as_ref().is_none_or(|b| gain > b.2) {
                best = Some((f, t, gain));
            }
        }
    }
    best.filter(|b| b.2 > Q::from_integer(0))
}

pub fn ratio_to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}
