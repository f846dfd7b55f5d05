//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use canopy::sampling::SampleRow;

pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
const K0: f64 = 0.9996;

/// Transverse Mercator forward through the sixth-order Krüger series in
/// the conformal-latitude (tau prime) form. Returns (easting, northing)
/// with the UTM false origin applied.
pub fn utm_forward_6th(lon: f64, lat: f64, zone: u8) -> (f64, f64) {
    let f = WGS84_F;
    let n = f / (2.0 - f);
    let e = (f * (2.0 - f)).sqrt();
    let (n2, n3) = (n * n, n * n * n);
    let (n4, n5, n6) = (n2 * n2, n2 * n3, n3 * n3);
    let big_a = WGS84_A / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
    let alpha = [
        n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0 + 7891.0 * n6 / 37800.0,
        13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0 - 1983433.0 * n6 / 1935360.0,
        61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0 + 167603.0 * n6 / 181440.0,
        49561.0 * n4 / 161280.0 - 179.0 * n5 / 168.0 + 6601661.0 * n6 / 7257600.0,
        34729.0 * n5 / 80640.0 - 3418889.0 * n6 / 1995840.0,
        212378941.0 * n6 / 319334400.0,
    ];
    let cm = -183.0 + 6.0 * zone as f64;
    let lam = (lon - cm).to_radians();
    let phi = lat.to_radians();
    let tau = phi.tan();
    let sigma = (e * (e * tau / (1.0 + tau * tau).sqrt()).atanh()).sinh();
    let tau_p = tau * (1.0 + sigma * sigma).sqrt() - sigma * (1.0 + tau * tau).sqrt();
    let xi_p = tau_p.atan2(lam.cos());
    let eta_p = (lam.sin() / (tau_p * tau_p + lam.cos().powi(2)).sqrt()).asinh();
    let mut xi = xi_p;
    let mut eta = eta_p;
    for (j, a) in alpha.iter().enumerate() {
        let k = 2.0 * (j + 1) as f64;
        xi += a * (k * xi_p).sin() * (k * eta_p).cosh();
        eta += a * (k * xi_p).cos() * (k * eta_p).sinh();
    }
    let easting = 500_000.0 + K0 * big_a * eta;
    let northing = K0 * big_a * xi + if lat < 0.0 { 10_000_000.0 } else { 0.0 };
    (easting, northing)
}

/// Brute-force CART split: every band in ascending order, every distinct
/// value as the left-inclusive cut, children recounted from scratch.
/// Returns `(band, lo, hi, weighted gini)` where the cut lies in `[lo, hi)`.
pub fn brute_force_split(rows: &[SampleRow], bands: &[usize]) -> Option<(usize, f64, f64, f64)> {
    let labels: Vec<u8> = {
        let mut l: Vec<u8> = rows.iter().map(|r| r.label).collect();
        l.sort_unstable();
        l.dedup();
        l
    };
    let tally = |sel: &dyn Fn(&SampleRow) -> bool| -> Vec<u128> {
        labels.iter().map(|&c| rows.iter().filter(|r| r.label == c && sel(r)).count() as u128).collect()
    };
    // score = sum(l^2)/nl + sum(r^2)/nr, larger is better; kept as a fraction
    let score = |l: &[u128], r: &[u128]| -> (u128, u128) {
        let nl: u128 = l.iter().sum();
        let nr: u128 = r.iter().sum();
        let sl: u128 = l.iter().map(|v| v * v).sum();
        let sr: u128 = r.iter().map(|v| v * v).sum();
        (sl * nr + sr * nl, nl * nr)
    };
    let parent = tally(&|_| true);
    let n: u128 = parent.iter().sum();
    let parent_score = (parent.iter().map(|v| v * v).sum::<u128>(), n);
    let mut bands = bands.to_vec();
    bands.sort_unstable();
    bands.dedup();
    let mut best: Option<((u128, u128), usize, f64, f64)> = None;
    for &b in &bands {
        let mut values: Vec<f64> = rows.iter().map(|r| r.features[b]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let l = tally(&|r| r.features[b] <= lo);
            let r = tally(&|r| r.features[b] > lo);
            let s = score(&l, &r);
            let better = match &best {
                None => true,
                Some((bs, ..)) => s.0 * bs.1 > bs.0 * s.1,
            };
            if better {
                best = Some((s, b, lo, hi));
            }
        }
    }
    let (s, b, lo, hi) = best?;
    if s.0 * parent_score.1 <= parent_score.0 * s.1 {
        return None;
    }
    Some((b, lo, hi, 1.0 - (s.0 as f64 / s.1 as f64) / n as f64))
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    (-gamma * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp()
}

/// Soft-margin SVM dual solved by projected gradient ascent onto
/// `{0 <= a <= c, sum(a*y) = 0}` (projection by bisection on the
/// multiplier of the equality constraint). Returns `(alphas, bias)`.
pub fn svm_dual_oracle(x: &[Vec<f64>], y: &[f64], gamma: f64, c: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = x.len();
    let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * rbf(gamma, &x[i], &x[j])).collect()).collect();
    let project = |v: &[f64]| -> Vec<f64> {
        let apply = |nu: f64| -> (Vec<f64>, f64) {
            let a: Vec<f64> = v.iter().zip(y).map(|(vi, yi)| (vi - nu * yi).clamp(0.0, c)).collect();
            let s = a.iter().zip(y).map(|(ai, yi)| ai * yi).sum();
            (a, s)
        };
        let (mut lo, mut hi) = (-1e6, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            // sum(a*y) decreases in nu
            if apply(mid).1 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        apply(0.5 * (lo + hi)).0
    };
    let step = 1.0 / n as f64;
    let mut a = vec![0.0; n];
    for _ in 0..iters {
        let grad: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| q[i][j] * a[j]).sum::<f64>()).collect();
        let v: Vec<f64> = a.iter().zip(&grad).map(|(ai, g)| ai + step * g).collect();
        a = project(&v);
    }
    let f_no_bias = |i: usize| (0..n).map(|j| a[j] * y[j] * rbf(gamma, &x[j], &x[i])).sum::<f64>();
    let eps = 1e-6 * c;
    let free: Vec<f64> = (0..n).filter(|&i| a[i] > eps && a[i] < c - eps).map(|i| y[i] - f_no_bias(i)).collect();
    let bias = if free.is_empty() {
        // Midpoint of the feasible bias interval.
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let g = y[i] - f_no_bias(i);
            let at_lower = a[i] <= eps;
            if (y[i] > 0.0) == at_lower {
                lo = lo.max(g);
            } else {
                hi = hi.min(g);
            }
        }
        0.5 * (lo + hi)
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };
    (a, bias)
}

pub fn decision(x: &[Vec<f64>], y: &[f64], alphas: &[f64], bias: f64, gamma: f64, at: &[f64]) -> f64 {
    x.iter().zip(y).zip(alphas).map(|((xi, yi), ai)| ai * yi * rbf(gamma, xi, at)).sum::<f64>() + bias
}

/// Transitive closure by repeated relaxation over the full edge list.
pub fn reachable(edges: &[(String, String)], start: &str) -> std::collections::BTreeSet<String> {
    let mut set = std::collections::BTreeSet::from([start.to_string()]);
    loop {
        let before = set.len();
        for (a, b) in edges {
            if set.contains(a) {
                set.insert(b.clone());
            }
        }
        if set.len() == before {
            return set;
        }
    }
}
